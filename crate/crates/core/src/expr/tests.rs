use super::*;
use proptest::prelude::*;
use rand::prelude::*;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

fn grad(text: &str, dim: usize, x: &[f64], t: f64) -> EvalGrad {
    parse(text, dim).unwrap().eval_with_gradient(x, t).unwrap()
}

#[test]
fn polynomial_arithmetic() {
    let ast = parse("x1^2 - 3*x2", 2).unwrap();
    assert_eq!(ast.eval(&[2.0, 1.0], 0.0).unwrap(), 1.0);
}

#[test]
fn time_variable() {
    let ast = parse("sin(t)", 1).unwrap();
    assert_eq!(ast.eval(&[0.7], 0.0).unwrap(), 0.0);
    assert!((ast.eval(&[0.7], std::f64::consts::FRAC_PI_2).unwrap() - 1.0).abs() < 1e-15);
}

#[test]
fn out_of_range_variable() {
    match parse("x3", 2) {
        Err(ParseError::DimensionExceeded { index: 3, dimension: 2, .. }) => {}
        other => panic!("expected DimensionExceeded(3), got {other:?}"),
    }
    assert!(matches!(
        parse("x0", 2),
        Err(ParseError::DimensionExceeded { index: 0, .. })
    ));
}

#[test]
fn unknown_symbols() {
    assert!(matches!(
        parse("y + 1", 1),
        Err(ParseError::UnknownSymbol { ref name, .. }) if name == "y"
    ));
    assert!(matches!(
        parse("foo(x1)", 1),
        Err(ParseError::UnknownSymbol { ref name, .. }) if name == "foo"
    ));
}

#[test]
fn syntax_error_reports_byte_offset() {
    match parse("x1 + + x2", 2) {
        Err(ParseError::Syntax { position, .. }) => assert_eq!(position, 5),
        other => panic!("expected syntax error, got {other:?}"),
    }
    assert!(matches!(parse("", 1), Err(ParseError::Syntax { position: 0, .. })));
    assert!(matches!(parse("(x1", 1), Err(ParseError::Syntax { .. })));
    assert!(matches!(parse("x1 x2", 2), Err(ParseError::Syntax { .. })));
}

#[test]
fn gradient_vertex_of_parabola() {
    let g = grad("x1*(1-x1)", 1, &[0.5], 0.0);
    assert_eq!(g.value, 0.25);
    assert_eq!(g.d_dx, vec![0.0]);
    assert_eq!(g.d_dt, 0.0);
}

#[test]
fn gradient_exp_at_zero() {
    let g = grad("exp(x1)", 1, &[0.0], 0.0);
    assert_eq!(g.value, 1.0);
    assert_eq!(g.d_dx, vec![1.0]);
    assert_eq!(g.d_dt, 0.0);
}

#[test]
fn gradient_of_degenerate_level_set() {
    // Hand differentiation: d/dx1 = -2x1 + 3x1^2 = 1 at x1=1; d/dx2 = -2x2 = 0.
    let g = grad("-x1^2+x1^3-x2^2", 2, &[1.0, 0.0], 0.0);
    assert_eq!(g.value, 0.0);
    assert_eq!(g.d_dx, vec![1.0, 0.0]);
    assert_eq!(g.d_dt, 0.0);
}

#[test]
fn precedence_and_associativity() {
    let e = parse("-x1^2", 1).unwrap();
    assert_eq!(e.eval(&[2.0], 0.0).unwrap(), -4.0);
    let e = parse("2^3^2", 1).unwrap();
    assert_eq!(e.eval(&[0.0], 0.0).unwrap(), 512.0);
    let e = parse("6/3/2", 1).unwrap();
    assert_eq!(e.eval(&[0.0], 0.0).unwrap(), 1.0);
    let e = parse("x1^-2", 1).unwrap();
    assert_eq!(e.eval(&[2.0], 0.0).unwrap(), 0.25);
    let e = parse("1 - 2 - 3", 1).unwrap();
    assert_eq!(e.eval(&[0.0], 0.0).unwrap(), -4.0);
}

#[test]
fn abs_sign_at_zero_flagged() {
    let g = grad("abs(x1)", 1, &[0.0], 0.0);
    assert_eq!(g.value, 0.0);
    assert_eq!(g.d_dx, vec![0.0]);
    assert!(g.nonsmooth);

    let g = grad("sign(x1)", 1, &[0.0], 0.0);
    assert_eq!(g.value, 1.0); // limit from above
    assert_eq!(g.d_dx, vec![0.0]);
    assert!(g.nonsmooth);

    let g = grad("abs(x1)", 1, &[-0.5], 0.0);
    assert_eq!(g.d_dx, vec![-1.0]);
    assert!(!g.nonsmooth);
}

#[test]
fn domain_errors() {
    let log = parse("log(x1)", 1).unwrap();
    assert!(matches!(
        log.eval_with_gradient(&[-1.0], 0.0),
        Err(EvalError::Domain { func: "log", .. })
    ));
    let sqrt = parse("sqrt(x1)", 1).unwrap();
    assert!(matches!(
        sqrt.eval_with_gradient(&[-0.1], 0.0),
        Err(EvalError::Domain { func: "sqrt", .. })
    ));
}

#[test]
fn dimension_mismatch_rejected() {
    let ast = parse("x1+x2", 2).unwrap();
    assert!(matches!(
        ast.eval(&[1.0], 0.0),
        Err(EvalError::DimensionMismatch { expected: 2, got: 1 })
    ));
}

#[test]
fn autonomy_detection() {
    assert!(parse("t*x1", 1).unwrap().uses_time());
    assert!(!parse("x1*(1-x1)", 1).unwrap().uses_time());
}

// ---------------------------------------------------------------------------
// Random-expression finite-difference agreement (smooth operator set).
// ---------------------------------------------------------------------------

fn random_smooth_node(rng: &mut ChaCha8Rng, dim: usize, depth: usize) -> Node {
    let leaf = |rng: &mut ChaCha8Rng| -> Node {
        match rng.random_range(0..4) {
            0 => Node::Const((rng.random_range(-2000..=2000) as f64) / 1000.0),
            1 => Node::Time,
            _ => Node::Var(rng.random_range(0..dim)),
        }
    };
    if depth == 0 {
        return leaf(rng);
    }
    match rng.random_range(0..10) {
        0 | 1 => leaf(rng),
        2 => Node::Neg(Box::new(random_smooth_node(rng, dim, depth - 1))),
        3..=6 => {
            let op = match rng.random_range(0..4) {
                0 => BinOp::Add,
                1 => BinOp::Sub,
                2 => BinOp::Mul,
                _ => BinOp::Div,
            };
            Node::Bin(
                op,
                Box::new(random_smooth_node(rng, dim, depth - 1)),
                Box::new(random_smooth_node(rng, dim, depth - 1)),
            )
        }
        7 => {
            let exp = *[-2.0, -1.0, 2.0, 3.0].choose(rng).unwrap();
            Node::Bin(
                BinOp::Pow,
                Box::new(random_smooth_node(rng, dim, depth - 1)),
                Box::new(Node::Const(exp)),
            )
        }
        _ => {
            let func = *[Func::Sin, Func::Cos, Func::Exp, Func::Log, Func::Sqrt, Func::Tanh]
                .choose(rng)
                .unwrap();
            Node::Call(func, Box::new(random_smooth_node(rng, dim, depth - 1)))
        }
    }
}

/// AD gradients match central differences (step 1e-6) to relative error
/// 1e-6 on 1000 random smooth expressions, away from flagged points and
/// poorly conditioned samples.
#[test]
fn gradient_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0001);
    let h = 1e-6;
    let mut accepted = 0usize;
    let mut attempts = 0usize;
    while accepted < 1000 {
        attempts += 1;
        assert!(attempts < 100_000, "too many rejected samples");
        let dim = rng.random_range(1..=3);
        let ast = ExprAst {
            root: random_smooth_node(&mut rng, dim, 3),
            dimension: dim,
        };
        let x: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.5..1.5)).collect();
        let t: f64 = rng.random_range(-1.5..1.5);

        let center = match ast.eval_with_gradient(&x, t) {
            Ok(g) if !g.nonsmooth => g,
            _ => continue,
        };
        if !center.value.is_finite()
            || center.value.abs() > 50.0
            || center.d_dx.iter().chain([&center.d_dt]).any(|d| !d.is_finite() || d.abs() > 10.0)
        {
            continue;
        }

        // Central differences in each state direction and in t.
        let mut ok = true;
        let mut sample_valid = true;
        for dir in 0..=dim {
            let probe = |sgn: f64, x: &[f64], t: f64| -> Option<EvalGrad> {
                let mut xp = x.to_vec();
                let mut tp = t;
                if dir < dim {
                    xp[dir] += sgn * h;
                } else {
                    tp += sgn * h;
                }
                match ast.eval_with_gradient(&xp, tp) {
                    Ok(g) if !g.nonsmooth && g.value.is_finite() && g.value.abs() <= 50.0 => {
                        Some(g)
                    }
                    _ => None,
                }
            };
            let (plus, minus) = match (probe(1.0, &x, t), probe(-1.0, &x, t)) {
                (Some(p), Some(m)) => (p, m),
                _ => {
                    sample_valid = false;
                    break;
                }
            };
            let fd = (plus.value - minus.value) / (2.0 * h);
            let ad = if dir < dim { center.d_dx[dir] } else { center.d_dt };
            if (fd - ad).abs() > 1e-6 * (1.0 + ad.abs()) {
                ok = false;
                break;
            }
        }
        if !sample_valid {
            continue;
        }
        assert!(ok, "FD mismatch for `{ast}` at x={x:?}, t={t}");
        accepted += 1;
    }
}

// ---------------------------------------------------------------------------
// Printer round-trip: parse ∘ print ∘ parse = parse.
// ---------------------------------------------------------------------------

fn arb_node(dim: usize) -> impl Strategy<Value = Node> {
    let leaf = prop_oneof![
        (0.0f64..2.5).prop_map(Node::Const),
        (0..dim).prop_map(Node::Var),
        Just(Node::Time),
    ];
    leaf.prop_recursive(4, 48, 3, |inner| {
        prop_oneof![
            inner.clone().prop_map(|c| Node::Neg(Box::new(c))),
            (
                prop_oneof![
                    Just(BinOp::Add),
                    Just(BinOp::Sub),
                    Just(BinOp::Mul),
                    Just(BinOp::Div),
                    Just(BinOp::Pow)
                ],
                inner.clone(),
                inner.clone()
            )
                .prop_map(|(op, l, r)| Node::Bin(op, Box::new(l), Box::new(r))),
            (
                prop_oneof![
                    Just(Func::Sin),
                    Just(Func::Cos),
                    Just(Func::Exp),
                    Just(Func::Log),
                    Just(Func::Sqrt),
                    Just(Func::Abs),
                    Just(Func::Sign),
                    Just(Func::Tanh)
                ],
                inner
            )
                .prop_map(|(f, a)| Node::Call(f, Box::new(a))),
        ]
    })
}

proptest! {
    #[test]
    fn print_parse_round_trip(root in arb_node(3)) {
        let ast = ExprAst { root, dimension: 3 };
        let printed = ast.to_string();
        let reparsed = parse(&printed, 3).unwrap();
        prop_assert_eq!(&ast, &reparsed, "printed form: {}", printed);
    }

    #[test]
    fn parse_print_parse_idempotent_on_strings(root in arb_node(2)) {
        let printed = ExprAst { root, dimension: 2 }.to_string();
        let first = parse(&printed, 2).unwrap();
        let second = parse(&first.to_string(), 2).unwrap();
        prop_assert_eq!(first, second);
    }
}
