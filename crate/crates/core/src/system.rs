//! Vector fields, level sets, and control-affine problem instances.
//!
//! A [`SystemDef`] wraps `n` autonomous field expressions with Jacobian
//! evaluation (exact AD over the expressions or central differences). A
//! [`LevelSetDef`] is a scalar `G(x, t)` whose zero level set is the target
//! of hit detection. A [`ControlAffineProblem`] is the one-dimensional
//! bang-bang instance `x' = f(x) + u g(x)`, `u in [-1, 1]`, with running
//! cost `l_x(x) + u l_u(x)` and a switching level set.

use crate::expr::{self, BinOp, EvalError, ExprAst, ParseError};
use crate::mat::Mat;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SystemError {
    #[error("field component {index} references t; fields must be autonomous")]
    NonAutonomousField { index: usize },
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("unknown builtin `{0}`")]
    UnknownBuiltin(String),
    #[error("builtin `{name}`: {message}")]
    BadParams { name: &'static str, message: String },
    #[error("horizon must be finite, got {0}")]
    NonFiniteHorizon(f64),
    #[error("control problem {which} must not reference t")]
    NonAutonomousCoefficient { which: &'static str },
}

/// How `SystemDef::jacobian` is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum JacobianMode {
    /// Exact forward-mode differentiation of the field expressions.
    #[default]
    AnalyticAd,
    /// Central differences of the field (step `eps^(1/3)` scaled).
    FiniteDifference,
}

/// An autonomous vector field `F: R^n -> R^n`.
#[derive(Debug, Clone)]
pub struct SystemDef {
    field: Vec<ExprAst>,
    jacobian_mode: JacobianMode,
}

impl SystemDef {
    /// Build from already-parsed component expressions; each must be
    /// autonomous (reference only `x1..xn`).
    pub fn new(field: Vec<ExprAst>) -> Result<SystemDef, SystemError> {
        for (index, component) in field.iter().enumerate() {
            if component.uses_time() {
                return Err(SystemError::NonAutonomousField { index });
            }
        }
        Ok(SystemDef {
            field,
            jacobian_mode: JacobianMode::AnalyticAd,
        })
    }

    pub fn with_jacobian_mode(mut self, mode: JacobianMode) -> SystemDef {
        self.jacobian_mode = mode;
        self
    }

    pub fn dimension(&self) -> usize {
        self.field.len()
    }

    pub fn field_exprs(&self) -> &[ExprAst] {
        &self.field
    }

    /// `F(x)`.
    pub fn eval_f(&self, x: &[f64]) -> Result<Vec<f64>, EvalError> {
        self.field.iter().map(|c| c.eval(x, 0.0)).collect()
    }

    pub fn eval_f_into(&self, x: &[f64], out: &mut [f64]) -> Result<(), EvalError> {
        for (o, c) in out.iter_mut().zip(&self.field) {
            *o = c.eval(x, 0.0)?;
        }
        Ok(())
    }

    /// Jacobian `DF(x)` as an `n x n` matrix.
    pub fn jacobian(&self, x: &[f64]) -> Result<Mat, EvalError> {
        match self.jacobian_mode {
            JacobianMode::AnalyticAd => {
                let rows: Vec<Vec<f64>> = self
                    .field
                    .iter()
                    .map(|c| c.eval_with_gradient(x, 0.0).map(|g| g.d_dx))
                    .collect::<Result<_, _>>()?;
                Ok(Mat::from_rows(&rows))
            }
            JacobianMode::FiniteDifference => {
                let n = self.dimension();
                let mut jac = Mat::zeros(n, n);
                let mut xp = x.to_vec();
                for j in 0..n {
                    let h = f64::EPSILON.powf(1.0 / 3.0) * (1.0 + x[j].abs());
                    xp[j] = x[j] + h;
                    let fp = self.eval_f(&xp)?;
                    xp[j] = x[j] - h;
                    let fm = self.eval_f(&xp)?;
                    xp[j] = x[j];
                    for i in 0..n {
                        jac[(i, j)] = (fp[i] - fm[i]) / (2.0 * h);
                    }
                }
                Ok(jac)
            }
        }
    }
}

/// Scalar `G(x, t)` whose zero level set is the target set `S`.
#[derive(Debug, Clone)]
pub struct LevelSetDef {
    g: ExprAst,
}

/// `G`, its state gradient, and its time partial at one point.
#[derive(Debug, Clone)]
pub struct LevelSetGrad {
    pub value: f64,
    pub d_dx: Vec<f64>,
    pub d_dt: f64,
}

impl LevelSetDef {
    pub fn new(g: ExprAst) -> LevelSetDef {
        LevelSetDef { g }
    }

    pub fn expr(&self) -> &ExprAst {
        &self.g
    }

    pub fn dimension(&self) -> usize {
        self.g.dimension()
    }

    pub fn eval(&self, x: &[f64], t: f64) -> Result<f64, EvalError> {
        self.g.eval(x, t)
    }

    pub fn eval_grad(&self, x: &[f64], t: f64) -> Result<LevelSetGrad, EvalError> {
        let g = self.g.eval_with_gradient(x, t)?;
        Ok(LevelSetGrad {
            value: g.value,
            d_dx: g.d_dx,
            d_dt: g.d_dt,
        })
    }
}

/// Parse field expressions (and optionally a level set) into definitions.
///
/// The field dimension is the number of component expressions; components
/// must be autonomous. The level-set expression may reference `t`.
pub fn build_system(
    field_exprs: &[&str],
    level_set_expr: Option<&str>,
) -> Result<(SystemDef, Option<LevelSetDef>), SystemError> {
    let n = field_exprs.len();
    let field: Vec<ExprAst> = field_exprs
        .iter()
        .map(|s| expr::parse(s, n))
        .collect::<Result<_, _>>()?;
    let sys = SystemDef::new(field)?;
    let level_set = level_set_expr
        .map(|s| expr::parse(s, n).map(LevelSetDef::new))
        .transpose()?;
    Ok((sys, level_set))
}

/// The one-dimensional control-affine instance of the verification scheme.
///
/// Dynamics `x' = f(x) + u g(x)` with `u in [-1, 1]`, running cost
/// `l_x(x) + u l_u(x)` on a fixed horizon `[t0, T]`, and a switching level
/// set `G(x, t)`.
#[derive(Debug, Clone)]
pub struct ControlAffineProblem {
    f: ExprAst,
    g: ExprAst,
    l_x: ExprAst,
    l_u: ExprAst,
    horizon: f64,
    level_set: LevelSetDef,
}

impl ControlAffineProblem {
    pub fn new(
        f: ExprAst,
        g: ExprAst,
        l_x: ExprAst,
        l_u: ExprAst,
        horizon: f64,
        level_set: LevelSetDef,
    ) -> Result<ControlAffineProblem, SystemError> {
        if !horizon.is_finite() {
            return Err(SystemError::NonFiniteHorizon(horizon));
        }
        for (ast, which) in [(&f, "f"), (&g, "g"), (&l_x, "l_x"), (&l_u, "l_u")] {
            if ast.uses_time() {
                return Err(SystemError::NonAutonomousCoefficient { which });
            }
        }
        Ok(ControlAffineProblem {
            f,
            g,
            l_x,
            l_u,
            horizon,
            level_set,
        })
    }

    /// Parse a problem from expression strings (all over `x1`, except the
    /// level set which may also use `t`).
    pub fn from_strs(
        f: &str,
        g: &str,
        l_x: &str,
        l_u: &str,
        horizon: f64,
        level_set: &str,
    ) -> Result<ControlAffineProblem, SystemError> {
        ControlAffineProblem::new(
            expr::parse(f, 1)?,
            expr::parse(g, 1)?,
            expr::parse(l_x, 1)?,
            expr::parse(l_u, 1)?,
            horizon,
            LevelSetDef::new(expr::parse(level_set, 1)?),
        )
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn level_set(&self) -> &LevelSetDef {
        &self.level_set
    }

    pub fn f(&self) -> &ExprAst {
        &self.f
    }

    pub fn g(&self) -> &ExprAst {
        &self.g
    }

    pub fn l_x(&self) -> &ExprAst {
        &self.l_x
    }

    pub fn l_u(&self) -> &ExprAst {
        &self.l_u
    }

    /// The closed-loop field `f + u g` for a bang control `u = ±1`.
    pub fn bang_field(&self, u_sign: f64) -> SystemDef {
        let op = if u_sign >= 0.0 { BinOp::Add } else { BinOp::Sub };
        SystemDef {
            field: vec![self.f.combine(op, &self.g)],
            jacobian_mode: JacobianMode::AnalyticAd,
        }
    }

    /// The running cost `l_x + u l_u` for a bang control `u = ±1`.
    pub fn bang_cost(&self, u_sign: f64) -> ExprAst {
        let op = if u_sign >= 0.0 { BinOp::Add } else { BinOp::Sub };
        self.l_x.combine(op, &self.l_u)
    }

    /// `f(x) + u g(x)` at a point.
    pub fn bang_speed(&self, u_sign: f64, x: f64) -> Result<f64, EvalError> {
        Ok(self.f.eval(&[x], 0.0)? + u_sign * self.g.eval(&[x], 0.0)?)
    }

    /// `l_x(x) + u l_u(x)` at a point.
    pub fn bang_running_cost(&self, u_sign: f64, x: f64) -> Result<f64, EvalError> {
        Ok(self.l_x.eval(&[x], 0.0)? + u_sign * self.l_u.eval(&[x], 0.0)?)
    }
}

/// Result of a builtin lookup: either a plain system (with an optional
/// level set) or a full control-affine problem.
#[derive(Debug, Clone)]
pub enum BuiltinDef {
    System {
        sys: SystemDef,
        level_set: Option<LevelSetDef>,
    },
    Problem(ControlAffineProblem),
}

/// Named registry used by tests and scenario files.
///
/// `linear1d(a)`, `logistic(r)`, `rotation2d`, `translation(n, v1..vn)`,
/// `remark_counterexample`, `wedge_problem`.
pub fn builtin(name: &str, params: &[f64]) -> Result<BuiltinDef, SystemError> {
    fn expect_params(
        name: &'static str,
        params: &[f64],
        want: usize,
    ) -> Result<(), SystemError> {
        if params.len() != want {
            return Err(SystemError::BadParams {
                name,
                message: format!("expects {want} parameter(s), got {}", params.len()),
            });
        }
        Ok(())
    }

    match name {
        "linear1d" => {
            expect_params("linear1d", params, 1)?;
            let (sys, _) = build_system(&[&format!("{:?}*x1", params[0])], None)?;
            Ok(BuiltinDef::System { sys, level_set: None })
        }
        "logistic" => {
            expect_params("logistic", params, 1)?;
            let (sys, _) = build_system(&[&format!("{:?}*x1*(1-x1)", params[0])], None)?;
            Ok(BuiltinDef::System { sys, level_set: None })
        }
        "rotation2d" => {
            expect_params("rotation2d", params, 0)?;
            let (sys, _) = build_system(&["-x2", "x1"], None)?;
            Ok(BuiltinDef::System { sys, level_set: None })
        }
        "translation" => {
            if params.is_empty() {
                return Err(SystemError::BadParams {
                    name: "translation",
                    message: "expects a dimension followed by that many velocities".into(),
                });
            }
            let n = params[0];
            if n < 1.0 || n.fract() != 0.0 || params.len() != 1 + n as usize {
                return Err(SystemError::BadParams {
                    name: "translation",
                    message: format!(
                        "expects a positive integer dimension n and n velocities, got {params:?}"
                    ),
                });
            }
            let exprs: Vec<String> = params[1..].iter().map(|v| format!("{v:?}")).collect();
            let refs: Vec<&str> = exprs.iter().map(String::as_str).collect();
            let (sys, _) = build_system(&refs, None)?;
            Ok(BuiltinDef::System { sys, level_set: None })
        }
        "remark_counterexample" => {
            expect_params("remark_counterexample", params, 0)?;
            let (sys, level_set) = build_system(&["1", "0"], Some("-x1^2+x1^3-x2^2"))?;
            Ok(BuiltinDef::System { sys, level_set })
        }
        "wedge_problem" => {
            expect_params("wedge_problem", params, 0)?;
            let p = ControlAffineProblem::from_strs("0", "1", "x1^2", "0", 2.0, "-x1-(t-1)")?;
            assert_wedge_invariance(&p);
            Ok(BuiltinDef::Problem(p))
        }
        other => Err(SystemError::UnknownBuiltin(other.to_string())),
    }
}

/// Convenience for builtins known to be plain systems.
pub fn builtin_system(
    name: &str,
    params: &[f64],
) -> Result<(SystemDef, Option<LevelSetDef>), SystemError> {
    match builtin(name, params)? {
        BuiltinDef::System { sys, level_set } => Ok((sys, level_set)),
        BuiltinDef::Problem(_) => Err(SystemError::BadParams {
            name: "builtin_system",
            message: format!("`{name}` is a control problem, not a plain system"),
        }),
    }
}

// Construction-time assertion that G^- ∪ S is positively invariant under
// u = -1 for the wedge instance: fixed-step RK4 sweeps from sampled starts
// on and below the locus must keep G non-positive.
fn assert_wedge_invariance(p: &ControlAffineProblem) {
    let field = p.bang_field(-1.0);
    let ls = p.level_set();
    let t_final = p.horizon();
    for k in 0..=10 {
        let t_start = t_final * (k as f64) / 10.0;
        for offset in [0.0, 0.3, 1.0] {
            // G(x, t) = -x - (t - 1): start on S (offset 0) or inside G^-.
            let mut x = vec![1.0 - t_start + offset];
            let mut t = t_start;
            let steps = 200;
            let h = (t_final - t_start) / steps as f64;
            for _ in 0..steps {
                rk4_step(&field, &mut x, t, h);
                t += h;
                let g = ls.eval(&x, t).expect("wedge level set evaluates");
                assert!(
                    g <= 1e-8,
                    "wedge invariance violated: G = {g} at t = {t}"
                );
            }
        }
    }
}

fn rk4_step(sys: &SystemDef, x: &mut [f64], t: f64, h: f64) {
    let eval = |x: &[f64]| sys.eval_f(x).expect("field evaluates");
    let k1 = eval(x);
    let xs: Vec<f64> = x.iter().zip(&k1).map(|(x, k)| x + 0.5 * h * k).collect();
    let k2 = eval(&xs);
    let xs: Vec<f64> = x.iter().zip(&k2).map(|(x, k)| x + 0.5 * h * k).collect();
    let k3 = eval(&xs);
    let xs: Vec<f64> = x.iter().zip(&k3).map(|(x, k)| x + h * k).collect();
    let k4 = eval(&xs);
    for i in 0..x.len() {
        x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    let _ = t;
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn logistic_from_strings() {
        let (sys, ls) = build_system(&["x1*(1-x1)"], None).unwrap();
        assert_eq!(sys.dimension(), 1);
        assert!(ls.is_none());
        assert_eq!(sys.eval_f(&[0.5]).unwrap(), vec![0.25]);
    }

    #[test]
    fn remark_counterexample_system() {
        let (sys, ls) = build_system(&["1", "0"], Some("-x1^2+x1^3-x2^2")).unwrap();
        assert_eq!(sys.eval_f(&[5.0, -3.0]).unwrap(), vec![1.0, 0.0]);
        let ls = ls.unwrap();
        assert_eq!(ls.eval(&[-1.0, 0.0], 0.0).unwrap(), -2.0);
    }

    #[test]
    fn nonautonomous_field_rejected() {
        match build_system(&["t*x1"], None) {
            Err(SystemError::NonAutonomousField { index: 0 }) => {}
            other => panic!("expected NonAutonomousField, got {other:?}"),
        }
    }

    #[test]
    fn builtin_linear1d() {
        let (sys, _) = builtin_system("linear1d", &[1.0]).unwrap();
        assert_eq!(sys.eval_f(&[3.0]).unwrap(), vec![3.0]);
        let (sys, _) = builtin_system("linear1d", &[-2.5]).unwrap();
        assert_eq!(sys.eval_f(&[2.0]).unwrap(), vec![-5.0]);
    }

    #[test]
    fn builtin_remark_degenerate_point() {
        // G((0,0), t) = 0 with vanishing gradient, for any t.
        let (_, ls) = builtin_system("remark_counterexample", &[]).unwrap();
        let ls = ls.unwrap();
        for t in [-3.0, 0.0, 0.7, 42.0] {
            let g = ls.eval_grad(&[0.0, 0.0], t).unwrap();
            assert_eq!(g.value, 0.0);
            assert_eq!(g.d_dx, vec![0.0, 0.0]);
            assert_eq!(g.d_dt, 0.0);
        }
    }

    #[test]
    fn builtin_wedge_problem_shape() {
        let BuiltinDef::Problem(p) = builtin("wedge_problem", &[]).unwrap() else {
            panic!("wedge_problem must be a control problem");
        };
        assert_eq!(p.horizon(), 2.0);
        assert_eq!(p.bang_speed(1.0, 0.3).unwrap(), 1.0);
        assert_eq!(p.bang_speed(-1.0, 0.3).unwrap(), -1.0);
        // G(x, t) = -x - (t - 1)
        assert_eq!(p.level_set().eval(&[-0.5], 0.0).unwrap(), 1.5);
    }

    #[test]
    fn unknown_builtin() {
        assert!(matches!(
            builtin("vanishing", &[]),
            Err(SystemError::UnknownBuiltin(_))
        ));
        assert!(matches!(
            builtin("linear1d", &[]),
            Err(SystemError::BadParams { .. })
        ));
    }

    /// AD Jacobians match central differences on every builtin system at
    /// random points.
    #[test]
    fn jacobian_modes_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0002);
        let systems = [
            builtin_system("linear1d", &[1.3]).unwrap().0,
            builtin_system("logistic", &[0.8]).unwrap().0,
            builtin_system("rotation2d", &[]).unwrap().0,
            builtin_system("translation", &[2.0, 0.5, -0.25]).unwrap().0,
            builtin_system("remark_counterexample", &[]).unwrap().0,
        ];
        for sys in &systems {
            let fd_sys = sys.clone().with_jacobian_mode(JacobianMode::FiniteDifference);
            for _ in 0..100 {
                let x: Vec<f64> = (0..sys.dimension())
                    .map(|_| rng.random_range(-2.0..2.0))
                    .collect();
                let ad = sys.jacobian(&x).unwrap();
                let fd = fd_sys.jacobian(&x).unwrap();
                for i in 0..sys.dimension() {
                    for j in 0..sys.dimension() {
                        let err = (ad[(i, j)] - fd[(i, j)]).abs();
                        assert!(
                            err <= 1e-6 * (1.0 + ad[(i, j)].abs()),
                            "jacobian mismatch at {x:?}: ad={}, fd={}",
                            ad[(i, j)],
                            fd[(i, j)]
                        );
                    }
                }
            }
        }
    }
}
