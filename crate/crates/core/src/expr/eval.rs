//! Plain and forward-mode dual evaluation of expression trees.

use super::{BinOp, Func, Node};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("domain error: {func}({arg}) is undefined")]
    Domain { func: &'static str, arg: f64 },
    #[error("state has length {got}, expression expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// Value and exact first derivatives of an expression at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalGrad {
    pub value: f64,
    pub d_dx: Vec<f64>,
    pub d_dt: f64,
    /// Set when `abs`/`sign` was evaluated exactly at 0 (derivative
    /// reported as 0 by convention) or `sqrt` exactly at 0.
    pub nonsmooth: bool,
}

/// One scalar carried together with a directional derivative.
#[derive(Debug, Clone, Copy)]
struct Dual {
    v: f64,
    d: f64,
}

impl Dual {
    const fn con(v: f64) -> Dual {
        Dual { v, d: 0.0 }
    }
}

fn dual_pow(base: Dual, exp: Dual) -> Result<Dual, EvalError> {
    if exp.d == 0.0 {
        // Exponent constant along this direction.
        let e = exp.v;
        let v = base.v.powf(e);
        if v.is_nan() && !base.v.is_nan() && !e.is_nan() {
            return Err(EvalError::Domain {
                func: "pow",
                arg: base.v,
            });
        }
        let d = if base.d == 0.0 || e == 0.0 {
            0.0
        } else {
            e * base.v.powf(e - 1.0) * base.d
        };
        Ok(Dual { v, d })
    } else {
        // Varying exponent requires a positive base: a^b = exp(b ln a).
        if base.v <= 0.0 {
            return Err(EvalError::Domain {
                func: "pow",
                arg: base.v,
            });
        }
        let v = base.v.powf(exp.v);
        let d = v * (exp.d * base.v.ln() + exp.v * base.d / base.v);
        Ok(Dual { v, d })
    }
}

fn eval_dual(
    node: &Node,
    x: &[f64],
    t: f64,
    dx: &[f64],
    dt: f64,
    nonsmooth: &mut bool,
) -> Result<Dual, EvalError> {
    Ok(match node {
        Node::Const(c) => Dual::con(*c),
        Node::Var(i) => Dual { v: x[*i], d: dx[*i] },
        Node::Time => Dual { v: t, d: dt },
        Node::Neg(c) => {
            let a = eval_dual(c, x, t, dx, dt, nonsmooth)?;
            Dual { v: -a.v, d: -a.d }
        }
        Node::Bin(op, l, r) => {
            let a = eval_dual(l, x, t, dx, dt, nonsmooth)?;
            let b = eval_dual(r, x, t, dx, dt, nonsmooth)?;
            match op {
                BinOp::Add => Dual {
                    v: a.v + b.v,
                    d: a.d + b.d,
                },
                BinOp::Sub => Dual {
                    v: a.v - b.v,
                    d: a.d - b.d,
                },
                BinOp::Mul => Dual {
                    v: a.v * b.v,
                    d: a.d * b.v + a.v * b.d,
                },
                BinOp::Div => Dual {
                    v: a.v / b.v,
                    d: (a.d * b.v - a.v * b.d) / (b.v * b.v),
                },
                BinOp::Pow => dual_pow(a, b)?,
            }
        }
        Node::Call(func, argn) => {
            let a = eval_dual(argn, x, t, dx, dt, nonsmooth)?;
            match func {
                Func::Sin => Dual {
                    v: a.v.sin(),
                    d: a.v.cos() * a.d,
                },
                Func::Cos => Dual {
                    v: a.v.cos(),
                    d: -a.v.sin() * a.d,
                },
                Func::Exp => {
                    let e = a.v.exp();
                    Dual { v: e, d: e * a.d }
                }
                Func::Tanh => {
                    let th = a.v.tanh();
                    Dual {
                        v: th,
                        d: (1.0 - th * th) * a.d,
                    }
                }
                Func::Log => {
                    if a.v <= 0.0 {
                        return Err(EvalError::Domain {
                            func: "log",
                            arg: a.v,
                        });
                    }
                    Dual {
                        v: a.v.ln(),
                        d: a.d / a.v,
                    }
                }
                Func::Sqrt => {
                    if a.v < 0.0 {
                        return Err(EvalError::Domain {
                            func: "sqrt",
                            arg: a.v,
                        });
                    }
                    if a.v == 0.0 {
                        *nonsmooth = true;
                        Dual { v: 0.0, d: 0.0 }
                    } else {
                        let s = a.v.sqrt();
                        Dual {
                            v: s,
                            d: a.d / (2.0 * s),
                        }
                    }
                }
                Func::Abs => {
                    if a.v == 0.0 {
                        *nonsmooth = true;
                        Dual { v: 0.0, d: 0.0 }
                    } else {
                        Dual {
                            v: a.v.abs(),
                            d: a.v.signum() * a.d,
                        }
                    }
                }
                Func::Sign => {
                    if a.v == 0.0 {
                        // Limit-from-above convention for the value.
                        *nonsmooth = true;
                        Dual { v: 1.0, d: 0.0 }
                    } else {
                        Dual {
                            v: a.v.signum(),
                            d: 0.0,
                        }
                    }
                }
            }
        }
    })
}

pub(super) fn eval_value(node: &Node, x: &[f64], t: f64) -> Result<f64, EvalError> {
    let zeros = vec![0.0; x.len()];
    let mut nonsmooth = false;
    Ok(eval_dual(node, x, t, &zeros, 0.0, &mut nonsmooth)?.v)
}

pub(super) fn eval_directional(
    node: &Node,
    x: &[f64],
    t: f64,
    dx: &[f64],
    dt: f64,
) -> Result<(f64, f64, bool), EvalError> {
    let mut nonsmooth = false;
    let out = eval_dual(node, x, t, dx, dt, &mut nonsmooth)?;
    Ok((out.v, out.d, nonsmooth))
}

pub(super) fn eval_with_gradient(node: &Node, x: &[f64], t: f64) -> Result<EvalGrad, EvalError> {
    let n = x.len();
    let mut dx = vec![0.0; n];
    let mut d_dx = vec![0.0; n];
    let mut nonsmooth = false;
    for i in 0..n {
        dx[i] = 1.0;
        let out = eval_dual(node, x, t, &dx, 0.0, &mut nonsmooth)?;
        dx[i] = 0.0;
        d_dx[i] = out.d;
    }
    let out = eval_dual(node, x, t, &dx, 1.0, &mut nonsmooth)?;
    Ok(EvalGrad {
        value: out.v,
        d_dx,
        d_dt: out.d,
        nonsmooth,
    })
}
