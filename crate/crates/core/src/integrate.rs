//! Adaptive Dormand–Prince 5(4) integration with dense output.
//!
//! Accepted steps are stored as knots `(t, y, y')`; sampling interpolates
//! with per-interval cubic Hermite polynomials (error `O(h^4)`), which is
//! what event scanning and root polishing in `hitting` rely on. The step
//! length is capped by `h_max` so a sign change of the event function wider
//! than `h_max` cannot be skipped by the scan grid.

use crate::expr::EvalError;
use crate::mat::Mat;
use crate::system::SystemDef;

/// State norm beyond which a trajectory is reported as escaping.
pub const BLOWUP_NORM: f64 = 1e12;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum IntegrateError {
    #[error("state norm exceeded 1e12 at t={t}; trajectory escapes in finite time")]
    BlowUp { t: f64 },
    #[error("step size underflow at t={t}")]
    StepUnderflow { t: f64 },
    #[error("exceeded {0} steps")]
    MaxSteps(usize),
    #[error("integration span must satisfy t1 > t0 (got t0={t0}, t1={t1})")]
    BadSpan { t0: f64, t1: f64 },
    #[error("sample time {t} outside [{t0}, {t1}]")]
    OutOfRange { t: f64, t0: f64, t1: f64 },
    #[error("initial state contains non-finite values")]
    NonFiniteInitial,
    #[error("right-hand side failed at t={t}: {source}")]
    Rhs { t: f64, source: EvalError },
}

/// Integrator tolerances and limits.
#[derive(Debug, Clone, Copy)]
pub struct IntegrateOpts {
    pub rtol: f64,
    pub atol: f64,
    /// Maximum step length; defaults to `(t1 - t0) / 16`.
    pub h_max: Option<f64>,
    pub max_steps: usize,
}

impl Default for IntegrateOpts {
    fn default() -> Self {
        IntegrateOpts {
            rtol: 1e-10,
            atol: 1e-12,
            h_max: None,
            max_steps: 1_000_000,
        }
    }
}

impl IntegrateOpts {
    pub fn with_tols(rtol: f64, atol: f64) -> IntegrateOpts {
        IntegrateOpts {
            rtol,
            atol,
            ..IntegrateOpts::default()
        }
    }
}

/// A right-hand side `y' = rhs(t, y)`.
pub trait OdeRhs {
    fn dim(&self) -> usize;
    fn eval(&self, t: f64, y: &[f64], dydt: &mut [f64]) -> Result<(), EvalError>;
}

/// One accepted node: time, state, and the exact RHS value there.
#[derive(Debug, Clone)]
pub struct Knot {
    pub t: f64,
    pub y: Vec<f64>,
    pub dy: Vec<f64>,
}

/// Interpolable solution of an (augmented) ODE on `[t0, t1]`.
#[derive(Debug, Clone)]
pub struct DenseSolution {
    t0: f64,
    t1: f64,
    aug_dim: usize,
    knots: Vec<Knot>,
}

impl DenseSolution {
    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn t1(&self) -> f64 {
        self.t1
    }

    /// Total augmented state length (`n`, `n + n^2`, `n + 1`, ...).
    pub fn aug_dim(&self) -> usize {
        self.aug_dim
    }

    pub fn knots(&self) -> &[Knot] {
        &self.knots
    }

    pub fn end_state(&self) -> &[f64] {
        &self.knots.last().expect("solution has knots").y
    }

    /// Cubic-Hermite interpolated state; exact at knots.
    pub fn sample(&self, t: f64) -> Result<Vec<f64>, IntegrateError> {
        let mut out = vec![0.0; self.aug_dim];
        self.sample_into(t, &mut out)?;
        Ok(out)
    }

    pub fn sample_into(&self, t: f64, out: &mut [f64]) -> Result<(), IntegrateError> {
        if t < self.t0 || t > self.t1 {
            return Err(IntegrateError::OutOfRange {
                t,
                t0: self.t0,
                t1: self.t1,
            });
        }
        // Rightmost knot with knot.t <= t.
        let idx = match self
            .knots
            .binary_search_by(|k| k.t.partial_cmp(&t).expect("finite knot times"))
        {
            Ok(i) => {
                out.copy_from_slice(&self.knots[i].y);
                return Ok(());
            }
            Err(i) => i - 1,
        };
        let a = &self.knots[idx];
        let b = &self.knots[idx + 1];
        let h = b.t - a.t;
        let s = (t - a.t) / h;
        let s2 = s * s;
        let s3 = s2 * s;
        let c_y0 = 1.0 - 3.0 * s2 + 2.0 * s3;
        let c_f0 = (s - 2.0 * s2 + s3) * h;
        let c_y1 = 3.0 * s2 - 2.0 * s3;
        let c_f1 = (s3 - s2) * h;
        for (i, o) in out.iter_mut().enumerate() {
            *o = c_y0 * a.y[i] + c_f0 * a.dy[i] + c_y1 * b.y[i] + c_f1 * b.dy[i];
        }
        Ok(())
    }

    /// Interpolated time derivative of the state (Hermite derivative).
    pub fn sample_derivative_into(&self, t: f64, out: &mut [f64]) -> Result<(), IntegrateError> {
        if t < self.t0 || t > self.t1 {
            return Err(IntegrateError::OutOfRange {
                t,
                t0: self.t0,
                t1: self.t1,
            });
        }
        let idx = match self
            .knots
            .binary_search_by(|k| k.t.partial_cmp(&t).expect("finite knot times"))
        {
            Ok(i) => {
                out.copy_from_slice(&self.knots[i].dy);
                return Ok(());
            }
            Err(i) => i - 1,
        };
        let a = &self.knots[idx];
        let b = &self.knots[idx + 1];
        let h = b.t - a.t;
        let s = (t - a.t) / h;
        let d_y0 = (6.0 * s * s - 6.0 * s) / h;
        let d_f0 = 1.0 - 4.0 * s + 3.0 * s * s;
        let d_y1 = (6.0 * s - 6.0 * s * s) / h;
        let d_f1 = 3.0 * s * s - 2.0 * s;
        for (i, o) in out.iter_mut().enumerate() {
            *o = d_y0 * a.y[i] + d_f0 * a.dy[i] + d_y1 * b.y[i] + d_f1 * b.dy[i];
        }
        Ok(())
    }
}

// Dormand–Prince 5(4) tableau (Hairer, Nørsett, Wanner notation).
const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];
// 4th-order dense-output weights, used to bound the cubic Hermite
// interpolation error inside step acceptance.
const D: [f64; 7] = [
    -12715105075.0 / 11282082432.0,
    0.0,
    87487479700.0 / 32700410799.0,
    -10690763975.0 / 1880347072.0,
    701980252875.0 / 199316789632.0,
    -1453857185.0 / 822651844.0,
    69997945.0 / 29380423.0,
];

/// Integrate an arbitrary right-hand side with dense output.
pub fn integrate_rhs(
    rhs: &dyn OdeRhs,
    y0: &[f64],
    t0: f64,
    t1: f64,
    opts: &IntegrateOpts,
) -> Result<DenseSolution, IntegrateError> {
    if !t0.is_finite() || !t1.is_finite() || t1 <= t0 {
        return Err(IntegrateError::BadSpan { t0, t1 });
    }
    if y0.iter().any(|v| !v.is_finite()) {
        return Err(IntegrateError::NonFiniteInitial);
    }
    let dim = rhs.dim();
    assert_eq!(y0.len(), dim, "initial state length mismatch");
    let h_max = opts.h_max.unwrap_or((t1 - t0) / 16.0);

    let eval = |t: f64, y: &[f64], out: &mut [f64]| -> Result<(), IntegrateError> {
        rhs.eval(t, y, out)
            .map_err(|source| IntegrateError::Rhs { t, source })
    };

    let mut t = t0;
    let mut y = y0.to_vec();
    let mut k: Vec<Vec<f64>> = vec![vec![0.0; dim]; 7];
    eval(t, &y, &mut k[0])?;

    let mut knots = vec![Knot {
        t,
        y: y.clone(),
        dy: k[0].clone(),
    }];

    let mut h = initial_step(&eval, t, t1, &y, &k[0].clone(), opts, h_max)?;
    let mut y_stage = vec![0.0; dim];
    let mut y_new = vec![0.0; dim];
    let mut facold: f64 = 1e-4;
    const SAFE: f64 = 0.9;
    const FAC_MIN: f64 = 0.2;
    const FAC_MAX: f64 = 10.0;
    const BETA: f64 = 0.04;
    let expo1 = 0.2 - BETA * 0.75;

    let mut steps = 0usize;
    loop {
        if steps >= opts.max_steps {
            return Err(IntegrateError::MaxSteps(opts.max_steps));
        }
        steps += 1;

        if h < 4.0 * f64::EPSILON * t.abs().max(t1 - t0) {
            return Err(IntegrateError::StepUnderflow { t });
        }
        let mut last = false;
        if t + h >= t1 {
            h = t1 - t;
            last = true;
        }

        // Stages 2..7 (k[0] is FSAL from the previous step).
        for s in 1..7 {
            for i in 0..dim {
                let mut acc = 0.0;
                for (j, kj) in k.iter().enumerate().take(s) {
                    let a = A[s][j];
                    if a != 0.0 {
                        acc += a * kj[i];
                    }
                }
                y_stage[i] = y[i] + h * acc;
            }
            let ks = &mut k[s];
            eval(t + C[s] * h, &y_stage, ks)?;
        }
        // 5th-order solution is stage 7's argument (A[6] row = b).
        y_new.copy_from_slice(&y_stage);

        // Embedded error estimate, plus a dense-output consistency check:
        // the cubic Hermite interpolant must agree with the 4th-order
        // dense output at the step midpoint to within tolerance, so that
        // samples (event scans, restarts) inherit the step accuracy.
        let mut err = 0.0;
        let mut err_dense = 0.0;
        for i in 0..dim {
            let sk = opts.atol + opts.rtol * y[i].abs().max(y_new[i].abs());
            let mut e = 0.0;
            let mut d_sum = 0.0;
            for (j, kj) in k.iter().enumerate() {
                if E[j] != 0.0 {
                    e += E[j] * kj[i];
                }
                if D[j] != 0.0 {
                    d_sum += D[j] * kj[i];
                }
            }
            let ratio = h * e / sk;
            err += ratio * ratio;

            let ydiff = y_new[i] - y[i];
            let bspl = h * k[0][i] - ydiff;
            let c3 = ydiff - h * k[6][i] - bspl;
            let c4 = h * d_sum;
            let dense_mid = y[i] + 0.5 * (ydiff + 0.5 * (bspl + 0.5 * (c3 + 0.5 * c4)));
            let hermite_mid = 0.5 * (y[i] + y_new[i]) + 0.125 * h * (k[0][i] - k[6][i]);
            let r = (dense_mid - hermite_mid) / sk;
            err_dense += r * r;
        }
        err = (err / dim as f64).sqrt().max((err_dense / dim as f64).sqrt());

        if err.is_finite() && err <= 1.0 {
            // Accept.
            let fac11 = err.powf(expo1);
            let fac = (fac11 / facold.powf(BETA) / SAFE).clamp(1.0 / FAC_MAX, 1.0 / FAC_MIN);
            facold = err.max(1e-4);
            t += h;
            std::mem::swap(&mut y, &mut y_new);
            k.swap(0, 6); // FSAL: k7 = f(t+h, y_new) is next step's k1.
            if y.iter().any(|v| !v.is_finite() || v.abs() > BLOWUP_NORM) {
                return Err(IntegrateError::BlowUp { t });
            }
            knots.push(Knot {
                t,
                y: y.clone(),
                dy: k[0].clone(),
            });
            if last {
                break;
            }
            h = (h / fac).min(h_max);
        } else {
            // Reject and shrink.
            let fac11 = if err.is_finite() { err.powf(expo1) } else { 1.0 / FAC_MIN };
            h /= (fac11 / SAFE).clamp(1.0 / FAC_MAX, 1.0 / FAC_MIN);
        }
    }

    // Exactness at the right endpoint.
    let t_end = knots.last().unwrap().t;
    debug_assert!((t_end - t1).abs() <= 4.0 * f64::EPSILON * t1.abs().max(1.0));
    knots.last_mut().unwrap().t = t1;

    Ok(DenseSolution {
        t0,
        t1,
        aug_dim: dim,
        knots,
    })
}

type EvalFn<'a> = dyn Fn(f64, &[f64], &mut [f64]) -> Result<(), IntegrateError> + 'a;

// Classic starting-step heuristic (order 5).
fn initial_step(
    eval: &EvalFn<'_>,
    t0: f64,
    t1: f64,
    y0: &[f64],
    f0: &[f64],
    opts: &IntegrateOpts,
    h_max: f64,
) -> Result<f64, IntegrateError> {
    let dim = y0.len();
    let sk = |y: &[f64], i: usize| opts.atol + opts.rtol * y[i].abs();
    let d0 = (0..dim)
        .map(|i| (y0[i] / sk(y0, i)).powi(2))
        .sum::<f64>()
        .sqrt()
        / (dim as f64).sqrt();
    let d1 = (0..dim)
        .map(|i| (f0[i] / sk(y0, i)).powi(2))
        .sum::<f64>()
        .sqrt()
        / (dim as f64).sqrt();
    let mut h0 = if d0 < 1e-10 || d1 < 1e-10 {
        1e-6
    } else {
        0.01 * d0 / d1
    };
    h0 = h0.min(t1 - t0).min(h_max);

    let y1: Vec<f64> = (0..dim).map(|i| y0[i] + h0 * f0[i]).collect();
    let mut f1 = vec![0.0; dim];
    eval(t0 + h0, &y1, &mut f1)?;
    let d2 = (0..dim)
        .map(|i| ((f1[i] - f0[i]) / sk(y0, i)).powi(2))
        .sum::<f64>()
        .sqrt()
        / (dim as f64).sqrt()
        / h0;

    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    // Near-zero initial states drive d0 (and with it h0) toward zero; the
    // floor keeps the first step above the underflow threshold and lets
    // the controller grow from there.
    let h_floor = 64.0 * f64::EPSILON * (t1 - t0).max(t0.abs());
    Ok((100.0 * h0)
        .min(h1)
        .max(h_floor)
        .min(t1 - t0)
        .min(h_max))
}

struct BaseRhs<'a> {
    sys: &'a SystemDef,
}

impl OdeRhs for BaseRhs<'_> {
    fn dim(&self) -> usize {
        self.sys.dimension()
    }

    fn eval(&self, _t: f64, y: &[f64], dydt: &mut [f64]) -> Result<(), EvalError> {
        self.sys.eval_f_into(y, dydt)
    }
}

/// The coupled system `(x, M)` with `M' = DF(x) M`, `M(t0) = I`.
struct VariationalRhs<'a> {
    sys: &'a SystemDef,
}

impl OdeRhs for VariationalRhs<'_> {
    fn dim(&self) -> usize {
        let n = self.sys.dimension();
        n + n * n
    }

    fn eval(&self, _t: f64, y: &[f64], dydt: &mut [f64]) -> Result<(), EvalError> {
        let n = self.sys.dimension();
        let x = &y[..n];
        self.sys.eval_f_into(x, &mut dydt[..n])?;
        let jac = self.sys.jacobian(x)?;
        let m = &y[n..];
        let dm = &mut dydt[n..];
        for i in 0..n {
            for j in 0..n {
                let mut acc = 0.0;
                for l in 0..n {
                    acc += jac[(i, l)] * m[l * n + j];
                }
                dm[i * n + j] = acc;
            }
        }
        Ok(())
    }
}

/// Integrate `x' = F(x)` from `x0` over `[t0, t1]`.
pub fn integrate_dense(
    sys: &SystemDef,
    x0: &[f64],
    t0: f64,
    t1: f64,
    opts: &IntegrateOpts,
) -> Result<DenseSolution, IntegrateError> {
    integrate_rhs(&BaseRhs { sys }, x0, t0, t1, opts)
}

/// Integrate the coupled `(x, M)` system; the returned solution's state is
/// `[x (n), M (n^2, row-major)]` with `M(t0) = I`.
pub fn integrate_variational(
    sys: &SystemDef,
    x0: &[f64],
    t0: f64,
    t1: f64,
    opts: &IntegrateOpts,
) -> Result<DenseSolution, IntegrateError> {
    let n = sys.dimension();
    assert_eq!(x0.len(), n, "initial state length mismatch");
    let mut y0 = vec![0.0; n + n * n];
    y0[..n].copy_from_slice(x0);
    for i in 0..n {
        y0[n + i * n + i] = 1.0;
    }
    integrate_rhs(&VariationalRhs { sys }, &y0, t0, t1, opts)
}

/// Split an augmented variational state into `(x, M)`.
pub fn variational_parts(n: usize, y: &[f64]) -> (Vec<f64>, Mat) {
    assert_eq!(y.len(), n + n * n);
    (y[..n].to_vec(), Mat::from_slice(n, n, &y[n..]))
}
