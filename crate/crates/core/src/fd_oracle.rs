//! Independent finite-difference oracles.
//!
//! These deliberately share no code with the analytic derivative paths:
//! they re-solve perturbed problems and difference the outputs. Central
//! differences with optional Richardson extrapolation; the error estimate
//! is the difference between the last two extrapolation diagonals.

use crate::hitting::{detect_hit, EventOpts, HittingError};
use crate::integrate::IntegrateOpts;
use crate::mat::Mat;
use crate::system::{LevelSetDef, SystemDef};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FdError {
    #[error("function evaluation failed at {point}")]
    EvaluationFailed { point: f64 },
    #[error("a perturbed trajectory misses the set (perturbation {delta:+e} in {what})")]
    HitLostUnderPerturbation { what: String, delta: f64 },
    #[error(transparent)]
    Hitting(#[from] HittingError),
}

/// Step and extrapolation settings for the oracles.
#[derive(Debug, Clone, Copy)]
pub struct FdConfig {
    /// Base step; interpreted relative to `1 + |point|` when
    /// `relative_mode` is set.
    pub base_step: f64,
    pub richardson_levels: usize,
    pub relative_mode: bool,
}

impl Default for FdConfig {
    fn default() -> Self {
        FdConfig {
            base_step: f64::EPSILON.powf(1.0 / 3.0),
            richardson_levels: 1,
            relative_mode: true,
        }
    }
}

impl FdConfig {
    pub fn with_step(base_step: f64) -> FdConfig {
        FdConfig {
            base_step,
            ..FdConfig::default()
        }
    }

    pub fn step_at(&self, point: f64) -> f64 {
        assert!(self.base_step > 0.0, "FD step must be positive");
        if self.relative_mode {
            self.base_step * (1.0 + point.abs())
        } else {
            self.base_step
        }
    }
}

/// A derivative estimate together with its extrapolation-based error bar.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdEstimate {
    pub value: f64,
    pub error_estimate: f64,
}

/// Central-difference derivative of a scalar map, with Richardson
/// extrapolation over halved steps.
pub fn fd_derivative<F>(func: F, point: f64, cfg: &FdConfig) -> Result<FdEstimate, FdError>
where
    F: Fn(f64) -> Option<f64>,
{
    let h0 = cfg.step_at(point);
    let rows = cfg.richardson_levels.max(1) + 1;
    let mut diag = Vec::with_capacity(rows);
    let mut prev_row: Vec<f64> = Vec::new();
    for k in 0..rows {
        let h = h0 / (1 << k) as f64;
        let fp = func(point + h).ok_or(FdError::EvaluationFailed { point: point + h })?;
        let fm = func(point - h).ok_or(FdError::EvaluationFailed { point: point - h })?;
        let mut row = vec![(fp - fm) / (2.0 * h)];
        for m in 1..=k {
            let pow = (4.0f64).powi(m as i32);
            let refined = (pow * row[m - 1] - prev_row[m - 1]) / (pow - 1.0);
            row.push(refined);
        }
        diag.push(*row.last().unwrap());
        prev_row = row;
    }
    let (value, reference) = if cfg.richardson_levels == 0 {
        // Plain central difference; the halved-step row only feeds the
        // error estimate.
        (diag[0], diag[1])
    } else {
        (diag[cfg.richardson_levels], diag[cfg.richardson_levels - 1])
    };
    Ok(FdEstimate {
        value,
        error_estimate: (value - reference).abs(),
    })
}

/// Finite-difference gradients of the first hitting time and state.
#[derive(Debug, Clone)]
pub struct FdHitGradients {
    pub dt_dx0: Vec<f64>,
    pub dt_dt0: f64,
    pub dx_dx0: Mat,
    pub dx_dt0: Vec<f64>,
}

/// Differentiate `(t̂, x̂)` by re-solving the hit problem at perturbed
/// initial conditions (plain central differences at the configured step).
#[allow(clippy::too_many_arguments)]
pub fn fd_hit_gradients(
    sys: &SystemDef,
    ls: &LevelSetDef,
    x0: &[f64],
    t0: f64,
    t_max: f64,
    int_opts: &IntegrateOpts,
    ev_opts: &EventOpts,
    cfg: &FdConfig,
) -> Result<FdHitGradients, FdError> {
    let n = sys.dimension();
    let solve = |x: &[f64], t: f64, what: &str, delta: f64| -> Result<(f64, Vec<f64>), FdError> {
        match detect_hit(sys, ls, x, t, t_max, int_opts, ev_opts) {
            Ok(Some(hit)) => Ok((hit.t_hat, hit.x_hat)),
            Ok(None) => Err(FdError::HitLostUnderPerturbation {
                what: what.to_string(),
                delta,
            }),
            Err(e) => Err(e.into()),
        }
    };

    let mut dt_dx0 = vec![0.0; n];
    let mut dx_dx0 = Mat::zeros(n, n);
    for j in 0..n {
        let h = cfg.step_at(x0[j]);
        let mut xp = x0.to_vec();
        xp[j] = x0[j] + h;
        let (tp, xhp) = solve(&xp, t0, &format!("x0[{j}]"), h)?;
        xp[j] = x0[j] - h;
        let (tm, xhm) = solve(&xp, t0, &format!("x0[{j}]"), -h)?;
        dt_dx0[j] = (tp - tm) / (2.0 * h);
        for i in 0..n {
            dx_dx0[(i, j)] = (xhp[i] - xhm[i]) / (2.0 * h);
        }
    }

    let h = cfg.step_at(t0);
    let (tp, xhp) = solve(x0, t0 + h, "t0", h)?;
    let (tm, xhm) = solve(x0, t0 - h, "t0", -h)?;
    let dt_dt0 = (tp - tm) / (2.0 * h);
    let dx_dt0 = (0..n).map(|i| (xhp[i] - xhm[i]) / (2.0 * h)).collect();

    Ok(FdHitGradients {
        dt_dx0,
        dt_dt0,
        dx_dx0,
        dx_dt0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sin_derivative_at_zero() {
        let cfg = FdConfig {
            base_step: 1e-5,
            richardson_levels: 1,
            relative_mode: false,
        };
        let est = fd_derivative(|x| Some(x.sin()), 0.0, &cfg).unwrap();
        assert!((est.value - 1.0).abs() < 1e-9, "value = {}", est.value);
    }

    #[test]
    fn square_derivative() {
        let est = fd_derivative(|x| Some(x * x), 3.0, &FdConfig::default()).unwrap();
        assert!((est.value - 6.0).abs() < 1e-8);
    }

    #[test]
    fn abs_at_zero_reports_zero() {
        // Central difference of an even function vanishes; the estimate
        // cannot flag the kink, only the caller can.
        let est = fd_derivative(|x| Some(x.abs()), 0.0, &FdConfig::default()).unwrap();
        assert_eq!(est.value, 0.0);
    }

    #[test]
    fn evaluation_failure_propagates() {
        let cfg = FdConfig::default();
        let out = fd_derivative(|x| if x > 0.0 { Some(x) } else { None }, 0.0, &cfg);
        assert!(matches!(out, Err(FdError::EvaluationFailed { .. })));
    }

    /// Two Richardson levels beat the plain central difference on sin at 0
    /// by at least 100x at the same base step.
    #[test]
    fn richardson_improves_accuracy() {
        let f = |x: f64| Some(x.sin());
        let base = FdConfig {
            base_step: 1e-3,
            richardson_levels: 0,
            relative_mode: false,
        };
        let lvl2 = FdConfig {
            richardson_levels: 2,
            ..base
        };
        let err0 = (fd_derivative(f, 0.0, &base).unwrap().value - 1.0).abs();
        let err2 = (fd_derivative(f, 0.0, &lvl2).unwrap().value - 1.0).abs();
        assert!(
            err0 >= 100.0 * err2.max(1e-18),
            "level 0 err {err0:e}, level 2 err {err2:e}"
        );
    }

    /// Halving the step keeps the result within the reported error bar on
    /// smooth functions.
    #[test]
    fn step_sensitivity_within_estimate() {
        for (f, x) in [
            ((|x: f64| Some(x.exp())) as fn(f64) -> Option<f64>, 0.3),
            (|x: f64| Some((2.0 * x).sin()), 0.7),
        ] {
            let c1 = FdConfig {
                base_step: 1e-4,
                richardson_levels: 1,
                relative_mode: false,
            };
            let c2 = FdConfig {
                base_step: 5e-5,
                ..c1
            };
            let e1 = fd_derivative(f, x, &c1).unwrap();
            let e2 = fd_derivative(f, x, &c2).unwrap();
            let budget = e1.error_estimate.max(e2.error_estimate).max(1e-12);
            assert!(
                (e1.value - e2.value).abs() <= budget,
                "{} vs {} (budget {budget:e})",
                e1.value,
                e2.value
            );
        }
    }
}
