//! Flow sensitivities with respect to initial state and initial time.
//!
//! For an autonomous field the initial-time sensitivity needs no extra
//! integration: `∂x/∂t0 = -F(x(t))`. The state sensitivity `M = D_x0 x`
//! comes from the variational system, so the residual identities below
//! cross-check two independent computations.

use crate::expr::EvalError;
use crate::integrate::{
    integrate_dense, integrate_variational, variational_parts, IntegrateError, IntegrateOpts,
};
use crate::mat::{inf_norm, Mat};
use crate::system::SystemDef;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FlowSensError {
    #[error("x0 is an equilibrium (|F(x0)| = {f_abs:e}); use equilibrium_sens")]
    EquilibriumPoint { f_abs: f64 },
    #[error("x0 is not an equilibrium (|F(x0)| = {f_abs:e})")]
    NotEquilibrium { f_abs: f64 },
    #[error(transparent)]
    Integrate(#[from] IntegrateError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Flow value, state-sensitivity matrix, and initial-time sensitivity.
#[derive(Debug, Clone)]
pub struct FlowSens {
    /// `x(t; x0, t0)`
    pub x_t: Vec<f64>,
    /// `D_x0 x(t; x0, t0)`
    pub m: Mat,
    /// `∂x/∂t0 (t; x0, t0) = -F(x(t))`
    pub d_dt0: Vec<f64>,
}

/// Equilibrium threshold: `|F(x0)|` at or below this is treated as an
/// equilibrium of the dynamics.
pub fn equilibrium_eps(x0: &[f64]) -> f64 {
    1e-12 * (1.0 + inf_norm(x0))
}

/// All flow sensitivities at time `t >= t0`.
pub fn flow_sensitivities(
    sys: &SystemDef,
    x0: &[f64],
    t0: f64,
    t: f64,
    opts: &IntegrateOpts,
) -> Result<FlowSens, FlowSensError> {
    let n = sys.dimension();
    if t == t0 {
        let f = sys.eval_f(x0)?;
        return Ok(FlowSens {
            x_t: x0.to_vec(),
            m: Mat::identity(n),
            d_dt0: f.iter().map(|v| -v).collect(),
        });
    }
    let sol = integrate_variational(sys, x0, t0, t, opts)?;
    let (x_t, m) = variational_parts(n, sol.end_state());
    let f_t = sys.eval_f(&x_t)?;
    Ok(FlowSens {
        x_t,
        m,
        d_dt0: f_t.iter().map(|v| -v).collect(),
    })
}

/// One-dimensional sensitivity ratio `F(x(t)) / F(x0)`, valid away from
/// equilibria.
pub fn sens_1d_ratio(
    sys: &SystemDef,
    x0: f64,
    t0: f64,
    t: f64,
    opts: &IntegrateOpts,
) -> Result<f64, FlowSensError> {
    assert_eq!(sys.dimension(), 1, "sens_1d_ratio requires a 1D system");
    let f0 = sys.eval_f(&[x0])?[0];
    if f0.abs() <= equilibrium_eps(&[x0]) {
        return Err(FlowSensError::EquilibriumPoint { f_abs: f0.abs() });
    }
    if t == t0 {
        return Ok(1.0);
    }
    let sol = integrate_dense(sys, &[x0], t0, t, opts)?;
    let f_t = sys.eval_f(sol.end_state())?[0];
    Ok(f_t / f0)
}

/// Sensitivity at a 1D equilibrium: `exp(F'(x0) (t - t0))`.
pub fn equilibrium_sens(
    sys: &SystemDef,
    x0: f64,
    t0: f64,
    t: f64,
) -> Result<f64, FlowSensError> {
    assert_eq!(sys.dimension(), 1, "equilibrium_sens requires a 1D system");
    let f0 = sys.eval_f(&[x0])?[0];
    if f0.abs() > equilibrium_eps(&[x0]) {
        return Err(FlowSensError::NotEquilibrium { f_abs: f0.abs() });
    }
    let df = sys.jacobian(&[x0])?[(0, 0)];
    Ok((df * (t - t0)).exp())
}

/// Residuals of the two flow-sensitivity identities:
/// `r_prop = ||∂x/∂t0 + M F(x0)||_inf` and `r_cor = ||M F(x0) - F(x(t))||_inf`.
pub fn identity_residuals(
    sys: &SystemDef,
    x0: &[f64],
    t0: f64,
    t: f64,
    opts: &IntegrateOpts,
) -> Result<(f64, f64), FlowSensError> {
    let sens = flow_sensitivities(sys, x0, t0, t, opts)?;
    let f0 = sys.eval_f(x0)?;
    let f_t = sys.eval_f(&sens.x_t)?;
    let mf0 = sens.m.mul_vec(&f0);
    let r_prop: Vec<f64> = mf0
        .iter()
        .zip(&sens.d_dt0)
        .map(|(a, b)| a + b)
        .collect();
    let r_cor: Vec<f64> = mf0.iter().zip(&f_t).map(|(a, b)| a - b).collect();
    Ok((inf_norm(&r_prop), inf_norm(&r_cor)))
}
