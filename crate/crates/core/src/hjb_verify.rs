//! Verification scheme for 1D bang-bang control-affine problems.
//!
//! The conjectured feedback is `u = +1` on `G > 0` and `u = -1` on
//! `G <= 0`, with at most one switch at the first hit of the switching
//! locus. The candidate value `w` is assembled from the bang-arc costs
//! `J+` and `J-`; its optimality is probed pointwise through the two
//! Hamilton-Jacobi-Bellman inequalities and cross-checked against a
//! semi-Lagrangian dynamic-programming oracle.

use crate::expr::{EvalError, ExprAst};
use crate::hitting::{detect_hit, EventOpts, HitRecord, HittingError};
use crate::integrate::{integrate_rhs, DenseSolution, IntegrateError, IntegrateOpts, OdeRhs};
use crate::system::{ControlAffineProblem, SystemDef};
use rayon::prelude::*;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum HjbError {
    #[error("trajectory from ({x0}, {t0}) in G+ misses the switching locus before the horizon")]
    NoSwitchBeforeHorizon { x0: f64, t0: f64 },
    #[error("switch from ({x0}, {t0}) is non-transversal (denominator {denom:e})")]
    NonTransversalSwitch { x0: f64, t0: f64, denom: f64 },
    #[error("initial condition lies on the switching locus")]
    StartsOnSet,
    #[error("operation requires a point in {expected}")]
    WrongRegion { expected: &'static str },
    #[error("initial time {t0} must not exceed the horizon {horizon}")]
    BadStartTime { t0: f64, horizon: f64 },
    #[error("segment times must satisfy td <= tf <= T (td={td}, tf={tf})")]
    BadSegmentSpan { td: f64, tf: f64 },
    #[error("DP grid violates the CFL bound: dt={dt:e} > dx/max|f|+|g| = {bound:e}")]
    GridTooCoarse { dt: f64, bound: f64 },
    #[error(transparent)]
    Hitting(HittingError),
    #[error(transparent)]
    Integrate(#[from] IntegrateError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

impl From<HittingError> for HjbError {
    fn from(e: HittingError) -> Self {
        match e {
            HittingError::StartsOnSet => HjbError::StartsOnSet,
            other => HjbError::Hitting(other),
        }
    }
}

/// Closed-loop trajectory of the conjectured feedback.
#[derive(Debug, Clone)]
pub struct FeedbackTrajectory {
    /// `(u, segment)` where each segment's state is `[x, accumulated cost]`.
    pub segments: Vec<(f64, DenseSolution)>,
    pub switch: Option<HitRecord>,
    pub total_cost: f64,
}

/// A bang-arc cost and its partial derivatives.
///
/// `dj_dxd` comes from the running-cost sensitivity integrated alongside
/// the variational factor; `dj_dtf = l(x(tf))` and `dj_dtd = -l(x(tf))`
/// use the autonomy of the closed-loop flow (shifting `td` slides the
/// whole arc), so `dj_dtd` stays independent of `dj_dxd` and the
/// Hamilton-Jacobi residual below is a genuine cross-check.
#[derive(Debug, Clone, Copy)]
pub struct CostSegment {
    pub j: f64,
    pub dj_dxd: f64,
    pub dj_dtd: f64,
    pub dj_dtf: f64,
}

/// Closed-loop arc with accumulated running cost: state `[x, j]`.
struct CostRhs {
    field: SystemDef,
    cost: ExprAst,
}

impl OdeRhs for CostRhs {
    fn dim(&self) -> usize {
        2
    }

    fn eval(&self, _t: f64, y: &[f64], dydt: &mut [f64]) -> Result<(), EvalError> {
        let x = &y[..1];
        self.field.eval_f_into(x, &mut dydt[..1])?;
        dydt[1] = self.cost.eval(x, 0.0)?;
        Ok(())
    }
}

/// Arc with variational factor and cost sensitivity: state `[x, m, j, s]`
/// where `m' = F'(x) m` and `s' = l'(x) m`.
struct CostSensRhs {
    field: SystemDef,
    cost: ExprAst,
}

impl OdeRhs for CostSensRhs {
    fn dim(&self) -> usize {
        4
    }

    fn eval(&self, _t: f64, y: &[f64], dydt: &mut [f64]) -> Result<(), EvalError> {
        let x = &y[..1];
        let m = y[1];
        let fg = self.field.field_exprs()[0].eval_with_gradient(x, 0.0)?;
        let lg = self.cost.eval_with_gradient(x, 0.0)?;
        dydt[0] = fg.value;
        dydt[1] = fg.d_dx[0] * m;
        dydt[2] = lg.value;
        dydt[3] = lg.d_dx[0] * m;
        Ok(())
    }
}

/// Simulate the feedback from `(x0, t0)` to the horizon.
pub fn simulate_feedback(
    p: &ControlAffineProblem,
    x0: f64,
    t0: f64,
    int_opts: &IntegrateOpts,
    ev_opts: &EventOpts,
) -> Result<FeedbackTrajectory, HjbError> {
    let t_final = p.horizon();
    if !t0.is_finite() || t0 >= t_final {
        return Err(HjbError::BadStartTime {
            t0,
            horizon: t_final,
        });
    }
    let g0 = p.level_set().eval(&[x0], t0)?;
    if g0 == 0.0 {
        return Err(HjbError::StartsOnSet);
    }

    let leg = |u: f64, x: f64, j: f64, ta: f64, tb: f64| -> Result<DenseSolution, HjbError> {
        let rhs = CostRhs {
            field: p.bang_field(u),
            cost: p.bang_cost(u),
        };
        Ok(integrate_rhs(&rhs, &[x, j], ta, tb, int_opts)?)
    };

    if g0 < 0.0 {
        let seg = leg(-1.0, x0, 0.0, t0, t_final)?;
        let total_cost = seg.end_state()[1];
        return Ok(FeedbackTrajectory {
            segments: vec![(-1.0, seg)],
            switch: None,
            total_cost,
        });
    }

    let field_plus = p.bang_field(1.0);
    let hit = detect_hit(
        &field_plus,
        p.level_set(),
        &[x0],
        t0,
        t_final,
        int_opts,
        ev_opts,
    )?
    .ok_or(HjbError::NoSwitchBeforeHorizon { x0, t0 })?;
    if !hit.transversal {
        return Err(HjbError::NonTransversalSwitch {
            x0,
            t0,
            denom: hit.denom,
        });
    }
    if hit.t_hat >= t_final - 1e-12 * (1.0 + t_final.abs()) {
        // The locus is only reached at the horizon itself.
        return Err(HjbError::NoSwitchBeforeHorizon { x0, t0 });
    }

    let seg1 = leg(1.0, x0, 0.0, t0, hit.t_hat)?;
    let cost_at_switch = seg1.end_state()[1];
    let seg2 = leg(-1.0, hit.x_hat[0], cost_at_switch, hit.t_hat, t_final)?;
    let total_cost = seg2.end_state()[1];
    Ok(FeedbackTrajectory {
        segments: vec![(1.0, seg1), (-1.0, seg2)],
        switch: Some(hit),
        total_cost,
    })
}

/// Cost of one bang arc and its partials with respect to the start state,
/// start time, and final time.
pub fn cost_segment(
    p: &ControlAffineProblem,
    u_sign: f64,
    xd: f64,
    td: f64,
    tf: f64,
    int_opts: &IntegrateOpts,
) -> Result<CostSegment, HjbError> {
    if !(td.is_finite() && tf.is_finite()) || td > tf || tf > p.horizon() {
        return Err(HjbError::BadSegmentSpan { td, tf });
    }
    let running = p.bang_running_cost(u_sign, xd)?;
    if td == tf {
        return Ok(CostSegment {
            j: 0.0,
            dj_dxd: 0.0,
            dj_dtd: -running,
            dj_dtf: running,
        });
    }
    let rhs = CostSensRhs {
        field: p.bang_field(u_sign),
        cost: p.bang_cost(u_sign),
    };
    let sol = integrate_rhs(&rhs, &[xd, 1.0, 0.0, 0.0], td, tf, int_opts)?;
    let end = sol.end_state();
    let l_end = p.bang_running_cost(u_sign, end[0])?;
    Ok(CostSegment {
        j: end[2],
        dj_dxd: end[3],
        dj_dtd: -l_end,
        dj_dtf: l_end,
    })
}

/// Candidate value of the feedback policy: `J-` to the horizon on
/// `G <= 0`, otherwise `J+` to the switch plus `J-` afterwards.
pub fn candidate_value(
    p: &ControlAffineProblem,
    x0: f64,
    t0: f64,
    int_opts: &IntegrateOpts,
    ev_opts: &EventOpts,
) -> Result<f64, HjbError> {
    let t_final = p.horizon();
    if t0 > t_final {
        return Err(HjbError::BadStartTime {
            t0,
            horizon: t_final,
        });
    }
    if t0 == t_final {
        return Ok(0.0);
    }
    let g0 = p.level_set().eval(&[x0], t0)?;
    if g0 <= 0.0 {
        return Ok(cost_segment(p, -1.0, x0, t0, t_final, int_opts)?.j);
    }
    let hit = switch_hit(p, x0, t0, int_opts, ev_opts)?;
    let plus = cost_segment(p, 1.0, x0, t0, hit.t_hat, int_opts)?;
    let minus = cost_segment(p, -1.0, hit.x_hat[0], hit.t_hat, t_final, int_opts)?;
    Ok(plus.j + minus.j)
}

/// First transversal hit of the switching locus under `u = +1`.
fn switch_hit(
    p: &ControlAffineProblem,
    x0: f64,
    t0: f64,
    int_opts: &IntegrateOpts,
    ev_opts: &EventOpts,
) -> Result<HitRecord, HjbError> {
    let field_plus = p.bang_field(1.0);
    let hit = detect_hit(
        &field_plus,
        p.level_set(),
        &[x0],
        t0,
        p.horizon(),
        int_opts,
        ev_opts,
    )?
    .ok_or(HjbError::NoSwitchBeforeHorizon { x0, t0 })?;
    if !hit.transversal {
        return Err(HjbError::NonTransversalSwitch {
            x0,
            t0,
            denom: hit.denom,
        });
    }
    Ok(hit)
}

/// Residuals of the two bang-arc Hamilton-Jacobi equations at `(xd, td)`
/// with final time `tf`.
pub fn hj_residuals(
    p: &ControlAffineProblem,
    xd: f64,
    td: f64,
    tf: f64,
    int_opts: &IntegrateOpts,
) -> Result<(f64, f64), HjbError> {
    if !(td.is_finite() && tf.is_finite()) || td >= tf {
        return Err(HjbError::BadSegmentSpan { td, tf });
    }
    let mut out = [0.0; 2];
    for (slot, u) in out.iter_mut().zip([-1.0, 1.0]) {
        let cs = cost_segment(p, u, xd, td, tf, int_opts)?;
        let l0 = p.bang_running_cost(u, xd)?;
        let speed0 = p.bang_speed(u, xd)?;
        *slot = (-l0 - cs.dj_dtd - speed0 * cs.dj_dxd).abs();
    }
    Ok((out[0], out[1]))
}

/// Residuals of the switch-sensitivity transport relations at a `G+`
/// point: `∂t̂/∂t0 + (f+g)(x0) ∂t̂/∂x0` and the same for `x̂`.
pub fn switch_sensitivity_residuals(
    p: &ControlAffineProblem,
    x0: f64,
    t0: f64,
    int_opts: &IntegrateOpts,
    ev_opts: &EventOpts,
) -> Result<(f64, f64), HjbError> {
    let g0 = p.level_set().eval(&[x0], t0)?;
    if g0 <= 0.0 {
        return Err(HjbError::WrongRegion { expected: "G+" });
    }
    let hit = switch_hit(p, x0, t0, int_opts, ev_opts)?;
    let grad = hit.grad.as_ref().expect("transversal hit carries gradients");
    let speed0 = p.bang_speed(1.0, x0)?;
    let r_t = (grad.dt_dt0 + speed0 * grad.dt_dx0[0]).abs();
    let r_x = (grad.dx_dt0[0] + speed0 * grad.dx_dx0[(0, 0)]).abs();
    Ok((r_t, r_x))
}

/// Left-hand sides of the pointwise HJB inequalities at `(x0, t0)`.
/// Exactly one of the two sides applies (the other is NaN).
#[derive(Debug, Clone, Copy)]
pub struct PointwiseCheck {
    pub lhs_minus: f64,
    pub lhs_plus: f64,
    pub pass: bool,
}

pub fn hjb_pointwise_check(
    p: &ControlAffineProblem,
    x0: f64,
    t0: f64,
    int_opts: &IntegrateOpts,
    ev_opts: &EventOpts,
) -> Result<PointwiseCheck, HjbError> {
    let t_final = p.horizon();
    let g0 = p.level_set().eval(&[x0], t0)?;
    if g0 == 0.0 {
        return Err(HjbError::StartsOnSet);
    }
    let lu0 = p.l_u().eval(&[x0], 0.0)?;
    let gg0 = p.g().eval(&[x0], 0.0)?;
    if g0 < 0.0 {
        let cs = cost_segment(p, -1.0, x0, t0, t_final, int_opts)?;
        let lhs_minus = lu0 + gg0 * cs.dj_dxd;
        Ok(PointwiseCheck {
            lhs_minus,
            lhs_plus: f64::NAN,
            pass: lhs_minus > 0.0,
        })
    } else {
        let hit = switch_hit(p, x0, t0, int_opts, ev_opts)?;
        let grad = hit.grad.as_ref().expect("transversal hit carries gradients");
        let dt_dx0 = grad.dt_dx0[0];
        let dx_dx0 = grad.dx_dx0[(0, 0)];
        let plus = cost_segment(p, 1.0, x0, t0, hit.t_hat, int_opts)?;
        let minus = cost_segment(p, -1.0, hit.x_hat[0], hit.t_hat, t_final, int_opts)?;
        // Chain rule for dw/dx0 through (t̂, x̂).
        let bracket = plus.dj_dxd
            + plus.dj_dtf * dt_dx0
            + minus.dj_dxd * dx_dx0
            + minus.dj_dtd * dt_dx0;
        let lhs_plus = lu0 + gg0 * bracket;
        Ok(PointwiseCheck {
            lhs_minus: f64::NAN,
            lhs_plus,
            pass: lhs_plus < 0.0,
        })
    }
}

// ---------------------------------------------------------------------------
// Dynamic-programming oracle.
// ---------------------------------------------------------------------------

/// Uniform state/time grid for the oracle.
#[derive(Debug, Clone, Copy)]
pub struct DpGridSpec {
    pub x_min: f64,
    pub x_max: f64,
    /// Number of state grid points (>= 2).
    pub nx: usize,
    /// Number of time steps over `[0, T]` (>= 1).
    pub nt: usize,
}

/// Value table of the backward semi-Lagrangian recursion.
#[derive(Debug, Clone)]
pub struct DpTable {
    xs: Vec<f64>,
    ts: Vec<f64>,
    /// One value slice per time grid point, slices[k][i] = V(xs[i], ts[k]).
    slices: Vec<Vec<f64>>,
}

impl DpTable {
    /// Interpolated value at `(x, t)`; `x` is clamped to the grid and `t`
    /// to `[0, T]`.
    pub fn query(&self, x: f64, t: f64) -> f64 {
        let t = t.clamp(self.ts[0], *self.ts.last().unwrap());
        let dt = self.ts[1] - self.ts[0];
        let k = (((t - self.ts[0]) / dt).floor() as usize).min(self.ts.len() - 2);
        let w = ((t - self.ts[k]) / dt).clamp(0.0, 1.0);
        let a = interp_uniform(&self.xs, &self.slices[k], x);
        let b = interp_uniform(&self.xs, &self.slices[k + 1], x);
        a * (1.0 - w) + b * w
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn ts(&self) -> &[f64] {
        &self.ts
    }
}

fn interp_uniform(xs: &[f64], v: &[f64], x: f64) -> f64 {
    let n = xs.len();
    let dx = xs[1] - xs[0];
    let x = x.clamp(xs[0], xs[n - 1]);
    let i = (((x - xs[0]) / dx).floor() as usize).min(n - 2);
    let w = ((x - xs[i]) / dx).clamp(0.0, 1.0);
    v[i] * (1.0 - w) + v[i + 1] * w
}

/// Backward semi-Lagrangian value iteration with linear interpolation:
/// `V(x, t) = min_u [ l(x, u) dt + V(x + (f + u g)(x) dt, t + dt) ]`,
/// terminal condition `V(., T) = 0`, over `controls` equispaced values of
/// `u` in `[-1, 1]`.
pub fn dp_oracle(
    p: &ControlAffineProblem,
    grid: &DpGridSpec,
    controls: usize,
) -> Result<DpTable, HjbError> {
    assert!(grid.nx >= 2 && grid.nt >= 1 && controls >= 2);
    let t_final = p.horizon();
    let nx = grid.nx;
    let dx = (grid.x_max - grid.x_min) / (nx - 1) as f64;
    let dt = t_final / grid.nt as f64;
    let xs: Vec<f64> = (0..nx).map(|i| grid.x_min + dx * i as f64).collect();

    // Point data is autonomous: evaluate once per grid point.
    let mut fv = vec![0.0; nx];
    let mut gv = vec![0.0; nx];
    let mut lxv = vec![0.0; nx];
    let mut luv = vec![0.0; nx];
    for (i, &x) in xs.iter().enumerate() {
        fv[i] = p.f().eval(&[x], 0.0)?;
        gv[i] = p.g().eval(&[x], 0.0)?;
        lxv[i] = p.l_x().eval(&[x], 0.0)?;
        luv[i] = p.l_u().eval(&[x], 0.0)?;
    }
    let max_speed = fv
        .iter()
        .zip(&gv)
        .map(|(f, g)| f.abs() + g.abs())
        .fold(0.0f64, f64::max);
    let bound = dx / max_speed;
    if max_speed > 0.0 && dt > bound * (1.0 + 1e-12) {
        return Err(HjbError::GridTooCoarse { dt, bound });
    }

    let us: Vec<f64> = (0..controls)
        .map(|j| -1.0 + 2.0 * j as f64 / (controls - 1) as f64)
        .collect();

    let mut slices = vec![vec![0.0; nx]; grid.nt + 1];
    for k in (0..grid.nt).rev() {
        let (head, tail) = slices.split_at_mut(k + 1);
        let next = &tail[0];
        let cur = &mut head[k];
        cur.par_iter_mut().enumerate().for_each(|(i, out)| {
            let x = xs[i];
            let mut best = f64::INFINITY;
            for &u in &us {
                let step_cost = (lxv[i] + u * luv[i]) * dt;
                let x_next = x + (fv[i] + u * gv[i]) * dt;
                let v = step_cost + interp_uniform(&xs, next, x_next);
                if v < best {
                    best = v;
                }
            }
            *out = best;
        });
    }

    let ts: Vec<f64> = (0..=grid.nt).map(|k| dt * k as f64).collect();
    Ok(DpTable { xs, ts, slices })
}

// ---------------------------------------------------------------------------
// Verification report.
// ---------------------------------------------------------------------------

/// Everything `verify` computes for one sample point.
#[derive(Debug, Clone)]
pub struct SampleRecord {
    pub x0: f64,
    pub t0: f64,
    /// Sign of `G(x0, t0)`.
    pub region: i8,
    pub hj_residual_minus: f64,
    pub hj_residual_plus: f64,
    /// NaN on `G-` samples (no switch there).
    pub switch_pde_residual_t: f64,
    pub switch_pde_residual_x: f64,
    /// The applicable HJB inequality left-hand side; the other is NaN.
    pub lhs_minus: f64,
    pub lhs_plus: f64,
    pub hjb_pass: bool,
    pub dpp_residual: f64,
    pub w_value: f64,
    pub dp_value: f64,
    pub w_minus_dp: f64,
    /// Per-sample failure marker; when set, numeric fields may be NaN.
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct VerificationReport {
    pub samples: Vec<SampleRecord>,
    /// Grid-error scale estimated by Richardson halving of the DP grids.
    pub eps_grid: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct VerifyConfig {
    pub int_opts: IntegrateOpts,
    pub ev_opts: EventOpts,
    /// Step of the dynamic-programming-principle probe.
    pub dpp_h: f64,
    /// Samples closer than this to the locus are rejected (w may be
    /// nondifferentiable on S).
    pub eps_margin: f64,
    pub dp_grid: DpGridSpec,
    pub controls: usize,
}

impl VerifyConfig {
    /// Defaults sized for a sample box: the DP grid covers every state
    /// reachable from the samples at bang speeds over the horizon.
    pub fn for_problem(
        p: &ControlAffineProblem,
        samples: &[(f64, f64)],
    ) -> Result<VerifyConfig, HjbError> {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for &(x0, _) in samples {
            lo = lo.min(x0);
            hi = hi.max(x0);
        }
        if !lo.is_finite() {
            lo = -1.0;
            hi = 1.0;
        }
        // Two expansion passes: speeds sampled on the padded range.
        let t_final = p.horizon();
        let mut pad = 0.5;
        for _ in 0..2 {
            let mut max_speed = 0.0f64;
            let m = 200;
            for i in 0..=m {
                let x = lo - pad + (hi - lo + 2.0 * pad) * i as f64 / m as f64;
                let f = p.f().eval(&[x], 0.0)?;
                let g = p.g().eval(&[x], 0.0)?;
                max_speed = max_speed.max(f.abs() + g.abs());
            }
            pad = t_final * max_speed + 0.5;
        }
        let x_min = lo - pad;
        let x_max = hi + pad;
        let dx_target = 0.02;
        let nx = (((x_max - x_min) / dx_target).ceil() as usize + 1).max(2);
        let dx = (x_max - x_min) / (nx - 1) as f64;
        // CFL: dt <= dx / max speed (re-estimated on the final range).
        let mut max_speed = 0.0f64;
        let m = 400;
        for i in 0..=m {
            let x = x_min + (x_max - x_min) * i as f64 / m as f64;
            let f = p.f().eval(&[x], 0.0)?;
            let g = p.g().eval(&[x], 0.0)?;
            max_speed = max_speed.max(f.abs() + g.abs());
        }
        let nt = if max_speed > 0.0 {
            ((t_final * max_speed / dx).ceil() as usize).max(1)
        } else {
            (t_final / dx).ceil() as usize
        }
        .max(50);
        Ok(VerifyConfig {
            int_opts: IntegrateOpts::default(),
            ev_opts: EventOpts::default(),
            dpp_h: 1e-3,
            eps_margin: 1e-6,
            dp_grid: DpGridSpec {
                x_min,
                x_max,
                nx,
                nt,
            },
            controls: 41,
        })
    }
}

/// Run the full per-sample verification suite. DP tables are built at the
/// configured grid and at half resolution; their disagreement on the
/// samples sets `eps_grid`.
pub fn verify(
    p: &ControlAffineProblem,
    samples: &[(f64, f64)],
    cfg: &VerifyConfig,
) -> Result<VerificationReport, HjbError> {
    let coarse = dp_oracle(p, &cfg.dp_grid, cfg.controls)?;
    let fine_grid = DpGridSpec {
        nx: 2 * cfg.dp_grid.nx - 1,
        nt: 2 * cfg.dp_grid.nt,
        ..cfg.dp_grid
    };
    let fine = dp_oracle(p, &fine_grid, cfg.controls)?;

    let eps_grid = samples
        .par_iter()
        .map(|&(x0, t0)| (coarse.query(x0, t0) - fine.query(x0, t0)).abs())
        .reduce(|| 0.0, f64::max)
        * 3.0
        + 1e-6;

    let records: Vec<SampleRecord> = samples
        .par_iter()
        .map(|&(x0, t0)| sample_record(p, x0, t0, cfg, &fine))
        .collect();

    Ok(VerificationReport {
        samples: records,
        eps_grid,
    })
}

fn sample_record(
    p: &ControlAffineProblem,
    x0: f64,
    t0: f64,
    cfg: &VerifyConfig,
    dp: &DpTable,
) -> SampleRecord {
    let mut rec = SampleRecord {
        x0,
        t0,
        region: 0,
        hj_residual_minus: f64::NAN,
        hj_residual_plus: f64::NAN,
        switch_pde_residual_t: f64::NAN,
        switch_pde_residual_x: f64::NAN,
        lhs_minus: f64::NAN,
        lhs_plus: f64::NAN,
        hjb_pass: false,
        dpp_residual: f64::NAN,
        w_value: f64::NAN,
        dp_value: f64::NAN,
        w_minus_dp: f64::NAN,
        error: None,
    };
    match fill_sample(p, x0, t0, cfg, dp, &mut rec) {
        Ok(()) => rec,
        Err(e) => {
            rec.error = Some(e.to_string());
            rec
        }
    }
}

fn fill_sample(
    p: &ControlAffineProblem,
    x0: f64,
    t0: f64,
    cfg: &VerifyConfig,
    dp: &DpTable,
    rec: &mut SampleRecord,
) -> Result<(), HjbError> {
    let t_final = p.horizon();
    let g0 = p.level_set().eval(&[x0], t0)?;
    if g0.abs() < cfg.eps_margin {
        return Err(HjbError::StartsOnSet);
    }
    rec.region = if g0 > 0.0 { 1 } else { -1 };

    let (r_minus, r_plus) = hj_residuals(p, x0, t0, t_final, &cfg.int_opts)?;
    rec.hj_residual_minus = r_minus;
    rec.hj_residual_plus = r_plus;

    if rec.region > 0 {
        let (r_t, r_x) =
            switch_sensitivity_residuals(p, x0, t0, &cfg.int_opts, &cfg.ev_opts)?;
        rec.switch_pde_residual_t = r_t;
        rec.switch_pde_residual_x = r_x;
    }

    let check = hjb_pointwise_check(p, x0, t0, &cfg.int_opts, &cfg.ev_opts)?;
    rec.lhs_minus = check.lhs_minus;
    rec.lhs_plus = check.lhs_plus;
    rec.hjb_pass = check.pass;

    let w = candidate_value(p, x0, t0, &cfg.int_opts, &cfg.ev_opts)?;
    rec.w_value = w;
    rec.dpp_residual = dpp_residual(p, x0, t0, g0, w, cfg.dpp_h, cfg)?;
    rec.dp_value = dp.query(x0, t0);
    rec.w_minus_dp = w - rec.dp_value;
    Ok(())
}

/// Dynamic-programming-principle probe with a first-order local model:
/// one Euler state step and a rectangle-rule cost over `[t0, t0 + h]`
/// under the frozen feedback control, so the residual scales as `O(h^2)`
/// wherever `w` is smooth.
pub fn dpp_residual(
    p: &ControlAffineProblem,
    x0: f64,
    t0: f64,
    g0: f64,
    w: f64,
    h: f64,
    cfg: &VerifyConfig,
) -> Result<f64, HjbError> {
    if t0 + h > p.horizon() {
        return Ok(f64::NAN);
    }
    let u0 = if g0 > 0.0 { 1.0 } else { -1.0 };
    let speed = p.bang_speed(u0, x0)?;
    let lcost = p.bang_running_cost(u0, x0)?;
    let w_step = candidate_value(p, x0 + speed * h, t0 + h, &cfg.int_opts, &cfg.ev_opts)?;
    Ok((w - lcost * h - w_step).abs())
}
