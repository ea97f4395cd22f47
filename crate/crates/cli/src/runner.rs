//! Execute scenarios into result tables.
//!
//! Rows are ordered by input index regardless of worker scheduling, so
//! identical scenario files produce byte-identical CSV.

use crate::scenario::{ConfigError, FlowScenario, HitScenario, VerifyScenario};
use crate::table::{Cell, Table};
use flowsens::hitting::{detect_hit, hit_pde_residuals, EventOpts};
use flowsens::hjb_verify::{verify, VerifyConfig};
use flowsens::integrate::IntegrateOpts;
use flowsens::flow_sens::{flow_sensitivities, identity_residuals};
use rayon::prelude::*;

/// A finished run: the table, summary key/values, and error bookkeeping.
pub struct RunOutput {
    pub table: Table,
    pub summary: Vec<(String, String)>,
    pub sample_errors: Vec<String>,
    /// Columns compared against `--assert`.
    pub residual_columns: Vec<&'static str>,
}

fn nan_row(width: usize) -> Vec<Cell> {
    (0..width).map(|_| Cell::Float(f64::NAN)).collect()
}

pub fn run_flow(
    sc: &FlowScenario,
    opts: &IntegrateOpts,
) -> Result<RunOutput, ConfigError> {
    let (sys, _) = sc.system.build()?;
    let n = sys.dimension();
    if !(sc.t.is_finite() && sc.t0.is_finite()) || sc.t <= sc.t0 {
        return Err(ConfigError::Invalid(format!(
            "flow scenario needs t > t0 (got t0={}, t={})",
            sc.t0, sc.t
        )));
    }
    let ics = sc.initial_conditions.expand(n)?;

    let mut columns: Vec<String> = vec!["index".into()];
    for i in 1..=n {
        columns.push(format!("x0_{i}"));
    }
    columns.push("t0".into());
    columns.push("t".into());
    for i in 1..=n {
        columns.push(format!("x_{i}"));
    }
    for i in 1..=n {
        for j in 1..=n {
            columns.push(format!("m_{i}{j}"));
        }
    }
    for i in 1..=n {
        columns.push(format!("ddt0_{i}"));
    }
    columns.push("r_prop".into());
    columns.push("r_cor".into());
    columns.push("error".into());
    let col_refs: Vec<&str> = columns.iter().map(String::as_str).collect();
    let mut table = Table::new(&col_refs);

    let results: Vec<(Vec<Cell>, Option<String>)> = ics
        .par_iter()
        .enumerate()
        .map(|(idx, x0)| {
            let mut row = vec![Cell::Int(idx as i64)];
            row.extend(x0.iter().map(|&v| Cell::Float(v)));
            row.push(Cell::Float(sc.t0));
            row.push(Cell::Float(sc.t));
            let body = n + n * n + n + 2;
            match flow_sensitivities(&sys, x0, sc.t0, sc.t, opts)
                .and_then(|sens| Ok((sens, identity_residuals(&sys, x0, sc.t0, sc.t, opts)?)))
            {
                Ok((sens, (r_prop, r_cor))) => {
                    row.extend(sens.x_t.iter().map(|&v| Cell::Float(v)));
                    row.extend(sens.m.data().iter().map(|&v| Cell::Float(v)));
                    row.extend(sens.d_dt0.iter().map(|&v| Cell::Float(v)));
                    row.push(Cell::Float(r_prop));
                    row.push(Cell::Float(r_cor));
                    row.push(Cell::Text(String::new()));
                    (row, None)
                }
                Err(e) => {
                    row.extend(nan_row(body));
                    row.push(Cell::Text(e.to_string()));
                    (row, Some(format!("sample {idx}: {e}")))
                }
            }
        })
        .collect();

    let mut sample_errors = Vec::new();
    for (row, err) in results {
        table.push(row);
        if let Some(e) = err {
            sample_errors.push(e);
        }
    }

    let summary = vec![
        ("kind".to_string(), "flow".to_string()),
        ("samples".to_string(), table.rows.len().to_string()),
        ("errors".to_string(), sample_errors.len().to_string()),
        (
            "max_r_prop".to_string(),
            format!("{:.3e}", table.max_in("r_prop").unwrap_or(f64::NAN)),
        ),
        (
            "max_r_cor".to_string(),
            format!("{:.3e}", table.max_in("r_cor").unwrap_or(f64::NAN)),
        ),
    ];
    Ok(RunOutput {
        table,
        summary,
        sample_errors,
        residual_columns: vec!["r_prop", "r_cor"],
    })
}

pub fn run_hit(sc: &HitScenario, opts: &IntegrateOpts) -> Result<RunOutput, ConfigError> {
    let (sys, ls) = sc.system.build()?;
    let ls = ls.ok_or_else(|| {
        ConfigError::Invalid("hit scenario requires a level set (`level_set` or a builtin that bundles one)".into())
    })?;
    let n = sys.dimension();
    let ics = sc.initial_conditions.expand(n)?;
    let ev_opts = EventOpts {
        strict_graze: sc.strict_graze,
        ..EventOpts::default()
    };

    let mut columns: Vec<String> = vec!["index".into()];
    for i in 1..=n {
        columns.push(format!("x0_{i}"));
    }
    columns.push("t0".into());
    columns.push("hit_found".into());
    columns.push("t_hat".into());
    for i in 1..=n {
        columns.push(format!("x_hat_{i}"));
    }
    columns.push("denom".into());
    columns.push("transversal".into());
    columns.push("dt_dt0".into());
    for i in 1..=n {
        columns.push(format!("dt_dx0_{i}"));
    }
    for i in 1..=n {
        columns.push(format!("dx_dt0_{i}"));
    }
    for i in 1..=n {
        for j in 1..=n {
            columns.push(format!("dx_dx0_{i}{j}"));
        }
    }
    columns.push("r_t".into());
    columns.push("r_x".into());
    columns.push("error".into());
    let col_refs: Vec<&str> = columns.iter().map(String::as_str).collect();
    let mut table = Table::new(&col_refs);

    // 1 (hit_found) is emitted separately; the NaN body spans the rest.
    let body = 1 + n + 2 + 1 + n + n + n * n + 2;

    let results: Vec<(Vec<Cell>, Option<String>)> = ics
        .par_iter()
        .enumerate()
        .map(|(idx, x0)| {
            let mut row = vec![Cell::Int(idx as i64)];
            row.extend(x0.iter().map(|&v| Cell::Float(v)));
            row.push(Cell::Float(sc.t0));
            match detect_hit(&sys, &ls, x0, sc.t0, sc.t_max, opts, &ev_opts) {
                Ok(None) => {
                    row.push(Cell::Int(0));
                    row.extend(nan_row(body));
                    row.push(Cell::Text(String::new()));
                    (row, None)
                }
                Ok(Some(hit)) => {
                    row.push(Cell::Int(1));
                    row.push(Cell::Float(hit.t_hat));
                    row.extend(hit.x_hat.iter().map(|&v| Cell::Float(v)));
                    row.push(Cell::Float(hit.denom));
                    row.push(Cell::bool(hit.transversal));
                    let mut err = None;
                    match &hit.grad {
                        Some(grad) => {
                            row.push(Cell::Float(grad.dt_dt0));
                            row.extend(grad.dt_dx0.iter().map(|&v| Cell::Float(v)));
                            row.extend(grad.dx_dt0.iter().map(|&v| Cell::Float(v)));
                            row.extend(grad.dx_dx0.data().iter().map(|&v| Cell::Float(v)));
                            match hit_pde_residuals(&sys, &hit, x0) {
                                Ok((r_t, r_x)) => {
                                    row.push(Cell::Float(r_t));
                                    row.push(Cell::Float(r_x));
                                    row.push(Cell::Text(String::new()));
                                }
                                Err(e) => {
                                    row.push(Cell::Float(f64::NAN));
                                    row.push(Cell::Float(f64::NAN));
                                    row.push(Cell::Text(e.to_string()));
                                    err = Some(format!("sample {idx}: {e}"));
                                }
                            }
                        }
                        None => {
                            row.extend(nan_row(1 + n + n + n * n + 2));
                            let msg = format!(
                                "non-transversal hit at ({})",
                                hit.x_hat
                                    .iter()
                                    .map(|v| format!("{v:.6}"))
                                    .collect::<Vec<_>>()
                                    .join(", ")
                            );
                            row.push(Cell::Text(msg.clone()));
                            err = Some(format!("sample {idx}: {msg}"));
                        }
                    }
                    (row, err)
                }
                Err(e) => {
                    row.push(Cell::Int(0));
                    row.extend(nan_row(body));
                    row.push(Cell::Text(e.to_string()));
                    (row, Some(format!("sample {idx}: {e}")))
                }
            }
        })
        .collect();

    let mut sample_errors = Vec::new();
    for (row, err) in results {
        table.push(row);
        if let Some(e) = err {
            sample_errors.push(e);
        }
    }

    let hits = table
        .rows
        .iter()
        .filter(|r| matches!(r[n + 2], Cell::Int(1)))
        .count();
    let summary = vec![
        ("kind".to_string(), "hit".to_string()),
        ("samples".to_string(), table.rows.len().to_string()),
        ("hits".to_string(), hits.to_string()),
        ("errors".to_string(), sample_errors.len().to_string()),
        (
            "max_r_t".to_string(),
            format!("{:.3e}", table.max_in("r_t").unwrap_or(f64::NAN)),
        ),
        (
            "max_r_x".to_string(),
            format!("{:.3e}", table.max_in("r_x").unwrap_or(f64::NAN)),
        ),
    ];
    Ok(RunOutput {
        table,
        summary,
        sample_errors,
        residual_columns: vec!["r_t", "r_x"],
    })
}

pub fn run_verify(sc: &VerifyScenario, opts: &IntegrateOpts) -> Result<RunOutput, ConfigError> {
    let problem = sc.problem.build()?;
    let samples = sc.samples.expand();
    if samples.is_empty() {
        return Err(ConfigError::Invalid("verify-hjb needs at least one sample".into()));
    }
    let mut cfg = VerifyConfig::for_problem(&problem, &samples)
        .map_err(|e| ConfigError::Invalid(e.to_string()))?;
    cfg.int_opts = *opts;
    if let Some(dp) = &sc.dp {
        let mut controls = cfg.controls;
        dp.merge_into(&mut cfg.dp_grid, &mut controls);
        cfg.controls = controls;
    }
    if let Some(h) = sc.dpp_h {
        cfg.dpp_h = h;
    }

    let report = verify(&problem, &samples, &cfg).map_err(|e| ConfigError::Invalid(e.to_string()))?;

    let mut table = Table::new(&[
        "index",
        "x0",
        "t0",
        "region",
        "hj_residual_minus",
        "hj_residual_plus",
        "switch_residual_t",
        "switch_residual_x",
        "lhs_minus",
        "lhs_plus",
        "hjb_pass",
        "dpp_residual",
        "w_value",
        "dp_value",
        "w_minus_dp",
        "error",
    ]);
    let mut sample_errors = Vec::new();
    let mut all_pass = true;
    for (idx, rec) in report.samples.iter().enumerate() {
        if let Some(e) = &rec.error {
            sample_errors.push(format!("sample {idx}: {e}"));
        } else if !rec.hjb_pass {
            all_pass = false;
        }
        table.push(vec![
            Cell::Int(idx as i64),
            Cell::Float(rec.x0),
            Cell::Float(rec.t0),
            Cell::Int(rec.region as i64),
            Cell::Float(rec.hj_residual_minus),
            Cell::Float(rec.hj_residual_plus),
            Cell::Float(rec.switch_pde_residual_t),
            Cell::Float(rec.switch_pde_residual_x),
            Cell::Float(rec.lhs_minus),
            Cell::Float(rec.lhs_plus),
            Cell::bool(rec.hjb_pass),
            Cell::Float(rec.dpp_residual),
            Cell::Float(rec.w_value),
            Cell::Float(rec.dp_value),
            Cell::Float(rec.w_minus_dp),
            Cell::Text(rec.error.clone().unwrap_or_default()),
        ]);
    }

    let summary = vec![
        ("kind".to_string(), "verify-hjb".to_string()),
        ("samples".to_string(), table.rows.len().to_string()),
        ("errors".to_string(), sample_errors.len().to_string()),
        ("hjb_all_pass".to_string(), all_pass.to_string()),
        ("eps_grid".to_string(), format!("{:.3e}", report.eps_grid)),
        (
            "max_hj_residual".to_string(),
            format!(
                "{:.3e}",
                table
                    .max_in("hj_residual_minus")
                    .unwrap_or(f64::NAN)
                    .max(table.max_in("hj_residual_plus").unwrap_or(f64::NAN))
            ),
        ),
    ];
    Ok(RunOutput {
        table,
        summary,
        sample_errors,
        residual_columns: vec![
            "hj_residual_minus",
            "hj_residual_plus",
            "switch_residual_t",
            "switch_residual_x",
        ],
    })
}
