//! JSON scenario schema and construction of concrete runs.
//!
//! Scenarios are schema-validated before any computation: unknown keys are
//! rejected, and system/problem definitions are parsed and checked up
//! front so configuration errors never produce partial output files.

use flowsens::expr::ParseError;
use flowsens::hjb_verify::DpGridSpec;
use flowsens::integrate::IntegrateOpts;
use flowsens::system::{
    build_system, builtin, BuiltinDef, ControlAffineProblem, LevelSetDef, SystemDef, SystemError,
};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

#[derive(Debug)]
pub enum ConfigError {
    Io(std::io::Error),
    Json(serde_json::Error),
    Invalid(String),
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ConfigError::Io(e) => write!(f, "cannot read config: {e}"),
            ConfigError::Json(e) => write!(f, "config schema error: {e}"),
            ConfigError::Invalid(msg) => write!(f, "invalid config: {msg}"),
        }
    }
}

impl From<std::io::Error> for ConfigError {
    fn from(e: std::io::Error) -> Self {
        ConfigError::Io(e)
    }
}

impl From<serde_json::Error> for ConfigError {
    fn from(e: serde_json::Error) -> Self {
        ConfigError::Json(e)
    }
}

impl From<SystemError> for ConfigError {
    fn from(e: SystemError) -> Self {
        ConfigError::Invalid(e.to_string())
    }
}

impl From<ParseError> for ConfigError {
    fn from(e: ParseError) -> Self {
        ConfigError::Invalid(e.to_string())
    }
}

#[derive(Debug, Deserialize)]
struct KindProbe {
    kind: String,
}

#[derive(Debug)]
pub enum Scenario {
    Flow(FlowScenario),
    Hit(HitScenario),
    VerifyHjb(VerifyScenario),
    Sweep(Box<Scenario>),
}

impl Scenario {
    pub fn kind(&self) -> &'static str {
        match self {
            Scenario::Flow(_) => "flow",
            Scenario::Hit(_) => "hit",
            Scenario::VerifyHjb(_) => "verify-hjb",
            Scenario::Sweep(_) => "sweep",
        }
    }

    pub fn output(&self) -> &OutputSpec {
        match self {
            Scenario::Flow(s) => &s.output,
            Scenario::Hit(s) => &s.output,
            Scenario::VerifyHjb(s) => &s.output,
            Scenario::Sweep(inner) => inner.output(),
        }
    }

    /// Replace the seed of every `random` sampling spec (CLI `--seed`).
    pub fn override_seed(&mut self, seed: u64) {
        match self {
            Scenario::Flow(s) => s.initial_conditions.override_seed(seed),
            Scenario::Hit(s) => s.initial_conditions.override_seed(seed),
            Scenario::VerifyHjb(s) => s.samples.override_seed(seed),
            Scenario::Sweep(inner) => inner.override_seed(seed),
        }
    }
}

pub fn parse_scenario(text: &str) -> Result<Scenario, ConfigError> {
    let probe: KindProbe = serde_json::from_str(text)?;
    match probe.kind.as_str() {
        "flow" => Ok(Scenario::Flow(serde_json::from_str(text)?)),
        "hit" => Ok(Scenario::Hit(serde_json::from_str(text)?)),
        "verify-hjb" => Ok(Scenario::VerifyHjb(serde_json::from_str(text)?)),
        "sweep" => {
            let sweep: SweepScenario = serde_json::from_str(text)?;
            let inner = parse_scenario(&sweep.scenario.to_string())?;
            if matches!(inner, Scenario::Sweep(_)) {
                return Err(ConfigError::Invalid("sweep scenarios cannot nest".into()));
            }
            Ok(Scenario::Sweep(Box::new(inner)))
        }
        other => Err(ConfigError::Invalid(format!(
            "unknown scenario kind `{other}` (expected flow, hit, verify-hjb, or sweep)"
        ))),
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepScenario {
    #[allow(dead_code)]
    kind: String,
    scenario: serde_json::Value,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowScenario {
    #[allow(dead_code)]
    kind: String,
    pub system: SystemSpec,
    pub initial_conditions: IcSpec,
    pub t0: f64,
    pub t: f64,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub output: OutputSpec,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HitScenario {
    #[allow(dead_code)]
    kind: String,
    pub system: SystemSpec,
    pub initial_conditions: IcSpec,
    pub t0: f64,
    pub t_max: f64,
    #[serde(default)]
    pub strict_graze: bool,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub output: OutputSpec,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyScenario {
    #[allow(dead_code)]
    kind: String,
    pub problem: ProblemSpec,
    pub samples: SampleSpec,
    #[serde(default)]
    pub dp: Option<DpSpec>,
    #[serde(default)]
    pub dpp_h: Option<f64>,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub output: OutputSpec,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    pub rtol: Option<f64>,
    pub atol: Option<f64>,
}

impl Tolerances {
    pub fn to_opts(&self, rtol_flag: Option<f64>, atol_flag: Option<f64>) -> IntegrateOpts {
        let mut opts = IntegrateOpts::default();
        if let Some(rtol) = rtol_flag.or(self.rtol) {
            opts.rtol = rtol;
        }
        if let Some(atol) = atol_flag.or(self.atol) {
            opts.atol = atol;
        }
        opts
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    pub csv: Option<String>,
    pub json: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    #[serde(default)]
    builtin: Option<BuiltinSpec>,
    #[serde(default)]
    field: Option<Vec<String>>,
    #[serde(default)]
    level_set: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BuiltinSpec {
    name: String,
    #[serde(default)]
    params: Vec<f64>,
}

impl SystemSpec {
    pub fn build(&self) -> Result<(SystemDef, Option<LevelSetDef>), ConfigError> {
        let (sys, builtin_ls) = match (&self.builtin, &self.field) {
            (Some(b), None) => match builtin(&b.name, &b.params)? {
                BuiltinDef::System { sys, level_set } => (sys, level_set),
                BuiltinDef::Problem(_) => {
                    return Err(ConfigError::Invalid(format!(
                        "builtin `{}` is a control problem; use a verify-hjb scenario",
                        b.name
                    )))
                }
            },
            (None, Some(field)) => {
                let refs: Vec<&str> = field.iter().map(String::as_str).collect();
                let (sys, _) = build_system(&refs, None)?;
                (sys, None)
            }
            _ => {
                return Err(ConfigError::Invalid(
                    "system must define exactly one of `builtin` or `field`".into(),
                ))
            }
        };
        let level_set = match &self.level_set {
            Some(text) => Some(LevelSetDef::new(flowsens::expr::parse(
                text,
                sys.dimension(),
            )?)),
            None => builtin_ls,
        };
        Ok((sys, level_set))
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    #[serde(default)]
    builtin: Option<BuiltinSpec>,
    #[serde(default)]
    f: Option<String>,
    #[serde(default)]
    g: Option<String>,
    #[serde(default)]
    l_x: Option<String>,
    #[serde(default)]
    l_u: Option<String>,
    #[serde(default)]
    horizon: Option<f64>,
    #[serde(default)]
    level_set: Option<String>,
}

impl ProblemSpec {
    pub fn build(&self) -> Result<ControlAffineProblem, ConfigError> {
        if let Some(b) = &self.builtin {
            if self.f.is_some()
                || self.g.is_some()
                || self.l_x.is_some()
                || self.l_u.is_some()
                || self.horizon.is_some()
                || self.level_set.is_some()
            {
                return Err(ConfigError::Invalid(
                    "problem must be either a builtin or fully spelled out, not both".into(),
                ));
            }
            return match builtin(&b.name, &b.params)? {
                BuiltinDef::Problem(p) => Ok(p),
                BuiltinDef::System { .. } => Err(ConfigError::Invalid(format!(
                    "builtin `{}` is a plain system, not a control problem",
                    b.name
                ))),
            };
        }
        let missing = |what: &str| ConfigError::Invalid(format!("problem is missing `{what}`"));
        Ok(ControlAffineProblem::from_strs(
            self.f.as_deref().ok_or_else(|| missing("f"))?,
            self.g.as_deref().ok_or_else(|| missing("g"))?,
            self.l_x.as_deref().ok_or_else(|| missing("l_x"))?,
            self.l_u.as_deref().ok_or_else(|| missing("l_u"))?,
            self.horizon.ok_or_else(|| missing("horizon"))?,
            self.level_set.as_deref().ok_or_else(|| missing("level_set"))?,
        )?)
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case")]
pub enum IcSpec {
    Single(Vec<f64>),
    List(Vec<Vec<f64>>),
    Grid {
        min: Vec<f64>,
        max: Vec<f64>,
        counts: Vec<usize>,
    },
    Random {
        count: usize,
        min: Vec<f64>,
        max: Vec<f64>,
        #[serde(default)]
        seed: u64,
    },
}

impl IcSpec {
    fn override_seed(&mut self, new_seed: u64) {
        if let IcSpec::Random { seed, .. } = self {
            *seed = new_seed;
        }
    }

    /// Expand into concrete initial states of dimension `dim`.
    pub fn expand(&self, dim: usize) -> Result<Vec<Vec<f64>>, ConfigError> {
        let check = |v: &[f64]| -> Result<(), ConfigError> {
            if v.len() != dim {
                return Err(ConfigError::Invalid(format!(
                    "initial condition has {} entries, system dimension is {dim}",
                    v.len()
                )));
            }
            Ok(())
        };
        match self {
            IcSpec::Single(x) => {
                check(x)?;
                Ok(vec![x.clone()])
            }
            IcSpec::List(list) => {
                for x in list {
                    check(x)?;
                }
                Ok(list.clone())
            }
            IcSpec::Grid { min, max, counts } => {
                check(min)?;
                check(max)?;
                if counts.len() != dim || counts.contains(&0) {
                    return Err(ConfigError::Invalid(
                        "grid counts must have one positive entry per dimension".into(),
                    ));
                }
                let total: usize = counts.iter().product();
                let mut out = Vec::with_capacity(total);
                let mut idx = vec![0usize; dim];
                loop {
                    let point: Vec<f64> = (0..dim)
                        .map(|d| {
                            if counts[d] == 1 {
                                min[d]
                            } else {
                                min[d]
                                    + (max[d] - min[d]) * idx[d] as f64 / (counts[d] - 1) as f64
                            }
                        })
                        .collect();
                    out.push(point);
                    // Odometer increment, last axis fastest.
                    let mut d = dim;
                    loop {
                        if d == 0 {
                            return Ok(out);
                        }
                        d -= 1;
                        idx[d] += 1;
                        if idx[d] < counts[d] {
                            break;
                        }
                        idx[d] = 0;
                    }
                }
            }
            IcSpec::Random {
                count,
                min,
                max,
                seed,
            } => {
                check(min)?;
                check(max)?;
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                Ok((0..*count)
                    .map(|_| {
                        (0..dim)
                            .map(|d| {
                                if max[d] > min[d] {
                                    rng.random_range(min[d]..max[d])
                                } else {
                                    min[d]
                                }
                            })
                            .collect()
                    })
                    .collect())
            }
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisSpec {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl AxisSpec {
    fn values(&self) -> Vec<f64> {
        if self.count <= 1 {
            return vec![self.min];
        }
        (0..self.count)
            .map(|i| self.min + (self.max - self.min) * i as f64 / (self.count - 1) as f64)
            .collect()
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case")]
pub enum SampleSpec {
    List(Vec<[f64; 2]>),
    Grid {
        x: AxisSpec,
        t: AxisSpec,
    },
    Random {
        count: usize,
        x: [f64; 2],
        t: [f64; 2],
        #[serde(default)]
        seed: u64,
    },
}

impl SampleSpec {
    fn override_seed(&mut self, new_seed: u64) {
        if let SampleSpec::Random { seed, .. } = self {
            *seed = new_seed;
        }
    }

    pub fn expand(&self) -> Vec<(f64, f64)> {
        match self {
            SampleSpec::List(list) => list.iter().map(|&[x, t]| (x, t)).collect(),
            SampleSpec::Grid { x, t } => {
                let xs = x.values();
                let ts = t.values();
                let mut out = Vec::with_capacity(xs.len() * ts.len());
                for &xv in &xs {
                    for &tv in &ts {
                        out.push((xv, tv));
                    }
                }
                out
            }
            SampleSpec::Random { count, x, t, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                (0..*count)
                    .map(|_| {
                        (
                            rng.random_range(x[0]..x[1]),
                            rng.random_range(t[0]..t[1]),
                        )
                    })
                    .collect()
            }
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DpSpec {
    pub x_min: Option<f64>,
    pub x_max: Option<f64>,
    pub nx: Option<usize>,
    pub nt: Option<usize>,
    pub controls: Option<usize>,
}

impl DpSpec {
    /// Merge explicit settings over a derived default grid.
    pub fn merge_into(&self, grid: &mut DpGridSpec, controls: &mut usize) {
        if let Some(v) = self.x_min {
            grid.x_min = v;
        }
        if let Some(v) = self.x_max {
            grid.x_max = v;
        }
        if let Some(v) = self.nx {
            grid.nx = v;
        }
        if let Some(v) = self.nt {
            grid.nt = v;
        }
        if let Some(v) = self.controls {
            *controls = v;
        }
    }
}
