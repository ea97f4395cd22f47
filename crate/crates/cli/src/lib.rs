//! Batch front end: JSON scenarios in, CSV/JSON reports and a summary out.
//!
//! Exit codes: 0 success; 2 configuration or schema error (nothing is
//! written); 3 per-sample computation errors (rows carry error markers);
//! 4 a residual exceeded the `--assert` threshold.

mod runner;
mod scenario;
mod table;

pub use scenario::{parse_scenario, ConfigError, Scenario};
pub use table::{Cell, Table};

use clap::{Args, Parser, Subcommand};
use runner::RunOutput;
use std::ffi::OsString;
use std::path::PathBuf;

#[derive(Debug, Parser)]
#[command(
    name = "flowsens",
    version,
    about = "Flow sensitivities, hitting-time gradients, and HJB verification for bang-bang problems"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Flow sensitivities and identity residuals per initial condition.
    Flow(RunArgs),
    /// First hitting time/state, gradients, and transport residuals.
    Hit(RunArgs),
    /// Verification report for a bang-bang control-affine problem.
    #[command(name = "verify-hjb")]
    VerifyHjb(RunArgs),
    /// Run the scenario nested under `"kind": "sweep"`.
    Sweep(RunArgs),
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Scenario JSON file.
    #[arg(long)]
    config: PathBuf,
    /// CSV output path (overrides the scenario's `output.csv`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write a JSON mirror next to the CSV.
    #[arg(long)]
    json: bool,
    /// Exit 4 if any residual column exceeds this threshold.
    #[arg(long)]
    assert: Option<f64>,
    /// Override the integrator's relative tolerance.
    #[arg(long)]
    rtol: Option<f64>,
    /// Override the integrator's absolute tolerance.
    #[arg(long)]
    atol: Option<f64>,
    /// Seed override for `random` sampling specs.
    #[arg(long)]
    seed: Option<u64>,
}

impl Cmd {
    fn args(&self) -> &RunArgs {
        match self {
            Cmd::Flow(a) | Cmd::Hit(a) | Cmd::VerifyHjb(a) | Cmd::Sweep(a) => a,
        }
    }

    fn expected_kind(&self) -> &'static str {
        match self {
            Cmd::Flow(_) => "flow",
            Cmd::Hit(_) => "hit",
            Cmd::VerifyHjb(_) => "verify-hjb",
            Cmd::Sweep(_) => "sweep",
        }
    }
}

/// Run the CLI with explicit arguments and return the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            // Help/version are not errors.
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli.cmd) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn execute(cmd: &Cmd) -> Result<i32, ConfigError> {
    let args = cmd.args();
    let text = std::fs::read_to_string(&args.config)?;
    let mut scenario = parse_scenario(&text)?;
    if scenario.kind() != cmd.expected_kind() {
        return Err(ConfigError::Invalid(format!(
            "subcommand `{}` cannot run a `{}` scenario",
            cmd.expected_kind(),
            scenario.kind()
        )));
    }
    if let Some(seed) = args.seed {
        scenario.override_seed(seed);
    }

    let inner = match &scenario {
        Scenario::Sweep(inner) => inner.as_ref(),
        other => other,
    };
    let output = match inner {
        Scenario::Flow(s) => runner::run_flow(s, &s.tolerances.to_opts(args.rtol, args.atol))?,
        Scenario::Hit(s) => runner::run_hit(s, &s.tolerances.to_opts(args.rtol, args.atol))?,
        Scenario::VerifyHjb(s) => {
            runner::run_verify(s, &s.tolerances.to_opts(args.rtol, args.atol))?
        }
        Scenario::Sweep(_) => unreachable!("sweep unwrapped above"),
    };

    // Paths resolved before writing anything.
    let csv_path = args
        .out
        .clone()
        .or_else(|| inner.output().csv.as_ref().map(PathBuf::from));
    let json_path = if args.json {
        Some(match (&csv_path, &inner.output().json) {
            (_, Some(p)) => PathBuf::from(p),
            (Some(csv), None) => csv.with_extension("json"),
            (None, None) => {
                return Err(ConfigError::Invalid(
                    "--json needs an output path (give --out or output.csv/output.json)".into(),
                ))
            }
        })
    } else {
        inner.output().json.as_ref().map(PathBuf::from)
    };

    for path in [&csv_path, &json_path].into_iter().flatten() {
        if path == &args.config {
            return Err(ConfigError::Invalid(format!(
                "output path {} would overwrite the scenario file",
                path.display()
            )));
        }
    }
    if let Some(path) = &csv_path {
        output.table.write_csv(path)?;
    }
    if let Some(path) = &json_path {
        output.table.write_json(path, &output.summary)?;
    }

    print_summary(&output, csv_path.as_deref(), json_path.as_deref());
    for err in output.sample_errors.iter().take(8) {
        eprintln!("computation error: {err}");
    }
    if output.sample_errors.len() > 8 {
        eprintln!("... and {} more", output.sample_errors.len() - 8);
    }

    if !output.sample_errors.is_empty() {
        return Ok(3);
    }
    if let Some(tol) = args.assert {
        for column in &output.residual_columns {
            if let Some(max) = output.table.max_in(column) {
                if max > tol {
                    eprintln!("assert failed: max {column} = {max:.3e} > {tol:.3e}");
                    return Ok(4);
                }
            }
        }
    }
    Ok(0)
}

fn print_summary(
    output: &RunOutput,
    csv: Option<&std::path::Path>,
    json: Option<&std::path::Path>,
) {
    let width = output
        .summary
        .iter()
        .map(|(k, _)| k.len())
        .max()
        .unwrap_or(0)
        .max(4);
    for (k, v) in &output.summary {
        println!("{k:width$}  {v}");
    }
    if let Some(path) = csv {
        println!("{:width$}  {}", "csv", path.display());
    }
    if let Some(path) = json {
        println!("{:width$}  {}", "json", path.display());
    }
}
