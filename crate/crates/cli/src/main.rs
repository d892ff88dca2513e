use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lendsim::engine::{self, ReplayError, SimError};
use lendsim::feasibility::{self, Thresholds};
use lendsim::scenario::{self, Scenario, ScenarioError};
use lendsim::FixedDec;
use serde_json::json;

#[derive(Parser)]
#[command(name = "lendsim", version, about = "Deterministic lending-market attack simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and validate a scenario without running it.
    Validate(ScenarioArgs),
    /// Run a scenario and write its metrics, action log and summary.
    Run {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Run one variant per value of a parameter path.
    Sweep {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Dotted parameter path, e.g. `agents.dao.params.delay_seconds`.
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Rank assets of a market snapshot by attack feasibility.
    Analyze {
        /// CSV with asset,deposited_value,available_value,market_cap,status.
        #[arg(required_unless_present = "bundled")]
        snapshot: Option<PathBuf>,
        /// Use the built-in synthetic snapshot.
        #[arg(long, conflicts_with = "snapshot")]
        bundled: bool,
        #[arg(long, default_value = "0.15")]
        available_threshold: String,
        #[arg(long, default_value = "0.30")]
        deposit_threshold: String,
        /// Print JSON instead of a table.
        #[arg(long)]
        json: bool,
    },
    /// Run a scenario twice and compare the outputs bit for bit.
    ReplayCheck(ScenarioArgs),
}

#[derive(Args)]
struct ScenarioArgs {
    /// Scenario file.
    #[arg(required_unless_present = "bundled")]
    path: Option<PathBuf>,
    /// Built-in scenario: squeeze_nov22, loop_attack_ren, oracle_delay, governance_sweep.
    #[arg(long, conflicts_with = "path")]
    bundled: Option<String>,
    /// `path=value` edit applied before validation. Repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Args)]
struct OutArgs {
    #[arg(long, env = "LENDSIM_OUT", default_value = "out")]
    out: PathBuf,
}

/// Error kind with its exit code.
struct Failure {
    code: u8,
    kind: &'static str,
    message: String,
    extra: serde_json::Value,
}

impl Failure {
    fn config(message: impl ToString) -> Self {
        Self { code: 1, kind: "config", message: message.to_string(), extra: json!({}) }
    }

    fn runtime(message: impl ToString) -> Self {
        Self { code: 2, kind: "runtime", message: message.to_string(), extra: json!({}) }
    }
}

impl From<ScenarioError> for Failure {
    fn from(e: ScenarioError) -> Self {
        let extra = match &e {
            ScenarioError::Invalid { path, .. } | ScenarioError::Override { path, .. } => json!({ "path": path }),
            _ => json!({}),
        };
        Self { extra, ..Self::config(e) }
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Config(e) => e.into(),
            SimError::Setup(_) => Self::config(e),
            SimError::Runtime { tick, .. } => Self { extra: json!({ "tick": tick }), ..Self::runtime(e) },
        }
    }
}

impl From<ReplayError> for Failure {
    fn from(e: ReplayError) -> Self {
        match e {
            ReplayError::Sim(e) => e.into(),
            ReplayError::Diverged(ref d) => Self {
                code: 3,
                kind: "determinism",
                message: e.to_string(),
                extra: json!({ "tick": d.tick, "column": d.column }),
            },
        }
    }
}

/// Writes to stdout; a closed pipe is not an error.
macro_rules! emit {
    ($($t:tt)*) => {{
        let _ = writeln!(std::io::stdout().lock(), $($t)*);
    }};
}

fn source(args: &ScenarioArgs) -> Result<String, Failure> {
    match (&args.bundled, &args.path) {
        (Some(name), _) => Ok(scenario::bundled_source(name)?.to_owned()),
        (None, Some(path)) => {
            fs::read_to_string(path).map_err(|e| Failure::config(format!("{}: {e}", path.display())))
        }
        (None, None) => Err(Failure::config("no scenario given")),
    }
}

fn overrides(args: &ScenarioArgs) -> Result<Vec<(String, String)>, Failure> {
    args.overrides.iter().map(|o| scenario::parse_override(o).map_err(Failure::from)).collect()
}

fn load(args: &ScenarioArgs) -> Result<Scenario, Failure> {
    Ok(Scenario::from_toml_with_overrides(&source(args)?, &overrides(args)?)?)
}

fn write(path: &Path, body: &str) -> Result<(), Failure> {
    fs::write(path, body).map_err(|e| Failure::runtime(format!("{}: {e}", path.display())))
}

fn threshold(flag: &str, text: &str) -> Result<FixedDec, Failure> {
    text.parse().map_err(|e| Failure::config(format!("--{flag} {text:?}: {e}")))
}

fn execute(command: Command) -> Result<(), Failure> {
    match command {
        Command::Validate(args) => {
            let s = load(&args)?;
            emit!("ok {} {}", s.name, s.hash);
        }
        Command::Run { scenario, out } => {
            let s = load(&scenario)?;
            let output = engine::run(&s)?;
            let files = output.write_to(&out.out).map_err(|e| Failure::runtime(format!("{}: {e}", out.out.display())))?;
            for f in files {
                emit!("{}", f.display());
            }
        }
        Command::Sweep { scenario, param, values, out } => {
            let base = load(&scenario)?;
            let points = engine::sweep(&source(&scenario)?, &overrides(&scenario)?, &param, &values)?;
            fs::create_dir_all(&out.out).map_err(|e| Failure::runtime(format!("{}: {e}", out.out.display())))?;
            let stem = format!("{}-{}", base.name, base.short_hash());
            let json_path = out.out.join(format!("{stem}.sweep.json"));
            let body = serde_json::to_string_pretty(&json!({ "param": param, "points": points }))
                .map_err(Failure::runtime)?;
            write(&json_path, &body)?;
            let mut table = String::from("value,peak_bad_debt,final_bad_debt,min_tracked_health_factor,total_liquidated_value\n");
            for p in &points {
                let s = &p.summary;
                table.push_str(&format!(
                    "{},{},{},{},{}\n",
                    p.value, s.peak_bad_debt, s.final_bad_debt, s.min_tracked_health_factor, s.total_liquidated_value
                ));
            }
            let csv_path = out.out.join(format!("{stem}.sweep.csv"));
            write(&csv_path, &table)?;
            emit!("{}", table.trim_end());
            emit!("{}", json_path.display());
            emit!("{}", csv_path.display());
        }
        Command::Analyze { snapshot, bundled, available_threshold, deposit_threshold, json } => {
            let text = match (bundled, snapshot) {
                (true, _) => feasibility::BUNDLED_SNAPSHOT.to_owned(),
                (false, Some(path)) => {
                    fs::read_to_string(&path).map_err(|e| Failure::config(format!("{}: {e}", path.display())))?
                }
                (false, None) => return Err(Failure::config("no snapshot given")),
            };
            let thresholds = Thresholds {
                available: threshold("available-threshold", &available_threshold)?,
                deposited: threshold("deposit-threshold", &deposit_threshold)?,
            };
            let rows = feasibility::parse_snapshot_csv(&text)
                .and_then(|s| feasibility::rank(&s, &thresholds))
                .map_err(Failure::config)?;
            if json {
                emit!("{}", serde_json::to_string_pretty(&rows).map_err(Failure::runtime)?);
            } else {
                emit!("{}", feasibility::render_table(&rows).trim_end());
            }
        }
        Command::ReplayCheck(args) => {
            let s = load(&args)?;
            let out = engine::replay_check(&s)?;
            emit!("ok {} {} ticks identical", s.name, out.metrics.rows.len());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    // Usage errors are configuration errors; exit code 2 is reserved.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let mut report = json!({ "error": f.kind, "message": f.message.trim_end() });
            if let (Some(obj), Some(extra)) = (report.as_object_mut(), f.extra.as_object()) {
                obj.extend(extra.clone());
            }
            eprintln!("{report}");
            ExitCode::from(f.code)
        }
    }
}
