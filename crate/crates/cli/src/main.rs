use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use barrier_critic::sim::log::{write_csv_file, write_json_log, write_metrics_file};
use barrier_critic::sim::{preset, run_from, scenario_presets, Fault, RunMetrics, RunOutcome, ScenarioConfig};
use barrier_critic::verify::{run_checks, VerifyOptions};
use barrier_critic::Error;
use clap::{Args, Parser, Subcommand, ValueEnum};

const EXIT_CONFIG: u8 = 2;
const EXIT_UNSAFE: u8 = 3;
const EXIT_VERIFY: u8 = 4;

#[derive(Parser)]
#[command(name = "barrier-critic", version, about = "Safety-aware critic learning scenarios")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a preset or a config file and write its trajectory and metrics.
    Run(RunArgs),
    /// List the compiled-in presets.
    List,
    /// Run the verification checks.
    Verify(VerifyArgs),
    /// Run one scenario per value of a numeric config field.
    Sweep(SweepArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum Inject {
    FlipSafeguardSign,
}

impl From<Inject> for Fault {
    fn from(value: Inject) -> Self {
        match value {
            Inject::FlipSafeguardSign => Fault::FlipSafeguardSign,
        }
    }
}

#[derive(Args)]
struct ScenarioArgs {
    /// Preset name (same as --preset).
    name: Option<String>,
    #[arg(long, conflicts_with = "name")]
    preset: Option<String>,
    /// TOML or JSON scenario file.
    #[arg(long, conflicts_with_all = ["name", "preset"])]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    horizon: Option<f64>,
    /// Override a numeric field, e.g. `--set multiplier.lambda_const=0.5`.
    #[arg(long = "set", value_name = "PATH=VALUE")]
    overrides: Vec<String>,
    /// Deliberately inject a fault (mutation testing).
    #[arg(long, value_enum)]
    inject: Option<Inject>,
}

#[derive(Args)]
struct OutputArgs {
    /// Output directory.
    #[arg(long, env = "BARRIER_CRITIC_OUT", default_value = ".")]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct VerifyArgs {
    /// Run only checks whose name or group matches.
    #[arg(long)]
    only: Vec<String>,
    #[arg(long, value_enum)]
    inject: Option<Inject>,
    /// Print the report as JSON.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[command(flatten)]
    output: OutputArgs,
    /// Dotted config path, e.g. `multiplier.lambda_const` or `critic.seed`.
    #[arg(long)]
    param: String,
    /// Comma-separated numeric values.
    #[arg(long, value_delimiter = ',', num_args = 0..)]
    values: Vec<String>,
}

/// Failure with an exit code attached.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl Failure {
    fn config(error: impl Into<anyhow::Error>) -> Self {
        Self {
            code: EXIT_CONFIG,
            error: error.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Config(_) | Error::Contract(_) | Error::Init(_) => EXIT_CONFIG,
            _ => EXIT_UNSAFE,
        };
        Self { code, error: e.into() }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        Self { code: 1, error }
    }
}

fn load_scenario(args: &ScenarioArgs) -> Result<ScenarioConfig, Failure> {
    let mut cfg = match (&args.config, args.preset.as_ref().or(args.name.as_ref())) {
        (Some(path), _) => ScenarioConfig::load(path)?,
        (None, Some(name)) => preset(name)?,
        (None, None) => {
            return Err(Failure::config(anyhow::anyhow!(
                "give a preset name or --config <path>"
            )))
        }
    };
    if let Some(seed) = args.seed {
        cfg.critic.seed = seed;
    }
    if let Some(dt) = args.dt {
        cfg.dt = dt;
    }
    if let Some(horizon) = args.horizon {
        cfg.horizon = horizon;
    }
    for item in &args.overrides {
        let (path, value) = item
            .split_once('=')
            .ok_or_else(|| Failure::config(anyhow::anyhow!("--set expects PATH=VALUE, got '{item}'")))?;
        let value: f64 = value
            .trim()
            .parse()
            .map_err(|_| Failure::config(anyhow::anyhow!("--set {path}: '{value}' is not a number")))?;
        cfg.set_number(path.trim(), value)?;
    }
    if let Some(fault) = args.inject {
        cfg.fault = Some(fault.into());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn summary_line(m: &RunMetrics) -> String {
    let status = match &m.outcome {
        RunOutcome::Completed => "completed".to_string(),
        RunOutcome::Unsafe { t, .. } => format!("unsafe at t={t:.3}"),
        RunOutcome::Aborted { t, detail, .. } => format!("aborted at t={t:.3}: {detail}"),
    };
    format!(
        "{}: {status} min_margin={:.4e} min_h={:.4e} final_|x|={:.4e} total_cost={:.4e} trapped={}",
        m.name, m.min_margin, m.min_primitive_margin, m.final_state_norm, m.total_cost, m.trapped
    )
}

fn is_safe_run(m: &RunMetrics) -> bool {
    m.outcome.is_completed() && m.min_primitive_margin >= 0.0
}

fn write_outputs(
    out: &Path,
    stem: &str,
    result: &barrier_critic::sim::RunResult,
    format: Format,
) -> anyhow::Result<()> {
    match format {
        Format::Csv => write_csv_file(&result.log, &out.join(format!("{stem}_trajectory.csv")))?,
        Format::Json => {
            let file = fs::File::create(out.join(format!("{stem}_trajectory.json")))?;
            write_json_log(&result.log, std::io::BufWriter::new(file))?;
        }
    }
    write_metrics_file(&result.metrics, &out.join(format!("{stem}_metrics.json")))?;
    Ok(())
}

fn ensure_dir(out: &Path) -> Result<(), Failure> {
    fs::create_dir_all(out)
        .with_context(|| format!("cannot create output directory {}", out.display()))
        .map_err(Failure::config)
}

fn cmd_run(args: RunArgs) -> Result<(), Failure> {
    let cfg = load_scenario(&args.scenario)?;
    ensure_dir(&args.output.out)?;
    let starts = cfg.starts();
    let mut all_safe = true;
    for (i, x0) in starts.iter().enumerate() {
        let result = run_from(&cfg, x0)?;
        let stem = if starts.len() > 1 {
            format!("{}_start{i}", cfg.name)
        } else {
            cfg.name.clone()
        };
        write_outputs(&args.output.out, &stem, &result, args.output.format)?;
        println!("{}", summary_line(&result.metrics));
        all_safe &= is_safe_run(&result.metrics);
    }
    if all_safe {
        Ok(())
    } else {
        Err(Failure {
            code: EXIT_UNSAFE,
            error: anyhow::anyhow!("run left the safe set or aborted"),
        })
    }
}

fn cmd_list() {
    for p in scenario_presets() {
        println!("{:<14} {}", p.name, p.description);
    }
}

fn cmd_verify(args: VerifyArgs) -> Result<(), Failure> {
    let opts = VerifyOptions {
        only: args.only,
        fault: args.inject.map(Fault::from),
    };
    let report = run_checks(&opts);
    if report.checks.is_empty() {
        return Err(Failure::config(anyhow::anyhow!("no checks match the --only filter")));
    }
    if args.json {
        println!(
            "{}",
            serde_json::to_string_pretty(&report).map_err(anyhow::Error::from)?
        );
    } else {
        for c in &report.checks {
            println!("{} {:<28} {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
        }
    }
    let failed: Vec<&str> = report
        .checks
        .iter()
        .filter(|c| !c.passed)
        .map(|c| c.name.as_str())
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure {
            code: EXIT_VERIFY,
            error: anyhow::anyhow!("failed checks: {}", failed.join(", ")),
        })
    }
}

fn cmd_sweep(args: SweepArgs) -> Result<(), Failure> {
    if args.values.is_empty() {
        return Err(Failure::config(anyhow::anyhow!("--values needs at least one value")));
    }
    let values: Vec<f64> = args
        .values
        .iter()
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| Failure::config(anyhow::anyhow!("sweep value '{v}' is not numeric")))
        })
        .collect::<Result<_, _>>()?;
    let base = load_scenario(&args.scenario)?;
    ensure_dir(&args.output.out)?;

    let mut table = csv::Writer::from_path(args.output.out.join(format!("{}_sweep.csv", base.name)))
        .map_err(anyhow::Error::from)?;
    table
        .write_record([
            "param",
            "value",
            "status",
            "min_margin",
            "min_primitive_margin",
            "final_state_norm",
            "total_cost",
            "trapped",
        ])
        .map_err(anyhow::Error::from)?;
    for value in values {
        let mut cfg = base.clone();
        cfg.set_number(&args.param, value)?;
        cfg.name = format!("{}_{}_{}", base.name, args.param.replace('.', "-"), value);
        cfg.validate()?;
        let result = run_from(&cfg, &cfg.x0.clone())?;
        write_outputs(&args.output.out, &cfg.name, &result, args.output.format)?;
        let m = &result.metrics;
        println!("{}", summary_line(m));
        let status = match m.outcome {
            RunOutcome::Completed => "completed",
            RunOutcome::Unsafe { .. } => "unsafe",
            RunOutcome::Aborted { .. } => "aborted",
        };
        table
            .write_record([
                args.param.clone(),
                value.to_string(),
                status.to_string(),
                format!("{:e}", m.min_margin),
                format!("{:e}", m.min_primitive_margin),
                format!("{:e}", m.final_state_norm),
                format!("{:e}", m.total_cost),
                m.trapped.to_string(),
            ])
            .map_err(anyhow::Error::from)?;
    }
    table.flush().map_err(anyhow::Error::from)?;
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("error")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::List => {
            cmd_list();
            Ok(())
        }
        Command::Verify(a) => cmd_verify(a),
        Command::Sweep(a) => cmd_sweep(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            log::debug!("exit code {}", f.code);
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
