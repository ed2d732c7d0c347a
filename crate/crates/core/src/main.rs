use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use evr::harness::{emit, sweep, HarnessError, ScenarioConfig, ScenarioKind};

#[derive(Parser, Debug)]
#[command(name = "evr", version, about = "Embodied visuomotor experiments in simulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Uncalibrated touching.
    Touch(RunArgs),
    /// Opening clearance decisions.
    Clear(RunArgs),
    /// Gap jumping.
    Jump(RunArgs),
    /// Whatever scenario the config names.
    Sweep(RunArgs),
    /// Print the default configuration.
    Defaults {
        #[arg(long, value_enum, default_value = "touch")]
        scenario: Kind,
    },
}

#[derive(clap::ValueEnum, Clone, Copy, Debug)]
enum Kind {
    Touch,
    Clear,
    Jump,
}

impl From<Kind> for ScenarioKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::Touch => ScenarioKind::Touch,
            Kind::Clear => ScenarioKind::Clear,
            Kind::Jump => ScenarioKind::Jump,
        }
    }
}

#[derive(Args, Debug)]
struct RunArgs {
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Trials per sweep cell.
    #[arg(long)]
    trials: Option<usize>,
    /// Disable pixel quantization.
    #[arg(long)]
    no_quantize: bool,
    /// Worker threads (0 = all cores, 1 = serial).
    #[arg(long)]
    parallel: Option<usize>,
    /// Exit with status 3 if any trial fails.
    #[arg(long)]
    strict: bool,
}

const EXIT_CONFIG: u8 = 2;
const EXIT_TRIAL_FAILURE: u8 = 3;

fn load(args: &RunArgs, kind: Option<ScenarioKind>) -> Result<ScenarioConfig, HarnessError> {
    let mut cfg = match &args.config {
        Some(path) => ScenarioConfig::load(path)?,
        None => ScenarioConfig::default(),
    };
    if let Some(kind) = kind {
        cfg.scenario = kind;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &args.out {
        cfg.output = out.clone();
    }
    if let Some(trials) = args.trials {
        cfg.trials = trials;
    }
    if args.no_quantize {
        cfg.quantize = false;
    }
    if let Some(p) = args.parallel {
        cfg.parallel = p;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(args: &RunArgs, kind: Option<ScenarioKind>) -> ExitCode {
    let cfg = match load(args, kind) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let report = match sweep(&cfg) {
        Ok(r) => r,
        Err(e @ HarnessError::Config(_)) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    };
    if let Err(e) = emit(&report, &cfg.output) {
        eprintln!("error: {e}");
        return ExitCode::FAILURE;
    }
    let summary = report.summary();
    println!(
        "{}: {} trials, {} ok, {} skipped, {} failed; written to {}",
        summary.scenario,
        summary.records,
        summary.ok,
        summary.skipped,
        summary.failed,
        cfg.output.display()
    );
    if args.strict && summary.failed > 0 {
        return ExitCode::from(EXIT_TRIAL_FAILURE);
    }
    ExitCode::SUCCESS
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match &cli.command {
        Command::Touch(a) => run(a, Some(ScenarioKind::Touch)),
        Command::Clear(a) => run(a, Some(ScenarioKind::Clear)),
        Command::Jump(a) => run(a, Some(ScenarioKind::Jump)),
        Command::Sweep(a) => run(a, None),
        Command::Defaults { scenario } => {
            let cfg = ScenarioConfig { scenario: (*scenario).into(), ..Default::default() };
            print!("{}", cfg.to_toml());
            ExitCode::SUCCESS
        }
    }
}
