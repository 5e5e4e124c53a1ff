use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use flushlab_cli::{parse_config, run_scenario, write_summary, ConfigError, Failure, Kind, Scenario};

/// Flushing-control experiments on the 2D channel.
#[derive(Parser)]
#[command(version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Scenario file (TOML); defaults are used when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory [default: results/<subcommand>].
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for independent runs within a scenario.
    #[arg(long, global = true, default_value_t = 1)]
    workers: usize,
    /// Seed of the random moment-identity designs.
    #[arg(long, global = true, default_value_t = 20)]
    seed: u64,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Decay exponents, radius-loss budgets and moment identities of V.
    Decay,
    /// Final-layer norm against ε and the rescaled trace relation.
    Scale,
    /// One flushing run at the configured ε.
    Flush,
    /// Radius co-integration with a sufficient and a reduced initial radius.
    Radius,
    /// ε-refinement of the flushed run against the h = 0 ablation.
    Ablate,
}

impl Command {
    fn kind(self) -> Kind {
        match self {
            Command::Decay => Kind::DecayStudy,
            Command::Scale => Kind::ScalingStudy,
            Command::Flush => Kind::FlushSim,
            Command::Radius => Kind::RadiusBudget,
            Command::Ablate => Kind::Ablation,
        }
    }

    fn dir(self) -> &'static str {
        match self {
            Command::Decay => "decay",
            Command::Scale => "scale",
            Command::Flush => "flush",
            Command::Radius => "radius",
            Command::Ablate => "ablate",
        }
    }
}

fn load(cli: &Cli, kind: Kind) -> Result<Scenario, ConfigError> {
    let scenario = match &cli.config {
        Some(path) => parse_config(path)?,
        None => Scenario::default(),
    };
    if let Some(k) = scenario.kind {
        if k != kind {
            return Err(ConfigError {
                field: Some("kind".into()),
                message: format!("scenario is a {k} but the subcommand runs a {kind}"),
            });
        }
    }
    if cli.workers == 0 {
        return Err(ConfigError {
            field: Some("--workers".into()),
            message: "must be at least 1".into(),
        });
    }
    Ok(scenario)
}

fn run(cli: &Cli) -> Result<bool, Failure> {
    let kind = cli.command.kind();
    let scenario = load(cli, kind)?;
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("results").join(cli.command.dir()));
    std::fs::create_dir_all(&out).map_err(|e| ConfigError {
        field: Some("--out".into()),
        message: format!("cannot create {}: {e}", out.display()),
    })?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.workers)
        .build()
        .map_err(|e| ConfigError {
            field: Some("--workers".into()),
            message: e.to_string(),
        })?;
    let checks = pool.install(|| run_scenario(kind, &scenario, &out, cli.seed))?;
    let text = write_summary(&out, kind, &scenario, cli.seed, cli.workers, &checks)?;
    print!("{text}");
    Ok(checks.iter().all(|c| c.pass))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
