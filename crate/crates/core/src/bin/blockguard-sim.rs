use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use blockguard::consensus::EngineKind;
use blockguard::events::EventLevel;
use blockguard::experiment::{
    builtin_experiment, run_experiment, write_results_csv, write_timeline_csv, ExperimentConfig, Mode, RowKind, PRESETS,
};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "blockguard-sim", version, about = "Seeded committee-scheduling simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write its CSV results.
    Run(RunArgs),
    /// List the built-in experiment presets.
    Presets,
    /// Print the fully resolved experiment config as JSON without running it.
    Show(RunArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Level {
    Off,
    Protocol,
    Detailed,
}

impl From<Level> for EventLevel {
    fn from(l: Level) -> Self {
        match l {
            Level::Off => EventLevel::Off,
            Level::Protocol => EventLevel::Protocol,
            Level::Detailed => EventLevel::Detailed,
        }
    }
}

#[derive(Args)]
struct RunArgs {
    /// Built-in experiment family.
    #[arg(long, conflicts_with = "config")]
    preset: Option<String>,
    /// JSON experiment description.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Result CSV path. The timeline, if enabled, goes next to it.
    #[arg(long, default_value = "results.csv")]
    out: PathBuf,
    /// Base seed. Falls back to the config, then BLOCKGUARD_SEED, then 0.
    #[arg(long)]
    seed: Option<u64>,
    /// Restrict to these modes (comma separated).
    #[arg(long, value_delimiter = ',')]
    mode: Vec<Mode>,
    /// Restrict to these engines (comma separated).
    #[arg(long, value_delimiter = ',')]
    engine: Vec<EngineKind>,
    #[arg(long)]
    max_delay: Option<u32>,
    #[arg(long)]
    byz_fraction: Option<f64>,
    #[arg(long)]
    runs: Option<u32>,
    #[arg(long)]
    rounds: Option<u32>,
    #[arg(long)]
    n: Option<usize>,
    /// Emit the rolling timeline CSV.
    #[arg(long)]
    timeline: bool,
    /// Event log detail for per-simulation NDJSON files.
    #[arg(long, value_enum)]
    event_level: Option<Level>,
    /// Directory for event logs. Defaults to `<out stem>_events`.
    #[arg(long)]
    events_dir: Option<PathBuf>,
}

fn resolve(args: &RunArgs) -> Result<ExperimentConfig, Box<dyn std::error::Error>> {
    let mut cfg = match (&args.preset, &args.config) {
        (Some(name), _) => builtin_experiment(name)?,
        (None, Some(path)) => ExperimentConfig::from_file(path)?,
        (None, None) => ExperimentConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.seed = Some(seed);
    } else if cfg.seed.is_none() {
        if let Ok(s) = std::env::var("BLOCKGUARD_SEED") {
            cfg.seed = Some(s.trim().parse().map_err(|_| format!("BLOCKGUARD_SEED `{s}` is not a u64"))?);
        }
    }
    if !args.mode.is_empty() {
        cfg.modes = args.mode.clone();
    }
    if !args.engine.is_empty() {
        cfg.engines = args.engine.clone();
    }
    if let Some(v) = args.max_delay {
        cfg.max_delay = v;
    }
    if let Some(v) = args.byz_fraction {
        cfg.byz_fraction = v;
    }
    if let Some(v) = args.runs {
        cfg.runs = v;
    }
    if let Some(v) = args.rounds {
        cfg.rounds = v;
    }
    if let Some(v) = args.n {
        cfg.n = v;
    }
    if args.timeline {
        cfg.timeline = true;
    }
    if let Some(l) = args.event_level {
        cfg.event_log = l.into();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn sibling(out: &Path, suffix: &str, ext: Option<&str>) -> PathBuf {
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("results");
    let name = match ext {
        Some(e) => format!("{stem}{suffix}.{e}"),
        None => format!("{stem}{suffix}"),
    };
    out.with_file_name(name)
}

fn run(args: &RunArgs) -> Result<(), Box<dyn std::error::Error>> {
    let cfg = resolve(args)?;
    cfg.jobs()?;
    let events_dir = (cfg.event_log != EventLevel::Off)
        .then(|| args.events_dir.clone().unwrap_or_else(|| sibling(&args.out, "_events", None)));
    let start = std::time::Instant::now();
    let result = run_experiment(&cfg, events_dir.as_deref())?;

    write_results_csv(&result.rows, BufWriter::new(File::create(&args.out)?))?;
    eprintln!("{} simulations in {:.1?}; results in {}", result.runs.len(), start.elapsed(), args.out.display());
    if cfg.timeline {
        let path = sibling(&args.out, "_timeline", Some("csv"));
        write_timeline_csv(&result.timeline, BufWriter::new(File::create(&path)?))?;
        eprintln!("timeline in {}", path.display());
    }
    if let Some(dir) = events_dir {
        eprintln!("event logs in {}", dir.display());
    }
    for row in result.rows.iter().filter(|r| r.row_kind == RowKind::Mean) {
        let fmt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"));
        let point = row
            .sweep_value
            .map(|v| format!(" {}={v}", row.sweep_parameter.as_deref().unwrap_or("")))
            .unwrap_or_default();
        eprintln!(
            "{:<9} {:<4} size={:<8}{point} throughput={} wait={} defeated={}",
            row.mode,
            row.engine,
            row.committee_size_or_adaptive,
            fmt(row.throughput),
            fmt(row.avg_wait),
            fmt(row.defeated_ratio)
        );
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Presets => {
            for name in PRESETS {
                println!("{name}");
            }
            Ok(())
        }
        Command::Show(args) => resolve(args).and_then(|cfg| {
            println!("{}", serde_json::to_string_pretty(&cfg)?);
            Ok(())
        }),
        Command::Run(args) => run(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
