//! `phdtrack`: map generation, scenario simulation, tracking and evaluation.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "phdtrack",
    version,
    about = "Terrain-aware multi-target tracking with a PHD particle filter"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic terrain map.
    Genmap(GenmapArgs),
    /// Write the bundled three-vehicle scenario file.
    Scenario(ScenarioArgs),
    /// Simulate ground truth and observer reports.
    Simulate(SimulateArgs),
    /// Run a tracker over a report file.
    Track(TrackArgs),
    /// Score tracks against ground truth.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
struct GenmapArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 400)]
    width: usize,
    #[arg(long, default_value_t = 400)]
    height: usize,
    /// Cell edge length in meters.
    #[arg(long, default_value_t = 25.0)]
    cell: f64,
}

#[derive(Debug, Args)]
struct ScenarioArgs {
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Map used to check that routes stay inside the mapped area.
    #[arg(long)]
    map: PathBuf,
    /// Scenario file; the bundled scenario when omitted.
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Miss probability; overrides the scenario's value.
    #[arg(long)]
    pfn: Option<f64>,
    #[arg(long)]
    truth: PathBuf,
    #[arg(long)]
    reports: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FilterKind {
    Phd,
    Bootstrap,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SchemeArg {
    Multinomial,
    Systematic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TerrainArg {
    Resample,
    Reweight,
}

#[derive(Debug, Args)]
struct TrackArgs {
    #[arg(long)]
    map: PathBuf,
    #[arg(long)]
    reports: PathBuf,
    #[arg(long)]
    pfn: f64,
    /// Particles per unit of expected target count.
    #[arg(long, default_value_t = 1000)]
    particles: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = SchemeArg::Multinomial)]
    resample: SchemeArg,
    #[arg(long = "terrain-mode", value_enum, default_value_t = TerrainArg::Resample)]
    terrain_mode: TerrainArg,
    #[arg(long, value_enum, default_value_t = FilterKind::Phd)]
    filter: FilterKind,
    /// Birth/death constant K.
    #[arg(long = "k-const", default_value_t = 0.01)]
    k_const: f64,
    /// Upper bound on the expected target count.
    #[arg(long = "max-count", default_value_t = 5.0)]
    max_count: f64,
    /// Time step in seconds.
    #[arg(long, default_value_t = 5.0)]
    dt: f64,
    /// Process at least this many steps, padding with empty report sets.
    #[arg(long, default_value_t = 0)]
    steps: usize,
    /// Write every particle of every step; defaults to `<out>.particles.csv`.
    #[arg(long = "dump-particles", num_args = 0..=1)]
    dump_particles: Option<Option<PathBuf>>,
    /// Write particle mass summed over all steps on the map grid.
    #[arg(long)]
    heatmap: Option<PathBuf>,
    /// Write the fitted mixture components of every step.
    #[arg(long)]
    mixture: Option<PathBuf>,
    /// Write per-step phase timings in milliseconds.
    #[arg(long)]
    timing: Option<PathBuf>,
    /// Worker threads; all available cores when omitted.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    truth: PathBuf,
    #[arg(long)]
    tracks: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    summary: PathBuf,
    /// Also report the mean OSPA distance with this cutoff in meters.
    #[arg(long)]
    ospa: Option<f64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Genmap(a) => commands::genmap(&a),
        Command::Scenario(a) => commands::scenario(&a),
        Command::Simulate(a) => commands::simulate(&a),
        Command::Track(a) => commands::track(&a),
        Command::Eval(a) => commands::eval(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(commands::Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(commands::Failure::Run(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
