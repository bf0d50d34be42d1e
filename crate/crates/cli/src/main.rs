use std::fs::File;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use knobtune::campaign::{run_campaign, validate, CampaignConfig, TargetKind};
use knobtune::knobspace::Configuration;
use knobtune::optimizers::{incumbent_trace, Backend, HistoryEntry, Strategy};
use knobtune::report::{
    agent_traces, aggregate_curves, feasible_regret_curve, ranking_from_traces, time_grid, write_aggregate_csv,
    write_mape_csv, write_ranking_csv, write_regret_csv, DEFAULT_GRID_SECONDS,
};
use knobtune::target::{SurrogateSpec, SurrogateTarget, Target};
use knobtune::transcript::{load_mape, load_transcript, Transcript};

#[derive(Parser)]
#[command(name = "knobtune", version, about = "Constrained asynchronous Bayesian optimization of application knobs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a tuning campaign for every configured seed.
    Tune(CampaignArgs),
    /// Check a campaign configuration without evaluating anything.
    Validate(CampaignArgs),
    /// Turn transcripts into tidy CSV metrics.
    Report(ReportArgs),
    /// Evaluate one configuration on the built-in surrogate and print the result as JSON.
    SurrogateEval(SurrogateEvalArgs),
}

#[derive(Args)]
struct CampaignArgs {
    /// TOML campaign file; flags below override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Reset q, n0, N, P, polling, R_max and restarts to the published settings before applying flags.
    #[arg(long)]
    paper_defaults: bool,
    #[arg(long, value_parser = parse_strategy)]
    strategy: Option<Strategy>,
    /// Built-in space name (ligen8) or path to a TOML/JSON knob list.
    #[arg(long)]
    knobspace: Option<String>,
    #[arg(long, value_enum)]
    target: Option<TargetArg>,
    /// External command template with {knob} placeholders.
    #[arg(long)]
    command: Option<String>,
    #[arg(long)]
    timeout_seconds: Option<f64>,
    #[arg(long)]
    cache_file: Option<PathBuf>,
    #[arg(long, value_enum)]
    backend: Option<BackendArg>,
    /// Number of parallel workers q.
    #[arg(long, short = 'q')]
    workers: Option<usize>,
    #[arg(long)]
    polling_seconds: Option<f64>,
    #[arg(long)]
    overhead_seconds: Option<f64>,
    /// Total evaluations N, initial design included.
    #[arg(long, short = 'n')]
    iterations: Option<usize>,
    #[arg(long)]
    initial_points: Option<usize>,
    /// Constraint-model retraining period P.
    #[arg(long)]
    training_period: Option<usize>,
    #[arg(long)]
    rmsd_max: Option<f64>,
    #[arg(long)]
    restarts: Option<usize>,
    #[arg(long)]
    gate_penalty: Option<f64>,
    #[arg(long)]
    ridge_alpha: Option<f64>,
    #[arg(long)]
    error_injection: bool,
    #[arg(long)]
    epsilon0: Option<f64>,
    #[arg(long)]
    n_err: Option<usize>,
    /// Comma-separated seeds.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long, short = 'o')]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    concurrent_seeds: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum TargetArg {
    Surrogate,
    External,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Virtual,
    Local,
}

fn parse_strategy(s: &str) -> Result<Strategy, String> {
    s.parse().map_err(|e: knobtune::Error| e.to_string())
}

impl CampaignArgs {
    fn resolve(&self) -> knobtune::Result<CampaignConfig> {
        let mut c = match &self.config {
            Some(path) => CampaignConfig::load(path)?,
            None => CampaignConfig::default(),
        };
        if self.paper_defaults {
            let d = CampaignConfig::default();
            c.workers = d.workers;
            c.initial_points = d.initial_points;
            c.total_iterations = d.total_iterations;
            c.training_period = d.training_period;
            c.polling_seconds = d.polling_seconds;
            c.rmsd_max = d.rmsd_max;
            c.restarts = d.restarts;
        }
        macro_rules! set {
            ($($flag:ident => $field:ident),* $(,)?) => {
                $(if let Some(v) = self.$flag.clone() { c.$field = v; })*
            };
        }
        set!(
            strategy => strategy,
            knobspace => knobspace,
            timeout_seconds => timeout_seconds,
            workers => workers,
            polling_seconds => polling_seconds,
            overhead_seconds => overhead_seconds,
            iterations => total_iterations,
            initial_points => initial_points,
            training_period => training_period,
            rmsd_max => rmsd_max,
            restarts => restarts,
            gate_penalty => gate_penalty,
            ridge_alpha => ridge_alpha,
            epsilon0 => epsilon0,
            n_err => n_err,
            seeds => seeds,
            output_dir => output_dir,
        );
        if let Some(cmd) = &self.command {
            c.command = Some(cmd.clone());
        }
        if let Some(cache) = &self.cache_file {
            c.cache_file = Some(cache.clone());
        }
        if let Some(t) = self.target {
            c.target = match t {
                TargetArg::Surrogate => TargetKind::Surrogate,
                TargetArg::External => TargetKind::External,
            };
        }
        if let Some(b) = self.backend {
            c.backend = match b {
                BackendArg::Virtual => Backend::Virtual,
                BackendArg::Local => Backend::Local,
            };
        }
        c.error_injection |= self.error_injection;
        c.concurrent_seeds |= self.concurrent_seeds;
        Ok(c)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ReportKind {
    /// Feasible regret over time, one series per transcript.
    Regret,
    /// Constraint-model error per iteration, from mape_<seed>.csv files.
    Mape,
    /// Rank of central transcripts among the agents of paired ensemble transcripts.
    Ranking,
    /// Mean incumbent curve across transcripts on a fixed time grid.
    Aggregate,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(value_enum)]
    kind: ReportKind,
    #[arg(long, num_args = 1.., required = true)]
    input: Vec<PathBuf>,
    /// Ensemble transcripts paired in order with --input (ranking only).
    #[arg(long, num_args = 1..)]
    ensemble: Vec<PathBuf>,
    #[arg(long)]
    ground_truth: Option<f64>,
    /// Sampling step in seconds for ranking and aggregate.
    #[arg(long, default_value_t = DEFAULT_GRID_SECONDS)]
    grid: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SurrogateEvalArgs {
    /// Comma-separated knob values in knob-space order.
    #[arg(long, value_delimiter = ',', required = true, allow_negative_numbers = true)]
    values: Vec<i64>,
    #[arg(long, default_value = "ligen8")]
    knobspace: String,
    #[arg(long)]
    rmsd_max: Option<f64>,
}

fn series_name(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn end_time(h: &[HistoryEntry]) -> f64 {
    h.iter().filter_map(|e| e.complete_time).fold(0.0, f64::max)
}

fn load_all(paths: &[PathBuf]) -> knobtune::Result<Vec<(String, Transcript)>> {
    paths.iter().map(|p| Ok((series_name(p), load_transcript(p)?))).collect()
}

/// Reads a MAPE file, or the `mape_<seed>.csv` next to a `transcript_<seed>.csv`.
fn load_mape_for(path: &Path) -> knobtune::Result<Vec<knobtune::constraint::MapeRecord>> {
    match load_mape(path) {
        Ok(r) => Ok(r),
        Err(e) => {
            let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            match name.strip_prefix("transcript_") {
                Some(rest) => load_mape(&path.with_file_name(format!("mape_{rest}"))),
                None => Err(e),
            }
        }
    }
}

fn report(args: &ReportArgs) -> knobtune::Result<()> {
    let out = File::create(&args.out)?;
    match args.kind {
        ReportKind::Regret => {
            let series: Vec<_> = load_all(&args.input)?
                .into_iter()
                .map(|(name, t)| (name, feasible_regret_curve(&t.entries, args.ground_truth)))
                .collect();
            write_regret_csv(out, &series)
        }
        ReportKind::Mape => {
            let series = args
                .input
                .iter()
                .map(|p| Ok((series_name(p), load_mape_for(p)?)))
                .collect::<knobtune::Result<Vec<_>>>()?;
            write_mape_csv(out, &series)
        }
        ReportKind::Ranking => {
            if args.ensemble.len() != args.input.len() {
                return Err(knobtune::Error::Settings(format!(
                    "{} central transcripts but {} ensemble transcripts",
                    args.input.len(),
                    args.ensemble.len()
                )));
            }
            let mut series = Vec::new();
            for ((name, central), (_, ens)) in load_all(&args.input)?.into_iter().zip(load_all(&args.ensemble)?) {
                let agents: Vec<_> = agent_traces(&ens.entries).into_values().collect();
                let horizon = end_time(&central.entries).min(end_time(&ens.entries));
                let times = time_grid(args.grid, horizon)?;
                series.push((name, ranking_from_traces(&incumbent_trace(&central.entries), &agents, &times)));
            }
            write_ranking_csv(out, &series)
        }
        ReportKind::Aggregate => {
            let all = load_all(&args.input)?;
            let horizon = all.iter().map(|(_, t)| end_time(&t.entries)).fold(0.0, f64::max);
            let curves: Vec<_> = all.iter().map(|(_, t)| incumbent_trace(&t.entries)).collect();
            let points = aggregate_curves(&curves, &time_grid(args.grid, horizon)?)?;
            write_aggregate_csv(out, &points, args.ground_truth)
        }
    }
}

fn surrogate_eval(args: &SurrogateEvalArgs) -> knobtune::Result<String> {
    let space = CampaignConfig {
        knobspace: args.knobspace.clone(),
        ..CampaignConfig::default()
    }
    .space()?;
    let mut spec = SurrogateSpec::default();
    if let Some(r) = args.rmsd_max {
        spec.rmsd_max = r;
    }
    let target = SurrogateTarget::new(space, spec)?;
    let result = target.evaluate(&Configuration(args.values.clone()))?;
    Ok(serde_json::to_string_pretty(&result)?)
}

fn print_diagnostics(diags: &[String]) {
    eprintln!("invalid campaign configuration:");
    for d in diags {
        eprintln!("  - {d}");
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Tune(args) | Command::Validate(args) if args.config.as_ref().is_some_and(|p| !p.exists()) => {
            eprintln!("config file {} does not exist", args.config.unwrap().display());
            ExitCode::from(2)
        }
        Command::Tune(args) => {
            let config = match args.resolve() {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("{e}");
                    return ExitCode::from(2);
                }
            };
            match run_campaign(&config) {
                Ok(report) => {
                    for s in &report.summaries {
                        println!(
                            "seed {}: best objective {} (feasible: {}), {} evaluations",
                            s.seed,
                            s.best_objective.map_or("none".to_string(), |v| v.to_string()),
                            s.best_is_feasible,
                            s.evaluations
                        );
                    }
                    println!("outputs written to {}", config.output_dir.display());
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("{e}");
                    ExitCode::from(e.exit_code() as u8)
                }
            }
        }
        Command::Validate(args) => match args.resolve() {
            Err(e) => {
                eprintln!("{e}");
                ExitCode::from(2)
            }
            Ok(config) => {
                let diags = validate(&config);
                if diags.is_empty() {
                    println!("configuration is valid");
                    ExitCode::SUCCESS
                } else {
                    print_diagnostics(&diags);
                    ExitCode::from(2)
                }
            }
        },
        Command::Report(args) => match report(&args) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => {
                eprintln!("{e}");
                ExitCode::FAILURE
            }
        },
        Command::SurrogateEval(args) => match surrogate_eval(&args) {
            Ok(json) => {
                println!("{json}");
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("{e}");
                ExitCode::from(2)
            }
        },
    }
}
