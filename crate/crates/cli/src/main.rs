use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use sharecache::experiment::{
    mobility_plot_points, run_mobility, run_oracle_compare, run_sweep, storage_utilization, sweep_plot_points,
    write_mobility_csv, write_oracle_csv, write_plot_csv, write_sweep_csv, ExperimentConfig, SolverConfig,
};
use sharecache::fading::evaluate_fading;
use sharecache::generate::sample_scenario;
use sharecache::library::PlacementFile;
use sharecache::objective::is_feasible;
use sharecache::oracle::OracleBudget;
use sharecache::{build_rate_table, hit_ratio, Error, GreedyOptions, Placement, Scenario, SpecOptions};

#[derive(Parser, Debug)]
#[command(name = "sharecache", version, about = "Edge placement of parameter-sharing AI models")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Experiment config (TOML for `.toml`, JSON otherwise).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed, overriding the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file; stdout when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample one scenario of the config and write it as JSON.
    GenScenario {
        /// Topology index within the config's seed sequence.
        #[arg(long, default_value_t = 0)]
        topology: usize,
    },
    /// Compute a placement for a scenario file.
    Solve {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, value_enum, default_value_t = SolverKind::Spec)]
        solver: SolverKind,
        /// Value rounding for the successive solver.
        #[arg(long, default_value_t = 0.1)]
        epsilon: f64,
    },
    /// Hit ratio of a placement, on expected rates and under fading.
    Evaluate {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        placement: PathBuf,
        #[arg(long, default_value_t = 1000)]
        n_fading: usize,
    },
    /// Sweep one scenario parameter and tabulate every solver.
    Sweep {
        #[command(flatten)]
        report: Report,
        /// Add the mean solver wall-time column.
        #[arg(long)]
        timing: bool,
    },
    /// Hit ratio over time as users move, placements fixed at t = 0.
    Mobility {
        #[command(flatten)]
        report: Report,
    },
    /// Compare solvers with the exhaustive optimum on small instances.
    OracleCompare,
}

#[derive(Args, Debug)]
struct Report {
    /// Also write (x, series, mean, std) rows for plotting.
    #[arg(long)]
    plot_data: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum SolverKind {
    Spec,
    Gen,
    Independent,
    Exhaustive,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Run(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Validation { .. } | Error::Toml(_) | Error::Json(_) => CliError::Usage(e.to_string()),
            other => CliError::Run(other),
        }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Run(e.into())
    }
}

fn load_config(common: &Common) -> Result<ExperimentConfig, CliError> {
    let mut config = match &common.config {
        Some(path) => ExperimentConfig::load(path).map_err(|e| match e {
            Error::Io(io) => CliError::Usage(format!("cannot read {}: {io}", path.display())),
            other => CliError::from(other),
        })?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    Ok(config)
}

fn output(path: Option<&Path>) -> io::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn load_scenario(path: &Path) -> Result<Scenario, CliError> {
    Scenario::load(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn solver_config(kind: SolverKind, epsilon: f64, budget: OracleBudget) -> SolverConfig {
    match kind {
        SolverKind::Spec => SolverConfig::Spec(SpecOptions::with_epsilon(epsilon)),
        SolverKind::Gen => SolverConfig::Gen(GreedyOptions::default()),
        SolverKind::Independent => SolverConfig::Independent,
        SolverKind::Exhaustive => SolverConfig::Exhaustive(budget),
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.common.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("--threads: {e}")))?;
    }
    let out = cli.common.out.as_deref();
    match cli.command {
        Command::GenScenario { topology } => {
            let config = load_config(&cli.common)?;
            let scenario = sample_scenario(&config.scenario, config.topology_seed(topology))?;
            let mut w = output(out)?;
            writeln!(w, "{}", scenario.to_json()?)?;
            w.flush()?;
        }
        Command::Solve {
            scenario,
            solver,
            epsilon,
        } => {
            if !(0.0..=1.0).contains(&epsilon) {
                return Err(CliError::Usage("--epsilon must lie in [0, 1]".into()));
            }
            let scenario = load_scenario(&scenario)?;
            let budget = load_config(&cli.common)?.oracle;
            let rates = build_rate_table(&scenario);
            let config = solver_config(solver, epsilon, budget);
            let (placement, secs) = config.solve_timed(&scenario, &rates)?;
            info!(
                "{}: hit ratio {:.6} in {:.3} ms",
                config.name(),
                hit_ratio(&scenario, &rates, &placement),
                secs * 1e3
            );
            let mut w = output(out)?;
            let text = serde_json::to_string_pretty(&placement.to_file()).map_err(Error::from)?;
            writeln!(w, "{text}")?;
            w.flush()?;
        }
        Command::Evaluate {
            scenario,
            placement,
            n_fading,
        } => {
            let seed = load_config(&cli.common)?.seed;
            let scenario = load_scenario(&scenario)?;
            let text = std::fs::read_to_string(&placement)?;
            let file: PlacementFile = serde_json::from_str(&text)
                .map_err(|e| CliError::Usage(format!("{}: {e}", placement.display())))?;
            let placement = Placement::from_file(&file)?;
            if placement.n_servers() != scenario.n_servers() || placement.n_models() != scenario.n_models() {
                return Err(CliError::Usage("placement does not match the scenario's dimensions".into()));
            }
            let rates = build_rate_table(&scenario);
            let fading = evaluate_fading(&scenario, &placement, n_fading, seed);
            let mut w = output(out)?;
            writeln!(w, "hit_ratio,fading_mean,fading_std,realizations,storage_util,feasible")?;
            writeln!(
                w,
                "{:.6},{:.6},{:.6},{},{:.6},{}",
                hit_ratio(&scenario, &rates, &placement),
                fading.mean,
                fading.std,
                fading.realizations,
                storage_utilization(&scenario, &placement),
                is_feasible(&scenario, &placement)
            )?;
            w.flush()?;
        }
        Command::Sweep { report, timing } => {
            let config = load_config(&cli.common)?;
            let rows = run_sweep(&config)?;
            write_sweep_csv(&rows, output(out)?, timing)?;
            if let Some(path) = report.plot_data {
                write_plot_csv(&sweep_plot_points(&rows), File::create(path)?)?;
            }
        }
        Command::Mobility { report } => {
            let config = load_config(&cli.common)?;
            let rows = run_mobility(&config)?;
            write_mobility_csv(&rows, output(out)?)?;
            if let Some(path) = report.plot_data {
                write_plot_csv(&mobility_plot_points(&rows), File::create(path)?)?;
            }
        }
        Command::OracleCompare => {
            let config = load_config(&cli.common)?;
            let rows = run_oracle_compare(&config)?;
            write_oracle_csv(&rows, output(out)?)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Run(e)) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
