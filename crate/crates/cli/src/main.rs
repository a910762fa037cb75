use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mcbf::decentralized::Method;
use mcbf::harness::{
    backhaul_report, parse_config, run_experiment, run_sweep, validate_suite, write_backhaul, write_experiment, write_power_table,
    write_records, ExperimentSpec, ValidationLevels,
};

/// Coordinated multicell beamforming experiments.
#[derive(Parser)]
#[command(name = "mcbf", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo run: per-drop CSV, summary and rate CDFs.
    Run(Common),
    /// Numerical self-checks; exits with 2 if any fails.
    Validate {
        #[command(flatten)]
        common: Common,
        /// Fewer drops and smaller sizes.
        #[arg(long)]
        quick: bool,
    },
    /// Scalars exchanged over the backhaul per method.
    Backhaul(Common),
    /// Power versus UEs per cell, with antennas scaled along.
    Sweep(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    drops: Option<usize>,
    /// Comma-separated method tags.
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<String>>,
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Failure {
    Usage(String),
    Validation,
}

impl From<mcbf::Error> for Failure {
    fn from(e: mcbf::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

fn load(c: &Common) -> Result<ExperimentSpec, Failure> {
    let mut spec = match &c.config {
        Some(p) => parse_config(p).map_err(|e| Failure::Usage(format!("{}: {e}", p.display())))?,
        None => ExperimentSpec::default(),
    };
    if let Some(s) = c.seed {
        spec.config.base_seed = s;
    }
    if let Some(d) = c.drops {
        spec.drops = d;
    }
    if let Some(m) = &c.methods {
        spec.methods = m.iter().map(|t| t.trim().parse::<Method>()).collect::<mcbf::Result<_>>()?;
    }
    spec.output = c.out.clone();
    spec.validate()?;
    Ok(spec)
}

fn print_summary(spec: &ExperimentSpec, exp: &mcbf::harness::Experiment) {
    println!("{} drops, seed {}, {:.1} s", spec.drops, spec.config.base_seed, exp.summary.wall_time_s);
    println!("{:<12} {:>9} {:>14} {:>10}", "method", "feasible", "power [dBm]", "mean rate");
    for m in &exp.summary.methods {
        println!("{:<12} {:>9.3} {:>14.3} {:>10.4}", m.method.tag(), m.feasibility_rate(), m.mean_power_dbm(), m.mean_rate);
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run(c) => {
            let spec = load(&c)?;
            let exp = run_experiment(&spec)?;
            let dir = spec.output.clone().unwrap_or_else(|| PathBuf::from("out"));
            write_experiment(&dir, &exp, spec.emit)?;
            print_summary(&spec, &exp);
        }
        Command::Validate { common, quick } => {
            let spec = load(&common)?;
            let mut levels = if quick { ValidationLevels::quick() } else { ValidationLevels::default() };
            if let Some(d) = common.drops {
                levels.trend_drops = d;
                levels.duality_drops = d;
            }
            let report = validate_suite(&spec.config, &levels)?;
            print!("{report}");
            if let Some(dir) = &spec.output {
                std::fs::create_dir_all(dir)?;
                std::fs::write(dir.join("validation.txt"), report.to_string())?;
            }
            if !report.passed() {
                return Err(Failure::Validation);
            }
        }
        Command::Backhaul(c) => {
            let spec = load(&c)?;
            let rows = backhaul_report(&spec.config);
            write_backhaul(std::io::stdout().lock(), &rows)?;
            if let Some(dir) = &spec.output {
                std::fs::create_dir_all(dir)?;
                write_backhaul(std::fs::File::create(dir.join("backhaul.csv"))?, &rows)?;
            }
        }
        Command::Sweep(c) => {
            let spec = load(&c)?;
            let points = run_sweep(&spec)?;
            let dir = spec.output.clone().unwrap_or_else(|| PathBuf::from("out"));
            std::fs::create_dir_all(&dir)?;
            for p in &points {
                write_records(std::fs::File::create(dir.join(format!("records_k{}.csv", p.ues_per_cell)))?, &p.experiment.records)?;
            }
            write_power_table(std::fs::File::create(dir.join("power_vs_k.csv"))?, &points)?;
            write_power_table(std::io::stdout().lock(), &points)?;
        }
    }
    std::io::stdout().flush()?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Validation) => ExitCode::from(2),
    }
}
