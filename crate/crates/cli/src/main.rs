//! `irsmec run` / `irsmec sweep`: solve configured scenarios and write CSVs.
//!
//! Exit codes: 0 success, 1 bad config or arguments, 2 a run failed or the
//! outputs could not be written. Log level comes from `IRSMEC_LOG`.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use irsmec::experiment::{self, Algorithm, ExperimentConfig, Sweep, SweepVariable};

#[derive(Parser)]
#[command(name = "irsmec", version, about = "Energy-latency optimization for IRS-aided multi-cell MEC")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured algorithm over the configured seeds (and sweep, if any)
    Run {
        #[arg(long)]
        config: PathBuf,
        /// override the config's algorithm
        #[arg(long)]
        algo: Option<Algorithm>,
        /// run this seed only
        #[arg(long)]
        seed: Option<u64>,
        /// override the output directory
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sweep one scenario variable over the given values
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        var: SweepVariable,
        /// comma-separated positive integers
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<usize>,
        #[arg(long)]
        algo: Option<Algorithm>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

const CONFIG_ERROR: u8 = 1;
const RUN_FAILURE: u8 = 2;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("IRSMEC_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(CONFIG_ERROR) } else { ExitCode::SUCCESS };
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err((code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}

fn execute(cmd: Command) -> Result<(), (u8, String)> {
    let (config, algo, out) = match &cmd {
        Command::Run { config, algo, out, .. } | Command::Sweep { config, algo, out, .. } => (config, algo, out),
    };
    let mut cfg = ExperimentConfig::load(config).map_err(|e| (CONFIG_ERROR, e.to_string()))?;
    if let Some(a) = algo {
        cfg.algo = *a;
    }
    if let Some(o) = out {
        cfg.output_dir = o.clone();
    }
    match cmd {
        Command::Run { seed: Some(s), .. } => cfg.seeds = vec![s],
        Command::Sweep { var, values, .. } => cfg.sweep = Some(Sweep { variable: var, values }),
        Command::Run { seed: None, .. } => {}
    }
    let problems = cfg.validate();
    if !problems.is_empty() {
        return Err((CONFIG_ERROR, format!("invalid config: {}", problems.join("; "))));
    }

    let result = experiment::run_sweep(&cfg);
    let emit = |e: experiment::OutputError| (RUN_FAILURE, e.to_string());
    experiment::emit_config(&cfg, &cfg.output_dir).map_err(emit)?;
    experiment::emit_outputs(&result, &cfg.output_dir, cfg.record_wallclock).map_err(emit)?;

    for s in &result.summaries {
        let cell = s.cell.map(|(v, x)| format!(" {}={x}", v.name())).unwrap_or_default();
        println!(
            "{}{cell}: {} seeds, mean cost {} (std {}), energy {}, latency {}",
            s.algo,
            s.n_seeds,
            experiment::fmt_num(s.mean_cost),
            experiment::fmt_num(s.std_cost),
            experiment::fmt_num(s.mean_energy),
            experiment::fmt_num(s.mean_latency),
        );
    }
    println!("outputs in {}", cfg.output_dir.display());
    let failed = result.runs.iter().filter(|r| r.result.is_err()).count();
    if failed > 0 {
        return Err((RUN_FAILURE, format!("{failed} of {} runs failed (see failures.csv)", result.runs.len())));
    }
    Ok(())
}
