use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use rabf::harness::{
    build_beamformer_detailed, emit_plot_script, evaluate_worst_case_sinr, run_experiment, validate_suite,
    write_blmi_diagnostics, ExperimentConfig, Method, RunData, SetBundle,
};
use rabf::Error;

#[derive(Parser)]
#[command(name = "rabf", version, about = "Worst-case SINR robust adaptive beamforming")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one scenario with one method and print the weight vector and diagnostics.
    Solve {
        /// Experiment-style TOML file; only its scenario and set parameters are used.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "qmi_1")]
        method: String,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        snr_db: Option<f64>,
        #[arg(long)]
        snapshots: Option<usize>,
        /// Write the restriction-loop history of QMI methods to this CSV file.
        #[arg(long)]
        diagnostics: Option<PathBuf>,
    },
    /// Run a Monte Carlo sweep from a TOML config; writes the CSV, its metadata and a plot script.
    Experiment {
        config: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long)]
        runs: Option<usize>,
        /// Use the full 200 runs per cell.
        #[arg(long, conflicts_with = "runs")]
        full: bool,
        #[arg(long)]
        base_seed: Option<u64>,
        #[arg(long)]
        threads: Option<usize>,
        /// Write 0 in the timing column so repeated runs give identical files.
        #[arg(long)]
        no_timing: bool,
        #[arg(long)]
        no_plot: bool,
    },
    /// Run the built-in self-checks.
    Validate {
        #[arg(long, default_value_t = 10)]
        instances: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn config_exit(e: &Error) -> ExitCode {
    eprintln!("error: {e}");
    match e {
        Error::Config(_) | Error::InvalidSpec(_) | Error::Schema(_) => ExitCode::from(2),
        _ => ExitCode::from(1),
    }
}

fn load(config: Option<&PathBuf>) -> Result<ExperimentConfig, Error> {
    match config {
        Some(p) => ExperimentConfig::from_toml_file(p),
        None => Ok(ExperimentConfig::desk_scale("results.csv")),
    }
}

#[allow(clippy::too_many_arguments)]
fn solve(
    config: Option<PathBuf>,
    method: String,
    seed: Option<u64>,
    snr_db: Option<f64>,
    snapshots: Option<usize>,
    diagnostics: Option<PathBuf>,
) -> ExitCode {
    let cfg = match load(config.as_ref()) {
        Ok(c) => c,
        Err(e) => return config_exit(&e),
    };
    let method: Method = match method.parse() {
        Ok(m) => m,
        Err(e) => return config_exit(&e),
    };
    let mut scenario = cfg.scenario.clone();
    if let Some(s) = seed {
        scenario.seed = s;
    }
    if let Some(s) = snr_db {
        scenario.snr_db = s;
    }
    if let Some(t) = snapshots {
        scenario.snapshots = t;
    }
    let prepared = SetBundle::new(&scenario, &cfg.sets).and_then(|sets| Ok((sets, RunData::new(scenario, cfg.sets.gamma_factor)?)));
    let (sets, data) = match prepared {
        Ok(p) => p,
        Err(e) => return config_exit(&e),
    };
    let (res, outcome) = match build_beamformer_detailed(method, &data, &sets, &cfg.blmi) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {method} failed: {e}");
            return ExitCode::from(3);
        }
    };
    println!("method {method}");
    println!("w");
    for z in res.w.iter() {
        println!("  {:+.12e} {:+.12e}i", z.re, z.im);
    }
    println!("objective {:.12e}", res.objective);
    for (k, v) in &res.diagnostics {
        println!("{k} {v}");
    }
    match data.output_sinr(&res.w) {
        Ok(s) => println!("output_sinr_db {s:.6}"),
        Err(e) => println!("output_sinr_db NaN ({e})"),
    }
    if let Ok(s) = data.optimal_sinr() {
        println!("optimal_sinr_db {s:.6}");
    }
    if let Some(spec) = sets.for_method(method) {
        match evaluate_worst_case_sinr(&res.w, spec, &data.r_hat) {
            Ok(v) => println!("worst_case_sinr {v:.12e}"),
            Err(e) => println!("worst_case_sinr NaN ({e})"),
        }
    }
    if let (Some(path), Some(out)) = (diagnostics, outcome) {
        if let Err(e) = write_blmi_diagnostics(&path, &out.history) {
            eprintln!("error: writing {}: {e}", path.display());
            return ExitCode::from(1);
        }
        println!("diagnostics {}", path.display());
    }
    ExitCode::SUCCESS
}

#[allow(clippy::too_many_arguments)]
fn experiment(
    config: PathBuf,
    output: Option<PathBuf>,
    runs: Option<usize>,
    full: bool,
    base_seed: Option<u64>,
    threads: Option<usize>,
    no_timing: bool,
    no_plot: bool,
) -> ExitCode {
    let mut cfg = match ExperimentConfig::from_toml_file(&config) {
        Ok(c) => c,
        Err(e) => return config_exit(&e),
    };
    if let Some(o) = output {
        cfg.output = o;
    }
    if let Some(r) = runs {
        cfg.runs = r;
    }
    if full {
        cfg.runs = 200;
    }
    if let Some(s) = base_seed {
        cfg.base_seed = s;
    }
    if threads.is_some() {
        cfg.threads = threads;
    }
    if no_timing {
        cfg.record_timing = false;
    }
    if let Err(e) = cfg.validate() {
        return config_exit(&e);
    }
    let out = match run_experiment(&cfg) {
        Ok(o) => o,
        Err(e) => return config_exit(&e),
    };
    let failed = out.rows.iter().filter(|r| r.status == "failed").count();
    println!("wrote {} rows to {} ({failed} failed cells)", out.rows.len(), out.csv_path.display());
    println!("metadata {}", out.meta_path.display());
    if !no_plot {
        match emit_plot_script(&out.csv_path) {
            Ok(p) => println!("plot script {}", p.display()),
            Err(e) => return config_exit(&e),
        }
    }
    ExitCode::SUCCESS
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Solve { config, method, seed, snr_db, snapshots, diagnostics } => {
            solve(config, method, seed, snr_db, snapshots, diagnostics)
        }
        Command::Experiment { config, output, runs, full, base_seed, threads, no_timing, no_plot } => {
            experiment(config, output, runs, full, base_seed, threads, no_timing, no_plot)
        }
        Command::Validate { instances, seed } => match validate_suite(instances, seed) {
            Ok(checks) => {
                for c in &checks {
                    println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
                }
                if checks.iter().all(|c| c.passed) {
                    ExitCode::SUCCESS
                } else {
                    ExitCode::from(1)
                }
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(1)
            }
        },
    }
}
