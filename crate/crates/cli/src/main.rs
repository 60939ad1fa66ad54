use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Parser, Subcommand};

use qas_cli::commands;
use qas_cli::config::RunConfig;
use qas_cli::output::write_all;
use qas_cli::selftest;

/// Environment variable holding the worker-thread count.
const WORKERS_ENV: &str = "QAS_WORKERS";

#[derive(Parser, Debug)]
#[command(name = "qas", version, about = "Quantum absorption spectroscopy datasets and checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Flat `key = value` config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// csv or json
    #[arg(long, global = true)]
    format: Option<String>,
    /// direct or metropolis
    #[arg(long, global = true)]
    sampler: Option<String>,
    #[arg(long, global = true)]
    rounds: Option<usize>,
    /// Measurements per round (M).
    #[arg(long, global = true)]
    steps: Option<usize>,
    /// Any config key, e.g. `--set n_th=0.2 --set alpha_grid=lin:0.01:0.5:50`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Zero-photon probability against absorption: alpha, zpp_qas, zpp_cas.
    ZppScan,
    /// CAS intensity-estimator variance: x, cas_variance, shot_noise_limit.
    CasVariance,
    /// Repeated Bayesian estimation runs: trajectories plus ensemble summary.
    BayesRun,
    /// Fisher information scan: alpha, fi_onoff, fi_fullcount, qfi, qfi_reduced.
    FiScan,
    /// Single-shot precision 1/F against input photon number.
    PrecisionVsNa,
    /// Cross-formalism, normalization, information and golden-file checks.
    Selftest {
        /// Directory holding the golden tables.
        #[arg(long)]
        golden: Option<PathBuf>,
        /// Regenerate the golden tables instead of checking them.
        #[arg(long)]
        bless: bool,
    },
    /// Print the effective config in file form.
    ShowConfig,
}

fn effective_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &cli.config {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        cfg.apply_text(&text)
            .with_context(|| format!("in {}", path.display()))?;
    }
    for kv in &cli.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| anyhow!("--set expects KEY=VALUE, got {kv:?}"))?;
        cfg.set(k, v)?;
    }
    let flags = [
        ("seed", cli.seed.map(|v| v.to_string())),
        ("out", cli.out.as_ref().map(|p| p.display().to_string())),
        ("format", cli.format.clone()),
        ("sampler", cli.sampler.clone()),
        ("rounds", cli.rounds.map(|v| v.to_string())),
        ("steps", cli.steps.map(|v| v.to_string())),
    ];
    for (k, v) in flags {
        if let Some(v) = v {
            cfg.set(k, &v)?;
        }
    }
    Ok(cfg)
}

fn init_workers() -> Result<()> {
    if let Ok(v) = std::env::var(WORKERS_ENV) {
        let n: usize = v.trim().parse().with_context(|| format!("{WORKERS_ENV}={v:?}"))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    init_workers()?;
    let cfg = effective_config(&cli)?;
    let files = match &cli.command {
        Command::ZppScan => commands::zpp_scan(&cfg)?,
        Command::CasVariance => commands::cas_variance_cmd(&cfg)?,
        Command::BayesRun => commands::bayes_run(&cfg)?,
        Command::FiScan => commands::fi_scan(&cfg)?,
        Command::PrecisionVsNa => commands::precision_vs_na(&cfg)?,
        Command::ShowConfig => {
            print!("{}", cfg.to_text());
            return Ok(true);
        }
        Command::Selftest { golden, bless } => {
            let dir = golden.clone().unwrap_or_else(selftest::default_golden_dir);
            if *bless {
                for p in selftest::bless(&dir)? {
                    println!("wrote {}", p.display());
                }
                return Ok(true);
            }
            let reports = selftest::run(&dir)?;
            for r in &reports {
                println!("{r}");
            }
            let failed: Vec<String> = reports
                .iter()
                .filter_map(|r| r.failure.as_ref().map(|f| format!("{}:{f}", r.name)))
                .collect();
            if failed.is_empty() {
                println!("selftest status=pass");
                return Ok(true);
            }
            println!("selftest status=fail failing={}", failed.join(";"));
            return Ok(false);
        }
    };
    write_all(&cfg.out, &files)?;
    for f in &files {
        println!("wrote {}", cfg.out.join(&f.name).display());
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
