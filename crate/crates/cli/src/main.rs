//! `rolecast`: staged role-mining and influence pipeline.

mod artifacts;
mod config;
mod influence;
mod stages;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use rolecast_core::synth::{corpus_jsonl, generate, registry_tsv, SynthConfig};

use artifacts::Store;
use config::PipelineConfig;
use influence::NumericalFailure;

#[derive(Debug, Parser)]
#[command(
    name = "rolecast",
    version,
    about = "Role mining and influence estimation for link-sharing corpora"
)]
struct Cli {
    /// Flat `key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every random choice; overrides the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; overrides the config file.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for per-link fits.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Extra `key=value` overrides, applied after the config file.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Load the corpus, window it and select accounts.
    Ingest,
    /// Compute per-window feature matrices and standardizers.
    Featurize,
    /// Fit roles on the first window and run the robustness checks.
    Cluster,
    /// Scan k and suggest an elbow.
    Elbow,
    /// Assign every window to the fitted roles.
    Assign,
    /// Role retention and transition matrices.
    Dynamics,
    /// Fit per-link Hawkes models, or one series file with --series.
    Hawkes {
        #[arg(long)]
        series: Option<PathBuf>,
    },
    /// Simulate a Hawkes series with known parameters.
    Simulate,
    /// Per-source-type influence matrices and accounting.
    Report,
    /// Variance inflation factors of the first-window features.
    Vif,
    /// Write the synthetic fixture corpus, registry and config.
    Fixture {
        #[arg(long, default_value_t = 200)]
        accounts: usize,
    },
    /// Run every stage from ingest to report.
    Run,
}

fn resolve_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    for pair in &cli.overrides {
        cfg.set_pair(pair)?;
    }
    if let Some(seed) = cli.seed {
        cfg.set_pair(&format!("seed={seed}"))?;
    }
    if let Some(out) = &cli.out {
        cfg.set_pair(&format!("out={}", out.display()))?;
    }
    if let Some(t) = cli.threads {
        cfg.set_pair(&format!("threads={t}"))?;
    }
    Ok(cfg)
}

fn print_json<T: serde::Serialize>(v: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn write_fixture(cfg: &PipelineConfig, dir: &std::path::Path, accounts: usize) -> Result<()> {
    let synth = generate(&SynthConfig {
        accounts,
        seed: cfg.seed()?,
        ..Default::default()
    });
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    fs::write(dir.join("corpus.jsonl"), corpus_jsonl(&synth.posts))?;
    fs::write(dir.join("registry.tsv"), registry_tsv(&synth.registry))?;
    fs::write(
        dir.join("pipeline.conf"),
        format!(
            "# Synthetic fixture ({accounts} accounts, generator seed {}).\n\
             corpus = corpus.jsonl\n\
             registry = registry.tsv\n\
             bin_width = 30\n",
            cfg.seed()?
        ),
    )?;
    println!("wrote {} posts to {}", synth.posts.len(), dir.display());
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    let cfg = resolve_config(cli)?;
    let store = Store::new(cfg.out_dir(), cfg.seed()?, cfg.hash());
    if !matches!(cli.command, Command::Fixture { .. }) {
        fs::create_dir_all(&store.root)
            .with_context(|| format!("creating {}", store.root.display()))?;
        fs::write(store.path("config.resolved"), cfg.render())?;
    }
    match &cli.command {
        Command::Ingest => print_json(&stages::ingest(&cfg, &store)?),
        Command::Featurize => {
            let rows = stages::featurize(&cfg, &store)?;
            println!("feature rows per window: {rows:?}");
            Ok(())
        }
        Command::Cluster => print_json(&stages::cluster(&cfg, &store)?),
        Command::Elbow => {
            println!("suggested k: {}", stages::elbow(&cfg, &store)?);
            Ok(())
        }
        Command::Assign => {
            println!("assigned per window: {:?}", stages::assign(&cfg, &store)?);
            Ok(())
        }
        Command::Dynamics => print_json(&stages::dynamics(&cfg, &store)?),
        Command::Hawkes { series: Some(path) } => {
            let fit = influence::hawkes_series(&cfg, &store, path)?;
            print_json(&fit.params)
        }
        Command::Hawkes { series: None } => {
            let s = influence::hawkes(&cfg, &store)?;
            println!(
                "fitted {} links at bin width {}s",
                s.links.len(),
                s.bin_width_seconds
            );
            Ok(())
        }
        Command::Simulate => {
            let n = influence::simulate_stage(&cfg, &store)?;
            println!("simulated {n} non-empty cells");
            Ok(())
        }
        Command::Report => {
            println!("aggregated {} link fits", influence::report(&cfg, &store)?);
            Ok(())
        }
        Command::Vif => {
            let v = stages::vif_stage(&store)?;
            println!("max VIF: {}", v.iter().cloned().fold(0.0, f64::max));
            Ok(())
        }
        Command::Fixture { accounts } => write_fixture(&cfg, &cfg.out_dir(), *accounts),
        Command::Run => {
            stages::ingest(&cfg, &store)?;
            stages::featurize(&cfg, &store)?;
            stages::cluster(&cfg, &store)?;
            stages::elbow(&cfg, &store)?;
            stages::vif_stage(&store)?;
            stages::assign(&cfg, &store)?;
            stages::dynamics(&cfg, &store)?;
            influence::hawkes(&cfg, &store)?;
            influence::report(&cfg, &store)?;
            println!("pipeline complete: {}", store.root.display());
            Ok(())
        }
    }
}

/// 2 for numerical failures, 1 for everything else.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.downcast_ref::<NumericalFailure>().is_some() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<rolecast_core::Error>() {
            if matches!(
                e,
                rolecast_core::Error::Numerical { .. } | rolecast_core::Error::Explosive(_)
            ) {
                return 2;
            }
        }
    }
    1
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
