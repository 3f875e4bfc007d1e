//! Command-line surface.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use normbargain_core::evaluation::{aggregate, AggregateCell};
use normbargain_core::exploitability::{BoundOutcome, DEFAULT_HORIZON};
use normbargain_core::DEFAULT_GAMMA;

use crate::config::ExperimentConfig;
use crate::evaluate::{evaluate, summary_tsv, Filter, SUMMARY_KEYS};
use crate::report::read_results;
use crate::store::write_json;
use crate::train::train;
use crate::verify::{parse_games, verify, DEFAULT_GAMES};

#[derive(Debug, Parser)]
#[command(name = "normbargain", version, about = "Bargaining failure from normative disagreement: train, evaluate, verify, report")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Global {
    /// Experiment configuration (TOML); the bundled suite when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads; all available cores by default.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Base seed, overriding the configuration's.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory, overriding the configuration's.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Keep only results whose column equals the value (key=value, repeatable).
    #[arg(long, global = true)]
    pub filter: Vec<Filter>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train every configured run, skipping finished ones.
    Train,
    /// Play the self-play and cross-play tournaments and write results.
    Evaluate,
    /// Check the grim-policy minimax bound on matrix games.
    Verify {
        /// Comma-separated game names; an empty string checks nothing.
        #[arg(long, default_value_t = DEFAULT_GAMES.join(","))]
        games: String,
        #[arg(long, default_value_t = DEFAULT_GAMMA)]
        gamma: f64,
        #[arg(long, default_value_t = DEFAULT_HORIZON)]
        horizon: usize,
    },
    /// Validate a results table and print its summary.
    Report {
        /// Results table; `<out>/results.tsv` when omitted.
        results: Option<PathBuf>,
    },
}

impl Global {
    pub fn load_config(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::bundled(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(o) = &self.out {
            cfg.out = o.clone();
        }
        Ok(cfg)
    }

    fn out_dir(&self) -> Result<PathBuf> {
        Ok(match &self.out {
            Some(o) => o.clone(),
            None => self.load_config()?.out,
        })
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let g = &cli.global;
    if let Some(j) = g.jobs {
        if j == 0 {
            bail!("--jobs must be at least 1");
        }
        rayon::ThreadPoolBuilder::new().num_threads(j).build_global().context("starting the worker pool")?;
    }
    match &cli.command {
        Command::Train => {
            let cfg = g.load_config()?;
            let s = train(&cfg)?;
            println!("trained {} runs, skipped {} already on disk", s.trained, s.skipped);
        }
        Command::Evaluate => {
            let cfg = g.load_config()?;
            let ev = evaluate(&cfg, &g.filter)?;
            println!("{} records written to {}", ev.records.len(), cfg.out.join("results.tsv").display());
            print_summary(&ev.summary)?;
        }
        Command::Verify { games, gamma, horizon } => {
            let games = parse_games(games)?;
            let report = verify(&games, *gamma, *horizon)?;
            for r in &report.reports {
                println!("{r}");
            }
            let path = g.out_dir()?.join("verify.json");
            write_json(&path, &report)?;
            let violated = report.violations();
            println!(
                "{} pairs: {} hold, {} premise failed, {} violated; record in {}",
                report.reports.len(),
                report.count(|o| *o == BoundOutcome::Holds),
                report.count(|o| matches!(o, BoundOutcome::PremiseFailed(_))),
                violated,
                path.display()
            );
            if violated > 0 {
                bail!("the minimax bound is violated for {violated} welfare pairs");
            }
        }
        Command::Report { results } => {
            let path = match results {
                Some(p) => p.clone(),
                None => g.out_dir()?.join("results.tsv"),
            };
            let records = read_results(&path)?;
            let records: Vec<_> = records.into_iter().filter(|r| g.filter.iter().all(|f| f.matches(r))).collect();
            println!("{}: {} valid records", path.display(), records.len());
            if !records.is_empty() {
                print_summary(&aggregate(&records, &SUMMARY_KEYS)?)?;
            }
        }
    }
    Ok(())
}

fn print_summary(cells: &[AggregateCell]) -> Result<()> {
    print!("{}", summary_tsv(cells)?);
    Ok(())
}
