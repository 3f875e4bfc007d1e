//! `train`: LOLA-Exact runs and amTFT bundles, skipping finished seeds.

use std::sync::Arc;

use anyhow::{Context, Result};
use log::info;
use normbargain_core::amtft::{disagreement_values, train_amtft_with_plan};
use normbargain_core::game::EnvSpec;
use normbargain_core::lola::train_lola;
use normbargain_core::planning::{welfare_optimal_joint_policy, GridPlanner, JointPlan};
use normbargain_core::welfare::{feasible_set, FeasibleSet, IaParams, WelfareKind, WelfareSpec};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{Algo, Experiment, ExperimentConfig};
use crate::store::{derive_seed, read_json, unix_now, write_json, ConfigEcho, Manifest, RunDir};

/// A cooperative plan on disk, with the welfare function it optimises.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PlanFile {
    pub welfare: WelfareSpec,
    pub plan: Arc<JointPlan>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct TrainSummary {
    pub trained: usize,
    pub skipped: usize,
}

/// Seed of training run `r`.
pub fn run_seed(base: u64, r: usize) -> u64 {
    base.wrapping_add(r as u64)
}

/// Seed of the amTFT(w) bundle of `kind` in run `seed`.
pub fn bundle_seed(seed: u64, kind: WelfareKind) -> u64 {
    let k = WelfareKind::ALL.iter().position(|&x| x == kind).expect("kind is listed") as u64;
    derive_seed(seed, &[1, k])
}

/// The welfare function of `kind` on `env`, with the environment's
/// disagreement point.
pub fn welfare_spec(env: &EnvSpec, kind: WelfareKind, ia: IaParams, gamma: f64) -> WelfareSpec {
    let mut w = WelfareSpec::new(kind, disagreement_values(env, gamma));
    if kind == WelfareKind::InequityAverse {
        w.ia = Some(ia);
    }
    w
}

/// Every kind a plan is stored for: the fielded ones and the detection library.
pub fn plan_kinds(e: &Experiment) -> Vec<WelfareKind> {
    let mut k = e.welfare.kinds();
    k.extend(e.detection.library.iter().copied());
    k.sort();
    k.dedup();
    k
}

pub fn train(cfg: &ExperimentConfig) -> Result<TrainSummary> {
    let mut total = TrainSummary::default();
    for e in &cfg.experiments {
        let s = train_experiment(cfg, e).with_context(|| format!("experiment {}", e.name))?;
        info!("{}: trained {}, skipped {}", e.name, s.trained, s.skipped);
        total.trained += s.trained;
        total.skipped += s.skipped;
    }
    Ok(total)
}

fn train_experiment(cfg: &ExperimentConfig, e: &Experiment) -> Result<TrainSummary> {
    let started = unix_now();
    let dir = RunDir::new(&cfg.out, &e.name);
    let echo = ConfigEcho { seed: cfg.seed, experiment: e.clone() };
    dir.claim(&echo)?;
    let mut manifest = Manifest::new("train", echo, started);
    let env = e.env_spec()?;
    let seeds: Vec<u64> = (0..e.run_count()?).map(|r| run_seed(cfg.seed, r)).collect();
    let mut summary = TrainSummary::default();
    match e.algo {
        Algo::Lola => {
            let game = env.matrix().context("LOLA needs a matrix game")?;
            let todo: Vec<u64> = seeds.iter().copied().filter(|&s| !dir.lola(s).exists()).collect();
            summary.skipped = seeds.len() - todo.len();
            todo.par_iter().try_for_each(|&s| -> Result<()> {
                let run = train_lola(game, &e.lola, s).with_context(|| format!("LOLA seed {s}"))?;
                write_json(&dir.lola(s), &run)
            })?;
            summary.trained = todo.len();
            manifest.artifacts = seeds.iter().map(|&s| dir.relative(&dir.lola(s))).collect();
        }
        Algo::Amtft => {
            let kinds = plan_kinds(e);
            let mut planner: Option<GridPlanner> = None;
            if !dir.feasible().exists() {
                let set: FeasibleSet = match &env {
                    EnvSpec::Matrix(g) => feasible_set(g, e.gamma)?,
                    EnvSpec::Grid(_) => grid_planner(&mut planner, &env, e)?.feasible_set(),
                };
                write_json(&dir.feasible(), &set)?;
            }
            for &k in &kinds {
                let path = dir.plan(k);
                if path.exists() {
                    continue;
                }
                let w = welfare_spec(&env, k, e.welfare.ia, e.gamma);
                let plan = match &env {
                    EnvSpec::Matrix(_) => welfare_optimal_joint_policy(&env, &w, e.gamma)?,
                    EnvSpec::Grid(_) => JointPlan::Grid(grid_planner(&mut planner, &env, e)?.plan(&w)?),
                };
                write_json(&path, &PlanFile { welfare: w, plan: Arc::new(plan) })?;
            }
            manifest.artifacts.push(dir.relative(&dir.feasible()));
            manifest.artifacts.extend(kinds.iter().map(|&k| dir.relative(&dir.plan(k))));

            let fielded = e.welfare.kinds();
            let jobs: Vec<(WelfareKind, u64)> = fielded.iter().flat_map(|&k| seeds.iter().map(move |&s| (k, s))).collect();
            let todo: Vec<(WelfareKind, u64)> = jobs.iter().copied().filter(|&(k, s)| !dir.bundle(k, s).exists()).collect();
            summary.skipped = jobs.len() - todo.len();
            let plans: Vec<PlanFile> = fielded.iter().map(|&k| read_json(&dir.plan(k))).collect::<Result<_>>()?;
            todo.par_iter().try_for_each(|&(k, s)| -> Result<()> {
                let pf = &plans[fielded.iter().position(|&x| x == k).expect("fielded kind")];
                let bundle = train_amtft_with_plan(&env, &pf.welfare, pf.plan.clone(), bundle_seed(s, k), &e.amtft)
                    .with_context(|| format!("amTFT({}) seed {s}", k.label()))?;
                write_json(&dir.bundle(k, s), &bundle)
            })?;
            summary.trained = todo.len();
            manifest.artifacts.extend(jobs.iter().map(|&(k, s)| dir.relative(&dir.bundle(k, s))));
        }
    }
    manifest.finished = unix_now();
    manifest.extra = Some(serde_json::json!({ "trained": summary.trained, "skipped": summary.skipped }));
    write_json(&dir.manifest(), &manifest)?;
    Ok(summary)
}

/// The gridworld planner, built on first use.
fn grid_planner<'a>(slot: &'a mut Option<GridPlanner>, env: &EnvSpec, e: &Experiment) -> Result<&'a GridPlanner> {
    if slot.is_none() {
        let cfg = env.grid().context("grid planner needs a gridworld")?;
        info!("{}: planning the {} welfare sweep", e.name, env.name());
        *slot = Some(GridPlanner::new(cfg, e.gamma)?);
    }
    Ok(slot.as_ref().expect("just built"))
}
