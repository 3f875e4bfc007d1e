//! `evaluate`: self-play and cross-play tournaments over trained artifacts.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use log::{info, warn};
use normbargain_core::amtft::{disagreement_values, AmTftBundle, Convention, NormAdaptiveAgent};
use normbargain_core::evaluation::{
    aggregate, play_match, welfare_set_label, AggregateCell, MatchOutcome, MatchRecord, PairType, Scorer, RESULTS_HEADER, UNCLASSIFIED,
};
use normbargain_core::lola::{exact_value, LolaRun};
use normbargain_core::welfare::{feasible_set, FeasibleSet, WelfareKind};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{Algo, Experiment, ExperimentConfig};
use crate::store::{derive_seed, read_json, require, unix_now, write_json, write_text, ConfigEcho, Manifest, RunDir};
use crate::train::{bundle_seed, plan_kinds, run_seed, PlanFile};

/// Columns the summary table groups by.
pub const SUMMARY_KEYS: [&str; 5] = ["env", "algo", "welfare_p1", "welfare_p2", "pair_type"];

/// Welfare column value for algorithms without a welfare set.
pub const NO_WELFARE: &str = "none";

/// A `key=value` restriction on results columns.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Filter {
    pub key: String,
    pub value: String,
}

impl std::str::FromStr for Filter {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        let (key, value) = s.split_once('=').with_context(|| format!("filter {s:?} is not of the form key=value"))?;
        let key = key.trim();
        if !RESULTS_HEADER.contains(&key) {
            bail!("filter key {key:?} is not a results column (one of {})", RESULTS_HEADER.join(", "));
        }
        Ok(Filter { key: key.into(), value: value.trim().into() })
    }
}

impl Filter {
    pub fn matches(&self, r: &MatchRecord) -> bool {
        r.field(&self.key).is_some_and(|v| v == self.value)
    }

    /// Whether an experiment can produce matching records at all.
    fn admits(&self, env: &str, algo: Algo) -> bool {
        match self.key.as_str() {
            "env" => self.value == env,
            "algo" => self.value == algo.label(),
            _ => true,
        }
    }
}

/// Records and summary of one evaluation.
#[derive(Clone, Debug, Default)]
pub struct Evaluation {
    pub records: Vec<MatchRecord>,
    pub summary: Vec<AggregateCell>,
}

/// Evaluate every experiment admitted by `filters` and write per-experiment
/// and combined results under the output directory.
pub fn evaluate(cfg: &ExperimentConfig, filters: &[Filter]) -> Result<Evaluation> {
    let mut all = Vec::new();
    for e in &cfg.experiments {
        let env = e.env_spec()?.name();
        if !filters.iter().all(|f| f.admits(&env, e.algo)) {
            continue;
        }
        let started = unix_now();
        let dir = RunDir::new(&cfg.out, &e.name);
        let echo = ConfigEcho { seed: cfg.seed, experiment: e.clone() };
        dir.check(&echo)?;
        let (records, extra) = match e.algo {
            Algo::Lola => evaluate_lola(cfg.seed, e, &dir),
            Algo::Amtft => evaluate_amtft(cfg.seed, e, &dir),
        }
        .with_context(|| format!("experiment {}", e.name))?;
        let records: Vec<MatchRecord> = records.into_iter().filter(|r| filters.iter().all(|f| f.matches(r))).collect();
        info!("{}: {} records", e.name, records.len());
        let out = dir.evaluation();
        write_tables(&out, &records)?;
        let mut manifest = Manifest::new("evaluate", echo, started);
        manifest.artifacts = vec!["evaluation/results.tsv".into(), "evaluation/summary.tsv".into()];
        let mut extra = serde_json::to_value(extra)?;
        extra["filters"] = filters.iter().map(|f| format!("{}={}", f.key, f.value)).collect();
        extra["records"] = records.len().into();
        manifest.extra = Some(extra);
        manifest.finished = unix_now();
        write_json(&out.join("manifest.json"), &manifest)?;
        all.extend(records);
    }
    let summary = write_tables(&cfg.out, &all)?;
    Ok(Evaluation { records: all, summary })
}

/// Scoring context stored with the results, for plotting and audits.
#[derive(Clone, Debug, Serialize)]
struct EvalExtra {
    env: String,
    disagreement: [f64; 2],
    feasible_hull: Vec<[f64; 2]>,
    optima: BTreeMap<String, [f64; 2]>,
    /// Convention label of each training run (LOLA only).
    #[serde(skip_serializing_if = "Vec::is_empty")]
    run_labels: Vec<String>,
}

fn extra(env: String, scorer: &Scorer) -> EvalExtra {
    EvalExtra {
        env,
        disagreement: scorer.disagreement,
        feasible_hull: scorer.set.hull(),
        optima: scorer.optima.iter().cloned().collect(),
        run_labels: Vec::new(),
    }
}

fn scorer(e: &Experiment, set: FeasibleSet) -> Result<Scorer> {
    let env = e.env_spec()?;
    let d = disagreement_values(&env, e.gamma);
    Ok(Scorer::new(set, d, &e.welfare.evaluation, &e.welfare.classes, e.welfare.ia)?)
}

fn evaluate_lola(base: u64, e: &Experiment, dir: &RunDir) -> Result<(Vec<MatchRecord>, EvalExtra)> {
    let env = e.env_spec()?;
    let game = env.matrix().context("LOLA needs a matrix game")?;
    let seeds: Vec<u64> = (0..e.run_count()?).map(|r| run_seed(base, r)).collect();
    require(&seeds.iter().map(|&s| dir.lola(s)).collect::<Vec<_>>())?;
    let runs: Vec<LolaRun> = seeds.iter().map(|&s| read_json(&dir.lola(s))).collect::<Result<_>>()?;
    let scorer = scorer(e, feasible_set(game, e.gamma)?)?;
    let labels: Vec<Option<String>> = runs
        .par_iter()
        .map(|r| Ok(scorer.classify(exact_value(&r.policies, game, e.gamma)?)))
        .collect::<Result<_>>()?;
    let unclassified = labels.iter().filter(|l| l.is_none()).count();
    if unclassified > 0 {
        warn!("{}: {unclassified} of {} runs match no welfare optimum", e.name, runs.len());
    }
    let n = runs.len();
    let name = env.name();
    let records = (0..n * n)
        .into_par_iter()
        .map(|k| {
            let (i, j) = (k / n, k % n);
            let pair = [runs[i].policies[0].clone(), runs[j].policies[1].clone()];
            let v = exact_value(&pair, game, e.gamma)?;
            Ok(MatchRecord {
                env: name.clone(),
                algo: Algo::Lola.label().into(),
                welfare_p1: NO_WELFARE.into(),
                welfare_p2: NO_WELFARE.into(),
                pair_type: PairType::classify(i == j, labels[i].as_deref(), labels[j].as_deref()),
                seed_a: seeds[i],
                seed_b: seeds[j],
                v1: v[0],
                v2: v[1],
                normalized_score: scorer.score(v)?,
                convention_p1: labels[i].clone().unwrap_or_else(|| UNCLASSIFIED.into()),
                convention_p2: labels[j].clone().unwrap_or_else(|| UNCLASSIFIED.into()),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut x = extra(name, &scorer);
    x.run_labels = labels.into_iter().map(|l| l.unwrap_or_else(|| UNCLASSIFIED.into())).collect();
    Ok((records, x))
}

/// Trained amTFT artifacts of one experiment, loaded for play.
#[derive(Clone, Debug)]
pub struct AmTftArtifacts {
    pub seeds: Vec<u64>,
    pub bundles: BTreeMap<(WelfareKind, u64), Arc<AmTftBundle>>,
    pub library: Vec<Convention>,
    pub set: FeasibleSet,
}

impl AmTftArtifacts {
    pub fn load(base: u64, e: &Experiment, dir: &RunDir) -> Result<Self> {
        let seeds: Vec<u64> = (0..e.run_count()?).map(|r| run_seed(base, r)).collect();
        let fielded = e.welfare.kinds();
        let mut needed = vec![dir.feasible()];
        needed.extend(plan_kinds(e).into_iter().map(|k| dir.plan(k)));
        needed.extend(fielded.iter().flat_map(|&k| seeds.iter().map(move |&s| dir.bundle(k, s))));
        require(&needed)?;
        let set: FeasibleSet = read_json(&dir.feasible())?;
        let library = e
            .detection
            .library
            .iter()
            .map(|&k| {
                let pf: PlanFile = read_json(&dir.plan(k))?;
                Ok(Convention { welfare: pf.welfare, plan: pf.plan })
            })
            .collect::<Result<Vec<_>>>()?;
        let env = e.env_spec()?;
        let mut bundles = BTreeMap::new();
        for &k in &fielded {
            for &s in &seeds {
                let b: AmTftBundle = read_json(&dir.bundle(k, s))?;
                b.check_env(&env).with_context(|| format!("{}", dir.bundle(k, s).display()))?;
                if b.seed != bundle_seed(s, k).wrapping_add(1_000_003 * b.discards as u64) {
                    bail!("{} does not belong to run seed {s}", dir.bundle(k, s).display());
                }
                bundles.insert((k, s), Arc::new(b));
            }
        }
        Ok(AmTftArtifacts { seeds, bundles, library, set })
    }

    /// amTFT(W) for welfare set `set` of run `seed` at `seat`.
    pub fn agent(&self, e: &Experiment, set: &[WelfareKind], seed: u64, seat: usize) -> Result<NormAdaptiveAgent> {
        let own = set.iter().map(|k| self.bundles[&(*k, seed)].clone()).collect();
        Ok(NormAdaptiveAgent::new(own, self.library.clone(), seat, e.amtft, e.detection.clone(), agent_seed(seed, seat, 0))?)
    }
}

/// Seed of an agent's own randomness in one evaluation episode. It depends
/// only on the run, the seat and the episode, so an agent meets the same
/// randomness in every pairing.
pub fn agent_seed(seed: u64, seat: usize, episode: usize) -> u64 {
    derive_seed(seed, &[3, seat as u64, episode as u64])
}

/// Environment seed of the match between runs `i` and `j`.
pub fn match_seed(base: u64, i: usize, j: usize) -> u64 {
    derive_seed(base, &[2, i as u64, j as u64])
}

/// One match of amTFT(W1) run `i` at seat 1 against amTFT(W2) run `j` at
/// seat 2. Returns the episode values and both agents after the last episode.
pub fn play_amtft(
    e: &Experiment,
    art: &AmTftArtifacts,
    base: u64,
    sets: [&[WelfareKind]; 2],
    runs: [usize; 2],
    trace: bool,
) -> Result<(MatchOutcome, [NormAdaptiveAgent; 2])> {
    let env = e.env_spec()?;
    let seeds = [art.seeds[runs[0]], art.seeds[runs[1]]];
    let mut a = art.agent(e, sets[0], seeds[0], 0)?;
    let mut b = art.agent(e, sets[1], seeds[1], 1)?;
    a.record_trace(trace);
    b.record_trace(trace);
    let m = play_match(&env, &mut a, &mut b, &e.evaluation, match_seed(base, runs[0], runs[1]), |k, a, b| {
        a.reseed(agent_seed(seeds[0], 0, k));
        b.reseed(agent_seed(seeds[1], 1, k));
    })?;
    Ok((m, [a, b]))
}

fn evaluate_amtft(base: u64, e: &Experiment, dir: &RunDir) -> Result<(Vec<MatchRecord>, EvalExtra)> {
    let env = e.env_spec()?;
    let art = AmTftArtifacts::load(base, e, dir)?;
    let scorer = scorer(e, art.set.clone())?;
    let sets = [&e.welfare.p1[..], e.welfare.p2_sets()];
    let n = art.seeds.len();
    let mut jobs = Vec::new();
    for (a, wa) in sets[0].iter().enumerate() {
        for (b, wb) in sets[1].iter().enumerate() {
            for i in 0..n {
                for j in 0..n {
                    if i != j || wa == wb {
                        jobs.push((a, b, i, j));
                    }
                }
            }
        }
    }
    let name = env.name();
    let records = jobs
        .par_iter()
        .map(|&(a, b, i, j)| {
            let (wa, wb) = (&sets[0][a], &sets[1][b]);
            let (m, [pa, pb]) = play_amtft(e, &art, base, [wa, wb], [i, j], false)?;
            let v = m.values();
            let (la, lb) = (welfare_set_label(wa), welfare_set_label(wb));
            Ok(MatchRecord {
                env: name.clone(),
                algo: Algo::Amtft.label().into(),
                pair_type: PairType::classify(i == j && wa == wb, Some(&la), Some(&lb)),
                welfare_p1: la,
                welfare_p2: lb,
                seed_a: art.seeds[i],
                seed_b: art.seeds[j],
                v1: v[0],
                v2: v[1],
                normalized_score: m.score(&scorer)?,
                convention_p1: pa.current_welfare().label().into(),
                convention_p2: pb.current_welfare().label().into(),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    // One audit trace per welfare-set pairing: runs 0 and 1, last episode.
    for wa in sets[0] {
        for wb in sets[1] {
            let (_, [pa, pb]) = play_amtft(e, &art, base, [wa, wb], [0, 1], true)?;
            let path = dir
                .evaluation()
                .join("traces")
                .join(format!("{}_vs_{}.json", welfare_set_label(wa), welfare_set_label(wb)));
            write_json(&path, &serde_json::json!({ "p1": pa.trace(), "p2": pb.trace() }))?;
        }
    }
    Ok((records, extra(name, &scorer)))
}

/// Results table text: tab-delimited, header first.
pub fn results_tsv(records: &[MatchRecord]) -> Result<String> {
    let mut w = csv::WriterBuilder::new().delimiter(b'\t').from_writer(Vec::new());
    w.write_record(RESULTS_HEADER)?;
    for r in records {
        w.write_record(r.fields())?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

pub fn summary_tsv(cells: &[AggregateCell]) -> Result<String> {
    let mut w = csv::WriterBuilder::new().delimiter(b'\t').from_writer(Vec::new());
    w.write_record(SUMMARY_KEYS.iter().chain(&["mean", "stderr", "n"]))?;
    for c in cells {
        let mut row = c.key.clone();
        row.extend([c.mean.to_string(), c.stderr.to_string(), c.n.to_string()]);
        w.write_record(row)?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

/// Write `results.tsv` and `summary.tsv` into `dir`.
fn write_tables(dir: &Path, records: &[MatchRecord]) -> Result<Vec<AggregateCell>> {
    write_text(&dir.join("results.tsv"), &results_tsv(records)?)?;
    let cells = if records.is_empty() {
        warn!("no records to summarise in {}", dir.display());
        Vec::new()
    } else {
        aggregate(records, &SUMMARY_KEYS)?
    };
    write_text(&dir.join("summary.tsv"), &summary_tsv(&cells)?)?;
    Ok(cells)
}
