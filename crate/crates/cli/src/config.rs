//! Experiment configuration files.
//!
//! A configuration is a TOML document with a base seed, an output directory
//! and any number of `[[experiment]]` tables. Unknown keys are rejected
//! everywhere.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use normbargain_core::amtft::{AmTftConfig, DetectionConfig};
use normbargain_core::evaluation::{welfare_set_label, EvalConfig, DEFAULT_CLASSES, DEFAULT_EVALUATION};
use normbargain_core::game::{EnvSpec, GridConfig, MatrixGame};
use normbargain_core::lola::LolaConfig;
use normbargain_core::welfare::{IaParams, WelfareKind};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default, rename = "experiment")]
    pub experiments: Vec<Experiment>,
}

fn default_out() -> PathBuf {
    PathBuf::from("runs")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algo {
    Lola,
    Amtft,
}

impl Algo {
    pub fn label(self) -> &'static str {
        match self {
            Algo::Lola => "lola",
            Algo::Amtft => "amtft",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Experiment {
    pub name: String,
    /// IPD, BoS, IAsymBoS, ExtremeBoS, CG or ABCG.
    pub env: String,
    pub algo: Algo,
    /// Independent training runs; 20 on matrix games and 10 on gridworlds
    /// when absent.
    #[serde(default)]
    pub runs: Option<usize>,
    /// Discount shared by training, planning and evaluation.
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default)]
    pub welfare: WelfareBlock,
    #[serde(default)]
    pub lola: LolaConfig,
    #[serde(default)]
    pub amtft: AmTftConfig,
    #[serde(default)]
    pub detection: DetectionConfig,
    #[serde(default)]
    pub evaluation: EvalConfig,
}

fn default_gamma() -> f64 {
    normbargain_core::DEFAULT_GAMMA
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WelfareBlock {
    /// Welfare sets fielded at seat 1 (amTFT only).
    pub p1: Vec<Vec<WelfareKind>>,
    /// Welfare sets fielded at seat 2; the seat-1 list when absent.
    pub p2: Option<Vec<Vec<WelfareKind>>>,
    /// Welfare functions a payoff profile is scored against.
    pub evaluation: Vec<WelfareKind>,
    /// Conventions runs are classified into.
    pub classes: Vec<WelfareKind>,
    pub ia: IaParams,
}

impl Default for WelfareBlock {
    fn default() -> Self {
        WelfareBlock {
            p1: vec![vec![WelfareKind::Utilitarian], vec![WelfareKind::InequityAverse]],
            p2: None,
            evaluation: DEFAULT_EVALUATION.to_vec(),
            classes: DEFAULT_CLASSES.to_vec(),
            ia: IaParams::default(),
        }
    }
}

impl WelfareBlock {
    pub fn p2_sets(&self) -> &[Vec<WelfareKind>] {
        self.p2.as_deref().unwrap_or(&self.p1)
    }

    /// Every welfare kind some seat may optimise, sorted.
    pub fn kinds(&self) -> Vec<WelfareKind> {
        let mut k: Vec<WelfareKind> = self.p1.iter().chain(self.p2_sets()).flatten().copied().collect();
        k.sort();
        k.dedup();
        k
    }
}

/// Environment from its configuration name.
pub fn env_by_name(name: &str) -> Option<EnvSpec> {
    match name.to_ascii_lowercase().as_str() {
        "cg" | "coingame" | "coin_game" => Some(EnvSpec::Grid(GridConfig::coin_game())),
        "abcg" => Some(EnvSpec::Grid(GridConfig::abcg())),
        other => MatrixGame::by_name(other).map(EnvSpec::Matrix),
    }
}

impl Experiment {
    pub fn env_spec(&self) -> Result<EnvSpec> {
        env_by_name(&self.env).with_context(|| format!("unknown environment {:?}", self.env))
    }

    pub fn run_count(&self) -> Result<usize> {
        Ok(match self.runs {
            Some(r) => r,
            None if self.env_spec()?.is_matrix() => 20,
            None => 10,
        })
    }

    /// Copy the experiment-level discount into every sub-configuration.
    pub fn normalise(&mut self) {
        let g = self.gamma;
        self.lola.gamma = g;
        self.amtft.gamma = g;
        self.amtft.q_learning.gamma = g;
        self.evaluation.gamma = g;
        self.welfare.ia.gamma = g;
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() || self.name.contains(['/', '\\']) || self.name.starts_with('.') {
            bail!("experiment name {:?} is not a valid directory name", self.name);
        }
        let env = self.env_spec()?;
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            bail!("experiment {}: gamma must lie in (0, 1), got {}", self.name, self.gamma);
        }
        if self.run_count()? < 2 {
            bail!("experiment {}: cross-play needs at least 2 runs", self.name);
        }
        if self.welfare.evaluation.is_empty() {
            bail!("experiment {}: evaluation welfare set is empty", self.name);
        }
        self.welfare.ia.validate()?;
        match self.algo {
            Algo::Lola if !env.is_matrix() => {
                bail!("experiment {}: LOLA-Exact runs on matrix games only", self.name)
            }
            Algo::Lola => {}
            Algo::Amtft => {
                self.amtft.validate()?;
                if self.welfare.p1.is_empty() || self.welfare.p2_sets().is_empty() {
                    bail!("experiment {}: amTFT needs at least one welfare set per seat", self.name);
                }
                if self.welfare.p1.iter().chain(self.welfare.p2_sets()).any(Vec::is_empty) {
                    bail!("experiment {}: welfare sets must be non-empty", self.name);
                }
            }
        }
        Ok(())
    }

    /// Labels of the welfare sets at each seat.
    pub fn set_labels(&self) -> [Vec<String>; 2] {
        [
            self.welfare.p1.iter().map(|s| welfare_set_label(s)).collect(),
            self.welfare.p2_sets().iter().map(|s| welfare_set_label(s)).collect(),
        ]
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg: ExperimentConfig = toml::from_str(text)?;
        for e in &mut cfg.experiments {
            e.normalise();
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("invalid configuration {}", path.display()))
    }

    pub fn validate(&self) -> Result<()> {
        let mut names = std::collections::BTreeSet::new();
        for e in &self.experiments {
            e.validate()?;
            if !names.insert(&e.name) {
                bail!("experiment name {:?} is used twice", e.name);
            }
        }
        Ok(())
    }

    /// The bundled default experiment suite.
    pub fn bundled() -> Self {
        Self::parse(DEFAULT_CONFIG).expect("bundled configuration is valid")
    }
}

/// Default experiment suite, also shipped as `configs/default.toml`.
pub const DEFAULT_CONFIG: &str = include_str!("../../../configs/default.toml");
