//! Run directories: layout, atomic JSON files and manifests.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use normbargain_core::welfare::WelfareKind;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::config::Experiment;

/// Configuration echo stored in every run directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub seed: u64,
    pub experiment: Experiment,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    /// Commit of the source tree the binary was built from, when known.
    pub commit: Option<String>,
    pub started: u64,
    pub finished: u64,
    pub config: ConfigEcho,
    /// Files produced or reused, relative to the run directory.
    pub artifacts: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extra: Option<serde_json::Value>,
}

impl Manifest {
    pub fn new(command: &str, config: ConfigEcho, started: u64) -> Self {
        Manifest {
            command: command.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            commit: commit(),
            started,
            finished: started,
            config,
            artifacts: Vec::new(),
            extra: None,
        }
    }
}

pub fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

fn commit() -> Option<String> {
    let out = std::process::Command::new("git")
        .args(["-C", env!("CARGO_MANIFEST_DIR"), "rev-parse", "HEAD"])
        .output()
        .ok()?;
    if !out.status.success() {
        return None;
    }
    let s = String::from_utf8(out.stdout).ok()?.trim().to_string();
    (!s.is_empty()).then_some(s)
}

/// Layout of one experiment's directory.
#[derive(Clone, Debug)]
pub struct RunDir {
    pub root: PathBuf,
}

impl RunDir {
    pub fn new(out: &Path, name: &str) -> Self {
        RunDir { root: out.join(name) }
    }

    pub fn config(&self) -> PathBuf {
        self.root.join("config.json")
    }

    pub fn manifest(&self) -> PathBuf {
        self.root.join("manifest.json")
    }

    pub fn lola(&self, seed: u64) -> PathBuf {
        self.root.join("lola").join(format!("seed-{seed}.json"))
    }

    pub fn plan(&self, kind: WelfareKind) -> PathBuf {
        self.root.join("plans").join(format!("{}.json", kind.label()))
    }

    pub fn feasible(&self) -> PathBuf {
        self.root.join("feasible.json")
    }

    pub fn bundle(&self, kind: WelfareKind, seed: u64) -> PathBuf {
        self.root.join("amtft").join(kind.label()).join(format!("seed-{seed}.json"))
    }

    pub fn evaluation(&self) -> PathBuf {
        self.root.join("evaluation")
    }

    pub fn relative(&self, path: &Path) -> String {
        path.strip_prefix(&self.root).unwrap_or(path).display().to_string()
    }

    /// Write the configuration echo, refusing a directory that holds
    /// artifacts of a different configuration.
    pub fn claim(&self, echo: &ConfigEcho) -> Result<()> {
        let path = self.config();
        if path.exists() {
            let found: ConfigEcho = read_json(&path)?;
            if &found != echo {
                bail!(
                    "{} was produced by a different configuration; pick another output directory or remove it",
                    self.root.display()
                );
            }
            return Ok(());
        }
        write_json(&path, echo)
    }

    /// Check that the directory was trained with `echo`.
    pub fn check(&self, echo: &ConfigEcho) -> Result<()> {
        let path = self.config();
        if !path.exists() {
            bail!("no trained artifacts for experiment {:?}: missing {}", echo.experiment.name, path.display());
        }
        let found: ConfigEcho = read_json(&path)?;
        if &found != echo {
            bail!("{} was trained with a different configuration; run train first", self.root.display());
        }
        Ok(())
    }
}

/// Write `value` as pretty JSON via a temporary file and a rename, so a
/// file that exists is always complete.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    write_text(path, &(text + "\n"))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    let dir = path.parent().context("output path has no parent directory")?;
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let tmp = path.with_extension(format!("tmp{}", std::process::id()));
    {
        let mut f = fs::File::create(&tmp).with_context(|| format!("creating {}", tmp.display()))?;
        f.write_all(text.as_bytes())?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path).with_context(|| format!("writing {}", path.display()))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Fail with every missing path named.
pub fn require(paths: &[PathBuf]) -> Result<()> {
    let missing: Vec<String> = paths.iter().filter(|p| !p.exists()).map(|p| p.display().to_string()).collect();
    if !missing.is_empty() {
        bail!("missing trained artifacts (run train first):\n  {}", missing.join("\n  "));
    }
    Ok(())
}

/// Seed of an independent random stream, from a base seed and a stream
/// coordinate (splitmix64 finaliser over the mixed inputs).
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    let mut x = base;
    for &p in parts {
        x = x.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_add(p.wrapping_mul(0xD1B5_4A32_D192_ED03));
        x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        x ^= x >> 31;
    }
    x
}
