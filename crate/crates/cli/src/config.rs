use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use smcae_core::eval::Averaging;
use smcae_core::synthgen::SynthConfig;
use smcae_core::{HogConfig, SmcaeConfig, Variant};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    #[default]
    Digits,
    Cufsf,
    Gradcheck,
    ToyGap,
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExperimentKind::Digits => "digits",
            ExperimentKind::Cufsf => "cufsf",
            ExperimentKind::Gradcheck => "gradcheck",
            ExperimentKind::ToyGap => "toy-gap",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// 32×32 bitmap files (UCI optdigits original layout).
    pub digits_train: PathBuf,
    pub digits_test: PathBuf,
    pub photo_dir: PathBuf,
    pub sketch_dir: PathBuf,
    /// Lines of `<partition> <id>`.
    pub split_file: PathBuf,
    /// Side length images are resized to before HOG.
    pub face_size: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            digits_train: "data/digits-orig.tra".into(),
            digits_test: "data/digits-orig.tes".into(),
            photo_dir: "data/cufsf/photos".into(),
            sketch_dir: "data/cufsf/sketches".into(),
            split_file: "data/cufsf/split.txt".into(),
            face_size: 50,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DigitsConfig {
    /// Sampled synthetic digits per class for the training-set comparison.
    pub synthetic_per_class: usize,
    /// Total synthetic counts added to the real set in the count sweep.
    pub schedule: Vec<usize>,
    /// Independent synthetic draws per schedule point.
    pub replicates: usize,
    /// Skip the count sweep entirely.
    pub sweep: bool,
    /// Cap on training bitmaps per class (0 keeps all).
    pub max_train_per_class: usize,
    pub synth: SynthConfig,
}

impl Default for DigitsConfig {
    fn default() -> Self {
        Self {
            synthetic_per_class: 3000,
            schedule: (1..=11).map(|i| 300 * i).collect(),
            replicates: 3,
            sweep: true,
            max_train_per_class: 0,
            synth: SynthConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SvmConfig {
    /// Empty grids fall back to the defaults scaled by the feature dimension.
    pub c_grid: Vec<f64>,
    pub g_grid: Vec<f64>,
    pub folds: usize,
    /// Members per class used for the grid search (0 keeps all).
    pub cv_per_class: usize,
    pub tolerance: f64,
    pub averaging: Averaging,
}

impl Default for SvmConfig {
    fn default() -> Self {
        Self {
            c_grid: Vec::new(),
            g_grid: Vec::new(),
            folds: 5,
            cv_per_class: 100,
            tolerance: 1e-3,
            averaging: Averaging::Macro,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub gammas: Vec<f64>,
    pub replicates: usize,
    /// Also score each trained model (F1, rank-1 or gap distance).
    pub score: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self { gammas: vec![0.0, 0.5, 1.0, 5.0, 10.0, 50.0, 100.0], replicates: 1, score: true }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToyConfig {
    pub dim: usize,
    pub latent: usize,
    pub train_pairs: usize,
    pub test_pairs: usize,
    /// Constant offset added to every synthetic coordinate.
    pub shift: f64,
    pub noise: f64,
}

impl Default for ToyConfig {
    fn default() -> Self {
        Self { dim: 20, latent: 4, train_pairs: 60, test_pairs: 200, shift: 0.15, noise: 0.05 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Threads for per-image synthesis; results do not depend on it.
    pub workers: usize,
    pub variant: Variant,
    pub data: DataConfig,
    pub smcae: SmcaeConfig,
    pub hog: HogConfig,
    pub digits: DigitsConfig,
    pub svm: SvmConfig,
    pub sweep: SweepConfig,
    pub toy: ToyConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            experiment: ExperimentKind::default(),
            seed: 0,
            output_dir: "out".into(),
            workers: 1,
            variant: Variant::Smcae,
            data: DataConfig::default(),
            smcae: SmcaeConfig::default(),
            hog: HogConfig::default(),
            digits: DigitsConfig::default(),
            svm: SvmConfig::default(),
            sweep: SweepConfig::default(),
            toy: ToyConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).context("invalid configuration")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_toml_str(&text).with_context(|| format!("in {}", path.display()))
    }

    /// Loads `path` (or the defaults) and applies `key=value` overrides in order.
    pub fn resolve(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let base = match path {
            Some(p) => Self::load(p)?,
            None => Self::default(),
        };
        base.with_overrides(overrides)
    }

    pub fn with_overrides(&self, overrides: &[String]) -> Result<Self> {
        let mut table = toml::Table::try_from(self)?;
        for o in overrides {
            let (key, value) = o
                .split_once('=')
                .ok_or_else(|| anyhow!("override {o:?} is not of the form key=value"))?;
            set_path(&mut table, key.trim(), parse_value(value.trim()))?;
        }
        let cfg: Self = table.try_into().context("override produced an invalid configuration")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.smcae.validate()?;
        self.hog.validate()?;
        if self.digits.replicates == 0 || self.sweep.replicates == 0 {
            bail!("replicate counts must be positive");
        }
        if self.digits.synthetic_per_class == 0 {
            bail!("digits.synthetic_per_class must be positive");
        }
        if self.digits.schedule.contains(&0) {
            bail!("digits.schedule entries must be positive");
        }
        if self.svm.folds < 2 {
            bail!("svm.folds must be at least 2");
        }
        if self.sweep.gammas.is_empty() {
            bail!("sweep.gammas is empty");
        }
        Ok(())
    }

    /// Canonical TOML text; the basis of [`ExperimentConfig::hash`].
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn hash(&self) -> String {
        hex(&Sha256::digest(self.to_toml().as_bytes()))
    }

    /// Model settings with the run seed folded in.
    pub fn smcae_for_seed(&self, seed: u64) -> SmcaeConfig {
        SmcaeConfig { rng_seed: seed, ..self.smcae.clone() }
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// TOML literal if it parses as one, otherwise a bare string.
fn parse_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match toml::from_str::<toml::Table>(&doc) {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

fn set_path(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().filter(|s| !s.is_empty()).ok_or_else(|| anyhow!("empty override key"))?;
    let mut cur = table;
    for p in parts {
        cur = cur
            .get_mut(p)
            .and_then(toml::Value::as_table_mut)
            .ok_or_else(|| anyhow!("unknown config section {p:?} in {key:?}"))?;
    }
    if !cur.contains_key(last) {
        bail!("unknown config key {key:?}");
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

/// Comma-separated widths, e.g. `256,256`.
pub fn parse_widths(s: &str) -> Result<Vec<usize>> {
    s.split(',')
        .map(|w| usize::from_str(w.trim()).with_context(|| format!("bad layer width {w:?}")))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = ExperimentConfig::default();
        let back = ExperimentConfig::from_toml_str(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(cfg.digits.schedule.first(), Some(&300));
        assert_eq!(cfg.digits.schedule.last(), Some(&3300));
        assert_eq!(cfg.sweep.gammas, vec![0.0, 0.5, 1.0, 5.0, 10.0, 50.0, 100.0]);
    }

    #[test]
    fn partial_file_and_overrides() {
        let cfg = ExperimentConfig::from_toml_str(
            "seed = 4\nvariant = \"sae-ii\"\n[smcae]\nlayer_sizes = [64, 32]\n[smcae.sparsity]\nrho = 0.5\n",
        )
        .unwrap();
        assert_eq!(cfg.seed, 4);
        assert_eq!(cfg.variant, Variant::SaeII);
        assert_eq!(cfg.smcae.layer_sizes, vec![64, 32]);
        assert_eq!(cfg.smcae.sparsity.rho, 0.5);
        assert_eq!(cfg.smcae.gamma, 50.0);

        let o = cfg
            .with_overrides(&["smcae.gamma=5".into(), "variant=smcae-ii".into(), "output_dir=/tmp/x".into()])
            .unwrap();
        assert_eq!(o.smcae.gamma, 5.0);
        assert_eq!(o.variant, Variant::SmcaeII);
        assert_eq!(o.output_dir, PathBuf::from("/tmp/x"));
        assert_ne!(o.hash(), cfg.hash());
        assert!(cfg.with_overrides(&["smcae.gamm=5".into()]).is_err());
        assert!(cfg.with_overrides(&["nonsense".into()]).is_err());
        assert!(cfg.with_overrides(&["smcae.gamma=-1".into()]).is_err());
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(ExperimentConfig::from_toml_str("sed = 1\n").is_err());
        assert!(ExperimentConfig::from_toml_str("[digits]\nreplicate = 1\n").is_err());
    }
}
