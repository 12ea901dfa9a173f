//! TOML run configurations. Relative paths inside a config resolve against
//! the config file's directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{validation, CliResult};

pub fn load_config<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<(T, Vec<u8>)> {
    let bytes = std::fs::read(path)
        .map_err(|e| validation(format!("cannot open config {}: {e}", path.display())))?;
    let text = String::from_utf8(bytes.clone())
        .map_err(|_| validation(format!("{}: config is not UTF-8", path.display())))?;
    let cfg: T = toml::from_str(&text)
        .map_err(|e| validation(format!("{}: {e}", path.display())))?;
    Ok((cfg, bytes))
}

/// Resolve a config-relative path.
pub fn resolve(config_path: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        config_path.parent().unwrap_or(Path::new(".")).join(p)
    }
}

fn default_variance_form() -> String {
    "log_linear".into()
}

fn default_power() -> f64 {
    2.0
}

fn default_level() -> f64 {
    0.95
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainObsConfig {
    pub input: TrainInput,
    pub model: TrainModelSection,
    pub output: TrainOutput,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainInput {
    /// Collocated training CSV for the regression coefficients.
    pub collocated: Option<PathBuf>,
    /// Published preset name instead of training data.
    pub preset: Option<String>,
    /// Separate window for the variance model (defaults to `collocated`).
    pub variance_collocated: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainModelSection {
    #[serde(default)]
    pub covariates: Vec<String>,
    #[serde(default)]
    pub interactions: Vec<String>,
    #[serde(default = "default_variance_form")]
    pub variance_form: String,
    /// Re-estimate the coefficients by GLS under the fitted variance model.
    #[serde(default)]
    pub gls_refit: bool,
    /// "ols" floors the variance at the homoscedastic OLS residual variance
    /// of the training window; a number sets the floor directly.
    #[serde(default)]
    pub floor: FloorPolicy,
    /// Network id recorded in the model file.
    pub network_id: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum FloorPolicy {
    Named(String),
    Value(f64),
}

impl Default for FloorPolicy {
    fn default() -> Self {
        FloorPolicy::Named("ols".into())
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainOutput {
    pub model: PathBuf,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterConfig {
    pub paths: FilterPaths,
    /// network id -> observation model file.
    pub models: BTreeMap<String, PathBuf>,
    #[serde(default)]
    pub chain: ChainSection,
    #[serde(default)]
    pub priors: PriorSection,
    #[serde(default)]
    pub run: RunSection,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterPaths {
    pub sites: PathBuf,
    pub measurements: PathBuf,
    pub reference: Option<PathBuf>,
    pub grid: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainSection {
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub target_accept: f64,
}

impl Default for ChainSection {
    fn default() -> Self {
        Self { iterations: 5000, burn_in: 2000, thin: 3, target_accept: 0.30 }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorSection {
    /// Network whose reading variance bounds the nugget; defaults to the
    /// first network of each timepoint.
    pub primary_network: Option<String>,
    /// Explicit overrides; anything absent is derived from the data.
    pub mu_scale: Option<f64>,
    pub sigma2_max: Option<f64>,
    pub nugget_max: Option<f64>,
    pub phi_min: Option<f64>,
    pub phi_max: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    #[serde(default)]
    pub write_samples: bool,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    /// "s5" (advection-diffusion) or "s6" (GP plus point sources).
    pub mode: String,
    #[serde(default)]
    pub s5: S5Section,
    #[serde(default)]
    pub s6: S6Section,
    #[serde(default)]
    pub run: RunSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct S5Section {
    pub lattice: usize,
    pub steps: usize,
    pub n1: usize,
    pub n2: usize,
    /// Steps included in the emitted collocated training series.
    pub train_steps: usize,
}

impl Default for S5Section {
    fn default() -> Self {
        Self { lattice: 141, steps: 500, n1: 100, n2: 100, train_steps: 400 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct S6Section {
    pub datasets: usize,
    pub timepoints: usize,
    pub preferential: bool,
    pub sites_per_network: usize,
    pub eval_grid: usize,
    /// Variance floor recorded in the emitted observation-model files.
    pub var_floor: f64,
}

impl Default for S6Section {
    fn default() -> Self {
        Self {
            datasets: 10,
            timepoints: 100,
            preferential: true,
            sites_per_network: 30,
            eval_grid: 10,
            var_floor: 1.0,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluateConfig {
    /// "simulation" scores against a truth table; "pseudo" scores against a
    /// nearby reference series.
    pub mode: String,
    pub truth: Option<PathBuf>,
    pub pseudo: Option<PseudoSection>,
    pub methods: Vec<MethodSection>,
    #[serde(default)]
    pub compare: CompareSection,
    #[serde(default = "default_level")]
    pub level: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PseudoSection {
    pub reference: PathBuf,
    pub sites: PathBuf,
    pub radius: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodSection {
    pub name: String,
    pub predictions: PathBuf,
    pub samples: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareSection {
    /// Pairs (l2-method, l1-method) for credible-interval comparisons.
    #[serde(default)]
    pub ci_pairs: Vec<[String; 2]>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdwConfig {
    pub paths: IdwPaths,
    pub models: BTreeMap<String, PathBuf>,
    #[serde(default)]
    pub options: IdwOptions,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdwOptions {
    #[serde(default = "default_power")]
    pub power: f64,
}

impl Default for IdwOptions {
    fn default() -> Self {
        Self { power: default_power() }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdwPaths {
    pub sites: PathBuf,
    pub measurements: PathBuf,
    pub targets: PathBuf,
}
