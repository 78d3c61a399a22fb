use std::path::{Path, PathBuf};

use ceb_core::data::Dataset;
use ceb_core::evalkit::{GaussianMixture, MixtureSpec};
use ceb_core::objectives::{Architecture, ObjectiveKind, ObjectiveSpec, TrainConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{LabError, Result};

pub const SCHEMA_VERSION: u32 = 1;

/// The Gaussian-mixture task every run trains and evaluates on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    #[serde(default)]
    pub mixture: MixtureSpec,
    #[serde(default = "default_test_per_class")]
    pub test_per_class: usize,
    /// Seeds the mixture means and the samples; shared by every run of a sweep.
    #[serde(default)]
    pub seed: u64,
}

fn default_test_per_class() -> usize {
    100
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            mixture: MixtureSpec::default(),
            test_per_class: default_test_per_class(),
            seed: 0,
        }
    }
}

impl DatasetConfig {
    /// Train and test splits drawn from one mixture.
    pub fn generate(&self) -> Result<(Dataset<f64>, Dataset<f64>)> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mixture = GaussianMixture::new(self.mixture.clone(), &mut rng)?;
        let train = mixture.sample(self.mixture.per_class, &mut rng)?.data;
        let test = mixture.sample(self.test_per_class, &mut rng)?.data;
        Ok((train, test))
    }
}

/// An objective of a sweep; ρ comes from the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectiveConfig {
    pub kind: ObjectiveKind,
    #[serde(default)]
    pub rho_x: Option<f64>,
    #[serde(default)]
    pub rho_y: Option<f64>,
    #[serde(default)]
    pub lambda: Option<f64>,
    #[serde(default)]
    pub noising_only: bool,
}

impl ObjectiveConfig {
    pub fn new(kind: ObjectiveKind) -> Self {
        Self {
            kind,
            rho_x: None,
            rho_y: None,
            lambda: None,
            noising_only: false,
        }
    }

    pub fn at(&self, rho: f64) -> ObjectiveSpec {
        ObjectiveSpec {
            kind: self.kind,
            rho,
            rho_x: self.rho_x,
            rho_y: self.rho_y,
            lambda: self.lambda,
            noising_only: self.noising_only,
            domain: None,
        }
    }
}

/// Training budget shared by every run; the seed comes from the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Budget {
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub eval_every: usize,
}

impl Default for Budget {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            steps: t.steps,
            batch_size: t.batch_size,
            learning_rate: t.learning_rate,
            eval_every: t.eval_every,
        }
    }
}

impl Budget {
    pub fn with_seed(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            steps: self.steps,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            eval_every: self.eval_every,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema: u32,
    #[serde(default)]
    pub dataset: DatasetConfig,
    pub objectives: Vec<ObjectiveConfig>,
    pub rhos: Vec<f64>,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub architecture: Architecture,
    #[serde(default)]
    pub training: Budget,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}

/// Everything that determines one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    pub objective: ObjectiveSpec,
    pub seed: u64,
    pub dataset: DatasetConfig,
    pub architecture: Architecture,
    pub training: Budget,
}

pub fn hash_json<S: Serialize>(value: &S) -> Result<String> {
    Ok(hex::encode(Sha256::digest(serde_json::to_vec(value)?)))
}

impl RunSpec {
    /// Stable directory name; the deterministic objective has no ρ.
    pub fn id(&self) -> String {
        match self.rho() {
            Some(rho) => format!("{}_rho{:+.3}_seed{}", self.objective.kind, rho, self.seed),
            None => format!("{}_seed{}", self.objective.kind, self.seed),
        }
    }

    pub fn rho(&self) -> Option<f64> {
        (self.objective.kind != ObjectiveKind::Determ).then_some(self.objective.rho)
    }

    pub fn hash(&self) -> Result<String> {
        hash_json(self)
    }

    pub fn train_config(&self) -> TrainConfig {
        self.training.with_seed(self.seed)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_vec_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_slice(&std::fs::read(path)?)?)
    }
}

impl ExperimentConfig {
    pub fn new(objectives: Vec<ObjectiveConfig>, rhos: Vec<f64>, seeds: Vec<u64>) -> Self {
        Self {
            schema: SCHEMA_VERSION,
            dataset: DatasetConfig::default(),
            objectives,
            rhos,
            seeds,
            architecture: Architecture::default(),
            training: Budget::default(),
            output_dir: default_output_dir(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn hash(&self) -> Result<String> {
        hash_json(self)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(LabError::Config(m));
        if self.schema != SCHEMA_VERSION {
            return bad(format!("schema {} is not supported, expected {SCHEMA_VERSION}", self.schema));
        }
        if self.objectives.is_empty() {
            return bad("no objectives".into());
        }
        if self.rhos.is_empty() {
            return bad("empty rho grid".into());
        }
        if self.seeds.is_empty() {
            return bad("no seeds".into());
        }
        let mut kinds: Vec<_> = self.objectives.iter().map(|o| o.kind).collect();
        kinds.sort();
        kinds.dedup();
        if kinds.len() != self.objectives.len() {
            return bad("each objective kind may appear once".into());
        }
        let mut seeds = self.seeds.clone();
        seeds.sort();
        seeds.dedup();
        if seeds.len() != self.seeds.len() {
            return bad("duplicate seeds".into());
        }
        let mut rhos = self.rhos.clone();
        rhos.sort_by(f64::total_cmp);
        if rhos.windows(2).any(|w| w[0] == w[1]) {
            return bad("duplicate rho values".into());
        }
        for o in &self.objectives {
            for &rho in &self.rhos {
                o.at(rho).validate()?;
            }
            self.training.with_seed(0).validate(o.kind)?;
        }
        GaussianMixture::new(self.dataset.mixture.clone(), &mut ChaCha8Rng::seed_from_u64(0))?;
        if self.dataset.mixture.per_class == 0 || self.dataset.test_per_class == 0 {
            return bad("dataset splits must be non-empty".into());
        }
        Ok(())
    }

    /// Runs in (objective, ρ, seed) order; the deterministic objective runs once per seed.
    pub fn runs(&self) -> Vec<RunSpec> {
        let mut runs = Vec::new();
        for o in &self.objectives {
            let rhos: &[f64] = if o.kind == ObjectiveKind::Determ { &[0.0] } else { &self.rhos };
            for &rho in rhos {
                for &seed in &self.seeds {
                    runs.push(RunSpec {
                        objective: o.at(rho),
                        seed,
                        dataset: self.dataset.clone(),
                        architecture: self.architecture.clone(),
                        training: self.training.clone(),
                    });
                }
            }
        }
        runs.sort_by(|a, b| {
            a.objective
                .kind
                .cmp(&b.objective.kind)
                .then(a.objective.rho.total_cmp(&b.objective.rho))
                .then(a.seed.cmp(&b.seed))
        });
        runs
    }
}

/// Inclusive grid `start:stop:count`, or a single value.
pub fn parse_grid(text: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = text.split(':').collect();
    let num = |s: &str| {
        s.trim()
            .parse::<f64>()
            .map_err(|_| LabError::Config(format!("`{s}` is not a number in grid `{text}`")))
    };
    match parts.as_slice() {
        [v] => Ok(vec![num(v)?]),
        [a, b, n] => {
            let (a, b) = (num(a)?, num(b)?);
            let n: usize = n
                .trim()
                .parse()
                .map_err(|_| LabError::Config(format!("`{n}` is not a point count in grid `{text}`")))?;
            match n {
                0 => Err(LabError::Config(format!("grid `{text}` has no points"))),
                1 => Ok(vec![a]),
                _ => Ok((0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()),
            }
        }
        _ => Err(LabError::Config(format!("grid `{text}` is not start:stop:count"))),
    }
}

/// `min, min + step, …` up to `max` inclusive, tolerant to rounding.
pub fn step_grid(min: f64, max: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !(min <= max) || !min.is_finite() || !max.is_finite() {
        return Err(LabError::Config(format!("bad grid {min}..{max} step {step}")));
    }
    let n = ((max - min) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| min + step * i as f64).collect())
}
