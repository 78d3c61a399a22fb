use ceb_core::data::Dataset;
use ceb_core::evalkit::{random_label_dataset, GaussianMixture, MixtureSpec};
use ceb_core::objectives::{train, Architecture, Model, ObjectiveKind, ObjectiveSpec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{Budget, SCHEMA_VERSION};
use crate::error::{LabError, Result};

/// Training on fixed random labels, where any accuracy above chance is memorization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MemorizationConfig {
    pub schema: u32,
    pub examples: usize,
    pub classes: usize,
    pub dim: usize,
    pub objectives: Vec<ObjectiveSpec>,
    pub seeds: Vec<u64>,
    pub architecture: Architecture,
    pub training: Budget,
    /// Final train accuracy at or above this counts as learned.
    pub learned_threshold: f64,
    /// Train accuracy that must never be exceeded to count as not learned.
    pub chance_ceiling: f64,
}

impl Default for MemorizationConfig {
    fn default() -> Self {
        Self {
            schema: SCHEMA_VERSION,
            examples: 256,
            classes: 10,
            dim: 16,
            objectives: vec![
                ObjectiveSpec::new(ObjectiveKind::Determ, 0.0),
                ObjectiveSpec::new(ObjectiveKind::Vceb, 0.0),
            ],
            seeds: vec![0, 1, 2],
            architecture: Architecture::default(),
            training: Budget {
                steps: 3000,
                batch_size: 64,
                learning_rate: 1e-3,
                eval_every: 100,
            },
            learned_threshold: 0.9,
            chance_ceiling: 0.15,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemorizationRun {
    pub objective: ObjectiveKind,
    pub rho: f64,
    pub seed: u64,
    /// (step, train accuracy) at every evaluation.
    pub curve: Vec<(usize, f64)>,
    pub max_train_acc: f64,
    pub final_train_acc: f64,
    pub learned: bool,
    pub stayed_at_chance: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemorizationReport {
    pub chance: f64,
    pub runs: Vec<MemorizationRun>,
}

impl MemorizationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.schema != SCHEMA_VERSION {
            return Err(LabError::Config(format!("schema {} is not supported", self.schema)));
        }
        if self.objectives.is_empty() || self.seeds.is_empty() || self.examples == 0 {
            return Err(LabError::Config("memorization needs objectives, seeds and examples".into()));
        }
        for o in &self.objectives {
            o.validate()?;
            if !o.kind.is_supervised() {
                return Err(LabError::Config(format!("{} does not predict labels", o.kind)));
            }
            self.training.with_seed(0).validate(o.kind)?;
        }
        Ok(())
    }

    /// Unseparated mixture inputs with labels fixed by `seed`.
    pub fn dataset(&self, seed: u64) -> Result<Dataset<f64>> {
        let spec = MixtureSpec {
            classes: self.classes,
            per_class: self.examples.div_ceil(self.classes),
            dim: self.dim,
            separation: 0.0,
            label_noise: 0.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pool = GaussianMixture::new(spec.clone(), &mut rng)?.sample::<f64, _>(spec.per_class, &mut rng)?;
        let idx: Vec<usize> = (0..self.examples).collect();
        let inputs = pool.data.subset(&idx).inputs;
        Ok(random_label_dataset(inputs, self.classes, seed)?.data)
    }
}

fn run_one(cfg: &MemorizationConfig, objective: &ObjectiveSpec, seed: u64) -> Result<MemorizationRun> {
    let data = cfg.dataset(seed)?;
    let mut init = ChaCha8Rng::seed_from_u64(seed);
    let mut model = Model::new(objective.clone(), cfg.architecture.clone(), cfg.dim, cfg.classes, &mut init)?;
    let trace = train(&mut model, &data, None, &cfg.training.with_seed(seed))?;
    let curve: Vec<(usize, f64)> = trace
        .rows
        .iter()
        .map(|r| (r.step, r.train_acc.unwrap_or(f64::NAN)))
        .collect();
    let max_train_acc = curve.iter().map(|c| c.1).fold(f64::NEG_INFINITY, f64::max);
    let final_train_acc = curve.last().map_or(f64::NAN, |c| c.1);
    Ok(MemorizationRun {
        objective: objective.kind,
        rho: objective.rho,
        seed,
        curve,
        max_train_acc,
        final_train_acc,
        learned: final_train_acc >= cfg.learned_threshold,
        stayed_at_chance: max_train_acc <= cfg.chance_ceiling,
    })
}

/// Trains every (objective, seed) pair on its own random labelling.
pub fn run_memorization(cfg: &MemorizationConfig) -> Result<MemorizationReport> {
    cfg.validate()?;
    let pairs: Vec<(&ObjectiveSpec, u64)> = cfg
        .objectives
        .iter()
        .flat_map(|o| cfg.seeds.iter().map(move |&s| (o, s)))
        .collect();
    let runs = pairs
        .par_iter()
        .map(|&(o, s)| run_one(cfg, o, s))
        .collect::<Result<Vec<_>>>()?;
    Ok(MemorizationReport {
        chance: 1.0 / cfg.classes as f64,
        runs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_fixed_per_seed() {
        let cfg = MemorizationConfig::default();
        let a = cfg.dataset(4).unwrap();
        assert_eq!(a.len(), 256);
        assert_eq!(a, cfg.dataset(4).unwrap());
        assert_ne!(a.labels, cfg.dataset(5).unwrap().labels);
    }

    #[test]
    fn short_run_reports_curves() {
        let cfg = MemorizationConfig {
            examples: 40,
            classes: 4,
            dim: 3,
            seeds: vec![0],
            architecture: Architecture {
                hidden: vec![8],
                mixture_components: 2,
                ..Architecture::default()
            },
            training: Budget {
                steps: 20,
                batch_size: 10,
                learning_rate: 1e-2,
                eval_every: 10,
            },
            ..MemorizationConfig::default()
        };
        let r = run_memorization(&cfg).unwrap();
        assert_eq!(r.chance, 0.25);
        assert_eq!(r.runs.len(), 2);
        for run in &r.runs {
            assert_eq!(run.curve.len(), 3);
            assert!(run.max_train_acc >= run.final_train_acc);
        }
        let bad = MemorizationConfig {
            objectives: vec![ObjectiveSpec::new(ObjectiveKind::Denoise, 0.0)],
            ..MemorizationConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
