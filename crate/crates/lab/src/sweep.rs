use std::fs;
use std::path::Path;

use ceb_core::data::Dataset;
use ceb_core::objectives::{evaluate, train, Model, ObjectiveKind, TrainingTrace};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, RunSpec, SCHEMA_VERSION};
use crate::error::{LabError, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const RUN_FILE: &str = "run.json";
pub const TRACE_FILE: &str = "trace.csv";
pub const METRICS_FILE: &str = "metrics.json";
pub const MODEL_STEM: &str = "model";

/// Summary of a finished run, evaluated on the test split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FinalMetrics {
    pub train_acc: Option<f64>,
    pub test_acc: Option<f64>,
    pub rate: Option<f64>,
    pub re_x: Option<f64>,
    pub r_x: Option<f64>,
    /// Largest R_X seen at any evaluation.
    pub max_r_x: Option<f64>,
    pub consistency: Option<f64>,
    /// H(Y) + ⟨log c(y|z)⟩, a lower bound on I(Y;Z).
    pub i_yz_lower: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub id: String,
    pub objective: ObjectiveKind,
    pub rho: Option<f64>,
    pub seed: u64,
    pub config_hash: String,
    pub status: RunStatus,
    pub error: Option<String>,
    /// Paths relative to the output directory.
    pub artifacts: Vec<String>,
    pub metrics: Option<FinalMetrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema: u32,
    pub config_hash: String,
    pub runs: Vec<RunRecord>,
}

impl Manifest {
    pub fn all_ok(&self) -> bool {
        self.runs.iter().all(|r| r.status == RunStatus::Ok)
    }

    pub fn failures(&self) -> impl Iterator<Item = &RunRecord> {
        self.runs.iter().filter(|r| r.status == RunStatus::Failed)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_slice(&fs::read(path)?)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_vec_pretty(self)?)?;
        Ok(())
    }

    /// Every referenced artifact that is not on disk under `root`.
    pub fn missing_artifacts(&self, root: &Path) -> Vec<String> {
        self.runs
            .iter()
            .flat_map(|r| r.artifacts.iter())
            .filter(|a| !root.join(a).is_file())
            .cloned()
            .collect()
    }
}

fn entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|&&v| v > 0.0).map(|v| v * v.ln()).sum::<f64>()
}

/// Builds, trains and evaluates the model of one run.
pub fn train_run(spec: &RunSpec, train_set: &Dataset<f64>, test_set: &Dataset<f64>) -> Result<(Model<f64>, TrainingTrace, FinalMetrics)> {
    let mut init = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut model = Model::new(
        spec.objective.clone(),
        spec.architecture.clone(),
        train_set.input_dim(),
        train_set.classes,
        &mut init,
    )?;
    let cfg = spec.train_config();
    let trace = train(&mut model, train_set, Some(test_set), &cfg)?;
    let mut eval_rng = ChaCha8Rng::seed_from_u64(spec.seed);
    eval_rng.set_stream(4);
    let ev = evaluate(&model, test_set, cfg.batch_size, &mut eval_rng)?;
    let last = trace.last().copied();
    let metrics = FinalMetrics {
        train_acc: last.and_then(|r| r.train_acc),
        test_acc: ev.accuracy,
        rate: ev.rate,
        re_x: ev.re_x,
        r_x: ev.r_x,
        max_r_x: trace.max_r_x(),
        consistency: ev.consistency,
        i_yz_lower: ev.log_c.map(|lc| entropy(&train_set.label_marginal()) + lc),
    };
    Ok((model, trace, metrics))
}

/// Trains one run and writes its artifacts into `dir`; returns the file names.
pub fn write_run(spec: &RunSpec, data: &(Dataset<f64>, Dataset<f64>), dir: &Path) -> Result<(Vec<String>, FinalMetrics)> {
    fs::create_dir_all(dir)?;
    let (model, trace, metrics) = train_run(spec, &data.0, &data.1)?;
    spec.save(&dir.join(RUN_FILE))?;
    trace.write_csv(fs::File::create(dir.join(TRACE_FILE))?)?;
    fs::write(dir.join(METRICS_FILE), serde_json::to_vec_pretty(&metrics)?)?;
    model.save(&dir.join(MODEL_STEM))?;
    let files = [RUN_FILE, TRACE_FILE, METRICS_FILE, "model.json", "model.bin"];
    Ok((files.iter().map(|f| f.to_string()).collect(), metrics))
}

fn execute_run(spec: &RunSpec, data: &(Dataset<f64>, Dataset<f64>), root: &Path) -> Result<(Vec<String>, FinalMetrics)> {
    let id = spec.id();
    let (files, metrics) = write_run(spec, data, &root.join(&id))?;
    Ok((files.iter().map(|f| format!("{id}/{f}")).collect(), metrics))
}

/// Runs every (objective, ρ, seed) point and writes `manifest.json` into the output directory.
///
/// A failing run is recorded in the manifest and does not stop the others.
pub fn run_sweep(cfg: &ExperimentConfig, threads: Option<usize>) -> Result<Manifest> {
    cfg.validate()?;
    let root = cfg.output_dir.clone();
    fs::create_dir_all(&root)?;
    let data = cfg.dataset.generate()?;
    let specs = cfg.runs();
    let work = || -> Vec<RunRecord> {
        specs
            .par_iter()
            .map(|spec| {
                let hash = spec.hash().unwrap_or_default();
                let outcome = execute_run(spec, &data, &root);
                let (status, error, artifacts, metrics) = match outcome {
                    Ok((a, m)) => (RunStatus::Ok, None, a, Some(m)),
                    Err(e) => (RunStatus::Failed, Some(e.to_string()), Vec::new(), None),
                };
                RunRecord {
                    id: spec.id(),
                    objective: spec.objective.kind,
                    rho: spec.rho(),
                    seed: spec.seed,
                    config_hash: hash,
                    status,
                    error,
                    artifacts,
                    metrics,
                }
            })
            .collect()
    };
    let runs = match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| LabError::Config(format!("thread pool: {e}")))?
            .install(work),
        None => work(),
    };
    let manifest = Manifest {
        schema: SCHEMA_VERSION,
        config_hash: cfg.hash()?,
        runs,
    };
    manifest.save(&root.join(MANIFEST_FILE))?;
    Ok(manifest)
}

/// A trained run loaded back from its directory.
pub fn load_run(dir: &Path) -> Result<(RunSpec, Model<f64>)> {
    let run_file = dir.join(RUN_FILE);
    if !run_file.is_file() {
        return Err(LabError::MissingArtifact(run_file.display().to_string()));
    }
    let spec = RunSpec::load(&run_file)?;
    let model = Model::load(&dir.join(MODEL_STEM))?;
    Ok((spec, model))
}
