use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{BatchSampler, Dataset};
use crate::diffgrad::Tape;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::model::Model;
use super::ObjectiveKind;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub steps: usize,
    /// Minibatch size K; also the batch size of the R_X estimate.
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Steps between evaluations; a row is also written at step 0 and at the end.
    pub eval_every: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 5000,
            batch_size: 100,
            learning_rate: 1e-3,
            eval_every: 100,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, kind: ObjectiveKind) -> Result<()> {
        if self.eval_every == 0 || !(self.learning_rate > 0.0) {
            return Err(Error::InvalidArgument("eval_every and learning_rate must be positive".into()));
        }
        let contrastive = matches!(kind, ObjectiveKind::CatgenBidir | ObjectiveKind::Denoise);
        if self.batch_size < 2 && (contrastive || kind.is_stochastic()) {
            return Err(Error::InvalidArgument(
                "batch size must be at least 2 for minibatch-marginal estimates".into(),
            ));
        }
        Ok(())
    }
}

/// Dataset-level diagnostics averaged over minibatches of size K.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub accuracy: Option<f64>,
    pub loss: Option<f64>,
    pub rate: Option<f64>,
    pub re_x: Option<f64>,
    pub r_x: Option<f64>,
    pub log_c: Option<f64>,
    pub consistency: Option<f64>,
}

/// One line of the training trace CSV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub step: usize,
    /// Mean minibatch loss since the previous row.
    pub loss: Option<f64>,
    pub train_acc: Option<f64>,
    pub test_acc: Option<f64>,
    #[serde(rename = "R")]
    pub rate: Option<f64>,
    #[serde(rename = "Re_X")]
    pub re_x: Option<f64>,
    #[serde(rename = "R_X")]
    pub r_x: Option<f64>,
    pub consistency: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingTrace {
    pub rows: Vec<TraceRow>,
}

impl TrainingTrace {
    pub fn last(&self) -> Option<&TraceRow> {
        self.rows.last()
    }

    /// Largest R_X over all evaluations.
    pub fn max_r_x(&self) -> Option<f64> {
        self.rows.iter().filter_map(|r| r.r_x).reduce(f64::max)
    }

    pub fn max_train_acc(&self) -> Option<f64> {
        self.rows.iter().filter_map(|r| r.train_acc).reduce(f64::max)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

/// Test-time accuracy at the encoder means, plus sampled estimator averages.
pub fn evaluate<T: Scalar, R: Rng + ?Sized>(
    model: &Model<T>,
    data: &Dataset<T>,
    batch_size: usize,
    rng: &mut R,
) -> Result<EvalMetrics> {
    if data.is_empty() {
        return Err(Error::InvalidArgument("cannot evaluate on an empty dataset".into()));
    }
    let accuracy = if model.kind().is_supervised() {
        let pred = model.predict(&data.inputs)?;
        let hits = pred.iter().zip(&data.labels).filter(|(p, y)| p == y).count();
        Some(hits as f64 / data.len() as f64)
    } else {
        None
    };
    let k = batch_size.clamp(1, data.len());
    let mut cols: [Vec<f64>; 6] = Default::default();
    for b in data.batches(k).filter(|b| b.len() == k) {
        let mut tape = Tape::new();
        let fwd = model.forward_loss(&mut tape, &b.inputs, &b.labels, rng)?;
        let m = model.batch_metrics(&mut tape, &fwd, &b.labels)?;
        for (c, v) in cols
            .iter_mut()
            .zip([Some(m.loss), m.rate, m.re_x, m.r_x, m.log_c, m.consistency])
        {
            c.extend(v);
        }
    }
    Ok(EvalMetrics {
        accuracy,
        loss: mean(&cols[0]),
        rate: mean(&cols[1]),
        re_x: mean(&cols[2]),
        r_x: mean(&cols[3]),
        log_c: mean(&cols[4]),
        consistency: mean(&cols[5]),
    })
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(id);
    r
}

/// Trains `model` in place and returns the evaluation trace.
///
/// Estimators are evaluated on `test` when given, otherwise on `train`.
pub fn train<T: Scalar>(
    model: &mut Model<T>,
    train: &Dataset<T>,
    test: Option<&Dataset<T>>,
    cfg: &TrainConfig,
) -> Result<TrainingTrace> {
    cfg.validate(model.kind())?;
    if train.input_dim() != model.input_dim() {
        return Err(Error::Shape(format!(
            "model expects {} input features, data has {}",
            model.input_dim(),
            train.input_dim()
        )));
    }
    model.fit_domain(&train.inputs);
    if model.kind().is_supervised() {
        model.set_label_prior(&train.label_marginal())?;
    }
    let mut data_rng = stream(cfg.seed, 1);
    let mut noise_rng = stream(cfg.seed, 2);
    let mut eval_rng = stream(cfg.seed, 3);
    let mut sampler = BatchSampler::new(train.len(), cfg.batch_size.min(train.len()))?;
    let mut opt = model.optimizers(cfg.learning_rate);
    let mut trace = TrainingTrace::default();
    let mut pending: Vec<f64> = Vec::new();
    let eval_set = test.unwrap_or(train);

    let mut record = |model: &Model<T>, step: usize, pending: &mut Vec<f64>| -> Result<()> {
        let ev = evaluate(model, eval_set, cfg.batch_size, &mut eval_rng)?;
        let train_acc = if model.kind().is_supervised() {
            let pred = model.predict(&train.inputs)?;
            Some(pred.iter().zip(&train.labels).filter(|(p, y)| p == y).count() as f64 / train.len() as f64)
        } else {
            None
        };
        trace.rows.push(TraceRow {
            step,
            loss: mean(pending),
            train_acc,
            test_acc: test.and(ev.accuracy),
            rate: ev.rate,
            re_x: ev.re_x,
            r_x: ev.r_x,
            consistency: ev.consistency,
        });
        pending.clear();
        Ok(())
    };

    record(model, 0, &mut pending)?;
    for step in 1..=cfg.steps {
        let idx = sampler.next_batch(&mut data_rng).to_vec();
        let batch = train.subset(&idx);
        let m = model.train_step(&mut opt, &batch.inputs, &batch.labels, &mut noise_rng)?;
        pending.push(m.loss);
        if step % cfg.eval_every == 0 || step == cfg.steps {
            record(model, step, &mut pending)?;
        }
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffgrad::Tensor;
    use crate::objectives::{Architecture, ObjectiveSpec};

    /// Three linearly separable clusters in the plane.
    fn toy(n: usize, rng: &mut ChaCha8Rng) -> Dataset<f64> {
        let centers = [(0.0, 3.0), (-3.0, -2.0), (3.0, -2.0)];
        let labels: Vec<usize> = (0..n).map(|i| i % 3).collect();
        let x = Tensor::from_fn(n, 2, |r, c| {
            let (a, b) = centers[labels[r]];
            (if c == 0 { a } else { b }) + rng.random_range(-0.5..0.5)
        });
        Dataset::new(x, labels, 3).unwrap()
    }

    #[test]
    fn every_loss_descends_on_separable_toy() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let data = toy(90, &mut rng);
        let arch = Architecture {
            hidden: vec![16],
            latent_dim: 2,
            classifier_hidden: vec![8],
            mixture_components: 4,
            ..Architecture::default()
        };
        let cfg = TrainConfig {
            steps: 200,
            batch_size: 30,
            learning_rate: 1e-2,
            eval_every: 200,
            seed: 1,
        };
        for kind in ObjectiveKind::ALL {
            let mut model = Model::new(ObjectiveSpec::new(kind, 0.0), arch.clone(), 2, 3, &mut rng).unwrap();
            model.fit_domain(&data.inputs);
            let mut er = ChaCha8Rng::seed_from_u64(9);
            let before = evaluate(&model, &data, 90, &mut er).unwrap().loss.unwrap();
            let trace = train(&mut model, &data, None, &cfg).unwrap();
            let mut er = ChaCha8Rng::seed_from_u64(9);
            let after = evaluate(&model, &data, 90, &mut er).unwrap().loss.unwrap();
            assert!(after < before, "{kind}: {before} -> {after}");
            assert_eq!(trace.rows.len(), 2);
            if kind.is_supervised() {
                assert!(trace.last().unwrap().train_acc.unwrap() > 0.9, "{kind}");
            }
        }
    }

    #[test]
    fn training_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let data = toy(30, &mut rng);
        let cfg = TrainConfig {
            steps: 20,
            batch_size: 10,
            eval_every: 10,
            ..TrainConfig::default()
        };
        let run = || {
            let mut init = ChaCha8Rng::seed_from_u64(1);
            let mut model =
                Model::<f64>::new(ObjectiveSpec::new(ObjectiveKind::Vceb, 0.0), Architecture::default(), 2, 3, &mut init)
                    .unwrap();
            let trace = train(&mut model, &data, Some(&data), &cfg).unwrap();
            let mut csv = Vec::new();
            trace.write_csv(&mut csv).unwrap();
            csv
        };
        let a = run();
        assert_eq!(a, run());
        let text = String::from_utf8(a).unwrap();
        assert!(text.starts_with("step,loss,train_acc,test_acc,R,Re_X,R_X,consistency\n"));
        assert_eq!(text.lines().count(), 4);
    }
}
