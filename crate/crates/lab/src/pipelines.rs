use std::io::Write;

use ceb_core::data::Dataset;
use ceb_core::diffgrad::Tensor;
use ceb_core::evalkit::{
    calibration_curve, detection_metrics, ood_scores, CalibrationCurve, DetectionMetrics, Orientation,
};
use ceb_core::objectives::Model;
use ceb_core::robustness::{pgd_attack, targeted_success_rate, AttackSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub epsilon: f64,
    /// Accuracy against true labels on the evaluated model.
    pub accuracy: f64,
    /// Targeted success rate on the attacked model; empty for untargeted attacks.
    pub success_rate: Option<f64>,
}

/// Input bounds for attacks: the model's fitted domain, else the data's range.
pub fn attack_domain(model: &Model<f64>, data: &Dataset<f64>) -> [f64; 2] {
    model.spec().domain.unwrap_or_else(|| {
        let v = data.inputs.data();
        let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        [lo, hi]
    })
}

/// Accuracy (and targeted success) at every ε; examples crafted on `source`, scored on `target`.
pub fn attack_curve(
    source: &Model<f64>,
    target: &Model<f64>,
    data: &Dataset<f64>,
    base: &AttackSpec,
    epsilons: &[f64],
) -> Result<Vec<CurvePoint>> {
    epsilons
        .par_iter()
        .map(|&epsilon| {
            let spec = AttackSpec {
                epsilon,
                ..base.clone()
            };
            let out = pgd_attack(source, &data.inputs, &data.labels, &spec)?;
            let pred = target.predict(&out.x_adv)?;
            let hits = pred.iter().zip(&data.labels).filter(|(p, y)| p == y).count();
            let success_rate = match spec.target {
                Some(t) => targeted_success_rate(source, &data.inputs, &out.x_adv, &data.labels, t)?,
                None => None,
            };
            Ok(CurvePoint {
                epsilon,
                accuracy: hits as f64 / data.len() as f64,
                success_rate,
            })
        })
        .collect()
}

pub fn write_curve_csv<W: Write>(points: &[CurvePoint], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for p in points {
        w.serialize(p)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OodSource {
    /// Uniform noise over the data domain box.
    #[default]
    Uniform,
    /// The test inputs reflected through the origin.
    Flipped,
}

impl std::str::FromStr for OodSource {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(OodSource::Uniform),
            "flipped" => Ok(OodSource::Flipped),
            other => Err(LabError::Config(format!("unknown OoD source `{other}`"))),
        }
    }
}

pub fn ood_inputs(source: OodSource, data: &Dataset<f64>, domain: [f64; 2], seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match source {
        OodSource::Uniform => Tensor::from_fn(data.len(), data.input_dim(), |_, _| rng.random_range(domain[0]..=domain[1])),
        OodSource::Flipped => data.inputs.map(|v| -v),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub in_distribution: bool,
    #[serde(rename = "H")]
    pub entropy: f64,
    #[serde(rename = "R")]
    pub rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OodReport {
    pub source: OodSource,
    /// Lower is in-distribution for both scores.
    pub orientation: Orientation,
    #[serde(rename = "H")]
    pub entropy: DetectionMetrics,
    #[serde(rename = "R")]
    pub rate: Option<DetectionMetrics>,
    pub scores: Vec<ScoreRow>,
}

pub fn ood_report(model: &Model<f64>, data: &Dataset<f64>, source: OodSource, seed: u64) -> Result<OodReport> {
    let domain = attack_domain(model, data);
    let outside = ood_inputs(source, data, domain, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let a = ood_scores(model, &data.inputs, &mut rng)?;
    let b = ood_scores(model, &outside, &mut rng)?;
    let orientation = Orientation::LowerIsIn;
    let entropy = detection_metrics(&a.entropy, &b.entropy, orientation)?;
    let rate = match (&a.rate, &b.rate) {
        (Some(ra), Some(rb)) => Some(detection_metrics(ra, rb, orientation)?),
        _ => None,
    };
    let rows = |s: &ceb_core::evalkit::OodScores, flag: bool| -> Vec<ScoreRow> {
        (0..s.entropy.len())
            .map(|i| ScoreRow {
                in_distribution: flag,
                entropy: s.entropy[i],
                rate: s.rate.as_ref().map(|r| r[i]),
            })
            .collect()
    };
    let mut scores = rows(&a, true);
    scores.extend(rows(&b, false));
    Ok(OodReport {
        source,
        orientation,
        entropy,
        rate,
        scores,
    })
}

pub fn write_scores_csv<W: Write>(rows: &[ScoreRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Reliability of the top-class confidence on `data`.
pub fn calibration_report(model: &Model<f64>, data: &Dataset<f64>) -> Result<CalibrationCurve> {
    let lp = model.predict_log_proba(&data.inputs)?;
    let pred = lp.argmax_rows();
    let conf: Vec<f64> = (0..lp.rows()).map(|r| lp.get(r, pred[r]).exp().clamp(0.0, 1.0)).collect();
    let correct: Vec<bool> = pred.iter().zip(&data.labels).map(|(p, y)| p == y).collect();
    Ok(calibration_curve(&conf, &correct)?)
}

#[derive(Serialize)]
struct BinRow {
    lo: f64,
    hi: f64,
    count: usize,
    mean_confidence: Option<f64>,
    accuracy: Option<f64>,
    interval_lo: Option<f64>,
    interval_hi: Option<f64>,
}

pub fn write_calibration_csv<W: Write>(curve: &CalibrationCurve, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for b in &curve.bins {
        w.serialize(BinRow {
            lo: b.lo,
            hi: b.hi,
            count: b.count,
            mean_confidence: b.mean_confidence,
            accuracy: b.accuracy,
            interval_lo: b.interval.map(|i| i.0),
            interval_hi: b.interval.map(|i| i.1),
        })?;
    }
    w.flush()?;
    Ok(())
}
