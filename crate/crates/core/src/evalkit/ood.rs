use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::diffgrad::Tensor;
use crate::error::Result;
use crate::objectives::Model;
use crate::scalar::Scalar;

/// Per-example OoD scores; lower means more in-distribution for both.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OodScores {
    /// Entropy of the classifier's predictive distribution.
    pub entropy: Vec<f64>,
    /// Rate log e(z|x) − log m(z); absent for deterministic models.
    pub rate: Option<Vec<f64>>,
}

/// Entropy of each row of a log-probability matrix.
pub fn predictive_entropy<T: Scalar>(log_proba: &Tensor<T>) -> Vec<f64> {
    (0..log_proba.rows())
        .map(|r| {
            -log_proba
                .row(r)
                .iter()
                .map(|lp| {
                    let lp = lp.as_f64();
                    if lp == f64::NEG_INFINITY { 0.0 } else { lp.exp() * lp }
                })
                .sum::<f64>()
        })
        .collect()
}

/// H for every model, and R when the model has a learned marginal.
pub fn ood_scores<T: Scalar, R: Rng + ?Sized>(model: &Model<T>, inputs: &Tensor<T>, rng: &mut R) -> Result<OodScores> {
    let entropy = predictive_entropy(&model.predict_log_proba(inputs)?);
    let rate = if model.kind().is_stochastic() {
        Some(rate_scores(model, inputs, rng)?)
    } else {
        None
    };
    Ok(OodScores { entropy, rate })
}

/// R alone; a capability error for models without a marginal.
pub fn rate_scores<T: Scalar, R: Rng + ?Sized>(model: &Model<T>, inputs: &Tensor<T>, rng: &mut R) -> Result<Vec<f64>> {
    Ok(model.rate_scores(inputs, rng)?.into_iter().map(|v| v.as_f64()).collect())
}
