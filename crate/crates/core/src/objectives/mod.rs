//! Training objectives, their estimators, and a trainable model wiring them together.

pub mod losses;
mod model;
mod train;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use losses::{
    bidir_ceb_loss, catgen_log_prob, consistent_classifier, denoising_ceb_loss, determ_ce_loss,
    hier_ceb_loss, noise_fn, noise_sample, rate, rate_lower_bound, residual_info, vceb_loss,
    vib_loss, DirectionTerms, LayerTerms,
};
pub use model::{Architecture, BatchMetrics, Forward, Model, Optimizers};
pub use train::{evaluate, train, EvalMetrics, TraceRow, TrainConfig, TrainingTrace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveKind {
    Vceb,
    Vib,
    Determ,
    Bidir,
    CatgenBidir,
    Hier,
    Denoise,
}

impl ObjectiveKind {
    pub const ALL: [ObjectiveKind; 7] = [
        ObjectiveKind::Vceb,
        ObjectiveKind::Vib,
        ObjectiveKind::Determ,
        ObjectiveKind::Bidir,
        ObjectiveKind::CatgenBidir,
        ObjectiveKind::Hier,
        ObjectiveKind::Denoise,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ObjectiveKind::Vceb => "vceb",
            ObjectiveKind::Vib => "vib",
            ObjectiveKind::Determ => "determ",
            ObjectiveKind::Bidir => "bidir",
            ObjectiveKind::CatgenBidir => "catgen_bidir",
            ObjectiveKind::Hier => "hier",
            ObjectiveKind::Denoise => "denoise",
        }
    }

    /// Whether the encoder is a distribution rather than a point map.
    pub fn is_stochastic(self) -> bool {
        self != ObjectiveKind::Determ
    }

    /// Whether the model has a backward encoder, and so a residual estimate.
    pub fn has_backward(self) -> bool {
        !matches!(self, ObjectiveKind::Vib | ObjectiveKind::Determ)
    }

    /// Whether the model predicts labels.
    pub fn is_supervised(self) -> bool {
        self != ObjectiveKind::Denoise
    }
}

impl fmt::Display for ObjectiveKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ObjectiveKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ObjectiveKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown objective `{s}`")))
    }
}

/// Which objective to train and its trade-off parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectiveSpec {
    pub kind: ObjectiveKind,
    /// log γ, equivalently log(β − 1).
    #[serde(default)]
    pub rho: f64,
    /// Per-direction overrides for the bidirectional objectives.
    #[serde(default)]
    pub rho_x: Option<f64>,
    #[serde(default)]
    pub rho_y: Option<f64>,
    /// Noise scale for the denoising objective.
    #[serde(default)]
    pub lambda: Option<f64>,
    /// Keep only the clean-input direction of the denoising objective.
    #[serde(default)]
    pub noising_only: bool,
    /// Input domain `[lo, hi]` the denoising noise is scaled to; taken from
    /// the training inputs when absent.
    #[serde(default)]
    pub domain: Option<[f64; 2]>,
}

impl ObjectiveSpec {
    pub fn new(kind: ObjectiveKind, rho: f64) -> Self {
        Self {
            kind,
            rho,
            rho_x: None,
            rho_y: None,
            lambda: None,
            noising_only: false,
            domain: None,
        }
    }

    pub fn gamma(&self) -> f64 {
        self.rho.exp()
    }

    pub fn beta(&self) -> f64 {
        self.rho.exp() + 1.0
    }

    pub fn gamma_x(&self) -> f64 {
        self.rho_x.unwrap_or(self.rho).exp()
    }

    pub fn gamma_y(&self) -> f64 {
        self.rho_y.unwrap_or(self.rho).exp()
    }

    /// Default noise scale is 0.5.
    pub fn noise_scale(&self) -> f64 {
        self.lambda.unwrap_or(0.5)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("rho", Some(self.rho)), ("rho_x", self.rho_x), ("rho_y", self.rho_y)] {
            if let Some(v) = v {
                if !v.is_finite() || !v.exp().is_finite() || v.exp() <= 0.0 {
                    return Err(Error::InvalidArgument(format!("{name} = {v} gives no usable γ")));
                }
            }
        }
        if let Some(l) = self.lambda {
            if !(0.0..=1.0).contains(&l) {
                return Err(Error::InvalidArgument(format!("noise scale {l} outside [0, 1]")));
            }
        }
        if let Some([lo, hi]) = self.domain {
            if !(lo < hi) {
                return Err(Error::InvalidArgument(format!("empty domain [{lo}, {hi}]")));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rho_parameterization() {
        let s = ObjectiveSpec::new(ObjectiveKind::Vceb, 0.0);
        assert_eq!(s.gamma(), 1.0);
        assert_eq!(s.beta(), 2.0);
        let s = ObjectiveSpec::new(ObjectiveKind::Vib, 5f64.ln());
        assert!((s.beta() - 6.0).abs() < 1e-12);
        let mut b = ObjectiveSpec::new(ObjectiveKind::Bidir, 1.0);
        assert_eq!(b.gamma_x(), b.gamma_y());
        b.rho_y = Some(0.0);
        assert_eq!(b.gamma_y(), 1.0);
    }

    #[test]
    fn kind_names_roundtrip() {
        for k in ObjectiveKind::ALL {
            assert_eq!(k.name().parse::<ObjectiveKind>().unwrap(), k);
            let json = serde_json::to_string(&k).unwrap();
            assert_eq!(json, format!("\"{}\"", k.name()));
        }
        assert!("ceb".parse::<ObjectiveKind>().is_err());
    }

    #[test]
    fn spec_validation() {
        let mut s = ObjectiveSpec::new(ObjectiveKind::Denoise, 0.0);
        s.lambda = Some(1.2);
        assert!(s.validate().is_err());
        assert!(ObjectiveSpec::new(ObjectiveKind::Vceb, f64::NAN).validate().is_err());
        assert!(ObjectiveSpec::new(ObjectiveKind::Vceb, 1e4).validate().is_err());
        let bad: std::result::Result<ObjectiveSpec, _> =
            serde_json::from_str(r#"{"kind": "vceb", "rho": 0, "gama": 1}"#);
        assert!(bad.is_err());
    }
}
