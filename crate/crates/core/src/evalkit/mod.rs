//! Detection and calibration metrics, OoD scores and synthetic datasets.

mod calibration;
mod datasets;
mod detection;
mod ood;

pub use calibration::{bin_of, calibration_curve, wilson_interval, CalibrationBin, CalibrationCurve, BIN_COUNT, Z90};
pub use datasets::{
    empirical_mutual_information, gaussian_mixture_dataset, random_label_dataset, GaussianMixture, MixtureSpec,
    SynthDataset,
};
pub use detection::{detection_metrics, DetectionMetrics, Orientation, ScoreSet, ScoredExample};
pub use ood::{ood_scores, predictive_entropy, rate_scores, OodScores};
