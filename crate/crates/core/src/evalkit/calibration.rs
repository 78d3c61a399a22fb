use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const BIN_COUNT: usize = 20;

/// Two-sided 90% standard normal quantile.
pub const Z90: f64 = 1.644_853_626_951_472_2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    pub mean_confidence: Option<f64>,
    pub accuracy: Option<f64>,
    /// Wilson 90% interval around `accuracy`.
    pub interval: Option<(f64, f64)>,
}

impl CalibrationBin {
    /// Whether the bin's mean confidence lies inside its accuracy interval.
    pub fn covers_diagonal(&self) -> Option<bool> {
        let (lo, hi) = self.interval?;
        let c = self.mean_confidence?;
        Some(lo <= c && c <= hi)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationCurve {
    pub bins: Vec<CalibrationBin>,
    pub ece: f64,
}

/// Wilson score interval for `successes` out of `n`.
pub fn wilson_interval(successes: usize, n: usize, z: f64) -> (f64, f64) {
    let n_f = n as f64;
    let p = successes as f64 / n_f;
    let z2 = z * z;
    let denom = 1.0 + z2 / n_f;
    let center = (p + z2 / (2.0 * n_f)) / denom;
    let half = z / denom * (p * (1.0 - p) / n_f + z2 / (4.0 * n_f * n_f)).sqrt();
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// Bin index for a confidence; 1.0 falls in the last bin.
pub fn bin_of(confidence: f64) -> usize {
    ((confidence * BIN_COUNT as f64).floor() as usize).min(BIN_COUNT - 1)
}

/// Reliability diagram over 5% confidence bins, with expected calibration error.
pub fn calibration_curve(confidences: &[f64], correct: &[bool]) -> Result<CalibrationCurve> {
    if confidences.len() != correct.len() {
        return Err(Error::Shape("one correctness flag per confidence required".into()));
    }
    if let Some(c) = confidences.iter().find(|c| !(0.0..=1.0).contains(*c)) {
        return Err(Error::InvalidArgument(format!("confidence {c} outside [0, 1]")));
    }
    let mut sums = [(0usize, 0.0f64, 0usize); BIN_COUNT];
    for (&c, &ok) in confidences.iter().zip(correct) {
        let s = &mut sums[bin_of(c)];
        s.0 += 1;
        s.1 += c;
        s.2 += usize::from(ok);
    }
    let n = confidences.len() as f64;
    let mut ece = 0.0;
    let bins = sums
        .iter()
        .enumerate()
        .map(|(k, &(count, conf_sum, hits))| {
            let (mean_confidence, accuracy, interval) = if count == 0 {
                (None, None, None)
            } else {
                let conf = conf_sum / count as f64;
                let acc = hits as f64 / count as f64;
                ece += count as f64 / n * (acc - conf).abs();
                (Some(conf), Some(acc), Some(wilson_interval(hits, count, Z90)))
            };
            CalibrationBin {
                lo: k as f64 / BIN_COUNT as f64,
                hi: (k + 1) as f64 / BIN_COUNT as f64,
                count,
                mean_confidence,
                accuracy,
                interval,
            }
        })
        .collect();
    Ok(CalibrationCurve { bins, ece })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn all_confident_and_correct() {
        let c = calibration_curve(&[1.0; 7], &[true; 7]).unwrap();
        let used: Vec<_> = c.bins.iter().filter(|b| b.count > 0).collect();
        assert_eq!(used.len(), 1);
        assert_eq!(used[0].mean_confidence, Some(1.0));
        assert_eq!(used[0].accuracy, Some(1.0));
        assert_eq!(c.ece, 0.0);
    }

    #[test]
    fn ten_example_hand_count() {
        let conf = [0.12, 0.13, 0.52, 0.54, 0.56, 0.58, 0.91, 0.93, 0.97, 0.99];
        let ok = [false, true, true, false, true, false, true, true, true, false];
        let c = calibration_curve(&conf, &ok).unwrap();
        let count: Vec<usize> = c.bins.iter().map(|b| b.count).collect();
        let mut expect = [0usize; 20];
        expect[2] = 2;
        expect[10] = 2;
        expect[11] = 2;
        expect[18] = 2;
        expect[19] = 2;
        assert_eq!(count, expect);
        let acc = |k: usize| c.bins[k].accuracy.unwrap();
        assert_eq!((acc(2), acc(10), acc(11), acc(18), acc(19)), (0.5, 0.5, 0.5, 1.0, 0.5));
        // per bin |acc − conf| weighted by 2/10
        let ece = 0.2 * ((0.5f64 - 0.125).abs() + (0.5f64 - 0.53).abs() + (0.5f64 - 0.57).abs() + (1.0f64 - 0.92).abs() + (0.5f64 - 0.98).abs());
        assert!((c.ece - ece).abs() < 1e-12);
    }

    #[test]
    fn wilson_matches_closed_form() {
        // 8 of 10 at z = 1.6449: center 0.7361, half width 0.1953
        let (lo, hi) = wilson_interval(8, 10, Z90);
        assert!((lo - 0.540_79).abs() < 1e-4, "{lo}");
        assert!((hi - 0.931_44).abs() < 1e-4, "{hi}");
        let (lo, hi) = wilson_interval(0, 5, Z90);
        assert_eq!(lo, 0.0);
        assert!(hi > 0.0 && hi < 1.0);
    }

    #[test]
    fn bins_partition_and_calibrated_data_covers_diagonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let conf: Vec<f64> = (0..20_000).map(|_| rng.random()).collect();
        let ok: Vec<bool> = conf.iter().map(|&c| rng.random_bool(c)).collect();
        let c = calibration_curve(&conf, &ok).unwrap();
        assert_eq!(c.bins.iter().map(|b| b.count).sum::<usize>(), 20_000);
        let covered = c.bins.iter().filter(|b| b.covers_diagonal() == Some(true)).count();
        // each bin misses with probability about 0.1
        assert!(covered >= 15, "covered {covered}");
        assert!(c.ece < 0.02);
        assert!(calibration_curve(&[1.5], &[true]).is_err());
    }
}
