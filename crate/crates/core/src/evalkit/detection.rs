use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which end of the score axis counts as in-distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    #[default]
    LowerIsIn,
    HigherIsIn,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredExample {
    pub score: f64,
    pub in_distribution: bool,
}

/// Scores with their orientation; the orientation is never inferred.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreSet {
    pub orientation: Orientation,
    pub examples: Vec<ScoredExample>,
}

impl ScoreSet {
    pub fn new(in_scores: &[f64], out_scores: &[f64], orientation: Orientation) -> Self {
        let tag = |s: &[f64], flag: bool| -> Vec<ScoredExample> {
            s.iter().map(|&score| ScoredExample { score, in_distribution: flag }).collect()
        };
        let mut examples = tag(in_scores, true);
        examples.extend(tag(out_scores, false));
        Self { orientation, examples }
    }

    pub fn metrics(&self) -> Result<DetectionMetrics> {
        let pick = |flag: bool| -> Vec<f64> {
            self.examples.iter().filter(|e| e.in_distribution == flag).map(|e| e.score).collect()
        };
        let (ins, outs) = (pick(true), pick(false));
        detection_metrics(&ins, &outs, self.orientation)
    }
}

/// Threshold-free detection summary, all in percent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionMetrics {
    pub fpr_at_95_tpr: f64,
    pub auroc: f64,
    /// Average precision with in-distribution as the positive class.
    pub aupr_in: f64,
    /// Average precision with out-of-distribution as the positive class.
    pub aupr_out: f64,
}

/// Scores flipped so that lower always means in-distribution.
fn normalized(scores: &[f64], orientation: Orientation) -> Result<Vec<f64>> {
    if scores.is_empty() {
        return Err(Error::InvalidArgument("detection needs non-empty score lists".into()));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::InvalidArgument("NaN detection score".into()));
    }
    Ok(match orientation {
        Orientation::LowerIsIn => scores.to_vec(),
        Orientation::HigherIsIn => scores.iter().map(|s| -s).collect(),
    })
}

/// Cumulative (positive, negative) counts at or below each distinct score, ascending.
fn sweep(pos: &[f64], neg: &[f64]) -> Vec<(usize, usize)> {
    let mut all: Vec<(f64, bool)> = pos.iter().map(|&s| (s, true)).chain(neg.iter().map(|&s| (s, false))).collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out = Vec::new();
    let (mut tp, mut fp) = (0, 0);
    for (i, &(s, is_pos)) in all.iter().enumerate() {
        if is_pos {
            tp += 1;
        } else {
            fp += 1;
        }
        if all.get(i + 1).is_none_or(|next| next.0 != s) {
            out.push((tp, fp));
        }
    }
    out
}

fn average_precision(pos: &[f64], neg: &[f64]) -> f64 {
    let n = pos.len() as f64;
    let mut ap = 0.0;
    let mut prev = 0;
    for (tp, fp) in sweep(pos, neg) {
        ap += ((tp - prev) as f64 / n) * (tp as f64 / (tp + fp) as f64);
        prev = tp;
    }
    100.0 * ap
}

/// FPR at 95% TPR, AUROC and AUPR from an exact threshold sweep.
pub fn detection_metrics(in_scores: &[f64], out_scores: &[f64], orientation: Orientation) -> Result<DetectionMetrics> {
    let ins = normalized(in_scores, orientation)?;
    let outs = normalized(out_scores, orientation)?;
    let (n_in, n_out) = (ins.len(), outs.len());
    let points = sweep(&ins, &outs);

    // smallest threshold reaching the target TPR
    let &(_, fp95) = points
        .iter()
        .find(|&&(tp, _)| 100 * tp >= 95 * n_in)
        .expect("the last threshold admits every in-distribution score");

    // twice the area under the ROC step curve, in count units
    let mut area2: u128 = 0;
    let (mut tp0, mut fp0) = (0usize, 0usize);
    for &(tp, fp) in &points {
        area2 += ((fp - fp0) * (tp0 + tp)) as u128;
        tp0 = tp;
        fp0 = fp;
    }

    let flipped_in: Vec<f64> = ins.iter().map(|s| -s).collect();
    let flipped_out: Vec<f64> = outs.iter().map(|s| -s).collect();
    Ok(DetectionMetrics {
        fpr_at_95_tpr: 100.0 * (fp95 as f64 / n_out as f64),
        auroc: 100.0 * (area2 as f64 / (2 * n_in * n_out) as f64),
        aupr_in: average_precision(&ins, &outs),
        aupr_out: average_precision(&flipped_out, &flipped_in),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Enumerates every candidate threshold, counting from scratch at each.
    fn brute_force(ins: &[f64], outs: &[f64]) -> DetectionMetrics {
        let mut thresholds = vec![f64::NEG_INFINITY];
        thresholds.extend(ins.iter().chain(outs));
        thresholds.sort_by(f64::total_cmp);
        let count = |s: &[f64], t: f64| s.iter().filter(|&&v| v <= t).count();
        let (n_in, n_out) = (ins.len(), outs.len());

        let fpr = thresholds
            .iter()
            .find(|&&t| 100 * count(ins, t) >= 95 * n_in)
            .map(|&t| 100.0 * (count(outs, t) as f64 / n_out as f64))
            .unwrap();

        // Mann-Whitney pair counting, ties counted half
        let mut wins2: u128 = 0;
        for &a in ins {
            for &b in outs {
                wins2 += if a < b { 2 } else if a == b { 1 } else { 0 };
            }
        }
        let auroc = 100.0 * (wins2 as f64 / (2 * n_in * n_out) as f64);

        let ap = |pos: &[f64], neg: &[f64], ts: &[f64]| {
            let mut total = 0.0;
            let mut prev = 0;
            for &t in ts {
                let tp = count(pos, t);
                if tp > prev {
                    let fp = count(neg, t);
                    total += ((tp - prev) as f64 / pos.len() as f64) * (tp as f64 / (tp + fp) as f64);
                    prev = tp;
                }
            }
            100.0 * total
        };
        let neg_in: Vec<f64> = ins.iter().map(|v| -v).collect();
        let neg_out: Vec<f64> = outs.iter().map(|v| -v).collect();
        let mut flipped_ts: Vec<f64> = thresholds.iter().map(|v| -v).collect();
        flipped_ts.sort_by(f64::total_cmp);
        DetectionMetrics {
            fpr_at_95_tpr: fpr,
            auroc,
            aupr_in: ap(ins, outs, &thresholds),
            aupr_out: ap(&neg_out, &neg_in, &flipped_ts),
        }
    }

    #[test]
    fn perfect_separation() {
        let m = detection_metrics(&[0.1, 0.2, 0.3], &[1.0, 2.0], Orientation::LowerIsIn).unwrap();
        assert_eq!((m.fpr_at_95_tpr, m.auroc, m.aupr_in, m.aupr_out), (0.0, 100.0, 100.0, 100.0));
        let m = detection_metrics(&[0.1, 0.2, 0.3], &[1.0, 2.0], Orientation::HigherIsIn).unwrap();
        assert_eq!((m.fpr_at_95_tpr, m.auroc), (100.0, 0.0));
    }

    #[test]
    fn identical_distributions_give_chance_auroc() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a: Vec<f64> = (0..10_000).map(|_| rng.random()).collect();
        let b: Vec<f64> = (0..10_000).map(|_| rng.random()).collect();
        let m = detection_metrics(&a, &b, Orientation::LowerIsIn).unwrap();
        assert!((m.auroc - 50.0).abs() <= 2.0, "{}", m.auroc);
    }

    #[test]
    fn twenty_element_lists_match_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            // coarse grid forces ties
            let ins: Vec<f64> = (0..20).map(|_| rng.random_range(0..8) as f64).collect();
            let outs: Vec<f64> = (0..20).map(|_| rng.random_range(3..12) as f64).collect();
            let m = detection_metrics(&ins, &outs, Orientation::LowerIsIn).unwrap();
            assert_eq!(m, brute_force(&ins, &outs));
        }
    }

    #[test]
    fn score_set_carries_orientation() {
        let set = ScoreSet::new(&[5.0, 6.0], &[1.0], Orientation::HigherIsIn);
        assert_eq!(set.metrics().unwrap().auroc, 100.0);
        assert!(detection_metrics(&[], &[1.0], Orientation::LowerIsIn).is_err());
        assert!(detection_metrics(&[f64::NAN], &[1.0], Orientation::LowerIsIn).is_err());
    }

    proptest! {
        #[test]
        fn agrees_with_enumeration(
            ins in prop::collection::vec(-50i32..50, 1..200),
            outs in prop::collection::vec(-50i32..50, 1..200),
        ) {
            let ins: Vec<f64> = ins.into_iter().map(f64::from).collect();
            let outs: Vec<f64> = outs.into_iter().map(f64::from).collect();
            let m = detection_metrics(&ins, &outs, Orientation::LowerIsIn).unwrap();
            prop_assert_eq!(m, brute_force(&ins, &outs));
            for v in [m.fpr_at_95_tpr, m.auroc, m.aupr_in, m.aupr_out] {
                prop_assert!((0.0..=100.0).contains(&v));
            }
        }

        #[test]
        fn auroc_invariant_under_monotone_transform(
            ins in prop::collection::vec(-5.0f64..5.0, 1..100),
            outs in prop::collection::vec(-5.0f64..5.0, 1..100),
        ) {
            let t = |v: &Vec<f64>| v.iter().map(|x| (2.0 * x).exp() + 3.0).collect::<Vec<_>>();
            let a = detection_metrics(&ins, &outs, Orientation::LowerIsIn).unwrap();
            let b = detection_metrics(&t(&ins), &t(&outs), Orientation::LowerIsIn).unwrap();
            prop_assert_eq!(a.auroc, b.auroc);
        }
    }
}
