//! Variational objectives and information estimators as graph operations.
//!
//! Every per-example quantity is an N×1 column; every loss is a 1×1 node.

use rand::Rng;

use crate::diffgrad::{GaussianBatch, MixturePrior, ParamStore, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

fn ensure_finite<T: Scalar>(tape: &Tape<T>, v: Var, term: &str) -> Result<()> {
    if tape.value(v).all_finite() {
        Ok(())
    } else {
        Err(Error::NonFiniteLoss(term.to_string()))
    }
}

/// `mean(a) - mean(b)` for two N×1 columns.
fn mean_gap<T: Scalar>(tape: &mut Tape<T>, a: Var, b: Var) -> Var {
    let d = tape.sub(a, b);
    tape.mean(d)
}

/// ⟨log e(z|x)⟩ − ⟨log b(z|y)⟩ − γ⟨log c(y|z)⟩.
pub fn vceb_loss<T: Scalar>(tape: &mut Tape<T>, log_e: Var, log_b: Var, log_c: Var, gamma: T) -> Result<Var> {
    ensure_finite(tape, log_e, "log e(z|x)")?;
    ensure_finite(tape, log_b, "log b(z|y)")?;
    ensure_finite(tape, log_c, "log c(y|z)")?;
    let residual = mean_gap(tape, log_e, log_b);
    let pred = tape.mean(log_c);
    let pred = tape.scale(pred, -gamma);
    Ok(tape.add(residual, pred))
}

/// ⟨log e(z|x)⟩ − ⟨log m(z)⟩ − β⟨log c(y|z)⟩.
pub fn vib_loss<T: Scalar>(tape: &mut Tape<T>, log_e: Var, log_m: Var, log_c: Var, beta: T) -> Result<Var> {
    ensure_finite(tape, log_e, "log e(z|x)")?;
    ensure_finite(tape, log_m, "log m(z)")?;
    ensure_finite(tape, log_c, "log c(y|z)")?;
    let rate = mean_gap(tape, log_e, log_m);
    let pred = tape.mean(log_c);
    let pred = tape.scale(pred, -beta);
    Ok(tape.add(rate, pred))
}

/// Per-example log c(y|z) from classifier logits.
pub fn label_log_prob<T: Scalar>(tape: &mut Tape<T>, logits: Var, labels: &[usize]) -> Var {
    let ls = tape.log_softmax_rows(logits);
    tape.pick(ls, labels)
}

/// Mean negative log-softmax at the true label.
pub fn determ_ce_loss<T: Scalar>(tape: &mut Tape<T>, logits: Var, labels: &[usize]) -> Result<Var> {
    ensure_finite(tape, logits, "logits")?;
    let lp = label_log_prob(tape, logits, labels);
    let m = tape.mean(lp);
    Ok(tape.neg(m))
}

/// log e(z|x) − log b(z|y) per example.
pub fn residual_info<T: Scalar>(tape: &mut Tape<T>, e: &GaussianBatch, b: &GaussianBatch, z: Var) -> Var {
    let le = e.log_prob(tape, z);
    let lb = b.log_prob(tape, z);
    tape.sub(le, lb)
}

/// log e(z|x) − log m(z) per example.
pub fn rate<T: Scalar>(
    tape: &mut Tape<T>,
    store: &ParamStore<T>,
    e: &GaussianBatch,
    m: &MixturePrior,
    z: Var,
) -> Result<Var> {
    let le = e.log_prob(tape, z);
    let lm = m.log_prob(tape, store, z)?;
    Ok(tape.sub(le, lm))
}

/// Diagonal of `pairwise` minus its row-wise log-sum-exp.
fn batch_softmax_diag<T: Scalar>(tape: &mut Tape<T>, pairwise: Var) -> Var {
    let n = tape.value(pairwise).rows();
    let idx: Vec<usize> = (0..n).collect();
    let diag = tape.pick(pairwise, &idx);
    let lse = tape.logsumexp_rows(pairwise);
    tape.sub(diag, lse)
}

/// Minibatch-marginal lower bound on I(X;Z), capped at ln K.
///
/// Row i of `e` must be the encoder of the example that produced `z_i`.
pub fn rate_lower_bound<T: Scalar>(tape: &mut Tape<T>, e: &GaussianBatch, z: Var) -> Var {
    let k = tape.value(z).rows();
    let pairwise = e.log_prob_pairwise(tape, z);
    let per = batch_softmax_diag(tape, pairwise);
    let m = tape.mean(per);
    tape.offset(m, T::of((k as f64).ln()))
}

/// CatGen decoder: log b(z_i|y_i) − log Σ_k b(z_i|y_k).
pub fn catgen_log_prob<T: Scalar>(tape: &mut Tape<T>, b: &GaussianBatch, z: Var) -> Var {
    let pairwise = b.log_prob_pairwise(tape, z);
    batch_softmax_diag(tape, pairwise)
}

/// Class log-posteriors log softmax_c(log b(z|y_c) + log p(y_c)), N×C.
///
/// `per_class` holds one backward-encoder distribution per class.
pub fn consistent_classifier<T: Scalar>(
    tape: &mut Tape<T>,
    per_class: &GaussianBatch,
    z: Var,
    log_prior: &[T],
) -> Result<Var> {
    let pairwise = per_class.log_prob_pairwise(tape, z);
    let classes = tape.value(pairwise).cols();
    if log_prior.len() != classes {
        return Err(Error::Shape(format!(
            "{} prior entries for {classes} classes",
            log_prior.len()
        )));
    }
    let prior = tape.constant(Tensor::new(1, classes, log_prior.to_vec())?);
    let joint = tape.add_row(pairwise, prior);
    Ok(tape.log_softmax_rows(joint))
}

/// Per-example log-densities of one direction of a bidirectional model.
#[derive(Debug, Clone, Copy)]
pub struct DirectionTerms {
    /// Encoder that produced the sample.
    pub log_own: Var,
    /// The opposite encoder evaluated at the same sample.
    pub log_other: Var,
    /// Prediction of the opposite variable from the sample.
    pub log_pred: Var,
}

/// Sum of the two directional CEB terms.
pub fn bidir_ceb_loss<T: Scalar>(
    tape: &mut Tape<T>,
    forward: DirectionTerms,
    reverse: DirectionTerms,
    gamma_x: T,
    gamma_y: T,
) -> Result<Var> {
    let a = vceb_loss(tape, forward.log_own, forward.log_other, forward.log_pred, gamma_x)?;
    let b = vceb_loss(tape, reverse.log_own, reverse.log_other, reverse.log_pred, gamma_y)?;
    Ok(tape.add(a, b))
}

/// Per-layer log-densities of a hierarchical model.
#[derive(Debug, Clone, Copy)]
pub struct LayerTerms {
    /// log e_i(z_i | z_{i-1}).
    pub log_e: Var,
    /// log b_i(z_i | y).
    pub log_b: Var,
    /// log c_i(y | z_i).
    pub log_c: Var,
}

/// Σ_i ⟨log e_i − log b_i⟩ − ⟨log c_i⟩.
pub fn hier_ceb_loss<T: Scalar>(tape: &mut Tape<T>, layers: &[LayerTerms]) -> Result<Var> {
    let (first, rest) = layers
        .split_first()
        .ok_or_else(|| Error::InvalidArgument("hierarchical loss needs at least one layer".into()))?;
    let mut total = vceb_loss(tape, first.log_e, first.log_b, first.log_c, T::one())?;
    for l in rest {
        let t = vceb_loss(tape, l.log_e, l.log_b, l.log_c, T::one())?;
        total = tape.add(total, t);
    }
    Ok(total)
}

/// clip(x + λ·u·(hi − lo), lo, hi) with `u` in [−1, 1].
pub fn noise_fn<T: Scalar>(x: &Tensor<T>, lo: T, hi: T, lambda: T, u: &Tensor<T>) -> Result<Tensor<T>> {
    if !(lambda >= T::zero() && lambda <= T::one()) {
        return Err(Error::InvalidArgument(format!("noise scale {lambda} outside [0, 1]")));
    }
    if !(lo < hi) {
        return Err(Error::InvalidArgument(format!("empty domain [{lo}, {hi}]")));
    }
    if x.shape() != u.shape() {
        return Err(Error::Shape("noise and input shapes differ".into()));
    }
    let width = hi - lo;
    Ok(x.zip_map(u, |xv, uv| (xv + lambda * uv * width).max(lo).min(hi)))
}

/// [`noise_fn`] with fresh uniform noise.
pub fn noise_sample<T: Scalar, R: Rng + ?Sized>(
    x: &Tensor<T>,
    lo: T,
    hi: T,
    lambda: T,
    rng: &mut R,
) -> Result<Tensor<T>> {
    let u = Tensor::from_fn(x.rows(), x.cols(), |_, _| T::of(rng.random_range(-1.0..=1.0)));
    noise_fn(x, lo, hi, lambda, &u)
}

/// Denoising CEB over (X, X′): the clean direction, plus the noisy one unless `noising_only`.
pub fn denoising_ceb_loss<T: Scalar>(
    tape: &mut Tape<T>,
    clean: DirectionTerms,
    noisy: DirectionTerms,
    gamma: T,
    noising_only: bool,
) -> Result<Var> {
    if noising_only {
        vceb_loss(tape, clean.log_own, clean.log_other, clean.log_pred, gamma)
    } else {
        bidir_ceb_loss(tape, clean, noisy, gamma, gamma)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffgrad::{Covariance, Scale};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn col(tape: &mut Tape<f64>, v: &[f64]) -> Var {
        tape.constant(Tensor::new(v.len(), 1, v.to_vec()).unwrap())
    }

    fn normal_lp(z: f64, mu: f64, var: f64) -> f64 {
        -0.5 * (z - mu).powi(2) / var - 0.5 * (2.0 * PI * var).ln()
    }

    fn diag_batch(tape: &mut Tape<f64>, means: &[Vec<f64>], lv: &[Vec<f64>]) -> GaussianBatch {
        let m = tape.constant(Tensor::from_rows(means).unwrap());
        let l = tape.constant(Tensor::from_rows(lv).unwrap());
        GaussianBatch::new(tape, m, Scale::Diag { log_variance: l }).unwrap()
    }

    #[test]
    fn vceb_collapses_when_b_matches_e() {
        let mut t = Tape::new();
        let le = col(&mut t, &[-1.0, -2.5]);
        let lc = col(&mut t, &[-0.3, -0.7]);
        let loss = vceb_loss(&mut t, le, le, lc, 2.0).unwrap();
        assert!((t.scalar_value(loss) - 2.0 * 0.5).abs() < 1e-15);
    }

    #[test]
    fn vceb_hand_computed_one_dimensional() {
        // e = N(0.5, 1), b = N(0, 4), c(y|z) = 0.8, z = 1.0, γ = e^0.
        let mut t = Tape::new();
        let e = diag_batch(&mut t, &[vec![0.5]], &[vec![0.0]]);
        let b = diag_batch(&mut t, &[vec![0.0]], &[vec![4f64.ln()]]);
        let z = col(&mut t, &[1.0]);
        let le = e.log_prob(&mut t, z);
        let lb = b.log_prob(&mut t, z);
        let lc = col(&mut t, &[0.8f64.ln()]);
        let loss = vceb_loss(&mut t, le, lb, lc, 0f64.exp()).unwrap();
        let expected = normal_lp(1.0, 0.5, 1.0) - normal_lp(1.0, 0.0, 4.0) - 0.8f64.ln();
        assert!((t.scalar_value(loss) - expected).abs() < 1e-12);
    }

    #[test]
    fn vib_rate_vanishes_when_marginal_matches() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut store = ParamStore::new();
        let m = MixturePrior::new(&mut store, "m", 1, 2, Covariance::Diagonal, &mut rng).unwrap();
        let mean = store.get(m.means).clone();
        let mut t = Tape::new();
        let e = diag_batch(&mut t, &[mean.data().to_vec()], &[vec![0.0, 0.0]]);
        let z = t.constant(Tensor::from_rows(&[vec![0.3, -0.2]]).unwrap());
        let r = rate(&mut t, &store, &e, &m, z).unwrap();
        assert!(t.scalar_value(r).abs() < 1e-12);
        let le = e.log_prob(&mut t, z);
        let lm = m.log_prob(&mut t, &store, z).unwrap();
        let lc = col(&mut t, &[-0.5]);
        let loss = vib_loss(&mut t, le, lm, lc, 0f64.exp() + 1.0).unwrap();
        assert!((t.scalar_value(loss) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn vib_hand_computed() {
        let mut t = Tape::new();
        let le = col(&mut t, &[-1.0, -3.0]);
        let lm = col(&mut t, &[-2.0, -2.0]);
        let lc = col(&mut t, &[-0.1, -0.3]);
        let loss = vib_loss(&mut t, le, lm, lc, 3.0).unwrap();
        assert!((t.scalar_value(loss) - (0.0 + 3.0 * 0.2)).abs() < 1e-12);
    }

    #[test]
    fn non_finite_terms_are_named() {
        let mut t = Tape::new();
        let le = col(&mut t, &[-1.0]);
        let bad = col(&mut t, &[f64::NEG_INFINITY]);
        match vceb_loss(&mut t, le, bad, le, 1.0) {
            Err(Error::NonFiniteLoss(term)) => assert_eq!(term, "log b(z|y)"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn determ_ce_examples() {
        let mut t = Tape::<f64>::new();
        let uniform = t.constant(Tensor::zeros(3, 10));
        let l = determ_ce_loss(&mut t, uniform, &[0, 4, 9]).unwrap();
        assert!((t.scalar_value(l) - 10f64.ln()).abs() < 1e-12);

        let confident = t.constant(Tensor::from_rows(&[vec![60.0, 0.0, 0.0]]).unwrap());
        let l = determ_ce_loss(&mut t, confident, &[0]).unwrap();
        assert!(t.scalar_value(l) < 1e-20);

        let logits = t.constant(Tensor::from_rows(&[vec![1.0, 2.0, 0.5]]).unwrap());
        let l = determ_ce_loss(&mut t, logits, &[1]).unwrap();
        let expected = -(2f64.exp() / (1f64.exp() + 2f64.exp() + 0.5f64.exp())).ln();
        assert!((t.scalar_value(l) - expected).abs() < 1e-12);
    }

    #[test]
    fn residual_zero_when_b_is_e() {
        let mut t = Tape::new();
        let e = diag_batch(&mut t, &[vec![0.1, 0.2], vec![-1.0, 0.4]], &[vec![0.3, -0.2], vec![0.0, 1.0]]);
        let z = t.constant(Tensor::from_rows(&[vec![0.0, 0.0], vec![1.0, 1.0]]).unwrap());
        let r = residual_info(&mut t, &e, &e, z);
        assert!(t.value(r).data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn rate_lower_bound_trivial_cases() {
        let mut t = Tape::new();
        let e = diag_batch(&mut t, &[vec![0.3]], &[vec![0.1]]);
        let z = col(&mut t, &[1.2]);
        let rx = rate_lower_bound(&mut t, &e, z);
        assert!(t.scalar_value(rx).abs() < 1e-12);

        let same = diag_batch(&mut t, &vec![vec![0.3]; 5], &vec![vec![0.1]; 5]);
        let zs = col(&mut t, &[0.0, 1.0, -1.0, 2.0, 0.5]);
        let rx = rate_lower_bound(&mut t, &same, zs);
        assert!(t.scalar_value(rx).abs() < 1e-12);
    }

    #[test]
    fn rate_lower_bound_never_exceeds_log_k() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for k in 1..12 {
            let mut t = Tape::new();
            let means: Vec<Vec<f64>> = (0..k).map(|i| vec![10.0 * i as f64]).collect();
            let e = diag_batch(&mut t, &means, &vec![vec![-4.0]; k]);
            let z = e.sample(&mut t, &mut rng);
            let rx = rate_lower_bound(&mut t, &e, z);
            assert!(t.scalar_value(rx) <= (k as f64).ln() + 1e-9);
            assert!(t.scalar_value(rx) > (k as f64).ln() - 1e-6);
        }
    }

    #[test]
    fn catgen_trivial_cases_and_normalization() {
        let mut t = Tape::new();
        let b = diag_batch(&mut t, &vec![vec![0.0]; 4], &vec![vec![0.0]; 4]);
        let z = col(&mut t, &[0.1, 0.2, -0.3, 1.0]);
        let lp = catgen_log_prob(&mut t, &b, z);
        assert!(t.value(lp).data().iter().all(|v| (v + 4f64.ln()).abs() < 1e-12));

        let single = diag_batch(&mut t, &[vec![0.7]], &[vec![0.2]]);
        let z1 = col(&mut t, &[-0.4]);
        let lp = catgen_log_prob(&mut t, &single, z1);
        assert!(t.value(lp).get(0, 0).abs() < 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let means: Vec<Vec<f64>> = (0..6).map(|_| vec![rng.random_range(-2.0..2.0)]).collect();
        let b = diag_batch(&mut t, &means, &vec![vec![0.0]; 6]);
        let z = b.sample(&mut t, &mut rng);
        let pairwise = b.log_prob_pairwise(&mut t, z);
        for i in 0..6 {
            let row = t.value(pairwise).row(i);
            let lse = crate::scalar::log_sum_exp(row);
            let total: f64 = row.iter().map(|v| (v - lse).exp()).sum();
            assert!((total - 1.0).abs() < 1e-9);
        }
        let lp = catgen_log_prob(&mut t, &b, z);
        assert!(t.value(lp).data().iter().all(|&v| v <= 0.0));
    }

    #[test]
    fn consistent_classifier_examples() {
        let mut t = Tape::new();
        let per_class = diag_batch(&mut t, &[vec![-1.0], vec![0.0], vec![2.0]], &vec![vec![0.0]; 3]);
        let z = col(&mut t, &[0.5]);
        let uniform = [-(3f64.ln()); 3];
        let post = consistent_classifier(&mut t, &per_class, z, &uniform).unwrap();
        let d: Vec<f64> = [-1.0, 0.0, 2.0].iter().map(|m| normal_lp(0.5, *m, 1.0)).collect();
        let lse = crate::scalar::log_sum_exp(&d);
        for c in 0..3 {
            assert!((t.value(post).get(0, c) - (d[c] - lse)).abs() < 1e-12);
        }
        let zero_prior = consistent_classifier(&mut t, &per_class, z, &[0.0; 3]).unwrap();
        assert_eq!(t.value(zero_prior).data(), t.value(post).data());

        let symmetric = diag_batch(&mut t, &[vec![-1.0], vec![1.0]], &vec![vec![0.0]; 2]);
        let origin = col(&mut t, &[0.0]);
        let post = consistent_classifier(&mut t, &symmetric, origin, &[0.0; 2]).unwrap();
        assert!(t.value(post).data().iter().all(|v| (v + 2f64.ln()).abs() < 1e-12));

        let prior = [0.5f64.ln(), 0.25f64.ln(), 0.25f64.ln()];
        let post = consistent_classifier(&mut t, &per_class, z, &prior).unwrap();
        let w: Vec<f64> = d.iter().zip(&prior).map(|(a, b)| a + b).collect();
        let lse = crate::scalar::log_sum_exp(&w);
        assert!((t.value(post).get(0, 2) - (w[2] - lse)).abs() < 1e-12);
    }

    #[test]
    fn bidir_six_terms() {
        let mut t = Tape::new();
        let vals = [-1.0, -2.0, -0.5, -1.5, -0.25, -3.0];
        let v: Vec<Var> = vals.iter().map(|&x| col(&mut t, &[x])).collect();
        let fwd = DirectionTerms { log_own: v[0], log_other: v[1], log_pred: v[2] };
        let rev = DirectionTerms { log_own: v[3], log_other: v[4], log_pred: v[5] };
        let loss = bidir_ceb_loss(&mut t, fwd, rev, 2.0, 0.5).unwrap();
        let expected = (-1.0 + 2.0 + 2.0 * 0.5) + (-1.5 + 0.25 + 0.5 * 3.0);
        assert!((t.scalar_value(loss) - expected).abs() < 1e-12);
        let swapped = bidir_ceb_loss(&mut t, rev, fwd, 0.5, 2.0).unwrap();
        assert!((t.scalar_value(swapped) - expected).abs() < 1e-12);
    }

    #[test]
    fn hier_examples() {
        let mut t = Tape::new();
        let l1 = LayerTerms { log_e: col(&mut t, &[-1.0]), log_b: col(&mut t, &[-2.0]), log_c: col(&mut t, &[-0.2]) };
        let one = hier_ceb_loss(&mut t, &[l1]).unwrap();
        let v = vceb_loss(&mut t, l1.log_e, l1.log_b, l1.log_c, 0f64.exp()).unwrap();
        assert_eq!(t.scalar_value(one), t.scalar_value(v));

        let copy = col(&mut t, &[-0.7]);
        let l2 = LayerTerms { log_e: copy, log_b: copy, log_c: col(&mut t, &[-0.4]) };
        let two = hier_ceb_loss(&mut t, &[l1, l2]).unwrap();
        assert!((t.scalar_value(two) - (1.0 + 0.2 + 0.4)).abs() < 1e-12);
        assert!(hier_ceb_loss::<f64>(&mut t, &[]).is_err());
    }

    #[test]
    fn noise_fn_examples() {
        let x = Tensor::<f64>::from_rows(&[vec![0.2, 1.0]]).unwrap();
        let u = Tensor::from_rows(&[vec![0.9, 0.5]]).unwrap();
        assert_eq!(noise_fn(&x, 0.0, 1.0, 0.0, &u).unwrap(), x);
        let y = noise_fn(&x, 0.0, 1.0, 0.5, &u).unwrap();
        assert!((y.get(0, 0) - 0.65).abs() < 1e-12);
        assert_eq!(y.get(0, 1), 1.0);
        assert!(noise_fn(&x, 0.0, 1.0, 1.5, &u).is_err());
        assert!(noise_fn(&x, 0.0, 1.0, -0.1, &u).is_err());
    }

    #[test]
    fn full_noise_matches_clipped_uniform_law() {
        // For x ~ U(0,1), λ = 1: atoms of 1/4 at each end, density 1/2 inside.
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let n = 10_000;
        let x = Tensor::from_fn(n, 1, |_, _| rng.random_range(0.0..1.0));
        let y = noise_sample(&x, 0.0, 1.0, 1.0, &mut rng).unwrap();
        let mut v: Vec<f64> = y.data().to_vec();
        v.sort_by(f64::total_cmp);
        let cdf = |s: f64| if s >= 1.0 { 1.0 } else if s >= 0.0 { 0.25 + 0.5 * s } else { 0.0 };
        let cdf_left = |s: f64| if s <= 0.0 { 0.0 } else if s >= 1.0 { 0.75 } else { cdf(s) };
        let mut ks: f64 = 0.0;
        for (i, &s) in v.iter().enumerate() {
            if i == 0 || v[i - 1] != s {
                ks = ks.max((i as f64 / n as f64 - cdf_left(s)).abs());
            }
            if i + 1 == n || v[i + 1] != s {
                ks = ks.max(((i + 1) as f64 / n as f64 - cdf(s)).abs());
            }
        }
        assert!(ks <= 0.05, "ks = {ks}");

        let interior: Vec<f64> = v.iter().copied().filter(|s| *s > 0.0 && *s < 1.0).collect();
        let m = interior.len() as f64;
        let ks_inside = interior
            .iter()
            .enumerate()
            .map(|(i, &s)| ((i + 1) as f64 / m - s).abs().max((i as f64 / m - s).abs()))
            .fold(0.0, f64::max);
        assert!(ks_inside <= 0.05, "interior ks = {ks_inside}");
    }

    #[test]
    fn denoising_noising_only_is_first_three_terms() {
        let mut t = Tape::new();
        let v: Vec<Var> = [-1.0, -2.0, -0.5, -1.5, -0.25, -3.0].iter().map(|&x| col(&mut t, &[x])).collect();
        let clean = DirectionTerms { log_own: v[0], log_other: v[1], log_pred: v[2] };
        let noisy = DirectionTerms { log_own: v[3], log_other: v[4], log_pred: v[5] };
        let first = denoising_ceb_loss(&mut t, clean, noisy, 1.0, true).unwrap();
        assert!((t.scalar_value(first) - (-1.0 + 2.0 + 0.5)).abs() < 1e-12);
        let full = denoising_ceb_loss(&mut t, clean, noisy, 1.0, false).unwrap();
        assert!((t.scalar_value(full) - (1.5 + (-1.5 + 0.25 + 3.0))).abs() < 1e-12);
    }
}
