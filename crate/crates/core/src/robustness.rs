//! Projected gradient attacks and the accuracy and success metrics built on them.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::diffgrad::Tensor;
use crate::error::{Error, Result};
use crate::objectives::Model;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Norm {
    L2,
    Linf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackSpec {
    pub norm: Norm,
    pub epsilon: f64,
    /// Defaults to `2.5 · epsilon / steps`.
    #[serde(default)]
    pub step_size: Option<f64>,
    pub steps: usize,
    #[serde(default)]
    pub target: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub random_start: bool,
    /// Elementwise input bounds; unbounded when absent.
    #[serde(default)]
    pub domain: Option<[f64; 2]>,
}

impl AttackSpec {
    pub fn new(norm: Norm, epsilon: f64, steps: usize) -> Self {
        Self {
            norm,
            epsilon,
            step_size: None,
            steps,
            target: None,
            seed: 0,
            random_start: false,
            domain: None,
        }
    }

    pub fn step(&self) -> f64 {
        self.step_size.unwrap_or(2.5 * self.epsilon / self.steps.max(1) as f64)
    }

    pub fn validate(&self, classes: usize) -> Result<()> {
        if !self.epsilon.is_finite() || self.epsilon < 0.0 {
            return Err(Error::InvalidArgument(format!("epsilon {} must be finite and ≥ 0", self.epsilon)));
        }
        if self.steps == 0 {
            return Err(Error::InvalidArgument("at least one attack step required".into()));
        }
        if let Some(s) = self.step_size {
            if !s.is_finite() || s <= 0.0 {
                return Err(Error::InvalidArgument(format!("step size {s} must be finite and > 0")));
            }
        }
        if let Some(t) = self.target {
            if t >= classes {
                return Err(Error::InvalidArgument(format!("target class {t} outside 0..{classes}")));
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

/// What an attack needs from a classifier.
pub trait AttackModel<T: Scalar> {
    fn classes(&self) -> usize;

    fn predict(&self, x: &Tensor<T>) -> Result<Vec<usize>>;

    /// Summed cross-entropy at `labels` and its input gradient, through one noise draw.
    fn loss_gradient(&self, x: &Tensor<T>, labels: &[usize], rng: &mut ChaCha8Rng) -> Result<(T, Tensor<T>)>;
}

impl<T: Scalar> AttackModel<T> for Model<T> {
    fn classes(&self) -> usize {
        Model::classes(self)
    }

    fn predict(&self, x: &Tensor<T>) -> Result<Vec<usize>> {
        Model::predict(self, x)
    }

    fn loss_gradient(&self, x: &Tensor<T>, labels: &[usize], rng: &mut ChaCha8Rng) -> Result<(T, Tensor<T>)> {
        self.input_gradient(x, labels, rng)
    }
}

/// Multinomial logistic regression `softmax(x Wᵀ + b)`, with a closed-form input gradient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSoftmax<T> {
    /// One row per class.
    pub weights: Tensor<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> LinearSoftmax<T> {
    pub fn new(weights: Tensor<T>, bias: Vec<T>) -> Result<Self> {
        if bias.len() != weights.rows() || weights.rows() < 2 {
            return Err(Error::Shape("need at least two classes and one bias per class".into()));
        }
        Ok(Self { weights, bias })
    }

    pub fn log_proba(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        if x.cols() != self.weights.cols() {
            return Err(Error::Shape(format!("expected {} features, got {}", self.weights.cols(), x.cols())));
        }
        let mut logits = x.matmul(&self.weights.transpose());
        for r in 0..logits.rows() {
            let row: Vec<f64> = (0..logits.cols()).map(|c| (logits.get(r, c) + self.bias[c]).as_f64()).collect();
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            for (c, v) in row.iter().enumerate() {
                logits.set(r, c, T::of(v - lse));
            }
        }
        Ok(logits)
    }
}

impl<T: Scalar> AttackModel<T> for LinearSoftmax<T> {
    fn classes(&self) -> usize {
        self.weights.rows()
    }

    fn predict(&self, x: &Tensor<T>) -> Result<Vec<usize>> {
        Ok(self.log_proba(x)?.argmax_rows())
    }

    fn loss_gradient(&self, x: &Tensor<T>, labels: &[usize], _rng: &mut ChaCha8Rng) -> Result<(T, Tensor<T>)> {
        let lp = self.log_proba(x)?;
        if labels.len() != x.rows() {
            return Err(Error::Shape("one label per example required".into()));
        }
        let mut loss = 0.0;
        let mut residual = lp.map(|v| v.exp());
        for (r, &y) in labels.iter().enumerate() {
            loss -= lp.get(r, y).as_f64();
            residual.set(r, y, residual.get(r, y) - T::one());
        }
        Ok((T::of(loss), residual.matmul(&self.weights)))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackOutcome<T> {
    pub x_adv: Tensor<T>,
    /// The loss gradient was zero for every example at every step, so nothing moved.
    pub zero_gradient: bool,
}

fn row_norm(v: &[f64], norm: Norm) -> f64 {
    match norm {
        Norm::L2 => v.iter().map(|a| a * a).sum::<f64>().sqrt(),
        Norm::Linf => v.iter().fold(0.0, |m, a| f64::max(m, a.abs())),
    }
}

/// Pulls `adv` back into the ε-ball around `x`, then into the domain.
fn project(adv: &mut [f64], x: &[f64], spec: &AttackSpec) {
    let eps = spec.epsilon;
    match spec.norm {
        Norm::Linf => {
            for (a, &o) in adv.iter_mut().zip(x) {
                *a = a.clamp(o - eps, o + eps);
            }
        }
        Norm::L2 => {
            let delta: Vec<f64> = adv.iter().zip(x).map(|(a, o)| a - o).collect();
            let n = row_norm(&delta, Norm::L2);
            if n > eps {
                for ((a, &o), d) in adv.iter_mut().zip(x).zip(&delta) {
                    *a = o + d * (eps / n);
                }
            }
        }
    }
    if let Some([lo, hi]) = spec.domain {
        for a in adv.iter_mut() {
            *a = a.clamp(lo, hi);
        }
    }
}

fn random_start(x: &[f64], spec: &AttackSpec, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let eps = spec.epsilon;
    match spec.norm {
        Norm::Linf => x.iter().map(|o| o + rng.random_range(-eps..=eps)).collect(),
        Norm::L2 => {
            let dir: Vec<f64> = x.iter().map(|_| rng.sample(StandardNormal)).collect();
            let n = row_norm(&dir, Norm::L2).max(1e-12);
            let radius = eps * rng.random::<f64>().powf(1.0 / x.len() as f64);
            x.iter().zip(&dir).map(|(o, d)| o + d / n * radius).collect()
        }
    }
}

/// Projected gradient ascent on the true-label loss, or descent on the target-class loss.
pub fn pgd_attack<T: Scalar, M: AttackModel<T> + ?Sized>(
    model: &M,
    x: &Tensor<T>,
    y_true: &[usize],
    spec: &AttackSpec,
) -> Result<AttackOutcome<T>> {
    spec.validate(model.classes())?;
    if y_true.len() != x.rows() {
        return Err(Error::Shape("one label per example required".into()));
    }
    if spec.epsilon == 0.0 {
        return Ok(AttackOutcome {
            x_adv: x.clone(),
            zero_gradient: false,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let d = x.cols();
    let clean: Vec<f64> = x.data().iter().map(|v| v.as_f64()).collect();
    let mut adv = clean.clone();
    if spec.random_start {
        for r in 0..x.rows() {
            let row = &clean[r * d..(r + 1) * d];
            let start = random_start(row, spec, &mut rng);
            adv[r * d..(r + 1) * d].copy_from_slice(&start);
            project(&mut adv[r * d..(r + 1) * d], row, spec);
        }
    }
    let (labels, direction) = match spec.target {
        Some(t) => (vec![t; x.rows()], -1.0),
        None => (y_true.to_vec(), 1.0),
    };
    let step = spec.step().min(spec.epsilon);
    let mut moved = false;
    for _ in 0..spec.steps {
        let current = Tensor::new(x.rows(), d, adv.iter().map(|&v| T::of(v)).collect())?;
        let (_, grad) = model.loss_gradient(&current, &labels, &mut rng)?;
        for r in 0..x.rows() {
            let g: Vec<f64> = grad.row(r).iter().map(|v| v.as_f64()).collect();
            let scale = row_norm(&g, Norm::L2);
            if scale == 0.0 || !scale.is_finite() {
                continue;
            }
            moved = true;
            let a = &mut adv[r * d..(r + 1) * d];
            for (v, gi) in a.iter_mut().zip(&g) {
                *v += direction
                    * step
                    * match spec.norm {
                        Norm::Linf if *gi == 0.0 => 0.0,
                        Norm::Linf => gi.signum(),
                        Norm::L2 => gi / scale,
                    };
            }
            project(a, &clean[r * d..(r + 1) * d], spec);
        }
    }
    Ok(AttackOutcome {
        x_adv: Tensor::new(x.rows(), d, adv.into_iter().map(T::of).collect())?,
        zero_gradient: !moved,
    })
}

/// Largest per-example perturbation of `x_adv` from `x` in the given norm.
pub fn max_perturbation<T: Scalar>(x: &Tensor<T>, x_adv: &Tensor<T>, norm: Norm) -> f64 {
    (0..x.rows())
        .map(|r| {
            let delta: Vec<f64> = x.row(r).iter().zip(x_adv.row(r)).map(|(a, b)| b.as_f64() - a.as_f64()).collect();
            row_norm(&delta, norm)
        })
        .fold(0.0, f64::max)
}

/// Fraction of correct, non-target clean predictions moved to `target`; absent when none qualify.
pub fn targeted_success_from_predictions(
    clean: &[usize],
    adversarial: &[usize],
    y_true: &[usize],
    target: usize,
) -> Option<f64> {
    let mut hits = 0usize;
    let mut eligible = 0usize;
    for ((&c, &a), &y) in clean.iter().zip(adversarial).zip(y_true) {
        if c == y && y != target {
            eligible += 1;
            hits += usize::from(a == target);
        }
    }
    (eligible > 0).then(|| hits as f64 / eligible as f64)
}

pub fn targeted_success_rate<T: Scalar, M: AttackModel<T> + ?Sized>(
    model: &M,
    x_clean: &Tensor<T>,
    x_adv: &Tensor<T>,
    y_true: &[usize],
    target: usize,
) -> Result<Option<f64>> {
    if x_clean.shape() != x_adv.shape() || y_true.len() != x_clean.rows() {
        return Err(Error::Shape("clean inputs, adversarial inputs and labels must align".into()));
    }
    Ok(targeted_success_from_predictions(
        &model.predict(x_clean)?,
        &model.predict(x_adv)?,
        y_true,
        target,
    ))
}

fn accuracy(pred: &[usize], labels: &[usize]) -> f64 {
    pred.iter().zip(labels).filter(|(p, y)| p == y).count() as f64 / labels.len().max(1) as f64
}

/// Accuracy against true labels after attacking every example.
pub fn accuracy_under_attack<T: Scalar, M: AttackModel<T> + ?Sized>(
    model: &M,
    data: &Dataset<T>,
    spec: &AttackSpec,
) -> Result<f64> {
    transfer_attack(model, model, data, spec)
}

/// Crafts examples on `source` and scores them on `target`.
pub fn transfer_attack<T: Scalar, S: AttackModel<T> + ?Sized, M: AttackModel<T> + ?Sized>(
    source: &S,
    target: &M,
    data: &Dataset<T>,
    spec: &AttackSpec,
) -> Result<f64> {
    let out = pgd_attack(source, &data.inputs, &data.labels, spec)?;
    Ok(accuracy(&target.predict(&out.x_adv)?, &data.labels))
}
