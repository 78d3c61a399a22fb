use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::diffgrad::Tensor;
use crate::error::{Error, Result};
use crate::info::{mutual_information, DiscreteJoint};
use crate::scalar::Scalar;

/// Parameters of the Gaussian-mixture classification task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MixtureSpec {
    pub classes: usize,
    pub per_class: usize,
    pub dim: usize,
    /// Distance of every class mean from the origin, in noise standard deviations.
    pub separation: f64,
    /// Probability of replacing a label by a uniformly drawn different class.
    pub label_noise: f64,
}

impl Default for MixtureSpec {
    fn default() -> Self {
        Self {
            classes: 10,
            per_class: 500,
            dim: 16,
            separation: 4.0,
            label_noise: 0.0,
        }
    }
}

/// A generated dataset together with how it was made.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthDataset<T> {
    pub data: Dataset<T>,
    /// Every input carries exactly one label by construction.
    pub deterministic: bool,
    /// Labels are independent of inputs in the population.
    pub information_free: bool,
}

/// Class-conditional isotropic Gaussians with fixed means.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMixture {
    spec: MixtureSpec,
    means: Vec<Vec<f64>>,
}

impl GaussianMixture {
    /// Orthogonal axis-aligned means when `classes ≤ dim`, random directions otherwise.
    pub fn new<R: Rng + ?Sized>(spec: MixtureSpec, rng: &mut R) -> Result<Self> {
        if spec.classes < 2 || spec.dim == 0 {
            return Err(Error::InvalidArgument("need at least two classes and one dimension".into()));
        }
        if !(spec.separation >= 0.0) || !spec.separation.is_finite() {
            return Err(Error::InvalidArgument(format!("separation {} invalid", spec.separation)));
        }
        if !(0.0..=1.0).contains(&spec.label_noise) {
            return Err(Error::InvalidArgument(format!("label noise {} outside [0, 1]", spec.label_noise)));
        }
        let means = (0..spec.classes)
            .map(|c| {
                if spec.classes <= spec.dim {
                    (0..spec.dim).map(|j| if j == c { spec.separation } else { 0.0 }).collect()
                } else {
                    let v: Vec<f64> = (0..spec.dim).map(|_| rng.sample(StandardNormal)).collect();
                    let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt().max(1e-12);
                    v.iter().map(|a| a / norm * spec.separation).collect()
                }
            })
            .collect();
        Ok(Self { spec, means })
    }

    pub fn spec(&self) -> &MixtureSpec {
        &self.spec
    }

    pub fn means(&self) -> &[Vec<f64>] {
        &self.means
    }

    /// `per_class` draws from every class, shuffled.
    pub fn sample<T: Scalar, R: Rng + ?Sized>(&self, per_class: usize, rng: &mut R) -> Result<SynthDataset<T>> {
        let c = self.spec.classes;
        let n = c * per_class;
        let mut order: Vec<usize> = (0..n).map(|i| i % c).collect();
        rand::seq::SliceRandom::shuffle(order.as_mut_slice(), rng);
        let mut inputs = Vec::with_capacity(n * self.spec.dim);
        let mut labels = Vec::with_capacity(n);
        for &class in &order {
            for &m in &self.means[class] {
                inputs.push(T::of(m + rng.sample::<f64, _>(StandardNormal)));
            }
            let label = if self.spec.label_noise > 0.0 && rng.random_bool(self.spec.label_noise) {
                (class + rng.random_range(1..c)) % c
            } else {
                class
            };
            labels.push(label);
        }
        Ok(SynthDataset {
            data: Dataset::new(Tensor::new(n, self.spec.dim, inputs)?, labels, c)?,
            deterministic: self.spec.label_noise == 0.0,
            information_free: self.spec.separation == 0.0,
        })
    }
}

/// Samples [`MixtureSpec::per_class`] examples per class from a fresh mixture.
pub fn gaussian_mixture_dataset<T: Scalar, R: Rng + ?Sized>(spec: &MixtureSpec, rng: &mut R) -> Result<SynthDataset<T>> {
    let mixture = GaussianMixture::new(spec.clone(), rng)?;
    mixture.sample(spec.per_class, rng)
}

/// Replaces labels with fixed uniform draws that depend only on `seed`.
pub fn random_label_dataset<T: Scalar>(inputs: Tensor<T>, classes: usize, seed: u64) -> Result<SynthDataset<T>> {
    if classes < 2 {
        return Err(Error::InvalidArgument("random labels need at least two classes".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels = (0..inputs.rows()).map(|_| rng.random_range(0..classes)).collect();
    Ok(SynthDataset {
        data: Dataset::new(inputs, labels, classes)?,
        deterministic: true,
        information_free: true,
    })
}

/// Plug-in I(X;Y) of the empirical joint, treating each distinct input row as a symbol.
pub fn empirical_mutual_information<T: Scalar>(data: &Dataset<T>) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::InvalidArgument("empty dataset".into()));
    }
    let mut ids: HashMap<Vec<u64>, usize> = HashMap::new();
    let mut xs = Vec::with_capacity(data.len());
    for r in 0..data.len() {
        // adding zero folds -0.0 into 0.0
        let key: Vec<u64> = data.inputs.row(r).iter().map(|v| (v.as_f64() + 0.0).to_bits()).collect();
        let next = ids.len();
        xs.push(*ids.entry(key).or_insert(next));
    }
    let nx = ids.len();
    let mut counts = vec![0.0; nx * data.classes];
    for (x, &y) in xs.iter().zip(&data.labels) {
        counts[x * data.classes + y] += 1.0;
    }
    let joint = DiscreteJoint::<f64>::from_weights(nx, data.classes, counts)?;
    Ok(mutual_information(&joint))
}
