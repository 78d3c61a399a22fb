use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{log_sum_exp, Scalar};

use super::nn::{ParamId, ParamStore};
use super::tape::{tril_factor, tril_len, Tape, Var};
use super::tensor::Tensor;

/// Bounds applied to every log-variance before exponentiation.
pub const LOG_VARIANCE_MIN: f64 = -10.0;
pub const LOG_VARIANCE_MAX: f64 = 10.0;

/// Largest dimension supported with full covariance.
pub const MAX_FULL_DIM: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Covariance {
    #[default]
    Diagonal,
    Full,
}

impl Covariance {
    /// Columns a network must emit to parameterize a `d`-dimensional head.
    pub fn output_width(self, d: usize) -> usize {
        match self {
            Covariance::Diagonal => 2 * d,
            Covariance::Full => d + tril_len(d),
        }
    }

    fn check_dim(self, d: usize) -> Result<()> {
        if d == 0 || (self == Covariance::Full && d > MAX_FULL_DIM) {
            return Err(Error::Shape(format!(
                "{self:?} covariance unsupported for dimension {d}"
            )));
        }
        Ok(())
    }
}

fn sample_eps<T: Scalar, R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Tensor<T> {
    Tensor::from_fn(rows, cols, |_, _| T::of(rng.sample::<f64, _>(StandardNormal)))
}

/// A single Gaussian evaluated outside any graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianHead<T> {
    pub mean: Vec<T>,
    pub log_variance: Vec<T>,
    /// Dense row-major lower-triangular factor; overrides `log_variance`.
    pub cholesky: Option<Vec<T>>,
}

impl<T: Scalar> GaussianHead<T> {
    pub fn diagonal(mean: Vec<T>, log_variance: Vec<T>) -> Result<Self> {
        if mean.len() != log_variance.len() || mean.is_empty() {
            return Err(Error::Shape("mean and log-variance lengths differ".into()));
        }
        Ok(Self {
            mean,
            log_variance,
            cholesky: None,
        })
    }

    pub fn standard(d: usize) -> Self {
        Self {
            mean: vec![T::zero(); d],
            log_variance: vec![T::zero(); d],
            cholesky: None,
        }
    }

    /// Full covariance L·Lᵀ from a dense lower-triangular `l` with positive diagonal.
    pub fn full(mean: Vec<T>, l: Vec<T>) -> Result<Self> {
        let d = mean.len();
        Covariance::Full.check_dim(d)?;
        if l.len() != d * d {
            return Err(Error::Shape(format!("cholesky factor needs {} entries", d * d)));
        }
        for r in 0..d {
            if l[r * d + r] <= T::zero() || (r + 1..d).any(|c| l[r * d + c] != T::zero()) {
                return Err(Error::InvalidArgument(
                    "cholesky factor must be lower triangular with positive diagonal".into(),
                ));
            }
        }
        let log_variance = (0..d)
            .map(|r| (0..=r).map(|c| l[r * d + c] * l[r * d + c]).sum::<T>().ln())
            .collect();
        Ok(Self {
            mean,
            log_variance,
            cholesky: Some(l),
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    fn clamped_log_variance(&self, j: usize) -> T {
        self.log_variance[j]
            .max(T::of(LOG_VARIANCE_MIN))
            .min(T::of(LOG_VARIANCE_MAX))
    }

    pub fn log_prob(&self, z: &[T]) -> Result<T> {
        let d = self.dim();
        if z.len() != d {
            return Err(Error::Shape(format!("point of dimension {} for a {d}-dimensional head", z.len())));
        }
        let c = T::of(0.5 * (2.0 * PI).ln() * d as f64);
        match &self.cholesky {
            None => {
                let mut q = T::zero();
                for (j, (&zj, &mj)) in z.iter().zip(&self.mean).enumerate() {
                    let lv = self.clamped_log_variance(j);
                    q += (zj - mj) * (zj - mj) * (-lv).exp() + lv;
                }
                Ok(-T::of(0.5) * q - c)
            }
            Some(l) => {
                let mut v = vec![T::zero(); d];
                let mut logdet = T::zero();
                for a in 0..d {
                    let mut s = z[a] - self.mean[a];
                    for b in 0..a {
                        s -= l[a * d + b] * v[b];
                    }
                    v[a] = s / l[a * d + a];
                    logdet += l[a * d + a].ln();
                }
                let quad: T = v.iter().map(|&x| x * x).sum();
                Ok(-T::of(0.5) * quad - logdet - c)
            }
        }
    }

    /// `mean + scale · eps`.
    pub fn reparam_sample(&self, eps: &[T]) -> Result<Vec<T>> {
        let d = self.dim();
        if eps.len() != d {
            return Err(Error::Shape(format!("noise of dimension {} for a {d}-dimensional head", eps.len())));
        }
        Ok(match &self.cholesky {
            None => (0..d)
                .map(|j| self.mean[j] + (T::of(0.5) * self.clamped_log_variance(j)).exp() * eps[j])
                .collect(),
            Some(l) => (0..d)
                .map(|a| self.mean[a] + (0..=a).map(|b| l[a * d + b] * eps[b]).sum::<T>())
                .collect(),
        })
    }
}

/// A finite Gaussian mixture evaluated outside any graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureGaussian<T> {
    pub logits: Vec<T>,
    pub components: Vec<GaussianHead<T>>,
}

impl<T: Scalar> MixtureGaussian<T> {
    pub fn new(logits: Vec<T>, components: Vec<GaussianHead<T>>) -> Result<Self> {
        if logits.len() != components.len() || logits.is_empty() {
            return Err(Error::Shape("one logit per mixture component required".into()));
        }
        let d = components[0].dim();
        if components.iter().any(|c| c.dim() != d) {
            return Err(Error::Shape("mixture components differ in dimension".into()));
        }
        Ok(Self { logits, components })
    }

    pub fn weights(&self) -> Vec<T> {
        let lse = log_sum_exp(&self.logits);
        self.logits.iter().map(|&l| (l - lse).exp()).collect()
    }

    pub fn log_prob(&self, z: &[T]) -> Result<T> {
        let lse = log_sum_exp(&self.logits);
        let terms = self
            .components
            .iter()
            .zip(&self.logits)
            .map(|(c, &l)| Ok(l - lse + c.log_prob(z)?))
            .collect::<Result<Vec<T>>>()?;
        Ok(log_sum_exp(&terms))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    Diag { log_variance: Var },
    Tril { raw: Var },
}

/// A batch of Gaussians living on a [`Tape`]; row i is one distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GaussianBatch {
    pub mean: Var,
    pub scale: Scale,
    dim: usize,
}

impl GaussianBatch {
    /// Splits network output into mean and scale columns per `cov`.
    pub fn from_output<T: Scalar>(
        tape: &mut Tape<T>,
        out: Var,
        dim: usize,
        cov: Covariance,
    ) -> Result<Self> {
        cov.check_dim(dim)?;
        let cols = tape.value(out).cols();
        if cols != cov.output_width(dim) {
            return Err(Error::Shape(format!(
                "{cov:?} head of dimension {dim} needs {} columns, got {cols}",
                cov.output_width(dim)
            )));
        }
        let mean = tape.cols(out, 0, dim);
        let scale = match cov {
            Covariance::Diagonal => {
                let raw = tape.cols(out, dim, dim);
                Scale::Diag {
                    log_variance: tape.clamp(raw, T::of(LOG_VARIANCE_MIN), T::of(LOG_VARIANCE_MAX)),
                }
            }
            Covariance::Full => Scale::Tril {
                raw: tape.cols(out, dim, tril_len(dim)),
            },
        };
        Ok(Self { mean, scale, dim })
    }

    pub fn new<T: Scalar>(tape: &mut Tape<T>, mean: Var, scale: Scale) -> Result<Self> {
        let (rows, dim) = tape.value(mean).shape();
        let cov = match scale {
            Scale::Diag { .. } => Covariance::Diagonal,
            Scale::Tril { .. } => Covariance::Full,
        };
        cov.check_dim(dim)?;
        let expected = match scale {
            Scale::Diag { log_variance } => (log_variance, dim),
            Scale::Tril { raw } => (raw, tril_len(dim)),
        };
        if tape.value(expected.0).shape() != (rows, expected.1) {
            return Err(Error::Shape("scale parameters do not match the mean".into()));
        }
        let scale = match scale {
            Scale::Diag { log_variance } => Scale::Diag {
                log_variance: tape.clamp(log_variance, T::of(LOG_VARIANCE_MIN), T::of(LOG_VARIANCE_MAX)),
            },
            s => s,
        };
        Ok(Self { mean, scale, dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Row-wise log N(z_i; μ_i, Σ_i), N×1.
    pub fn log_prob<T: Scalar>(&self, tape: &mut Tape<T>, z: Var) -> Var {
        self.density(tape, z, true)
    }

    /// Entry (i, k) = log N(z_i; μ_k, Σ_k), N×M.
    pub fn log_prob_pairwise<T: Scalar>(&self, tape: &mut Tape<T>, z: Var) -> Var {
        self.density(tape, z, false)
    }

    fn density<T: Scalar>(&self, tape: &mut Tape<T>, z: Var, paired: bool) -> Var {
        match self.scale {
            Scale::Diag { log_variance } => tape.gauss_diag(z, self.mean, log_variance, paired),
            Scale::Tril { raw } => tape.gauss_tril(z, self.mean, raw, paired),
        }
    }

    /// Reparameterized sample with the given standard-normal noise.
    pub fn sample_with<T: Scalar>(&self, tape: &mut Tape<T>, eps: Tensor<T>) -> Var {
        let e = tape.constant(eps);
        let spread = match self.scale {
            Scale::Diag { log_variance } => {
                let half = tape.scale(log_variance, T::of(0.5));
                let sd = tape.exp(half);
                tape.mul(sd, e)
            }
            Scale::Tril { raw } => tape.tril_mul(raw, e),
        };
        tape.add(self.mean, spread)
    }

    pub fn sample<T: Scalar, R: Rng + ?Sized>(&self, tape: &mut Tape<T>, rng: &mut R) -> Var {
        let rows = tape.value(self.mean).rows();
        let eps = sample_eps(rows, self.dim, rng);
        self.sample_with(tape, eps)
    }

    /// Row `i` as a standalone head.
    pub fn head<T: Scalar>(&self, tape: &Tape<T>, i: usize) -> GaussianHead<T> {
        let mean = tape.value(self.mean).row(i).to_vec();
        match self.scale {
            Scale::Diag { log_variance } => GaussianHead {
                mean,
                log_variance: tape.value(log_variance).row(i).to_vec(),
                cholesky: None,
            },
            Scale::Tril { raw } => {
                let l = tril_factor(tape.value(raw).row(i), self.dim);
                GaussianHead::full(mean, l).expect("softplus diagonal is positive")
            }
        }
    }
}

/// Learned mixture parameters held in a [`ParamStore`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixturePrior {
    pub logits: ParamId,
    pub means: ParamId,
    pub scales: ParamId,
    pub covariance: Covariance,
    pub dim: usize,
}

impl MixturePrior {
    /// Component means from a standard normal, unit covariances, uniform weights.
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        name: &str,
        components: usize,
        dim: usize,
        covariance: Covariance,
        rng: &mut R,
    ) -> Result<Self> {
        covariance.check_dim(dim)?;
        if components == 0 {
            return Err(Error::InvalidArgument("mixture needs at least one component".into()));
        }
        let logits = store.add(format!("{name}.logits"), Tensor::zeros(1, components));
        let means = store.add(format!("{name}.means"), sample_eps(components, dim, rng));
        let scales = match covariance {
            Covariance::Diagonal => Tensor::zeros(components, dim),
            Covariance::Full => {
                // softplus(ln(e - 1)) = 1
                let unit = (std::f64::consts::E - 1.0).ln();
                Tensor::from_fn(components, tril_len(dim), |_, t| {
                    let r = ((((8 * t + 1) as f64).sqrt() - 1.0) / 2.0).floor() as usize;
                    if t == r * (r + 1) / 2 + r {
                        T::of(unit)
                    } else {
                        T::zero()
                    }
                })
            }
        };
        let scales = store.add(format!("{name}.scales"), scales);
        Ok(Self {
            logits,
            means,
            scales,
            covariance,
            dim,
        })
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        vec![self.logits, self.means, self.scales]
    }

    pub fn components<T: Scalar>(&self, store: &ParamStore<T>) -> usize {
        store.get(self.logits).cols()
    }

    /// Log-density of every row of `z`, N×1.
    pub fn log_prob<T: Scalar>(&self, tape: &mut Tape<T>, store: &ParamStore<T>, z: Var) -> Result<Var> {
        let logits = tape.param(store, self.logits);
        let mean = tape.param(store, self.means);
        let raw = tape.param(store, self.scales);
        let scale = match self.covariance {
            Covariance::Diagonal => Scale::Diag { log_variance: raw },
            Covariance::Full => Scale::Tril { raw },
        };
        let comps = GaussianBatch::new(tape, mean, scale)?;
        let pairwise = comps.log_prob_pairwise(tape, z);
        let logw = tape.log_softmax_rows(logits);
        let joint = tape.add_row(pairwise, logw);
        Ok(tape.logsumexp_rows(joint))
    }

    pub fn to_mixture<T: Scalar>(&self, store: &ParamStore<T>) -> MixtureGaussian<T> {
        let means = store.get(self.means);
        let scales = store.get(self.scales);
        let components = (0..means.rows())
            .map(|k| match self.covariance {
                Covariance::Diagonal => GaussianHead {
                    mean: means.row(k).to_vec(),
                    log_variance: scales.row(k).to_vec(),
                    cholesky: None,
                },
                Covariance::Full => GaussianHead::full(means.row(k).to_vec(), tril_factor(scales.row(k), self.dim))
                    .expect("softplus diagonal is positive"),
            })
            .collect();
        MixtureGaussian {
            logits: store.get(self.logits).data().to_vec(),
            components,
        }
    }
}
