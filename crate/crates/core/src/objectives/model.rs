use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::diffgrad::{
    Activation, Adam, Covariance, DenseNet, GaussianBatch, MixturePrior, ParamId, ParamStore, Tape,
    Tensor, Var,
};
use crate::error::{Error, Result};
use crate::info::{consistency_metric, entropy, EntropyEstimates, ProbVector};
use crate::scalar::Scalar;

use super::losses::{
    bidir_ceb_loss, catgen_log_prob, consistent_classifier, denoising_ceb_loss, determ_ce_loss,
    hier_ceb_loss, noise_sample, rate_lower_bound, vceb_loss, vib_loss, DirectionTerms, LayerTerms,
};
use super::{ObjectiveKind, ObjectiveSpec};

/// Layer sizes and distribution families shared by every objective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Architecture {
    pub hidden: Vec<usize>,
    pub latent_dim: usize,
    pub classifier_hidden: Vec<usize>,
    pub activation: Activation,
    pub covariance: Covariance,
    pub mixture_components: usize,
}

impl Default for Architecture {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64],
            latent_dim: 4,
            classifier_hidden: vec![32],
            activation: Activation::Elu,
            covariance: Covariance::Diagonal,
            mixture_components: 32,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Upper {
    encoder: DenseNet,
    backward: DenseNet,
    classifier: DenseNet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Parts {
    encoder: DenseNet,
    classifier: Option<DenseNet>,
    /// b(z|y) for labelled kinds; b(z|x′) for the denoising kind.
    backward: Option<DenseNet>,
    decoder: Option<DenseNet>,
    marginal: Option<MixturePrior>,
    upper: Option<Upper>,
}

/// Graph handles produced by one training forward pass.
#[derive(Debug, Clone, Copy)]
pub struct Forward {
    pub loss: Var,
    /// N×C class log-probabilities at the sampled representation.
    pub log_proba: Option<Var>,
    pub encoder: Option<GaussianBatch>,
    /// First-layer representation the loss was evaluated at.
    pub z: Var,
    pub log_e: Option<Var>,
    pub log_b: Option<Var>,
    pub log_c: Option<Var>,
}

/// Minibatch diagnostics, all in nats.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatchMetrics {
    pub loss: f64,
    pub accuracy: Option<f64>,
    pub re_x: Option<f64>,
    pub rate: Option<f64>,
    pub r_x: Option<f64>,
    pub log_c: Option<f64>,
    pub consistency: Option<f64>,
}

/// Main optimizer plus the separate one fitting m(z) for conditional models.
#[derive(Debug, Clone)]
pub struct Optimizers<T> {
    pub main: Adam<T>,
    pub aux: Option<Adam<T>>,
}

/// A trainable model for one [`ObjectiveSpec`].
#[derive(Debug, Clone)]
pub struct Model<T> {
    spec: ObjectiveSpec,
    arch: Architecture,
    input_dim: usize,
    classes: usize,
    store: ParamStore<T>,
    parts: Parts,
    log_prior: Vec<T>,
}

#[derive(Serialize, Deserialize)]
struct ModelMeta {
    spec: ObjectiveSpec,
    arch: Architecture,
    input_dim: usize,
    classes: usize,
    log_prior: Vec<f64>,
    parts: Parts,
}

fn widths(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    let mut w = Vec::with_capacity(hidden.len() + 2);
    w.push(input);
    w.extend_from_slice(hidden);
    w.push(output);
    w
}

fn mean_of<T: Scalar>(tape: &Tape<T>, v: Var) -> f64 {
    let t = tape.value(v);
    t.sum().as_f64() / t.data().len() as f64
}

impl<T: Scalar> Model<T> {
    pub fn new<R: Rng + ?Sized>(
        spec: ObjectiveSpec,
        arch: Architecture,
        input_dim: usize,
        classes: usize,
        rng: &mut R,
    ) -> Result<Self> {
        spec.validate()?;
        if input_dim == 0 || arch.latent_dim == 0 {
            return Err(Error::Shape("input and latent dimensions must be positive".into()));
        }
        if classes < 2 && spec.kind.is_supervised() {
            return Err(Error::InvalidArgument("at least two classes required".into()));
        }
        let kind = spec.kind;
        let d = arch.latent_dim;
        let head = arch.covariance.output_width(d);
        let act = arch.activation;
        let mut store = ParamStore::new();
        let encoder_out = if kind.is_stochastic() { head } else { d };
        let encoder = DenseNet::new(&mut store, "encoder", &widths(input_dim, &arch.hidden, encoder_out), act, rng)?;
        let classifier = match kind {
            ObjectiveKind::CatgenBidir | ObjectiveKind::Denoise => None,
            _ => Some(DenseNet::new(
                &mut store,
                "classifier",
                &widths(d, &arch.classifier_hidden, classes),
                act,
                rng,
            )?),
        };
        let backward = match kind {
            ObjectiveKind::Vib | ObjectiveKind::Determ => None,
            ObjectiveKind::Denoise => Some(DenseNet::new(
                &mut store,
                "backward",
                &widths(input_dim, &arch.hidden, head),
                act,
                rng,
            )?),
            _ => Some(DenseNet::new(&mut store, "backward", &[classes, head], act, rng)?),
        };
        let decoder = match kind {
            ObjectiveKind::Bidir => Some(DenseNet::new(
                &mut store,
                "decoder",
                &widths(d, &arch.hidden, 2 * input_dim),
                act,
                rng,
            )?),
            _ => None,
        };
        let upper = match kind {
            ObjectiveKind::Hier => Some(Upper {
                encoder: DenseNet::new(&mut store, "upper.encoder", &widths(d, &arch.classifier_hidden, head), act, rng)?,
                backward: DenseNet::new(&mut store, "upper.backward", &[classes, head], act, rng)?,
                classifier: DenseNet::new(
                    &mut store,
                    "upper.classifier",
                    &widths(d, &arch.classifier_hidden, classes),
                    act,
                    rng,
                )?,
            }),
            _ => None,
        };
        let marginal = if kind.is_stochastic() {
            Some(MixturePrior::new(
                &mut store,
                "marginal",
                arch.mixture_components,
                d,
                arch.covariance,
                rng,
            )?)
        } else {
            None
        };
        let log_prior = vec![T::of(-(classes.max(1) as f64).ln()); classes];
        Ok(Self {
            spec,
            arch,
            input_dim,
            classes,
            store,
            parts: Parts {
                encoder,
                classifier,
                backward,
                decoder,
                marginal,
                upper,
            },
            log_prior,
        })
    }

    pub fn spec(&self) -> &ObjectiveSpec {
        &self.spec
    }

    pub fn kind(&self) -> ObjectiveKind {
        self.spec.kind
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn store(&self) -> &ParamStore<T> {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.store
    }

    pub fn parameter_count(&self) -> usize {
        self.store.scalar_count()
    }

    /// Sets log p(y) from class frequencies; used by the consistent classifier.
    pub fn set_label_prior(&mut self, marginal: &[f64]) -> Result<()> {
        if marginal.len() != self.classes {
            return Err(Error::Shape(format!(
                "{} prior entries for {} classes",
                marginal.len(),
                self.classes
            )));
        }
        self.log_prior = marginal.iter().map(|&p| T::of(p.max(1e-12).ln())).collect();
        Ok(())
    }

    /// Records the input domain for the denoising noise when none is set.
    pub fn fit_domain(&mut self, inputs: &Tensor<T>) {
        if self.spec.domain.is_none() && !inputs.data().is_empty() {
            let lo = inputs.data().iter().fold(f64::INFINITY, |a, v| a.min(v.as_f64()));
            let hi = inputs.data().iter().fold(f64::NEG_INFINITY, |a, v| a.max(v.as_f64()));
            self.spec.domain = Some(if lo < hi { [lo, hi] } else { [lo, lo + 1.0] });
        }
    }

    fn marginal_is_auxiliary(&self) -> bool {
        self.kind().is_stochastic() && self.kind() != ObjectiveKind::Vib
    }

    pub fn optimizers(&self, learning_rate: f64) -> Optimizers<T> {
        let aux_ids: Vec<ParamId> = match (&self.parts.marginal, self.marginal_is_auxiliary()) {
            (Some(m), true) => m.param_ids(),
            _ => Vec::new(),
        };
        let main_ids: Vec<ParamId> = self.store.ids().filter(|id| !aux_ids.contains(id)).collect();
        Optimizers {
            main: Adam::new(&self.store, main_ids).with_lr(learning_rate),
            aux: (!aux_ids.is_empty()).then(|| Adam::new(&self.store, aux_ids).with_lr(learning_rate)),
        }
    }

    fn check_inputs(&self, x: &Tensor<T>) -> Result<()> {
        if x.rows() == 0 {
            return Err(Error::InvalidArgument("empty batch".into()));
        }
        if x.cols() != self.input_dim {
            return Err(Error::Shape(format!(
                "model expects {} input features, got {}",
                self.input_dim,
                x.cols()
            )));
        }
        Ok(())
    }

    fn check_batch(&self, x: &Tensor<T>, labels: &[usize]) -> Result<()> {
        self.check_inputs(x)?;
        if self.kind().is_supervised() {
            if labels.len() != x.rows() {
                return Err(Error::Shape("one label per example required".into()));
            }
            if let Some(&bad) = labels.iter().find(|&&l| l >= self.classes) {
                return Err(Error::InvalidArgument(format!("label {bad} outside {} classes", self.classes)));
            }
        }
        Ok(())
    }

    fn gaussian(&self, tape: &mut Tape<T>, net: &DenseNet, input: Var) -> Result<GaussianBatch> {
        let out = net.forward(tape, &self.store, input)?;
        GaussianBatch::from_output(tape, out, self.arch.latent_dim, self.arch.covariance)
    }

    fn net<'a>(part: &'a Option<DenseNet>, what: &'static str) -> Result<&'a DenseNet> {
        part.as_ref().ok_or(Error::Capability(what))
    }

    fn log_softmax(&self, tape: &mut Tape<T>, net: &DenseNet, z: Var) -> Result<Var> {
        let logits = net.forward(tape, &self.store, z)?;
        Ok(tape.log_softmax_rows(logits))
    }

    fn one_hot(&self, tape: &mut Tape<T>, labels: &[usize]) -> Var {
        tape.constant(Tensor::one_hot(labels, self.classes))
    }

    /// One backward-encoder distribution per class, C rows.
    fn per_class_backward(&self, tape: &mut Tape<T>) -> Result<GaussianBatch> {
        let b = Self::net(&self.parts.backward, "model has no backward encoder")?;
        let all: Vec<usize> = (0..self.classes).collect();
        let eye = self.one_hot(tape, &all);
        self.gaussian(tape, b, eye)
    }

    fn point_or_sample<R: Rng + ?Sized>(&self, tape: &mut Tape<T>, g: &GaussianBatch, rng: Option<&mut R>) -> Var {
        match rng {
            Some(r) => g.sample(tape, r),
            None => g.mean,
        }
    }

    /// Class log-probabilities along the prediction path: at the encoder
    /// means when `rng` is `None`, at one reparameterized sample otherwise.
    pub fn log_proba_graph<R: Rng + ?Sized>(&self, tape: &mut Tape<T>, x: Var, mut rng: Option<&mut R>) -> Result<Var> {
        let kind = self.kind();
        if !kind.is_supervised() {
            return Err(Error::Capability("denoising models do not classify"));
        }
        if kind == ObjectiveKind::Determ {
            let z = self.parts.encoder.forward(tape, &self.store, x)?;
            return self.log_softmax(tape, Self::net(&self.parts.classifier, "classifier")?, z);
        }
        let e = self.gaussian(tape, &self.parts.encoder, x)?;
        let z = self.point_or_sample(tape, &e, rng.as_deref_mut());
        match kind {
            ObjectiveKind::CatgenBidir => {
                let per_class = self.per_class_backward(tape)?;
                consistent_classifier(tape, &per_class, z, &self.log_prior)
            }
            ObjectiveKind::Hier => {
                let up = self.parts.upper.as_ref().ok_or(Error::Capability("upper layer"))?;
                let e2 = self.gaussian(tape, &up.encoder, z)?;
                let z2 = self.point_or_sample(tape, &e2, rng);
                self.log_softmax(tape, &up.classifier, z2)
            }
            _ => self.log_softmax(tape, Self::net(&self.parts.classifier, "classifier")?, z),
        }
    }

    /// Builds the training loss for one minibatch.
    pub fn forward_loss<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape<T>,
        x: &Tensor<T>,
        labels: &[usize],
        rng: &mut R,
    ) -> Result<Forward> {
        self.check_batch(x, labels)?;
        let kind = self.kind();
        let xv = tape.constant(x.clone());
        if kind == ObjectiveKind::Determ {
            let z = self.parts.encoder.forward(tape, &self.store, xv)?;
            let logits = Self::net(&self.parts.classifier, "classifier")?.forward(tape, &self.store, z)?;
            let loss = determ_ce_loss(tape, logits, labels)?;
            let log_proba = tape.log_softmax_rows(logits);
            let log_c = tape.pick(log_proba, labels);
            return Ok(Forward {
                loss,
                log_proba: Some(log_proba),
                encoder: None,
                z,
                log_e: None,
                log_b: None,
                log_c: Some(log_c),
            });
        }

        let e = self.gaussian(tape, &self.parts.encoder, xv)?;
        let z = e.sample(tape, rng);
        let log_e = e.log_prob(tape, z);
        let gamma = T::of(self.spec.gamma());
        let mut fwd = Forward {
            loss: z,
            log_proba: None,
            encoder: Some(e),
            z,
            log_e: Some(log_e),
            log_b: None,
            log_c: None,
        };
        match kind {
            ObjectiveKind::Vceb => {
                let onehot = self.one_hot(tape, labels);
                let b = self.gaussian(tape, Self::net(&self.parts.backward, "backward encoder")?, onehot)?;
                let log_b = b.log_prob(tape, z);
                let log_proba = self.log_softmax(tape, Self::net(&self.parts.classifier, "classifier")?, z)?;
                let log_c = tape.pick(log_proba, labels);
                fwd.loss = vceb_loss(tape, log_e, log_b, log_c, gamma)?;
                fwd.log_proba = Some(log_proba);
                fwd.log_b = Some(log_b);
                fwd.log_c = Some(log_c);
            }
            ObjectiveKind::Vib => {
                let m = self.parts.marginal.as_ref().ok_or(Error::Capability("marginal"))?;
                let log_m = m.log_prob(tape, &self.store, z)?;
                let log_proba = self.log_softmax(tape, Self::net(&self.parts.classifier, "classifier")?, z)?;
                let log_c = tape.pick(log_proba, labels);
                fwd.loss = vib_loss(tape, log_e, log_m, log_c, T::of(self.spec.beta()))?;
                fwd.log_proba = Some(log_proba);
                fwd.log_c = Some(log_c);
            }
            ObjectiveKind::Bidir | ObjectiveKind::CatgenBidir => {
                let onehot = self.one_hot(tape, labels);
                let b = self.gaussian(tape, Self::net(&self.parts.backward, "backward encoder")?, onehot)?;
                let zy = b.sample(tape, rng);
                let log_b = b.log_prob(tape, z);
                let (log_c, log_d, log_proba) = if kind == ObjectiveKind::Bidir {
                    let log_proba = self.log_softmax(tape, Self::net(&self.parts.classifier, "classifier")?, z)?;
                    let log_c = tape.pick(log_proba, labels);
                    let out = Self::net(&self.parts.decoder, "decoder")?.forward(tape, &self.store, zy)?;
                    let dec = GaussianBatch::from_output(tape, out, self.input_dim, Covariance::Diagonal)?;
                    let log_d = dec.log_prob(tape, xv);
                    (log_c, log_d, log_proba)
                } else {
                    let log_c = catgen_log_prob(tape, &b, z);
                    let log_d = catgen_log_prob(tape, &e, zy);
                    let per_class = self.per_class_backward(tape)?;
                    let log_proba = consistent_classifier(tape, &per_class, z, &self.log_prior)?;
                    (log_c, log_d, log_proba)
                };
                let forward = DirectionTerms {
                    log_own: log_e,
                    log_other: log_b,
                    log_pred: log_c,
                };
                let own_y = b.log_prob(tape, zy);
                let other_y = e.log_prob(tape, zy);
                let reverse = DirectionTerms {
                    log_own: own_y,
                    log_other: other_y,
                    log_pred: log_d,
                };
                fwd.loss = bidir_ceb_loss(
                    tape,
                    forward,
                    reverse,
                    T::of(self.spec.gamma_x()),
                    T::of(self.spec.gamma_y()),
                )?;
                fwd.log_proba = Some(log_proba);
                fwd.log_b = Some(log_b);
                fwd.log_c = Some(log_c);
            }
            ObjectiveKind::Hier => {
                let up = self.parts.upper.as_ref().ok_or(Error::Capability("upper layer"))?;
                let onehot = self.one_hot(tape, labels);
                let b1 = self.gaussian(tape, Self::net(&self.parts.backward, "backward encoder")?, onehot)?;
                let log_b = b1.log_prob(tape, z);
                let lp1 = self.log_softmax(tape, Self::net(&self.parts.classifier, "classifier")?, z)?;
                let log_c = tape.pick(lp1, labels);
                let e2 = self.gaussian(tape, &up.encoder, z)?;
                let z2 = e2.sample(tape, rng);
                let b2 = self.gaussian(tape, &up.backward, onehot)?;
                let lp2 = self.log_softmax(tape, &up.classifier, z2)?;
                let layers = [
                    LayerTerms {
                        log_e,
                        log_b,
                        log_c,
                    },
                    LayerTerms {
                        log_e: e2.log_prob(tape, z2),
                        log_b: b2.log_prob(tape, z2),
                        log_c: tape.pick(lp2, labels),
                    },
                ];
                fwd.loss = hier_ceb_loss(tape, &layers)?;
                fwd.log_proba = Some(lp2);
                fwd.log_b = Some(log_b);
                fwd.log_c = Some(log_c);
            }
            ObjectiveKind::Denoise => {
                let [lo, hi] = self
                    .spec
                    .domain
                    .ok_or_else(|| Error::InvalidArgument("denoising needs an input domain".into()))?;
                let noisy = noise_sample(x, T::of(lo), T::of(hi), T::of(self.spec.noise_scale()), rng)?;
                let xn = tape.constant(noisy);
                let b = self.gaussian(tape, Self::net(&self.parts.backward, "noisy encoder")?, xn)?;
                let zn = b.sample(tape, rng);
                let log_b = b.log_prob(tape, z);
                let clean = DirectionTerms {
                    log_own: log_e,
                    log_other: log_b,
                    log_pred: catgen_log_prob(tape, &b, z),
                };
                let own = b.log_prob(tape, zn);
                let other = e.log_prob(tape, zn);
                let noisy_terms = DirectionTerms {
                    log_own: own,
                    log_other: other,
                    log_pred: catgen_log_prob(tape, &e, zn),
                };
                fwd.loss = denoising_ceb_loss(tape, clean, noisy_terms, gamma, self.spec.noising_only)?;
                fwd.log_b = Some(log_b);
                fwd.log_c = Some(clean.log_pred);
            }
            ObjectiveKind::Determ => unreachable!("handled above"),
        }
        if !tape.scalar_value(fwd.loss).is_finite() {
            return Err(Error::NonFiniteLoss("total loss".into()));
        }
        Ok(fwd)
    }

    /// Diagnostics for a forward pass; adds estimator nodes to `tape`.
    pub fn batch_metrics(&self, tape: &mut Tape<T>, fwd: &Forward, labels: &[usize]) -> Result<BatchMetrics> {
        let accuracy = fwd.log_proba.map(|lp| {
            let pred = tape.value(lp).argmax_rows();
            pred.iter().zip(labels).filter(|(p, y)| p == y).count() as f64 / labels.len() as f64
        });
        let re_x = match (fwd.log_e, fwd.log_b) {
            (Some(le), Some(lb)) => {
                let r = tape.sub(le, lb);
                Some(mean_of(tape, r))
            }
            _ => None,
        };
        let rate = match (fwd.log_e, &self.parts.marginal) {
            (Some(le), Some(m)) => {
                let lm = m.log_prob(tape, &self.store, fwd.z)?;
                let r = tape.sub(le, lm);
                Some(mean_of(tape, r))
            }
            _ => None,
        };
        let r_x = fwd.encoder.map(|e| {
            let v = rate_lower_bound(tape, &e, fwd.z);
            tape.scalar_value(v).as_f64()
        });
        let log_c = fwd.log_c.map(|lc| mean_of(tape, lc));
        let consistency = match (fwd.encoder, fwd.log_b, fwd.log_c, self.kind().is_supervised()) {
            (Some(e), Some(lb), Some(lc), true) => {
                let k = labels.len() as f64;
                let pairwise = e.log_prob_pairwise(tape, fwd.z);
                let lse = tape.logsumexp_rows(pairwise);
                let h_z = -(mean_of(tape, lse) - k.ln());
                let py = ProbVector::<f64>::empirical(labels, self.classes)?;
                Some(consistency_metric(&EntropyEstimates {
                    h_z,
                    h_z_given_y: -mean_of(tape, lb),
                    h_y: entropy(&py),
                    h_y_given_z: -mean_of(tape, lc),
                }))
            }
            _ => None,
        };
        Ok(BatchMetrics {
            loss: tape.scalar_value(fwd.loss).as_f64(),
            accuracy,
            re_x,
            rate,
            r_x,
            log_c,
            consistency,
        })
    }

    /// Loss and parameter gradients for one minibatch without updating anything.
    pub fn loss_and_grads<R: Rng + ?Sized>(
        &self,
        x: &Tensor<T>,
        labels: &[usize],
        rng: &mut R,
    ) -> Result<(T, Vec<(ParamId, Tensor<T>)>)> {
        let mut tape = Tape::new();
        let fwd = self.forward_loss(&mut tape, x, labels, rng)?;
        tape.backward(fwd.loss)?;
        Ok((tape.scalar_value(fwd.loss), tape.param_grads()))
    }

    /// One optimization step; m(z) of conditional models is fitted to the
    /// detached sample by its own optimizer.
    pub fn train_step<R: Rng + ?Sized>(
        &mut self,
        opt: &mut Optimizers<T>,
        x: &Tensor<T>,
        labels: &[usize],
        rng: &mut R,
    ) -> Result<BatchMetrics> {
        let mut tape = Tape::new();
        let fwd = self.forward_loss(&mut tape, x, labels, rng)?;
        let metrics = self.batch_metrics(&mut tape, &fwd, labels)?;
        tape.backward(fwd.loss)?;
        opt.main.step(&mut self.store, &tape.param_grads());
        if let (Some(aux), Some(m)) = (opt.aux.as_mut(), self.parts.marginal.as_ref()) {
            let mut t = Tape::new();
            let z = t.constant(tape.value(fwd.z).clone());
            let lm = m.log_prob(&mut t, &self.store, z)?;
            let mean = t.mean(lm);
            let loss = t.neg(mean);
            if !t.scalar_value(loss).is_finite() {
                return Err(Error::NonFiniteLoss("log m(z)".into()));
            }
            t.backward(loss)?;
            aux.step(&mut self.store, &t.param_grads());
        }
        Ok(metrics)
    }

    /// Class log-probabilities at the encoder means.
    pub fn predict_log_proba(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_inputs(x)?;
        let mut tape = Tape::new();
        let xv = tape.constant(x.clone());
        let lp = self.log_proba_graph::<rand_chacha::ChaCha8Rng>(&mut tape, xv, None)?;
        Ok(tape.value(lp).clone())
    }

    pub fn predict(&self, x: &Tensor<T>) -> Result<Vec<usize>> {
        Ok(self.predict_log_proba(x)?.argmax_rows())
    }

    /// Summed cross-entropy at `labels` and its gradient with respect to `x`,
    /// through one sampled forward pass for stochastic models.
    pub fn input_gradient<R: Rng + ?Sized>(
        &self,
        x: &Tensor<T>,
        labels: &[usize],
        rng: &mut R,
    ) -> Result<(T, Tensor<T>)> {
        self.check_inputs(x)?;
        if labels.len() != x.rows() {
            return Err(Error::Shape("one label per example required".into()));
        }
        let mut tape = Tape::new();
        let xv = tape.constant(x.clone());
        let lp = self.log_proba_graph(&mut tape, xv, Some(rng))?;
        let picked = tape.pick(lp, labels);
        let total = tape.sum(picked);
        let loss = tape.neg(total);
        tape.backward(loss)?;
        let grad = tape
            .grad(xv)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(x.rows(), x.cols()));
        Ok((tape.scalar_value(loss), grad))
    }

    /// Per-example rate log e(z|x) − log m(z) at one sample.
    pub fn rate_scores<R: Rng + ?Sized>(&self, x: &Tensor<T>, rng: &mut R) -> Result<Vec<T>> {
        let m = self
            .parts
            .marginal
            .as_ref()
            .ok_or(Error::Capability("rate requires a stochastic encoder and a learned marginal"))?;
        let mut tape = Tape::new();
        let xv = tape.constant(x.clone());
        let e = self.gaussian(&mut tape, &self.parts.encoder, xv)?;
        let z = e.sample(&mut tape, rng);
        let r = super::losses::rate(&mut tape, &self.store, &e, m, z)?;
        Ok(tape.value(r).data().to_vec())
    }

    /// Writes `<stem>.json` and `<stem>.bin`.
    pub fn save(&self, stem: &Path) -> Result<()> {
        let meta = ModelMeta {
            spec: self.spec.clone(),
            arch: self.arch.clone(),
            input_dim: self.input_dim,
            classes: self.classes,
            log_prior: self.log_prior.iter().map(|v| v.as_f64()).collect(),
            parts: self.parts.clone(),
        };
        self.store.save_files(stem, serde_json::to_value(meta)?)
    }

    pub fn load(stem: &Path) -> Result<Self> {
        let (store, meta) = ParamStore::load_files(stem)?;
        let meta: ModelMeta = serde_json::from_value(meta)?;
        Ok(Self {
            spec: meta.spec,
            arch: meta.arch,
            input_dim: meta.input_dim,
            classes: meta.classes,
            store,
            parts: meta.parts,
            log_prior: meta.log_prior.into_iter().map(T::of).collect(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_arch() -> Architecture {
        Architecture {
            hidden: vec![5],
            latent_dim: 2,
            classifier_hidden: vec![4],
            mixture_components: 3,
            ..Architecture::default()
        }
    }

    fn batch(rng: &mut ChaCha8Rng) -> (Tensor<f64>, Vec<usize>) {
        let x = Tensor::from_fn(6, 3, |_, _| rng.random_range(0.0..1.0));
        (x, vec![0, 1, 2, 0, 1, 2])
    }

    #[test]
    fn every_kind_builds_and_steps() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for kind in ObjectiveKind::ALL {
            let mut model = Model::<f64>::new(ObjectiveSpec::new(kind, 0.0), small_arch(), 3, 3, &mut rng).unwrap();
            let (x, y) = batch(&mut rng);
            model.fit_domain(&x);
            let mut opt = model.optimizers(1e-3);
            let m = model.train_step(&mut opt, &x, &y, &mut rng).unwrap();
            assert!(m.loss.is_finite(), "{kind}");
            assert_eq!(m.accuracy.is_some(), kind.is_supervised(), "{kind}");
            assert_eq!(m.re_x.is_some(), kind.has_backward(), "{kind}");
            if kind.is_supervised() {
                let p = model.predict_log_proba(&x).unwrap();
                for r in 0..p.rows() {
                    let s: f64 = p.row(r).iter().map(|v| v.exp()).sum();
                    assert!((s - 1.0).abs() < 1e-9);
                }
            } else {
                assert!(matches!(model.predict(&x), Err(Error::Capability(_))));
            }
        }
    }

    #[test]
    fn marginal_optimizer_is_separate_for_conditional_models() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let ceb = Model::<f64>::new(ObjectiveSpec::new(ObjectiveKind::Vceb, 0.0), small_arch(), 3, 3, &mut rng).unwrap();
        assert!(ceb.optimizers(1e-3).aux.is_some());
        let (x, y) = batch(&mut rng);
        let (_, grads) = ceb.loss_and_grads(&x, &y, &mut rng).unwrap();
        let m = ceb.parts.marginal.as_ref().unwrap().param_ids();
        assert!(grads.iter().all(|(id, _)| !m.contains(id)));

        let vib = Model::<f64>::new(ObjectiveSpec::new(ObjectiveKind::Vib, 0.0), small_arch(), 3, 3, &mut rng).unwrap();
        assert!(vib.optimizers(1e-3).aux.is_none());
        let det = Model::<f64>::new(ObjectiveSpec::new(ObjectiveKind::Determ, 0.0), small_arch(), 3, 3, &mut rng).unwrap();
        assert!(matches!(det.rate_scores(&x, &mut rng), Err(Error::Capability(_))));
    }

    #[test]
    fn checkpoint_roundtrip_preserves_predictions() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let model = Model::<f64>::new(ObjectiveSpec::new(ObjectiveKind::CatgenBidir, 1.0), small_arch(), 3, 3, &mut rng).unwrap();
        let stem = dir.path().join("model");
        model.save(&stem).unwrap();
        let back = Model::<f64>::load(&stem).unwrap();
        let (x, _) = batch(&mut rng);
        let a = model.predict_log_proba(&x).unwrap();
        let b = back.predict_log_proba(&x).unwrap();
        for (u, v) in a.data().iter().zip(b.data()) {
            assert!((u - v).abs() < 1e-4);
        }
        assert_eq!(back.spec(), model.spec());
    }

    #[test]
    fn rejects_malformed_batches() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let model = Model::<f64>::new(ObjectiveSpec::new(ObjectiveKind::Vceb, 0.0), small_arch(), 3, 3, &mut rng).unwrap();
        let mut tape = Tape::new();
        let x = Tensor::zeros(2, 3);
        assert!(model.forward_loss(&mut tape, &x, &[0, 5], &mut rng).is_err());
        assert!(model.forward_loss(&mut tape, &x, &[0], &mut rng).is_err());
        assert!(model.forward_loss(&mut tape, &Tensor::zeros(2, 4), &[0, 1], &mut rng).is_err());
    }
}
