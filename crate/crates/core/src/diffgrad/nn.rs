use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::tape::{Tape, Var};
use super::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ParamId(pub usize);

/// Named parameter tensors shared by every component of a model.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore<T> {
    names: Vec<String>,
    tensors: Vec<Tensor<T>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestEntry {
    name: String,
    rows: usize,
    cols: usize,
    offset: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    format: String,
    entries: Vec<ManifestEntry>,
    metadata: serde_json::Value,
}

const CHECKPOINT_FORMAT: &str = "ceb-checkpoint-v1";

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        Self {
            names: Vec::new(),
            tensors: Vec::new(),
        }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor<T>) -> ParamId {
        self.names.push(name.into());
        self.tensors.push(value);
        ParamId(self.tensors.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.tensors[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn scalar_count(&self) -> usize {
        self.tensors.iter().map(|t| t.data().len()).sum()
    }

    /// Writes a JSON manifest and a little-endian `f32` blob.
    pub fn save<W1: Write, W2: Write>(
        &self,
        manifest: W1,
        mut blob: W2,
        metadata: serde_json::Value,
    ) -> Result<()> {
        let mut entries = Vec::with_capacity(self.len());
        let mut offset = 0;
        for (name, t) in self.names.iter().zip(&self.tensors) {
            entries.push(ManifestEntry {
                name: name.clone(),
                rows: t.rows(),
                cols: t.cols(),
                offset,
            });
            for v in t.data() {
                blob.write_all(&(v.as_f64() as f32).to_le_bytes())?;
            }
            offset += t.data().len();
        }
        serde_json::to_writer_pretty(
            manifest,
            &Manifest {
                format: CHECKPOINT_FORMAT.into(),
                entries,
                metadata,
            },
        )?;
        Ok(())
    }

    pub fn load<R1: Read, R2: Read>(manifest: R1, mut blob: R2) -> Result<(Self, serde_json::Value)> {
        let m: Manifest = serde_json::from_reader(manifest)?;
        if m.format != CHECKPOINT_FORMAT {
            return Err(Error::InvalidArgument(format!("unknown checkpoint format `{}`", m.format)));
        }
        let mut bytes = Vec::new();
        blob.read_to_end(&mut bytes)?;
        let floats: Vec<f32> = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        let mut store = Self::new();
        for e in m.entries {
            let n = e.rows * e.cols;
            let slice = floats.get(e.offset..e.offset + n).ok_or_else(|| {
                Error::Shape(format!("blob too short for parameter `{}`", e.name))
            })?;
            store.add(
                e.name,
                Tensor::new(e.rows, e.cols, slice.iter().map(|&v| T::of(v as f64)).collect())?,
            );
        }
        Ok((store, m.metadata))
    }

    /// [`ParamStore::save`] to `<stem>.json` and `<stem>.bin`.
    pub fn save_files(&self, stem: &Path, metadata: serde_json::Value) -> Result<()> {
        let manifest = std::fs::File::create(stem.with_extension("json"))?;
        let blob = std::io::BufWriter::new(std::fs::File::create(stem.with_extension("bin"))?);
        self.save(manifest, blob, metadata)
    }

    pub fn load_files(stem: &Path) -> Result<(Self, serde_json::Value)> {
        let manifest = std::fs::File::open(stem.with_extension("json"))?;
        let blob = std::fs::File::open(stem.with_extension("bin"))?;
        Self::load(manifest, std::io::BufReader::new(blob))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Elu,
    Tanh,
    Identity,
}

/// Fully connected network; the activation applies to hidden layers only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseNet {
    widths: Vec<usize>,
    activation: Activation,
    layers: Vec<(ParamId, ParamId)>,
}

impl DenseNet {
    /// Glorot-uniform weights and zero biases for `widths[0] -> ... -> widths[n]`.
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        name: &str,
        widths: &[usize],
        activation: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(Error::Shape(format!("invalid layer widths {widths:?}")));
        }
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let bound = (6.0 / (w[0] + w[1]) as f64).sqrt();
                let weight = Tensor::from_fn(w[0], w[1], |_, _| T::of(rng.random_range(-bound..bound)));
                let wid = store.add(format!("{name}.{i}.weight"), weight);
                let bid = store.add(format!("{name}.{i}.bias"), Tensor::zeros(1, w[1]));
                (wid, bid)
            })
            .collect();
        Ok(Self {
            widths: widths.to_vec(),
            activation,
            layers,
        })
    }

    pub fn input_width(&self) -> usize {
        self.widths[0]
    }

    pub fn output_width(&self) -> usize {
        *self.widths.last().expect("at least two widths")
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn layers(&self) -> &[(ParamId, ParamId)] {
        &self.layers
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        self.layers.iter().flat_map(|&(w, b)| [w, b]).collect()
    }

    pub fn param_count<T: Scalar>(&self, store: &ParamStore<T>) -> usize {
        self.param_ids().iter().map(|&id| store.get(id).data().len()).sum()
    }

    pub fn forward<T: Scalar>(&self, tape: &mut Tape<T>, store: &ParamStore<T>, x: Var) -> Result<Var> {
        let cols = tape.value(x).cols();
        if cols != self.input_width() {
            return Err(Error::Shape(format!(
                "network expects {} input features, got {cols}",
                self.input_width()
            )));
        }
        let mut h = x;
        let last = self.layers.len() - 1;
        for (i, &(w, b)) in self.layers.iter().enumerate() {
            let wv = tape.param(store, w);
            let bv = tape.param(store, b);
            let lin = tape.matmul(h, wv);
            h = tape.add_row(lin, bv);
            if i < last {
                h = match self.activation {
                    Activation::Elu => tape.elu(h),
                    Activation::Tanh => tape.tanh(h),
                    Activation::Identity => h,
                };
            }
        }
        if !tape.value(h).all_finite() {
            return Err(Error::NonFiniteLoss("network output".into()));
        }
        Ok(h)
    }

    /// Forward pass outside of any training graph.
    pub fn predict<T: Scalar>(&self, store: &ParamStore<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mut tape = Tape::new();
        let xv = tape.constant(x.clone());
        let out = self.forward(&mut tape, store, xv)?;
        Ok(tape.value(out).clone())
    }
}

#[derive(Debug, Clone)]
struct Moments<T> {
    m: Tensor<T>,
    v: Tensor<T>,
}

/// Adam over a fixed subset of a [`ParamStore`].
#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub lr: T,
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
    step: i32,
    params: Vec<ParamId>,
    state: Vec<Moments<T>>,
}

impl<T: Scalar> Adam<T> {
    /// Defaults: learning rate 1e-3, β₁ = 0.9, β₂ = 0.999, ε = 1e-8.
    pub fn new(store: &ParamStore<T>, params: Vec<ParamId>) -> Self {
        let state = params
            .iter()
            .map(|&id| {
                let (r, c) = store.get(id).shape();
                Moments {
                    m: Tensor::zeros(r, c),
                    v: Tensor::zeros(r, c),
                }
            })
            .collect();
        Self {
            lr: T::of(1e-3),
            beta1: T::of(0.9),
            beta2: T::of(0.999),
            eps: T::of(1e-8),
            step: 0,
            params,
            state,
        }
    }

    pub fn with_lr(mut self, lr: f64) -> Self {
        self.lr = T::of(lr);
        self
    }

    /// Applies one update using whichever of `grads` belong to this optimizer.
    pub fn step(&mut self, store: &mut ParamStore<T>, grads: &[(ParamId, Tensor<T>)]) {
        self.step += 1;
        let bc1 = T::one() - self.beta1.powi(self.step);
        let bc2 = T::one() - self.beta2.powi(self.step);
        for (id, g) in grads {
            let Some(slot) = self.params.iter().position(|p| p == id) else {
                continue;
            };
            let st = &mut self.state[slot];
            let p = store.get_mut(*id);
            for (((pv, &gv), mv), vv) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(st.m.data_mut())
                .zip(st.v.data_mut())
            {
                *mv = self.beta1 * *mv + (T::one() - self.beta1) * gv;
                *vv = self.beta2 * *vv + (T::one() - self.beta2) * gv * gv;
                let mhat = *mv / bc1;
                let vhat = *vv / bc2;
                *pv -= self.lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
    }
}
