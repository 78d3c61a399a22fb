use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::diffgrad::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Labelled inputs, one example per row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset<T> {
    pub inputs: Tensor<T>,
    pub labels: Vec<usize>,
    pub classes: usize,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(inputs: Tensor<T>, labels: Vec<usize>, classes: usize) -> Result<Self> {
        if inputs.rows() != labels.len() {
            return Err(Error::Shape(format!(
                "{} inputs but {} labels",
                inputs.rows(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::InvalidArgument(format!("label {bad} outside {classes} classes")));
        }
        Ok(Self {
            inputs,
            labels,
            classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.cols()
    }

    pub fn subset(&self, idx: &[usize]) -> Self {
        Self {
            inputs: self.inputs.select_rows(idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            classes: self.classes,
        }
    }

    /// Consecutive batches of at most `size` rows in storage order.
    pub fn batches(&self, size: usize) -> impl Iterator<Item = Self> + '_ {
        let size = size.max(1);
        (0..self.len())
            .step_by(size)
            .map(move |s| self.subset(&(s..(s + size).min(self.len())).collect::<Vec<_>>()))
    }

    /// Per-class frequencies.
    pub fn label_marginal(&self) -> Vec<f64> {
        let mut counts = vec![0.0; self.classes];
        for &l in &self.labels {
            counts[l] += 1.0;
        }
        let n = self.len().max(1) as f64;
        counts.iter().map(|c| c / n).collect()
    }
}

/// Epoch-wise shuffled minibatch indices.
#[derive(Debug, Clone)]
pub struct BatchSampler {
    order: Vec<usize>,
    cursor: usize,
    size: usize,
}

impl BatchSampler {
    pub fn new(n: usize, size: usize) -> Result<Self> {
        if size == 0 || size > n {
            return Err(Error::InvalidArgument(format!(
                "batch size {size} invalid for {n} examples"
            )));
        }
        Ok(Self {
            order: (0..n).collect(),
            cursor: n,
            size,
        })
    }

    /// Next batch; reshuffles when the remaining examples cannot fill one.
    pub fn next_batch<R: Rng + ?Sized>(&mut self, rng: &mut R) -> &[usize] {
        if self.cursor + self.size > self.order.len() {
            self.order.shuffle(rng);
            self.cursor = 0;
        }
        let start = self.cursor;
        self.cursor += self.size;
        &self.order[start..self.cursor]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn sampler_visits_every_example_once_per_epoch() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut s = BatchSampler::new(10, 5).unwrap();
        let mut seen: Vec<usize> = s.next_batch(&mut rng).to_vec();
        seen.extend_from_slice(s.next_batch(&mut rng));
        seen.sort_unstable();
        assert_eq!(seen, (0..10).collect::<Vec<_>>());
        assert!(BatchSampler::new(3, 4).is_err());
    }

    #[test]
    fn rejects_out_of_range_labels() {
        assert!(Dataset::new(Tensor::<f64>::zeros(2, 1), vec![0, 3], 3).is_err());
        assert!(Dataset::new(Tensor::<f64>::zeros(2, 1), vec![0], 3).is_err());
    }

    #[test]
    fn batches_cover_dataset() {
        let d = Dataset::new(Tensor::<f64>::from_fn(7, 1, |r, _| r as f64), vec![0; 7], 1).unwrap();
        let sizes: Vec<usize> = d.batches(3).map(|b| b.len()).collect();
        assert_eq!(sizes, vec![3, 3, 1]);
    }
}
