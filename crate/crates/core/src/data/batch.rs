use rand::seq::SliceRandom;

use super::Dataset;
use crate::objectives::Batch;
use crate::tensor::RunRng;

/// Random permutation of `0..n` drawn from `rng`.
pub fn epoch_order(n: usize, rng: &mut RunRng) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    order
}

/// Sequential mini-batches over one shuffled epoch. The last batch may be short.
pub struct BatchStream<'a> {
    dataset: &'a Dataset,
    order: Vec<usize>,
    batch_size: usize,
    pos: usize,
}

impl BatchStream<'_> {
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    /// Number of batches in the epoch.
    pub fn count(n: usize, batch_size: usize) -> usize {
        n.div_ceil(batch_size.max(1))
    }
}

impl Iterator for BatchStream<'_> {
    type Item = Batch;

    fn next(&mut self) -> Option<Batch> {
        if self.pos >= self.order.len() {
            return None;
        }
        let end = (self.pos + self.batch_size).min(self.order.len());
        let batch = self.dataset.gather(&self.order[self.pos..end]);
        self.pos = end;
        Some(batch)
    }
}

/// One epoch of shuffled batches. `batch_size` of zero is treated as one.
pub fn batches<'a>(dataset: &'a Dataset, batch_size: usize, rng: &mut RunRng) -> BatchStream<'a> {
    BatchStream { dataset, order: epoch_order(dataset.len(), rng), batch_size: batch_size.max(1), pos: 0 }
}
