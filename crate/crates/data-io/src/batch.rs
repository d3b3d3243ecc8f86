use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{DataError, Result};
use crate::idx::IdxDataset;
use crate::IMAGE_PIXELS;

/// Images scaled to `[0, 1]` (row-major, `len × 784`) and their labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub images: Vec<f64>,
    pub labels: Vec<usize>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn from_indices(ds: &IdxDataset, indices: &[usize]) -> Self {
        let mut images = Vec::with_capacity(indices.len() * IMAGE_PIXELS);
        for &i in indices {
            images.extend(ds.image(i).iter().map(|&p| p as f64 / 255.0));
        }
        Self {
            images,
            labels: indices.iter().map(|&i| ds.labels[i] as usize).collect(),
        }
    }
}

pub fn batch_count(n: usize, batch_size: usize) -> usize {
    n.div_ceil(batch_size)
}

/// Fisher–Yates permutation of `0..n` for one epoch, from stream `epoch` of
/// the generator keyed by `seed`.
pub fn epoch_order(n: usize, seed: u64, epoch: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    order
}

/// One epoch of shuffled mini-batches; the final batch may be partial.
pub struct Batches<'a> {
    ds: &'a IdxDataset,
    order: Vec<usize>,
    batch_size: usize,
    next: usize,
}

impl<'a> Batches<'a> {
    pub fn new(ds: &'a IdxDataset, batch_size: usize, seed: u64, epoch: u64) -> Result<Self> {
        if ds.is_empty() {
            return Err(DataError::Invalid("cannot batch an empty dataset".into()));
        }
        if batch_size == 0 {
            return Err(DataError::Invalid("batch size must be at least 1".into()));
        }
        Ok(Self {
            ds,
            order: epoch_order(ds.len(), seed, epoch),
            batch_size,
            next: 0,
        })
    }

    /// Batches in dataset order, for evaluation.
    pub fn sequential(ds: &'a IdxDataset, batch_size: usize) -> Result<Self> {
        let mut b = Self::new(ds, batch_size, 0, 0)?;
        b.order = (0..ds.len()).collect();
        Ok(b)
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }
}

impl Iterator for Batches<'_> {
    type Item = Batch;

    fn next(&mut self) -> Option<Batch> {
        if self.next >= self.order.len() {
            return None;
        }
        let end = (self.next + self.batch_size).min(self.order.len());
        let b = Batch::from_indices(self.ds, &self.order[self.next..end]);
        self.next = end;
        Some(b)
    }
}
