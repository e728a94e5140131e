use rand::seq::SliceRandom;

use super::Example;
use crate::dsp::Matrix;
use crate::model::Features;
use crate::rng::stream;
use crate::{Error, Result};

/// Zero-padded, frame-aligned minibatch.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    /// `B` matrices of `T x 80`, `T` the longest utterance in the batch.
    pub mel: Vec<Matrix>,
    /// `B` matrices of `T x 6`.
    pub prosody: Vec<Matrix>,
    pub labels: Vec<usize>,
    /// Row `i` holds `lengths[i]` leading `true`s.
    pub frame_mask: Vec<Vec<bool>>,
    pub lengths: Vec<usize>,
    /// Positions of the members in the source split.
    pub indices: Vec<usize>,
}

fn pad_rows(m: &Matrix, rows: usize) -> Matrix {
    let mut data = m.data().to_vec();
    data.resize(rows * m.cols(), 0.0);
    Matrix::from_vec(rows, m.cols(), data).expect("padded shape")
}

impl Batch {
    pub fn assemble(examples: &[Example], indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::Config("empty batch".into()));
        }
        let t_max = indices.iter().map(|&i| examples[i].features.frames()).max().unwrap_or(0);
        let mut b = Batch {
            mel: Vec::with_capacity(indices.len()),
            prosody: Vec::with_capacity(indices.len()),
            labels: Vec::with_capacity(indices.len()),
            frame_mask: Vec::with_capacity(indices.len()),
            lengths: Vec::with_capacity(indices.len()),
            indices: indices.to_vec(),
        };
        for &i in indices {
            let f = &examples[i].features;
            let t = f.frames();
            b.mel.push(pad_rows(&f.mel, t_max));
            b.prosody.push(pad_rows(&f.prosody, t_max));
            b.labels.push(examples[i].label);
            b.frame_mask.push((0..t_max).map(|r| r < t).collect());
            b.lengths.push(t);
        }
        Ok(b)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Member `i` with padding removed.
    pub fn utterance(&self, i: usize) -> Features {
        Features {
            mel: self.mel[i].truncate_rows(self.lengths[i]),
            prosody: self.prosody[i].truncate_rows(self.lengths[i]),
        }
    }
}

/// Index order of one epoch: a permutation of `0..n` keyed by `(seed, epoch)`,
/// cut into batches of `batch_size` with a final short batch.
pub fn batch_order(n: usize, batch_size: usize, seed: u64, epoch: usize) -> Result<Vec<Vec<usize>>> {
    if n == 0 {
        return Err(Error::EmptySplit("batch source".into()));
    }
    if batch_size == 0 {
        return Err(Error::Config("batch_size must be at least 1".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream(seed, &format!("batches/epoch{epoch}")));
    Ok(order.chunks(batch_size).map(<[usize]>::to_vec).collect())
}

/// Batches of one epoch over `examples`.
pub fn batch_iter(
    examples: &[Example],
    batch_size: usize,
    seed: u64,
    epoch: usize,
) -> Result<impl Iterator<Item = Result<Batch>> + '_> {
    let order = batch_order(examples.len(), batch_size, seed, epoch)?;
    Ok(order.into_iter().map(move |idx| Batch::assemble(examples, &idx)))
}
