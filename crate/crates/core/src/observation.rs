//! The received block `y = vec(Y)` for one coherence interval.

use num_complex::Complex64;

use crate::error::{invalid, Result};
use crate::linalg::CMat;

/// Column-wise vectorization of a `K × Nr` received matrix: entry `(t, r)`
/// of `Y` sits at index `t + r·K`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReceivedBlock {
    k: usize,
    nr: usize,
    samples: Vec<Complex64>,
}

impl ReceivedBlock {
    pub fn new(k: usize, nr: usize, samples: Vec<Complex64>) -> Result<Self> {
        if k == 0 || nr == 0 {
            return invalid("block dimensions must be positive");
        }
        if samples.len() != k * nr {
            return invalid(format!("expected {} samples for K={k}, Nr={nr}, got {}", k * nr, samples.len()));
        }
        Ok(ReceivedBlock { k, nr, samples })
    }

    pub fn zeros(k: usize, nr: usize) -> Self {
        ReceivedBlock { k, nr, samples: vec![Complex64::new(0.0, 0.0); k * nr] }
    }

    pub fn from_matrix(y: &CMat) -> Self {
        // nalgebra storage is already column-major.
        ReceivedBlock { k: y.nrows(), nr: y.ncols(), samples: y.as_slice().to_vec() }
    }

    pub fn to_matrix(&self) -> CMat {
        CMat::from_column_slice(self.k, self.nr, &self.samples)
    }

    pub fn block_len(&self) -> usize {
        self.k
    }

    pub fn nr(&self) -> usize {
        self.nr
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}
