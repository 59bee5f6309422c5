//! Random draws shaped as tensors, from one stream or from one stream per row.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::nn::Tensor;

pub trait Noise {
    fn standard_normal(&mut self, rows: usize, cols: usize) -> Tensor;
    /// One uniform integer in `[lo, hi]` per row.
    fn int_per_row(&mut self, rows: usize, lo: usize, hi: usize) -> Vec<usize>;
}

impl<R: Rng> Noise for R {
    fn standard_normal(&mut self, rows: usize, cols: usize) -> Tensor {
        let data = (0..rows * cols).map(|_| self.sample(StandardNormal)).collect();
        Tensor { rows, cols, data }
    }

    fn int_per_row(&mut self, rows: usize, lo: usize, hi: usize) -> Vec<usize> {
        (0..rows).map(|_| self.random_range(lo..=hi)).collect()
    }
}

/// Independent stream per row, so a row's draws do not depend on which
/// other rows share the batch.
#[derive(Clone, Debug)]
pub struct RowRngs(pub Vec<ChaCha8Rng>);

impl Noise for RowRngs {
    fn standard_normal(&mut self, rows: usize, cols: usize) -> Tensor {
        assert_eq!(rows, self.0.len(), "one rng per row");
        let mut data = Vec::with_capacity(rows * cols);
        for rng in &mut self.0 {
            for _ in 0..cols {
                data.push(rng.sample(StandardNormal));
            }
        }
        Tensor { rows, cols, data }
    }

    fn int_per_row(&mut self, rows: usize, lo: usize, hi: usize) -> Vec<usize> {
        assert_eq!(rows, self.0.len(), "one rng per row");
        self.0.iter_mut().map(|r| r.random_range(lo..=hi)).collect()
    }
}

/// Per-row streams for a subset of rows of a larger batch.
pub struct RowSubset<'a> {
    pub rngs: &'a mut [ChaCha8Rng],
    pub rows: &'a [usize],
}

impl Noise for RowSubset<'_> {
    fn standard_normal(&mut self, rows: usize, cols: usize) -> Tensor {
        assert_eq!(rows, self.rows.len(), "one rng per row");
        let mut data = Vec::with_capacity(rows * cols);
        for &r in self.rows {
            for _ in 0..cols {
                data.push(self.rngs[r].sample(StandardNormal));
            }
        }
        Tensor { rows, cols, data }
    }

    fn int_per_row(&mut self, rows: usize, lo: usize, hi: usize) -> Vec<usize> {
        assert_eq!(rows, self.rows.len(), "one rng per row");
        self.rows.iter().map(|&r| self.rngs[r].random_range(lo..=hi)).collect()
    }
}
