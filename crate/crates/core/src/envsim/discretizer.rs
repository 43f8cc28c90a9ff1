use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Maps real-valued observations to discrete cell ids.
///
/// Each dimension is split by ascending edges `e_0 < e_1 < … < e_n` into
/// `n` half-open bins `[e_k, e_{k+1})`. A value exactly on an edge belongs
/// to the higher bin. Values below `e_0` clamp to bin 0, values at or above
/// `e_n` clamp to bin `n - 1`, and NaN maps to bin 0, so the mapping is
/// total. Cell ids are row-major: the first dimension varies slowest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Discretizer {
    edges: Vec<Vec<f64>>,
}

impl Discretizer {
    pub fn new(edges: Vec<Vec<f64>>) -> Result<Self> {
        if edges.is_empty() {
            return Err(Error::Config("discretizer needs at least one dimension".into()));
        }
        for (dim, e) in edges.iter().enumerate() {
            if e.len() < 2 {
                return Err(Error::Config(format!(
                    "dimension {dim}: need at least two edges for one bin"
                )));
            }
            if e.iter().any(|x| !x.is_finite()) {
                return Err(Error::Config(format!("dimension {dim}: non-finite edge")));
            }
            if e.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Config(format!(
                    "dimension {dim}: edges must be strictly increasing"
                )));
            }
        }
        Ok(Discretizer { edges })
    }

    /// `bins + 1` evenly spaced edges covering `[lo, hi]`.
    pub fn uniform_edges(lo: f64, hi: f64, bins: usize) -> Vec<f64> {
        (0..=bins)
            .map(|i| lo + (hi - lo) * i as f64 / bins as f64)
            .collect()
    }

    pub fn dims(&self) -> usize {
        self.edges.len()
    }

    pub fn bins(&self, dim: usize) -> usize {
        self.edges[dim].len() - 1
    }

    pub fn edges(&self, dim: usize) -> &[f64] {
        &self.edges[dim]
    }

    pub fn cell_count(&self) -> usize {
        (0..self.dims()).map(|d| self.bins(d)).product()
    }

    pub fn bin_index(&self, dim: usize, x: f64) -> usize {
        let e = &self.edges[dim];
        if x.is_nan() || x < e[0] {
            return 0;
        }
        let above = e.partition_point(|&edge| edge <= x);
        (above - 1).min(self.bins(dim) - 1)
    }

    pub fn discretize(&self, obs: &[f64]) -> Result<usize> {
        if obs.len() != self.dims() {
            return Err(Error::DimensionMismatch {
                expected: self.dims(),
                got: obs.len(),
            });
        }
        let bins: Vec<usize> = obs
            .iter()
            .enumerate()
            .map(|(d, &x)| self.bin_index(d, x))
            .collect();
        Ok(self.cell_of(&bins))
    }

    pub fn cell_of(&self, bins: &[usize]) -> usize {
        bins.iter()
            .enumerate()
            .fold(0, |acc, (d, &b)| acc * self.bins(d) + b)
    }

    pub fn bins_of(&self, mut cell: usize) -> Vec<usize> {
        let mut out = vec![0; self.dims()];
        for d in (0..self.dims()).rev() {
            out[d] = cell % self.bins(d);
            cell /= self.bins(d);
        }
        out
    }

    /// Lower-edge representative of a cell; discretizing it returns `cell`.
    pub fn representative(&self, cell: usize) -> Vec<f64> {
        self.bins_of(cell)
            .iter()
            .enumerate()
            .map(|(d, &b)| self.edges[d][b])
            .collect()
    }
}
