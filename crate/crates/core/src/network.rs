//! Social network representation and the consensus flow it generates.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::expm;

/// A weighted social graph with row-stochastic adjacency `A` and Laplacian
/// `L = I - A`.
///
/// The raw weights are kept alongside the normalized adjacency so that a
/// network can be written back out exactly as it was given.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    weights: DMatrix<f64>,
    adjacency: DMatrix<f64>,
    laplacian: DMatrix<f64>,
}

impl Network {
    /// Builds a network from nonnegative weights, normalizing every row to
    /// sum to one.
    pub fn new(weights: DMatrix<f64>) -> Result<Self> {
        if !weights.is_square() {
            return Err(Error::InvalidNetwork(format!(
                "adjacency must be square, got {}x{}",
                weights.nrows(),
                weights.ncols()
            )));
        }
        let n = weights.nrows();
        if n == 0 {
            return Err(Error::InvalidNetwork("network has no individuals".into()));
        }
        for i in 0..n {
            for j in 0..n {
                let w = weights[(i, j)];
                if !w.is_finite() {
                    return Err(Error::InvalidNetwork(format!(
                        "non-finite weight at ({i}, {j})"
                    )));
                }
                if w < 0.0 {
                    return Err(Error::InvalidNetwork(format!(
                        "negative weight {w} at ({i}, {j})"
                    )));
                }
            }
        }
        let mut adjacency = weights.clone();
        for (i, mut row) in adjacency.row_iter_mut().enumerate() {
            let sum: f64 = row.iter().sum();
            if sum <= 0.0 {
                return Err(Error::InvalidNetwork(format!("row {i} has no positive weight")));
            }
            row /= sum;
        }
        let laplacian = DMatrix::identity(n, n) - &adjacency;
        Ok(Self {
            weights,
            adjacency,
            laplacian,
        })
    }

    /// Builds a network from row-major nested rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidNetwork(
                "adjacency rows must all have length equal to the row count".into(),
            ));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        Self::new(DMatrix::from_row_slice(n, n, &flat))
    }

    pub fn n(&self) -> usize {
        self.adjacency.nrows()
    }

    /// Weights as supplied at construction.
    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn adjacency(&self) -> &DMatrix<f64> {
        &self.adjacency
    }

    pub fn laplacian(&self) -> &DMatrix<f64> {
        &self.laplacian
    }

    /// Flow operator `e^{-L dt}` carrying opinions across a campaign-free
    /// interval of length `dt`.
    pub fn propagator(&self, dt: f64) -> Result<Propagator> {
        if dt.is_nan() || dt < 0.0 {
            return Err(Error::NegativeDuration(dt));
        }
        if !dt.is_finite() {
            return Err(Error::NonFinite);
        }
        let matrix = expm(&(&self.laplacian * -dt));
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Propagator {
            matrix,
            dt,
            interval: None,
        })
    }

    /// Stationary distribution of the adjacency by power iteration on `A'`.
    pub fn stationary_distribution(&self, max_iters: usize, tol: f64) -> DVector<f64> {
        let n = self.n();
        // Lazy walk to avoid periodicity.
        let lazy = (DMatrix::identity(n, n) + &self.adjacency) * 0.5;
        let lazy_t = lazy.transpose();
        let mut pi = DVector::from_element(n, 1.0 / n as f64);
        for _ in 0..max_iters {
            let next = &lazy_t * &pi;
            let delta = (&next - &pi).amax();
            pi = next;
            if delta < tol {
                break;
            }
        }
        pi
    }
}

/// A row-stochastic matrix `e^{-L (t_r - t_s)}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Propagator {
    pub matrix: DMatrix<f64>,
    pub dt: f64,
    /// Campaign-time indices `(s, r)` when the propagator spans a schedule
    /// interval.
    pub interval: Option<(usize, usize)>,
}

impl Propagator {
    pub fn with_interval(mut self, s: usize, r: usize) -> Self {
        self.interval = Some((s, r));
        self
    }

    pub fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        &self.matrix * x
    }
}
