//! Affine text kernel over pairwise similarity scores.
//!
//! The kernel is `k(x, x') = alpha * sim(x, x') + beta` where `sim` is a
//! symmetrized pairwise similarity (BertScore-like remotely, token F1 or RBF
//! offline). Raw similarity providers need not return symmetric matrices, so
//! inputs are symmetrized by averaging and the diagonal pinned to 1 before
//! any kernel evaluation.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::KernelError;

/// Symmetric pairwise similarity scores with unit diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    entries: DMatrix<f64>,
}

impl SimilarityMatrix {
    /// Number of texts covered.
    pub fn len(&self) -> usize {
        self.entries.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.nrows() == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[(i, j)]
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    /// The sub-block with the given row and column index sets.
    pub fn block(&self, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(rows.len(), cols.len(), |i, j| {
            self.entries[(rows[i], cols[j])]
        })
    }

    /// Builds a similarity matrix directly from entries already known to be
    /// symmetric with unit diagonal (e.g. the RBF latent similarity).
    pub fn from_symmetric_unchecked(entries: DMatrix<f64>) -> Self {
        debug_assert_eq!(entries.nrows(), entries.ncols());
        SimilarityMatrix { entries }
    }
}

/// Kernel and likelihood hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GPHyperparams {
    /// Kernel scale, > 0.
    pub alpha: f64,
    /// Kernel offset, unconstrained.
    pub beta: f64,
    /// Observation noise variance, > 0.
    pub sigma2: f64,
    /// Starting diagonal jitter for Cholesky factorization.
    pub jitter: f64,
}

pub const JITTER_FLOOR: f64 = 1e-8;
pub const JITTER_CEIL: f64 = 1e-2;

impl GPHyperparams {
    pub fn new(alpha: f64, beta: f64, sigma2: f64) -> Self {
        GPHyperparams {
            alpha,
            beta,
            sigma2,
            jitter: 1e-6,
        }
    }

    pub fn validate(&self) -> Result<(), KernelError> {
        if !(self.alpha > 0.0) || !(self.sigma2 > 0.0) {
            return Err(KernelError::InvalidHyperparams {
                alpha: self.alpha,
                sigma2: self.sigma2,
            });
        }
        Ok(())
    }
}

impl Default for GPHyperparams {
    fn default() -> Self {
        GPHyperparams::new(1.0, 0.0, 0.1)
    }
}

/// A (possibly rectangular) block of kernel evaluations.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    pub entries: DMatrix<f64>,
    /// True when rows and columns index the same sample set.
    pub symmetric: bool,
}

impl GramMatrix {
    pub fn nrows(&self) -> usize {
        self.entries.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.entries.ncols()
    }
}

/// Projects a raw provider matrix onto the symmetric form the kernel needs:
/// off-diagonal entries are averaged with their transpose, the diagonal is
/// pinned to exactly 1. Raw diagonals outside [0.95, 1.05] signal a broken
/// provider and are rejected rather than clamped.
pub fn symmetrize(raw: &DMatrix<f64>) -> Result<SimilarityMatrix, KernelError> {
    if raw.nrows() != raw.ncols() {
        return Err(KernelError::NonSquareInput {
            rows: raw.nrows(),
            cols: raw.ncols(),
        });
    }
    for i in 0..raw.nrows() {
        for j in 0..raw.ncols() {
            if !raw[(i, j)].is_finite() {
                return Err(KernelError::NonFiniteEntry { row: i, col: j });
            }
        }
    }
    for i in 0..raw.nrows() {
        let d = raw[(i, i)];
        if !(0.95..=1.05).contains(&d) {
            return Err(KernelError::DiagonalOutOfRange { index: i, value: d });
        }
    }
    let n = raw.nrows();
    let entries = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            1.0
        } else {
            0.5 * (raw[(i, j)] + raw[(j, i)])
        }
    });
    Ok(SimilarityMatrix { entries })
}

/// Applies the affine kernel elementwise to a similarity block.
pub fn build_gram(
    sim_block: &DMatrix<f64>,
    symmetric: bool,
    hyper: &GPHyperparams,
) -> Result<GramMatrix, KernelError> {
    hyper.validate()?;
    let entries = sim_block.map(|s| hyper.alpha * s + hyper.beta);
    Ok(GramMatrix { entries, symmetric })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;
    use proptest::prelude::*;

    #[test]
    fn symmetrize_averages_off_diagonal() {
        let raw = dmatrix![1.0, 0.8; 0.6, 1.0];
        let sym = symmetrize(&raw).unwrap();
        assert_eq!(sym.get(0, 1), 0.7);
        assert_eq!(sym.get(1, 0), 0.7);
        assert_eq!(sym.get(0, 0), 1.0);
    }

    #[test]
    fn symmetrize_is_identity_on_symmetric_input() {
        let raw = dmatrix![1.0, 0.5; 0.5, 1.0];
        let sym = symmetrize(&raw).unwrap();
        assert_eq!(sym.as_matrix(), &raw);
    }

    #[test]
    fn symmetrize_three_by_three_matches_half_transpose_oracle() {
        let raw = dmatrix![
            1.0, 0.2, 0.4;
            0.4, 1.0, 0.9;
            0.2, 0.7, 1.0
        ];
        // elementwise (A + A^T) / 2 oracle
        let oracle = {
            let mut m = (&raw + raw.transpose()) * 0.5;
            for i in 0..3 {
                m[(i, i)] = 1.0;
            }
            m
        };
        let sym = symmetrize(&raw).unwrap();
        assert_eq!(sym.as_matrix(), &oracle);
        assert!((sym.get(0, 1) - 0.3).abs() < 1e-12);
        assert!((sym.get(1, 2) - 0.8).abs() < 1e-12);
    }

    #[test]
    fn symmetrize_rejects_bad_input() {
        let raw = DMatrix::from_element(2, 3, 0.5);
        assert!(matches!(
            symmetrize(&raw),
            Err(KernelError::NonSquareInput { .. })
        ));

        let raw = dmatrix![1.0, f64::NAN; 0.5, 1.0];
        assert!(matches!(
            symmetrize(&raw),
            Err(KernelError::NonFiniteEntry { row: 0, col: 1 })
        ));

        let raw = dmatrix![0.5, 0.2; 0.2, 1.0];
        assert!(matches!(
            symmetrize(&raw),
            Err(KernelError::DiagonalOutOfRange { index: 0, .. })
        ));
    }

    #[test]
    fn build_gram_hand_example() {
        let sim = dmatrix![1.0, 0.5; 0.5, 1.0];
        let hyper = GPHyperparams::new(2.0, 0.1, 1.0);
        let gram = build_gram(&sim, true, &hyper).unwrap();
        let expected = dmatrix![2.1, 1.1; 1.1, 2.1];
        assert!((gram.entries.clone() - expected).abs().max() < 1e-12);
        assert!(gram.symmetric);
    }

    #[test]
    fn build_gram_identity_hyperparams() {
        let sim = dmatrix![1.0, 0.3, 0.2; 0.3, 1.0, 0.6; 0.2, 0.6, 1.0];
        let hyper = GPHyperparams::new(1.0, 0.0, 1.0);
        let gram = build_gram(&sim, true, &hyper).unwrap();
        assert_eq!(gram.entries, sim);
    }

    #[test]
    fn build_gram_rejects_invalid_hyperparams() {
        let sim = dmatrix![1.0, 0.5; 0.5, 1.0];
        let hyper = GPHyperparams::new(-1.0, 0.0, 1.0);
        assert!(matches!(
            build_gram(&sim, true, &hyper),
            Err(KernelError::InvalidHyperparams { .. })
        ));
        let hyper = GPHyperparams::new(1.0, 0.0, 0.0);
        assert!(build_gram(&sim, true, &hyper).is_err());
    }

    proptest! {
        #[test]
        fn build_gram_matches_elementwise_oracle(
            entries in proptest::collection::vec(0.0..1.0f64, 16),
            alpha in 0.1..3.0f64,
            beta in -1.0..1.0f64,
        ) {
            let sim = DMatrix::from_vec(4, 4, entries);
            let hyper = GPHyperparams::new(alpha, beta, 0.5);
            let gram = build_gram(&sim, false, &hyper).unwrap();
            for i in 0..4 {
                for j in 0..4 {
                    let oracle = alpha * sim[(i, j)] + beta;
                    prop_assert!((gram.entries[(i, j)] - oracle).abs() < 1e-12);
                }
            }
        }

        #[test]
        fn build_gram_is_affine(
            entries in proptest::collection::vec(0.0..1.0f64, 9),
            alpha in 0.1..3.0f64,
            beta in -1.0..1.0f64,
        ) {
            let sim = DMatrix::from_vec(3, 3, entries);
            let unit = build_gram(&sim, false, &GPHyperparams::new(1.0, 0.0, 1.0)).unwrap();
            let full = build_gram(&sim, false, &GPHyperparams::new(alpha, beta, 1.0)).unwrap();
            let recomposed = unit.entries * alpha + DMatrix::from_element(3, 3, beta);
            prop_assert!((full.entries - recomposed).abs().max() < 1e-12);
        }

        #[test]
        fn symmetrize_is_idempotent(
            entries in proptest::collection::vec(0.0..1.0f64, 9),
        ) {
            let mut raw = DMatrix::from_vec(3, 3, entries);
            for i in 0..3 {
                raw[(i, i)] = 1.0;
            }
            let once = symmetrize(&raw).unwrap();
            let twice = symmetrize(once.as_matrix()).unwrap();
            prop_assert_eq!(once, twice);
        }
    }
}
