//! Spectral decompositions fitted from kernel samples on a grid.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::{EigenFunction, EigenPair, Graphon, QuadratureGrid, SpectralDecomposition};
use crate::{Error, Result};

/// Number of cosine modes used by [`FitBasis::Cosine`] by default.
pub const DEFAULT_COSINE_MODES: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "basis", rename_all = "lowercase")]
pub enum FitBasis {
    /// Least squares on `{1} ∪ {√2 cos(mπx/2)}_{m=1..modes}`.
    Cosine { modes: usize },
    /// The raw grid eigenvector as a step function.
    Piecewise,
}

impl Default for FitBasis {
    fn default() -> Self {
        FitBasis::Cosine {
            modes: DEFAULT_COSINE_MODES,
        }
    }
}

/// Fits the `k` leading eigenpairs of `g` from its `grid_n × grid_n`
/// midpoint samples.
///
/// Eigenvalues are those of `G / grid_n`; eigenvectors, scaled by
/// `√grid_n` to unit `L²` norm, are either kept as step functions or
/// projected on the cosine basis.
pub fn fit_spectral_from_grid(
    g: &Graphon,
    grid_n: usize,
    k: usize,
    basis: FitBasis,
) -> Result<SpectralDecomposition> {
    if grid_n < 4 * k || grid_n == 0 {
        return Err(Error::Size(format!(
            "grid of {grid_n} points is too small for rank {k} (need ≥ {})",
            4 * k
        )));
    }
    let grid = QuadratureGrid::new(grid_n)?;
    let xs = grid.midpoints();
    let eig = SymmetricEigen::new(g.kernel_matrix(&grid) / grid_n as f64);
    let mut order: Vec<usize> = (0..grid_n).collect();
    order.sort_by(|&a, &b| {
        let (la, lb) = (eig.eigenvalues[a], eig.eigenvalues[b]);
        lb.abs().total_cmp(&la.abs()).then(lb.total_cmp(&la))
    });
    let zero = super::ZERO_EIGENVALUE_REL * grid_n as f64 * g.bound().max(1.0);
    let design = match basis {
        FitBasis::Cosine { modes } => {
            let basis_fns: Vec<EigenFunction> = (0..=modes)
                .map(|m| {
                    if m == 0 {
                        EigenFunction::constant(1.0)
                    } else {
                        EigenFunction::cosine_mode(m)
                    }
                })
                .collect();
            let cols: Vec<Vec<f64>> = basis_fns.iter().map(|f| f.sample(&xs)).collect();
            Some(DMatrix::from_fn(grid_n, modes + 1, |i, m| cols[m][i]).svd(true, true))
        }
        FitBasis::Piecewise => None,
    };
    let scale = (grid_n as f64).sqrt();
    let mut pairs = Vec::with_capacity(k);
    for &idx in order.iter().take(k) {
        let lambda = eig.eigenvalues[idx];
        if lambda.abs() <= zero {
            break;
        }
        let samples: DVector<f64> = eig.eigenvectors.column(idx) * scale;
        let function = match &design {
            Some(svd) => {
                let coeffs = svd
                    .solve(&samples, 1e-12)
                    .map_err(|e| Error::Validation(format!("least squares failed: {e}")))?;
                EigenFunction::Cosine {
                    coeffs: coeffs.iter().copied().collect(),
                }
            }
            None => EigenFunction::Piecewise {
                values: samples.iter().copied().collect(),
            },
        };
        pairs.push(EigenPair {
            lambda,
            function: function.sign_normalized(),
        });
    }
    SpectralDecomposition::new(pairs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphon::step_from_matrix;
    use std::f64::consts::PI;

    #[test]
    fn ua_fit_recovers_eigenvalues() {
        let d = fit_spectral_from_grid(&Graphon::uniform_attachment(), 300, 5, FitBasis::default())
            .unwrap();
        for (i, lam) in d.eigenvalues().iter().enumerate() {
            let k = (2 * i + 1) as f64;
            assert!((lam - 4.0 / (k * k * PI * PI)).abs() < 1e-3);
        }
        // fitted first eigenfunction is close to √2 cos(πx/2)
        let f = &d.pairs()[0].function;
        let err = (f.inner(f) - 2.0 * f.inner(&EigenFunction::cosine_mode(1)) + 1.0).sqrt();
        assert!(err < 1e-3, "{err}");
    }

    #[test]
    fn constant_graphon_fit_is_exact() {
        let d = fit_spectral_from_grid(&Graphon::constant(1.0), 40, 3, FitBasis::default()).unwrap();
        assert_eq!(d.len(), 1);
        assert!((d.eigenvalues()[0] - 1.0).abs() < 1e-12);
        let f = &d.pairs()[0].function;
        assert!(matches!(f, EigenFunction::Cosine { .. }));
        for k in 0..=100 {
            assert!((f.eval(k as f64 / 100.0) - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn sbm_fit_matches_block_eigenvalues() {
        let w = DMatrix::from_row_slice(3, 3, &[0.25, 0.5, 0.2, 0.5, 0.35, 0.7, 0.2, 0.7, 0.4]);
        let g = step_from_matrix(w.clone(), 1.0).unwrap();
        let d = fit_spectral_from_grid(&g, 300, 3, FitBasis::Piecewise).unwrap();
        let mut expect: Vec<f64> =
            SymmetricEigen::new(w).eigenvalues.iter().map(|l| l / 3.0).collect();
        expect.sort_by(|a, b| b.abs().total_cmp(&a.abs()));
        for (a, b) in d.eigenvalues().iter().zip(&expect) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn small_grid_is_size_error() {
        let r = fit_spectral_from_grid(&Graphon::uniform_attachment(), 19, 5, FitBasis::Piecewise);
        assert!(matches!(r, Err(Error::Size(_))));
    }
}
