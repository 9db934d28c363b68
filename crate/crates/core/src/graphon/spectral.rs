//! Eigenfunctions and ordered spectral decompositions.

use std::f64::consts::{FRAC_PI_2, SQRT_2};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Tolerance for the orthonormality check of eigenfunctions.
pub const ORTHONORMALITY_TOL: f64 = 1e-8;

/// Two eigenvalues closer than this share one set of coefficient dynamics.
pub const DISTINCT_EIGENVALUE_TOL: f64 = 1e-10;

/// Index of the cell of the uniform `n`-partition containing `x`.
///
/// The partition is `[0, 1/n], (1/n, 2/n], …, ((n-1)/n, 1]`.
pub fn cell_index(x: f64, n: usize) -> usize {
    if x <= 0.0 {
        return 0;
    }
    let k = (x * n as f64).ceil() as usize;
    k.clamp(1, n) - 1
}

/// A real function on `[0, 1]` used as a graphon eigenfunction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "basis")]
pub enum EigenFunction {
    /// `coeffs[0] + Σ_{m≥1} coeffs[m] · √2 cos(mπx/2)`.
    #[serde(rename = "cos")]
    Cosine { coeffs: Vec<f64> },
    /// Constant `values[j]` on the `j`-th cell of the uniform partition.
    #[serde(rename = "piecewise")]
    Piecewise { values: Vec<f64> },
}

fn cos_basis(m: usize, x: f64) -> f64 {
    if m == 0 {
        1.0
    } else {
        SQRT_2 * (m as f64 * FRAC_PI_2 * x).cos()
    }
}

fn cos_basis_integral(m: usize, a: f64, b: f64) -> f64 {
    if m == 0 {
        b - a
    } else {
        let w = m as f64 * FRAC_PI_2;
        SQRT_2 * ((w * b).sin() - (w * a).sin()) / w
    }
}

/// `∫₀¹ cos(kπx/2) dx` for integer `k ≥ 0`.
fn half_cos_integral(k: usize) -> f64 {
    if k == 0 {
        1.0
    } else {
        let w = k as f64 * FRAC_PI_2;
        w.sin() / w
    }
}

/// Exact `∫₀¹ φ_a φ_b` for the cosine basis.
fn cos_gram(a: usize, b: usize) -> f64 {
    match (a, b) {
        (0, 0) => 1.0,
        (0, m) | (m, 0) => SQRT_2 * half_cos_integral(m),
        (a, b) => half_cos_integral(a.abs_diff(b)) + half_cos_integral(a + b),
    }
}

impl EigenFunction {
    /// `√2 cos(kπx/2)`.
    pub fn cosine_mode(k: usize) -> Self {
        let mut coeffs = vec![0.0; k + 1];
        coeffs[k] = 1.0;
        EigenFunction::Cosine { coeffs }
    }

    pub fn constant(value: f64) -> Self {
        EigenFunction::Cosine {
            coeffs: vec![value],
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            EigenFunction::Cosine { coeffs } => coeffs
                .iter()
                .enumerate()
                .map(|(m, c)| c * cos_basis(m, x))
                .sum(),
            EigenFunction::Piecewise { values } => values[cell_index(x, values.len())],
        }
    }

    /// Exact `∫ₐᵇ f`, for `0 ≤ a ≤ b ≤ 1`.
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        match self {
            EigenFunction::Cosine { coeffs } => coeffs
                .iter()
                .enumerate()
                .map(|(m, c)| c * cos_basis_integral(m, a, b))
                .sum(),
            EigenFunction::Piecewise { values } => {
                let n = values.len();
                let h = 1.0 / n as f64;
                let first = ((a * n as f64).floor() as usize).min(n - 1);
                let last = ((b * n as f64).ceil() as usize).min(n);
                (first..last)
                    .map(|j| {
                        let lo = a.max(j as f64 * h);
                        let hi = b.min((j + 1) as f64 * h);
                        if hi > lo {
                            values[j] * (hi - lo)
                        } else {
                            0.0
                        }
                    })
                    .sum()
            }
        }
    }

    /// Exact L² inner product on `[0, 1]`.
    pub fn inner(&self, other: &EigenFunction) -> f64 {
        match (self, other) {
            (EigenFunction::Cosine { coeffs: a }, EigenFunction::Cosine { coeffs: b }) => {
                let mut acc = 0.0;
                for (i, ci) in a.iter().enumerate() {
                    if *ci == 0.0 {
                        continue;
                    }
                    for (j, cj) in b.iter().enumerate() {
                        if *cj != 0.0 {
                            acc += ci * cj * cos_gram(i, j);
                        }
                    }
                }
                acc
            }
            (EigenFunction::Piecewise { values }, f) | (f, EigenFunction::Piecewise { values }) => {
                let n = values.len() as f64;
                values
                    .iter()
                    .enumerate()
                    .map(|(j, v)| v * f.integral(j as f64 / n, (j + 1) as f64 / n))
                    .sum()
            }
        }
    }

    /// Samples the function at the given points.
    pub fn sample(&self, xs: &[f64]) -> Vec<f64> {
        xs.iter().map(|&x| self.eval(x)).collect()
    }

    fn scaled(&self, factor: f64) -> Self {
        match self {
            EigenFunction::Cosine { coeffs } => EigenFunction::Cosine {
                coeffs: coeffs.iter().map(|c| c * factor).collect(),
            },
            EigenFunction::Piecewise { values } => EigenFunction::Piecewise {
                values: values.iter().map(|v| v * factor).collect(),
            },
        }
    }

    /// Flips the sign so the largest-magnitude sample is positive.
    pub(crate) fn sign_normalized(self) -> Self {
        let probe: Vec<f64> = match &self {
            EigenFunction::Piecewise { values } => values.clone(),
            EigenFunction::Cosine { .. } => {
                let xs: Vec<f64> = (0..257).map(|i| i as f64 / 256.0).collect();
                self.sample(&xs)
            }
        };
        let mut best = 0.0f64;
        for v in probe {
            if v.abs() > best.abs() + 1e-12 {
                best = v;
            }
        }
        if best < 0.0 {
            self.scaled(-1.0)
        } else {
            self
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EigenPair {
    pub lambda: f64,
    #[serde(flatten)]
    pub function: EigenFunction,
}

/// Eigendirections sharing one eigenvalue (up to [`DISTINCT_EIGENVALUE_TOL`]).
#[derive(Clone, Debug, PartialEq)]
pub struct DistinctGroup {
    pub lambda: f64,
    pub members: Vec<usize>,
}

/// Nonzero eigenpairs ordered by descending `|λ|`, then descending `λ`,
/// then insertion order.
#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(try_from = "Vec<EigenPair>", into = "Vec<EigenPair>")]
pub struct SpectralDecomposition {
    pairs: Vec<EigenPair>,
}

impl TryFrom<Vec<EigenPair>> for SpectralDecomposition {
    type Error = Error;
    fn try_from(pairs: Vec<EigenPair>) -> Result<Self> {
        SpectralDecomposition::new(pairs)
    }
}

impl From<SpectralDecomposition> for Vec<EigenPair> {
    fn from(d: SpectralDecomposition) -> Self {
        d.pairs
    }
}

impl SpectralDecomposition {
    pub fn new(mut pairs: Vec<EigenPair>) -> Result<Self> {
        for (i, p) in pairs.iter().enumerate() {
            if !p.lambda.is_finite() || p.lambda == 0.0 {
                return Err(Error::Validation(format!(
                    "eigenvalue {i} must be finite and nonzero, got {}",
                    p.lambda
                )));
            }
            if let EigenFunction::Piecewise { values } = &p.function {
                if values.is_empty() {
                    return Err(Error::Validation(format!(
                        "eigenfunction {i} has no cells"
                    )));
                }
            }
        }
        pairs.sort_by(|a, b| {
            b.lambda
                .abs()
                .total_cmp(&a.lambda.abs())
                .then(b.lambda.total_cmp(&a.lambda))
        });
        Ok(SpectralDecomposition { pairs })
    }

    pub fn empty() -> Self {
        SpectralDecomposition::default()
    }

    pub fn pairs(&self) -> &[EigenPair] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        self.pairs.iter().map(|p| p.lambda).collect()
    }

    /// Keeps the `k` leading pairs.
    pub fn truncate(&self, k: usize) -> Self {
        SpectralDecomposition {
            pairs: self.pairs.iter().take(k).cloned().collect(),
        }
    }

    pub fn sum_of_squares(&self) -> f64 {
        self.pairs.iter().map(|p| p.lambda * p.lambda).sum()
    }

    pub fn kernel(&self, x: f64, y: f64) -> f64 {
        self.pairs
            .iter()
            .map(|p| p.lambda * p.function.eval(x) * p.function.eval(y))
            .sum()
    }

    /// `⟨f_ℓ, 1⟩` for every eigenfunction.
    pub fn ones_coefficients(&self) -> Vec<f64> {
        self.pairs
            .iter()
            .map(|p| p.function.integral(0.0, 1.0))
            .collect()
    }

    /// `max |⟨f_i, f_j⟩ − δ_ij|` with exact inner products.
    pub fn orthonormality_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for (i, a) in self.pairs.iter().enumerate() {
            for (j, b) in self.pairs.iter().enumerate().skip(i) {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((a.function.inner(&b.function) - target).abs());
            }
        }
        worst
    }

    pub fn check_orthonormal(&self, tol: f64) -> Result<()> {
        let defect = self.orthonormality_defect();
        if defect > tol {
            return Err(Error::Validation(format!(
                "eigenfunctions are not orthonormal (defect {defect:e} > {tol:e})"
            )));
        }
        Ok(())
    }

    /// Groups eigendirections by distinct eigenvalue, in decomposition order.
    pub fn distinct_groups(&self, tol: f64) -> Vec<DistinctGroup> {
        let mut groups: Vec<DistinctGroup> = Vec::new();
        for (i, p) in self.pairs.iter().enumerate() {
            match groups
                .iter_mut()
                .find(|g| (g.lambda - p.lambda).abs() <= tol)
            {
                Some(g) => g.members.push(i),
                None => groups.push(DistinctGroup {
                    lambda: p.lambda,
                    members: vec![i],
                }),
            }
        }
        groups
    }

    /// `⟨f_ℓ, x̄⟩` for the step function taking `node_values[q]` on cell `q`.
    pub fn project_step(&self, node_values: &[DVector<f64>]) -> Result<Vec<DVector<f64>>> {
        let n_nodes = node_values.len();
        if n_nodes == 0 {
            return Err(Error::Size("no node values to project".into()));
        }
        let dim = node_values[0].len();
        if node_values.iter().any(|v| v.len() != dim) {
            return Err(Error::Dimension("node values differ in length".into()));
        }
        let h = 1.0 / n_nodes as f64;
        Ok(self
            .pairs
            .iter()
            .map(|p| {
                let mut acc = DVector::zeros(dim);
                for (q, v) in node_values.iter().enumerate() {
                    let w = p.function.integral(q as f64 * h, (q + 1) as f64 * h);
                    acc.axpy(w, v, 1.0);
                }
                acc
            })
            .collect())
    }
}
