//! Graphons: bounded symmetric kernels on `[0, 1]²` and the integral
//! operators they define.

mod fit;
mod norms;
mod sampling;
mod spectral;

use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use fit::{fit_spectral_from_grid, FitBasis, DEFAULT_COSINE_MODES};
pub use norms::{
    cut_norm_step, l2_norm, l2_norm_on, op_distance, op_distance_on, operator_norm,
    operator_norm_on, power_iteration_norm, CutMode,
};
pub use sampling::{
    generate_uniform_attachment, sample_simple_graph, sample_weighted_graph, SampledGraph,
};
pub use spectral::{
    cell_index, DistinctGroup, EigenFunction, EigenPair, SpectralDecomposition,
    DISTINCT_EIGENVALUE_TOL, ORTHONORMALITY_TOL,
};

/// Default number of midpoint quadrature nodes on `[0, 1]`.
pub const DEFAULT_GRID_POINTS: usize = 1024;

/// Relative eigenvalue threshold below which step-matrix eigenvalues count as zero.
pub const ZERO_EIGENVALUE_REL: f64 = 1e-12;

/// Uniform midpoint grid on `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct QuadratureGrid {
    points: usize,
}

impl Default for QuadratureGrid {
    fn default() -> Self {
        QuadratureGrid {
            points: DEFAULT_GRID_POINTS,
        }
    }
}

impl QuadratureGrid {
    pub fn new(points: usize) -> Result<Self> {
        if points == 0 {
            return Err(Error::Size("quadrature grid needs at least one point".into()));
        }
        Ok(QuadratureGrid { points })
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn weight(&self) -> f64 {
        1.0 / self.points as f64
    }

    pub fn midpoints(&self) -> Vec<f64> {
        let n = self.points as f64;
        (0..self.points).map(|i| (i as f64 + 0.5) / n).collect()
    }

    /// Discrete `L²` norm of grid samples.
    pub fn l2(&self, f: &[f64]) -> f64 {
        (f.iter().map(|v| v * v).sum::<f64>() * self.weight()).sqrt()
    }
}

/// Closed-form kernels.
#[derive(Clone, Debug, PartialEq)]
pub enum AnalyticKernel {
    /// `1 − max(x, y)`, the uniform attachment limit.
    UniformAttachment,
    Constant(f64),
}

impl AnalyticKernel {
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        match self {
            AnalyticKernel::UniformAttachment => 1.0 - x.max(y),
            AnalyticKernel::Constant(c) => *c,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            AnalyticKernel::UniformAttachment => "uniform_attachment",
            AnalyticKernel::Constant(_) => "constant",
        }
    }

    /// The exact eigenpairs, when they are known in closed form (truncated
    /// to `count` for infinite-rank kernels).
    pub fn known_eigenpairs(&self, count: usize) -> Option<SpectralDecomposition> {
        match self {
            AnalyticKernel::UniformAttachment => Some(ua_eigenpairs(count)),
            AnalyticKernel::Constant(c) if *c == 0.0 => Some(SpectralDecomposition::empty()),
            AnalyticKernel::Constant(c) => Some(
                SpectralDecomposition::new(vec![EigenPair {
                    lambda: *c,
                    function: EigenFunction::constant(1.0),
                }])
                .expect("nonzero constant"),
            ),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum GraphonRepr {
    Analytic(AnalyticKernel),
    /// Weights `m_ij` on the uniform `N`-partition.
    Step(DMatrix<f64>),
    Spectral(SpectralDecomposition),
}

/// A graphon together with its `𝒲_c` bound.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GraphonJson", into = "GraphonJson")]
pub struct Graphon {
    repr: GraphonRepr,
    bound: f64,
}

impl Graphon {
    pub fn uniform_attachment() -> Self {
        Graphon {
            repr: GraphonRepr::Analytic(AnalyticKernel::UniformAttachment),
            bound: 1.0,
        }
    }

    pub fn constant(value: f64) -> Self {
        Graphon {
            repr: GraphonRepr::Analytic(AnalyticKernel::Constant(value)),
            bound: value.abs().max(f64::MIN_POSITIVE),
        }
    }

    /// A spectral graphon; the bound is `Σ |λ_ℓ| sup |f_ℓ|²`.
    pub fn spectral(decomp: SpectralDecomposition) -> Self {
        let xs: Vec<f64> = (0..=512).map(|i| i as f64 / 512.0).collect();
        let bound = decomp
            .pairs()
            .iter()
            .map(|p| {
                let sup = p.function.sample(&xs).iter().fold(0.0f64, |m, v| m.max(v.abs()));
                p.lambda.abs() * sup * sup
            })
            .sum::<f64>()
            .max(f64::MIN_POSITIVE);
        Graphon {
            repr: GraphonRepr::Spectral(decomp),
            bound,
        }
    }

    pub fn repr(&self) -> &GraphonRepr {
        &self.repr
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn step_matrix(&self) -> Option<&DMatrix<f64>> {
        match &self.repr {
            GraphonRepr::Step(w) => Some(w),
            _ => None,
        }
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        match &self.repr {
            GraphonRepr::Analytic(k) => k.eval(x, y),
            GraphonRepr::Step(w) => {
                let n = w.nrows();
                w[(cell_index(x, n), cell_index(y, n))]
            }
            GraphonRepr::Spectral(d) => d.kernel(x, y),
        }
    }

    /// `W(x_i, x_j)` on the grid midpoints.
    pub fn kernel_matrix(&self, grid: &QuadratureGrid) -> DMatrix<f64> {
        let xs = grid.midpoints();
        let n = xs.len();
        match &self.repr {
            GraphonRepr::Spectral(d) => {
                let mut f = DMatrix::zeros(n, d.len());
                let mut scaled = DMatrix::zeros(n, d.len());
                for (l, p) in d.pairs().iter().enumerate() {
                    for (i, &x) in xs.iter().enumerate() {
                        let v = p.function.eval(x);
                        f[(i, l)] = v;
                        scaled[(i, l)] = p.lambda * v;
                    }
                }
                scaled * f.transpose()
            }
            _ => DMatrix::from_fn(n, n, |i, j| self.eval(xs[i], xs[j])),
        }
    }

    /// Known or exact eigenpairs for non-analytic-infinite representations.
    pub fn truncated_spectrum(&self, rank: usize) -> Option<SpectralDecomposition> {
        match &self.repr {
            GraphonRepr::Analytic(k) => k.known_eigenpairs(rank),
            GraphonRepr::Step(_) => spectral_of_step(self, rank).ok(),
            GraphonRepr::Spectral(d) => Some(d.truncate(rank)),
        }
    }

    /// Checks the symmetry and bound invariants on an `m × m` sample grid.
    pub fn validate(&self, samples: usize) -> Result<()> {
        let grid = QuadratureGrid::new(samples)?;
        let k = self.kernel_matrix(&grid);
        for i in 0..samples {
            for j in 0..samples {
                let v = k[(i, j)];
                if !v.is_finite() {
                    return Err(Error::Validation("kernel is not finite".into()));
                }
                if (v - k[(j, i)]).abs() > 1e-12 * (1.0 + v.abs()) {
                    return Err(Error::Validation("kernel is not symmetric".into()));
                }
                if v.abs() > self.bound * (1.0 + 1e-12) {
                    return Err(Error::Bound {
                        value: v,
                        bound: self.bound,
                    });
                }
            }
        }
        Ok(())
    }
}

/// Builds the step graphon of a symmetric weight matrix.
pub fn step_from_matrix(w: DMatrix<f64>, bound: f64) -> Result<Graphon> {
    if w.nrows() == 0 || w.nrows() != w.ncols() {
        return Err(Error::Dimension(format!(
            "step matrix must be square and nonempty, got {}×{}",
            w.nrows(),
            w.ncols()
        )));
    }
    if !(bound > 0.0) || !bound.is_finite() {
        return Err(Error::Parameter(format!("bound must be positive, got {bound}")));
    }
    let n = w.nrows();
    for i in 0..n {
        for j in 0..n {
            let v = w[(i, j)];
            if !v.is_finite() {
                return Err(Error::Validation(format!("entry ({i},{j}) is not finite")));
            }
            if v != w[(j, i)] {
                return Err(Error::Validation(format!(
                    "matrix is not symmetric at ({i},{j})"
                )));
            }
            if v.abs() > bound {
                return Err(Error::Bound { value: v, bound });
            }
        }
    }
    Ok(Graphon {
        repr: GraphonRepr::Step(w),
        bound,
    })
}

/// `(𝐌f)(x_i)` on the quadrature grid.
///
/// Step graphons are integrated exactly against `f` viewed as a step
/// function on the grid cells; spectral graphons use exact eigenfunction
/// cell integrals; analytic kernels use the midpoint rule.
pub fn apply_graphon(g: &Graphon, f: &[f64], grid: &QuadratureGrid) -> Result<Vec<f64>> {
    let n = grid.points();
    if f.len() != n {
        return Err(Error::Dimension(format!(
            "function has {} samples, grid has {n}",
            f.len()
        )));
    }
    let xs = grid.midpoints();
    let h = grid.weight();
    match g.repr() {
        GraphonRepr::Step(w) => {
            let cells = w.nrows();
            let cell_fn = EigenFunction::Piecewise { values: f.to_vec() };
            let block: Vec<f64> = (0..cells)
                .map(|j| cell_fn.integral(j as f64 / cells as f64, (j + 1) as f64 / cells as f64))
                .collect();
            Ok(xs
                .iter()
                .map(|&x| {
                    let i = cell_index(x, cells);
                    (0..cells).map(|j| w[(i, j)] * block[j]).sum()
                })
                .collect())
        }
        GraphonRepr::Spectral(d) => {
            let grid_fn = EigenFunction::Piecewise { values: f.to_vec() };
            let mut out = vec![0.0; n];
            for p in d.pairs() {
                let coeff = p.lambda * p.function.inner(&grid_fn);
                for (o, &x) in out.iter_mut().zip(&xs) {
                    *o += coeff * p.function.eval(x);
                }
            }
            Ok(out)
        }
        GraphonRepr::Analytic(k) => Ok(xs
            .iter()
            .map(|&x| xs.iter().zip(f).map(|(&y, fy)| k.eval(x, y) * fy).sum::<f64>() * h)
            .collect()),
    }
}

/// The first `count` eigenpairs `(√2 cos(kπx/2), 4/(k²π²))`, `k = 1, 3, 5, …`,
/// of the uniform attachment limit `1 − max(x, y)`.
pub fn ua_eigenpairs(count: usize) -> SpectralDecomposition {
    let pairs = (0..count)
        .map(|i| {
            let k = 2 * i + 1;
            EigenPair {
                lambda: 4.0 / ((k * k) as f64 * PI * PI),
                function: EigenFunction::cosine_mode(k),
            }
        })
        .collect();
    SpectralDecomposition::new(pairs).expect("positive eigenvalues")
}

/// `Σ_{ℓ > count} λ_ℓ²` for the uniform attachment limit, i.e. `1/6` minus
/// the retained squares.
pub fn ua_eigenvalue_square_tail(count: usize) -> f64 {
    // Σ_{k odd ≥ 2count+1} 1/k⁴ = (π⁴/96) − head; the head is summed directly.
    let head: f64 = (0..count)
        .map(|i| {
            let k = (2 * i + 1) as f64;
            1.0 / k.powi(4)
        })
        .sum();
    let lambda_scale = 16.0 / PI.powi(4);
    lambda_scale * (PI.powi(4) / 96.0 - head)
}

/// Symmetric eigendecomposition of a step graphon's matrix, mapped to graphon
/// eigenpairs `(λ_i(W)/N, √N·v_i)` and truncated to the `k` leading pairs.
pub fn spectral_of_step(g: &Graphon, k: usize) -> Result<SpectralDecomposition> {
    let w = g
        .step_matrix()
        .ok_or_else(|| Error::Validation("spectral_of_step needs a step graphon".into()))?;
    let n = w.nrows();
    let eig = SymmetricEigen::new(w.clone());
    let zero = ZERO_EIGENVALUE_REL * n as f64;
    let scale = (n as f64).sqrt();
    let mut pairs = Vec::new();
    for (i, &lam) in eig.eigenvalues.iter().enumerate() {
        if lam.abs() < zero {
            continue;
        }
        let values: Vec<f64> = eig.eigenvectors.column(i).iter().map(|v| v * scale).collect();
        pairs.push(EigenPair {
            lambda: lam / n as f64,
            function: EigenFunction::Piecewise { values }.sign_normalized(),
        });
    }
    Ok(SpectralDecomposition::new(pairs)?.truncate(k))
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
enum GraphonJson {
    Step {
        matrix: Vec<Vec<f64>>,
        #[serde(default = "default_bound")]
        c: f64,
    },
    Analytic {
        name: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        value: Option<f64>,
    },
    Spectral {
        pairs: SpectralDecomposition,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        c: Option<f64>,
    },
}

fn default_bound() -> f64 {
    1.0
}

impl TryFrom<GraphonJson> for Graphon {
    type Error = Error;
    fn try_from(json: GraphonJson) -> Result<Self> {
        match json {
            GraphonJson::Step { matrix, c } => {
                let n = matrix.len();
                if matrix.iter().any(|r| r.len() != n) {
                    return Err(Error::Dimension("step matrix rows differ in length".into()));
                }
                let w = DMatrix::from_fn(n, n, |i, j| matrix[i][j]);
                step_from_matrix(w, c)
            }
            GraphonJson::Analytic { name, value } => match (name.as_str(), value) {
                ("uniform_attachment", None) => Ok(Graphon::uniform_attachment()),
                ("constant", Some(v)) => Ok(Graphon::constant(v)),
                ("constant", None) => Err(Error::Validation(
                    "constant graphon needs a `value`".into(),
                )),
                (other, _) => Err(Error::Validation(format!("unknown analytic graphon `{other}`"))),
            },
            GraphonJson::Spectral { pairs, c } => {
                let mut g = Graphon::spectral(pairs);
                if let Some(c) = c {
                    g.bound = c;
                }
                Ok(g)
            }
        }
    }
}

impl From<Graphon> for GraphonJson {
    fn from(g: Graphon) -> Self {
        match g.repr {
            GraphonRepr::Step(w) => GraphonJson::Step {
                matrix: w.row_iter().map(|r| r.iter().copied().collect()).collect(),
                c: g.bound,
            },
            GraphonRepr::Analytic(k) => GraphonJson::Analytic {
                name: k.name().to_string(),
                value: match k {
                    AnalyticKernel::Constant(v) => Some(v),
                    AnalyticKernel::UniformAttachment => None,
                },
            },
            GraphonRepr::Spectral(d) => GraphonJson::Spectral {
                pairs: d,
                c: Some(g.bound),
            },
        }
    }
}
