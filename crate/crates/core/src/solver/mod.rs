//! The equilibrium forward-backward equations of the LQG graphon mean field
//! game.
//!
//! With `A_c(t) = A − BR⁻¹BᵀΠ(t)`, a coupling `K` (the normalised adjacency
//! `W/N` on a finite network, or an eigenvalue on an eigendirection) and
//! source weights `c`, every route solves
//!
//! ```text
//!  ż = A_c z + D z K − BR⁻¹Bᵀ s K,                     z(0) = z₀
//! −ṡ = A_cᵀ s − (QH − ΠD) z − QH η cᵀ,                 s(T) = Q_T H (z(T) + η cᵀ)
//! ```
//!
//! for matrix states whose columns are nodes or eigendirections.

mod diagnostics;
mod finite;
mod law;
mod ltv;
mod spectral;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::graphon::SpectralDecomposition;
use crate::ode::{self, Interpolant, MatrixPath, TimeGrid};
use crate::{Error, Result};

pub use diagnostics::{compute_l0, compute_l0_with_stride, DEFAULT_L0_NODES};
pub use finite::{solve_finite_fixedpoint, solve_finite_riccati, solve_idempotent};
pub use law::{best_response, BestResponseLaw};
pub use ltv::{ltv_graphon_evolve, LtvCoefficients};
pub use spectral::{solve_spectral, SpectralMethod, SpectralPlan};

/// Relative tolerance of the centred-difference residual checks.
pub const RESIDUAL_TOL: f64 = 1e-4;
/// Idempotency tolerance `‖M̄² − M̄‖_max` of the fast path.
pub const IDEMPOTENT_TOL: f64 = 1e-8;

/// Problem data. All matrices are `n × n`.
#[derive(Clone, Debug, PartialEq)]
pub struct GmfgParams {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub d: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub q_t: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub h: DMatrix<f64>,
    pub eta: DVector<f64>,
    pub sigma: DMatrix<f64>,
    pub grid: TimeGrid,
}

impl GmfgParams {
    /// The two-dimensional rotating benchmark: `A = [[0,10],[−10,0]]`,
    /// `B = D = R = Q_T = H = I`, `Q = 0.5 I`, `Σ = 0.1 I`, `η = (2, 2)`,
    /// `T = 1`, `dt = 1e−3`.
    pub fn benchmark() -> Self {
        let i = DMatrix::identity(2, 2);
        GmfgParams {
            a: DMatrix::from_row_slice(2, 2, &[0.0, 10.0, -10.0, 0.0]),
            b: i.clone(),
            d: i.clone(),
            q: &i * 0.5,
            q_t: i.clone(),
            r: i.clone(),
            h: i.clone(),
            eta: DVector::from_element(2, 2.0),
            sigma: &i * 0.1,
            grid: TimeGrid::new(1.0, 1e-3).expect("valid grid"),
        }
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.dim();
        let square = [
            ("A", &self.a),
            ("B", &self.b),
            ("D", &self.d),
            ("Q", &self.q),
            ("Q_T", &self.q_t),
            ("R", &self.r),
            ("H", &self.h),
            ("Sigma", &self.sigma),
        ];
        for (name, m) in square {
            if m.shape() != (n, n) {
                return Err(Error::Dimension(format!(
                    "{name} is {}×{}, expected {n}×{n}",
                    m.nrows(),
                    m.ncols()
                )));
            }
            if m.iter().any(|v| !v.is_finite()) {
                return Err(Error::Parameter(format!("{name} has non-finite entries")));
            }
        }
        if self.eta.len() != n || self.eta.iter().any(|v| !v.is_finite()) {
            return Err(Error::Dimension(format!("eta must be a finite {n}-vector")));
        }
        for (name, m) in [("Q", &self.q), ("Q_T", &self.q_t)] {
            check_psd(name, m)?;
        }
        ode::control_gains(&self.b, &self.r)?;
        Ok(())
    }
}

fn check_psd(name: &str, m: &DMatrix<f64>) -> Result<()> {
    let scale = m.amax().max(1.0);
    if (m - m.transpose()).amax() > 1e-12 * scale {
        return Err(Error::Parameter(format!("{name} must be symmetric")));
    }
    if m.clone().symmetric_eigenvalues().min() < -1e-10 * scale {
        return Err(Error::Parameter(format!("{name} must be positive semidefinite")));
    }
    Ok(())
}

/// `Π_t` from the symmetric Riccati equation with `(A, B, Q, R, Q_T)`.
pub fn solve_pi(params: &GmfgParams) -> Result<MatrixPath> {
    ode::solve_symmetric_riccati(
        &params.a,
        &params.b,
        &params.q,
        &params.r,
        &params.q_t,
        &params.grid,
    )
}

/// Initial mean states.
#[derive(Clone, Debug, PartialEq)]
pub enum InitialMeans {
    /// Column `q` is the mean `μ_q` of node `q`; as a function on `[0,1]`
    /// it is the step function on the uniform partition.
    Nodes(DMatrix<f64>),
    /// Coefficients `⟨f_ℓ, x̄(0)⟩`, one `n`-vector per eigendirection.
    /// The component in the kernel of the graphon does not influence the
    /// mean field and is not needed.
    Coefficients(Vec<DVector<f64>>),
}

impl InitialMeans {
    pub fn uniform(value: &DVector<f64>, nodes: usize) -> Self {
        InitialMeans::Nodes(DMatrix::from_fn(value.len(), nodes, |i, _| value[i]))
    }

    pub(crate) fn coefficients(&self, decomp: &SpectralDecomposition) -> Result<Vec<DVector<f64>>> {
        match self {
            InitialMeans::Nodes(mu) => {
                let cols: Vec<DVector<f64>> = mu.column_iter().map(|c| c.into_owned()).collect();
                decomp.project_step(&cols)
            }
            InitialMeans::Coefficients(c) => {
                if c.len() != decomp.len() {
                    return Err(Error::Dimension(format!(
                        "{} initial coefficients for rank {}",
                        c.len(),
                        decomp.len()
                    )));
                }
                Ok(c.clone())
            }
        }
    }

    pub(crate) fn nodes(&self) -> Result<&DMatrix<f64>> {
        match self {
            InitialMeans::Nodes(mu) => Ok(mu),
            InitialMeans::Coefficients(_) => Err(Error::Mode(
                "finite routes need per-node initial means".into(),
            )),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum SolutionMode {
    Finite { nodes: usize },
    Spectral { rank: usize },
}

/// Iteration controls of the fixed-point routes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FixedPointOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub damping: f64,
    /// Damping used once `fallback_after` iterations failed to shrink the gap.
    pub fallback_damping: f64,
    pub fallback_after: usize,
}

impl Default for FixedPointOptions {
    fn default() -> Self {
        FixedPointOptions {
            tol: 1e-8,
            max_iter: 200,
            damping: 1.0,
            fallback_damping: 0.5,
            fallback_after: 50,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Diagnostics {
    pub converged: bool,
    pub iterations: usize,
    /// Sup-norm gaps `Δ_k = sup ‖z⁺ − z‖_∞` of successive iterates.
    pub gaps: Vec<f64>,
    /// The same gaps in the `C`-norm `sup_t ‖·‖_{(L²[0,1])ⁿ}`.
    pub c_gaps: Vec<f64>,
    pub residual_z: f64,
    pub residual_s: f64,
    /// `sup_t` of the component of `z` in the kernel of the coupling.
    pub complement: f64,
}

impl Diagnostics {
    pub fn residual(&self) -> f64 {
        self.residual_z.max(self.residual_s)
    }
}

/// Equilibrium pair `(z, s)`. Columns of `z` and `s` are nodes (finite mode)
/// or eigendirection coefficients (spectral mode).
#[derive(Clone, Debug)]
pub struct MeanFieldSolution {
    pub mode: SolutionMode,
    pub z: MatrixPath,
    pub s: MatrixPath,
    /// Complement offset `s̆`, spectral mode only.
    pub breve_s: Option<MatrixPath>,
    pub pi: MatrixPath,
    pub decomposition: Option<SpectralDecomposition>,
    /// Decoupling paths `o^ℓ` and `e^ℓ` of the Riccati spectral route.
    pub decoupling: Option<Decoupling>,
    pub diagnostics: Diagnostics,
}

#[derive(Clone, Debug)]
pub struct Decoupling {
    /// One `o` path per eigendirection (shared within a distinct eigenvalue).
    pub o: Vec<MatrixPath>,
    /// `e^ℓ` as the columns of an `n × k` path.
    pub e: MatrixPath,
}

impl MeanFieldSolution {
    pub fn converged(&self) -> bool {
        self.diagnostics.converged
    }

    pub fn columns(&self) -> usize {
        self.z.first().ncols()
    }

    /// `(z_θ(t), s_θ(t))` from the spectral coefficients.
    pub fn reconstruct(&self, theta: f64, t: f64) -> Result<(DVector<f64>, DVector<f64>)> {
        let (decomp, breve) = match (&self.mode, &self.decomposition, &self.breve_s) {
            (SolutionMode::Spectral { .. }, Some(d), Some(b)) => (d, b),
            _ => {
                return Err(Error::Mode(
                    "reconstruct needs a spectral-mode solution".into(),
                ))
            }
        };
        if !(0.0..=1.0).contains(&theta) {
            return Err(Error::Domain(format!("theta = {theta} outside [0, 1]")));
        }
        check_time(&self.z.grid().clone(), t)?;
        let f = DVector::from_iterator(
            decomp.len(),
            decomp.pairs().iter().map(|p| p.function.eval(theta)),
        );
        let c = DVector::from_vec(decomp.ones_coefficients());
        let z = self.z.interpolant().eval(t);
        let s = self.s.interpolant().eval(t);
        let sb = breve.interpolant().eval(t);
        let zt = &z * &f;
        let st = (&s - &sb * c.transpose()) * &f + sb.column(0);
        Ok((zt, st))
    }

    /// Node values `(z̄_q(t), s̄_q(t))` of a finite-mode solution.
    pub fn node_value(&self, q: usize, t: f64) -> Result<(DVector<f64>, DVector<f64>)> {
        let SolutionMode::Finite { nodes } = self.mode else {
            return Err(Error::Mode("node_value needs a finite-mode solution".into()));
        };
        if q >= nodes {
            return Err(Error::Dimension(format!("node {q} of {nodes}")));
        }
        check_time(self.z.grid(), t)?;
        let z = self.z.interpolant().eval(t);
        let s = self.s.interpolant().eval(t);
        Ok((z.column(q).into_owned(), s.column(q).into_owned()))
    }

    /// `z` and `s` as functions on the uniform `nodes`-partition, sampled at
    /// cell midpoints, on every grid node. Finite solutions are returned as
    /// they are (and must have `nodes` columns).
    pub fn on_cells(&self, nodes: usize) -> Result<(MatrixPath, MatrixPath)> {
        match self.mode {
            SolutionMode::Finite { nodes: n } => {
                if n != nodes {
                    return Err(Error::Dimension(format!("solution has {n} nodes, not {nodes}")));
                }
                Ok((self.z.clone(), self.s.clone()))
            }
            SolutionMode::Spectral { .. } => {
                let decomp = self.decomposition.as_ref().expect("spectral decomposition");
                let breve = self.breve_s.as_ref().expect("complement path");
                let k = decomp.len();
                let f = DMatrix::from_fn(k, nodes, |l, q| {
                    decomp.pairs()[l]
                        .function
                        .eval((q as f64 + 0.5) / nodes as f64)
                });
                let c = DMatrix::from_row_slice(1, k, &decomp.ones_coefficients());
                // 1 − Σ c_ℓ f_ℓ(θ_q), the complement weight of the constant function
                let rest = DMatrix::from_element(1, nodes, 1.0) - &c * &f;
                let z = self.z.map(|m| m * &f);
                let zipped = zip_paths(&self.s, breve, |s, b| s * &f + b * &rest)?;
                Ok((z, zipped))
            }
        }
    }
}

fn zip_paths<F>(a: &MatrixPath, b: &MatrixPath, f: F) -> Result<MatrixPath>
where
    F: Fn(&DMatrix<f64>, &DMatrix<f64>) -> DMatrix<f64>,
{
    let values = a.values().iter().zip(b.values()).map(|(x, y)| f(x, y)).collect();
    let path = MatrixPath::new(*a.grid(), values)?;
    match (a.slopes(), b.slopes()) {
        (Some(sa), Some(sb)) => path.with_slopes(sa.iter().zip(sb).map(|(x, y)| f(x, y)).collect()),
        _ => Ok(path),
    }
}

fn check_time(grid: &TimeGrid, t: f64) -> Result<()> {
    let slack = 1e-12 * grid.horizon();
    if !(t >= -slack && t <= grid.horizon() + slack) {
        return Err(Error::Domain(format!(
            "t = {t} outside [0, {}]",
            grid.horizon()
        )));
    }
    Ok(())
}

/// Time-dependent coefficients shared by all routes.
pub(crate) struct Coefficients {
    pub pi: MatrixPath,
    pi_i: Interpolant<DMatrix<f64>>,
    pub a: DMatrix<f64>,
    pub d: DMatrix<f64>,
    /// `BR⁻¹Bᵀ`.
    pub s: DMatrix<f64>,
    pub qh: DMatrix<f64>,
    pub qth: DMatrix<f64>,
    pub eta: DVector<f64>,
    pub grid: TimeGrid,
}

impl Coefficients {
    pub fn new(params: &GmfgParams) -> Result<Self> {
        params.validate()?;
        let pi = solve_pi(params)?;
        let (s, _) = ode::control_gains(&params.b, &params.r)?;
        Ok(Coefficients {
            pi_i: pi.interpolant(),
            pi,
            a: params.a.clone(),
            d: params.d.clone(),
            s,
            qh: &params.q * &params.h,
            qth: &params.q_t * &params.h,
            eta: params.eta.clone(),
            grid: params.grid,
        })
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    /// `A_c(t) = A − BR⁻¹BᵀΠ(t)`.
    pub fn ac(&self, t: f64) -> DMatrix<f64> {
        &self.a - &self.s * self.pi_i.eval(t)
    }

    /// `QH − Π(t)D`.
    pub fn hq(&self, t: f64) -> DMatrix<f64> {
        &self.qh - self.pi_i.eval(t) * &self.d
    }

    /// `QH η cᵀ`.
    pub fn source(&self, c: &DVector<f64>) -> DMatrix<f64> {
        &self.qh * &self.eta * c.transpose()
    }

    /// `Q_T H (z_T + η cᵀ)`.
    pub fn terminal(&self, z_t: &DMatrix<f64>, c: &DVector<f64>) -> DMatrix<f64> {
        &self.qth * (z_t + &self.eta * c.transpose())
    }

    /// `s` right-hand side `ṡ = −A_cᵀ s + (QH − ΠD) z + QH η cᵀ`.
    pub fn s_rhs(&self, t: f64, s: &DMatrix<f64>, z: &DMatrix<f64>, src: &DMatrix<f64>) -> DMatrix<f64> {
        let pi = self.pi_i.eval(t);
        let ac = &self.a - &self.s * &pi;
        let hq = &self.qh - &pi * &self.d;
        -(ac.tr_mul(s)) + hq * z + src
    }

    /// `z` right-hand side `ż = A_c z + D z K − BR⁻¹Bᵀ s K`.
    pub fn z_rhs(&self, t: f64, z: &DMatrix<f64>, s: &DMatrix<f64>, k: &DMatrix<f64>) -> DMatrix<f64> {
        self.ac(t) * z + (&self.d * z - &self.s * s) * k
    }

    /// `s̆`: `ṡ̆ = −A_cᵀ s̆ + QHη`, `s̆(T) = Q_T H η`, as an `n × 1` path.
    pub fn breve_s(&self) -> Result<MatrixPath> {
        let one = DVector::from_element(1, 1.0);
        let src = self.source(&one);
        let zero = DMatrix::zeros(self.n(), 1);
        let term = self.terminal(&zero, &one);
        ode::rk4_backward(|t, s: &DMatrix<f64>| self.s_rhs(t, s, &zero, &src), term, &self.grid)
    }

    /// Largest relative centred-difference residuals of the `z` and `s`
    /// equations at interior nodes.
    pub fn residuals(
        &self,
        z: &MatrixPath,
        s: &MatrixPath,
        k: &DMatrix<f64>,
        c: &DVector<f64>,
    ) -> (f64, f64) {
        let steps = self.grid.steps();
        let src = self.source(c);
        let (zs, ss) = (z.sup_norm(), s.sup_norm());
        let mut rz = 0.0f64;
        let mut rs = 0.0f64;
        for i in 2..steps.saturating_sub(1) {
            let t = self.grid.time(i);
            let dz = z.centered_derivative(i) - self.z_rhs(t, z.at(i), s.at(i), k);
            let ds = s.centered_derivative(i) - self.s_rhs(t, s.at(i), z.at(i), &src);
            rz = rz.max(dz.amax());
            rs = rs.max(ds.amax());
        }
        (rz / (1.0 + zs), rs / (1.0 + ss))
    }
}

/// `sup_t (w Σ_columns ‖·‖²)^{1/2}` of the difference of two matrix paths.
pub(crate) fn c_norm_distance(a: &MatrixPath, b: &MatrixPath, weight: f64) -> f64 {
    a.values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| ((x - y).norm_squared() * weight).sqrt())
        .fold(0.0, f64::max)
}
