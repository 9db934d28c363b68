//! Spectral routes: coefficient dynamics per eigendirection plus the
//! complement offset `s̆`.
//!
//! For an eigenpair `(λ_ℓ, f_ℓ)` with `c_ℓ = ⟨f_ℓ, 1⟩` the coefficients
//! `z^ℓ = ⟨f_ℓ, z⟩`, `s^ℓ = ⟨f_ℓ, s⟩` solve the pair of the module docs with
//! `K = λ_ℓ` and source weight `c_ℓ`; the part of `s` orthogonal to every
//! `f_ℓ` is `(1 − Σ c_ℓ f_ℓ) s̆`.

use nalgebra::{DMatrix, DVector};

use super::finite::Coupled;
use super::{
    Coefficients, Decoupling, Diagnostics, FixedPointOptions, GmfgParams, InitialMeans,
    MeanFieldSolution, SolutionMode,
};
use crate::graphon::{DistinctGroup, SpectralDecomposition, DISTINCT_EIGENVALUE_TOL};
use crate::ode::{self, MatrixPath, RiccatiCoeffs};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpectralMethod {
    FixedPoint,
    Riccati,
}

struct GroupDecoupling {
    o: MatrixPath,
    /// `e` for a unit source weight, `n × 1`.
    e_unit: MatrixPath,
}

/// The parts of a spectral solve that do not depend on the initial means:
/// `Π`, `s̆` and, for the Riccati method, `o` and `e` per distinct
/// eigenvalue.
pub struct SpectralPlan {
    co: Coefficients,
    decomp: SpectralDecomposition,
    groups: Vec<DistinctGroup>,
    c: DVector<f64>,
    breve: MatrixPath,
    method: SpectralMethod,
    decoupling: Option<Vec<GroupDecoupling>>,
}

impl SpectralPlan {
    pub fn new(
        params: &GmfgParams,
        decomp: &SpectralDecomposition,
        method: SpectralMethod,
    ) -> Result<Self> {
        if decomp.is_empty() {
            return Err(Error::Size("spectral solve needs a nonempty decomposition".into()));
        }
        let co = Coefficients::new(params)?;
        let groups = decomp.distinct_groups(DISTINCT_EIGENVALUE_TOL);
        let c = DVector::from_vec(decomp.ones_coefficients());
        let breve = co.breve_s()?;
        let decoupling = match method {
            SpectralMethod::FixedPoint => None,
            SpectralMethod::Riccati => Some(
                groups
                    .iter()
                    .map(|g| decouple(&co, g.lambda))
                    .collect::<Result<Vec<_>>>()?,
            ),
        };
        Ok(SpectralPlan {
            co,
            decomp: decomp.clone(),
            groups,
            c,
            breve,
            method,
            decoupling,
        })
    }

    pub fn decomposition(&self) -> &SpectralDecomposition {
        &self.decomp
    }

    pub fn pi(&self) -> &MatrixPath {
        &self.co.pi
    }

    pub fn solve(&self, means: &InitialMeans, opts: &FixedPointOptions) -> Result<MeanFieldSolution> {
        let co = &self.co;
        let n = co.n();
        let k = self.decomp.len();
        let coeffs = means.coefficients(&self.decomp)?;
        if coeffs.iter().any(|v| v.len() != n) {
            return Err(Error::Dimension(format!("initial coefficients must be {n}-vectors")));
        }
        let lambdas = self.decomp.eigenvalues();
        let nodes = co.grid.len();
        let mut z_vals = vec![DMatrix::zeros(n, k); nodes];
        let mut z_slopes = z_vals.clone();
        let mut s_vals = z_vals.clone();
        let mut s_slopes = z_vals.clone();
        let mut e_vals = z_vals.clone();
        let mut o_paths: Vec<Option<MatrixPath>> = vec![None; k];
        let mut diag = Diagnostics {
            converged: true,
            ..Diagnostics::default()
        };
        for (gi, g) in self.groups.iter().enumerate() {
            let m = g.members.len();
            let lam = g.lambda;
            let cg = DVector::from_iterator(m, g.members.iter().map(|&l| self.c[l]));
            let z0 = DMatrix::from_fn(n, m, |i, j| lam * coeffs[g.members[j]][i]);
            let coupled = Coupled {
                co,
                k: DMatrix::identity(m, m) * lam,
                c: cg.clone(),
                z0,
                weight: 1.0,
            };
            let (z, s, e) = match (&self.method, &self.decoupling) {
                (SpectralMethod::Riccati, Some(dec)) => {
                    let (z, s, e) = decoupled_pair(co, &coupled, lam, &dec[gi])?;
                    for &l in &g.members {
                        o_paths[l] = Some(dec[gi].o.clone());
                    }
                    (z, s, Some(e))
                }
                _ => {
                    let out = coupled.iterate(opts)?;
                    let d = out.diagnostics;
                    diag.converged &= d.converged;
                    diag.iterations = diag.iterations.max(d.iterations);
                    merge_max(&mut diag.gaps, &d.gaps);
                    merge_max(&mut diag.c_gaps, &d.c_gaps);
                    (out.z, out.s, None)
                }
            };
            for i in 0..nodes {
                for (j, &l) in g.members.iter().enumerate() {
                    z_vals[i].set_column(l, &z.at(i).column(j));
                    s_vals[i].set_column(l, &s.at(i).column(j));
                    z_slopes[i].set_column(l, &z.slopes().expect("ode slopes")[i].column(j));
                    s_slopes[i].set_column(l, &s.slopes().expect("ode slopes")[i].column(j));
                    if let Some(e) = &e {
                        e_vals[i].set_column(l, &e.at(i).column(j));
                    }
                }
            }
        }
        let z = MatrixPath::new(co.grid, z_vals)?.with_slopes(z_slopes)?;
        let s = MatrixPath::new(co.grid, s_vals)?.with_slopes(s_slopes)?;
        let kmat = DMatrix::from_diagonal(&DVector::from_vec(lambdas));
        let (rz, rs) = co.residuals(&z, &s, &kmat, &self.c);
        diag.residual_z = rz;
        diag.residual_s = rs;
        let decoupling = match self.method {
            SpectralMethod::Riccati => Some(Decoupling {
                o: o_paths.into_iter().map(|o| o.expect("every direction grouped")).collect(),
                e: MatrixPath::new(co.grid, e_vals)?,
            }),
            SpectralMethod::FixedPoint => None,
        };
        Ok(MeanFieldSolution {
            mode: SolutionMode::Spectral { rank: k },
            z,
            s,
            breve_s: Some(self.breve.clone()),
            pi: co.pi.clone(),
            decomposition: Some(self.decomp.clone()),
            decoupling,
            diagnostics: diag,
        })
    }
}

fn merge_max(acc: &mut Vec<f64>, new: &[f64]) {
    for (i, v) in new.iter().enumerate() {
        match acc.get_mut(i) {
            Some(a) => *a = a.max(*v),
            None => acc.push(*v),
        }
    }
}

/// `o` and the unit-weight `e` for eigenvalue `λ`:
/// `−ȯ = A_cᵀo + o(A_c + λD) − λ o BR⁻¹Bᵀ o − (QH − ΠD)`, `o(T) = Q_T H`;
/// `ė = (−A_cᵀ + λ o BR⁻¹Bᵀ) e + QHη`, `e(T) = Q_T H η`.
fn decouple(co: &Coefficients, lambda: f64) -> Result<GroupDecoupling> {
    let o = ode::solve_nonsymmetric_riccati(
        |t| {
            let ac = co.ac(t);
            RiccatiCoeffs {
                g: &ac + &co.d * lambda,
                f: ac,
                s: &co.s * lambda,
                hq: co.hq(t),
            }
        },
        &co.qth,
        &co.grid,
        &format!("decoupling Riccati equation for λ = {lambda}"),
    )?;
    let oi = o.interpolant();
    let one = DVector::from_element(1, 1.0);
    let src = co.source(&one);
    let e_t = co.terminal(&DMatrix::zeros(co.n(), 1), &one);
    let e_unit = ode::rk4_backward(
        |t, e: &DMatrix<f64>| -co.ac(t).tr_mul(e) + oi.eval(t) * (&co.s * e) * lambda + &src,
        e_t,
        &co.grid,
    )?;
    Ok(GroupDecoupling { o, e_unit })
}

fn decoupled_pair(
    co: &Coefficients,
    p: &Coupled<'_>,
    lambda: f64,
    dec: &GroupDecoupling,
) -> Result<(MatrixPath, MatrixPath, MatrixPath)> {
    let oi = dec.o.interpolant();
    let ei = dec.e_unit.interpolant();
    let ct = p.c.transpose();
    let z = ode::rk4_forward(
        |t, z: &DMatrix<f64>| {
            let o = oi.eval(t);
            (co.ac(t) + &co.d * lambda - &co.s * &o * lambda) * z
                - &co.s * ei.eval(t) * &ct * lambda
        },
        p.z0.clone(),
        &co.grid,
    )?;
    let src = co.source(&p.c);
    let e_vals: Vec<DMatrix<f64>> = dec.e_unit.values().iter().map(|e| e * &ct).collect();
    let s_vals: Vec<DMatrix<f64>> = (0..co.grid.len())
        .map(|i| dec.o.at(i) * z.at(i) + &e_vals[i])
        .collect();
    let s_slopes = (0..co.grid.len())
        .map(|i| co.s_rhs(co.grid.time(i), &s_vals[i], z.at(i), &src))
        .collect();
    let s = MatrixPath::new(co.grid, s_vals)?.with_slopes(s_slopes)?;
    let e = MatrixPath::new(co.grid, e_vals)?;
    Ok((z, s, e))
}

/// Spectral equilibrium, by fixed-point iteration or Riccati decoupling per
/// distinct eigenvalue.
pub fn solve_spectral(
    params: &GmfgParams,
    decomp: &SpectralDecomposition,
    means: &InitialMeans,
    method: SpectralMethod,
    opts: &FixedPointOptions,
) -> Result<MeanFieldSolution> {
    SpectralPlan::new(params, decomp, method)?.solve(means, opts)
}
