//! Finite-network routes: fixed-point iteration, Riccati decoupling and the
//! idempotent-coupling fast path.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::{
    c_norm_distance, Coefficients, Diagnostics, FixedPointOptions, GmfgParams, InitialMeans,
    MeanFieldSolution, SolutionMode, IDEMPOTENT_TOL,
};
use crate::ode::{self, MatrixPath, Path, RiccatiCoeffs, DIVERGENCE_THRESHOLD};
use crate::{Error, Result};

/// A forward-backward pair with matrix states (columns are nodes or
/// eigendirections), coupling `k` and source weights `c`.
pub(crate) struct Coupled<'a> {
    pub co: &'a Coefficients,
    pub k: DMatrix<f64>,
    pub c: DVector<f64>,
    pub z0: DMatrix<f64>,
    /// Weight of the squared column norms in the `C`-norm.
    pub weight: f64,
}

pub(crate) struct Iterated {
    pub z: MatrixPath,
    pub s: MatrixPath,
    pub diagnostics: Diagnostics,
}

fn blend(old: &MatrixPath, new: &MatrixPath, alpha: f64) -> Result<MatrixPath> {
    let mix = |a: &DMatrix<f64>, b: &DMatrix<f64>| a + (b - a) * alpha;
    let values = old.values().iter().zip(new.values()).map(|(a, b)| mix(a, b)).collect();
    let path = Path::new(*old.grid(), values)?;
    match (old.slopes(), new.slopes()) {
        (Some(sa), Some(sb)) => path.with_slopes(sa.iter().zip(sb).map(|(a, b)| mix(a, b)).collect()),
        _ => Ok(path),
    }
}

impl Coupled<'_> {
    pub fn solve_s(&self, z: &MatrixPath) -> Result<MatrixPath> {
        let zi = z.interpolant();
        let src = self.co.source(&self.c);
        let terminal = self.co.terminal(z.last(), &self.c);
        ode::rk4_backward(
            |t, s: &DMatrix<f64>| self.co.s_rhs(t, s, &zi.eval(t), &src),
            terminal,
            &self.co.grid,
        )
    }

    pub fn solve_z(&self, s: &MatrixPath) -> Result<MatrixPath> {
        let si = s.interpolant();
        ode::rk4_forward(
            |t, z: &DMatrix<f64>| self.co.z_rhs(t, z, &si.eval(t), &self.k),
            self.z0.clone(),
            &self.co.grid,
        )
    }

    /// Alternating backward `s` and forward `z` solves until the sup-norm gap
    /// of successive `z` iterates drops below `tol`.
    pub fn iterate(&self, opts: &FixedPointOptions) -> Result<Iterated> {
        let mut z = Path::constant(self.co.grid, self.z0.clone());
        let mut diag = Diagnostics::default();
        let mut stalled = 0usize;
        for it in 1..=opts.max_iter {
            let s = self.solve_s(&z)?;
            let next = self.solve_z(&s)?;
            let gap = next.sup_distance(&z);
            let c_gap = c_norm_distance(&next, &z, self.weight);
            if !gap.is_finite() || gap > DIVERGENCE_THRESHOLD {
                return Err(Error::Divergence {
                    context: "fixed-point iteration".into(),
                    time: self.co.grid.horizon(),
                    norm: gap,
                });
            }
            if diag.gaps.last().is_some_and(|&prev| gap >= prev) {
                stalled += 1;
            }
            diag.gaps.push(gap);
            diag.c_gaps.push(c_gap);
            diag.iterations = it;
            let alpha = if stalled >= opts.fallback_after {
                opts.fallback_damping
            } else {
                opts.damping
            };
            z = if alpha == 1.0 { next } else { blend(&z, &next, alpha)? };
            if gap <= opts.tol {
                diag.converged = true;
                break;
            }
        }
        let s = self.solve_s(&z)?;
        let (rz, rs) = self.co.residuals(&z, &s, &self.k, &self.c);
        diag.residual_z = rz;
        diag.residual_s = rs;
        Ok(Iterated { z, s, diagnostics: diag })
    }
}

fn normalized_coupling(w: &DMatrix<f64>, mu: &DMatrix<f64>, n: usize) -> Result<DMatrix<f64>> {
    let nodes = w.nrows();
    if w.ncols() != nodes || nodes == 0 {
        return Err(Error::Dimension("coupling matrix must be square and nonempty".into()));
    }
    if (w - w.transpose()).amax() > 0.0 {
        return Err(Error::Validation("coupling matrix must be symmetric".into()));
    }
    if mu.shape() != (n, nodes) {
        return Err(Error::Dimension(format!(
            "initial means are {}×{}, expected {n}×{nodes}",
            mu.nrows(),
            mu.ncols()
        )));
    }
    Ok(w / nodes as f64)
}

/// `sup_t ‖z(t)‖` restricted to the kernel of the symmetric coupling `k`.
pub(crate) fn complement_sup(z: &MatrixPath, k: &DMatrix<f64>) -> f64 {
    let m = k.nrows();
    let eig = SymmetricEigen::new(k.clone());
    let cut = 1e-12 * m as f64 * eig.eigenvalues.amax().max(1.0);
    let mut proj = DMatrix::<f64>::identity(m, m);
    for (i, l) in eig.eigenvalues.iter().enumerate() {
        if l.abs() > cut {
            let v = eig.eigenvectors.column(i);
            proj -= &v * v.transpose();
        }
    }
    z.values().iter().map(|v| (v * &proj).amax()).fold(0.0, f64::max)
}

fn finite_solution(
    co: Coefficients,
    z: MatrixPath,
    s: MatrixPath,
    k: &DMatrix<f64>,
    mut diagnostics: Diagnostics,
) -> MeanFieldSolution {
    diagnostics.complement = complement_sup(&z, k);
    MeanFieldSolution {
        mode: SolutionMode::Finite { nodes: k.nrows() },
        z,
        s,
        breve_s: None,
        pi: co.pi,
        decomposition: None,
        decoupling: None,
        diagnostics,
    }
}

/// Finite-network equilibrium by fixed-point iteration on `z`.
pub fn solve_finite_fixedpoint(
    params: &GmfgParams,
    w: &DMatrix<f64>,
    means: &InitialMeans,
    opts: &FixedPointOptions,
) -> Result<MeanFieldSolution> {
    let co = Coefficients::new(params)?;
    let mu = means.nodes()?;
    let k = normalized_coupling(w, mu, co.n())?;
    let nodes = k.nrows();
    let out = Coupled {
        co: &co,
        k: k.clone(),
        c: DVector::from_element(nodes, 1.0),
        z0: mu * &k,
        weight: 1.0 / nodes as f64,
    }
    .iterate(opts)?;
    Ok(finite_solution(co, out.z, out.s, &k, out.diagnostics))
}

fn stack(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_column_slice(m.as_slice())
}

fn unstack(v: &DVector<f64>, n: usize) -> DMatrix<f64> {
    DMatrix::from_column_slice(n, v.len() / n, v.as_slice())
}

fn unstack_path(p: &Path<DVector<f64>>, n: usize) -> Result<MatrixPath> {
    let path = MatrixPath::new(*p.grid(), p.values().iter().map(|v| unstack(v, n)).collect())?;
    match p.slopes() {
        Some(sl) => path.with_slopes(sl.iter().map(|v| unstack(v, n)).collect()),
        None => Ok(path),
    }
}

/// Finite-network equilibrium by Riccati decoupling `s = P z + e` with an
/// `nN × nN` non-symmetric Riccati equation for `P`.
pub fn solve_finite_riccati(
    params: &GmfgParams,
    w: &DMatrix<f64>,
    means: &InitialMeans,
) -> Result<MeanFieldSolution> {
    let co = Coefficients::new(params)?;
    let n = co.n();
    let mu = means.nodes()?;
    let k = normalized_coupling(w, mu, n)?;
    let nodes = k.nrows();
    let eye = DMatrix::<f64>::identity(nodes, nodes);
    let ones = DVector::from_element(nodes, 1.0);
    let ks = k.kronecker(&co.s);
    let kd = k.kronecker(&co.d);
    let p_t = eye.kronecker(&co.qth);
    let p = ode::solve_nonsymmetric_riccati(
        |t| {
            let f = eye.kronecker(&co.ac(t));
            RiccatiCoeffs {
                g: &f + &kd,
                f,
                s: ks.clone(),
                hq: eye.kronecker(&co.hq(t)),
            }
        },
        &p_t,
        &co.grid,
        "decoupling Riccati equation for P",
    )?;
    let pi = p.interpolant();
    let src = stack(&co.source(&ones));
    let e_t = stack(&co.terminal(&DMatrix::zeros(n, nodes), &ones));
    let e = ode::rk4_backward(
        |t, e: &DVector<f64>| {
            let f = eye.kronecker(&co.ac(t));
            -f.tr_mul(e) + pi.eval(t) * (&ks * e) + &src
        },
        e_t,
        &co.grid,
    )?;
    let ei = e.interpolant();
    let z = ode::rk4_forward(
        |t, z: &DVector<f64>| {
            let pt = pi.eval(t);
            let g = eye.kronecker(&co.ac(t)) + &kd;
            g * z - &ks * (pt * z + ei.eval(t))
        },
        stack(&(mu * &k)),
        &co.grid,
    )?;
    let z = unstack_path(&z, n)?;
    let s_values: Vec<DMatrix<f64>> = (0..co.grid.len())
        .map(|i| unstack(&(p.at(i) * stack(z.at(i)) + e.at(i)), n))
        .collect();
    let src_m = co.source(&ones);
    let s_slopes = (0..co.grid.len())
        .map(|i| co.s_rhs(co.grid.time(i), &s_values[i], z.at(i), &src_m))
        .collect();
    let s = MatrixPath::new(co.grid, s_values)?.with_slopes(s_slopes)?;
    let (rz, rs) = co.residuals(&z, &s, &k, &ones);
    let diagnostics = Diagnostics {
        converged: true,
        iterations: 1,
        residual_z: rz,
        residual_s: rs,
        ..Diagnostics::default()
    };
    Ok(finite_solution(co, z, s, &k, diagnostics))
}

/// Fast path for an idempotent normalised coupling `M̄ = W/N` and `η = 0`:
/// every node solves the same `n`-dimensional pair, decoupled by
/// `s̄_q = o z̄_q` with `o` from the `λ = 1` Riccati equation.
pub fn solve_idempotent(
    params: &GmfgParams,
    w: &DMatrix<f64>,
    means: &InitialMeans,
) -> Result<MeanFieldSolution> {
    let mu = means.nodes()?;
    let k = normalized_coupling(w, mu, params.dim())?;
    let defect = (&k * &k - &k).amax();
    if defect > IDEMPOTENT_TOL {
        return Err(Error::Precondition(format!(
            "coupling W/N is not idempotent (‖M̄² − M̄‖_max = {defect:e})"
        )));
    }
    if params.eta.amax() != 0.0 {
        return Err(Error::Hypothesis("the idempotent fast path requires η = 0".into()));
    }
    let co = Coefficients::new(params)?;
    let o = ode::solve_nonsymmetric_riccati(
        |t| {
            let ac = co.ac(t);
            RiccatiCoeffs {
                g: &ac + &co.d,
                f: ac,
                s: co.s.clone(),
                hq: co.hq(t),
            }
        },
        &co.qth,
        &co.grid,
        "idempotent decoupling Riccati equation",
    )?;
    let oi = o.interpolant();
    let z = ode::rk4_forward(
        |t, z: &DMatrix<f64>| (co.ac(t) + &co.d - &co.s * oi.eval(t)) * z,
        mu * &k,
        &co.grid,
    )?;
    let zeros = DVector::zeros(k.nrows());
    let src = co.source(&zeros);
    let s_values: Vec<DMatrix<f64>> = (0..co.grid.len()).map(|i| o.at(i) * z.at(i)).collect();
    let s_slopes = (0..co.grid.len())
        .map(|i| co.s_rhs(co.grid.time(i), &s_values[i], z.at(i), &src))
        .collect();
    let s = MatrixPath::new(co.grid, s_values)?.with_slopes(s_slopes)?;
    let (rz, rs) = co.residuals(&z, &s, &k, &zeros);
    let diagnostics = Diagnostics {
        converged: true,
        iterations: 1,
        residual_z: rz,
        residual_s: rs,
        ..Diagnostics::default()
    };
    Ok(finite_solution(co, z, s, &k, diagnostics))
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::ode::TimeGrid;

    fn scalar_params() -> GmfgParams {
        let one = DMatrix::from_element(1, 1, 1.0);
        let zero = DMatrix::zeros(1, 1);
        GmfgParams {
            a: zero.clone(),
            b: zero.clone(),
            d: DMatrix::from_element(1, 1, 0.7),
            q: one.clone(),
            q_t: one.clone(),
            r: one.clone(),
            h: one.clone(),
            eta: DVector::from_element(1, 1.0),
            sigma: zero,
            grid: TimeGrid::new(1.0, 1e-2).unwrap(),
        }
    }

    fn sbm() -> DMatrix<f64> {
        DMatrix::from_row_slice(3, 3, &[0.25, 0.5, 0.2, 0.5, 0.35, 0.7, 0.2, 0.7, 0.4])
    }

    #[test]
    fn zero_coupling_gives_linear_offset() {
        // −ṡ = −1, s(1) = 1  ⇒  s(t) = t
        let p = scalar_params();
        let w = DMatrix::zeros(3, 3);
        let mu = InitialMeans::Nodes(DMatrix::from_row_slice(1, 3, &[1.0, -2.0, 0.5]));
        let sol = solve_finite_fixedpoint(&p, &w, &mu, &FixedPointOptions::default()).unwrap();
        assert!(sol.converged());
        for (i, s) in sol.s.values().iter().enumerate() {
            let t = p.grid.time(i);
            assert!(s.iter().all(|v| (v - t).abs() < 1e-12));
        }
        assert!(sol.z.sup_norm() == 0.0);
        let ric = solve_finite_riccati(&p, &w, &mu).unwrap();
        assert!(ric.s.sup_distance(&sol.s) < 1e-8);
    }

    #[test]
    fn zero_source_converges_at_once() {
        let mut p = GmfgParams::benchmark();
        p.h = DMatrix::zeros(2, 2);
        p.eta = DVector::zeros(2);
        p.d = DMatrix::zeros(2, 2);
        let mu = InitialMeans::Nodes(DMatrix::from_row_slice(2, 3, &[1.0, 0.0, -1.0, 2.0, 1.0, 0.0]));
        let sol = solve_finite_fixedpoint(&p, &sbm(), &mu, &FixedPointOptions::default()).unwrap();
        assert!(sol.s.sup_norm() == 0.0);
        assert!(sol.diagnostics.iterations <= 2);
    }

    #[test]
    fn riccati_with_zero_data_is_zero() {
        let mut p = GmfgParams::benchmark();
        p.eta = DVector::zeros(2);
        let mu = InitialMeans::Nodes(DMatrix::zeros(2, 3));
        let sol = solve_finite_riccati(&p, &sbm(), &mu).unwrap();
        assert_eq!(sol.z.sup_norm(), 0.0);
        assert_eq!(sol.s.sup_norm(), 0.0);
    }

    #[test]
    fn routes_agree_on_small_sbm() {
        let p = GmfgParams::benchmark();
        let mu = InitialMeans::Nodes(DMatrix::from_row_slice(2, 3, &[1.0, -2.0, 0.5, 0.3, 2.5, -1.0]));
        let fp = solve_finite_fixedpoint(&p, &sbm(), &mu, &FixedPointOptions::default()).unwrap();
        let ric = solve_finite_riccati(&p, &sbm(), &mu).unwrap();
        assert!(fp.converged());
        assert!(fp.z.sup_distance(&ric.z) < 1e-6);
        assert!(fp.s.sup_distance(&ric.s) < 1e-6);
        assert!(fp.diagnostics.residual() < 1e-4);
        assert!(ric.diagnostics.residual() < 1e-4);
        assert!(fp.diagnostics.complement < 1e-12);
    }

    #[test]
    fn idempotent_fast_path() {
        let mut p = GmfgParams::benchmark();
        p.eta = DVector::zeros(2);
        let n = 4;
        let ones = DMatrix::from_element(n, n, 1.0);
        let mu = InitialMeans::Nodes(DMatrix::from_row_slice(2, 4, &[1.0, -2.0, 0.5, 3.0, 0.0, 1.0, -1.0, 2.0]));
        let fast = solve_idempotent(&p, &ones, &mu).unwrap();
        let fp = solve_finite_fixedpoint(&p, &ones, &mu, &FixedPointOptions::default()).unwrap();
        assert!(fast.z.sup_distance(&fp.z) < 1e-6);
        assert!(fast.s.sup_distance(&fp.s) < 1e-6);
        let ident = DMatrix::identity(n, n) * n as f64;
        assert!(solve_idempotent(&p, &ident, &mu).is_ok());
        let zero = InitialMeans::Nodes(DMatrix::zeros(2, 4));
        let z = solve_idempotent(&p, &ones, &zero).unwrap();
        assert_eq!(z.z.sup_norm(), 0.0);
        assert_eq!(z.s.sup_norm(), 0.0);
    }

    #[test]
    fn idempotent_preconditions() {
        let p = GmfgParams::benchmark();
        let mu = InitialMeans::Nodes(DMatrix::zeros(2, 3));
        let ones = DMatrix::from_element(3, 3, 1.0);
        assert!(matches!(solve_idempotent(&p, &ones, &mu), Err(Error::Hypothesis(_))));
        let mut p0 = p.clone();
        p0.eta = DVector::zeros(2);
        assert!(matches!(solve_idempotent(&p0, &sbm(), &mu), Err(Error::Precondition(_))));
    }
}
