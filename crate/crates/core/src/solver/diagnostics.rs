//! The contraction constant `L₀` of the fixed-point map.

use nalgebra::DMatrix;

use super::{Coefficients, GmfgParams};
use crate::graphon::{SpectralDecomposition, DISTINCT_EIGENVALUE_TOL};
use crate::ode;
use crate::{Error, Result};

/// Number of time nodes the double integral is evaluated on by default.
pub const DEFAULT_L0_NODES: usize = 201;

/// `L₀` on about [`DEFAULT_L0_NODES`] nodes of the parameter grid.
pub fn compute_l0(params: &GmfgParams, decomp: &SpectralDecomposition) -> Result<f64> {
    let steps = params.grid.steps();
    let stride = steps.div_ceil(DEFAULT_L0_NODES - 1).max(1);
    compute_l0_with_stride(params, decomp, stride)
}

/// `L₀` with propagators integrated on the full grid and the time integrals
/// evaluated by the trapezoid rule on every `stride`-th node (the final node
/// is always included).
///
/// With `U₁ˡ` the propagator of `A_c + λ_ℓ D` and `U₂` that of `−A_cᵀ`,
///
/// ```text
/// L₀ = sup_t ∫₀ᵗ ∫_τᵀ max_ℓ ‖Φ₁ˡ(t,τ) λ_ℓ BR⁻¹Bᵀ Φ₂(τ,q) (QH − Π(q)D)‖ dq dτ
///    + sup_t ∫₀ᵗ max_ℓ ‖Φ₁ˡ(t,τ) λ_ℓ BR⁻¹Bᵀ Φ₂(τ,T) Q_T H‖ dτ
/// ```
///
/// where `Φ(t,τ) = U(t)U(τ)⁻¹` and `‖·‖` is the spectral norm.
pub fn compute_l0_with_stride(
    params: &GmfgParams,
    decomp: &SpectralDecomposition,
    stride: usize,
) -> Result<f64> {
    if stride == 0 {
        return Err(Error::Parameter("L0 stride must be positive".into()));
    }
    let lambdas: Vec<f64> = decomp
        .distinct_groups(DISTINCT_EIGENVALUE_TOL)
        .into_iter()
        .map(|g| g.lambda)
        .filter(|l| *l != 0.0)
        .collect();
    if lambdas.is_empty() {
        return Ok(0.0);
    }
    let co = Coefficients::new(params)?;
    if co.s.amax() == 0.0 {
        return Ok(0.0);
    }
    let n = co.n();
    let grid = co.grid;
    let mut idx: Vec<usize> = (0..=grid.steps()).step_by(stride).collect();
    if *idx.last().unwrap() != grid.steps() {
        idx.push(grid.steps());
    }
    let times: Vec<f64> = idx.iter().map(|&i| grid.time(i)).collect();
    let m = idx.len();

    let eye = DMatrix::<f64>::identity(n, n);
    let u2 = ode::rk4_forward(|t, u: &DMatrix<f64>| -co.ac(t).transpose() * u, eye.clone(), &grid)?;
    let u2_inv: Vec<DMatrix<f64>> = idx.iter().map(|&i| invert(u2.at(i))).collect::<Result<_>>()?;
    // Y(q) = U₂(q)⁻¹ (QH − Π(q)D), and the terminal factor U₂(T)⁻¹ Q_T H.
    let y: Vec<DMatrix<f64>> = idx
        .iter()
        .zip(&u2_inv)
        .map(|(&i, inv)| inv * co.hq(grid.time(i)))
        .collect();
    let y_t = &u2_inv[m - 1] * &co.qth;

    // Per eigenvalue: U₁(t) at the nodes and L(τ) = U₁(τ)⁻¹ λ S U₂(τ).
    let mut u1s = Vec::with_capacity(lambdas.len());
    let mut ls = Vec::with_capacity(lambdas.len());
    for &lambda in &lambdas {
        let u1 = ode::rk4_forward(
            |t, u: &DMatrix<f64>| (co.ac(t) + &co.d * lambda) * u,
            eye.clone(),
            &grid,
        )?;
        let at: Vec<DMatrix<f64>> = idx.iter().map(|&i| u1.at(i).clone()).collect();
        let l: Vec<DMatrix<f64>> = idx
            .iter()
            .zip(&at)
            .map(|(&i, u)| Ok(invert(u)? * (&co.s * lambda) * u2.at(i)))
            .collect::<Result<_>>()?;
        u1s.push(at);
        ls.push(l);
    }

    let mut sup = 0.0f64;
    for ti in 1..m {
        // g(τ) = ∫_τᵀ max_ℓ ‖·‖ dq and h(τ) = max_ℓ ‖·‖ of the terminal term.
        let mut inner = vec![0.0; ti + 1];
        let mut term = vec![0.0; ti + 1];
        for tau in 0..=ti {
            let kernels: Vec<DMatrix<f64>> = (0..lambdas.len()).map(|l| &u1s[l][ti] * &ls[l][tau]).collect();
            let vals: Vec<f64> = (tau..m)
                .map(|q| kernels.iter().map(|k| spectral_norm(&(k * &y[q]))).fold(0.0, f64::max))
                .collect();
            inner[tau] = trapezoid(&times[tau..], &vals);
            term[tau] = kernels.iter().map(|k| spectral_norm(&(k * &y_t))).fold(0.0, f64::max);
        }
        let total = trapezoid(&times[..=ti], &inner) + trapezoid(&times[..=ti], &term);
        sup = sup.max(total);
    }
    Ok(sup)
}

fn invert(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    m.clone()
        .try_inverse()
        .ok_or_else(|| Error::Divergence { context: "propagator inverse".into(), time: f64::NAN, norm: f64::INFINITY })
}

fn trapezoid(t: &[f64], v: &[f64]) -> f64 {
    t.windows(2).zip(v.windows(2)).map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] + v[1])).sum()
}

fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.shape() == (2, 2) {
        let (a, b, c, d) = (m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]);
        let fro = a * a + b * b + c * c + d * d;
        let det = a * d - b * c;
        let disc = (fro * fro - 4.0 * det * det).max(0.0).sqrt();
        return (0.5 * (fro + disc)).sqrt();
    }
    m.clone().svd(false, false).singular_values.max()
}
