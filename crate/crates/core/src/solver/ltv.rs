//! Linear time-varying graphon systems
//! `ẋ = (A(t)𝕀 + D(t)𝐌) x + (B(t)𝕀 + E(t)𝐌) u`.

use nalgebra::DMatrix;

use crate::graphon::{Graphon, GraphonRepr};
use crate::ode::{self, Interpolant, MatrixPath};
use crate::{Error, Result};

/// `A, D` are `n × n` and `B, E` are `n × m`, all on one grid.
#[derive(Clone, Debug)]
pub struct LtvCoefficients {
    pub a: MatrixPath,
    pub b: MatrixPath,
    pub d: MatrixPath,
    pub e: MatrixPath,
}

struct Interpolated {
    a: Interpolant<DMatrix<f64>>,
    b: Interpolant<DMatrix<f64>>,
    d: Interpolant<DMatrix<f64>>,
    e: Interpolant<DMatrix<f64>>,
    u: Interpolant<DMatrix<f64>>,
}

/// Integrates the system with state and input given as step functions on
/// a uniform partition (columns of `x0` and of `u` are cells) and returns
/// the state at the cell midpoints.
///
/// Step graphons use the `nN`-dimensional network form and need the
/// partition to match the graphon's; spectral graphons evolve one
/// coefficient per eigendirection plus the pointwise complement.
pub fn ltv_graphon_evolve(
    coeffs: &LtvCoefficients,
    g: &Graphon,
    x0: &DMatrix<f64>,
    u: &MatrixPath,
) -> Result<MatrixPath> {
    let grid = *coeffs.a.grid();
    let (n, cells) = x0.shape();
    let m = coeffs.b.first().ncols();
    if [coeffs.b.grid(), coeffs.d.grid(), coeffs.e.grid(), u.grid()]
        .iter()
        .any(|g| **g != grid)
    {
        return Err(Error::Dimension("coefficient and input paths use different grids".into()));
    }
    if coeffs.a.first().shape() != (n, n)
        || coeffs.d.first().shape() != (n, n)
        || coeffs.b.first().shape() != (n, m)
        || coeffs.e.first().shape() != (n, m)
        || u.first().shape() != (m, cells)
    {
        return Err(Error::Dimension("inconsistent LTV system dimensions".into()));
    }
    let it = Interpolated {
        a: coeffs.a.interpolant(),
        b: coeffs.b.interpolant(),
        d: coeffs.d.interpolant(),
        e: coeffs.e.interpolant(),
        u: u.interpolant(),
    };
    match g.repr() {
        GraphonRepr::Step(w) => {
            if w.nrows() != cells {
                return Err(Error::Dimension(format!(
                    "state has {cells} cells, graphon has {}",
                    w.nrows()
                )));
            }
            let wbar = w / cells as f64;
            ode::rk4_forward(
                |t, x: &DMatrix<f64>| {
                    let ut = it.u.eval(t);
                    it.a.eval(t) * x
                        + it.d.eval(t) * x * &wbar
                        + it.b.eval(t) * &ut
                        + it.e.eval(t) * ut * &wbar
                },
                x0.clone(),
                &grid,
            )
        }
        GraphonRepr::Spectral(decomp) => {
            let k = decomp.len();
            let h = 1.0 / cells as f64;
            // gather[q, ℓ] = ∫_{cell q} f_ℓ,  spread[q, ℓ] = f_ℓ(θ_q)
            let gather = DMatrix::from_fn(cells, k, |q, l| {
                decomp.pairs()[l].function.integral(q as f64 * h, (q + 1) as f64 * h)
            });
            let spread = DMatrix::from_fn(cells, k, |q, l| {
                decomp.pairs()[l].function.eval((q as f64 + 0.5) * h)
            });
            let lambda = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(decomp.eigenvalues()));
            let xi0 = x0 * &gather;
            let perp0 = x0 - &xi0 * spread.transpose();
            let mut start = DMatrix::zeros(n, k + cells);
            start.columns_mut(0, k).copy_from(&xi0);
            start.columns_mut(k, cells).copy_from(&perp0);
            let path = ode::rk4_forward(
                |t, x: &DMatrix<f64>| {
                    let ut = it.u.eval(t);
                    let u_l = &ut * &gather;
                    let u_perp = &ut - &u_l * spread.transpose();
                    let (a, b) = (it.a.eval(t), it.b.eval(t));
                    let xi = x.columns(0, k);
                    let perp = x.columns(k, cells);
                    let mut out = DMatrix::zeros(n, k + cells);
                    out.columns_mut(0, k).copy_from(
                        &(&a * xi + it.d.eval(t) * xi * &lambda + &b * &u_l + it.e.eval(t) * &u_l * &lambda),
                    );
                    out.columns_mut(k, cells).copy_from(&(&a * perp + &b * u_perp));
                    out
                },
                start,
                &grid,
            )?;
            let assemble = |x: &DMatrix<f64>| x.columns(0, k) * spread.transpose() + x.columns(k, cells);
            Ok(path.map(assemble))
        }
        GraphonRepr::Analytic(_) => Err(Error::Validation(
            "LTV evolution needs a step or spectral graphon".into(),
        )),
    }
}
