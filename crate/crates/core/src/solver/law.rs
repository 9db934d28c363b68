//! Equilibrium feedback laws `u = −R⁻¹Bᵀ(Π_t x + s(t))`.

use nalgebra::{DMatrix, DVector};

use super::{check_time, GmfgParams, MeanFieldSolution};
use crate::ode::{self, Interpolant, MatrixPath};
use crate::{Error, Result};

/// Feedback gain `Π`, per-node offsets `s̄_q` and `R⁻¹Bᵀ`.
#[derive(Clone, Debug)]
pub struct BestResponseLaw {
    pi: Interpolant<DMatrix<f64>>,
    /// Column `q` is the offset used by agents of node `q`.
    offsets: Interpolant<DMatrix<f64>>,
    r_inv_bt: DMatrix<f64>,
    nodes: usize,
}

impl BestResponseLaw {
    pub fn new(
        pi: &MatrixPath,
        offsets: &MatrixPath,
        r_inv_bt: DMatrix<f64>,
    ) -> Result<Self> {
        if pi.grid() != offsets.grid() {
            return Err(Error::Dimension("Π and offsets live on different grids".into()));
        }
        let nodes = offsets.first().ncols();
        Ok(BestResponseLaw {
            pi: pi.interpolant(),
            offsets: offsets.interpolant(),
            r_inv_bt,
            nodes,
        })
    }

    /// Law for a network of `nodes` nodes. Spectral solutions are
    /// reconstructed at the cell midpoints `(q − ½)/N`.
    pub fn from_solution(sol: &MeanFieldSolution, params: &GmfgParams, nodes: usize) -> Result<Self> {
        let (_, s) = sol.on_cells(nodes)?;
        let (_, r_inv_bt) = ode::control_gains(&params.b, &params.r)?;
        BestResponseLaw::new(&sol.pi, &s, r_inv_bt)
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn horizon(&self) -> f64 {
        self.pi.grid().horizon()
    }

    pub fn r_inv_bt(&self) -> &DMatrix<f64> {
        &self.r_inv_bt
    }

    pub fn pi_at(&self, t: f64) -> DMatrix<f64> {
        self.pi.eval(t)
    }

    /// `n × N` matrix of node offsets at `t`.
    pub fn offsets_at(&self, t: f64) -> DMatrix<f64> {
        self.offsets.eval(t)
    }
}

/// `u = −R⁻¹Bᵀ(Π(t) x + s̄_node(t))`.
pub fn best_response(
    law: &BestResponseLaw,
    t: f64,
    x: &DVector<f64>,
    node: usize,
) -> Result<DVector<f64>> {
    check_time(law.pi.grid(), t)?;
    if node >= law.nodes {
        return Err(Error::Dimension(format!("node {node} of {}", law.nodes)));
    }
    let offset = law.offsets.eval(t).column(node).into_owned();
    Ok(-(&law.r_inv_bt * (law.pi.eval(t) * x + offset)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ode::{Path, TimeGrid};

    fn law(pi: f64, s: f64, b: f64) -> BestResponseLaw {
        let g = TimeGrid::new(1.0, 0.1).unwrap();
        let p = Path::constant(g, DMatrix::from_element(1, 1, pi));
        let o = Path::constant(g, DMatrix::from_element(1, 2, s));
        BestResponseLaw::new(&p, &o, DMatrix::from_element(1, 1, b)).unwrap()
    }

    #[test]
    fn scalar_arithmetic() {
        let u = best_response(&law(1.0, 2.0, 1.0), 0.5, &DVector::from_element(1, 3.0), 1).unwrap();
        assert_eq!(u[0], -5.0);
    }

    #[test]
    fn zero_gain_or_state_gives_zero_control() {
        let x = DVector::from_element(1, 3.0);
        assert_eq!(best_response(&law(1.0, 2.0, 0.0), 0.2, &x, 0).unwrap()[0], 0.0);
        let z = DVector::zeros(1);
        assert_eq!(best_response(&law(1.0, 0.0, 1.0), 0.2, &z, 0).unwrap()[0], 0.0);
    }

    #[test]
    fn time_outside_horizon_is_domain_error() {
        let x = DVector::zeros(1);
        assert!(matches!(
            best_response(&law(1.0, 0.0, 1.0), 1.5, &x, 0),
            Err(Error::Domain(_))
        ));
    }
}
