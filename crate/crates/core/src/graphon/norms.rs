//! Operator, Hilbert–Schmidt and cut norms.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;

use super::{Graphon, GraphonRepr, QuadratureGrid, DEFAULT_GRID_POINTS};
use crate::{rng, Error, Result};

const POWER_MAX_ITER: usize = 200;
const POWER_REL_TOL: f64 = 1e-10;
/// Exact cut-norm enumeration is `O(2^N · N)`.
pub const CUT_EXACT_MAX_N: usize = 14;
const CUT_GREEDY_STARTS: usize = 32;
/// Largest refined partition used for step-versus-step comparisons.
const MAX_COMMON_REFINEMENT: usize = 4096;

/// Largest `|λ|` of a symmetric operator by power iteration.
///
/// Stops after 200 iterations or when the estimate changes by less than
/// `1e-10` relatively.
pub fn power_iteration_norm(op: &DMatrix<f64>) -> f64 {
    let n = op.nrows();
    if n == 0 {
        return 0.0;
    }
    // deterministic start with components along every smooth mode
    let mut v = DVector::from_fn(n, |i, _| 1.0 + 0.5 * ((i as f64 + 1.0) * 0.7).sin());
    v /= v.norm();
    let mut estimate = 0.0;
    for _ in 0..POWER_MAX_ITER {
        let w = op * &v;
        let next = w.norm();
        if next == 0.0 {
            return 0.0;
        }
        v = w / next;
        let done = (next - estimate).abs() <= POWER_REL_TOL * next;
        estimate = next;
        if done {
            break;
        }
    }
    estimate
}

fn step_size(g: &Graphon) -> Option<usize> {
    g.step_matrix().map(|w| w.nrows())
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Quadrature grid on which every step cell is a union of grid cells, if
/// that stays reasonably small; otherwise the default grid.
fn common_grid(base: usize, gs: &[&Graphon]) -> QuadratureGrid {
    let mut l = 1usize;
    for n in gs.iter().filter_map(|g| step_size(g)) {
        l = l / gcd(l, n) * n;
        if l > MAX_COMMON_REFINEMENT {
            return QuadratureGrid::new(base).expect("positive");
        }
    }
    let points = base.div_ceil(l) * l;
    QuadratureGrid::new(points).expect("positive")
}

/// `‖𝐌‖_op` with the default quadrature grid.
pub fn operator_norm(g: &Graphon) -> f64 {
    operator_norm_on(g, &QuadratureGrid::default())
}

pub fn operator_norm_on(g: &Graphon, grid: &QuadratureGrid) -> f64 {
    match g.repr() {
        GraphonRepr::Step(w) => {
            let n = w.nrows() as f64;
            SymmetricEigen::new(w.clone())
                .eigenvalues
                .iter()
                .fold(0.0f64, |m, l| m.max(l.abs()))
                / n
        }
        GraphonRepr::Spectral(d) => d.eigenvalues().iter().fold(0.0f64, |m, l| m.max(l.abs())),
        GraphonRepr::Analytic(_) => power_iteration_norm(&(g.kernel_matrix(grid) * grid.weight())),
    }
}

/// `‖𝐌‖₂ = (∫∫ 𝐌²)^{1/2}`.
pub fn l2_norm(g: &Graphon) -> f64 {
    l2_norm_on(g, &QuadratureGrid::default())
}

/// Exact for step and spectral graphons. Analytic kernels use the midpoint
/// rule on `n` and `2n` points combined by one Richardson step, which removes
/// the `O(h²)` error of kernels with a kink along the diagonal.
pub fn l2_norm_on(g: &Graphon, grid: &QuadratureGrid) -> f64 {
    match g.repr() {
        GraphonRepr::Step(w) => {
            let n = w.nrows() as f64;
            (w.iter().map(|v| v * v).sum::<f64>()).sqrt() / n
        }
        GraphonRepr::Spectral(d) => d.sum_of_squares().sqrt(),
        GraphonRepr::Analytic(k) => {
            let midpoint = |n: usize| {
                let xs = QuadratureGrid::new(n).expect("positive").midpoints();
                let mut acc = 0.0;
                for &x in &xs {
                    for &y in &xs {
                        let v = k.eval(x, y);
                        acc += v * v;
                    }
                }
                acc / (n * n) as f64
            };
            let n = grid.points();
            let coarse = midpoint(n);
            let fine = midpoint(2 * n);
            ((4.0 * fine - coarse) / 3.0).max(0.0).sqrt()
        }
    }
}

/// `‖𝐌₁ − 𝐌₂‖_op` on a common quadrature grid of at least the default size.
pub fn op_distance(g1: &Graphon, g2: &Graphon) -> f64 {
    op_distance_on(g1, g2, DEFAULT_GRID_POINTS)
}

/// Step cells are refined onto the grid: the grid size is rounded up to a
/// multiple of every step partition size involved.
pub fn op_distance_on(g1: &Graphon, g2: &Graphon, base_points: usize) -> f64 {
    if let (Some(w1), Some(w2)) = (g1.step_matrix(), g2.step_matrix()) {
        let (n1, n2) = (w1.nrows(), w2.nrows());
        let l = n1 / gcd(n1, n2) * n2;
        if l <= 512 {
            let diff = DMatrix::from_fn(l, l, |i, j| {
                w1[(i * n1 / l, j * n1 / l)] - w2[(i * n2 / l, j * n2 / l)]
            });
            let g = super::step_from_matrix(diff, f64::MAX).expect("symmetric difference");
            return operator_norm_on(&g, &QuadratureGrid::default());
        }
    }
    let grid = common_grid(base_points.max(1), &[g1, g2]);
    let diff = (g1.kernel_matrix(&grid) - g2.kernel_matrix(&grid)) * grid.weight();
    power_iteration_norm(&diff)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CutMode {
    /// Enumerates every subset pair; requires `N ≤ 14`.
    Exact,
    /// Alternating maximisation from 32 random starts; a lower bound.
    Greedy { seed: u64 },
}

/// For a fixed row-sum vector, `max_T |Σ_{j∈T} r_j|` and the maximising set.
fn best_response_set(r: &[f64]) -> (f64, Vec<bool>) {
    let pos: f64 = r.iter().filter(|v| **v > 0.0).sum();
    let neg: f64 = -r.iter().filter(|v| **v < 0.0).sum::<f64>();
    if pos >= neg {
        (pos, r.iter().map(|v| *v > 0.0).collect())
    } else {
        (neg, r.iter().map(|v| *v < 0.0).collect())
    }
}

/// Cut norm `sup_{S,T} |∫_{S×T} 𝐌|` of a step graphon over unions of cells.
pub fn cut_norm_step(g: &Graphon, mode: CutMode) -> Result<f64> {
    let w = g
        .step_matrix()
        .ok_or_else(|| Error::Validation("cut_norm_step needs a step graphon".into()))?;
    let n = w.nrows();
    let scale = (n * n) as f64;
    match mode {
        CutMode::Exact => {
            if n > CUT_EXACT_MAX_N {
                return Err(Error::Size(format!(
                    "exact cut norm supports N ≤ {CUT_EXACT_MAX_N}, got {n}"
                )));
            }
            // Gray-code walk over S keeps the column sums r_j = Σ_{i∈S} m_ij.
            let mut r = vec![0.0; n];
            let mut best = 0.0f64;
            let mut prev_gray = 0usize;
            for step in 1..(1usize << n) {
                let gray = step ^ (step >> 1);
                let flipped = (gray ^ prev_gray).trailing_zeros() as usize;
                let sign = if gray & (1 << flipped) != 0 { 1.0 } else { -1.0 };
                for (j, rj) in r.iter_mut().enumerate() {
                    *rj += sign * w[(flipped, j)];
                }
                prev_gray = gray;
                best = best.max(best_response_set(&r).0);
            }
            Ok(best / scale)
        }
        CutMode::Greedy { seed } => {
            let mut rng = rng::seeded(seed);
            let mut best = 0.0f64;
            for _ in 0..CUT_GREEDY_STARTS {
                let mut t: Vec<bool> = (0..n).map(|_| rng.random_bool(0.5)).collect();
                let mut value = -1.0;
                loop {
                    let col: Vec<f64> = (0..n)
                        .map(|i| (0..n).filter(|&j| t[j]).map(|j| w[(i, j)]).sum())
                        .collect();
                    let (_, s) = best_response_set(&col);
                    let row: Vec<f64> = (0..n)
                        .map(|j| (0..n).filter(|&i| s[i]).map(|i| w[(i, j)]).sum())
                        .collect();
                    let (v, t_next) = best_response_set(&row);
                    if v <= value + 1e-15 {
                        break;
                    }
                    value = v;
                    t = t_next;
                }
                best = best.max(value);
            }
            Ok(best / scale)
        }
    }
}
