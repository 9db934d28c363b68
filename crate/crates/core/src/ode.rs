//! Fixed-grid RK4 integration, matrix Riccati solvers and cubic Hermite
//! interpolation of sampled paths.

use std::io::Write;

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

/// Paths whose norm exceeds this are reported as divergent.
pub const DIVERGENCE_THRESHOLD: f64 = 1e12;

/// Uniform time grid `0, dt, 2dt, …, T`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeGrid {
    horizon: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, dt: f64) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::Parameter(format!("horizon must be positive, got {horizon}")));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Parameter(format!("dt must be positive, got {dt}")));
        }
        let ratio = horizon / dt;
        let steps = ratio.round();
        if (ratio - steps).abs() > 1e-9 * ratio.max(1.0) || steps < 1.0 {
            return Err(Error::Parameter(format!(
                "T/dt = {ratio} is not a positive integer"
            )));
        }
        Ok(TimeGrid {
            horizon,
            steps: steps as usize,
        })
    }

    pub fn with_steps(horizon: f64, steps: usize) -> Result<Self> {
        if steps == 0 {
            return Err(Error::Parameter("grid needs at least one step".into()));
        }
        TimeGrid::new(horizon, horizon / steps as f64)
            .map(|g| TimeGrid { steps, ..g })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn len(&self) -> usize {
        self.steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn time(&self, i: usize) -> f64 {
        if i == self.steps {
            self.horizon
        } else {
            self.horizon * i as f64 / self.steps as f64
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.time(i)).collect()
    }

    /// Grid with `factor` times as many steps.
    pub fn refined(&self, factor: usize) -> TimeGrid {
        TimeGrid {
            horizon: self.horizon,
            steps: self.steps * factor.max(1),
        }
    }
}

/// Values that RK4 can integrate: flat real arrays with vector-space ops.
pub trait State: Clone + std::fmt::Debug {
    fn as_slice(&self) -> &[f64];
    fn as_mut_slice(&mut self) -> &mut [f64];
    /// Entries in row-major order, for CSV output.
    fn row_major(&self) -> Vec<f64> {
        self.as_slice().to_vec()
    }

    /// `self + a·other`.
    fn axpy(&self, a: f64, other: &Self) -> Self {
        let mut out = self.clone();
        for (o, v) in out.as_mut_slice().iter_mut().zip(other.as_slice()) {
            *o += a * v;
        }
        out
    }

    fn norm(&self) -> f64 {
        self.as_slice().iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    fn max_abs(&self) -> f64 {
        self.as_slice().iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    fn is_finite(&self) -> bool {
        self.as_slice().iter().all(|v| f64::is_finite(*v))
    }
}

impl State for f64 {
    fn as_slice(&self) -> &[f64] {
        std::slice::from_ref(self)
    }
    fn as_mut_slice(&mut self) -> &mut [f64] {
        std::slice::from_mut(self)
    }
}

impl State for DVector<f64> {
    fn as_slice(&self) -> &[f64] {
        nalgebra::Matrix::as_slice(self)
    }
    fn as_mut_slice(&mut self) -> &mut [f64] {
        nalgebra::Matrix::as_mut_slice(self)
    }
}

impl State for DMatrix<f64> {
    fn as_slice(&self) -> &[f64] {
        nalgebra::Matrix::as_slice(self)
    }
    fn as_mut_slice(&mut self) -> &mut [f64] {
        nalgebra::Matrix::as_mut_slice(self)
    }
    fn row_major(&self) -> Vec<f64> {
        self.transpose().as_slice().to_vec()
    }
}

/// Values sampled on a time grid, optionally with the time derivative at
/// each node.
#[derive(Clone, Debug, PartialEq)]
pub struct Path<T> {
    grid: TimeGrid,
    values: Vec<T>,
    slopes: Option<Vec<T>>,
}

pub type VectorPath = Path<DVector<f64>>;
pub type MatrixPath = Path<DMatrix<f64>>;

impl<T: State> Path<T> {
    pub fn new(grid: TimeGrid, values: Vec<T>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Dimension(format!(
                "{} values for a grid of {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Integration {
                node: i,
                time: grid.time(i),
            });
        }
        Ok(Path {
            grid,
            values,
            slopes: None,
        })
    }

    pub fn with_slopes(mut self, slopes: Vec<T>) -> Result<Self> {
        if slopes.len() != self.values.len() {
            return Err(Error::Dimension("slope count differs from value count".into()));
        }
        self.slopes = Some(slopes);
        Ok(self)
    }

    pub fn constant(grid: TimeGrid, value: T) -> Self {
        let n = grid.len();
        let mut zero = value.clone();
        zero.as_mut_slice().iter_mut().for_each(|v| *v = 0.0);
        Path {
            grid,
            values: vec![value; n],
            slopes: Some(vec![zero; n]),
        }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn slopes(&self) -> Option<&[T]> {
        self.slopes.as_deref()
    }

    pub fn at(&self, i: usize) -> &T {
        &self.values[i]
    }

    pub fn first(&self) -> &T {
        &self.values[0]
    }

    pub fn last(&self) -> &T {
        self.values.last().expect("nonempty path")
    }

    /// Applies `f` node-wise to values and, linearly, to slopes.
    pub fn map<U: State>(&self, f: impl Fn(&T) -> U) -> Path<U> {
        Path {
            grid: self.grid,
            values: self.values.iter().map(&f).collect(),
            slopes: self.slopes.as_ref().map(|s| s.iter().map(&f).collect()),
        }
    }

    /// `sup_t ‖x(t)‖_∞`.
    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.max_abs()))
    }

    /// `sup_t ‖x(t) − y(t)‖_∞` over nodes.
    pub fn sup_distance(&self, other: &Path<T>) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0f64, |m, (a, b)| m.max(a.axpy(-1.0, b).max_abs()))
    }

    pub fn interpolant(&self) -> Interpolant<T> {
        Interpolant::from_path(self)
    }

    /// Fourth-order centred difference of the path at interior node `i`
    /// (`2 ≤ i ≤ steps − 2`).
    pub fn centered_derivative(&self, i: usize) -> T {
        let h = self.grid.dt();
        let v = &self.values;
        v[i - 2]
            .axpy(-8.0, &v[i - 1])
            .axpy(8.0, &v[i + 1])
            .axpy(-1.0, &v[i + 2])
            .scaled(1.0 / (12.0 * h))
    }

    /// Writes `t` followed by the row-major entries of each node value.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let width = self.values[0].as_slice().len();
        let mut header = vec!["t".to_string()];
        header.extend((0..width).map(|k| format!("v{k}")));
        w.write_record(&header)?;
        for (i, v) in self.values.iter().enumerate() {
            let mut row = vec![self.grid.time(i).to_string()];
            row.extend(v.row_major().iter().map(|x| x.to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

trait Scaled {
    fn scaled(self, a: f64) -> Self;
}

impl<T: State> Scaled for T {
    fn scaled(mut self, a: f64) -> Self {
        self.as_mut_slice().iter_mut().for_each(|v| *v *= a);
        self
    }
}

/// Integration limits shared by the forward and backward drivers.
struct Guard<'a> {
    context: &'a str,
    limit: f64,
}

fn rk4_drive<T, F, P>(
    mut f: F,
    start: T,
    grid: &TimeGrid,
    backward: bool,
    guard: Guard<'_>,
    mut post: P,
) -> Result<Path<T>>
where
    T: State,
    F: FnMut(f64, &T) -> T,
    P: FnMut(&mut T),
{
    let n = grid.steps();
    let h = if backward { -grid.dt() } else { grid.dt() };
    let node = |k: usize| if backward { n - k } else { k };
    let mut values = Vec::with_capacity(n + 1);
    let mut slopes = Vec::with_capacity(n + 1);
    let mut x = start;
    post(&mut x);
    for k in 0..n {
        let i = node(k);
        let t = grid.time(i);
        let k1 = f(t, &x);
        if !k1.is_finite() {
            return Err(Error::Integration { node: i, time: t });
        }
        let k2 = f(t + 0.5 * h, &x.axpy(0.5 * h, &k1));
        let k3 = f(t + 0.5 * h, &x.axpy(0.5 * h, &k2));
        let k4 = f(t + h, &x.axpy(h, &k3));
        let mut next = x
            .axpy(h / 6.0, &k1)
            .axpy(h / 3.0, &k2)
            .axpy(h / 3.0, &k3)
            .axpy(h / 6.0, &k4);
        post(&mut next);
        let j = node(k + 1);
        if !next.is_finite() {
            return Err(Error::Integration {
                node: j,
                time: grid.time(j),
            });
        }
        let norm = next.max_abs();
        if norm > guard.limit {
            return Err(Error::Divergence {
                context: guard.context.to_string(),
                time: grid.time(j),
                norm,
            });
        }
        values.push(x);
        slopes.push(k1);
        x = next;
    }
    let i = node(n);
    let last_slope = f(grid.time(i), &x);
    if !last_slope.is_finite() {
        return Err(Error::Integration {
            node: i,
            time: grid.time(i),
        });
    }
    values.push(x);
    slopes.push(last_slope);
    if backward {
        values.reverse();
        slopes.reverse();
    }
    Ok(Path {
        grid: *grid,
        values,
        slopes: Some(slopes),
    })
}

/// Classical RK4 for `ẋ = f(t, x)` from `x(0) = x0`.
pub fn rk4_forward<T, F>(f: F, x0: T, grid: &TimeGrid) -> Result<Path<T>>
where
    T: State,
    F: FnMut(f64, &T) -> T,
{
    let guard = Guard {
        context: "forward integration",
        limit: f64::INFINITY,
    };
    rk4_drive(f, x0, grid, false, guard, |_| {})
}

/// RK4 for `ẋ = f(t, x)` backwards from `x(T) = xt`; the path is indexed on
/// the original grid.
pub fn rk4_backward<T, F>(f: F, xt: T, grid: &TimeGrid) -> Result<Path<T>>
where
    T: State,
    F: FnMut(f64, &T) -> T,
{
    let guard = Guard {
        context: "backward integration",
        limit: f64::INFINITY,
    };
    rk4_drive(f, xt, grid, true, guard, |_| {})
}

/// Piecewise cubic Hermite interpolation of a path.
#[derive(Clone, Debug)]
pub struct Interpolant<T> {
    grid: TimeGrid,
    values: Vec<T>,
    slopes: Vec<T>,
}

impl<T: State> Interpolant<T> {
    /// Uses the path's stored derivatives when present (exact ODE slopes),
    /// otherwise shape-preserving slopes.
    pub fn from_path(path: &Path<T>) -> Self {
        match &path.slopes {
            Some(slopes) => Interpolant {
                grid: path.grid,
                values: path.values.clone(),
                slopes: slopes.clone(),
            },
            None => Interpolant::pchip(path),
        }
    }

    /// Shape-preserving slopes: zero at local extrema, the harmonic mean of
    /// adjacent secants elsewhere, one-sided three-point formulas at the ends.
    pub fn pchip(path: &Path<T>) -> Self {
        let h = path.grid.dt();
        let vals = &path.values;
        let n = vals.len();
        let mut slopes = vals.to_vec();
        let width = vals[0].as_slice().len();
        for c in 0..width {
            let y: Vec<f64> = vals.iter().map(|v| v.as_slice()[c]).collect();
            let d: Vec<f64> = y.windows(2).map(|w| (w[1] - w[0]) / h).collect();
            let mut m = vec![0.0; n];
            for i in 1..n - 1 {
                if d[i - 1] * d[i] > 0.0 {
                    m[i] = 2.0 / (1.0 / d[i - 1] + 1.0 / d[i]);
                }
            }
            if n == 2 {
                m[0] = d[0];
                m[1] = d[0];
            } else {
                m[0] = pchip_end(d[0], d[1]);
                m[n - 1] = pchip_end(d[n - 2], d[n - 3]);
            }
            for (s, mi) in slopes.iter_mut().zip(m) {
                s.as_mut_slice()[c] = mi;
            }
        }
        Interpolant {
            grid: path.grid,
            values: vals.clone(),
            slopes,
        }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    /// Value at `t`, clamped to `[0, T]`.
    pub fn eval(&self, t: f64) -> T {
        let h = self.grid.dt();
        let n = self.grid.steps();
        let t = t.clamp(0.0, self.grid.horizon());
        let i = ((t / h).floor() as usize).min(n - 1);
        let s = (t - self.grid.time(i)) / h;
        if s <= 0.0 {
            return self.values[i].clone();
        }
        if s >= 1.0 {
            return self.values[i + 1].clone();
        }
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        let mut out = self.values[i].clone();
        let (y0, y1) = (self.values[i].as_slice(), self.values[i + 1].as_slice());
        let (m0, m1) = (self.slopes[i].as_slice(), self.slopes[i + 1].as_slice());
        for (k, o) in out.as_mut_slice().iter_mut().enumerate() {
            *o = h00 * y0[k] + h10 * h * m0[k] + h01 * y1[k] + h11 * h * m1[k];
        }
        out
    }
}

fn pchip_end(d0: f64, d1: f64) -> f64 {
    let m = (3.0 * d0 - d1) / 2.0;
    if m * d0 <= 0.0 {
        0.0
    } else if d0 * d1 <= 0.0 && m.abs() > 3.0 * d0.abs() {
        3.0 * d0
    } else {
        m
    }
}

/// `B R⁻¹ Bᵀ` and `R⁻¹ Bᵀ`, with `R` required symmetric positive definite.
pub fn control_gains(b: &DMatrix<f64>, r: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if r.nrows() != r.ncols() || r.nrows() != b.ncols() {
        return Err(Error::Dimension(format!(
            "R is {}×{} but B has {} columns",
            r.nrows(),
            r.ncols(),
            b.ncols()
        )));
    }
    let chol = r
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Parameter("R must be symmetric positive definite".into()))?;
    let r_inv_bt = chol.solve(&b.transpose());
    Ok((b * &r_inv_bt, r_inv_bt))
}

fn check_square(name: &str, m: &DMatrix<f64>, n: usize) -> Result<()> {
    if m.nrows() != n || m.ncols() != n {
        return Err(Error::Dimension(format!(
            "{name} is {}×{}, expected {n}×{n}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

/// `−Π̇ = AᵀΠ + ΠA − ΠBR⁻¹BᵀΠ + Q`, `Π(T) = Q_T`, integrated backwards with
/// the iterate symmetrised after every step.
pub fn solve_symmetric_riccati(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    q_t: &DMatrix<f64>,
    grid: &TimeGrid,
) -> Result<MatrixPath> {
    let n = a.nrows();
    check_square("A", a, n)?;
    check_square("Q", q, n)?;
    check_square("Q_T", q_t, n)?;
    if b.nrows() != n {
        return Err(Error::Dimension(format!("B has {} rows, expected {n}", b.nrows())));
    }
    let (s, _) = control_gains(b, r)?;
    let at = a.transpose();
    let rhs = |_: f64, p: &DMatrix<f64>| -(&at * p + p * a - p * &s * p + q);
    let guard = Guard {
        context: "symmetric Riccati equation",
        limit: DIVERGENCE_THRESHOLD,
    };
    rk4_drive(rhs, q_t.clone(), grid, true, guard, |p| {
        let sym = (&*p + p.transpose()) * 0.5;
        *p = sym;
    })
}

/// Coefficients of `−ȯ = Fᵀo + oG − oSo − Hq` at one instant.
#[derive(Clone, Debug)]
pub struct RiccatiCoeffs {
    pub f: DMatrix<f64>,
    pub g: DMatrix<f64>,
    pub s: DMatrix<f64>,
    pub hq: DMatrix<f64>,
}

/// Non-symmetric Riccati equation `−ȯ = F(t)ᵀo + o G(t) − o S(t) o − Hq(t)`
/// integrated backwards from `o(T) = o_T`.
pub fn solve_nonsymmetric_riccati<C>(
    coeffs: C,
    o_t: &DMatrix<f64>,
    grid: &TimeGrid,
    context: &str,
) -> Result<MatrixPath>
where
    C: Fn(f64) -> RiccatiCoeffs,
{
    let probe = coeffs(grid.horizon());
    let (m, p) = o_t.shape();
    if probe.f.shape() != (m, m)
        || probe.g.shape() != (p, p)
        || probe.s.shape() != (p, m)
        || probe.hq.shape() != (m, p)
    {
        return Err(Error::Dimension(format!(
            "Riccati coefficients do not match a {m}×{p} unknown"
        )));
    }
    let rhs = |t: f64, o: &DMatrix<f64>| {
        let c = coeffs(t);
        let so = &c.s * o;
        -(c.f.tr_mul(o) + o * &c.g - o * so - c.hq)
    };
    let guard = Guard {
        context,
        limit: DIVERGENCE_THRESHOLD,
    };
    rk4_drive(rhs, o_t.clone(), grid, true, guard, |_| {})
}

/// Largest Frobenius norm of the Riccati residual at interior nodes, using
/// the centred-difference derivative of the path.
pub fn symmetric_riccati_residual(
    pi: &MatrixPath,
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Result<f64> {
    let (s, _) = control_gains(b, r)?;
    let steps = pi.grid().steps();
    let mut worst = 0.0f64;
    for i in 2..steps.saturating_sub(1) {
        let p = pi.at(i);
        let res = pi.centered_derivative(i) + a.transpose() * p + p * a - p * &s * p + q;
        worst = worst.max(res.norm());
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(dt: f64) -> TimeGrid {
        TimeGrid::new(1.0, dt).unwrap()
    }

    #[test]
    fn grid_rejects_non_integer_ratio() {
        assert!(TimeGrid::new(1.0, 0.3).is_err());
        assert!(TimeGrid::new(1.0, 0.0).is_err());
        let g = grid(1e-3);
        assert_eq!(g.len(), 1001);
        assert_eq!(g.time(1000), 1.0);
    }

    #[test]
    fn zero_field_is_constant() {
        let v = DVector::from_vec(vec![1.0, -2.0]);
        let p = rk4_forward(|_, x: &DVector<f64>| x * 0.0, v.clone(), &grid(0.1)).unwrap();
        assert!(p.values().iter().all(|x| *x == v));
        let p = rk4_backward(|_, x: &DVector<f64>| x * 0.0, v.clone(), &grid(0.1)).unwrap();
        assert!(p.values().iter().all(|x| *x == v));
    }

    #[test]
    fn exponential_growth() {
        let p = rk4_forward(|_, x: &f64| *x, 1.0, &grid(1e-3)).unwrap();
        assert!((p.last() - std::f64::consts::E).abs() < 1e-9);
    }

    #[test]
    fn rotation_conserves_norm() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 10.0, -10.0, 0.0]);
        let x0 = DVector::from_vec(vec![1.0, 0.0]);
        let p = rk4_forward(|_, x: &DVector<f64>| &a * x, x0, &grid(1e-3)).unwrap();
        for v in p.values() {
            assert!((v.norm() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn backward_linear_and_tanh() {
        let p = rk4_backward(|_, _: &f64| 1.0, 1.0, &grid(1e-3)).unwrap();
        for (i, v) in p.values().iter().enumerate() {
            assert!((v - p.grid().time(i)).abs() < 1e-12);
        }
        // −Π̇ = −Π² + 1  ⇒  Π̇ = Π² − 1
        let p = rk4_backward(|_, x: &f64| x * x - 1.0, 0.0, &grid(1e-3)).unwrap();
        assert!((p.first() - 1f64.tanh()).abs() < 1e-8);
    }

    #[test]
    fn backward_is_reversed_forward() {
        let g = grid(1e-2);
        let f = |t: f64, x: &f64| (3.0 * t).sin() * x - x * x;
        let back = rk4_backward(f, 0.3, &g).unwrap();
        let fwd = rk4_forward(|tau: f64, y: &f64| -f(1.0 - tau, y), 0.3, &g).unwrap();
        for i in 0..g.len() {
            assert!((back.at(i) - fwd.at(g.steps() - i)).abs() < 1e-14);
        }
    }

    #[test]
    fn self_convergence_order() {
        let a = DMatrix::from_row_slice(2, 2, &[-0.5, 3.0, -3.0, -0.2]);
        let x0 = DVector::from_vec(vec![1.0, 0.5]);
        let end = |dt: f64| rk4_forward(|_, x: &DVector<f64>| &a * x, x0.clone(), &grid(dt)).unwrap();
        let exact = end(1e-4).last().clone();
        let e1 = (end(0.05).last() - &exact).norm();
        let e2 = (end(0.025).last() - &exact).norm();
        assert!(e1 / e2 >= 8.0, "{}", e1 / e2);
    }

    #[test]
    fn lyapunov_case_is_linear() {
        let z = DMatrix::zeros(2, 2);
        let q = DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 0.5]);
        let qt = DMatrix::identity(2, 2);
        let r = DMatrix::identity(2, 2);
        let g = grid(1e-2);
        let pi = solve_symmetric_riccati(&z, &z, &q, &r, &qt, &g).unwrap();
        for (i, p) in pi.values().iter().enumerate() {
            let expect = &qt + &q * (1.0 - g.time(i));
            assert!((p - expect).amax() < 1e-10);
        }
    }

    #[test]
    fn scalar_riccati_tanh() {
        let one = DMatrix::from_element(1, 1, 1.0);
        let zero = DMatrix::zeros(1, 1);
        let pi = solve_symmetric_riccati(&zero, &one, &one, &one, &zero, &grid(1e-3)).unwrap();
        assert!((pi.first()[(0, 0)] - 1f64.tanh()).abs() < 1e-8);
    }

    #[test]
    fn singular_r_is_parameter_error() {
        let i = DMatrix::identity(2, 2);
        let r = DMatrix::zeros(2, 2);
        let e = solve_symmetric_riccati(&i, &i, &i, &r, &i, &grid(0.1));
        assert!(matches!(e, Err(Error::Parameter(_))));
    }

    #[test]
    fn benchmark_parameters_give_psd_path_with_small_residual() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 10.0, -10.0, 0.0]);
        let i = DMatrix::identity(2, 2);
        let q = &i * 0.5;
        let pi = solve_symmetric_riccati(&a, &i, &q, &i, &i, &grid(1e-3)).unwrap();
        for p in pi.values() {
            assert_eq!(p, &p.transpose());
            assert!(p.clone().symmetric_eigenvalues().min() >= -1e-12);
        }
        let res = symmetric_riccati_residual(&pi, &a, &i, &q, &i).unwrap();
        assert!(res < 1e-4, "{res}");
    }

    #[test]
    fn blow_up_is_divergence_error() {
        // −ȯ = −o² ⇒ o(t) = 1/(t − T + 1/o_T) escapes for o_T large negative
        let c = |_: f64| RiccatiCoeffs {
            f: DMatrix::zeros(1, 1),
            g: DMatrix::zeros(1, 1),
            s: DMatrix::from_element(1, 1, 1.0),
            hq: DMatrix::zeros(1, 1),
        };
        let r = solve_nonsymmetric_riccati(c, &DMatrix::from_element(1, 1, -2.0), &grid(1e-3), "o");
        assert!(matches!(r, Err(Error::Divergence { .. }) | Err(Error::Integration { .. })));
    }

    #[test]
    fn nonsymmetric_linear_case() {
        let hq = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, -0.5, 0.0]);
        let c = |_: f64| RiccatiCoeffs {
            f: DMatrix::zeros(2, 2),
            g: DMatrix::zeros(2, 2),
            s: DMatrix::zeros(2, 2),
            hq: hq.clone(),
        };
        let ot = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 3.0, 0.0]);
        let g = grid(1e-2);
        let o = solve_nonsymmetric_riccati(c, &ot, &g, "o").unwrap();
        // −ȯ = −Hq, so o runs linearly from o_T with slope Hq
        for (i, v) in o.values().iter().enumerate() {
            assert!((v - (&ot - &hq * (1.0 - g.time(i)))).amax() < 1e-12);
        }
    }

    #[test]
    fn nonsymmetric_self_convergence() {
        let c = |t: f64| RiccatiCoeffs {
            f: DMatrix::from_element(1, 1, 0.3),
            g: DMatrix::from_element(1, 1, -0.1 + t),
            s: DMatrix::from_element(1, 1, 0.8),
            hq: DMatrix::from_element(1, 1, 1.0),
        };
        let ot = DMatrix::from_element(1, 1, 0.5);
        let coarse = solve_nonsymmetric_riccati(c, &ot, &grid(1e-2), "o").unwrap();
        let fine = solve_nonsymmetric_riccati(c, &ot, &grid(1e-3), "o").unwrap();
        assert!((coarse.first() - fine.first()).amax() < 1e-8);
    }

    #[test]
    fn interpolants() {
        let g = grid(0.1);
        let line = Path::new(g, g.nodes().iter().map(|t| 2.0 * t + 1.0).collect()).unwrap();
        let it = Interpolant::pchip(&line);
        for i in 0..10 {
            let t = (i as f64 + 0.5) * 0.1;
            assert!((it.eval(t) - (2.0 * t + 1.0)).abs() < 1e-13);
        }
        let mono = Path::new(g, g.nodes().iter().map(|t| (t * 6.0).floor()).collect()).unwrap();
        let it = Interpolant::pchip(&mono);
        let mut prev = f64::NEG_INFINITY;
        for k in 0..=1000 {
            let v = it.eval(k as f64 / 1000.0);
            assert!(v >= prev - 1e-15);
            prev = v;
        }
        let g = grid(1e-2);
        let sin = Path::new(g, g.nodes().iter().map(|t| t.sin()).collect()).unwrap();
        let it = Interpolant::pchip(&sin);
        let worst = (0..=10_000)
            .map(|k| {
                let t = k as f64 / 10_000.0;
                (it.eval(t) - t.sin()).abs()
            })
            .fold(0.0, f64::max);
        assert!(worst <= 1e-6, "{worst}");
    }

    #[test]
    fn ode_slopes_give_fourth_order_dense_output() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 10.0, -10.0, 0.0]);
        let x0 = DVector::from_vec(vec![1.0, 0.0]);
        let g = grid(1e-3);
        let p = rk4_forward(|_, x: &DVector<f64>| &a * x, x0, &g).unwrap();
        let it = p.interpolant();
        let t = 0.4567;
        let v = it.eval(t);
        assert!((v[0] - (10.0 * t).cos()).abs() < 1e-9);
        assert_eq!(it.eval(g.time(17)), *p.at(17));
    }

    #[test]
    fn csv_layout() {
        let g = TimeGrid::with_steps(1.0, 2).unwrap();
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let p = Path::constant(g, m);
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("t,v0,v1,v2,v3"));
        assert_eq!(lines.next(), Some("0,1,2,3,4"));
    }
}
