//! Closed-loop Monte Carlo simulation of agent populations on finite graphs.

mod sweep;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::ode::{MatrixPath, Path};
use crate::solver::{BestResponseLaw, GmfgParams};
use crate::{rng, Error, Result};

pub use sweep::{
    run_instance, size_sweep, GraphFamily, InstanceOutcome, SizeMean, SweepConfig, SweepRow, SweepTable,
};

/// Agents per node: one size for every node or one entry per node.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ClusterSizes {
    Uniform(usize),
    PerNode(Vec<usize>),
}

impl ClusterSizes {
    pub fn resolve(&self, nodes: usize) -> Result<Vec<usize>> {
        let sizes = match self {
            ClusterSizes::Uniform(k) => vec![*k; nodes],
            ClusterSizes::PerNode(v) => {
                if v.len() != nodes {
                    return Err(Error::Size(format!("{} cluster sizes for {nodes} nodes", v.len())));
                }
                v.clone()
            }
        };
        if sizes.contains(&0) {
            return Err(Error::Size("every cluster needs at least one agent".into()));
        }
        Ok(sizes)
    }
}

/// Time stepping of the agent SDEs. Both use the same Gaussian increments
/// `Σ √dt 𝒩(0, I)`; `Heun` averages the drift at the start and at an
/// Euler predictor, which makes the noise-free limit second order.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SdeScheme {
    EulerMaruyama,
    #[default]
    Heun,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PopulationConfig {
    pub cluster_sizes: ClusterSizes,
    /// Node means are drawn uniformly from this interval, per component.
    pub initial_mean_range: (f64, f64),
    pub initial_std: f64,
    pub seed: u64,
    pub scheme: SdeScheme,
    pub record_paths: bool,
}

impl Default for PopulationConfig {
    fn default() -> Self {
        PopulationConfig {
            cluster_sizes: ClusterSizes::Uniform(4),
            initial_mean_range: (-3.0, 3.0),
            initial_std: 1.0,
            seed: 0,
            scheme: SdeScheme::Heun,
            record_paths: false,
        }
    }
}

impl PopulationConfig {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.initial_mean_range;
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(Error::Parameter(format!("bad initial mean range [{lo}, {hi}]")));
        }
        if !(self.initial_std >= 0.0 && self.initial_std.is_finite()) {
            return Err(Error::Parameter(format!("initial std {} must be nonnegative", self.initial_std)));
        }
        if let ClusterSizes::Uniform(0) = self.cluster_sizes {
            return Err(Error::Size("every cluster needs at least one agent".into()));
        }
        if let ClusterSizes::PerNode(v) = &self.cluster_sizes {
            if v.contains(&0) {
                return Err(Error::Size("every cluster needs at least one agent".into()));
            }
        }
        Ok(())
    }

    /// `n × N` node means drawn from the seed's first stream.
    pub fn sample_means(&self, dim: usize, nodes: usize) -> Result<DMatrix<f64>> {
        self.validate()?;
        let (lo, hi) = self.initial_mean_range;
        if lo == hi {
            return Ok(DMatrix::from_element(dim, nodes, lo));
        }
        let dist = Uniform::new(lo, hi).map_err(|e| Error::Parameter(e.to_string()))?;
        let mut r = rng::seeded(rng::derive_seed(self.seed, 0));
        Ok(DMatrix::from_fn(dim, nodes, |_, _| r.sample(dist)))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimulationResult {
    /// Empirical network average, one column per node.
    pub z_e: MatrixPath,
    pub z_ref: MatrixPath,
    pub rel_error: f64,
    /// `‖𝐌 − 𝐌^[N]‖_op`, when the caller knows the limit graphon.
    pub op_distance: Option<f64>,
    /// States of all agents, node by node, when recorded.
    pub agent_paths: Option<MatrixPath>,
    pub seed: u64,
}

/// Cluster means `x̄_ℓ` and network averages `z_q = (1/N) Σ_ℓ m_qℓ x̄_ℓ`.
/// Agents are stored node by node, `clusters[ℓ]` consecutive columns each.
pub fn empirical_average(
    states: &DMatrix<f64>,
    clusters: &[usize],
    w: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let nodes = clusters.len();
    if w.shape() != (nodes, nodes) {
        return Err(Error::Dimension(format!("{nodes} clusters for a {}×{} graph", w.nrows(), w.ncols())));
    }
    if clusters.iter().sum::<usize>() != states.ncols() {
        return Err(Error::Dimension("cluster sizes do not add up to the agent count".into()));
    }
    if clusters.contains(&0) {
        return Err(Error::Size("empty cluster".into()));
    }
    Ok(cluster_means(states, clusters) * w.transpose() / nodes as f64)
}

fn cluster_means(states: &DMatrix<f64>, clusters: &[usize]) -> DMatrix<f64> {
    let mut means = DMatrix::zeros(states.nrows(), clusters.len());
    let mut start = 0;
    for (l, &size) in clusters.iter().enumerate() {
        let sum: DVector<f64> = states.columns(start, size).column_sum();
        means.set_column(l, &(sum / size as f64));
        start += size;
    }
    means
}

/// `‖z_E − z‖_C / ‖z_E‖_C` with the spatial norm `((1/N) Σ_q |·|²)^{1/2}`.
pub fn relative_error(z_e: &MatrixPath, z_ref: &MatrixPath) -> Result<f64> {
    if z_e.grid() != z_ref.grid() || z_e.first().shape() != z_ref.first().shape() {
        return Err(Error::Dimension("paths differ in grid or node count".into()));
    }
    let nodes = z_e.first().ncols().max(1) as f64;
    let c_norm = |vals: &mut dyn Iterator<Item = f64>| vals.fold(0.0f64, f64::max);
    let denom = c_norm(&mut z_e.values().iter().map(|z| z.norm() / nodes.sqrt()));
    if denom == 0.0 {
        return Err(Error::Undefined("empirical average is identically zero".into()));
    }
    let num = c_norm(
        &mut z_e
            .values()
            .iter()
            .zip(z_ref.values())
            .map(|(a, b)| (a - b).norm() / nodes.sqrt()),
    );
    Ok(num / denom)
}

/// Simulates `dx = (Ax + Bu + D z_q) dt + Σ dw` for every agent of every
/// node under the feedback `law`, starting agents of node `q` at
/// `means[q] + initial_std · 𝒩(0, I)`, and compares the empirical network
/// average with `z_ref`.
pub fn simulate(
    params: &GmfgParams,
    w: &DMatrix<f64>,
    pop: &PopulationConfig,
    means: &DMatrix<f64>,
    law: &BestResponseLaw,
    z_ref: &MatrixPath,
) -> Result<SimulationResult> {
    params.validate()?;
    pop.validate()?;
    let nodes = w.nrows();
    let n = params.dim();
    let grid = params.grid;
    if w.ncols() != nodes || means.shape() != (n, nodes) || law.nodes() != nodes {
        return Err(Error::Dimension(format!(
            "graph has {nodes} nodes; means are {}×{}, law has {} nodes",
            means.nrows(),
            means.ncols(),
            law.nodes()
        )));
    }
    if (law.horizon() - grid.horizon()).abs() > 1e-12 {
        return Err(Error::Dimension("law horizon differs from the simulation grid".into()));
    }
    let clusters = pop.cluster_sizes.resolve(nodes)?;
    let owner: Vec<usize> = clusters
        .iter()
        .enumerate()
        .flat_map(|(q, &k)| std::iter::repeat_n(q, k))
        .collect();
    let agents = owner.len();
    let wbar = w.transpose() / nodes as f64;

    let mut r = rng::seeded(rng::derive_seed(pop.seed, 1));
    let mut x = DMatrix::from_fn(n, agents, |i, j| means[(i, owner[j])]);
    if pop.initial_std > 0.0 {
        for v in x.iter_mut() {
            *v += pop.initial_std * r.sample::<f64, _>(StandardNormal);
        }
    }

    let b_gain = &params.b * law.r_inv_bt();
    let drift = |t: f64, x: &DMatrix<f64>| -> DMatrix<f64> {
        let z = cluster_means(x, &clusters) * &wbar;
        let offsets = law.offsets_at(t);
        let pushed = &params.d * &z - &b_gain * offsets;
        let mut f = (&params.a - &b_gain * law.pi_at(t)) * x;
        for (j, &q) in owner.iter().enumerate() {
            let mut col = f.column_mut(j);
            col += pushed.column(q);
        }
        f
    };

    let noisy = params.sigma.amax() > 0.0;
    let dt = grid.dt();
    let sqrt_dt = dt.sqrt();
    let mut z_e = Vec::with_capacity(grid.len());
    let mut paths = pop.record_paths.then(|| Vec::with_capacity(grid.len()));
    z_e.push(cluster_means(&x, &clusters) * &wbar);
    if let Some(p) = paths.as_mut() {
        p.push(x.clone());
    }
    for step in 0..grid.steps() {
        let t = grid.time(step);
        let noise = if noisy {
            let xi = DMatrix::from_fn(n, agents, |_, _| r.sample::<f64, _>(StandardNormal));
            &params.sigma * xi * sqrt_dt
        } else {
            DMatrix::zeros(n, agents)
        };
        let f0 = drift(t, &x);
        x = match pop.scheme {
            SdeScheme::EulerMaruyama => &x + &f0 * dt + noise,
            SdeScheme::Heun => {
                let predictor = &x + &f0 * dt + &noise;
                let f1 = drift(grid.time(step + 1), &predictor);
                &x + (f0 + f1) * (0.5 * dt) + noise
            }
        };
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::BlowUp { step: step + 1 });
        }
        z_e.push(cluster_means(&x, &clusters) * &wbar);
        if let Some(p) = paths.as_mut() {
            p.push(x.clone());
        }
    }
    let z_e = Path::new(grid, z_e)?;
    let rel_error = relative_error(&z_e, z_ref)?;
    Ok(SimulationResult {
        z_e,
        z_ref: z_ref.clone(),
        rel_error,
        op_distance: None,
        agent_paths: paths.map(|p| Path::new(grid, p)).transpose()?,
        seed: pop.seed,
    })
}
