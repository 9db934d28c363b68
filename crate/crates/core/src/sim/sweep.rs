//! Size sweeps: sample graphs of growing size from one family, solve the
//! limit problem once, and compare simulated network averages against it.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{simulate, PopulationConfig, SimulationResult};
use crate::graphon::{
    fit_spectral_from_grid, generate_uniform_attachment, AnalyticKernel, op_distance, sample_simple_graph, step_from_matrix,
    ua_eigenpairs, FitBasis, Graphon, GraphonRepr, SampledGraph, SpectralDecomposition,
};
use crate::solver::{
    compute_l0, BestResponseLaw, FixedPointOptions, GmfgParams, InitialMeans, MeanFieldSolution, SpectralMethod,
    SpectralPlan,
};
use crate::{rng, Error, Result};

/// Where graphs come from and what they converge to.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum GraphFamily {
    /// Uniform attachment graphs; limit `1 − max(x, y)`.
    Ua,
    /// Stochastic block model with equal-probability blocks; `block` rows.
    Sbm { block: Vec<Vec<f64>> },
    /// Simple graphs sampled from an arbitrary graphon.
    Custom { graphon: Graphon },
}

impl GraphFamily {
    /// The three-block model `[[0.25, 0.5, 0.2], [0.5, 0.35, 0.7], [0.2, 0.7, 0.4]]`.
    pub fn sbm_benchmark() -> Self {
        GraphFamily::Sbm {
            block: vec![vec![0.25, 0.5, 0.2], vec![0.5, 0.35, 0.7], vec![0.2, 0.7, 0.4]],
        }
    }

    /// Uniform attachment for the analytic `1 − max(x, y)` kernel, block
    /// models for step graphons, direct sampling otherwise.
    pub fn from_graphon(g: &Graphon) -> Self {
        match g.repr() {
            GraphonRepr::Analytic(AnalyticKernel::UniformAttachment) => GraphFamily::Ua,
            GraphonRepr::Step(w) => GraphFamily::Sbm {
                block: w.row_iter().map(|r| r.iter().copied().collect()).collect(),
            },
            _ => GraphFamily::Custom { graphon: g.clone() },
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            GraphFamily::Ua => "ua",
            GraphFamily::Sbm { .. } => "sbm",
            GraphFamily::Custom { .. } => "custom",
        }
    }

    pub fn limit(&self) -> Result<Graphon> {
        match self {
            GraphFamily::Ua => Ok(Graphon::uniform_attachment()),
            GraphFamily::Sbm { block } => {
                let d = block.len();
                if block.iter().any(|r| r.len() != d) {
                    return Err(Error::Dimension("block matrix must be square".into()));
                }
                step_from_matrix(DMatrix::from_fn(d, d, |i, j| block[i][j]), 1.0)
            }
            GraphFamily::Custom { graphon } => Ok(graphon.clone()),
        }
    }

    /// Rank-`rank` decomposition of the limit (capped at the block count for
    /// step limits). Graphons without known eigenpairs are fitted on a
    /// midpoint grid.
    pub fn decomposition(&self, rank: usize) -> Result<SpectralDecomposition> {
        if rank == 0 {
            return Err(Error::Size("rank must be positive".into()));
        }
        let g = self.limit()?;
        if let GraphonRepr::Step(w) = g.repr() {
            return crate::graphon::spectral_of_step(&g, rank.min(w.nrows()));
        }
        if matches!(self, GraphFamily::Ua) {
            return Ok(ua_eigenpairs(rank));
        }
        match g.truncated_spectrum(rank) {
            Some(d) => Ok(d),
            None => fit_spectral_from_grid(&g, (4 * rank).max(300), rank, FitBasis::default()),
        }
    }

    /// A graph on `nodes` nodes, labelled so that node `q` sits near `(q − ½)/N`.
    pub fn sample(&self, nodes: usize, seed: u64) -> Result<SampledGraph> {
        match self {
            GraphFamily::Ua => generate_uniform_attachment(nodes, seed),
            _ => Ok(sample_simple_graph(&self.limit()?, nodes, seed)?.sorted_by_latents()),
        }
    }
}

#[derive(Clone, Debug)]
pub struct SweepConfig {
    pub family: GraphFamily,
    /// Strictly ascending.
    pub sizes: Vec<usize>,
    pub runs: usize,
    pub rank: usize,
    pub population: PopulationConfig,
    pub seed: u64,
    pub method: SpectralMethod,
    pub options: FixedPointOptions,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub family: String,
    #[serde(rename = "N")]
    pub nodes: usize,
    pub seed: u64,
    pub rel_error: f64,
    pub op_distance: f64,
    pub converged: bool,
    #[serde(rename = "L0")]
    pub l0: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SizeMean {
    #[serde(rename = "N")]
    pub nodes: usize,
    pub runs: usize,
    pub rel_error: f64,
    pub op_distance: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    pub means: Vec<SizeMean>,
    pub l0: f64,
}

impl SweepTable {
    /// Columns `family,N,seed,rel_error,op_distance,converged,L0`.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for row in &self.rows {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// One simulated instance against the limit solution.
#[derive(Clone, Debug)]
pub struct InstanceOutcome {
    pub graph: SampledGraph,
    pub means: DMatrix<f64>,
    pub solution: MeanFieldSolution,
    pub simulation: SimulationResult,
}

/// Samples a graph of `nodes` nodes and initial node means from `pop.seed`,
/// solves the limit problem for those means and simulates the population.
pub fn run_instance(
    params: &GmfgParams,
    plan: &SpectralPlan,
    family: &GraphFamily,
    nodes: usize,
    pop: &PopulationConfig,
    opts: &FixedPointOptions,
) -> Result<InstanceOutcome> {
    let graph = family.sample(nodes, rng::derive_seed(pop.seed, 2))?;
    let means = pop.sample_means(params.dim(), nodes)?;
    let solution = plan.solve(&InitialMeans::Nodes(means.clone()), opts)?;
    let law = BestResponseLaw::from_solution(&solution, params, nodes)?;
    let (z_ref, _) = solution.on_cells(nodes)?;
    let mut simulation = simulate(params, &graph.adjacency, pop, &means, &law, &z_ref)?;
    simulation.op_distance = Some(op_distance(&graph.to_step_graphon()?, &family.limit()?));
    Ok(InstanceOutcome {
        graph,
        means,
        solution,
        simulation,
    })
}

/// Runs `runs` instances per size in parallel. Run `r` of size index `i`
/// uses seed `derive_seed(seed, i·2³² + r)`; rows are ordered by size, then
/// run.
pub fn size_sweep(params: &GmfgParams, cfg: &SweepConfig) -> Result<SweepTable> {
    if cfg.sizes.is_empty() || cfg.sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Parameter("sweep sizes must be nonempty and strictly ascending".into()));
    }
    if cfg.runs == 0 {
        return Err(Error::Parameter("at least one run per size".into()));
    }
    let decomp = cfg.family.decomposition(cfg.rank)?;
    let plan = SpectralPlan::new(params, &decomp, cfg.method)?;
    let l0 = compute_l0(params, &decomp)?;
    let jobs: Vec<(usize, u64)> = cfg
        .sizes
        .iter()
        .enumerate()
        .flat_map(|(i, &n)| (0..cfg.runs as u64).map(move |r| (n, rng::derive_seed(cfg.seed, ((i as u64) << 32) | r))))
        .collect();
    let rows = jobs
        .par_iter()
        .map(|&(nodes, seed)| {
            let pop = PopulationConfig {
                seed,
                record_paths: false,
                ..cfg.population.clone()
            };
            let out = run_instance(params, &plan, &cfg.family, nodes, &pop, &cfg.options)?;
            Ok(SweepRow {
                family: cfg.family.name().to_string(),
                nodes,
                seed,
                rel_error: out.simulation.rel_error,
                op_distance: out.simulation.op_distance.unwrap_or(f64::NAN),
                converged: out.solution.converged(),
                l0,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let means = cfg
        .sizes
        .iter()
        .map(|&n| {
            let of: Vec<&SweepRow> = rows.iter().filter(|r| r.nodes == n).collect();
            let k = of.len() as f64;
            SizeMean {
                nodes: n,
                runs: of.len(),
                rel_error: of.iter().map(|r| r.rel_error).sum::<f64>() / k,
                op_distance: of.iter().map(|r| r.op_distance).sum::<f64>() / k,
            }
        })
        .collect();
    Ok(SweepTable { rows, means, l0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphon::{EigenFunction, EigenPair};
    use crate::ode::TimeGrid;

    fn quick_params() -> GmfgParams {
        let mut p = GmfgParams::benchmark();
        p.grid = TimeGrid::new(1.0, 1e-2).unwrap();
        p
    }

    #[test]
    fn rank_one_noise_free_instance_is_exact() {
        // The complete graph with loops is the exact step embedding of 𝐌 ≡ 1.
        let mut p = GmfgParams::benchmark();
        p.sigma = DMatrix::zeros(2, 2);
        let nodes = 12;
        let w = DMatrix::from_element(nodes, nodes, 1.0);
        let decomp = SpectralDecomposition::new(vec![EigenPair {
            lambda: 1.0,
            function: EigenFunction::constant(1.0),
        }])
        .unwrap();
        let plan = SpectralPlan::new(&p, &decomp, SpectralMethod::Riccati).unwrap();
        let pop = PopulationConfig {
            initial_std: 0.0,
            seed: 3,
            ..Default::default()
        };
        let means = pop.sample_means(2, nodes).unwrap();
        let sol = plan.solve(&InitialMeans::Nodes(means.clone()), &FixedPointOptions::default()).unwrap();
        let law = BestResponseLaw::from_solution(&sol, &p, nodes).unwrap();
        let (z_ref, _) = sol.on_cells(nodes).unwrap();
        let res = simulate(&p, &w, &pop, &means, &law, &z_ref).unwrap();
        assert!(res.rel_error <= 1e-3, "{}", res.rel_error);
        let step = step_from_matrix(w, 1.0).unwrap();
        assert!(op_distance(&step, &Graphon::constant(1.0)) < 1e-12);
    }

    #[test]
    fn sweep_is_deterministic_and_ordered() {
        let p = quick_params();
        let cfg = SweepConfig {
            family: GraphFamily::sbm_benchmark(),
            sizes: vec![6, 9],
            runs: 3,
            rank: 3,
            population: PopulationConfig::default(),
            seed: 11,
            method: SpectralMethod::Riccati,
            options: FixedPointOptions::default(),
        };
        let a = size_sweep(&p, &cfg).unwrap();
        let b = size_sweep(&p, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.rows.len(), 6);
        assert!(a.rows[..3].iter().all(|r| r.nodes == 6));
        assert_eq!(a.means.len(), 2);
        let mut buf = Vec::new();
        a.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("family,N,seed,rel_error,op_distance,converged,L0\n"));
        assert_eq!(text.lines().count(), 7);
    }

    #[test]
    fn sizes_must_ascend() {
        let p = quick_params();
        let cfg = SweepConfig {
            family: GraphFamily::Ua,
            sizes: vec![10, 10],
            runs: 1,
            rank: 5,
            population: PopulationConfig::default(),
            seed: 0,
            method: SpectralMethod::Riccati,
            options: FixedPointOptions::default(),
        };
        assert!(matches!(size_sweep(&p, &cfg), Err(Error::Parameter(_))));
    }

    #[test]
    fn family_json_forms() {
        let f: GraphFamily = serde_json::from_str(r#"{"family":"ua"}"#).unwrap();
        assert_eq!(f, GraphFamily::Ua);
        let s = serde_json::to_string(&GraphFamily::sbm_benchmark()).unwrap();
        assert_eq!(serde_json::from_str::<GraphFamily>(&s).unwrap(), GraphFamily::sbm_benchmark());
        assert_eq!(GraphFamily::sbm_benchmark().decomposition(5).unwrap().len(), 3);
        assert_eq!(GraphFamily::from_graphon(&Graphon::uniform_attachment()), GraphFamily::Ua);
        let sbm = GraphFamily::sbm_benchmark().limit().unwrap();
        assert_eq!(GraphFamily::from_graphon(&sbm), GraphFamily::sbm_benchmark());
    }
}
