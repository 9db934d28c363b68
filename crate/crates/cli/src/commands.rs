//! Subcommand implementations. Each returns whether the run converged.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;

use anyhow::{bail, Context, Result};
use gmfg_core::graphon::{
    apply_graphon, fit_spectral_from_grid, generate_uniform_attachment, l2_norm, op_distance, sample_simple_graph,
    sample_weighted_graph, spectral_of_step, step_from_matrix, ua_eigenvalue_square_tail, AnalyticKernel, FitBasis,
    Graphon, GraphonRepr, QuadratureGrid, SampledGraph, SpectralDecomposition,
};
use gmfg_core::io::{write_path, write_solution, RunInfo};
use gmfg_core::rng;
use gmfg_core::sim::{simulate, size_sweep, GraphFamily, SweepConfig};
use gmfg_core::solver::{
    compute_l0, solve_finite_fixedpoint, solve_finite_riccati, solve_idempotent, solve_spectral, BestResponseLaw,
    GmfgParams, InitialMeans, MeanFieldSolution, SpectralMethod,
};
use nalgebra::DMatrix;
use serde::Serialize;
use serde_json::json;

use crate::config::{ExperimentConfig, Route};
use crate::VERSION;

pub enum Status {
    Converged,
    NotConverged,
}

impl Status {
    fn from(converged: bool) -> Self {
        if converged {
            Status::Converged
        } else {
            Status::NotConverged
        }
    }
}

struct Solved {
    params: GmfgParams,
    family: GraphFamily,
    graph: SampledGraph,
    means: DMatrix<f64>,
    solution: MeanFieldSolution,
    l0: f64,
    eigenvalues: Vec<f64>,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let f = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    serde_json::to_writer_pretty(f, value)?;
    Ok(())
}

fn step_decomposition(w: &DMatrix<f64>) -> Result<SpectralDecomposition> {
    let g = step_from_matrix(w.clone(), w.amax().max(1.0))?;
    Ok(spectral_of_step(&g, w.nrows())?)
}

/// Samples the network and initial means from the seed and solves the
/// configured route. Spectral routes solve on the limit graphon; finite
/// routes on the sampled network.
fn solve_configured(cfg: &ExperimentConfig) -> Result<Solved> {
    let params = cfg.problem.to_params()?;
    let family = GraphFamily::from_graphon(cfg.graphon()?);
    let pop = cfg.population.to_config(cfg.seed)?;
    let nodes = cfg.population.nodes;
    let graph = family
        .sample(nodes, rng::derive_seed(cfg.seed, 2))
        .context("sampling the network")?;
    let means = pop.sample_means(params.dim(), nodes)?;
    let init = InitialMeans::Nodes(means.clone());
    let opts = cfg.solver.options()?;
    let w = &graph.adjacency;
    let (solution, decomp) = match cfg.solver.route {
        Route::SpectralFp | Route::SpectralRiccati => {
            let method = if cfg.solver.route == Route::SpectralFp {
                SpectralMethod::FixedPoint
            } else {
                SpectralMethod::Riccati
            };
            let decomp = family.decomposition(cfg.solver.rank)?;
            (solve_spectral(&params, &decomp, &init, method, &opts)?, decomp)
        }
        Route::FiniteFp => (solve_finite_fixedpoint(&params, w, &init, &opts)?, step_decomposition(w)?),
        Route::FiniteRiccati => (solve_finite_riccati(&params, w, &init)?, step_decomposition(w)?),
        Route::Idempotent => (solve_idempotent(&params, w, &init)?, step_decomposition(w)?),
    };
    let l0 = compute_l0(&params, &decomp)?;
    Ok(Solved {
        params,
        family,
        graph,
        means,
        solution,
        l0,
        eigenvalues: decomp.eigenvalues(),
    })
}

fn run_info(cfg: &ExperimentConfig, s: &Solved) -> RunInfo {
    RunInfo {
        version: VERSION.to_string(),
        seed: cfg.seed,
        route: cfg.solver.route.name().to_string(),
        l0: Some(s.l0),
        eigenvalues: Some(s.eigenvalues.clone()),
    }
}

pub fn solve(cfg: &ExperimentConfig, out: &Path) -> Result<Status> {
    let s = solve_configured(cfg)?;
    let manifest = write_solution(out, &s.solution, &run_info(cfg, &s))?;
    if !cfg.solver.route.is_spectral() {
        s.graph.write(&out.join("graph.csv"))?;
    }
    println!(
        "{} {}: rank {}, {} iterations, residual {:.2e}, L0 {:.4}, converged {} -> {}",
        manifest.mode,
        manifest.route,
        manifest.rank,
        manifest.iterations,
        s.solution.diagnostics.residual(),
        s.l0,
        manifest.converged,
        out.display()
    );
    Ok(Status::from(manifest.converged))
}

pub fn simulate_cmd(cfg: &ExperimentConfig, out: &Path) -> Result<Status> {
    let s = solve_configured(cfg)?;
    let nodes = cfg.population.nodes;
    let pop = cfg.population.to_config(cfg.seed)?;
    let law = BestResponseLaw::from_solution(&s.solution, &s.params, nodes)?;
    let (z_ref, _) = s.solution.on_cells(nodes)?;
    let result = simulate(&s.params, &s.graph.adjacency, &pop, &s.means, &law, &z_ref)?;
    let op = op_distance(&s.graph.to_step_graphon()?, &s.family.limit()?);

    let manifest = write_solution(out, &s.solution, &run_info(cfg, &s))?;
    s.graph.write(&out.join("graph.csv"))?;
    write_path(&out.join("z_e.csv"), &result.z_e)?;
    write_path(&out.join("z_ref.csv"), &result.z_ref)?;
    if let Some(p) = &result.agent_paths {
        write_path(&out.join("agents.csv"), p)?;
    }
    write_json(
        &out.join("summary.json"),
        &json!({
            "rel_error": result.rel_error,
            "op_distance": op,
            "nodes": nodes,
            "family": s.family.name(),
            "route": manifest.route,
            "converged": manifest.converged,
            "L0": s.l0,
            "seed": cfg.seed,
            "dt": manifest.dt,
            "rank": manifest.rank,
            "version": VERSION,
        }),
    )?;
    println!(
        "{} N={nodes}: rel_error {:.4}, op_distance {:.4} -> {}",
        s.family.name(),
        result.rel_error,
        op,
        out.display()
    );
    Ok(Status::from(manifest.converged))
}

pub fn sweep(cfg: &ExperimentConfig, out: &Path) -> Result<Status> {
    let params = cfg.problem.to_params()?;
    let method = match cfg.solver.route {
        Route::SpectralFp => SpectralMethod::FixedPoint,
        Route::SpectralRiccati => SpectralMethod::Riccati,
        other => bail!("sweep solves the limit problem and needs a spectral route, not `{}`", other.name()),
    };
    let family = GraphFamily::from_graphon(cfg.graphon()?);
    let sweep = SweepConfig {
        family: family.clone(),
        sizes: cfg.sweep.sizes.clone(),
        runs: cfg.sweep.runs,
        rank: cfg.solver.rank,
        population: cfg.population.to_config(cfg.seed)?,
        seed: cfg.seed,
        method,
        options: cfg.solver.options()?,
    };
    let table = size_sweep(&params, &sweep)?;
    fs::create_dir_all(out)?;
    table.write_csv(BufWriter::new(File::create(out.join("sweep.csv"))?))?;
    let rel: Vec<f64> = table.means.iter().map(|m| m.rel_error).collect();
    let op: Vec<f64> = table.means.iter().map(|m| m.op_distance).collect();
    let decreasing = |v: &[f64]| v.windows(2).all(|w| w[1] < w[0]);
    write_json(
        &out.join("trend.json"),
        &json!({
            "family": family.name(),
            "means": table.means,
            "rel_error_decreasing": decreasing(&rel),
            "op_distance_decreasing": decreasing(&op),
            "L0": table.l0,
            "rank": cfg.solver.rank,
            "seed": cfg.seed,
            "dt": params.grid.dt(),
            "version": VERSION,
        }),
    )?;
    for m in &table.means {
        println!(
            "{} N={}: mean rel_error {:.4}, mean op_distance {:.4} over {} runs",
            family.name(),
            m.nodes,
            m.rel_error,
            m.op_distance,
            m.runs
        );
    }
    Ok(Status::from(table.rows.iter().all(|r| r.converged)))
}

pub fn read_graphon(path: &Path) -> Result<Graphon> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let g: Graphon = serde_json::from_str(&text).with_context(|| format!("invalid graphon JSON in {}", path.display()))?;
    Ok(g)
}

#[derive(Serialize)]
struct SpectrumReport {
    rank: usize,
    grid: usize,
    eigenvalues: Vec<f64>,
    /// `‖𝐌f − λf‖₂` on the grid, per pair.
    residuals: Vec<f64>,
    sum_of_squares: f64,
    l2_norm_squared: f64,
    gap: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    analytic_tail: Option<f64>,
}

pub fn spectrum(g: &Graphon, rank: usize, grid_points: usize, out: Option<&Path>) -> Result<()> {
    let decomp = match g.truncated_spectrum(rank) {
        Some(d) => d,
        None => fit_spectral_from_grid(g, grid_points, rank, FitBasis::default())?,
    };
    let grid = QuadratureGrid::new(grid_points)?;
    let xs = grid.midpoints();
    let mut residuals = Vec::with_capacity(decomp.len());
    for p in decomp.pairs() {
        let f = p.function.sample(&xs);
        let mf = apply_graphon(g, &f, &grid)?;
        let diff: Vec<f64> = mf.iter().zip(&f).map(|(a, b)| a - p.lambda * b).collect();
        residuals.push(grid.l2(&diff));
    }
    let l2 = l2_norm(g);
    let sum = decomp.sum_of_squares();
    let analytic_tail = match g.repr() {
        GraphonRepr::Analytic(AnalyticKernel::UniformAttachment) => Some(ua_eigenvalue_square_tail(decomp.len())),
        _ => None,
    };
    let report = SpectrumReport {
        rank: decomp.len(),
        grid: grid_points,
        eigenvalues: decomp.eigenvalues(),
        residuals,
        sum_of_squares: sum,
        l2_norm_squared: l2 * l2,
        gap: l2 * l2 - sum,
        analytic_tail,
    };
    println!("{}", serde_json::to_string_pretty(&report)?);
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        write_json(&dir.join("spectrum.json"), &report)?;
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, clap::ValueEnum)]
pub enum SampleMode {
    /// Edges drawn with probability 𝐌(x_i, x_j).
    Simple,
    /// Edge weights 𝐌(x_i, x_j).
    Weighted,
    /// The growing uniform attachment process.
    Attachment,
}

pub fn sample_graph(g: Option<&Graphon>, nodes: usize, mode: SampleMode, seed: u64, out: &Path) -> Result<()> {
    let need = || g.context("sampling from a graphon needs --graphon or a config with a `graphon` section");
    let graph = match mode {
        SampleMode::Simple => sample_simple_graph(need()?, nodes, seed)?,
        SampleMode::Weighted => sample_weighted_graph(need()?, nodes, seed)?,
        SampleMode::Attachment => generate_uniform_attachment(nodes, seed)?,
    };
    fs::create_dir_all(out)?;
    let path = out.join("graph.csv");
    graph.write(&path)?;
    let edges = graph.adjacency.iter().filter(|v| **v != 0.0).count() / 2;
    println!("{nodes} nodes, {edges} edges -> {}", path.display());
    Ok(())
}

#[derive(Clone, Copy, Debug, clap::ValueEnum)]
pub enum BasisArg {
    Cosine,
    Piecewise,
}

pub fn fit(g: &Graphon, grid: usize, rank: usize, basis: BasisArg, modes: usize, out: Option<&Path>) -> Result<()> {
    let basis = match basis {
        BasisArg::Cosine => FitBasis::Cosine { modes },
        BasisArg::Piecewise => FitBasis::Piecewise,
    };
    let decomp = fit_spectral_from_grid(g, grid, rank, basis)?;
    let fitted = Graphon::spectral(decomp.clone());
    match out {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            let path = dir.join("fitted_graphon.json");
            write_json(&path, &fitted)?;
            println!("eigenvalues {:?} -> {}", decomp.eigenvalues(), path.display());
        }
        None => println!("{}", serde_json::to_string_pretty(&fitted)?),
    }
    Ok(())
}
