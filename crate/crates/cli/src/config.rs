//! Experiment configuration files.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use gmfg_core::graphon::Graphon;
use gmfg_core::ode::TimeGrid;
use gmfg_core::sim::{ClusterSizes, PopulationConfig, SdeScheme};
use gmfg_core::solver::{FixedPointOptions, GmfgParams};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: Problem,
    #[serde(default)]
    pub graphon: Option<Graphon>,
    #[serde(default)]
    pub population: Population,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
}

type Rows = Vec<Vec<f64>>;

/// Problem data with matrices as lists of rows. Omitted keys take the
/// values of [`GmfgParams::benchmark`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Problem {
    pub a: Rows,
    pub b: Rows,
    pub d: Rows,
    pub q: Rows,
    pub q_t: Rows,
    pub r: Rows,
    pub h: Rows,
    pub eta: Vec<f64>,
    pub sigma: Rows,
    pub horizon: f64,
    pub dt: f64,
}

fn rows(m: &DMatrix<f64>) -> Rows {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn matrix(name: &str, r: &Rows) -> Result<DMatrix<f64>> {
    let nrows = r.len();
    let ncols = r.first().map_or(0, Vec::len);
    if nrows == 0 || r.iter().any(|row| row.len() != ncols) {
        bail!("problem.{name}: rows must be nonempty and of equal length");
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| r[i][j]))
}

impl Default for Problem {
    fn default() -> Self {
        let p = GmfgParams::benchmark();
        Problem {
            a: rows(&p.a),
            b: rows(&p.b),
            d: rows(&p.d),
            q: rows(&p.q),
            q_t: rows(&p.q_t),
            r: rows(&p.r),
            h: rows(&p.h),
            eta: p.eta.iter().copied().collect(),
            sigma: rows(&p.sigma),
            horizon: p.grid.horizon(),
            dt: p.grid.dt(),
        }
    }
}

impl Problem {
    pub fn to_params(&self) -> Result<GmfgParams> {
        let params = GmfgParams {
            a: matrix("a", &self.a)?,
            b: matrix("b", &self.b)?,
            d: matrix("d", &self.d)?,
            q: matrix("q", &self.q)?,
            q_t: matrix("q_t", &self.q_t)?,
            r: matrix("r", &self.r)?,
            h: matrix("h", &self.h)?,
            eta: DVector::from_vec(self.eta.clone()),
            sigma: matrix("sigma", &self.sigma)?,
            grid: TimeGrid::new(self.horizon, self.dt).context("problem.horizon / problem.dt")?,
        };
        params.validate().context("problem")?;
        Ok(params)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Population {
    pub nodes: usize,
    pub cluster_sizes: ClusterSizes,
    pub initial_mean_range: (f64, f64),
    pub initial_std: f64,
    pub scheme: SdeScheme,
    pub record_paths: bool,
}

impl Default for Population {
    fn default() -> Self {
        let p = PopulationConfig::default();
        Population {
            nodes: 30,
            cluster_sizes: p.cluster_sizes,
            initial_mean_range: p.initial_mean_range,
            initial_std: p.initial_std,
            scheme: p.scheme,
            record_paths: p.record_paths,
        }
    }
}

impl Population {
    pub fn to_config(&self, seed: u64) -> Result<PopulationConfig> {
        if self.nodes == 0 {
            bail!("population.nodes must be positive");
        }
        let cfg = PopulationConfig {
            cluster_sizes: self.cluster_sizes.clone(),
            initial_mean_range: self.initial_mean_range,
            initial_std: self.initial_std,
            seed,
            scheme: self.scheme,
            record_paths: self.record_paths,
        };
        cfg.validate().context("population")?;
        Ok(cfg)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Route {
    FiniteFp,
    FiniteRiccati,
    SpectralFp,
    SpectralRiccati,
    Idempotent,
}

impl Route {
    pub fn name(self) -> &'static str {
        match self {
            Route::FiniteFp => "finite_fp",
            Route::FiniteRiccati => "finite_riccati",
            Route::SpectralFp => "spectral_fp",
            Route::SpectralRiccati => "spectral_riccati",
            Route::Idempotent => "idempotent",
        }
    }

    pub fn is_spectral(self) -> bool {
        matches!(self, Route::SpectralFp | Route::SpectralRiccati)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub route: Route,
    pub rank: usize,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverSection {
    fn default() -> Self {
        let o = FixedPointOptions::default();
        SolverSection {
            route: Route::SpectralRiccati,
            rank: 5,
            tol: o.tol,
            max_iter: o.max_iter,
        }
    }
}

impl SolverSection {
    pub fn options(&self) -> Result<FixedPointOptions> {
        if !(self.tol > 0.0) || self.max_iter == 0 {
            bail!("solver.tol and solver.max_iter must be positive");
        }
        Ok(FixedPointOptions {
            tol: self.tol,
            max_iter: self.max_iter,
            ..FixedPointOptions::default()
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub sizes: Vec<usize>,
    pub runs: usize,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            sizes: vec![10, 30, 100],
            runs: 12,
        }
    }
}

impl ExperimentConfig {
    pub fn graphon(&self) -> Result<&Graphon> {
        self.graphon
            .as_ref()
            .ok_or_else(|| anyhow!("config has no `graphon` section"))
    }

    pub fn from_value(v: Value) -> Result<Self> {
        serde_path_to_error::deserialize(v).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            if path == "." {
                anyhow!("invalid config: {inner}")
            } else {
                anyhow!("invalid config at `{path}`: {inner}")
            }
        })
    }
}

/// Reads a config file and applies `key.path=value` overrides. Values are
/// parsed as JSON when they can be, and taken as strings otherwise. An empty
/// file reads as `{}`.
pub fn load(path: &Path, overrides: &[String]) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut value: Value = if text.trim().is_empty() {
        Value::Object(Default::default())
    } else {
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
    };
    for o in overrides {
        apply_override(&mut value, o)?;
    }
    ExperimentConfig::from_value(value)
}

pub fn apply_override(root: &mut Value, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| anyhow!("--set expects key=value, got `{assignment}`"))?;
    let parsed = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        bail!("bad override key `{key}`");
    }
    let mut node = root;
    for part in &parts[..parts.len() - 1] {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| anyhow!("override `{key}`: `{part}` is inside a non-object"))?;
        node = obj.entry(part.to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    node.as_object_mut()
        .ok_or_else(|| anyhow!("override `{key}` targets a non-object"))?
        .insert(parts[parts.len() - 1].to_string(), parsed);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn parse(text: &str) -> Result<ExperimentConfig> {
        ExperimentConfig::from_value(serde_json::from_str(text)?)
    }

    #[test]
    fn empty_object_names_the_problem_section() {
        let err = parse("{}").unwrap_err().to_string();
        assert!(err.contains("problem"), "{err}");
    }

    #[test]
    fn defaults_are_the_benchmark() {
        let cfg = parse(r#"{"problem": {}}"#).unwrap();
        assert_eq!(cfg.problem.to_params().unwrap(), GmfgParams::benchmark());
        assert_eq!(cfg.solver.route, Route::SpectralRiccati);
        assert_eq!(cfg.population.nodes, 30);
    }

    #[test]
    fn unknown_keys_are_rejected_with_their_path() {
        let err = parse(r#"{"problem": {}, "solver": {"rnak": 3}}"#).unwrap_err().to_string();
        assert!(err.contains("solver") && err.contains("rnak"), "{err}");
        let err = parse(r#"{"problem": {"a": [[1, 2], [3]]}}"#)
            .unwrap()
            .problem
            .to_params()
            .unwrap_err()
            .to_string();
        assert!(err.contains("problem.a"), "{err}");
    }

    #[test]
    fn overrides() {
        let mut v: Value = serde_json::from_str(r#"{"problem": {}}"#).unwrap();
        apply_override(&mut v, "solver.rank=3").unwrap();
        apply_override(&mut v, "population.initial_std=0").unwrap();
        apply_override(&mut v, "problem.sigma=[[0,0],[0,0]]").unwrap();
        apply_override(&mut v, "solver.route=finite_fp").unwrap();
        let cfg = ExperimentConfig::from_value(v.clone()).unwrap();
        assert_eq!(cfg.solver.rank, 3);
        assert_eq!(cfg.population.initial_std, 0.0);
        assert_eq!(cfg.solver.route, Route::FiniteFp);
        assert!(cfg.problem.to_params().unwrap().sigma.amax() == 0.0);
        assert!(apply_override(&mut v, "solver.rank").is_err());
        assert!(apply_override(&mut v, "solver.rank.x=1").is_err());
    }

    fn arb_config() -> impl Strategy<Value = ExperimentConfig> {
        let route = prop_oneof![
            Just(Route::FiniteFp),
            Just(Route::FiniteRiccati),
            Just(Route::SpectralFp),
            Just(Route::SpectralRiccati),
            Just(Route::Idempotent),
        ];
        let graphon = prop_oneof![
            Just(None),
            Just(Some(Graphon::uniform_attachment())),
            (0.0..1.0f64).prop_map(|v| Some(Graphon::constant(v))),
        ];
        (
            route,
            1usize..20,
            1e-12..1e-2f64,
            1usize..500,
            graphon,
            1usize..200,
            prop::collection::vec(1usize..300, 0..5),
            any::<u64>(),
            (-5.0..0.0f64, 0.0..5.0f64),
            any::<bool>(),
        )
            .prop_map(|(route, rank, tol, max_iter, graphon, nodes, sizes, seed, range, heun)| {
                ExperimentConfig {
                    problem: Problem::default(),
                    graphon,
                    population: Population {
                        nodes,
                        initial_mean_range: range,
                        scheme: if heun { SdeScheme::Heun } else { SdeScheme::EulerMaruyama },
                        ..Population::default()
                    },
                    solver: SolverSection { route, rank, tol, max_iter },
                    sweep: SweepSection { sizes, runs: 3 },
                    output_dir: Some(PathBuf::from("out")),
                    seed,
                }
            })
    }

    proptest! {
        #[test]
        fn config_round_trip(cfg in arb_config()) {
            let text = serde_json::to_string(&cfg).unwrap();
            let back = parse(&text).unwrap();
            prop_assert_eq!(&back, &cfg);
            prop_assert_eq!(serde_json::to_string(&back).unwrap(), text);
        }
    }
}
