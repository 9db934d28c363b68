//! Random graphs drawn from graphons, and the uniform attachment process.

use std::path::Path;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{step_from_matrix, Graphon};
use crate::{rng, Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct SampledGraph {
    pub adjacency: DMatrix<f64>,
    /// Latent positions `x_i`; absent for uniform attachment graphs.
    pub latents: Option<Vec<f64>>,
    pub seed: u64,
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    seed: u64,
    nodes: usize,
    latents: Option<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct EdgeRow {
    i: usize,
    j: usize,
    weight: f64,
}

impl SampledGraph {
    pub fn len(&self) -> usize {
        self.adjacency.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// The step graphon `𝐌^[N]` of the adjacency matrix.
    pub fn to_step_graphon(&self) -> Result<Graphon> {
        let bound = self.adjacency.amax().max(1.0);
        step_from_matrix(self.adjacency.clone(), bound)
    }

    /// Relabels nodes so that latents are ascending. Graphs without latents
    /// are returned unchanged.
    pub fn sorted_by_latents(&self) -> SampledGraph {
        let Some(latents) = &self.latents else {
            return self.clone();
        };
        let mut order: Vec<usize> = (0..latents.len()).collect();
        order.sort_by(|&a, &b| latents[a].total_cmp(&latents[b]));
        SampledGraph {
            adjacency: permute(&self.adjacency, &order),
            latents: Some(order.iter().map(|&i| latents[i]).collect()),
            seed: self.seed,
        }
    }

    /// Writes the edge list `i,j,weight` (upper triangle, nonzero weights)
    /// and a JSON sidecar next to it with the seed and latents.
    pub fn write(&self, csv_path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(csv_path)?;
        let n = self.len();
        for i in 0..n {
            for j in (i + 1)..n {
                let weight = self.adjacency[(i, j)];
                if weight != 0.0 {
                    w.serialize(EdgeRow { i, j, weight })?;
                }
            }
        }
        w.flush()?;
        let sidecar = Sidecar {
            seed: self.seed,
            nodes: n,
            latents: self.latents.clone(),
        };
        std::fs::write(
            csv_path.with_extension("json"),
            serde_json::to_string_pretty(&sidecar)?,
        )?;
        Ok(())
    }

    pub fn read(csv_path: &Path) -> Result<SampledGraph> {
        let sidecar: Sidecar =
            serde_json::from_str(&std::fs::read_to_string(csv_path.with_extension("json"))?)?;
        let n = sidecar.nodes;
        let mut adjacency = DMatrix::zeros(n, n);
        for row in csv::Reader::from_path(csv_path)?.deserialize() {
            let EdgeRow { i, j, weight } = row?;
            if i >= n || j >= n {
                return Err(Error::Dimension(format!("edge ({i},{j}) outside {n} nodes")));
            }
            adjacency[(i, j)] = weight;
            adjacency[(j, i)] = weight;
        }
        Ok(SampledGraph {
            adjacency,
            latents: sidecar.latents,
            seed: sidecar.seed,
        })
    }
}

fn permute(m: &DMatrix<f64>, order: &[usize]) -> DMatrix<f64> {
    let n = order.len();
    DMatrix::from_fn(n, n, |i, j| m[(order[i], order[j])])
}

fn latents(rng: &mut rng::SimRng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random::<f64>()).collect()
}

/// Random simple graph: latents `x_i ~ U[0,1]`, each pair joined with
/// probability `𝐌(x_i, x_j)`.
pub fn sample_simple_graph(g: &Graphon, n: usize, seed: u64) -> Result<SampledGraph> {
    if n == 0 {
        return Err(Error::Size("graph needs at least one node".into()));
    }
    let mut rng = rng::seeded(seed);
    let xs = latents(&mut rng, n);
    let mut adjacency = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let p = g.eval(xs[i], xs[j]);
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Domain(format!(
                    "kernel value {p} at ({}, {}) is not a probability",
                    xs[i], xs[j]
                )));
            }
            if rng.random::<f64>() < p {
                adjacency[(i, j)] = 1.0;
                adjacency[(j, i)] = 1.0;
            }
        }
    }
    Ok(SampledGraph {
        adjacency,
        latents: Some(xs),
        seed,
    })
}

/// Random weighted graph: latents as above, weights `𝐌(x_i, x_j)`.
pub fn sample_weighted_graph(g: &Graphon, n: usize, seed: u64) -> Result<SampledGraph> {
    if n == 0 {
        return Err(Error::Size("graph needs at least one node".into()));
    }
    let mut rng = rng::seeded(seed);
    let xs = latents(&mut rng, n);
    let adjacency = DMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { g.eval(xs[i], xs[j]) });
    Ok(SampledGraph {
        adjacency,
        latents: Some(xs),
        seed,
    })
}

/// Uniform attachment graph on `n` nodes, relabelled by descending degree.
///
/// Node `k` joins at stage `k`; at every stage `k = 2, …, n` each
/// unconnected pair among the nodes present gains an edge with probability
/// `1/k`. A pair whose younger node is `m` therefore stays unconnected with
/// probability `(m − 1)/n`.
pub fn generate_uniform_attachment(n: usize, seed: u64) -> Result<SampledGraph> {
    if n < 2 {
        return Err(Error::Size(format!("uniform attachment needs N ≥ 2, got {n}")));
    }
    let mut rng = rng::seeded(seed);
    let mut adjacency = DMatrix::zeros(n, n);
    for k in 2..=n {
        let p = 1.0 / k as f64;
        for j in 1..k {
            for i in 0..j {
                if adjacency[(i, j)] == 0.0 && rng.random::<f64>() < p {
                    adjacency[(i, j)] = 1.0;
                    adjacency[(j, i)] = 1.0;
                }
            }
        }
    }
    let degree: Vec<f64> = adjacency.row_iter().map(|r| r.sum()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| degree[b].total_cmp(&degree[a]));
    Ok(SampledGraph {
        adjacency: permute(&adjacency, &order),
        latents: None,
        seed,
    })
}
