//! Solution directories: one CSV per path plus `manifest.json`.
//!
//! ```text
//! pi.csv                     Π, row-major
//! breve_s.csv                s̆ (spectral mode)
//! z_ell_<i>.csv, s_ell_<i>.csv     coefficient paths, i = 1..k (spectral)
//! z_node_<q>.csv, s_node_<q>.csv   node paths, q = 1..N (finite)
//! manifest.json
//! ```

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::ode::MatrixPath;
use crate::solver::{MeanFieldSolution, SolutionMode};
use crate::Result;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    pub z: f64,
    pub s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    /// `finite` or `spectral`.
    pub mode: String,
    /// Eigendirections (spectral) or nodes (finite).
    pub rank: usize,
    pub eigenvalues: Vec<f64>,
    pub residuals: Residuals,
    #[serde(rename = "L0")]
    pub l0: Option<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub version: String,
    pub seed: u64,
    pub dt: f64,
    pub route: String,
}

/// Run metadata the solution itself does not carry.
#[derive(Clone, Debug, PartialEq)]
pub struct RunInfo {
    pub version: String,
    pub seed: u64,
    pub route: String,
    pub l0: Option<f64>,
    /// Eigenvalues to report for finite solutions, e.g. those of `W/N`.
    pub eigenvalues: Option<Vec<f64>>,
}

impl Manifest {
    pub fn new(sol: &MeanFieldSolution, info: &RunInfo) -> Self {
        let (mode, rank) = match sol.mode {
            SolutionMode::Finite { nodes } => ("finite", nodes),
            SolutionMode::Spectral { rank } => ("spectral", rank),
        };
        let eigenvalues = match (&sol.decomposition, &info.eigenvalues) {
            (Some(d), _) => d.eigenvalues(),
            (None, Some(e)) => e.clone(),
            (None, None) => Vec::new(),
        };
        Manifest {
            mode: mode.into(),
            rank,
            eigenvalues,
            residuals: Residuals {
                z: sol.diagnostics.residual_z,
                s: sol.diagnostics.residual_s,
            },
            l0: info.l0,
            converged: sol.converged(),
            iterations: sol.diagnostics.iterations,
            version: info.version.clone(),
            seed: info.seed,
            dt: sol.z.grid().dt(),
            route: info.route.clone(),
        }
    }

    pub fn read(path: &Path) -> Result<Manifest> {
        Ok(serde_json::from_reader(File::open(path)?)?)
    }
}

pub fn write_path(path: &Path, p: &MatrixPath) -> Result<()> {
    p.write_csv(BufWriter::new(File::create(path)?))
}

fn column(p: &MatrixPath, j: usize) -> MatrixPath {
    p.map(|m| m.columns(j, 1).into_owned())
}

/// Writes the solution directory and returns its manifest.
pub fn write_solution(dir: &Path, sol: &MeanFieldSolution, info: &RunInfo) -> Result<Manifest> {
    fs::create_dir_all(dir)?;
    write_path(&dir.join("pi.csv"), &sol.pi)?;
    if let Some(b) = &sol.breve_s {
        write_path(&dir.join("breve_s.csv"), b)?;
    }
    let tag = match sol.mode {
        SolutionMode::Finite { .. } => "node",
        SolutionMode::Spectral { .. } => "ell",
    };
    for j in 0..sol.columns() {
        write_path(&dir.join(format!("z_{tag}_{}.csv", j + 1)), &column(&sol.z, j))?;
        write_path(&dir.join(format!("s_{tag}_{}.csv", j + 1)), &column(&sol.s, j))?;
    }
    let manifest = Manifest::new(sol, info);
    let f = BufWriter::new(File::create(dir.join("manifest.json"))?);
    serde_json::to_writer_pretty(f, &manifest)?;
    Ok(manifest)
}
