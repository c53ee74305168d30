//! Reproducibility manifest written next to every solve's outputs.

use std::collections::BTreeMap;
use std::time::{SystemTime, UNIX_EPOCH};

use dotfield::{LinearSystem, Mesh, SolveReport};
use serde::{Deserialize, Serialize};

#[derive(Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub artifact_version: String,
    pub config_path: String,
    pub config_hash: String,
    pub timestamp_unix: u64,
    pub base_voltage: f64,
    pub gate_voltages: BTreeMap<String, f64>,
    pub mesh: MeshStats,
    pub solver: SolverStats,
    /// Files written by the run, relative to the output directory. Each
    /// carries `config_hash` in its header comment.
    pub outputs: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct MeshStats {
    pub node_counts: [usize; 3],
    pub node_count: usize,
    pub element_count: usize,
    pub active_elements: usize,
    pub free_unknowns: usize,
    pub dirichlet_nodes: usize,
    pub neumann_faces: usize,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SolverStats {
    pub preconditioner: String,
    pub tol: f64,
    pub iterations: usize,
    pub final_relative_residual: f64,
    pub converged: bool,
    pub wall_time_s: f64,
    pub diagonal_shift: f64,
}

impl MeshStats {
    pub fn collect(mesh: &Mesh, system: Option<&LinearSystem>) -> Self {
        MeshStats {
            node_counts: mesh.node_counts(),
            node_count: mesh.node_count(),
            element_count: mesh.element_count(),
            active_elements: mesh.active_element_count(),
            free_unknowns: system.map_or(0, |s| s.dim()),
            dirichlet_nodes: mesh.dirichlet_nodes.len(),
            neumann_faces: mesh.neumann_faces.len(),
        }
    }
}

impl SolverStats {
    pub fn from_report(report: &SolveReport, tol: f64) -> Self {
        SolverStats {
            preconditioner: report.preconditioner.to_string(),
            tol,
            iterations: report.iterations,
            final_relative_residual: report.final_relative_residual,
            converged: report.converged,
            wall_time_s: report.wall_time,
            diagonal_shift: report.diagonal_shift,
        }
    }
}

impl RunManifest {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serialization cannot fail")
    }
}

pub fn unix_timestamp() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}
