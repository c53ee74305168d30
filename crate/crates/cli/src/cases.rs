//! Built-in manufactured-solution cases for convergence studies.
//!
//! Each case has an analytic solution imposed through Dirichlet data on
//! every boundary node of a unit-cube mesh; the L2 error of the discrete
//! solution is integrated element-wise with a 3x3x3 Gauss rule and the
//! convergence order is the least-squares slope of log(error) against
//! log(h) over the refinement levels.
//!
//! * `quadratic-harmonic` — phi = x^2 - y^2, uniform permittivity. Not in
//!   the trilinear space, so the error follows the element order (2.0).
//! * `trilinear-exact` — phi = xyz. In the trilinear space: errors sit at
//!   the solver-tolerance floor and the order is reported as "exact".
//! * `layered-capacitor` — two dielectric layers with a mesh-aligned
//!   interface; the piecewise-linear solution is representable, so errors
//!   sit at the floor as well.

use std::fmt;

use dotfield::{
    assemble, mesh::structured_mesh, pcg_solve, Box3, GridAxes, Mesh, Preconditioner,
    QuadratureRule, SolutionField, SolveConfig, SolverError,
};

pub const CASES: [&str; 3] = ["quadratic-harmonic", "trilinear-exact", "layered-capacitor"];

/// Errors below this (on unit-scale solutions) are solver/rounding floor,
/// not discretisation error.
pub const EXACTNESS_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Case {
    QuadraticHarmonic,
    TrilinearExact,
    LayeredCapacitor,
}

impl Case {
    pub fn from_name(name: &str) -> Option<Case> {
        match name {
            "quadratic-harmonic" => Some(Case::QuadraticHarmonic),
            "trilinear-exact" => Some(Case::TrilinearExact),
            "layered-capacitor" => Some(Case::LayeredCapacitor),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Case::QuadraticHarmonic => "quadratic-harmonic",
            Case::TrilinearExact => "trilinear-exact",
            Case::LayeredCapacitor => "layered-capacitor",
        }
    }

    fn exact(self) -> fn([f64; 3]) -> f64 {
        match self {
            Case::QuadraticHarmonic => |p| p[0] * p[0] - p[1] * p[1],
            Case::TrilinearExact => |p| p[0] * p[1] * p[2],
            Case::LayeredCapacitor => |p| {
                // eps1 below the interface, eps2 above; plates at 0 and 1 V
                let (d, eps1, eps2) = (0.5, 11.0, 4.5);
                let vd = (d / eps1) / (d / eps1 + (1.0 - d) / eps2);
                if p[2] <= d {
                    vd * p[2] / d
                } else {
                    vd + (1.0 - vd) * (p[2] - d) / (1.0 - d)
                }
            },
        }
    }

    fn permittivity(self) -> fn([f64; 3]) -> f64 {
        match self {
            Case::LayeredCapacitor => |c| if c[2] < 0.5 { 11.0 } else { 4.5 },
            _ => |_| 1.0,
        }
    }

    fn mesh(self, cells: usize) -> Mesh {
        let domain = Box3::new([0.0, 0.0, 0.0], [1.0, 1.0, 1.0]).unwrap();
        let n = cells + 1;
        let axes = GridAxes::uniform(&domain, [n, n, n]).unwrap();
        // the layered interface z=0.5 is a grid plane for every even cell
        // count used here
        let exact = self.exact();
        structured_mesh(axes, self.permittivity(), move |p| {
            let on_boundary = p.iter().any(|&c| c == 0.0 || c == 1.0);
            on_boundary.then(|| exact(p))
        })
        .unwrap()
    }
}

impl fmt::Display for Case {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One refinement level of a convergence study.
#[derive(Debug, Clone, Copy)]
pub struct Level {
    pub cells: usize,
    pub h: f64,
    pub l2_error: f64,
}

#[derive(Debug, Clone)]
pub struct ConvergenceReport {
    pub case: Case,
    pub levels: Vec<Level>,
    /// None when every level sits at the exactness floor.
    pub fitted_order: Option<f64>,
    pub monotone: bool,
}

/// L2 norm of (phi_h - exact) over the whole mesh.
pub fn l2_error(field: &SolutionField<'_>, exact: &dyn Fn([f64; 3]) -> f64) -> f64 {
    let mesh = field.mesh;
    let rule = QuadratureRule::gauss_volume(3).unwrap();
    let mut total = 0.0;
    for e in 0..mesh.element_count() {
        if !mesh.active[e] {
            continue;
        }
        let nodes = mesh.element_nodes(e);
        let center = mesh.element_center(e);
        let half = mesh.element_extents(e);
        for (q, local) in rule.points.iter().enumerate() {
            let shape = dotfield::shape(*local);
            let mut phi_h = 0.0;
            for (a, &node) in nodes.iter().enumerate() {
                phi_h += shape.values[a] * field.values[node];
            }
            let p = [
                center[0] + 0.5 * local[0] * half[0],
                center[1] + 0.5 * local[1] * half[1],
                center[2] + 0.5 * local[2] * half[2],
            ];
            let diff = phi_h - exact(p);
            // axis-aligned cells: detJ = volume / 8
            let det = half[0] * half[1] * half[2] / 8.0;
            total += rule.weights[q] * det * diff * diff;
        }
    }
    total.sqrt()
}

/// Run `levels` uniform refinements starting at 4 cells per axis.
pub fn run_convergence(case: Case, levels: usize) -> Result<ConvergenceReport, SolverError> {
    assert!(levels >= 3, "a convergence study needs at least 3 levels");
    let cfg = SolveConfig {
        tol: 1e-12,
        max_iter: Some(100_000),
        preconditioner: Preconditioner::Ilu0,
    };
    let exact = case.exact();
    let mut out = Vec::with_capacity(levels);
    for level in 0..levels {
        let cells = 4usize << level;
        let mesh = case.mesh(cells);
        let system = assemble(&mesh)?;
        let (field, report) = pcg_solve(&mesh, &system, &cfg)?;
        if !report.converged {
            return Err(SolverError::Breakdown {
                iteration: report.iterations,
            });
        }
        out.push(Level {
            cells,
            h: 1.0 / cells as f64,
            l2_error: l2_error(&field, &exact),
        });
    }

    let at_floor = out.iter().all(|l| l.l2_error <= EXACTNESS_FLOOR);
    let fitted_order = if at_floor {
        None
    } else {
        Some(fit_order(&out))
    };
    // errors at the rounding floor jitter; monotonicity only means
    // something for resolved discretisation error
    let monotone = at_floor || out.windows(2).all(|w| w[1].l2_error <= w[0].l2_error);
    Ok(ConvergenceReport {
        case,
        levels: out,
        fitted_order,
        monotone,
    })
}

/// Least-squares slope of log(error) vs log(h).
fn fit_order(levels: &[Level]) -> f64 {
    let pts: Vec<(f64, f64)> = levels
        .iter()
        .map(|l| (l.h.ln(), l.l2_error.max(1e-300).ln()))
        .collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}
