//! Conjugate-gradient solution of the reduced system, preconditioned by an
//! incomplete factorisation, plus a dense direct solver used as the
//! small-scale oracle throughout the test suite.
//!
//! The stiffness matrix is symmetric positive definite, so the ILU(0)
//! factorisation is computed in its symmetric form: an incomplete Cholesky
//! factor `L` on the exact sparsity pattern of `K` (no fill-in), applied as
//! `z = (L L^T)^{-1} r` by forward/backward substitution. This keeps the
//! preconditioned operator symmetric, which plain CG requires. A zero or
//! negative pivot is handled by scaling the diagonal up by a small shift
//! and re-factorising, escalating twice before giving up.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use core::fmt;

use crate::assembly::{AssemblyError, LinearSystem, SymCsr};
use crate::float;
use crate::mesh::{Mesh, MeshError, SurfaceVoltages};

/// Dimension cap for the dense direct oracle.
pub const DENSE_SOLVE_CAP: usize = 2000;

#[derive(Debug, Clone, PartialEq)]
pub enum SolverError {
    /// Negative curvature encountered: the matrix is not positive definite.
    Breakdown { iteration: usize },
    /// Incomplete factorisation failed even after diagonal shifts.
    PivotFailure { row: usize },
    /// Dense elimination hit a zero pivot.
    SingularMatrix { row: usize },
    TooLargeForDense { dim: usize, cap: usize },
    Assembly(AssemblyError),
    Mesh(MeshError),
}

impl fmt::Display for SolverError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SolverError::Breakdown { iteration } => {
                write!(f, "CG breakdown (non-SPD curvature) at iteration {}", iteration)
            }
            SolverError::PivotFailure { row } => {
                write!(f, "incomplete factorisation pivot failure at row {}", row)
            }
            SolverError::SingularMatrix { row } => {
                write!(f, "singular matrix: zero pivot at row {}", row)
            }
            SolverError::TooLargeForDense { dim, cap } => {
                write!(f, "system dimension {} exceeds dense-solve cap {}", dim, cap)
            }
            SolverError::Assembly(e) => write!(f, "{}", e),
            SolverError::Mesh(e) => write!(f, "{}", e),
        }
    }
}

impl core::error::Error for SolverError {}

impl From<AssemblyError> for SolverError {
    fn from(e: AssemblyError) -> Self {
        SolverError::Assembly(e)
    }
}

impl From<MeshError> for SolverError {
    fn from(e: MeshError) -> Self {
        SolverError::Mesh(e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preconditioner {
    None,
    Ilu0,
}

impl Preconditioner {
    pub fn label(self) -> &'static str {
        match self {
            Preconditioner::None => "none",
            Preconditioner::Ilu0 => "ilu0",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveConfig {
    /// Relative residual target, `||F - K phi|| / ||F||`.
    pub tol: f64,
    /// Iteration cap; `None` selects `ceil(10 * sqrt(n))`.
    pub max_iter: Option<usize>,
    pub preconditioner: Preconditioner,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig {
            tol: 1e-8,
            max_iter: None,
            preconditioner: Preconditioner::Ilu0,
        }
    }
}

impl SolveConfig {
    pub fn with_tol(tol: f64) -> Self {
        SolveConfig {
            tol,
            ..SolveConfig::default()
        }
    }

    fn iter_cap(&self, n: usize) -> usize {
        self.max_iter
            .unwrap_or_else(|| float::ceil(10.0 * float::sqrt(n as f64)).max(1.0) as usize)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub iterations: usize,
    pub final_relative_residual: f64,
    pub converged: bool,
    /// Seconds; zero when built without `std`.
    pub wall_time: f64,
    pub preconditioner: &'static str,
    /// Diagonal shift the incomplete factorisation needed (0 normally).
    pub diagonal_shift: f64,
}

/// Nodal solution bound to its mesh: solved free values, prescribed
/// Dirichlet values, and gate voltages inside deactivated cells.
#[derive(Debug, Clone)]
pub struct SolutionField<'m> {
    pub mesh: &'m Mesh,
    pub values: Vec<f64>,
}

/// Symmetric ILU(0): incomplete Cholesky factor on the pattern of `K`.
#[derive(Debug, Clone)]
pub struct Ilu0 {
    factor: SymCsr,
    /// Relative diagonal shift that was needed (0 if the clean
    /// factorisation succeeded).
    pub shift: f64,
}

/// Factor `K ~= L L^T` on the sparsity pattern of `K`.
pub fn ilu0_factor(matrix: &SymCsr) -> Result<Ilu0, SolverError> {
    const SHIFTS: [f64; 4] = [0.0, 1e-6, 1e-4, 1e-2];
    let mut failed_row = 0;
    for &shift in &SHIFTS {
        match try_ic0(matrix, shift) {
            Ok(factor) => return Ok(Ilu0 { factor, shift }),
            Err(row) => failed_row = row,
        }
    }
    Err(SolverError::PivotFailure { row: failed_row })
}

fn try_ic0(matrix: &SymCsr, shift: f64) -> Result<SymCsr, usize> {
    let n = matrix.dim();
    let mut l = matrix.clone();
    for i in 0..n {
        let row_start = l.row_ptr[i];
        let row_end = l.row_ptr[i + 1];
        for idx in row_start..row_end {
            let j = l.col_idx[idx];
            let mut s = matrix.values[idx];
            if j == i {
                s *= 1.0 + shift;
            }
            // s -= sum_{k < j} L_ik L_jk over the shared pattern
            let mut p = row_start;
            let mut q = l.row_ptr[j];
            let q_end = l.row_ptr[j + 1];
            while p < idx && q < q_end {
                let (cp, cq) = (l.col_idx[p], l.col_idx[q]);
                if cp >= j || cq >= j {
                    break;
                }
                if cp == cq {
                    s -= l.values[p] * l.values[q];
                    p += 1;
                    q += 1;
                } else if cp < cq {
                    p += 1;
                } else {
                    q += 1;
                }
            }
            if j == i {
                if !(s > 0.0) || !s.is_finite() {
                    return Err(i);
                }
                l.values[idx] = float::sqrt(s);
            } else {
                let ljj = l.values[l.row_ptr[j + 1] - 1];
                l.values[idx] = s / ljj;
            }
        }
    }
    Ok(l)
}

impl Ilu0 {
    /// z = (L L^T)^{-1} r.
    pub fn apply(&self, r: &[f64], z: &mut [f64]) {
        let l = &self.factor;
        let n = l.dim();
        z.copy_from_slice(r);
        // forward: L y = r
        for i in 0..n {
            let (start, end) = (l.row_ptr[i], l.row_ptr[i + 1]);
            let mut acc = z[i];
            for idx in start..end - 1 {
                acc -= l.values[idx] * z[l.col_idx[idx]];
            }
            z[i] = acc / l.values[end - 1];
        }
        // backward: L^T z = y, spreading each finished entry up its column
        for i in (0..n).rev() {
            let (start, end) = (l.row_ptr[i], l.row_ptr[i + 1]);
            z[i] /= l.values[end - 1];
            let zi = z[i];
            for idx in start..end - 1 {
                z[l.col_idx[idx]] -= l.values[idx] * zi;
            }
        }
    }
}

fn norm2(v: &[f64]) -> f64 {
    float::sqrt(v.iter().map(|x| x * x).sum())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

struct RawSolve {
    x: Vec<f64>,
    iterations: usize,
    relative_residual: f64,
    converged: bool,
    shift: f64,
}

fn pcg_raw(
    matrix: &SymCsr,
    rhs: &[f64],
    cfg: &SolveConfig,
) -> Result<RawSolve, SolverError> {
    let n = matrix.dim();
    let mut x = alloc::vec![0.0; n];
    let rhs_norm = norm2(rhs);
    if n == 0 || rhs_norm == 0.0 {
        return Ok(RawSolve {
            x,
            iterations: 0,
            relative_residual: 0.0,
            converged: true,
            shift: 0.0,
        });
    }

    let precond = match cfg.preconditioner {
        Preconditioner::Ilu0 => Some(ilu0_factor(matrix)?),
        Preconditioner::None => None,
    };
    let shift = precond.as_ref().map_or(0.0, |p| p.shift);

    let max_iter = cfg.iter_cap(n);
    let mut r = rhs.to_vec();
    let mut z = alloc::vec![0.0; n];
    match &precond {
        Some(p) => p.apply(&r, &mut z),
        None => z.copy_from_slice(&r),
    }
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut kp = alloc::vec![0.0; n];
    let mut res_norm = rhs_norm;

    for it in 1..=max_iter {
        matrix.matvec(&p, &mut kp);
        let pkp = dot(&p, &kp);
        if !(pkp > 0.0) || !pkp.is_finite() {
            return Err(SolverError::Breakdown { iteration: it });
        }
        let alpha = rz / pkp;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * kp[i];
        }
        res_norm = norm2(&r);
        if res_norm <= cfg.tol * rhs_norm {
            return Ok(RawSolve {
                x,
                iterations: it,
                relative_residual: res_norm / rhs_norm,
                converged: true,
                shift,
            });
        }
        match &precond {
            Some(pr) => pr.apply(&r, &mut z),
            None => z.copy_from_slice(&r),
        }
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }

    Ok(RawSolve {
        x,
        iterations: max_iter,
        relative_residual: res_norm / rhs_norm,
        converged: false,
        shift,
    })
}

/// Merge solved free values, prescribed Dirichlet values and gate-interior
/// voltages into one nodal field covering every mesh node.
fn merge_full_field(
    mesh: &Mesh,
    system: &LinearSystem,
    free_values: &[f64],
    dirichlet: &BTreeMap<usize, f64>,
    gate_voltages: &[f64],
) -> Vec<f64> {
    let n = mesh.node_count();
    let mut values = alloc::vec![0.0; n];
    let mut assigned = alloc::vec![false; n];
    for (eq, &node) in system.free_to_node.iter().enumerate() {
        values[node] = free_values[eq];
        assigned[node] = true;
    }
    for (&node, &v) in dirichlet {
        values[node] = v;
        assigned[node] = true;
    }
    // nodes buried inside gate conductors take their gate's voltage, for
    // output continuity
    for e in 0..mesh.element_count() {
        if let Some(g) = mesh.element_gate[e] {
            let volts = gate_voltages[g as usize];
            for node in mesh.element_nodes(e) {
                if !assigned[node] {
                    values[node] = volts;
                    assigned[node] = true;
                }
            }
        }
    }
    values
}

fn finish<'m>(
    mesh: &'m Mesh,
    system: &LinearSystem,
    raw: RawSolve,
    dirichlet: &BTreeMap<usize, f64>,
    gate_voltages: &[f64],
    wall_time: f64,
    cfg: &SolveConfig,
) -> (SolutionField<'m>, SolveReport) {
    let values = merge_full_field(mesh, system, &raw.x, dirichlet, gate_voltages);
    let report = SolveReport {
        iterations: raw.iterations,
        final_relative_residual: raw.relative_residual,
        converged: raw.converged,
        wall_time,
        preconditioner: cfg.preconditioner.label(),
        diagonal_shift: raw.shift,
    };
    (SolutionField { mesh, values }, report)
}

#[cfg(feature = "std")]
fn now() -> Option<std::time::Instant> {
    Some(std::time::Instant::now())
}
#[cfg(not(feature = "std"))]
fn now() -> Option<()> {
    None
}

#[cfg(feature = "std")]
fn elapsed(t: Option<std::time::Instant>) -> f64 {
    t.map(|t| t.elapsed().as_secs_f64()).unwrap_or(0.0)
}
#[cfg(not(feature = "std"))]
fn elapsed(_: Option<()>) -> f64 {
    0.0
}

/// Solve with the Dirichlet values the mesh was built with.
///
/// A non-converged run is not an error: the report carries the flag and
/// the best iterate is returned.
pub fn pcg_solve<'m>(
    mesh: &'m Mesh,
    system: &LinearSystem,
    cfg: &SolveConfig,
) -> Result<(SolutionField<'m>, SolveReport), SolverError> {
    let t0 = now();
    let raw = pcg_raw(&system.matrix, &system.rhs, cfg)?;
    let wall = elapsed(t0);
    Ok(finish(
        mesh,
        system,
        raw,
        &system.dirichlet_values,
        &mesh.gate_voltages,
        wall,
        cfg,
    ))
}

/// Solve the same assembled system under different surface voltages.
///
/// Only the right-hand side changes, so sweeps re-use the matrix and its
/// factorisation cost structure.
pub fn pcg_solve_with_values<'m>(
    mesh: &'m Mesh,
    system: &LinearSystem,
    voltages: &SurfaceVoltages,
    cfg: &SolveConfig,
) -> Result<(SolutionField<'m>, SolveReport), SolverError> {
    let t0 = now();
    let dirichlet = mesh.dirichlet_values_for(voltages)?;
    let rhs = system.rhs_for(&dirichlet)?;
    let raw = pcg_raw(&system.matrix, &rhs, cfg)?;
    let wall = elapsed(t0);
    Ok(finish(mesh, system, raw, &dirichlet, &voltages.gates, wall, cfg))
}

/// Gaussian elimination with partial pivoting on the dense mirror of a
/// sparse matrix. The small-scale oracle for the iterative path.
pub fn solve_dense_system(matrix: &SymCsr, rhs: &[f64]) -> Result<Vec<f64>, SolverError> {
    let n = matrix.dim();
    let mut a = matrix.to_dense();
    let mut b = rhs.to_vec();
    for col in 0..n {
        // pivot row
        let mut pivot = col;
        let mut best = float::abs(a[col * n + col]);
        for row in col + 1..n {
            let mag = float::abs(a[row * n + col]);
            if mag > best {
                best = mag;
                pivot = row;
            }
        }
        if !(best > 0.0) || !best.is_finite() {
            return Err(SolverError::SingularMatrix { row: col });
        }
        if pivot != col {
            for c in 0..n {
                a.swap(col * n + c, pivot * n + c);
            }
            b.swap(col, pivot);
        }
        let inv = 1.0 / a[col * n + col];
        for row in col + 1..n {
            let factor = a[row * n + col] * inv;
            if factor == 0.0 {
                continue;
            }
            for c in col..n {
                a[row * n + c] -= factor * a[col * n + c];
            }
            b[row] -= factor * b[col];
        }
    }
    for row in (0..n).rev() {
        let mut acc = b[row];
        for c in row + 1..n {
            acc -= a[row * n + c] * b[c];
        }
        b[row] = acc / a[row * n + row];
    }
    Ok(b)
}

/// Direct solution of the reduced system via the dense oracle.
pub fn dense_solve<'m>(
    mesh: &'m Mesh,
    system: &LinearSystem,
) -> Result<SolutionField<'m>, SolverError> {
    dense_solve_with_cap(mesh, system, DENSE_SOLVE_CAP)
}

pub fn dense_solve_with_cap<'m>(
    mesh: &'m Mesh,
    system: &LinearSystem,
    cap: usize,
) -> Result<SolutionField<'m>, SolverError> {
    let n = system.dim();
    if n > cap {
        return Err(SolverError::TooLargeForDense { dim: n, cap });
    }
    let x = solve_dense_system(&system.matrix, &system.rhs)?;
    let values = merge_full_field(
        mesh,
        system,
        &x,
        &system.dirichlet_values,
        &mesh.gate_voltages,
    );
    Ok(SolutionField { mesh, values })
}
