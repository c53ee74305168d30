//! Global sparse system: scatter of element matrices, Neumann loads, and
//! symmetric Dirichlet elimination.
//!
//! Only the lower triangle of the stiffness matrix is stored (compressed
//! row form, columns ascending, diagonal last in each row), so assembled
//! symmetry is exact by construction. Dirichlet degrees of freedom are
//! eliminated symmetrically: constrained rows and columns never enter the
//! matrix, and their contribution moves to the right-hand side as
//! `F_free -= K_free,c * phi_c`. The reduced matrix is positive definite.
//!
//! Elements are visited in index order and contributions accumulate in a
//! fixed sequence, so assembly is bitwise reproducible.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::fmt::Write as _;

use crate::element::{element_stiffness, face_load, ElementError, QuadratureRule};
use crate::mesh::Mesh;

#[derive(Debug, Clone, PartialEq)]
pub enum AssemblyError {
    Element(ElementError),
    /// A free node ended up without stiffness support.
    SingularNode { node: usize },
    /// `rhs_for` was handed a value map missing a constrained node.
    MissingDirichletValue { node: usize },
}

impl fmt::Display for AssemblyError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AssemblyError::Element(e) => write!(f, "element error: {}", e),
            AssemblyError::SingularNode { node } => {
                write!(f, "free node {} has no positive diagonal stiffness", node)
            }
            AssemblyError::MissingDirichletValue { node } => {
                write!(f, "no Dirichlet value supplied for constrained node {}", node)
            }
        }
    }
}

impl core::error::Error for AssemblyError {}

impl From<ElementError> for AssemblyError {
    fn from(e: ElementError) -> Self {
        AssemblyError::Element(e)
    }
}

/// Sparse symmetric matrix, lower triangle in compressed-row storage.
///
/// Column indices within a row are ascending, so the diagonal is the last
/// entry of its row.
#[derive(Debug, Clone)]
pub struct SymCsr {
    n: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl SymCsr {
    /// Build a symmetric matrix from lower-triangle triplets (row >= col);
    /// duplicate positions are summed and missing diagonal entries are
    /// inserted as explicit zeros.
    pub fn from_lower_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut entries: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for &(r, c, v) in triplets {
            assert!(r >= c, "lower triangle requires row >= col");
            assert!(r < n && c < n);
            *entries.entry((r, c)).or_insert(0.0) += v;
        }
        for d in 0..n {
            entries.entry((d, d)).or_insert(0.0);
        }
        let mut row_ptr = alloc::vec![0usize; n + 1];
        let mut col_idx = Vec::with_capacity(entries.len());
        let mut values = Vec::with_capacity(entries.len());
        for (&(r, c), &v) in &entries {
            col_idx.push(c);
            values.push(v);
            row_ptr[r + 1] = col_idx.len();
        }
        for r in 0..n {
            if row_ptr[r + 1] == 0 {
                row_ptr[r + 1] = row_ptr[r];
            }
        }
        SymCsr {
            n,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Stored (lower-triangle) entry count.
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn diag(&self, row: usize) -> f64 {
        self.values[self.row_ptr[row + 1] - 1]
    }

    /// Stored entry (i, j); returns 0 for positions outside the pattern.
    /// Symmetric: get(i, j) == get(j, i).
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        let row = &self.col_idx[self.row_ptr[r]..self.row_ptr[r + 1]];
        match row.binary_search(&c) {
            Ok(pos) => self.values[self.row_ptr[r] + pos],
            Err(_) => 0.0,
        }
    }

    /// y = K x, using both triangles.
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        y.iter_mut().for_each(|v| *v = 0.0);
        for r in 0..self.n {
            let (start, end) = (self.row_ptr[r], self.row_ptr[r + 1]);
            let mut acc = 0.0;
            for idx in start..end {
                let c = self.col_idx[idx];
                let v = self.values[idx];
                acc += v * x[c];
                if c != r {
                    y[c] += v * x[r];
                }
            }
            y[r] += acc;
        }
    }

    /// Dense mirror (row-major, n*n), for the direct oracle and tests.
    pub fn to_dense(&self) -> Vec<f64> {
        let n = self.n;
        let mut dense = alloc::vec![0.0; n * n];
        for r in 0..n {
            for idx in self.row_ptr[r]..self.row_ptr[r + 1] {
                let c = self.col_idx[idx];
                let v = self.values[idx];
                dense[r * n + c] = v;
                dense[c * n + r] = v;
            }
        }
        dense
    }
}

/// Reduced system `K phi = F` over the free (unconstrained, active) nodes.
#[derive(Debug, Clone)]
pub struct LinearSystem {
    pub matrix: SymCsr,
    /// Right-hand side for the Dirichlet values the mesh was built with.
    pub rhs: Vec<f64>,
    /// Equation index -> node id.
    pub free_to_node: Vec<usize>,
    /// Node id -> equation index.
    pub node_to_free: Vec<Option<usize>>,
    /// Constrained node -> prescribed value (copied from the mesh).
    pub dirichlet_values: BTreeMap<usize, f64>,
    // coupling of free equations to constrained nodes, CSR over equations
    bc_ptr: Vec<usize>,
    bc_node: Vec<usize>,
    bc_coef: Vec<f64>,
    // Neumann contribution to the RHS (independent of Dirichlet values)
    neumann_rhs: Vec<f64>,
}

impl LinearSystem {
    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    /// Rebuild the right-hand side for a different set of Dirichlet node
    /// values (same mesh, same matrix). The map must cover every
    /// constrained node.
    pub fn rhs_for(&self, values: &BTreeMap<usize, f64>) -> Result<Vec<f64>, AssemblyError> {
        let mut rhs = self.neumann_rhs.clone();
        for eq in 0..self.dim() {
            let mut acc = 0.0;
            for idx in self.bc_ptr[eq]..self.bc_ptr[eq + 1] {
                let node = self.bc_node[idx];
                let v = values
                    .get(&node)
                    .ok_or(AssemblyError::MissingDirichletValue { node })?;
                acc += self.bc_coef[idx] * v;
            }
            rhs[eq] -= acc;
        }
        Ok(rhs)
    }

    /// Matrix in Matrix Market symmetric coordinate format (1-based,
    /// lower triangle).
    pub fn matrix_market_matrix(&self) -> String {
        let m = &self.matrix;
        let mut s = String::new();
        let _ = writeln!(s, "%%MatrixMarket matrix coordinate real symmetric");
        let _ = writeln!(s, "{} {} {}", m.dim(), m.dim(), m.nnz());
        for r in 0..m.dim() {
            for idx in m.row_ptr[r]..m.row_ptr[r + 1] {
                let _ = writeln!(s, "{} {} {:.16e}", r + 1, m.col_idx[idx] + 1, m.values[idx]);
            }
        }
        s
    }

    /// Right-hand side in Matrix Market dense array format.
    pub fn matrix_market_rhs(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "%%MatrixMarket matrix array real general");
        let _ = writeln!(s, "{} 1", self.rhs.len());
        for v in &self.rhs {
            let _ = writeln!(s, "{:.16e}", v);
        }
        s
    }
}

/// Assemble the reduced system for a mesh.
///
/// Volume terms use the minimal exact rule (2x2x2 Gauss) and Neumann faces
/// the matching 2x2 face rule.
pub fn assemble(mesh: &Mesh) -> Result<LinearSystem, AssemblyError> {
    let n_nodes = mesh.node_count();
    let volume_rule = QuadratureRule::gauss_volume(2).expect("2-point rule");
    let face_rule = QuadratureRule::gauss_face(2).expect("2-point rule");

    // free numbering: nodes supported by an active element and not constrained
    let mut supported = alloc::vec![false; n_nodes];
    for e in 0..mesh.element_count() {
        if mesh.active[e] {
            for n in mesh.element_nodes(e) {
                supported[n] = true;
            }
        }
    }
    let mut node_to_free: Vec<Option<usize>> = alloc::vec![None; n_nodes];
    let mut free_to_node = Vec::new();
    for node in 0..n_nodes {
        if supported[node] && !mesh.dirichlet_nodes.contains_key(&node) {
            node_to_free[node] = Some(free_to_node.len());
            free_to_node.push(node);
        }
    }
    let n_free = free_to_node.len();

    // pattern pass: lower-triangle column lists per row
    let mut row_cols: Vec<Vec<usize>> = alloc::vec![Vec::new(); n_free];
    for e in 0..mesh.element_count() {
        if !mesh.active[e] {
            continue;
        }
        let nodes = mesh.element_nodes(e);
        for a in 0..8 {
            let Some(ea) = node_to_free[nodes[a]] else { continue };
            for b in 0..8 {
                let Some(eb) = node_to_free[nodes[b]] else { continue };
                if eb <= ea {
                    row_cols[ea].push(eb);
                }
            }
        }
    }
    let mut row_ptr = Vec::with_capacity(n_free + 1);
    row_ptr.push(0usize);
    let mut col_idx = Vec::new();
    for cols in &mut row_cols {
        cols.sort_unstable();
        cols.dedup();
        col_idx.extend_from_slice(cols);
        row_ptr.push(col_idx.len());
    }
    let mut matrix = SymCsr {
        n: n_free,
        row_ptr,
        col_idx,
        values: alloc::vec![0.0; 0],
    };
    matrix.values = alloc::vec![0.0; matrix.col_idx.len()];

    // fill pass
    let mut bc_triplets: Vec<(u64, f64)> = Vec::new(); // key = eq << 32 | node
    for e in 0..mesh.element_count() {
        if !mesh.active[e] {
            continue;
        }
        let corners = mesh.element_corners(e);
        let ke = element_stiffness(&corners, mesh.element_eps[e], &volume_rule)?;
        let nodes = mesh.element_nodes(e);
        for a in 0..8 {
            let Some(ea) = node_to_free[nodes[a]] else { continue };
            for b in 0..8 {
                match node_to_free[nodes[b]] {
                    Some(eb) if eb <= ea => {
                        let start = matrix.row_ptr[ea];
                        let end = matrix.row_ptr[ea + 1];
                        let pos = matrix.col_idx[start..end]
                            .binary_search(&eb)
                            .expect("pattern covers fill");
                        matrix.values[start + pos] += ke[a][b];
                    }
                    Some(_) => {} // upper triangle: mirrored by storage
                    None => {
                        if mesh.dirichlet_nodes.contains_key(&nodes[b]) {
                            let key = ((ea as u64) << 32) | nodes[b] as u64;
                            bc_triplets.push((key, ke[a][b]));
                        }
                        // nodes outside the active support never pair with
                        // a free node of the same element
                    }
                }
            }
        }
    }

    // merge boundary-coupling triplets into CSR over equations: sorted by
    // (eq, node), duplicates summed, then per-equation counts prefix-summed
    bc_triplets.sort_unstable_by_key(|&(k, _)| k);
    let mut bc_ptr = alloc::vec![0usize; n_free + 1];
    let mut bc_node = Vec::new();
    let mut bc_coef: Vec<f64> = Vec::new();
    let mut last_key = u64::MAX;
    for &(key, v) in &bc_triplets {
        if key == last_key {
            *bc_coef.last_mut().unwrap() += v;
        } else {
            let eq = (key >> 32) as usize;
            bc_node.push((key & 0xffff_ffff) as usize);
            bc_coef.push(v);
            bc_ptr[eq + 1] += 1;
            last_key = key;
        }
    }
    for eq in 0..n_free {
        bc_ptr[eq + 1] += bc_ptr[eq];
    }

    // Neumann loads
    let mut neumann_rhs = alloc::vec![0.0; n_free];
    for nf in &mesh.neumann_faces {
        let nodes = mesh.element_nodes(nf.element);
        let corners = mesh.element_corners(nf.element);
        let local = nf.face.local_nodes();
        let face_corners = [
            corners[local[0]],
            corners[local[1]],
            corners[local[2]],
            corners[local[3]],
        ];
        let f = face_load(&face_corners, mesh.neumann_flux, &face_rule)?;
        for (slot, &ln) in local.iter().enumerate() {
            if let Some(eq) = node_to_free[nodes[ln]] {
                neumann_rhs[eq] += f[slot];
            }
        }
    }

    for eq in 0..n_free {
        if !(matrix.diag(eq) > 0.0) {
            return Err(AssemblyError::SingularNode {
                node: free_to_node[eq],
            });
        }
    }

    let mut system = LinearSystem {
        matrix,
        rhs: Vec::new(),
        free_to_node,
        node_to_free,
        dirichlet_values: mesh.dirichlet_nodes.clone(),
        bc_ptr,
        bc_node,
        bc_coef,
        neumann_rhs,
    };
    system.rhs = system.rhs_for(&system.dirichlet_values)?;
    Ok(system)
}
