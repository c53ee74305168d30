//! Structured, interface-aligned hexahedral meshing of a device.
//!
//! The mesh is a tensor product of three strictly increasing coordinate
//! lists. Every face coordinate of every region and gate box is inserted
//! into the corresponding list, so each element lies strictly inside one
//! material and per-element permittivity is exact (no homogenisation).
//! Remaining space is filled towards a target node count or spacing, with
//! optional graded refinement along z: spacing inside a band is finer by a
//! fixed ratio and gaps adjacent to the band are filled with a geometric
//! transition.
//!
//! Elements whose centre falls inside a gate box are deactivated: gate
//! interiors are removed from the solve and their surfaces carry Dirichlet
//! values. Node and element ids are lexicographic with x fastest:
//! `id = i + nx*(j + ny*k)`.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use core::fmt;

use crate::float;
use crate::geometry::{Box3, DeviceSpec, GeometryError, PointMaterial};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X = 0,
    Y = 1,
    Z = 2,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Axis::X => "x",
            Axis::Y => "y",
            Axis::Z => "z",
        }
    }

    /// The other two axes, in (x, y, z) order.
    pub fn others(self) -> [Axis; 2] {
        match self {
            Axis::X => [Axis::Y, Axis::Z],
            Axis::Y => [Axis::X, Axis::Z],
            Axis::Z => [Axis::X, Axis::Y],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MeshError {
    TooFewNodes { axis: Axis, requested: usize },
    NonIncreasingAxis { axis: Axis },
    BadSpacing { axis: Axis, spacing: f64 },
    BadGrading,
    BadPermittivity { element: usize, value: f64 },
    DirichletConflict { node: usize, a: f64, b: f64 },
    PointOutsideDomain { point: [f64; 3] },
    PointInGateCell { element: usize },
    LineOutsideActiveRegion,
    VoltageCountMismatch { expected: usize, got: usize },
    NotDeviceMesh,
    Geometry(GeometryError),
}

impl fmt::Display for MeshError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MeshError::TooFewNodes { axis, requested } => write!(
                f,
                "axis {} needs at least 2 nodes, requested {}",
                axis.name(),
                requested
            ),
            MeshError::NonIncreasingAxis { axis } => {
                write!(f, "axis {} coordinates are not strictly increasing", axis.name())
            }
            MeshError::BadSpacing { axis, spacing } => {
                write!(f, "axis {} target spacing {} is not positive", axis.name(), spacing)
            }
            MeshError::BadGrading => write!(f, "invalid z grading (ratio < 1 or inverted band)"),
            MeshError::BadPermittivity { element, value } => {
                write!(f, "element {} has non-positive permittivity {}", element, value)
            }
            MeshError::DirichletConflict { node, a, b } => write!(
                f,
                "node {} is assigned two different Dirichlet voltages ({} and {})",
                node, a, b
            ),
            MeshError::PointOutsideDomain { point } => {
                write!(f, "point {:?} lies outside the mesh domain", point)
            }
            MeshError::PointInGateCell { element } => {
                write!(f, "point lies in deactivated (gate) element {}", element)
            }
            MeshError::LineOutsideActiveRegion => {
                write!(f, "probe line passes only through deactivated cells")
            }
            MeshError::VoltageCountMismatch { expected, got } => {
                write!(f, "expected {} gate voltages, got {}", expected, got)
            }
            MeshError::NotDeviceMesh => {
                write!(f, "mesh was not built from a device spec; no surfaces to re-drive")
            }
            MeshError::Geometry(e) => write!(f, "geometry error: {}", e),
        }
    }
}

impl core::error::Error for MeshError {}

impl From<GeometryError> for MeshError {
    fn from(e: GeometryError) -> Self {
        MeshError::Geometry(e)
    }
}

/// Strictly increasing node coordinates along each axis, nm.
#[derive(Debug, Clone, PartialEq)]
pub struct GridAxes {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
}

impl GridAxes {
    pub fn new(x: Vec<f64>, y: Vec<f64>, z: Vec<f64>) -> Result<Self, MeshError> {
        let axes = GridAxes { x, y, z };
        for a in Axis::ALL {
            let c = axes.coords(a);
            if c.len() < 2 {
                return Err(MeshError::TooFewNodes {
                    axis: a,
                    requested: c.len(),
                });
            }
            if c.windows(2).any(|w| !(w[0] < w[1])) {
                return Err(MeshError::NonIncreasingAxis { axis: a });
            }
        }
        Ok(axes)
    }

    /// Uniformly spaced axes over a box; `counts` are node counts per axis.
    pub fn uniform(domain: &Box3, counts: [usize; 3]) -> Result<Self, MeshError> {
        let mut lists: [Vec<f64>; 3] = [Vec::new(), Vec::new(), Vec::new()];
        for d in 0..3 {
            let n = counts[d];
            if n < 2 {
                return Err(MeshError::TooFewNodes {
                    axis: Axis::ALL[d],
                    requested: n,
                });
            }
            let (lo, hi) = (domain.min[d], domain.max[d]);
            lists[d] = (0..n)
                .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
                .collect();
            // endpoints exactly
            lists[d][0] = lo;
            lists[d][n - 1] = hi;
        }
        let [x, y, z] = lists;
        GridAxes::new(x, y, z)
    }

    pub fn coords(&self, axis: Axis) -> &[f64] {
        match axis {
            Axis::X => &self.x,
            Axis::Y => &self.y,
            Axis::Z => &self.z,
        }
    }

    pub fn node_counts(&self) -> [usize; 3] {
        [self.x.len(), self.y.len(), self.z.len()]
    }

    pub fn node_count(&self) -> usize {
        self.x.len() * self.y.len() * self.z.len()
    }

    pub fn element_count(&self) -> usize {
        (self.x.len() - 1) * (self.y.len() - 1) * (self.z.len() - 1)
    }
}

/// Per-axis mesh density target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AxisTarget {
    /// Aim for at least this many nodes along the axis.
    Nodes(usize),
    /// Aim for at most this spacing, nm.
    Spacing(f64),
}

/// Mesh density request for the three axes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Resolution {
    pub targets: [AxisTarget; 3],
}

impl Resolution {
    pub fn nodes(nx: usize, ny: usize, nz: usize) -> Self {
        Resolution {
            targets: [
                AxisTarget::Nodes(nx),
                AxisTarget::Nodes(ny),
                AxisTarget::Nodes(nz),
            ],
        }
    }

    pub fn spacing(hx: f64, hy: f64, hz: f64) -> Self {
        Resolution {
            targets: [
                AxisTarget::Spacing(hx),
                AxisTarget::Spacing(hy),
                AxisTarget::Spacing(hz),
            ],
        }
    }
}

/// Static graded refinement along z: node spacing inside `band` is finer
/// than the surrounding spacing by `ratio`, with geometric transitions in
/// the gaps touching the band.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZGrading {
    pub band: Option<(f64, f64)>,
    pub ratio: f64,
}

impl ZGrading {
    pub fn none() -> Self {
        ZGrading {
            band: None,
            ratio: 1.0,
        }
    }

    pub fn band(z_lo: f64, z_hi: f64, ratio: f64) -> Self {
        ZGrading {
            band: Some((z_lo, z_hi)),
            ratio,
        }
    }

    /// Default band for a device: the z extent spanned by its gates (the
    /// level where the interesting field structure lives). Ratio 2.
    pub fn default_for(spec: &DeviceSpec) -> Self {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for g in &spec.gates {
            lo = lo.min(g.bounds.min[2]);
            hi = hi.max(g.bounds.max[2]);
        }
        if lo < hi {
            ZGrading::band(lo, hi, 2.0)
        } else {
            ZGrading::none()
        }
    }

    fn validate(&self) -> Result<(), MeshError> {
        if !(self.ratio >= 1.0) {
            return Err(MeshError::BadGrading);
        }
        if let Some((lo, hi)) = self.band {
            if !(lo < hi) {
                return Err(MeshError::BadGrading);
            }
        }
        Ok(())
    }
}

/// A Dirichlet surface of the device: the grounded base plane or one of
/// the gates (by index into `DeviceSpec::gates`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum SurfaceId {
    Base,
    Gate(usize),
}

/// Concrete voltages for every Dirichlet surface of a device mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceVoltages {
    pub base: f64,
    pub gates: Vec<f64>,
}

impl SurfaceVoltages {
    pub fn from_spec(spec: &DeviceSpec) -> Self {
        SurfaceVoltages {
            base: spec.base_voltage,
            gates: spec.gates.iter().map(|g| g.voltage).collect(),
        }
    }

    /// All surfaces at zero.
    pub fn zero(gate_count: usize) -> Self {
        SurfaceVoltages {
            base: 0.0,
            gates: alloc::vec![0.0; gate_count],
        }
    }

    pub fn get(&self, id: SurfaceId) -> f64 {
        match id {
            SurfaceId::Base => self.base,
            SurfaceId::Gate(i) => self.gates[i],
        }
    }

    pub fn set(&mut self, id: SurfaceId, volts: f64) {
        match id {
            SurfaceId::Base => self.base = volts,
            SurfaceId::Gate(i) => self.gates[i] = volts,
        }
    }
}

/// Local face of a hexahedral element.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Face {
    XMin,
    XMax,
    YMin,
    YMax,
    ZMin,
    ZMax,
}

impl Face {
    pub const ALL: [Face; 6] = [
        Face::XMin,
        Face::XMax,
        Face::YMin,
        Face::YMax,
        Face::ZMin,
        Face::ZMax,
    ];

    /// Local node ids of the face, traversing the perimeter (quad order).
    pub fn local_nodes(self) -> [usize; 4] {
        match self {
            Face::XMin => [0, 3, 7, 4],
            Face::XMax => [1, 2, 6, 5],
            Face::YMin => [0, 1, 5, 4],
            Face::YMax => [3, 2, 6, 7],
            Face::ZMin => [0, 1, 2, 3],
            Face::ZMax => [4, 5, 6, 7],
        }
    }

    /// (axis, +1/-1) of the outward normal.
    pub fn normal(self) -> (Axis, i32) {
        match self {
            Face::XMin => (Axis::X, -1),
            Face::XMax => (Axis::X, 1),
            Face::YMin => (Axis::Y, -1),
            Face::YMax => (Axis::Y, 1),
            Face::ZMin => (Axis::Z, -1),
            Face::ZMax => (Axis::Z, 1),
        }
    }
}

/// An exterior face of the active region carrying the Neumann condition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeumannFace {
    pub element: usize,
    pub face: Face,
    /// Face area, nm^2.
    pub area: f64,
}

/// Structured hexahedral mesh with material tags and boundary
/// classification.
#[derive(Debug, Clone)]
pub struct Mesh {
    pub axes: GridAxes,
    /// Relative permittivity per element (meaningful for active elements).
    pub element_eps: Vec<f64>,
    /// False inside gate conductors; those elements are not assembled.
    pub active: Vec<bool>,
    /// Gate index for deactivated elements.
    pub element_gate: Vec<Option<u32>>,
    /// Gate voltages the mesh was built with, by gate index.
    pub gate_voltages: Vec<f64>,
    pub base_voltage: f64,
    /// Prescribed Neumann flux (C/m^2) applied on every Neumann face.
    pub neumann_flux: f64,
    /// Constrained node -> prescribed voltage.
    pub dirichlet_nodes: BTreeMap<usize, f64>,
    /// Constrained node -> surfaces claiming it (device meshes only).
    pub dirichlet_claims: BTreeMap<usize, Vec<SurfaceId>>,
    pub neumann_faces: Vec<NeumannFace>,
}

impl Mesh {
    pub fn node_counts(&self) -> [usize; 3] {
        self.axes.node_counts()
    }

    pub fn node_count(&self) -> usize {
        self.axes.node_count()
    }

    pub fn element_count(&self) -> usize {
        self.axes.element_count()
    }

    pub fn active_element_count(&self) -> usize {
        self.active.iter().filter(|&&a| a).count()
    }

    pub fn cell_counts(&self) -> [usize; 3] {
        let [nx, ny, nz] = self.node_counts();
        [nx - 1, ny - 1, nz - 1]
    }

    pub fn node_id(&self, i: usize, j: usize, k: usize) -> usize {
        let [nx, ny, _] = self.node_counts();
        i + nx * (j + ny * k)
    }

    pub fn node_ijk(&self, id: usize) -> [usize; 3] {
        let [nx, ny, _] = self.node_counts();
        [id % nx, (id / nx) % ny, id / (nx * ny)]
    }

    pub fn node_coords(&self, id: usize) -> [f64; 3] {
        let [i, j, k] = self.node_ijk(id);
        [self.axes.x[i], self.axes.y[j], self.axes.z[k]]
    }

    pub fn element_id(&self, i: usize, j: usize, k: usize) -> usize {
        let [cx, cy, _] = self.cell_counts();
        i + cx * (j + cy * k)
    }

    pub fn element_ijk(&self, e: usize) -> [usize; 3] {
        let [cx, cy, _] = self.cell_counts();
        [e % cx, (e / cx) % cy, e / (cx * cy)]
    }

    /// Global node ids of an element, in the documented hex corner order.
    pub fn element_nodes(&self, e: usize) -> [usize; 8] {
        let [i, j, k] = self.element_ijk(e);
        [
            self.node_id(i, j, k),
            self.node_id(i + 1, j, k),
            self.node_id(i + 1, j + 1, k),
            self.node_id(i, j + 1, k),
            self.node_id(i, j, k + 1),
            self.node_id(i + 1, j, k + 1),
            self.node_id(i + 1, j + 1, k + 1),
            self.node_id(i, j + 1, k + 1),
        ]
    }

    pub fn element_corners(&self, e: usize) -> [[f64; 3]; 8] {
        let nodes = self.element_nodes(e);
        core::array::from_fn(|a| self.node_coords(nodes[a]))
    }

    pub fn element_center(&self, e: usize) -> [f64; 3] {
        let [i, j, k] = self.element_ijk(e);
        [
            0.5 * (self.axes.x[i] + self.axes.x[i + 1]),
            0.5 * (self.axes.y[j] + self.axes.y[j + 1]),
            0.5 * (self.axes.z[k] + self.axes.z[k + 1]),
        ]
    }

    pub fn element_extents(&self, e: usize) -> [f64; 3] {
        let [i, j, k] = self.element_ijk(e);
        [
            self.axes.x[i + 1] - self.axes.x[i],
            self.axes.y[j + 1] - self.axes.y[j],
            self.axes.z[k + 1] - self.axes.z[k],
        ]
    }

    /// Containing cell (active or not) and local coordinates of a point.
    ///
    /// Points exactly on an inter-element face resolve to the lower element
    /// index along that axis.
    pub fn locate_cell(&self, p: [f64; 3]) -> Result<(usize, [f64; 3]), MeshError> {
        let mut cell = [0usize; 3];
        let mut local = [0.0f64; 3];
        for (d, axis) in Axis::ALL.iter().enumerate() {
            let coords = self.axes.coords(*axis);
            let n = coords.len();
            if p[d] < coords[0] || p[d] > coords[n - 1] {
                return Err(MeshError::PointOutsideDomain { point: p });
            }
            let mut lt = coords.partition_point(|&c| c < p[d]);
            if lt == 0 {
                lt = 1;
            }
            let c = (lt - 1).min(n - 2);
            cell[d] = c;
            local[d] = 2.0 * (p[d] - coords[c]) / (coords[c + 1] - coords[c]) - 1.0;
        }
        Ok((self.element_id(cell[0], cell[1], cell[2]), local))
    }

    /// Containing active element of a point; gate interiors are an error.
    pub fn locate_element(&self, p: [f64; 3]) -> Result<(usize, [f64; 3]), MeshError> {
        let (e, local) = self.locate_cell(p)?;
        if !self.active[e] {
            return Err(MeshError::PointInGateCell { element: e });
        }
        Ok((e, local))
    }

    /// Recompute the Dirichlet node values for a different set of surface
    /// voltages, re-checking for conflicts. Only meshes built from a
    /// device spec carry the surface attribution this needs.
    pub fn dirichlet_values_for(
        &self,
        sv: &SurfaceVoltages,
    ) -> Result<BTreeMap<usize, f64>, MeshError> {
        if self.dirichlet_claims.is_empty() && !self.dirichlet_nodes.is_empty() {
            return Err(MeshError::NotDeviceMesh);
        }
        if sv.gates.len() != self.gate_voltages.len() {
            return Err(MeshError::VoltageCountMismatch {
                expected: self.gate_voltages.len(),
                got: sv.gates.len(),
            });
        }
        let mut out = BTreeMap::new();
        for (&node, claims) in &self.dirichlet_claims {
            let v = sv.get(claims[0]);
            for &c in &claims[1..] {
                let w = sv.get(c);
                if w != v {
                    return Err(MeshError::DirichletConflict { node, a: v, b: w });
                }
            }
            out.insert(node, v);
        }
        Ok(out)
    }

    /// The voltages the mesh was built with, as a `SurfaceVoltages`.
    pub fn built_voltages(&self) -> SurfaceVoltages {
        SurfaceVoltages {
            base: self.base_voltage,
            gates: self.gate_voltages.clone(),
        }
    }
}

fn target_spacing(axis: Axis, span: f64, target: AxisTarget) -> Result<f64, MeshError> {
    match target {
        AxisTarget::Nodes(n) => {
            if n < 2 {
                return Err(MeshError::TooFewNodes {
                    axis,
                    requested: n,
                });
            }
            Ok(span / (n - 1) as f64)
        }
        AxisTarget::Spacing(h) => {
            if !(h > 0.0) || !h.is_finite() {
                return Err(MeshError::BadSpacing { axis, spacing: h });
            }
            Ok(h)
        }
    }
}

/// Interior fill coordinates for one gap, with spacing grading from `ha`
/// at the left end to `hb` at the right end (geometric progression, scaled
/// to fit exactly).
fn fill_gap(a: f64, b: f64, ha: f64, hb: f64) -> Vec<f64> {
    let len = b - a;
    let havg = 0.5 * (ha + hb);
    let n = float::ceil(len / havg - 1e-9).max(1.0) as usize;
    if n <= 1 {
        return Vec::new();
    }
    let q = float::powf(hb / ha, 1.0 / (n - 1) as f64);
    let mut spacings = Vec::with_capacity(n);
    let mut h = ha;
    let mut total = 0.0;
    for _ in 0..n {
        spacings.push(h);
        total += h;
        h *= q;
    }
    let scale = len / total;
    let mut out = Vec::with_capacity(n - 1);
    let mut pos = a;
    for s in spacings.iter().take(n - 1) {
        pos += s * scale;
        out.push(pos);
    }
    out
}

fn build_axis(
    axis: Axis,
    lo: f64,
    hi: f64,
    mut mandatory: Vec<f64>,
    target: AxisTarget,
    grading: Option<&ZGrading>,
) -> Result<Vec<f64>, MeshError> {
    mandatory.push(lo);
    mandatory.push(hi);
    if let Some(g) = grading {
        if let Some((b0, b1)) = g.band {
            if b0 > lo && b0 < hi {
                mandatory.push(b0);
            }
            if b1 > lo && b1 < hi {
                mandatory.push(b1);
            }
        }
    }
    mandatory.retain(|&c| c >= lo && c <= hi);
    mandatory.sort_by(|a, b| a.partial_cmp(b).unwrap());
    mandatory.dedup();

    let h_coarse = target_spacing(axis, hi - lo, target)?;
    let spacing_at = |c: f64| -> f64 {
        if let Some(g) = grading {
            if let Some((b0, b1)) = g.band {
                if c >= b0 && c <= b1 {
                    return h_coarse / g.ratio;
                }
            }
        }
        h_coarse
    };

    let mut coords = Vec::new();
    for w in mandatory.windows(2) {
        coords.push(w[0]);
        coords.extend(fill_gap(w[0], w[1], spacing_at(w[0]), spacing_at(w[1])));
    }
    coords.push(*mandatory.last().unwrap());
    Ok(coords)
}

/// Build an interface-aligned mesh over a device.
///
/// Element materials are assigned by sampling the spec at element centres
/// (equivalent to any interior point, since interfaces are mesh-aligned).
/// Elements inside gate boxes are deactivated. Dirichlet nodes are the
/// nodes of active-element faces that touch gate boxes, plus every node on
/// the base plane; all remaining exterior faces of the active region are
/// Neumann. A node claimed at two different voltages is an error, never a
/// silent override.
pub fn build_mesh(
    spec: &DeviceSpec,
    resolution: &Resolution,
    z_grading: &ZGrading,
) -> Result<Mesh, MeshError> {
    z_grading.validate()?;

    let mut mandatory: [Vec<f64>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    for (b, _) in &spec.regions {
        for d in 0..3 {
            mandatory[d].push(b.min[d]);
            mandatory[d].push(b.max[d]);
        }
    }
    for g in &spec.gates {
        for d in 0..3 {
            mandatory[d].push(g.bounds.min[d]);
            mandatory[d].push(g.bounds.max[d]);
        }
    }

    let [mx, my, mz] = mandatory;
    let axes = GridAxes::new(
        build_axis(
            Axis::X,
            spec.domain.min[0],
            spec.domain.max[0],
            mx,
            resolution.targets[0],
            None,
        )?,
        build_axis(
            Axis::Y,
            spec.domain.min[1],
            spec.domain.max[1],
            my,
            resolution.targets[1],
            None,
        )?,
        build_axis(
            Axis::Z,
            spec.domain.min[2],
            spec.domain.max[2],
            mz,
            resolution.targets[2],
            Some(z_grading),
        )?,
    )?;

    let gate_voltages: Vec<f64> = spec.gates.iter().map(|g| g.voltage).collect();
    finish_mesh(
        axes,
        gate_voltages,
        spec.base_voltage,
        spec.neumann_flux,
        |center| match spec.material_at(center)? {
            PointMaterial::Dielectric(m) => Ok(CellKind::Dielectric(m.relative_permittivity)),
            PointMaterial::Conductor(g) => {
                // gate index is stable: labels are unique
                let idx = spec.gates.iter().position(|h| h.label == g.label).unwrap();
                Ok(CellKind::Gate(idx as u32))
            }
        },
    )
}

/// Build a mesh directly from axes, a permittivity field and explicit
/// Dirichlet data on the domain boundary. This is the path the
/// manufactured-solution cases and tests use; there are no gates, so every
/// element is active.
pub fn structured_mesh<E, D>(
    axes: GridAxes,
    eps_at: E,
    dirichlet_at: D,
) -> Result<Mesh, MeshError>
where
    E: Fn([f64; 3]) -> f64,
    D: Fn([f64; 3]) -> Option<f64>,
{
    let mut mesh = finish_mesh(axes, Vec::new(), 0.0, 0.0, |center| {
        Ok(CellKind::Dielectric(eps_at(center)))
    })?;
    // replace the device-style boundary classification: caller-provided
    // Dirichlet values on boundary nodes, Neumann everywhere else
    mesh.dirichlet_nodes.clear();
    mesh.dirichlet_claims.clear();
    mesh.neumann_faces.clear();
    let [nx, ny, nz] = mesh.node_counts();
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                if i == 0 || i == nx - 1 || j == 0 || j == ny - 1 || k == 0 || k == nz - 1 {
                    let id = mesh.node_id(i, j, k);
                    if let Some(v) = dirichlet_at(mesh.node_coords(id)) {
                        mesh.dirichlet_nodes.insert(id, v);
                    }
                }
            }
        }
    }
    classify_neumann(&mut mesh);
    Ok(mesh)
}

enum CellKind {
    Dielectric(f64),
    Gate(u32),
}

fn finish_mesh<F>(
    axes: GridAxes,
    gate_voltages: Vec<f64>,
    base_voltage: f64,
    neumann_flux: f64,
    classify: F,
) -> Result<Mesh, MeshError>
where
    F: Fn([f64; 3]) -> Result<CellKind, GeometryError>,
{
    let ecount = axes.element_count();
    let mut mesh = Mesh {
        axes,
        element_eps: alloc::vec![0.0; ecount],
        active: alloc::vec![true; ecount],
        element_gate: alloc::vec![None; ecount],
        gate_voltages,
        base_voltage,
        neumann_flux,
        dirichlet_nodes: BTreeMap::new(),
        dirichlet_claims: BTreeMap::new(),
        neumann_faces: Vec::new(),
    };

    for e in 0..ecount {
        match classify(mesh.element_center(e))? {
            CellKind::Dielectric(eps) => {
                if !(eps > 0.0) || !eps.is_finite() {
                    return Err(MeshError::BadPermittivity { element: e, value: eps });
                }
                mesh.element_eps[e] = eps;
            }
            CellKind::Gate(g) => {
                mesh.active[e] = false;
                mesh.element_gate[e] = Some(g);
            }
        }
    }

    // Dirichlet claims: active-element faces against gate cells, plus the
    // whole base plane.
    let [cx, cy, cz] = mesh.cell_counts();
    let [nx, ny, _] = mesh.node_counts();
    let claim = |mesh: &mut Mesh, node: usize, id: SurfaceId, volts: f64| -> Result<(), MeshError> {
        if let Some(&existing) = mesh.dirichlet_nodes.get(&node) {
            if existing != volts {
                return Err(MeshError::DirichletConflict {
                    node,
                    a: existing,
                    b: volts,
                });
            }
        } else {
            mesh.dirichlet_nodes.insert(node, volts);
        }
        let claims = mesh.dirichlet_claims.entry(node).or_default();
        if !claims.contains(&id) {
            claims.push(id);
        }
        Ok(())
    };

    for e in 0..ecount {
        if mesh.active[e] {
            continue;
        }
        let g = mesh.element_gate[e].unwrap() as usize;
        let volts = mesh.gate_voltages[g];
        let [i, j, k] = mesh.element_ijk(e);
        let nodes = mesh.element_nodes(e);
        for face in Face::ALL {
            let (axis, dir) = face.normal();
            let (ni, nj, nk) = match (axis, dir) {
                (Axis::X, -1) => (i.wrapping_sub(1), j, k),
                (Axis::X, _) => (i + 1, j, k),
                (Axis::Y, -1) => (i, j.wrapping_sub(1), k),
                (Axis::Y, _) => (i, j + 1, k),
                (Axis::Z, -1) => (i, j, k.wrapping_sub(1)),
                (Axis::Z, _) => (i, j, k + 1),
            };
            if ni >= cx || nj >= cy || nk >= cz {
                continue;
            }
            let ne = mesh.element_id(ni, nj, nk);
            if !mesh.active[ne] {
                continue;
            }
            for ln in face.local_nodes() {
                claim(&mut mesh, nodes[ln], SurfaceId::Gate(g), volts)?;
            }
        }
    }

    for j in 0..ny {
        for i in 0..nx {
            let node = mesh.node_id(i, j, 0);
            claim(&mut mesh, node, SurfaceId::Base, base_voltage)?;
        }
    }

    classify_neumann(&mut mesh);
    Ok(mesh)
}

/// Exterior faces of the active region that are not gate surfaces, not on
/// the base plane, and not fully Dirichlet-constrained.
fn classify_neumann(mesh: &mut Mesh) {
    mesh.neumann_faces.clear();
    let [cx, cy, cz] = mesh.cell_counts();
    for e in 0..mesh.element_count() {
        if !mesh.active[e] {
            continue;
        }
        let [i, j, k] = mesh.element_ijk(e);
        let [dx, dy, dz] = mesh.element_extents(e);
        let nodes = mesh.element_nodes(e);
        for face in Face::ALL {
            let (axis, dir) = face.normal();
            let (ni, nj, nk) = match (axis, dir) {
                (Axis::X, -1) => (i.wrapping_sub(1), j, k),
                (Axis::X, _) => (i + 1, j, k),
                (Axis::Y, -1) => (i, j.wrapping_sub(1), k),
                (Axis::Y, _) => (i, j + 1, k),
                (Axis::Z, -1) => (i, j, k.wrapping_sub(1)),
                (Axis::Z, _) => (i, j, k + 1),
            };
            let exterior = ni >= cx || nj >= cy || nk >= cz;
            if !exterior {
                // interior face: skip whether the neighbour is active
                // (shared) or a gate cell (Dirichlet surface)
                continue;
            }
            // fully Dirichlet faces (e.g. the base plane) carry no flux
            // degrees of freedom
            let fully_dirichlet = face
                .local_nodes()
                .iter()
                .all(|&ln| mesh.dirichlet_nodes.contains_key(&nodes[ln]));
            if fully_dirichlet {
                continue;
            }
            let area = match axis {
                Axis::X => dy * dz,
                Axis::Y => dx * dz,
                Axis::Z => dx * dy,
            };
            mesh.neumann_faces.push(NeumannFace { element: e, face, area });
        }
    }
}
