//! Device description: materials, axis-aligned boxes, gates and voltages.
//!
//! All lengths are nanometres and all voltages volts. Permittivities are
//! stored as relative (dimensionless) values; because the equation solved is
//! homogeneous, the vacuum permittivity cancels and the solution is invariant
//! to its absolute scale. [`VACUUM_PERMITTIVITY`] is provided for callers
//! that need absolute values (capacitances, charge densities).

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

/// Vacuum permittivity, F/m.
pub const VACUUM_PERMITTIVITY: f64 = 8.85e-12;

/// Relative permittivity of silicon.
pub const EPS_SILICON: f64 = 11.0;
/// Relative permittivity of silicon dioxide.
pub const EPS_OXIDE: f64 = 4.5;

#[derive(Debug, Clone, PartialEq)]
pub enum GeometryError {
    /// Box with a non-positive extent along some axis.
    EmptyBox { min: [f64; 3], max: [f64; 3] },
    NonPositivePermittivity { name: String, value: f64 },
    /// A region or gate box is not contained in the domain.
    BoxOutsideDomain { what: String },
    DuplicateGateLabel(String),
    UnknownGate(String),
    PointOutsideDomain { point: [f64; 3] },
}

impl fmt::Display for GeometryError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GeometryError::EmptyBox { min, max } => {
                write!(f, "box has no volume: min {:?}, max {:?}", min, max)
            }
            GeometryError::NonPositivePermittivity { name, value } => {
                write!(f, "material `{}` has non-positive permittivity {}", name, value)
            }
            GeometryError::BoxOutsideDomain { what } => {
                write!(f, "{} extends outside the domain", what)
            }
            GeometryError::DuplicateGateLabel(label) => {
                write!(f, "duplicate gate label `{}`", label)
            }
            GeometryError::UnknownGate(label) => write!(f, "unknown gate label `{}`", label),
            GeometryError::PointOutsideDomain { point } => {
                write!(f, "point {:?} lies outside the domain", point)
            }
        }
    }
}

impl core::error::Error for GeometryError {}

/// A dielectric, identified by name, with a relative permittivity.
#[derive(Debug, Clone, PartialEq)]
pub struct Material {
    pub name: String,
    pub relative_permittivity: f64,
}

impl Material {
    pub fn new(name: &str, relative_permittivity: f64) -> Result<Self, GeometryError> {
        if !(relative_permittivity > 0.0) || !relative_permittivity.is_finite() {
            return Err(GeometryError::NonPositivePermittivity {
                name: String::from(name),
                value: relative_permittivity,
            });
        }
        Ok(Material {
            name: String::from(name),
            relative_permittivity,
        })
    }

    pub fn air() -> Self {
        Material::new("air", 1.0).unwrap()
    }

    pub fn silicon() -> Self {
        Material::new("si", EPS_SILICON).unwrap()
    }

    pub fn silicon_dioxide() -> Self {
        Material::new("sio2", EPS_OXIDE).unwrap()
    }

    /// Absolute permittivity in F/m.
    pub fn absolute_permittivity(&self) -> f64 {
        self.relative_permittivity * VACUUM_PERMITTIVITY
    }
}

/// Axis-aligned box with strictly positive volume. Corners in nm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Box3 {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Box3 {
    pub fn new(min: [f64; 3], max: [f64; 3]) -> Result<Self, GeometryError> {
        if (0..3).any(|d| !(min[d] < max[d]) || !min[d].is_finite() || !max[d].is_finite()) {
            return Err(GeometryError::EmptyBox { min, max });
        }
        Ok(Box3 { min, max })
    }

    /// Closed containment: points on a face belong to the box.
    pub fn contains(&self, p: [f64; 3]) -> bool {
        (0..3).all(|d| p[d] >= self.min[d] && p[d] <= self.max[d])
    }

    pub fn contains_box(&self, other: &Box3) -> bool {
        (0..3).all(|d| other.min[d] >= self.min[d] && other.max[d] <= self.max[d])
    }

    pub fn center(&self) -> [f64; 3] {
        [
            0.5 * (self.min[0] + self.max[0]),
            0.5 * (self.min[1] + self.max[1]),
            0.5 * (self.min[2] + self.max[2]),
        ]
    }

    pub fn extent(&self, axis: usize) -> f64 {
        self.max[axis] - self.min[axis]
    }
}

/// Metal gate electrode: a perfect conductor held at a fixed voltage.
///
/// Gate boxes are excluded from the solved region; their surfaces carry
/// Dirichlet values.
#[derive(Debug, Clone, PartialEq)]
pub struct Gate {
    pub label: String,
    pub voltage: f64,
    pub bounds: Box3,
}

/// What occupies a point: a dielectric material or a gate conductor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PointMaterial<'a> {
    Dielectric(&'a Material),
    Conductor(&'a Gate),
}

/// Declarative device description.
///
/// Regions are painted in order: where two regions overlap, the later one
/// wins. This lets a config lay down a base slab and then place pillars on
/// it without fragmenting boxes. Gate boxes take precedence over every
/// region.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviceSpec {
    pub domain: Box3,
    pub background: Material,
    pub regions: Vec<(Box3, Material)>,
    pub gates: Vec<Gate>,
    /// Voltage of the grounded-base Dirichlet plane at z = domain min.
    pub base_voltage: f64,
    /// Prescribed normal flux on Neumann surfaces, C/m^2. Zero in every
    /// shipped configuration.
    pub neumann_flux: f64,
}

impl DeviceSpec {
    pub fn new(
        domain: Box3,
        background: Material,
        regions: Vec<(Box3, Material)>,
        gates: Vec<Gate>,
        base_voltage: f64,
        neumann_flux: f64,
    ) -> Result<Self, GeometryError> {
        for (i, (b, m)) in regions.iter().enumerate() {
            if !domain.contains_box(b) {
                return Err(GeometryError::BoxOutsideDomain {
                    what: alloc::format!("region {} ({})", i, m.name),
                });
            }
        }
        for g in &gates {
            if !domain.contains_box(&g.bounds) {
                return Err(GeometryError::BoxOutsideDomain {
                    what: alloc::format!("gate {}", g.label),
                });
            }
        }
        for (i, g) in gates.iter().enumerate() {
            if gates[..i].iter().any(|h| h.label == g.label) {
                return Err(GeometryError::DuplicateGateLabel(g.label.clone()));
            }
        }
        Ok(DeviceSpec {
            domain,
            background,
            regions,
            gates,
            base_voltage,
            neumann_flux,
        })
    }

    /// Material (or gate conductor) at a point inside the domain.
    ///
    /// Deterministic and total on the domain: gates win over regions, the
    /// last containing region wins over earlier ones, and the background
    /// fills everything else.
    pub fn material_at(&self, point: [f64; 3]) -> Result<PointMaterial<'_>, GeometryError> {
        if !self.domain.contains(point) {
            return Err(GeometryError::PointOutsideDomain { point });
        }
        for gate in self.gates.iter().rev() {
            if gate.bounds.contains(point) {
                return Ok(PointMaterial::Conductor(gate));
            }
        }
        for (b, m) in self.regions.iter().rev() {
            if b.contains(point) {
                return Ok(PointMaterial::Dielectric(m));
            }
        }
        Ok(PointMaterial::Dielectric(&self.background))
    }

    /// Relative permittivity at a point; gate interiors report `None`.
    pub fn permittivity_at(&self, point: [f64; 3]) -> Result<Option<f64>, GeometryError> {
        Ok(match self.material_at(point)? {
            PointMaterial::Dielectric(m) => Some(m.relative_permittivity),
            PointMaterial::Conductor(_) => None,
        })
    }

    pub fn gate(&self, label: &str) -> Option<&Gate> {
        self.gates.iter().find(|g| g.label == label)
    }

    pub fn gate_index(&self, label: &str) -> Result<usize, GeometryError> {
        self.gates
            .iter()
            .position(|g| g.label == label)
            .ok_or_else(|| GeometryError::UnknownGate(String::from(label)))
    }

    /// Copy of the spec with gate voltages overridden by `(label, volts)`
    /// pairs. Unknown labels are hard errors.
    pub fn with_gate_voltages(&self, overrides: &[(String, f64)]) -> Result<Self, GeometryError> {
        let mut spec = self.clone();
        for (label, volts) in overrides {
            let idx = spec.gate_index(label)?;
            spec.gates[idx].voltage = *volts;
        }
        Ok(spec)
    }
}

/// Probe point at the centre of the double-dot constriction of the
/// canonical device.
pub const IDQD_PROBE_POINT: [f64; 3] = [320.0, 190.0, 420.0];

/// Centres of the two dots of the canonical device.
pub const IDQD_DOT_CENTERS: [[f64; 3]; 2] = [[320.0, 147.5, 420.0], [320.0, 232.5, 420.0]];

/// Canonical line-probe coordinates: the probe runs along y at this x and z.
pub const IDQD_LINE_X: f64 = 320.0;
pub const IDQD_LINE_Z: f64 = 420.0;

/// Canonical slice planes: x-y plane at mid-pillar height, x-z plane
/// through the centre of gate G2.
pub const IDQD_SLICE_Z: f64 = 420.0;
pub const IDQD_SLICE_Y: f64 = 190.0;

/// Canonical trench-isolated double-quantum-dot device.
///
/// Rectangular approximation of an SOI double-dot test structure: an oxide
/// base slab, two silicon dots joined by a 20 nm constriction, a silicon
/// SET island with source/drain leads, three in-plane control gates G1-G3
/// beside the dots and a bias gate G4 beside the SET. The silicon pillars
/// and the gates stand 150 nm tall on the oxide surface, and everything not
/// covered by a box is air.
///
/// Only a few dimensions are hard constraints of this device class (pillar
/// height 150 nm, inter-dot constriction 20 nm, the probe coordinates of
/// the default line/slice outputs and the dielectric crossings of the
/// default line probe at y = 115 nm and y = 265 nm). Every other footprint
/// below is an estimate chosen to honour those numbers; the layout is
/// mirror-symmetric about the y = 190 nm plane.
///
/// Layout in the x-y plane (z band 345..495 nm, oxide below, air above):
///
/// ```text
///   y=380 +---------------------------------------------------------+
///         |          .--------.                    | lead |         |
///         |          |   G3   |   .------.         '------'         |
///         |          '--------'   | dot2 |         .------.         |
///         |          .--------.   |  ##  |<-20nm   |      |  .----. |
///   y=190 |          |   G2   |   |  ##  |  const. | SET  |  | G4 | |
///         |          '--------'   |  ##  |         |      |  '----' |
///         |          .--------.   | dot1 |         '------'         |
///         |          |   G1   |   '------'         .------.         |
///         |          '--------'        x=320       | lead |         |
///   y=0   +---------------------------------------------------------+
///        x=0                                                     x=640
/// ```
pub fn canonical_idqd_device() -> DeviceSpec {
    let si = Material::silicon();
    let oxide = Material::silicon_dioxide();

    let bx = |min, max| Box3::new(min, max).unwrap();

    // Vertical structure: oxide base 0..345, active band 345..495 (pillar
    // height 150, mid-height 420), air above up to 600.
    let z0 = OXIDE_TOP;
    let z1 = PILLAR_TOP;

    let domain = bx([0.0, 0.0, 0.0], [640.0, 380.0, 600.0]);
    let regions = alloc::vec![
        // buried-oxide base slab
        (bx([0.0, 0.0, 0.0], [640.0, 380.0, z0]), oxide),
        // the two dots and the constriction joining them
        (bx([290.0, 115.0, z0], [350.0, 180.0, z1]), si.clone()),
        (bx([290.0, 200.0, z0], [350.0, 265.0, z1]), si.clone()),
        (bx([305.0, 180.0, z0], [335.0, 200.0, z1]), si.clone()),
        // SET island and its source/drain leads, isolated by 20 nm trenches
        (bx([430.0, 130.0, z0], [490.0, 250.0, z1]), si.clone()),
        (bx([430.0, 0.0, z0], [490.0, 110.0, z1]), si.clone()),
        (bx([430.0, 270.0, z0], [490.0, 380.0, z1]), si),
    ];
    let gate = |label: &str, min, max| Gate {
        label: String::from(label),
        voltage: 0.0,
        bounds: bx(min, max),
    };
    let gates = alloc::vec![
        gate("G1", [150.0, 10.0, z0], [230.0, 110.0, z1]),
        gate("G2", [150.0, 150.0, z0], [230.0, 230.0, z1]),
        gate("G3", [150.0, 270.0, z0], [230.0, 370.0, z1]),
        gate("G4", [560.0, 130.0, z0], [620.0, 250.0, z1]),
    ];

    DeviceSpec::new(domain, Material::air(), regions, gates, 0.0, 0.0).unwrap()
}

/// Top of the oxide base slab of the canonical device, nm.
pub const OXIDE_TOP: f64 = 345.0;
/// Top of the silicon pillars and gates of the canonical device, nm.
pub const PILLAR_TOP: f64 = 495.0;
