//! Device configuration files: a TOML document with top-level keys
//! `domain`, `background`, `materials`, `regions`, `gates`, `base_voltage`
//! and `neumann_flux`. Lengths are nm, voltages V. Regions reference
//! materials by name and are painted in file order (later wins); gates are
//! perfect conductors excluded from the solve.

use std::collections::BTreeSet;
use std::fmt;

use dotfield::{Box3, DeviceSpec, Gate, GeometryError, Material};
use serde::{Deserialize, Serialize};

#[derive(Debug)]
pub enum ConfigError {
    /// TOML syntax or schema violation, with the parser's line/column info.
    Parse(toml::de::Error),
    UnknownMaterial { region: usize, name: String },
    DuplicateMaterial(String),
    Geometry(GeometryError),
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Parse(e) => write!(f, "config parse error: {}", e),
            ConfigError::UnknownMaterial { region, name } => {
                write!(f, "region {} references unknown material `{}`", region, name)
            }
            ConfigError::DuplicateMaterial(name) => {
                write!(f, "material `{}` defined twice", name)
            }
            ConfigError::Geometry(e) => write!(f, "config validation error: {}", e),
        }
    }
}

impl std::error::Error for ConfigError {}

impl From<GeometryError> for ConfigError {
    fn from(e: GeometryError) -> Self {
        ConfigError::Geometry(e)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ConfigFile {
    domain: BoxSchema,
    background: String,
    #[serde(default)]
    materials: Vec<MaterialSchema>,
    #[serde(default)]
    regions: Vec<RegionSchema>,
    #[serde(default)]
    gates: Vec<GateSchema>,
    #[serde(default)]
    base_voltage: f64,
    #[serde(default)]
    neumann_flux: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct BoxSchema {
    min: [f64; 3],
    max: [f64; 3],
}

#[derive(Debug, Serialize, Deserialize)]
struct MaterialSchema {
    name: String,
    relative_permittivity: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct RegionSchema {
    material: String,
    min: [f64; 3],
    max: [f64; 3],
}

#[derive(Debug, Serialize, Deserialize)]
struct GateSchema {
    label: String,
    voltage: f64,
    min: [f64; 3],
    max: [f64; 3],
}

/// Parse and validate a device config document.
pub fn parse_device(text: &str) -> Result<DeviceSpec, ConfigError> {
    let file: ConfigFile = toml::from_str(text).map_err(ConfigError::Parse)?;

    let mut names = BTreeSet::new();
    for m in &file.materials {
        if !names.insert(m.name.clone()) {
            return Err(ConfigError::DuplicateMaterial(m.name.clone()));
        }
    }
    let lookup = |name: &str, region: usize| -> Result<Material, ConfigError> {
        let m = file
            .materials
            .iter()
            .find(|m| m.name == name)
            .ok_or_else(|| ConfigError::UnknownMaterial {
                region,
                name: name.to_string(),
            })?;
        Material::new(&m.name, m.relative_permittivity).map_err(ConfigError::from)
    };

    let domain = Box3::new(file.domain.min, file.domain.max)?;
    let background = lookup(&file.background, usize::MAX)?;
    let mut regions = Vec::with_capacity(file.regions.len());
    for (i, r) in file.regions.iter().enumerate() {
        regions.push((Box3::new(r.min, r.max)?, lookup(&r.material, i)?));
    }
    let gates = file
        .gates
        .iter()
        .map(|g| {
            Ok(Gate {
                label: g.label.clone(),
                voltage: g.voltage,
                bounds: Box3::new(g.min, g.max)?,
            })
        })
        .collect::<Result<Vec<_>, GeometryError>>()?;

    DeviceSpec::new(
        domain,
        background,
        regions,
        gates,
        file.base_voltage,
        file.neumann_flux,
    )
    .map_err(ConfigError::from)
}

/// Serialize a spec back into the config format. `parse_device` of the
/// result reproduces an equivalent spec.
pub fn serialize_device(spec: &DeviceSpec) -> String {
    let mut materials: Vec<MaterialSchema> = Vec::new();
    let mut seen = BTreeSet::new();
    let mut push = |m: &Material, materials: &mut Vec<MaterialSchema>| {
        if seen.insert(m.name.clone()) {
            materials.push(MaterialSchema {
                name: m.name.clone(),
                relative_permittivity: m.relative_permittivity,
            });
        }
    };
    push(&spec.background, &mut materials);
    for (_, m) in &spec.regions {
        push(m, &mut materials);
    }

    let file = ConfigFile {
        domain: BoxSchema {
            min: spec.domain.min,
            max: spec.domain.max,
        },
        background: spec.background.name.clone(),
        materials,
        regions: spec
            .regions
            .iter()
            .map(|(b, m)| RegionSchema {
                material: m.name.clone(),
                min: b.min,
                max: b.max,
            })
            .collect(),
        gates: spec
            .gates
            .iter()
            .map(|g| GateSchema {
                label: g.label.clone(),
                voltage: g.voltage,
                min: g.bounds.min,
                max: g.bounds.max,
            })
            .collect(),
        base_voltage: spec.base_voltage,
        neumann_flux: spec.neumann_flux,
    };
    toml::to_string_pretty(&file).expect("config serialization cannot fail")
}

/// FNV-1a 64-bit hash of the raw config bytes; stamped into every output
/// file header so outputs can be traced to their exact input.
pub fn config_hash(text: &str) -> String {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in text.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    format!("fnv1a64:{:016x}", h)
}
