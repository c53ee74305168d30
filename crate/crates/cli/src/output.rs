//! Plot-ready CSV and legacy VTK text export. Every file carries the
//! config hash in its header comment so outputs are traceable to their
//! exact input; all floats are emitted with 17 significant digits.

use std::fmt::Write as _;

use dotfield::{Mesh, ProbeResult, SolutionField};

/// 17 significant digits, locale-independent.
pub fn fmt_f64(v: f64) -> String {
    format!("{:.16e}", v)
}

/// CSV for a line probe or plane slice: comment header, then
/// `x_nm,y_nm,z_nm,phi_V[,Ex,Ey,Ez]` rows in sample order.
pub fn probe_csv(probe: &ProbeResult, hash: &str) -> String {
    let with_field = probe.samples.iter().any(|s| s.field.is_some());
    let mut out = String::new();
    let _ = writeln!(out, "# config_hash={}", hash);
    if with_field {
        let _ = writeln!(out, "x_nm,y_nm,z_nm,phi_V,Ex,Ey,Ez");
    } else {
        let _ = writeln!(out, "x_nm,y_nm,z_nm,phi_V");
    }
    for s in &probe.samples {
        let [x, y, z] = s.position;
        if let Some(e) = s.field {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                fmt_f64(x),
                fmt_f64(y),
                fmt_f64(z),
                fmt_f64(s.phi),
                fmt_f64(e[0]),
                fmt_f64(e[1]),
                fmt_f64(e[2])
            );
        } else {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                fmt_f64(x),
                fmt_f64(y),
                fmt_f64(z),
                fmt_f64(s.phi)
            );
        }
    }
    out
}

/// CSV for a gate sweep: voltage, probe potential and (in mirrored mode)
/// the inter-dot gradient per step. The fitted slope and the worst
/// deviation from that affine fit ride in the comment header.
pub fn sweep_csv(
    rows: &[(f64, f64, Option<f64>)],
    slope: f64,
    intercept: f64,
    max_affine_dev: f64,
    hash: &str,
) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# config_hash={}", hash);
    let _ = writeln!(out, "# coupling_factor={}", fmt_f64(slope));
    let _ = writeln!(out, "# fit_intercept_V={}", fmt_f64(intercept));
    let _ = writeln!(out, "# max_affine_deviation_V={}", fmt_f64(max_affine_dev));
    let with_gradient = rows.iter().any(|r| r.2.is_some());
    if with_gradient {
        let _ = writeln!(out, "gate_V,phi_V,gradient_V_per_nm");
    } else {
        let _ = writeln!(out, "gate_V,phi_V");
    }
    for &(v, phi, grad) in rows {
        match grad {
            Some(g) => {
                let _ = writeln!(out, "{},{},{}", fmt_f64(v), fmt_f64(phi), fmt_f64(g));
            }
            None => {
                let _ = writeln!(out, "{},{}", fmt_f64(v), fmt_f64(phi));
            }
        }
    }
    out
}

/// Convergence-study CSV: one row per refinement level.
pub fn convergence_csv(rows: &[(usize, f64, f64)], order: Option<f64>, hash: &str) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# config_hash={}", hash);
    match order {
        Some(p) => {
            let _ = writeln!(out, "# fitted_order={}", fmt_f64(p));
        }
        None => {
            let _ = writeln!(out, "# fitted_order=exact");
        }
    }
    let _ = writeln!(out, "level,h_nm,l2_error");
    for &(level, h, err) in rows {
        let _ = writeln!(out, "{},{},{}", level, fmt_f64(h), fmt_f64(err));
    }
    out
}

/// Full mesh + field as a legacy VTK unstructured grid: node coordinates,
/// hexahedral connectivity, per-cell permittivity and active flag,
/// per-node potential and Dirichlet data.
pub fn field_vtk(field: &SolutionField<'_>, hash: &str) -> String {
    let mesh = field.mesh;
    let n = mesh.node_count();
    let m = mesh.element_count();
    let mut out = String::new();
    let _ = writeln!(out, "# vtk DataFile Version 3.0");
    let _ = writeln!(out, "dotfield field export config_hash={}", hash);
    let _ = writeln!(out, "ASCII");
    let _ = writeln!(out, "DATASET UNSTRUCTURED_GRID");

    let _ = writeln!(out, "POINTS {} double", n);
    for id in 0..n {
        let [x, y, z] = mesh.node_coords(id);
        let _ = writeln!(out, "{} {} {}", fmt_f64(x), fmt_f64(y), fmt_f64(z));
    }

    let _ = writeln!(out, "CELLS {} {}", m, 9 * m);
    for e in 0..m {
        let nodes = mesh.element_nodes(e);
        let _ = write!(out, "8");
        for node in nodes {
            let _ = write!(out, " {}", node);
        }
        let _ = writeln!(out);
    }
    let _ = writeln!(out, "CELL_TYPES {}", m);
    for _ in 0..m {
        let _ = writeln!(out, "12"); // VTK_HEXAHEDRON
    }

    let _ = writeln!(out, "CELL_DATA {}", m);
    let _ = writeln!(out, "SCALARS eps_rel double 1");
    let _ = writeln!(out, "LOOKUP_TABLE default");
    for e in 0..m {
        let _ = writeln!(out, "{}", fmt_f64(mesh.element_eps[e]));
    }
    let _ = writeln!(out, "SCALARS active int 1");
    let _ = writeln!(out, "LOOKUP_TABLE default");
    for e in 0..m {
        let _ = writeln!(out, "{}", if mesh.active[e] { 1 } else { 0 });
    }
    // raw element-wise field values alongside the smoothed nodal recovery
    let _ = writeln!(out, "VECTORS E_cell_V_per_nm double");
    for e in 0..m {
        let g = if mesh.active[e] {
            dotfield::element_center_field(field, e)
        } else {
            [0.0; 3]
        };
        let _ = writeln!(out, "{} {} {}", fmt_f64(g[0]), fmt_f64(g[1]), fmt_f64(g[2]));
    }

    let nodal_e = dotfield::nodal_field(field);
    let _ = writeln!(out, "POINT_DATA {}", n);
    let _ = writeln!(out, "SCALARS phi_V double 1");
    let _ = writeln!(out, "LOOKUP_TABLE default");
    for id in 0..n {
        let _ = writeln!(out, "{}", fmt_f64(field.values[id]));
    }
    let _ = writeln!(out, "SCALARS dirichlet_V double 1");
    let _ = writeln!(out, "LOOKUP_TABLE default");
    for id in 0..n {
        let v = mesh.dirichlet_nodes.get(&id).copied().unwrap_or(0.0);
        let _ = writeln!(out, "{}", fmt_f64(v));
    }
    let _ = writeln!(out, "SCALARS dirichlet_mask int 1");
    let _ = writeln!(out, "LOOKUP_TABLE default");
    for id in 0..n {
        let _ = writeln!(
            out,
            "{}",
            if mesh.dirichlet_nodes.contains_key(&id) { 1 } else { 0 }
        );
    }
    let _ = writeln!(out, "VECTORS E_V_per_nm double");
    for e in &nodal_e {
        let _ = writeln!(out, "{} {} {}", fmt_f64(e[0]), fmt_f64(e[1]), fmt_f64(e[2]));
    }
    out
}

/// Mesh-only VTK export (no field): same grid payload with material and
/// Dirichlet scalars, usable before any solve.
pub fn mesh_vtk(mesh: &Mesh, hash: &str) -> String {
    let zeros = vec![0.0; mesh.node_count()];
    let field = SolutionField { mesh, values: zeros };
    let mut text = field_vtk(&field, hash);
    text = text.replacen("dotfield field export", "dotfield mesh export", 1);
    text
}

/// Plane slice as legacy VTK structured points. The slice's two in-plane
/// axes map onto the VTK x/y axes; the title records which device axes
/// they are.
pub fn slice_vtk(probe: &ProbeResult, hash: &str) -> String {
    let (normal, offset, (nu, nv)) = match &probe.geometry {
        dotfield::ProbeGeometry::Plane {
            normal,
            offset,
            resolution,
        } => (*normal, *offset, *resolution),
        _ => panic!("slice_vtk needs a plane probe"),
    };
    let [u_axis, v_axis] = normal.others();
    let first = probe.samples[0].position;
    let second = probe.samples[1].position;
    let row2 = probe.samples[nu].position;
    let du = second[u_axis.index()] - first[u_axis.index()];
    let dv = row2[v_axis.index()] - first[v_axis.index()];

    let mut out = String::new();
    let _ = writeln!(out, "# vtk DataFile Version 3.0");
    let _ = writeln!(
        out,
        "dotfield slice {}={} (u={}, v={}) config_hash={}",
        normal.name(),
        offset,
        u_axis.name(),
        v_axis.name(),
        hash
    );
    let _ = writeln!(out, "ASCII");
    let _ = writeln!(out, "DATASET STRUCTURED_POINTS");
    let _ = writeln!(out, "DIMENSIONS {} {} 1", nu, nv);
    let _ = writeln!(
        out,
        "ORIGIN {} {} 0",
        fmt_f64(first[u_axis.index()]),
        fmt_f64(first[v_axis.index()])
    );
    let _ = writeln!(out, "SPACING {} {} 1", fmt_f64(du), fmt_f64(dv));
    let _ = writeln!(out, "POINT_DATA {}", nu * nv);
    let _ = writeln!(out, "SCALARS phi_V double 1");
    let _ = writeln!(out, "LOOKUP_TABLE default");
    for s in &probe.samples {
        let _ = writeln!(out, "{}", fmt_f64(s.phi));
    }
    let _ = writeln!(out, "VECTORS E_V_per_nm double");
    for s in &probe.samples {
        let e = s.field.unwrap_or([0.0; 3]);
        let _ = writeln!(out, "{} {} {}", fmt_f64(e[0]), fmt_f64(e[1]), fmt_f64(e[2]));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use dotfield::{
        assemble, build_mesh, pcg_solve, plane_slice, Axis, Resolution, SolveConfig, ZGrading,
    };

    fn tiny_field() -> (dotfield::DeviceSpec, dotfield::Mesh) {
        let spec = dotfield::canonical_idqd_device();
        let mesh = build_mesh(&spec, &Resolution::nodes(2, 2, 2), &ZGrading::none()).unwrap();
        (spec, mesh)
    }

    #[test]
    fn field_vtk_shape() {
        let (_spec, mesh) = tiny_field();
        let sys = assemble(&mesh).unwrap();
        let (field, _) = pcg_solve(&mesh, &sys, &SolveConfig::default()).unwrap();
        let text = field_vtk(&field, "fnv1a64:deadbeef");
        assert!(text.starts_with("# vtk DataFile Version 3.0\n"));
        assert!(text.contains("config_hash=fnv1a64:deadbeef"));
        assert!(text.contains(&format!("POINTS {} double", mesh.node_count())));
        assert!(text.contains(&format!("CELL_TYPES {}", mesh.element_count())));
        assert!(text.contains("SCALARS phi_V double 1"));
        assert!(text.contains("VECTORS E_V_per_nm double"));
        assert!(text.contains("VECTORS E_cell_V_per_nm double"));
        // hex connectivity lines carry 8 node ids
        let cells_at = text.find("CELLS").unwrap();
        let line = text[cells_at..].lines().nth(1).unwrap();
        assert_eq!(line.split_whitespace().count(), 9);
        assert!(line.starts_with("8 "));
    }

    #[test]
    fn slice_vtk_and_csv_shape() {
        let (_spec, mesh) = tiny_field();
        let sys = assemble(&mesh).unwrap();
        let (field, _) = pcg_solve(&mesh, &sys, &SolveConfig::default()).unwrap();
        let probe = plane_slice(&field, Axis::Z, 100.0, (5, 4)).unwrap();
        let vtk = slice_vtk(&probe, "h");
        assert!(vtk.contains("DIMENSIONS 5 4 1"));
        assert!(vtk.contains("VECTORS E_V_per_nm double"));
        let csv = probe_csv(&probe, "h");
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "# config_hash=h");
        assert_eq!(lines.next().unwrap(), "x_nm,y_nm,z_nm,phi_V,Ex,Ey,Ez");
        assert_eq!(csv.lines().count(), 2 + 20);
    }

    #[test]
    fn floats_carry_17_significant_digits() {
        let s = fmt_f64(320.0);
        assert_eq!(s, "3.2000000000000000e2");
        assert_eq!(s.chars().filter(|c| c.is_ascii_digit()).count(), 17 + 1);
        let s = fmt_f64(-0.007123456789012345);
        assert!(s.starts_with("-7.1234567890123"), "{}", s);
    }
}
