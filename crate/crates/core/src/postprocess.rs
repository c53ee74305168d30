//! Evaluate the solved field anywhere, extract line/plane probes, and
//! compute gate-coupling quantities.
//!
//! The potential is the trilinear interpolant of the nodal values; the
//! electric field `E = -grad(phi)` is element-wise defined and
//! discontinuous across element faces. Points exactly on a face use the
//! lower-index element (the mesh locate tie-break).

use alloc::vec::Vec;

use crate::assembly::assemble;
use crate::element::{physical_gradients, shape};
use crate::float;
use crate::geometry::DeviceSpec;
use crate::mesh::{build_mesh, Axis, MeshError, Resolution, SurfaceId, SurfaceVoltages, ZGrading};
use crate::solver::{pcg_solve_with_values, SolutionField, SolveConfig, SolverError};

/// Where a probe sampled.
#[derive(Debug, Clone, PartialEq)]
pub enum ProbeGeometry {
    Line {
        axis: Axis,
        /// Values of the other two axes, in (x, y, z) order.
        fixed: [f64; 2],
    },
    Plane {
        normal: Axis,
        offset: f64,
        resolution: (usize, usize),
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeSample {
    pub position: [f64; 3],
    pub phi: f64,
    /// Electric field, V/nm; filled for plane slices.
    pub field: Option<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeResult {
    pub geometry: ProbeGeometry,
    pub samples: Vec<ProbeSample>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SampleMode {
    /// Sample exactly at the mesh planes crossed by the probe.
    Nodal,
    /// Evenly spaced samples, endpoints included (at least 2).
    Uniform(usize),
}

/// Trilinear interpolation of the potential. At a mesh node this
/// reproduces the nodal value exactly; inside a gate it returns the gate
/// voltage (the buried nodes carry it).
pub fn eval_potential(field: &SolutionField<'_>, point: [f64; 3]) -> Result<f64, MeshError> {
    let (e, local) = field.mesh.locate_cell(point)?;
    let s = shape(local);
    let nodes = field.mesh.element_nodes(e);
    Ok((0..8).map(|a| s.values[a] * field.values[nodes[a]]).sum())
}

/// Electric field `-grad(phi)` at a point, V/nm.
pub fn eval_field(field: &SolutionField<'_>, point: [f64; 3]) -> Result<[f64; 3], MeshError> {
    let (e, local) = field.mesh.locate_cell(point)?;
    let corners = field.mesh.element_corners(e);
    let (grads, _det) =
        physical_gradients(&corners, local).expect("mesh cells have positive volume");
    let nodes = field.mesh.element_nodes(e);
    let mut g = [0.0; 3];
    for a in 0..8 {
        let phi = field.values[nodes[a]];
        for d in 0..3 {
            g[d] += phi * grads[a][d];
        }
    }
    Ok([-g[0], -g[1], -g[2]])
}

fn line_point(axis: Axis, fixed: [f64; 2], t: f64) -> [f64; 3] {
    match axis {
        Axis::X => [t, fixed[0], fixed[1]],
        Axis::Y => [fixed[0], t, fixed[1]],
        Axis::Z => [fixed[0], fixed[1], t],
    }
}

/// Potential along an axis-parallel line. `fixed` holds the two remaining
/// coordinates in (x, y, z) order. Errors if the whole line lies inside
/// deactivated (gate) cells.
pub fn line_probe(
    field: &SolutionField<'_>,
    axis: Axis,
    fixed: [f64; 2],
    mode: SampleMode,
) -> Result<ProbeResult, MeshError> {
    let coords = field.mesh.axes.coords(axis);
    let ts: Vec<f64> = match mode {
        SampleMode::Nodal => coords.to_vec(),
        SampleMode::Uniform(n) => {
            assert!(n >= 2, "uniform sampling needs at least 2 points");
            let (lo, hi) = (coords[0], coords[coords.len() - 1]);
            (0..n)
                .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
                .collect()
        }
    };
    let mut samples = Vec::with_capacity(ts.len());
    let mut any_active = false;
    for &t in &ts {
        let p = line_point(axis, fixed, t);
        let (e, _) = field.mesh.locate_cell(p)?;
        any_active |= field.mesh.active[e];
        samples.push(ProbeSample {
            position: p,
            phi: eval_potential(field, p)?,
            field: None,
        });
    }
    if !any_active {
        return Err(MeshError::LineOutsideActiveRegion);
    }
    Ok(ProbeResult {
        geometry: ProbeGeometry::Line { axis, fixed },
        samples,
    })
}

/// Regular grid of potential and field samples on an axis-normal plane.
/// Rows run along the first in-plane axis (x, y, z order), `resolution`
/// counts samples per in-plane axis, endpoints included.
pub fn plane_slice(
    field: &SolutionField<'_>,
    normal: Axis,
    offset: f64,
    resolution: (usize, usize),
) -> Result<ProbeResult, MeshError> {
    let (nu, nv) = resolution;
    assert!(nu >= 2 && nv >= 2, "slice needs at least 2x2 samples");
    let [u_axis, v_axis] = normal.others();
    let uc = field.mesh.axes.coords(u_axis);
    let vc = field.mesh.axes.coords(v_axis);
    let (u0, u1) = (uc[0], uc[uc.len() - 1]);
    let (v0, v1) = (vc[0], vc[vc.len() - 1]);
    let mut samples = Vec::with_capacity(nu * nv);
    for jv in 0..nv {
        let v = v0 + (v1 - v0) * jv as f64 / (nv - 1) as f64;
        for iu in 0..nu {
            let u = u0 + (u1 - u0) * iu as f64 / (nu - 1) as f64;
            let mut p = [0.0; 3];
            p[normal.index()] = offset;
            p[u_axis.index()] = u;
            p[v_axis.index()] = v;
            samples.push(ProbeSample {
                position: p,
                phi: eval_potential(field, p)?,
                field: Some(eval_field(field, p)?),
            });
        }
    }
    Ok(ProbeResult {
        geometry: ProbeGeometry::Plane {
            normal,
            offset,
            resolution,
        },
        samples,
    })
}

/// Dimensionless coupling factor of one Dirichlet surface at a probe
/// point: the induced potential change per volt applied to that surface,
/// computed from two solves. By superposition it is independent of the
/// base voltage vector and of `delta`.
pub fn coupling_factor(
    spec: &DeviceSpec,
    resolution: &Resolution,
    grading: &ZGrading,
    solve: &SolveConfig,
    probe: [f64; 3],
    surface: SurfaceId,
    delta: f64,
) -> Result<f64, SolverError> {
    assert!(delta != 0.0, "coupling factor needs a non-zero delta");
    let mesh = build_mesh(spec, resolution, grading)?;
    let system = assemble(&mesh)?;
    let sv = mesh.built_voltages();
    let (base_field, _) = pcg_solve_with_values(&mesh, &system, &sv, solve)?;
    let mut bumped = sv.clone();
    bumped.set(surface, sv.get(surface) + delta);
    let (bumped_field, _) = pcg_solve_with_values(&mesh, &system, &bumped, solve)?;
    let a = eval_potential(&base_field, probe)?;
    let b = eval_potential(&bumped_field, probe)?;
    Ok((b - a) / delta)
}

/// Coupling factors of every Dirichlet surface (base first, then gates in
/// spec order) at one probe point, via one assembly and unit-voltage
/// solves.
///
/// For a device with zero Neumann flux these are a discrete harmonic
/// measure: each lies in (0, 1) and they sum to 1.
pub fn coupling_factors(
    spec: &DeviceSpec,
    resolution: &Resolution,
    grading: &ZGrading,
    solve: &SolveConfig,
    probe: [f64; 3],
) -> Result<Vec<(SurfaceId, f64)>, SolverError> {
    let mesh = build_mesh(spec, resolution, grading)?;
    let system = assemble(&mesh)?;
    let gate_count = spec.gates.len();
    let mut surfaces = Vec::with_capacity(gate_count + 1);
    surfaces.push(SurfaceId::Base);
    surfaces.extend((0..gate_count).map(SurfaceId::Gate));
    let mut out = Vec::with_capacity(surfaces.len());
    for id in surfaces {
        let mut sv = SurfaceVoltages::zero(gate_count);
        sv.set(id, 1.0);
        let (field, _) = pcg_solve_with_values(&mesh, &system, &sv, solve)?;
        out.push((id, eval_potential(&field, probe)?));
    }
    Ok(out)
}

/// Electric field at an element's centre, V/nm. Zero for deactivated
/// (gate) elements, whose nodes all carry one voltage.
pub fn element_center_field(field: &SolutionField<'_>, element: usize) -> [f64; 3] {
    let mesh = field.mesh;
    let corners = mesh.element_corners(element);
    let (grads, _) =
        physical_gradients(&corners, [0.0, 0.0, 0.0]).expect("mesh cells have positive volume");
    let nodes = mesh.element_nodes(element);
    let mut g = [0.0; 3];
    for a in 0..8 {
        let phi = field.values[nodes[a]];
        for d in 0..3 {
            g[d] += phi * grads[a][d];
        }
    }
    [-g[0], -g[1], -g[2]]
}

/// Nodal electric field recovered by volume-weighted averaging of the
/// adjacent active elements' centre values. Nodes buried inside gates get
/// zero.
pub fn nodal_field(field: &SolutionField<'_>) -> Vec<[f64; 3]> {
    let mesh = field.mesh;
    let n = mesh.node_count();
    let mut acc = alloc::vec![[0.0f64; 3]; n];
    let mut weight = alloc::vec![0.0f64; n];
    for e in 0..mesh.element_count() {
        if !mesh.active[e] {
            continue;
        }
        let g = element_center_field(field, e);
        let ext = mesh.element_extents(e);
        let vol = ext[0] * ext[1] * ext[2];
        for node in mesh.element_nodes(e) {
            for d in 0..3 {
                acc[node][d] += vol * g[d];
            }
            weight[node] += vol;
        }
    }
    for (a, &w) in acc.iter_mut().zip(&weight) {
        if w > 0.0 {
            for d in 0..3 {
                a[d] /= w;
            }
        }
    }
    acc
}

/// Mean potential gradient along a segment plus the largest field
/// component along the segment direction, sampled densely.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientProbe {
    /// (phi(end) - phi(start)) / |end - start|, V/nm.
    pub mean_gradient: f64,
    /// max over samples of |E . direction|, V/nm.
    pub max_field_component: f64,
    pub length: f64,
}

pub fn potential_gradient(
    field: &SolutionField<'_>,
    start: [f64; 3],
    end: [f64; 3],
) -> Result<GradientProbe, MeshError> {
    let delta = [end[0] - start[0], end[1] - start[1], end[2] - start[2]];
    let length = float::sqrt(delta[0] * delta[0] + delta[1] * delta[1] + delta[2] * delta[2]);
    assert!(length > 0.0, "gradient probe needs distinct endpoints");
    let dir = [delta[0] / length, delta[1] / length, delta[2] / length];
    let phi_a = eval_potential(field, start)?;
    let phi_b = eval_potential(field, end)?;

    // dense sampling resolves the per-element (piecewise) field values
    const SAMPLES: usize = 256;
    let mut max_comp = 0.0_f64;
    for i in 0..=SAMPLES {
        let t = i as f64 / SAMPLES as f64;
        let p = [
            start[0] + t * delta[0],
            start[1] + t * delta[1],
            start[2] + t * delta[2],
        ];
        let e = eval_field(field, p)?;
        let comp = float::abs(e[0] * dir[0] + e[1] * dir[1] + e[2] * dir[2]);
        max_comp = max_comp.max(comp);
    }
    Ok(GradientProbe {
        mean_gradient: (phi_b - phi_a) / length,
        max_field_component: max_comp,
        length,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::assemble;
    use crate::geometry::{Box3, DeviceSpec, Gate, Material};
    use crate::mesh::{structured_mesh, GridAxes, Mesh};
    use crate::solver::pcg_solve;
    use alloc::string::String;

    fn interpolant_field<'m>(mesh: &'m Mesh, f: impl Fn([f64; 3]) -> f64) -> SolutionField<'m> {
        let values = (0..mesh.node_count())
            .map(|n| f(mesh.node_coords(n)))
            .collect();
        SolutionField { mesh, values }
    }

    fn unit_mesh(n: usize) -> Mesh {
        let axes = GridAxes::uniform(
            &Box3::new([0.0, 0.0, 0.0], [1.0, 1.0, 1.0]).unwrap(),
            [n, n, n],
        )
        .unwrap();
        structured_mesh(axes, |_| 1.0, |_| None).unwrap()
    }

    #[test]
    fn nodal_values_reproduced_bitwise() {
        let mesh = unit_mesh(4);
        let field = interpolant_field(&mesh, |p| 1.0 + 2.0 * p[0] - p[1] * p[2]);
        for node in 0..mesh.node_count() {
            let p = mesh.node_coords(node);
            assert_eq!(eval_potential(&field, p).unwrap(), field.values[node]);
        }
    }

    #[test]
    fn element_center_is_corner_mean() {
        let mesh = unit_mesh(3);
        let field = interpolant_field(&mesh, |p| p[0] * 7.0 - 3.0 * p[2]);
        let e = 3;
        let nodes = mesh.element_nodes(e);
        let mean: f64 = nodes.iter().map(|&n| field.values[n]).sum::<f64>() / 8.0;
        let got = eval_potential(&field, mesh.element_center(e)).unwrap();
        assert!((got - mean).abs() < 1e-14);
    }

    #[test]
    fn constant_gradient_fields_are_exact() {
        let mesh = unit_mesh(4);
        let field = interpolant_field(&mesh, |p| 3.0 * p[0]);
        let e = eval_field(&field, [0.3, 0.7, 0.2]).unwrap();
        assert!((e[0] + 3.0).abs() < 1e-13);
        assert!(e[1].abs() < 1e-13);
        assert!(e[2].abs() < 1e-13);
    }

    #[test]
    fn out_of_domain_is_an_error() {
        let mesh = unit_mesh(3);
        let field = interpolant_field(&mesh, |_| 0.0);
        assert!(eval_potential(&field, [1.5, 0.5, 0.5]).is_err());
        assert!(eval_field(&field, [0.5, -0.1, 0.5]).is_err());
    }

    #[test]
    fn parallel_plate_field_is_uniform() {
        // phi = z on the unit cube: E = (0, 0, -1) everywhere
        let mesh = unit_mesh(5);
        let axes_mesh = &mesh;
        let field = interpolant_field(axes_mesh, |p| p[2]);
        for p in [[0.1, 0.2, 0.3], [0.9, 0.9, 0.05], [0.5, 0.5, 0.999]] {
            let e = eval_field(&field, p).unwrap();
            assert!((e[2] + 1.0).abs() < 1e-10, "{:?}", e);
            assert!(e[0].abs() < 1e-12 && e[1].abs() < 1e-12);
        }
    }

    fn layered_mesh(d: f64, eps1: f64, eps2: f64, v: f64, nz: usize) -> Mesh {
        // layer 1 (eps1) fills z < d, layer 2 above; plates at z=0 (0 V)
        // and z=1 (v). The interface plane z=d is a mandatory coordinate.
        let mut z: Vec<f64> = (0..nz).map(|i| i as f64 / (nz - 1) as f64).collect();
        z.push(d);
        z.sort_by(|a, b| a.partial_cmp(b).unwrap());
        z.dedup();
        let axes = GridAxes::new(alloc::vec![0.0, 0.5, 1.0], alloc::vec![0.0, 0.5, 1.0], z).unwrap();
        structured_mesh(
            axes,
            move |c| if c[2] < d { eps1 } else { eps2 },
            move |p| {
                if p[2] == 0.0 {
                    Some(0.0)
                } else if p[2] == 1.0 {
                    Some(v)
                } else {
                    None
                }
            },
        )
        .unwrap()
    }

    #[test]
    fn layered_capacitor_interface_value_and_flux_continuity() {
        let (d, eps1, eps2, v) = (0.4, 11.0, 4.5, 1.0);
        let mesh = layered_mesh(d, eps1, eps2, v, 6);
        let sys = assemble(&mesh).unwrap();
        let (field, report) = pcg_solve(&mesh, &sys, &SolveConfig::with_tol(1e-13)).unwrap();
        assert!(report.converged);

        let analytic_interface = v * (d / eps1) / (d / eps1 + (1.0 - d) / eps2);
        let got = eval_potential(&field, [0.5, 0.5, d]).unwrap();
        assert!(
            (got - analytic_interface).abs() <= 1e-8 * analytic_interface.abs(),
            "{} vs {}",
            got,
            analytic_interface
        );

        // normal displacement continuity across the interface
        let below = eval_field(&field, [0.5, 0.5, d - 1e-6]).unwrap();
        let above = eval_field(&field, [0.5, 0.5, d + 1e-6]).unwrap();
        let (d1, d2) = (eps1 * below[2], eps2 * above[2]);
        assert!(
            (d1 - d2).abs() <= 1e-8 * d1.abs(),
            "eps1*E1 = {} vs eps2*E2 = {}",
            d1,
            d2
        );

        // the line probe along z is piecewise linear through the analytic
        // interface value
        let probe = line_probe(&field, Axis::Z, [0.5, 0.5], SampleMode::Nodal).unwrap();
        for s in &probe.samples {
            let z = s.position[2];
            let want = if z <= d {
                analytic_interface * z / d
            } else {
                analytic_interface + (v - analytic_interface) * (z - d) / (1.0 - d)
            };
            assert!((s.phi - want).abs() < 1e-8, "z={} phi={} want={}", z, s.phi, want);
        }
    }

    #[test]
    fn zero_voltage_device_probes_flat_zero() {
        let mesh = unit_mesh(4);
        // all boundaries grounded: discrete solution is identically zero
        let axes = mesh.axes.clone();
        let mesh = structured_mesh(axes, |_| 1.0, |_| Some(0.0)).unwrap();
        let sys = assemble(&mesh).unwrap();
        let (field, _) = pcg_solve(&mesh, &sys, &SolveConfig::with_tol(1e-12)).unwrap();
        let probe = line_probe(&field, Axis::Y, [0.5, 0.5], SampleMode::Uniform(11)).unwrap();
        assert_eq!(probe.samples.len(), 11);
        for s in probe.samples {
            assert_eq!(s.phi, 0.0);
        }
    }

    #[test]
    fn constant_dirichlet_slice_is_uniform() {
        let axes = GridAxes::uniform(
            &Box3::new([0.0, 0.0, 0.0], [1.0, 1.0, 1.0]).unwrap(),
            [4, 4, 4],
        )
        .unwrap();
        let mesh = structured_mesh(axes, |_| 1.0, |_| Some(1.0)).unwrap();
        let sys = assemble(&mesh).unwrap();
        let (field, _) = pcg_solve(&mesh, &sys, &SolveConfig::with_tol(1e-12)).unwrap();
        let slice = plane_slice(&field, Axis::Z, 0.5, (7, 5)).unwrap();
        assert_eq!(slice.samples.len(), 35);
        for s in slice.samples {
            assert!((s.phi - 1.0).abs() < 1e-9);
            let e = s.field.unwrap();
            assert!(e[0].abs() < 1e-9 && e[1].abs() < 1e-9 && e[2].abs() < 1e-9);
        }
    }

    fn plate_spec(volts: f64) -> DeviceSpec {
        let domain = Box3::new([0.0, 0.0, 0.0], [1.0, 1.0, 2.0]).unwrap();
        let gate_box = Box3::new([0.0, 0.0, 1.0], [1.0, 1.0, 2.0]).unwrap();
        DeviceSpec::new(
            domain,
            Material::air(),
            alloc::vec![],
            alloc::vec![Gate {
                label: String::from("TOP"),
                voltage: volts,
                bounds: gate_box,
            }],
            0.0,
            0.0,
        )
        .unwrap()
    }

    #[test]
    fn plate_coupling_factor_is_height_fraction() {
        // phi = z * V_top in the active column, so the coupling of the top
        // plate at height z is exactly z (and the base supplies 1 - z)
        let spec = plate_spec(1.0);
        let res = Resolution::nodes(3, 3, 9);
        let cfg = SolveConfig::with_tol(1e-12);
        let probe = [0.5, 0.5, 0.75];
        let f1 = coupling_factor(
            &spec,
            &res,
            &ZGrading::none(),
            &cfg,
            probe,
            SurfaceId::Gate(0),
            1.0,
        )
        .unwrap();
        assert!((f1 - 0.75).abs() < 1e-9, "coupling {}", f1);
        // independent of delta and of the operating point
        let f2 = coupling_factor(
            &spec,
            &res,
            &ZGrading::none(),
            &cfg,
            probe,
            SurfaceId::Gate(0),
            2.0,
        )
        .unwrap();
        assert!((f1 - f2).abs() < 1e-8);

        // all-surface factors partition unity
        let all = coupling_factors(&spec, &res, &ZGrading::none(), &cfg, probe).unwrap();
        let total: f64 = all.iter().map(|(_, f)| f).sum();
        assert!((total - 1.0).abs() < 1e-6, "partition sum {}", total);
        for (id, f) in all {
            assert!(f > 0.0 && f < 1.0, "{:?} factor {}", id, f);
        }

        // Dirichlet dominance: one cell below the plate (z = 0.95 on a
        // 0.05-spaced column) the plate's coupling approaches 1
        let fine = Resolution::nodes(3, 3, 41);
        let near = coupling_factor(
            &spec,
            &fine,
            &ZGrading::none(),
            &cfg,
            [0.5, 0.5, 0.95],
            SurfaceId::Gate(0),
            1.0,
        )
        .unwrap();
        assert!(near > 0.9, "near-surface coupling {}", near);
    }

    #[test]
    fn nodal_field_recovery_reproduces_uniform_fields() {
        // phi = z: every element's centre field is (0, 0, -1), so the
        // volume-weighted nodal average is exact everywhere, boundary
        // nodes included
        let mesh = unit_mesh(5);
        let field = interpolant_field(&mesh, |p| p[2]);
        let recovered = nodal_field(&field);
        for (node, e) in recovered.iter().enumerate() {
            assert!(e[0].abs() < 1e-13 && e[1].abs() < 1e-13, "node {}", node);
            assert!((e[2] + 1.0).abs() < 1e-13, "node {}: {:?}", node, e);
        }
        let cell = element_center_field(&field, 7);
        assert!((cell[2] + 1.0).abs() < 1e-13);
    }

    #[test]
    fn gradient_probe_on_linear_field() {
        let mesh = unit_mesh(4);
        let field = interpolant_field(&mesh, |p| 3.0 * p[0]);
        let g = potential_gradient(&field, [0.1, 0.5, 0.5], [0.9, 0.5, 0.5]).unwrap();
        assert!((g.mean_gradient - 3.0).abs() < 1e-10);
        assert!((g.max_field_component - 3.0).abs() < 1e-10);
        assert!((g.length - 0.8).abs() < 1e-12);
    }

    #[test]
    fn line_through_gate_only_errors() {
        let spec = plate_spec(1.0);
        let mesh = crate::mesh::build_mesh(&spec, &Resolution::nodes(3, 3, 5), &ZGrading::none())
            .unwrap();
        let sys = assemble(&mesh).unwrap();
        let (field, _) = pcg_solve(&mesh, &sys, &SolveConfig::default()).unwrap();
        // a y-line at z = 1.5 runs entirely inside the conductor
        let err = line_probe(&field, Axis::Y, [0.5, 1.5], SampleMode::Nodal);
        assert!(matches!(err, Err(MeshError::LineOutsideActiveRegion)));
        // and one at z = 0.5 is fine
        assert!(line_probe(&field, Axis::Y, [0.5, 0.5], SampleMode::Nodal).is_ok());
    }
}
