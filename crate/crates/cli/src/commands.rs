//! Subcommand implementations: solve, sweep, probe, slice, convergence,
//! mesh-info.

use std::fs;
use std::path::{Path, PathBuf};

use dotfield::{
    assemble, build_mesh, line_probe, pcg_solve_with_values, plane_slice, potential_gradient,
    AssemblyError, Axis, DeviceSpec, LinearSystem, Mesh, MeshError, Preconditioner, Resolution,
    SampleMode, SolveConfig, SolveReport, SolverError, SurfaceVoltages, ZGrading,
};

use crate::args::{parse, Parsed};
use crate::cases::{run_convergence, Case, CASES};
use crate::config::{config_hash, parse_device, ConfigError};
use crate::manifest::{unix_timestamp, MeshStats, RunManifest, SolverStats};
use crate::output;

/// Default mesh spacing, nm. Matches the canonical device, whose box
/// coordinates are all multiples of 5 nm: the default mesh then has
/// exactly cubic cells, for which the discrete operator satisfies a
/// maximum principle.
pub const DEFAULT_SPACING_NM: f64 = 5.0;

/// Default slice/probe coordinates for the shipped device (mid-pillar
/// plane, G2 centre line, dot column); a config whose domain does not
/// contain them falls back to the domain centre.
const DEFAULT_SLICE_Z: f64 = 420.0;
const DEFAULT_SLICE_Y: f64 = 190.0;
const DEFAULT_LINE_X: f64 = 320.0;

#[derive(Debug)]
pub enum CmdError {
    Usage(String),
    Config(String),
    Solver(String),
    NonConverged(String),
}

impl CmdError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CmdError::Usage(_) | CmdError::Config(_) => 2,
            CmdError::Solver(_) | CmdError::NonConverged(_) => 1,
        }
    }
}

impl std::fmt::Display for CmdError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CmdError::Usage(m) => write!(f, "usage error: {}", m),
            CmdError::Config(m) => write!(f, "config error: {}", m),
            CmdError::Solver(m) => write!(f, "solver error: {}", m),
            CmdError::NonConverged(m) => write!(f, "solver did not converge: {}", m),
        }
    }
}

impl From<ConfigError> for CmdError {
    fn from(e: ConfigError) -> Self {
        CmdError::Config(format!("{}", e))
    }
}
impl From<MeshError> for CmdError {
    fn from(e: MeshError) -> Self {
        CmdError::Config(format!("{}", e))
    }
}
impl From<AssemblyError> for CmdError {
    fn from(e: AssemblyError) -> Self {
        CmdError::Config(format!("{}", e))
    }
}
impl From<SolverError> for CmdError {
    fn from(e: SolverError) -> Self {
        CmdError::Solver(format!("{}", e))
    }
}

pub const USAGE: &str = "dotfield — finite-element electrostatics for gated quantum-dot devices

USAGE:
  dotfield <COMMAND> [ARGS]

COMMANDS:
  solve <config>        solve and export field, slices, line probe, manifest
  sweep <config>        sweep one gate voltage, tabulate the probe potential
  probe <config>        extract a single axis-parallel line probe
  slice <config>        extract a single plane slice
  convergence           run a built-in manufactured-solution study
  mesh-info <config>    mesh statistics without solving

COMMON FLAGS:
  --gate LABEL=VOLTS    override a gate voltage (repeatable)
  --nodes NXxNYxNZ      target node counts per axis
  --spacing H | HX,HY,HZ  target spacing, nm (default 5)
  --z-band LO:HI        refine z spacing inside this band
  --z-ratio R           z refinement ratio inside the band (default 2)
  --tol T               relative residual target (default 1e-8)
  --max-iter N          CG iteration cap (default 10*sqrt(n))
  --no-precond          plain CG instead of ILU(0)-preconditioned CG
  --out DIR             output directory (default $DOTFIELD_OUT_DIR or ./out)

SOLVE FLAGS:
  --dry-run             mesh statistics only, no solve
  --dump-system         also write the reduced K and F in Matrix Market form
  --strict              serial execution (bitwise-reproducible outputs)
  --slice-z Z           x-y slice plane (default 420 nm or domain centre)
  --slice-y Y           x-z slice plane (default 190 nm or domain centre)
  --line-x X, --line-z Z  line-probe coordinates (default 320/slice-z)

SWEEP FLAGS:
  --sweep LABEL         gate to sweep (required)
  --from V --to V       sweep range (required, from != to)
  --steps N             number of solves (default 11, >= 2)
  --probe X,Y,Z         probe point (default 320,190,420 or domain centre)
  --mirror LABEL        drive LABEL at minus the swept voltage
  --jobs N              parallel solves (default 1)

PROBE FLAGS:
  --axis x|y|z          probe direction (required)
  --x/--y/--z V         the two fixed coordinates
  --nodal | --samples N sampling mode (default nodal)

SLICE FLAGS:
  --plane x|y|z         slice normal (required)
  --offset V            plane position, nm (required)
  --res NxM             sample grid (default 161x161)

CONVERGENCE FLAGS:
  --case NAME           quadratic-harmonic | trilinear-exact | layered-capacitor
  --levels N            refinement levels (default 4, >= 3)

MESH-INFO FLAGS:
  --export FILE.vtk     write the mesh as legacy VTK

EXIT CODES: 0 success, 1 solver non-convergence, 2 usage/config error.
";

const MESH_FLAGS: [&str; 4] = ["nodes", "spacing", "z-band", "z-ratio"];
const SOLVE_FLAGS: [&str; 2] = ["tol", "max-iter"];

fn concat_flags(extra: &[&'static str]) -> Vec<&'static str> {
    let mut v = vec!["gate", "out"];
    v.extend_from_slice(&MESH_FLAGS);
    v.extend_from_slice(&SOLVE_FLAGS);
    v.extend_from_slice(extra);
    v
}

struct Loaded {
    spec: DeviceSpec,
    hash: String,
    path: String,
}

fn load_spec(p: &Parsed) -> Result<Loaded, CmdError> {
    let path = p
        .positional
        .first()
        .ok_or_else(|| CmdError::Usage("missing config path".into()))?;
    let text = fs::read_to_string(path)
        .map_err(|e| CmdError::Config(format!("cannot read `{}`: {}", path, e)))?;
    let hash = config_hash(&text);
    let mut spec = parse_device(&text)?;
    let overrides = gate_overrides(p)?;
    if !overrides.is_empty() {
        spec = spec
            .with_gate_voltages(&overrides)
            .map_err(|e| CmdError::Usage(format!("{}", e)))?;
    }
    Ok(Loaded {
        spec,
        hash,
        path: path.clone(),
    })
}

fn gate_overrides(p: &Parsed) -> Result<Vec<(String, f64)>, CmdError> {
    let mut out = Vec::new();
    for spec in p.get_all("gate") {
        let (label, volts) = spec
            .split_once('=')
            .ok_or_else(|| CmdError::Usage(format!("--gate expects LABEL=VOLTS, got `{}`", spec)))?;
        let volts: f64 = volts
            .parse()
            .map_err(|_| CmdError::Usage(format!("--gate {}: bad voltage `{}`", label, volts)))?;
        out.push((label.to_string(), volts));
    }
    Ok(out)
}

fn mesh_params(p: &Parsed) -> Result<(Resolution, ZGrading), CmdError> {
    let resolution = if let Some(nodes) = p.get("nodes") {
        let parts: Vec<&str> = nodes.split('x').collect();
        if parts.len() != 3 {
            return Err(CmdError::Usage(format!(
                "--nodes expects NXxNYxNZ, got `{}`",
                nodes
            )));
        }
        let mut n = [0usize; 3];
        for (d, part) in parts.iter().enumerate() {
            n[d] = part
                .parse()
                .map_err(|_| CmdError::Usage(format!("--nodes: bad count `{}`", part)))?;
        }
        Resolution::nodes(n[0], n[1], n[2])
    } else if let Some(spacing) = p.get("spacing") {
        let parts: Vec<&str> = spacing.split(',').collect();
        let h: Vec<f64> = parts
            .iter()
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| CmdError::Usage(format!("--spacing: bad value `{}`", s)))
            })
            .collect::<Result<_, _>>()?;
        match h.as_slice() {
            [u] => Resolution::spacing(*u, *u, *u),
            [x, y, z] => Resolution::spacing(*x, *y, *z),
            _ => {
                return Err(CmdError::Usage(
                    "--spacing expects H or HX,HY,HZ".to_string(),
                ))
            }
        }
    } else {
        Resolution::spacing(DEFAULT_SPACING_NM, DEFAULT_SPACING_NM, DEFAULT_SPACING_NM)
    };

    let grading = if let Some(band) = p.get("z-band") {
        let (lo, hi) = band
            .split_once(':')
            .ok_or_else(|| CmdError::Usage(format!("--z-band expects LO:HI, got `{}`", band)))?;
        let lo: f64 = lo
            .parse()
            .map_err(|_| CmdError::Usage(format!("--z-band: bad value `{}`", lo)))?;
        let hi: f64 = hi
            .parse()
            .map_err(|_| CmdError::Usage(format!("--z-band: bad value `{}`", hi)))?;
        let ratio = p.get_f64("z-ratio").map_err(CmdError::Usage)?.unwrap_or(2.0);
        ZGrading::band(lo, hi, ratio)
    } else if p.get("z-ratio").is_some() {
        return Err(CmdError::Usage(
            "--z-ratio needs --z-band LO:HI".to_string(),
        ));
    } else {
        ZGrading::none()
    };
    Ok((resolution, grading))
}

fn solve_params(p: &Parsed) -> Result<SolveConfig, CmdError> {
    let tol = p.get_f64("tol").map_err(CmdError::Usage)?.unwrap_or(1e-8);
    if !(tol > 0.0 && tol < 1.0) {
        return Err(CmdError::Usage(format!("--tol must be in (0, 1), got {}", tol)));
    }
    Ok(SolveConfig {
        tol,
        max_iter: p.get_usize("max-iter").map_err(CmdError::Usage)?,
        preconditioner: if p.has("no-precond") {
            Preconditioner::None
        } else {
            Preconditioner::Ilu0
        },
    })
}

fn out_dir(p: &Parsed) -> PathBuf {
    if let Some(dir) = p.get("out") {
        return PathBuf::from(dir);
    }
    if let Ok(dir) = std::env::var("DOTFIELD_OUT_DIR") {
        if !dir.is_empty() {
            return PathBuf::from(dir);
        }
    }
    PathBuf::from("out")
}

fn write_out(dir: &Path, name: &str, contents: &str) -> Result<(), CmdError> {
    fs::create_dir_all(dir)
        .map_err(|e| CmdError::Config(format!("cannot create `{}`: {}", dir.display(), e)))?;
    let path = dir.join(name);
    fs::write(&path, contents)
        .map_err(|e| CmdError::Config(format!("cannot write `{}`: {}", path.display(), e)))
}

/// Inside-domain default, else the domain midpoint on that axis.
fn coord_or_center(want: f64, lo: f64, hi: f64) -> f64 {
    if want >= lo && want <= hi {
        want
    } else {
        0.5 * (lo + hi)
    }
}

fn coord_tag(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64).replace('-', "m")
    } else {
        format!("{}", v).replace('.', "p").replace('-', "m")
    }
}

fn mesh_summary(mesh: &Mesh, system: Option<&LinearSystem>) -> String {
    let [nx, ny, nz] = mesh.node_counts();
    let mut s = format!(
        "mesh: {}x{}x{} nodes ({} total), {} elements ({} active), {} Dirichlet nodes, {} Neumann faces",
        nx,
        ny,
        nz,
        mesh.node_count(),
        mesh.element_count(),
        mesh.active_element_count(),
        mesh.dirichlet_nodes.len(),
        mesh.neumann_faces.len()
    );
    if let Some(sys) = system {
        s.push_str(&format!(", {} free unknowns", sys.dim()));
    }
    s
}

fn manifest_for(
    loaded: &Loaded,
    mesh: &Mesh,
    system: Option<&LinearSystem>,
    report: &SolveReport,
    tol: f64,
    outputs: Vec<String>,
) -> RunManifest {
    RunManifest {
        artifact_version: env!("CARGO_PKG_VERSION").to_string(),
        config_path: loaded.path.clone(),
        config_hash: loaded.hash.clone(),
        timestamp_unix: unix_timestamp(),
        base_voltage: loaded.spec.base_voltage,
        gate_voltages: loaded
            .spec
            .gates
            .iter()
            .map(|g| (g.label.clone(), g.voltage))
            .collect(),
        mesh: MeshStats::collect(mesh, system),
        solver: SolverStats::from_report(report, tol),
        outputs,
    }
}

fn check_converged(report: &SolveReport) -> Result<(), CmdError> {
    if report.converged {
        Ok(())
    } else {
        Err(CmdError::NonConverged(format!(
            "{} iterations, relative residual {:.3e}",
            report.iterations, report.final_relative_residual
        )))
    }
}

pub fn cmd_solve(args: &[String]) -> Result<(), CmdError> {
    let p = parse(
        args,
        &concat_flags(&["slice-z", "slice-y", "line-x", "line-z"]),
        &["dry-run", "dump-system", "strict", "no-precond"],
    )
    .map_err(CmdError::Usage)?;
    let loaded = load_spec(&p)?;
    let (resolution, grading) = mesh_params(&p)?;
    let cfg = solve_params(&p)?;

    let mesh = build_mesh(&loaded.spec, &resolution, &grading)?;
    if p.has("dry-run") {
        println!("{}", mesh_summary(&mesh, None));
        return Ok(());
    }
    let system = assemble(&mesh)?;
    println!("{}", mesh_summary(&mesh, Some(&system)));

    let sv = SurfaceVoltages::from_spec(&loaded.spec);
    let (field, report) = pcg_solve_with_values(&mesh, &system, &sv, &cfg)?;
    println!(
        "solve: {} iterations, relative residual {:.3e}, {:.2}s ({})",
        report.iterations, report.final_relative_residual, report.wall_time, report.preconditioner
    );

    let domain = &loaded.spec.domain;
    let slice_z = coord_or_center(
        p.get_f64("slice-z").map_err(CmdError::Usage)?.unwrap_or(DEFAULT_SLICE_Z),
        domain.min[2],
        domain.max[2],
    );
    let slice_y = coord_or_center(
        p.get_f64("slice-y").map_err(CmdError::Usage)?.unwrap_or(DEFAULT_SLICE_Y),
        domain.min[1],
        domain.max[1],
    );
    let line_x = coord_or_center(
        p.get_f64("line-x").map_err(CmdError::Usage)?.unwrap_or(DEFAULT_LINE_X),
        domain.min[0],
        domain.max[0],
    );
    let line_z = coord_or_center(
        p.get_f64("line-z").map_err(CmdError::Usage)?.unwrap_or(slice_z),
        domain.min[2],
        domain.max[2],
    );

    let xy = plane_slice(&field, Axis::Z, slice_z, (161, 161))?;
    let xz = plane_slice(&field, Axis::Y, slice_y, (161, 161))?;
    let line = line_probe(&field, Axis::Y, [line_x, line_z], SampleMode::Nodal)?;

    let dir = out_dir(&p);
    let mut outputs = Vec::new();
    let emit = |name: String, text: String, outputs: &mut Vec<String>| -> Result<(), CmdError> {
        write_out(&dir, &name, &text)?;
        outputs.push(name);
        Ok(())
    };
    emit("field.vtk".into(), output::field_vtk(&field, &loaded.hash), &mut outputs)?;
    emit(
        format!("slice_xy_z{}.csv", coord_tag(slice_z)),
        output::probe_csv(&xy, &loaded.hash),
        &mut outputs,
    )?;
    emit(
        format!("slice_xy_z{}.vtk", coord_tag(slice_z)),
        output::slice_vtk(&xy, &loaded.hash),
        &mut outputs,
    )?;
    emit(
        format!("slice_xz_y{}.csv", coord_tag(slice_y)),
        output::probe_csv(&xz, &loaded.hash),
        &mut outputs,
    )?;
    emit(
        format!("slice_xz_y{}.vtk", coord_tag(slice_y)),
        output::slice_vtk(&xz, &loaded.hash),
        &mut outputs,
    )?;
    emit(
        format!("line_y_x{}_z{}.csv", coord_tag(line_x), coord_tag(line_z)),
        output::probe_csv(&line, &loaded.hash),
        &mut outputs,
    )?;
    if p.has("dump-system") {
        let k = stamp_matrix_market(system.matrix_market_matrix(), &loaded.hash);
        let f = stamp_matrix_market(system.matrix_market_rhs(), &loaded.hash);
        emit("system_k.mtx".into(), k, &mut outputs)?;
        emit("system_f.mtx".into(), f, &mut outputs)?;
    }

    let manifest = manifest_for(&loaded, &mesh, Some(&system), &report, cfg.tol, outputs);
    write_out(&dir, "manifest.json", &manifest.to_json())?;
    println!("wrote {} files to {}", manifest.outputs.len() + 1, dir.display());
    check_converged(&report)
}

fn stamp_matrix_market(text: String, hash: &str) -> String {
    let mut lines = text.splitn(2, '\n');
    let header = lines.next().unwrap_or_default();
    let rest = lines.next().unwrap_or_default();
    format!("{}\n% config_hash={}\n{}", header, hash, rest)
}

pub fn cmd_sweep(args: &[String]) -> Result<(), CmdError> {
    let p = parse(
        args,
        &concat_flags(&[
            "sweep", "from", "to", "steps", "probe", "mirror", "jobs", "grad-from", "grad-to",
        ]),
        &["strict", "no-precond"],
    )
    .map_err(CmdError::Usage)?;
    let loaded = load_spec(&p)?;
    let (resolution, grading) = mesh_params(&p)?;
    let cfg = solve_params(&p)?;

    let label = p
        .get("sweep")
        .ok_or_else(|| CmdError::Usage("--sweep LABEL is required".into()))?;
    let gate_idx = loaded
        .spec
        .gate_index(label)
        .map_err(|e| CmdError::Usage(format!("{}", e)))?;
    let mirror_idx = match p.get("mirror") {
        Some(m) => Some(
            loaded
                .spec
                .gate_index(m)
                .map_err(|e| CmdError::Usage(format!("{}", e)))?,
        ),
        None => None,
    };
    let from = p
        .get_f64("from")
        .map_err(CmdError::Usage)?
        .ok_or_else(|| CmdError::Usage("--from V is required".into()))?;
    let to = p
        .get_f64("to")
        .map_err(CmdError::Usage)?
        .ok_or_else(|| CmdError::Usage("--to V is required".into()))?;
    if from == to {
        return Err(CmdError::Usage("sweep range is empty (--from equals --to)".into()));
    }
    let steps = p.get_usize("steps").map_err(CmdError::Usage)?.unwrap_or(11);
    if steps < 2 {
        return Err(CmdError::Usage("--steps must be at least 2".into()));
    }
    let jobs = if p.has("strict") {
        1
    } else {
        p.get_usize("jobs").map_err(CmdError::Usage)?.unwrap_or(1).max(1)
    };

    let domain = &loaded.spec.domain;
    let probe = p.get_point("probe").map_err(CmdError::Usage)?.unwrap_or([
        coord_or_center(320.0, domain.min[0], domain.max[0]),
        coord_or_center(190.0, domain.min[1], domain.max[1]),
        coord_or_center(420.0, domain.min[2], domain.max[2]),
    ]);
    let grad_from = p
        .get_point("grad-from")
        .map_err(CmdError::Usage)?
        .unwrap_or(dotfield::geometry::IDQD_DOT_CENTERS[0]);
    let grad_to = p
        .get_point("grad-to")
        .map_err(CmdError::Usage)?
        .unwrap_or(dotfield::geometry::IDQD_DOT_CENTERS[1]);

    let mesh = build_mesh(&loaded.spec, &resolution, &grading)?;
    let system = assemble(&mesh)?;
    println!("{}", mesh_summary(&mesh, Some(&system)));

    let voltages: Vec<f64> = (0..steps)
        .map(|i| from + (to - from) * i as f64 / (steps - 1) as f64)
        .collect();

    // each step is an independent right-hand side on the shared system
    type StepResult = Result<(f64, Option<f64>, SolveReport), SolverError>;
    let run_step = |v: f64| -> StepResult {
        let mut sv = SurfaceVoltages::from_spec(&loaded.spec);
        sv.gates[gate_idx] = v;
        if let Some(m) = mirror_idx {
            sv.gates[m] = -v;
        }
        let (field, report) = pcg_solve_with_values(&mesh, &system, &sv, &cfg)?;
        let phi = dotfield::eval_potential(&field, probe)?;
        let grad = if mirror_idx.is_some() {
            Some(potential_gradient(&field, grad_from, grad_to)?.mean_gradient)
        } else {
            None
        };
        Ok((phi, grad, report))
    };

    let mut results: Vec<Option<StepResult>> = (0..steps).map(|_| None).collect();
    if jobs <= 1 {
        for (i, &v) in voltages.iter().enumerate() {
            results[i] = Some(run_step(v));
        }
    } else {
        let next = std::sync::atomic::AtomicUsize::new(0);
        let slots = std::sync::Mutex::new(&mut results);
        std::thread::scope(|scope| {
            for _ in 0..jobs.min(steps) {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                    if i >= steps {
                        break;
                    }
                    let r = run_step(voltages[i]);
                    slots.lock().unwrap()[i] = Some(r);
                });
            }
        });
    }

    let mut rows: Vec<(f64, f64, Option<f64>)> = Vec::with_capacity(steps);
    let mut last_report = None;
    let mut all_converged = true;
    for (i, slot) in results.into_iter().enumerate() {
        let (phi, grad, report) = slot.expect("all steps computed").map_err(CmdError::from)?;
        all_converged &= report.converged;
        rows.push((voltages[i], phi, grad));
        last_report = Some(report);
    }

    // affine diagnostic: the probe potential of a linear system must lie
    // on a straight line in the swept voltage
    let n = rows.len() as f64;
    let mx = rows.iter().map(|r| r.0).sum::<f64>() / n;
    let my = rows.iter().map(|r| r.1).sum::<f64>() / n;
    let sxx: f64 = rows.iter().map(|r| (r.0 - mx) * (r.0 - mx)).sum();
    let sxy: f64 = rows.iter().map(|r| (r.0 - mx) * (r.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let max_dev = rows
        .iter()
        .map(|r| (r.1 - (intercept + slope * r.0)).abs())
        .fold(0.0_f64, f64::max);

    println!(
        "sweep {} from {} V to {} V in {} steps at probe ({}, {}, {})",
        label, from, to, steps, probe[0], probe[1], probe[2]
    );
    println!(
        "coupling factor (fitted slope) = {:.6}, max affine deviation = {:.3e} V{}",
        slope,
        max_dev,
        if max_dev > 1e-6 { "  [exceeds 1e-6 V]" } else { "" }
    );

    let dir = out_dir(&p);
    let csv = output::sweep_csv(&rows, slope, intercept, max_dev, &loaded.hash);
    write_out(&dir, "sweep.csv", &csv)?;
    let report = last_report.expect("at least two steps");
    let manifest = manifest_for(
        &loaded,
        &mesh,
        Some(&system),
        &report,
        cfg.tol,
        vec!["sweep.csv".into()],
    );
    write_out(&dir, "manifest.json", &manifest.to_json())?;
    println!("wrote sweep.csv to {}", dir.display());

    if !all_converged {
        return Err(CmdError::NonConverged("one or more sweep steps".into()));
    }
    Ok(())
}

fn parse_axis(s: &str) -> Result<Axis, CmdError> {
    match s {
        "x" | "X" => Ok(Axis::X),
        "y" | "Y" => Ok(Axis::Y),
        "z" | "Z" => Ok(Axis::Z),
        other => Err(CmdError::Usage(format!("bad axis `{}` (use x, y or z)", other))),
    }
}

pub fn cmd_probe(args: &[String]) -> Result<(), CmdError> {
    let p = parse(
        args,
        &concat_flags(&["axis", "x", "y", "z", "samples"]),
        &["nodal", "no-precond"],
    )
    .map_err(CmdError::Usage)?;
    let loaded = load_spec(&p)?;
    let (resolution, grading) = mesh_params(&p)?;
    let cfg = solve_params(&p)?;
    let axis = parse_axis(
        p.get("axis")
            .ok_or_else(|| CmdError::Usage("--axis x|y|z is required".into()))?,
    )?;

    let [a1, a2] = axis.others();
    let domain = &loaded.spec.domain;
    let fixed_default = |ax: Axis| {
        let d = ax.index();
        let want = match ax {
            Axis::X => DEFAULT_LINE_X,
            Axis::Y => DEFAULT_SLICE_Y,
            Axis::Z => DEFAULT_SLICE_Z,
        };
        coord_or_center(want, domain.min[d], domain.max[d])
    };
    let get_fixed = |ax: Axis| -> Result<f64, CmdError> {
        Ok(p.get_f64(ax.name())
            .map_err(CmdError::Usage)?
            .unwrap_or_else(|| fixed_default(ax)))
    };
    if p.get(axis.name()).is_some() {
        return Err(CmdError::Usage(format!(
            "--{} fixes a coordinate on the probe axis itself",
            axis.name()
        )));
    }
    let fixed = [get_fixed(a1)?, get_fixed(a2)?];

    let mode = match p.get_usize("samples").map_err(CmdError::Usage)? {
        Some(n) if !p.has("nodal") => {
            if n < 2 {
                return Err(CmdError::Usage("--samples must be at least 2".into()));
            }
            SampleMode::Uniform(n)
        }
        Some(_) => return Err(CmdError::Usage("--samples conflicts with --nodal".into())),
        None => SampleMode::Nodal,
    };

    let mesh = build_mesh(&loaded.spec, &resolution, &grading)?;
    let system = assemble(&mesh)?;
    let sv = SurfaceVoltages::from_spec(&loaded.spec);
    let (field, report) = pcg_solve_with_values(&mesh, &system, &sv, &cfg)?;
    let probe = line_probe(&field, axis, fixed, mode)?;

    let dir = out_dir(&p);
    let name = format!(
        "line_{}_{}{}_{}{}.csv",
        axis.name(),
        a1.name(),
        coord_tag(fixed[0]),
        a2.name(),
        coord_tag(fixed[1])
    );
    write_out(&dir, &name, &output::probe_csv(&probe, &loaded.hash))?;
    let manifest = manifest_for(&loaded, &mesh, Some(&system), &report, cfg.tol, vec![name.clone()]);
    write_out(&dir, "manifest.json", &manifest.to_json())?;
    println!(
        "probe along {} at {}={}, {}={}: {} samples -> {}",
        axis.name(),
        a1.name(),
        fixed[0],
        a2.name(),
        fixed[1],
        probe.samples.len(),
        dir.join(&name).display()
    );
    check_converged(&report)
}

pub fn cmd_slice(args: &[String]) -> Result<(), CmdError> {
    let p = parse(
        args,
        &concat_flags(&["plane", "offset", "res"]),
        &["no-precond"],
    )
    .map_err(CmdError::Usage)?;
    let loaded = load_spec(&p)?;
    let (resolution, grading) = mesh_params(&p)?;
    let cfg = solve_params(&p)?;
    let normal = parse_axis(
        p.get("plane")
            .ok_or_else(|| CmdError::Usage("--plane x|y|z is required".into()))?,
    )?;
    let offset = p
        .get_f64("offset")
        .map_err(CmdError::Usage)?
        .ok_or_else(|| CmdError::Usage("--offset V is required".into()))?;
    let res = match p.get("res") {
        None => (161, 161),
        Some(r) => {
            let (a, b) = r
                .split_once('x')
                .ok_or_else(|| CmdError::Usage(format!("--res expects NxM, got `{}`", r)))?;
            let a: usize = a
                .parse()
                .map_err(|_| CmdError::Usage(format!("--res: bad count `{}`", a)))?;
            let b: usize = b
                .parse()
                .map_err(|_| CmdError::Usage(format!("--res: bad count `{}`", b)))?;
            if a < 2 || b < 2 {
                return Err(CmdError::Usage("--res needs at least 2x2".into()));
            }
            (a, b)
        }
    };

    let mesh = build_mesh(&loaded.spec, &resolution, &grading)?;
    let system = assemble(&mesh)?;
    let sv = SurfaceVoltages::from_spec(&loaded.spec);
    let (field, report) = pcg_solve_with_values(&mesh, &system, &sv, &cfg)?;
    let slice = plane_slice(&field, normal, offset, res)?;

    let dir = out_dir(&p);
    let base = format!("slice_{}{}", normal.name(), coord_tag(offset));
    let csv_name = format!("{}.csv", base);
    let vtk_name = format!("{}.vtk", base);
    write_out(&dir, &csv_name, &output::probe_csv(&slice, &loaded.hash))?;
    write_out(&dir, &vtk_name, &output::slice_vtk(&slice, &loaded.hash))?;
    let manifest = manifest_for(
        &loaded,
        &mesh,
        Some(&system),
        &report,
        cfg.tol,
        vec![csv_name.clone(), vtk_name],
    );
    write_out(&dir, "manifest.json", &manifest.to_json())?;
    println!(
        "slice {}={} ({}x{} samples) -> {}",
        normal.name(),
        offset,
        res.0,
        res.1,
        dir.join(&base).display()
    );
    check_converged(&report)
}

pub fn cmd_convergence(args: &[String]) -> Result<(), CmdError> {
    let p = parse(args, &["case", "levels", "out"], &[]).map_err(CmdError::Usage)?;
    let case_name = p.get("case").unwrap_or("quadratic-harmonic");
    let case = Case::from_name(case_name).ok_or_else(|| {
        CmdError::Usage(format!(
            "unknown case `{}` (available: {})",
            case_name,
            CASES.join(", ")
        ))
    })?;
    let levels = p.get_usize("levels").map_err(CmdError::Usage)?.unwrap_or(4);
    if levels < 3 {
        return Err(CmdError::Usage("--levels must be at least 3".into()));
    }

    let report = run_convergence(case, levels).map_err(CmdError::from)?;
    println!("case {} over {} levels:", case, levels);
    println!("  cells    h           L2 error");
    for l in &report.levels {
        println!("  {:<8} {:<11.4e} {:.6e}", l.cells, l.h, l.l2_error);
    }
    match report.fitted_order {
        Some(order) => println!("estimated order: {:.3}", order),
        None => println!("estimated order: exact (errors at solver-tolerance floor)"),
    }
    if !report.monotone {
        println!("warning: error did not decrease monotonically");
    }

    if p.get("out").is_some() {
        let rows: Vec<(usize, f64, f64)> = report
            .levels
            .iter()
            .map(|l| (l.cells, l.h, l.l2_error))
            .collect();
        let hash = config_hash(case.name());
        let dir = out_dir(&p);
        write_out(
            &dir,
            "convergence.csv",
            &output::convergence_csv(&rows, report.fitted_order, &hash),
        )?;
        println!("wrote convergence.csv to {}", dir.display());
    }
    Ok(())
}

pub fn cmd_mesh_info(args: &[String]) -> Result<(), CmdError> {
    let p = parse(args, &concat_flags(&["export"]), &[]).map_err(CmdError::Usage)?;
    let loaded = load_spec(&p)?;
    let (resolution, grading) = mesh_params(&p)?;
    let mesh = build_mesh(&loaded.spec, &resolution, &grading)?;
    println!("{}", mesh_summary(&mesh, None));
    if let Some(path) = p.get("export") {
        let text = output::mesh_vtk(&mesh, &loaded.hash);
        fs::write(path, text)
            .map_err(|e| CmdError::Config(format!("cannot write `{}`: {}", path, e)))?;
        println!("wrote mesh to {}", path);
    }
    Ok(())
}
