//! Finite-element electrostatics for trench-isolated quantum-dot devices.
//!
//! The crate solves the variable-coefficient Laplace equation
//! `div(eps(x) grad(phi)) = 0` on an axis-aligned box domain populated with
//! rectangular dielectric regions and metal gate electrodes. Gates and the
//! grounded base carry Dirichlet values, every other exterior surface carries
//! a (normally zero-flux) Neumann condition. The discretisation uses 8-node
//! trilinear brick elements on a structured tensor-product mesh whose planes
//! are aligned with every material interface, and the reduced symmetric
//! positive-definite system is solved with conjugate gradients under an
//! ILU(0)-style incomplete factorisation preconditioner.
//!
//! Pipeline, in the order a caller usually touches it:
//!
//! 1. [`geometry`] — device description: materials, boxes, gates, voltages.
//! 2. [`mesh`] — interface-aligned structured hexahedral mesh with boundary
//!    classification and graded z spacing.
//! 3. [`element`] — trilinear shape functions, quadrature, element matrices.
//! 4. [`assembly`] — global sparse system with symmetric Dirichlet
//!    elimination.
//! 5. [`solver`] — preconditioned CG plus a dense direct oracle.
//! 6. [`postprocess`] — field evaluation, line/plane probes, gate-coupling
//!    factors.
//!
//! The crate is `no_std`-compatible (`--no-default-features --features libm`);
//! allocation is required. File formats, configuration parsing and the
//! command-line driver live in the companion `dotfield-cli` crate.

#![cfg_attr(not(feature = "std"), no_std)]
// index-style element loops mirror the math; negated float comparisons
// (`!(x > 0)`) are deliberate NaN guards
#![allow(clippy::needless_range_loop)]
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::excessive_precision)]

extern crate alloc;

#[cfg(all(not(feature = "std"), not(feature = "libm")))]
compile_error!("dotfield requires either the `std` or the `libm` feature");

pub mod assembly;
pub mod element;
pub mod geometry;
pub mod mesh;
pub mod postprocess;
pub mod solver;

pub use assembly::{assemble, AssemblyError, LinearSystem, SymCsr};
pub use element::{element_stiffness, face_load, shape, ElementError, QuadratureRule, ShapeSet};
pub use geometry::{
    canonical_idqd_device, Box3, DeviceSpec, Gate, GeometryError, Material, PointMaterial,
};
pub use mesh::{
    build_mesh, Axis, GridAxes, Mesh, MeshError, Resolution, SurfaceId, SurfaceVoltages, ZGrading,
};
pub use postprocess::{
    coupling_factor, coupling_factors, element_center_field, eval_field, eval_potential,
    line_probe, nodal_field, plane_slice, potential_gradient, GradientProbe, ProbeGeometry,
    ProbeResult, ProbeSample, SampleMode,
};
pub use solver::{
    dense_solve, ilu0_factor, pcg_solve, pcg_solve_with_values, solve_dense_system, Ilu0,
    Preconditioner, SolveConfig, SolveReport, SolutionField, SolverError,
};

/// Float functions that are `std`-only, routed through `libm` off-std.
pub(crate) mod float {
    #[cfg(feature = "std")]
    #[inline]
    pub fn sqrt(x: f64) -> f64 {
        x.sqrt()
    }
    #[cfg(not(feature = "std"))]
    #[inline]
    pub fn sqrt(x: f64) -> f64 {
        libm::sqrt(x)
    }

    #[cfg(feature = "std")]
    #[inline]
    pub fn abs(x: f64) -> f64 {
        x.abs()
    }
    #[cfg(not(feature = "std"))]
    #[inline]
    pub fn abs(x: f64) -> f64 {
        libm::fabs(x)
    }

    #[cfg(feature = "std")]
    #[inline]
    pub fn ceil(x: f64) -> f64 {
        x.ceil()
    }
    #[cfg(not(feature = "std"))]
    #[inline]
    pub fn ceil(x: f64) -> f64 {
        libm::ceil(x)
    }

    #[cfg(feature = "std")]
    #[inline]
    pub fn powf(x: f64, y: f64) -> f64 {
        x.powf(y)
    }
    #[cfg(not(feature = "std"))]
    #[inline]
    pub fn powf(x: f64, y: f64) -> f64 {
        libm::pow(x, y)
    }
}
