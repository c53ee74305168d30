//! Trilinear 8-node brick element.
//!
//! Local node ordering is the right-handed hexahedron convention (identical
//! to the VTK hexahedron): nodes 0-3 run counter-clockwise around the bottom
//! face seen from +zeta, nodes 4-7 repeat the loop on the top face.
//!
//! ```text
//!        7--------6            zeta
//!       /|       /|             |  eta
//!      4--------5 |             | /
//!      | 3------|-2
//!      |/       |/              +---- xi
//!      0--------1
//! ```
//!
//! Shape functions are `N_j = (1 + xi*xi_j)(1 + eta*eta_j)(1 + zeta*zeta_j)/8`
//! on the reference cube `[-1,1]^3`. The element stiffness integrand for an
//! axis-aligned brick with constant permittivity is a polynomial that a
//! 2x2x2 Gauss rule integrates exactly; higher orders are provided so tests
//! can cross-check that claim.

use alloc::vec::Vec;
use core::fmt;

/// Reference-cube corner signs, in the documented node ordering.
pub const HEX_CORNERS: [[f64; 3]; 8] = [
    [-1.0, -1.0, -1.0],
    [1.0, -1.0, -1.0],
    [1.0, 1.0, -1.0],
    [-1.0, 1.0, -1.0],
    [-1.0, -1.0, 1.0],
    [1.0, -1.0, 1.0],
    [1.0, 1.0, 1.0],
    [-1.0, 1.0, 1.0],
];

/// Corner signs of the bilinear quadrilateral face element.
pub const QUAD_CORNERS: [[f64; 2]; 4] = [[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]];

#[derive(Debug, Clone, PartialEq)]
pub enum ElementError {
    /// Jacobian determinant not strictly positive at a quadrature point.
    NonPositiveJacobian { det: f64 },
    /// Face with (numerically) zero area.
    DegenerateFace,
    /// Gauss order outside the supported 1..=5 range.
    UnsupportedOrder(usize),
}

impl fmt::Display for ElementError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ElementError::NonPositiveJacobian { det } => {
                write!(f, "non-positive Jacobian determinant {}", det)
            }
            ElementError::DegenerateFace => write!(f, "degenerate (zero-area) face"),
            ElementError::UnsupportedOrder(n) => {
                write!(f, "unsupported Gauss order {} (supported: 1..=5)", n)
            }
        }
    }
}

impl core::error::Error for ElementError {}

/// Shape function values and reference-space gradients at one local point.
#[derive(Debug, Clone, Copy)]
pub struct ShapeSet {
    pub values: [f64; 8],
    /// d N_j / d (xi, eta, zeta)
    pub gradients: [[f64; 3]; 8],
}

/// Trilinear shape functions at local coordinates.
///
/// Evaluation outside `[-1,1]^3` is permitted (extrapolation) and produces
/// the same polynomials.
pub fn shape(local: [f64; 3]) -> ShapeSet {
    let [xi, eta, zeta] = local;
    let mut values = [0.0; 8];
    let mut gradients = [[0.0; 3]; 8];
    for (j, s) in HEX_CORNERS.iter().enumerate() {
        let fx = 1.0 + xi * s[0];
        let fy = 1.0 + eta * s[1];
        let fz = 1.0 + zeta * s[2];
        values[j] = 0.125 * fx * fy * fz;
        gradients[j] = [
            0.125 * s[0] * fy * fz,
            0.125 * fx * s[1] * fz,
            0.125 * fx * fy * s[2],
        ];
    }
    ShapeSet { values, gradients }
}

/// Bilinear quad shape functions on the reference square, for face
/// integrals.
pub fn face_shape(local: [f64; 2]) -> ([f64; 4], [[f64; 2]; 4]) {
    let [xi, eta] = local;
    let mut values = [0.0; 4];
    let mut gradients = [[0.0; 2]; 4];
    for (j, s) in QUAD_CORNERS.iter().enumerate() {
        let fx = 1.0 + xi * s[0];
        let fy = 1.0 + eta * s[1];
        values[j] = 0.25 * fx * fy;
        gradients[j] = [0.25 * s[0] * fy, 0.25 * fx * s[1]];
    }
    (values, gradients)
}

// Gauss-Legendre abscissas/weights on [-1, 1], orders 1..=5.
fn gauss_1d(order: usize) -> Result<(&'static [f64], &'static [f64]), ElementError> {
    const P1: [f64; 1] = [0.0];
    const W1: [f64; 1] = [2.0];
    const P2: [f64; 2] = [-0.577_350_269_189_625_76, 0.577_350_269_189_625_76];
    const W2: [f64; 2] = [1.0, 1.0];
    const P3: [f64; 3] = [-0.774_596_669_241_483_4, 0.0, 0.774_596_669_241_483_4];
    const W3: [f64; 3] = [
        0.555_555_555_555_555_6,
        0.888_888_888_888_888_9,
        0.555_555_555_555_555_6,
    ];
    const P4: [f64; 4] = [
        -0.861_136_311_594_052_6,
        -0.339_981_043_584_856_26,
        0.339_981_043_584_856_26,
        0.861_136_311_594_052_6,
    ];
    const W4: [f64; 4] = [
        0.347_854_845_137_453_85,
        0.652_145_154_862_546_2,
        0.652_145_154_862_546_2,
        0.347_854_845_137_453_85,
    ];
    const P5: [f64; 5] = [
        -0.906_179_845_938_663_9,
        -0.538_469_310_105_683_1,
        0.0,
        0.538_469_310_105_683_1,
        0.906_179_845_938_663_9,
    ];
    const W5: [f64; 5] = [
        0.236_926_885_056_189_08,
        0.478_628_670_499_366_47,
        0.568_888_888_888_888_9,
        0.478_628_670_499_366_47,
        0.236_926_885_056_189_08,
    ];
    match order {
        1 => Ok((&P1, &W1)),
        2 => Ok((&P2, &W2)),
        3 => Ok((&P3, &W3)),
        4 => Ok((&P4, &W4)),
        5 => Ok((&P5, &W5)),
        n => Err(ElementError::UnsupportedOrder(n)),
    }
}

/// Tensor-product Gauss rule. Volume rules carry 3D points whose weights
/// sum to the reference volume 8; face rules carry (xi, eta) points (third
/// component zero) whose weights sum to the reference area 4.
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    /// `order`^3-point rule for volume integrals.
    pub fn gauss_volume(order: usize) -> Result<Self, ElementError> {
        let (p, w) = gauss_1d(order)?;
        let mut points = Vec::with_capacity(order * order * order);
        let mut weights = Vec::with_capacity(order * order * order);
        for (k, &pz) in p.iter().enumerate() {
            for (j, &py) in p.iter().enumerate() {
                for (i, &px) in p.iter().enumerate() {
                    points.push([px, py, pz]);
                    weights.push(w[i] * w[j] * w[k]);
                }
            }
        }
        Ok(QuadratureRule { points, weights })
    }

    /// `order`^2-point rule for face integrals.
    pub fn gauss_face(order: usize) -> Result<Self, ElementError> {
        let (p, w) = gauss_1d(order)?;
        let mut points = Vec::with_capacity(order * order);
        let mut weights = Vec::with_capacity(order * order);
        for (j, &py) in p.iter().enumerate() {
            for (i, &px) in p.iter().enumerate() {
                points.push([px, py, 0.0]);
                weights.push(w[i] * w[j]);
            }
        }
        Ok(QuadratureRule { points, weights })
    }
}

fn det3(m: &[[f64; 3]; 3]) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

fn inv3(m: &[[f64; 3]; 3], det: f64) -> [[f64; 3]; 3] {
    let d = 1.0 / det;
    [
        [
            d * (m[1][1] * m[2][2] - m[1][2] * m[2][1]),
            d * (m[0][2] * m[2][1] - m[0][1] * m[2][2]),
            d * (m[0][1] * m[1][2] - m[0][2] * m[1][1]),
        ],
        [
            d * (m[1][2] * m[2][0] - m[1][0] * m[2][2]),
            d * (m[0][0] * m[2][2] - m[0][2] * m[2][0]),
            d * (m[0][2] * m[1][0] - m[0][0] * m[1][2]),
        ],
        [
            d * (m[1][0] * m[2][1] - m[1][1] * m[2][0]),
            d * (m[0][1] * m[2][0] - m[0][0] * m[2][1]),
            d * (m[0][0] * m[1][1] - m[0][1] * m[1][0]),
        ],
    ]
}

/// Isoparametric Jacobian `J_ij = d x_i / d xi_j` at one local point.
pub fn jacobian(corners: &[[f64; 3]; 8], grads: &[[f64; 3]; 8]) -> [[f64; 3]; 3] {
    let mut j = [[0.0; 3]; 3];
    for (a, g) in grads.iter().enumerate() {
        for r in 0..3 {
            for c in 0..3 {
                j[r][c] += corners[a][r] * g[c];
            }
        }
    }
    j
}

/// Physical shape-function gradients `J^{-T} grad_ref(N)` and the Jacobian
/// determinant at one local point.
pub fn physical_gradients(
    corners: &[[f64; 3]; 8],
    local: [f64; 3],
) -> Result<([[f64; 3]; 8], f64), ElementError> {
    let s = shape(local);
    let j = jacobian(corners, &s.gradients);
    let det = det3(&j);
    if !(det > 0.0) || !det.is_finite() {
        return Err(ElementError::NonPositiveJacobian { det });
    }
    let inv = inv3(&j, det);
    let mut phys = [[0.0; 3]; 8];
    for a in 0..8 {
        for r in 0..3 {
            // (J^{-T} g)_r = sum_c inv[c][r] * g[c]
            phys[a][r] = (0..3).map(|c| inv[c][r] * s.gradients[a][c]).sum();
        }
    }
    Ok((phys, det))
}

/// Element stiffness matrix `K^e_ab = sum_q w_q eps (grad N_a . grad N_b)
/// det J`.
///
/// Symmetric positive semidefinite with the constant vector in its kernel.
pub fn element_stiffness(
    corners: &[[f64; 3]; 8],
    eps_rel: f64,
    rule: &QuadratureRule,
) -> Result<[[f64; 8]; 8], ElementError> {
    let mut k = [[0.0; 8]; 8];
    for (q, &local) in rule.points.iter().enumerate() {
        let (grads, det) = physical_gradients(corners, local)?;
        let scale = rule.weights[q] * det;
        for a in 0..8 {
            for b in a..8 {
                let dot = grads[a][0] * grads[b][0]
                    + grads[a][1] * grads[b][1]
                    + grads[a][2] * grads[b][2];
                k[a][b] += scale * dot;
            }
        }
    }
    // eps applied once at the end, so the matrix is exactly linear in it
    for a in 0..8 {
        for b in a..8 {
            k[a][b] *= eps_rel;
            k[b][a] = k[a][b];
        }
    }
    Ok(k)
}

/// Neumann face load `F_a = -sum_q w_q N_a q dA`.
///
/// `corners` are the four face nodes in quad ordering; the surface measure
/// comes from the cross product of the two tangent vectors, so the face may
/// sit in any plane.
pub fn face_load(
    corners: &[[f64; 3]; 4],
    q: f64,
    rule: &QuadratureRule,
) -> Result<[f64; 4], ElementError> {
    let mut f = [0.0; 4];
    for (p, &local) in rule.points.iter().enumerate() {
        let (values, grads) = face_shape([local[0], local[1]]);
        let mut t_xi = [0.0; 3];
        let mut t_eta = [0.0; 3];
        for a in 0..4 {
            for r in 0..3 {
                t_xi[r] += corners[a][r] * grads[a][0];
                t_eta[r] += corners[a][r] * grads[a][1];
            }
        }
        let cross = [
            t_xi[1] * t_eta[2] - t_xi[2] * t_eta[1],
            t_xi[2] * t_eta[0] - t_xi[0] * t_eta[2],
            t_xi[0] * t_eta[1] - t_xi[1] * t_eta[0],
        ];
        let da = crate::float::sqrt(cross[0] * cross[0] + cross[1] * cross[1] + cross[2] * cross[2]);
        if !(da > 0.0) || !da.is_finite() {
            return Err(ElementError::DegenerateFace);
        }
        for a in 0..4 {
            f[a] -= rule.weights[p] * values[a] * q * da;
        }
    }
    Ok(f)
}
