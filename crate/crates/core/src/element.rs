//! Lowest-order Nédélec element on an axis-aligned brick.
//!
//! On a brick with extents `(hx, hy, hz)` and local coordinates
//! `ξ = (x/hx, y/hy, z/hz)` the basis function of the x-edge with transverse
//! offsets `(a, b)` is
//!
//! ```text
//! φ = ( L_a(ξ_y) L_b(ξ_z), 0, 0 ),   L_0(s) = 1 - s,  L_1(s) = s,
//! ```
//!
//! and the y- and z-edge functions follow by permuting axes. Each basis
//! function has unit average tangential component on its own edge and zero
//! tangential component on the other eleven. Local edges are ordered as in
//! [`GridLevel::cell_edges`](crate::mesh::GridLevel::cell_edges).

use crate::error::{Error, Result};
use crate::mesh::transverse_axes;
use crate::quadrature::GaussRule;

pub type LocalMatrix = [[f64; 12]; 12];

/// Quadrature points per axis for the element matrices. The integrands are
/// at most quadratic in each variable, so two points are exact.
pub const ELEMENT_QUADRATURE_POINTS: usize = 2;

/// Geometry of an axis-parallel edge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeGeometry {
    pub start: [f64; 3],
    pub dir: usize,
    pub length: f64,
}

impl EdgeGeometry {
    pub fn midpoint(&self) -> [f64; 3] {
        let mut p = self.start;
        p[self.dir] += 0.5 * self.length;
        p
    }
}

/// Average tangential component `λ_e(v) = (1/|e|) ∫_e v·t_e ds`.
///
/// Evaluated with a single midpoint sample. For fields in the local Nédélec
/// space the tangential component is constant along every axis-parallel
/// segment, so the sample is exact there; for general fields this is the
/// one-point rule.
pub fn dof_functional(field: impl Fn([f64; 3]) -> [f64; 3], edge: &EdgeGeometry) -> f64 {
    field(edge.midpoint())[edge.dir]
}

/// An axis-aligned brick with its lower corner at the origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceBrick {
    extents: [f64; 3],
}

#[inline]
fn lagrange1(offset: usize, s: f64) -> f64 {
    if offset == 0 {
        1.0 - s
    } else {
        s
    }
}

#[inline]
fn lagrange1_slope(offset: usize) -> f64 {
    if offset == 0 {
        -1.0
    } else {
        1.0
    }
}

#[inline]
fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

impl ReferenceBrick {
    pub fn new(extents: [f64; 3]) -> Result<Self> {
        if extents.iter().all(|&h| h > 0.0 && h.is_finite()) {
            Ok(Self { extents })
        } else {
            Err(Error::NonPositiveExtent(extents))
        }
    }

    pub fn cube(h: f64) -> Result<Self> {
        Self::new([h; 3])
    }

    pub fn extents(&self) -> [f64; 3] {
        self.extents
    }

    pub fn volume(&self) -> f64 {
        self.extents.iter().product()
    }

    fn check_point(&self, p: [f64; 3]) -> Result<()> {
        let inside = p
            .iter()
            .zip(&self.extents)
            .all(|(&x, &h)| x >= -1e-12 * h && x <= h * (1.0 + 1e-12));
        if inside {
            Ok(())
        } else {
            Err(Error::PointOutsideBrick {
                point: p,
                extents: self.extents,
            })
        }
    }

    pub fn edge_geometry(&self, local_edge: usize) -> EdgeGeometry {
        let dir = local_edge / 4;
        let [t1, t2] = transverse_axes(dir);
        let mut start = [0.0; 3];
        start[t1] = ((local_edge % 4) / 2) as f64 * self.extents[t1];
        start[t2] = (local_edge % 2) as f64 * self.extents[t2];
        EdgeGeometry {
            start,
            dir,
            length: self.extents[dir],
        }
    }

    /// Value of basis function `local_edge` at a point of the closed brick.
    pub fn shape_eval(&self, local_edge: usize, p: [f64; 3]) -> Result<[f64; 3]> {
        self.check_point(p)?;
        Ok(self.shape_unchecked(local_edge, p))
    }

    pub(crate) fn shape_unchecked(&self, local_edge: usize, p: [f64; 3]) -> [f64; 3] {
        let dir = local_edge / 4;
        let [t1, t2] = transverse_axes(dir);
        let (a, b) = ((local_edge % 4) / 2, local_edge % 2);
        let mut v = [0.0; 3];
        v[dir] = lagrange1(a, p[t1] / self.extents[t1]) * lagrange1(b, p[t2] / self.extents[t2]);
        v
    }

    /// Curl of basis function `local_edge`; `curl(f e_d) = ∇f × e_d`.
    pub(crate) fn shape_curl_unchecked(&self, local_edge: usize, p: [f64; 3]) -> [f64; 3] {
        let dir = local_edge / 4;
        let [t1, t2] = transverse_axes(dir);
        let (a, b) = ((local_edge % 4) / 2, local_edge % 2);
        let s1 = p[t1] / self.extents[t1];
        let s2 = p[t2] / self.extents[t2];
        let mut grad = [0.0; 3];
        grad[t1] = lagrange1_slope(a) / self.extents[t1] * lagrange1(b, s2);
        grad[t2] = lagrange1(a, s1) * lagrange1_slope(b) / self.extents[t2];
        let mut unit = [0.0; 3];
        unit[dir] = 1.0;
        cross(grad, unit)
    }

    /// Field `Σ c_e φ_e` at `p`.
    pub fn field_eval(&self, coefficients: &[f64; 12], p: [f64; 3]) -> Result<[f64; 3]> {
        self.check_point(p)?;
        Ok(self.field_unchecked(coefficients, p))
    }

    pub(crate) fn field_unchecked(&self, coefficients: &[f64; 12], p: [f64; 3]) -> [f64; 3] {
        let mut v = [0.0; 3];
        for (e, &c) in coefficients.iter().enumerate() {
            v[e / 4] += c * self.shape_unchecked(e, p)[e / 4];
        }
        v
    }

    /// Curl of `Σ c_e φ_e` at `p`.
    pub fn local_curl_eval(&self, coefficients: &[f64; 12], p: [f64; 3]) -> Result<[f64; 3]> {
        self.check_point(p)?;
        let mut v = [0.0; 3];
        for (e, &c) in coefficients.iter().enumerate() {
            let w = self.shape_curl_unchecked(e, p);
            for i in 0..3 {
                v[i] += c * w[i];
            }
        }
        Ok(v)
    }

    fn integrate(&self, points: usize, integrand: impl Fn(usize, usize, [f64; 3]) -> f64) -> LocalMatrix {
        let rule = GaussRule::new(points);
        let vol = self.volume();
        let mut m = [[0.0; 12]; 12];
        for (xi, w) in rule.tensor3() {
            let p = [0, 1, 2].map(|a| xi[a] * self.extents[a]);
            for i in 0..12 {
                for j in i..12 {
                    m[i][j] += w * vol * integrand(i, j, p);
                }
            }
        }
        for i in 0..12 {
            for j in 0..i {
                m[i][j] = m[j][i];
            }
        }
        m
    }

    /// Mass matrix with a tensor Gauss rule of `points` per axis.
    pub fn mass_matrix_with(&self, points: usize) -> LocalMatrix {
        self.integrate(points, |i, j, p| {
            let (u, v) = (self.shape_unchecked(i, p), self.shape_unchecked(j, p));
            u[0] * v[0] + u[1] * v[1] + u[2] * v[2]
        })
    }

    /// Curl-curl matrix with a tensor Gauss rule of `points` per axis.
    pub fn curlcurl_matrix_with(&self, points: usize) -> LocalMatrix {
        self.integrate(points, |i, j, p| {
            let (u, v) = (self.shape_curl_unchecked(i, p), self.shape_curl_unchecked(j, p));
            u[0] * v[0] + u[1] * v[1] + u[2] * v[2]
        })
    }
}

pub fn local_mass_matrix(extents: [f64; 3]) -> Result<LocalMatrix> {
    Ok(ReferenceBrick::new(extents)?.mass_matrix_with(ELEMENT_QUADRATURE_POINTS))
}

/// Curl-curl matrix without the coefficient α, which is applied at assembly.
pub fn local_curlcurl_matrix(extents: [f64; 3]) -> Result<LocalMatrix> {
    Ok(ReferenceBrick::new(extents)?.curlcurl_matrix_with(ELEMENT_QUADRATURE_POINTS))
}

/// Element mass and curl-curl matrices for one brick size.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalElementMatrices {
    pub brick: ReferenceBrick,
    pub mass: LocalMatrix,
    pub curl: LocalMatrix,
}

impl LocalElementMatrices {
    pub fn new(extents: [f64; 3]) -> Result<Self> {
        let brick = ReferenceBrick::new(extents)?;
        Ok(Self {
            brick,
            mass: brick.mass_matrix_with(ELEMENT_QUADRATURE_POINTS),
            curl: brick.curlcurl_matrix_with(ELEMENT_QUADRATURE_POINTS),
        })
    }
}
