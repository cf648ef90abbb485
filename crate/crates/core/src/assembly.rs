//! Global operators `A_k = α K + M` over the interior edge dofs of one level.

use std::io::{self, Write};

use crate::element::{LocalElementMatrices, ReferenceBrick};
use crate::error::{Error, Result};
use crate::mesh::{GridHierarchy, GridLevel};
use crate::quadrature::GaussRule;
use crate::sparse::{check_len, dot, CsrMatrix};
use crate::Parallelism;

/// Default Gauss points per axis for load vectors and L² errors.
pub const DEFAULT_LOAD_QUADRATURE: usize = 4;

/// The discrete operator of one level.
///
/// `matrix = alpha * curl + mass`; all three share one sparsity pattern.
/// Boundary edges are eliminated, so rows and columns run over interior dofs
/// only.
#[derive(Debug, Clone)]
pub struct SystemOperator {
    pub level: usize,
    pub alpha: f64,
    pub matrix: CsrMatrix,
    pub curl: CsrMatrix,
    pub mass: CsrMatrix,
    pub parallelism: Parallelism,
}

/// Right-hand side `(f, φ_e)` over the interior dofs of a level.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadVector {
    pub level: usize,
    pub values: Vec<f64>,
}

pub fn assemble_operator(hier: &GridHierarchy, level: usize, alpha: f64) -> Result<SystemOperator> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::NonPositiveCoefficient(alpha));
    }
    let grid = hier.level(level)?;
    let (curl, mass) = assemble_parts(grid)?;
    Ok(SystemOperator {
        level,
        alpha,
        matrix: curl.zip_with(&mass, |k, m| alpha * k + m),
        curl,
        mass,
        parallelism: Parallelism::Deterministic,
    })
}

/// Curl-curl and mass matrices, accumulated cell by cell in lexicographic
/// cell order.
fn assemble_parts(grid: &GridLevel) -> Result<(CsrMatrix, CsrMatrix)> {
    let local = LocalElementMatrices::new([grid.mesh_size(); 3])?;
    let n = grid.num_dofs();
    let mut kt = Vec::with_capacity(grid.num_cells() * 144);
    let mut mt = Vec::with_capacity(grid.num_cells() * 144);
    for cell in grid.cells() {
        let dofs = grid.cell_dofs(cell);
        for (i, di) in dofs.iter().enumerate() {
            let Some(di) = di else { continue };
            for (j, dj) in dofs.iter().enumerate() {
                let Some(dj) = dj else { continue };
                kt.push((*di as u32, *dj as u32, local.curl[i][j]));
                mt.push((*di as u32, *dj as u32, local.mass[i][j]));
            }
        }
    }
    Ok((
        CsrMatrix::from_triplets(n, n, kt),
        CsrMatrix::from_triplets(n, n, mt),
    ))
}

pub fn assemble_load(
    hier: &GridHierarchy,
    level: usize,
    f: impl Fn([f64; 3]) -> [f64; 3],
    quadrature: usize,
) -> Result<LoadVector> {
    if quadrature < 2 {
        return Err(Error::QuadratureOrder(quadrature));
    }
    let grid = hier.level(level)?;
    let local = LocalElementMatrices::new([grid.mesh_size(); 3])?;
    let rule = GaussRule::new(quadrature);
    let h = grid.mesh_size();
    let vol = h * h * h;
    let mut values = vec![0.0; grid.num_dofs()];
    for cell in grid.cells() {
        let dofs = grid.cell_dofs(cell);
        if dofs.iter().all(Option::is_none) {
            continue;
        }
        let corner = grid.cell_corner(cell);
        let mut acc = [0.0; 12];
        for (xi, w) in rule.tensor3() {
            let p = xi.map(|s| s * h);
            let x = [corner[0] + p[0], corner[1] + p[1], corner[2] + p[2]];
            let fx = f(x);
            for (e, a) in acc.iter_mut().enumerate() {
                let d = e / 4;
                *a += w * vol * fx[d] * local.brick.shape_unchecked(e, p)[d];
            }
        }
        for (d, a) in dofs.iter().zip(acc) {
            if let Some(d) = d {
                values[*d] += a;
            }
        }
    }
    Ok(LoadVector { level, values })
}

impl SystemOperator {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn with_parallelism(mut self, parallelism: Parallelism) -> Self {
        self.parallelism = parallelism;
        self
    }

    /// `A x`.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.matrix.matvec(x, self.parallelism)
    }

    pub fn apply_into(&self, x: &[f64], y: &mut [f64]) -> Result<()> {
        self.matrix.matvec_into(x, y, self.parallelism)
    }

    /// `xᵀ A y`.
    pub fn a_inner(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        check_len(self.dim(), x.len())?;
        Ok(dot(x, &self.apply(y)?))
    }

    /// `xᵀ M y`.
    pub fn l2_inner(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        check_len(self.dim(), x.len())?;
        Ok(dot(x, &self.mass.matvec(y, self.parallelism)?))
    }

    /// `xᵀ K y`, the curl energy without α.
    pub fn curl_inner(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        check_len(self.dim(), x.len())?;
        Ok(dot(x, &self.curl.matvec(y, self.parallelism)?))
    }

    pub fn a_norm(&self, x: &[f64]) -> Result<f64> {
        Ok(self.a_inner(x, x)?.max(0.0).sqrt())
    }

    /// Dumps `A` as a header line plus `row col value` triplets.
    pub fn write_triplets<W: Write>(&self, out: W) -> io::Result<()> {
        self.matrix.write_triplets(out)
    }
}

/// Interpolant: the degree-of-freedom functional of `field` on every interior
/// edge (midpoint rule).
pub fn interpolate(hier: &GridHierarchy, level: usize, field: impl Fn([f64; 3]) -> [f64; 3]) -> Result<Vec<f64>> {
    let grid = hier.level(level)?;
    Ok(grid
        .interior_edges()
        .iter()
        .map(|e| field(grid.edge_midpoint(e))[e.dir])
        .collect())
}

/// Value at `x` of the discrete field with interior coefficients
/// `coefficients`. Points on cell faces are taken from the cell on the lower
/// side, except along the upper boundary.
pub fn evaluate(grid: &GridLevel, coefficients: &[f64], x: [f64; 3]) -> Result<[f64; 3]> {
    check_len(grid.num_dofs(), coefficients.len())?;
    if x.iter().any(|v| !(-1.0..=1.0).contains(v)) {
        return Err(Error::PointOutsideBrick {
            point: x,
            extents: [2.0; 3],
        });
    }
    let h = grid.mesh_size();
    let n = grid.cells_per_axis();
    let cell = x.map(|v| (((v + 1.0) / h).floor() as usize).min(n - 1));
    let dofs = grid.cell_dofs(cell);
    let c: [f64; 12] = std::array::from_fn(|e| dofs[e].map_or(0.0, |d| coefficients[d]));
    let corner = grid.cell_corner(cell);
    let brick = ReferenceBrick::cube(h)?;
    Ok(brick.field_unchecked(&c, [0, 1, 2].map(|a| (x[a] - corner[a]).clamp(0.0, h))))
}

/// `‖u_h - u‖_{L²(Ω)}` with a tensor Gauss rule of `quadrature` points per
/// axis in every cell.
pub fn l2_error(
    hier: &GridHierarchy,
    level: usize,
    coefficients: &[f64],
    exact: impl Fn([f64; 3]) -> [f64; 3],
    quadrature: usize,
) -> Result<f64> {
    if quadrature < 2 {
        return Err(Error::QuadratureOrder(quadrature));
    }
    let grid = hier.level(level)?;
    check_len(grid.num_dofs(), coefficients.len())?;
    let local = LocalElementMatrices::new([grid.mesh_size(); 3])?;
    let rule = GaussRule::new(quadrature);
    let h = grid.mesh_size();
    let vol = h * h * h;
    let mut sum = 0.0;
    for cell in grid.cells() {
        let dofs = grid.cell_dofs(cell);
        let c: [f64; 12] = std::array::from_fn(|e| dofs[e].map_or(0.0, |d| coefficients[d]));
        let corner = grid.cell_corner(cell);
        for (xi, w) in rule.tensor3() {
            let p = xi.map(|s| s * h);
            let uh = local.brick.field_unchecked(&c, p);
            let u = exact([corner[0] + p[0], corner[1] + p[1], corner[2] + p[2]]);
            sum += w * vol * (0..3).map(|i| (uh[i] - u[i]).powi(2)).sum::<f64>();
        }
    }
    Ok(sum.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_hierarchy;

    #[test]
    fn rejects_nonpositive_alpha() {
        let h = build_hierarchy(0).unwrap();
        assert_eq!(
            assemble_operator(&h, 0, 0.0).unwrap_err(),
            Error::NonPositiveCoefficient(0.0)
        );
        assert!(assemble_operator(&h, 0, -1.0).is_err());
    }

    #[test]
    fn dimension_and_row_bound() {
        let h = build_hierarchy(2).unwrap();
        for k in 0..=2 {
            let op = assemble_operator(&h, k, 1.0).unwrap();
            let n = h.level(k).unwrap().cells_per_axis();
            assert_eq!(op.dim(), 3 * n * (n - 1) * (n - 1));
            let widest = (0..op.dim()).map(|i| op.matrix.row(i).0.len()).max().unwrap();
            assert!(widest <= 33);
            if k == 2 {
                assert_eq!(widest, 33);
            }
        }
    }

    #[test]
    fn bitwise_symmetric() {
        let h = build_hierarchy(2).unwrap();
        let op = assemble_operator(&h, 2, 0.37).unwrap();
        for i in 0..op.dim() {
            let (cols, vals) = op.matrix.row(i);
            for (&j, v) in cols.iter().zip(vals) {
                assert_eq!(v.to_bits(), op.matrix.get(j as usize, i).to_bits());
            }
        }
    }

    #[test]
    fn alpha_scaling() {
        let h = build_hierarchy(1).unwrap();
        let a = assemble_operator(&h, 1, 3.0).unwrap();
        let b = assemble_operator(&h, 1, 0.5).unwrap();
        let diff = a.matrix.zip_with(&b.matrix, |x, y| x - y);
        let scaled = a.curl.zip_with(&a.curl, |k, _| 2.5 * k);
        let err = diff.zip_with(&scaled, |x, y| (x - y).abs()).max_abs();
        assert!(err < 1e-14 * a.matrix.max_abs());
    }

    #[test]
    fn small_alpha_limit_is_mass() {
        let h = build_hierarchy(1).unwrap();
        let a = assemble_operator(&h, 1, 1e-300).unwrap();
        let diff = a.matrix.zip_with(&a.mass, |x, y| (x - y).abs()).max_abs();
        assert!(diff < 1e-290);
    }

    #[test]
    fn zero_load_and_quadrature_order() {
        let h = build_hierarchy(1).unwrap();
        let f = assemble_load(&h, 1, |_| [0.0; 3], 4).unwrap();
        assert!(f.values.iter().all(|&v| v == 0.0));
        assert_eq!(
            assemble_load(&h, 1, |_| [0.0; 3], 1).unwrap_err(),
            Error::QuadratureOrder(1)
        );
    }

    #[test]
    fn inner_products_split() {
        let h = build_hierarchy(1).unwrap();
        let op = assemble_operator(&h, 1, 2.5).unwrap();
        let x: Vec<f64> = (0..op.dim()).map(|i| ((i * 7 % 13) as f64 - 6.0) / 5.0).collect();
        let lhs = op.a_inner(&x, &x).unwrap();
        let rhs = 2.5 * op.curl_inner(&x, &x).unwrap() + op.l2_inner(&x, &x).unwrap();
        assert!((lhs - rhs).abs() < 1e-12 * lhs);
        assert!(lhs > 0.0);
        assert!(op.a_inner(&x[1..], &x).is_err());
    }

    #[test]
    fn interpolant_of_discrete_field_has_zero_error() {
        let h = build_hierarchy(1).unwrap();
        let c: Vec<f64> = (0..108).map(|i| (i as f64 * 0.37).sin()).collect();
        let grid = h.level(1).unwrap();
        // reconstruct the discrete field cellwise and compare with itself
        let local = LocalElementMatrices::new([grid.mesh_size(); 3]).unwrap();
        let eval = |x: [f64; 3]| {
            let cell = x.map(|v| (((v + 1.0) / grid.mesh_size()).floor() as usize).min(3));
            let dofs = grid.cell_dofs(cell);
            let cc: [f64; 12] = std::array::from_fn(|e| dofs[e].map_or(0.0, |d| c[d]));
            let corner = grid.cell_corner(cell);
            local
                .brick
                .field_unchecked(&cc, [x[0] - corner[0], x[1] - corner[1], x[2] - corner[2]])
        };
        let back = interpolate(&h, 1, eval).unwrap();
        for (a, b) in back.iter().zip(&c) {
            assert!((a - b).abs() < 1e-14);
        }
        assert!(l2_error(&h, 1, &c, eval, 3).unwrap() < 1e-13);
    }

    #[test]
    fn interpolation_rates() {
        use std::f64::consts::PI;
        let h = build_hierarchy(3).unwrap();
        let rates = |field: &dyn Fn([f64; 3]) -> [f64; 3]| -> Vec<f64> {
            let errs: Vec<f64> = (1..=3)
                .map(|k| l2_error(&h, k, &interpolate(&h, k, field).unwrap(), field, 4).unwrap())
                .collect();
            errs.windows(2).map(|w| w[0] / w[1]).collect()
        };
        // first order in general
        let generic = |x: [f64; 3]| [(PI * x[0]).cos() * (PI * x[1]).sin() * (PI * x[2]).sin(), 0.0, 0.0];
        for r in rates(&generic) {
            assert!((1.8..2.3).contains(&r), "{r}");
        }
        // components independent of their own coordinate lose the O(h) term
        let flat = |x: [f64; 3]| {
            let g = x.map(|t| (PI * t).sin());
            [g[1] * g[2], g[2] * g[0], g[0] * g[1]]
        };
        for r in rates(&flat) {
            assert!(r > 3.5, "{r}");
        }
    }
}
