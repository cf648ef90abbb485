//! Natural injection between consecutive levels and its transpose.

use std::collections::BTreeMap;

use crate::assembly::SystemOperator;
use crate::element::ReferenceBrick;
use crate::error::{Error, Result};
use crate::mesh::{transverse_axes, Edge, GridHierarchy};
use crate::sparse::{check_len, CsrMatrix};
use crate::Parallelism;

/// `P : N_{k-1} → N_k`, stored as a `fine × coarse` CSR matrix.
#[derive(Debug, Clone)]
pub struct ProlongationOperator {
    pub fine_level: usize,
    pub matrix: CsrMatrix,
}

/// Entry `(e, E)` is the tangential component of the coarse basis function
/// `φ_E` at the midpoint of fine edge `e`.
pub fn build_prolongation(hier: &GridHierarchy, fine_level: usize) -> Result<ProlongationOperator> {
    if fine_level == 0 {
        return Err(Error::CoarsestLevel(0));
    }
    let fine = hier.level(fine_level)?;
    let coarse = hier.level(fine_level - 1)?;
    let brick = ReferenceBrick::cube(coarse.mesh_size())?;
    let mut triplets = Vec::new();

    for (col, edge) in coarse.interior_edges().iter().enumerate() {
        let mut column: BTreeMap<usize, f64> = BTreeMap::new();
        let [t1, t2] = transverse_axes(edge.dir);
        for (o1, o2) in [(1, 1), (1, 0), (0, 1), (0, 0)] {
            let mut cell = edge.pos;
            cell[t1] -= o1;
            cell[t2] -= o2;
            let local = edge.dir * 4 + o1 * 2 + o2;
            let corner = coarse.cell_corner(cell);
            for fe in closure_edges(cell) {
                let Some(row) = fine.dof(&fe) else { continue };
                let mid = fine.edge_midpoint(&fe);
                let rel = [0, 1, 2].map(|a| (mid[a] - corner[a]).clamp(0.0, coarse.mesh_size()));
                let w = brick.shape_unchecked(local, rel)[fe.dir];
                if let Some(prev) = column.insert(row, w) {
                    debug_assert!((prev - w).abs() < 1e-14, "tangential jump at fine dof {row}");
                }
            }
        }
        for (row, w) in column {
            if w != 0.0 {
                triplets.push((row as u32, col as u32, w));
            }
        }
    }
    Ok(ProlongationOperator {
        fine_level,
        matrix: CsrMatrix::from_triplets(fine.num_dofs(), coarse.num_dofs(), triplets),
    })
}

/// Fine edges in the closure of a coarse cell.
fn closure_edges(coarse_cell: [usize; 3]) -> impl Iterator<Item = Edge> {
    (0..3).flat_map(move |dir| {
        let [t1, t2] = transverse_axes(dir);
        (0..18).map(move |i| {
            let mut pos = [0; 3];
            pos[dir] = 2 * coarse_cell[dir] + i / 9;
            pos[t1] = 2 * coarse_cell[t1] + (i / 3) % 3;
            pos[t2] = 2 * coarse_cell[t2] + i % 3;
            Edge { dir, pos }
        })
    })
}

impl ProlongationOperator {
    pub fn fine_dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn coarse_dim(&self) -> usize {
        self.matrix.ncols()
    }

    /// `P v`.
    pub fn prolong(&self, coarse: &[f64], par: Parallelism) -> Result<Vec<f64>> {
        self.matrix.matvec(coarse, par)
    }

    /// `Pᵀ r`, the fine-to-coarse map on functionals.
    pub fn restrict(&self, fine: &[f64]) -> Result<Vec<f64>> {
        check_len(self.fine_dim(), fine.len())?;
        self.matrix.transpose_matvec(fine)
    }

    /// `Pᵀ A P`.
    pub fn galerkin_product(&self, fine_op: &SystemOperator) -> Result<CsrMatrix> {
        let ap = fine_op.matrix.matmul(&self.matrix)?;
        self.matrix.transpose().matmul(&ap)
    }
}

/// `max |Pᵀ A_k P − A_{k−1}| / max |A_{k−1}|`.
pub fn galerkin_defect(p: &ProlongationOperator, fine: &SystemOperator, coarse: &SystemOperator) -> Result<f64> {
    let rap = p.galerkin_product(fine)?;
    check_len(coarse.dim(), rap.nrows())?;
    let mut worst: f64 = 0.0;
    for i in 0..coarse.dim() {
        let (cols, vals) = rap.row(i);
        for (&j, &v) in cols.iter().zip(vals) {
            worst = worst.max((v - coarse.matrix.get(i, j as usize)).abs());
        }
        let (cols, vals) = coarse.matrix.row(i);
        for (&j, &v) in cols.iter().zip(vals) {
            worst = worst.max((v - rap.get(i, j as usize)).abs());
        }
    }
    Ok(worst / coarse.matrix.max_abs())
}
