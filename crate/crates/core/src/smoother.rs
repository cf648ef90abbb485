//! Additive Schwarz smoothers built from nonoverlapping substructures.
//!
//! For a fine level `k` the smoother is
//!
//! ```text
//! M⁻¹ = η ( Σ_T J_T A_T⁻¹ J_Tᵀ + Σ_Θ J_Θ A_Θ⁻¹ J_Θᵀ )
//! ```
//!
//! where `T` runs over the coarse cells and `Θ` over the interior coarse edges
//! (edge smoother) or interior coarse vertices (vertex smoother). The
//! interior space of `T` holds the six fine dofs strictly inside `T`.
//!
//! The entity space of `Θ` is parametrised by its skeleton values `s` (fine
//! dofs on the coarse faces and edges around `Θ`); its interior values are
//! the discrete-harmonic extension `X s` with `X = −A_II⁻¹ A_IS`, which makes
//! it a-orthogonal to every adjacent interior space. In these coordinates
//! `J_Θ = [X; I]` and `A_Θ` is the Schur complement
//! `S = A_SS − A_SI A_II⁻¹ A_IS`, so one entity contributes
//! `[X; I] S⁻¹ (r_S + Xᵀ r_I)`.

use std::collections::hash_map::DefaultHasher;
use std::collections::HashMap;
use std::hash::Hasher;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::assembly::SystemOperator;
use crate::dense::{Cholesky, DenseMatrix};
use crate::error::{Error, Result};
use crate::mesh::{CoarseEntity, CoarseEntityStencil, Edge, GridHierarchy};
use crate::sparse::{check_len, dot, CsrMatrix};
use crate::Parallelism;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SmootherKind {
    Edge,
    Vertex,
}

impl SmootherKind {
    /// Largest damping factor for which `ρ(M⁻¹A) ≤ 1` is guaranteed.
    pub fn damping_bound(self) -> f64 {
        match self {
            SmootherKind::Edge => 1.0 / 12.0,
            SmootherKind::Vertex => 1.0 / 8.0,
        }
    }

    /// Damping used for the published contraction tables.
    pub fn default_damping(self) -> f64 {
        match self {
            SmootherKind::Edge => 1.0 / 13.0,
            SmootherKind::Vertex => 1.0 / 9.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SmootherKind::Edge => "edge",
            SmootherKind::Vertex => "vertex",
        }
    }
}

impl std::fmt::Display for SmootherKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for SmootherKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "edge" => Ok(SmootherKind::Edge),
            "vertex" => Ok(SmootherKind::Vertex),
            other => Err(Error::Config(format!("unknown smoother kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmootherConfig {
    pub kind: SmootherKind,
    pub eta: f64,
    /// Accept `eta` above [`SmootherKind::damping_bound`].
    pub unsafe_damping: bool,
}

impl SmootherConfig {
    pub fn new(kind: SmootherKind) -> Self {
        Self {
            kind,
            eta: kind.default_damping(),
            unsafe_damping: false,
        }
    }

    pub fn with_eta(mut self, eta: f64) -> Self {
        self.eta = eta;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0) || !self.eta.is_finite() {
            return Err(Error::Config(format!("damping factor must be positive, got {}", self.eta)));
        }
        let bound = self.kind.damping_bound();
        if self.eta > bound && !self.unsafe_damping {
            return Err(Error::DampingOutOfBounds {
                kind: self.kind.name(),
                eta: self.eta,
                bound,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct InteriorBlock {
    dofs: [usize; 6],
    factor: Cholesky,
}

/// Factorized Schur system of one local stencil matrix.
#[derive(Debug)]
struct LocalSolver {
    /// `X = −A_II⁻¹ A_IS`, row-major `|I| × |S|`.
    extension: Vec<f64>,
    schur: DenseMatrix,
    schur_factor: Cholesky,
}

/// Local stencil matrix blocks in the order `(A_II, A_IS, A_SS)`.
struct LocalMatrix {
    a_ii: DenseMatrix,
    a_is: Vec<f64>,
    a_ss: DenseMatrix,
}

impl LocalMatrix {
    fn gather(a: &CsrMatrix, stencil: &CoarseEntityStencil) -> Self {
        Self {
            a_ii: gather(a, &stencil.interior, &stencil.interior),
            a_is: gather_rect(a, &stencil.interior, &stencil.skeleton),
            a_ss: gather(a, &stencil.skeleton, &stencil.skeleton),
        }
    }

    fn bits(&self) -> impl Iterator<Item = u64> + '_ {
        self.a_ii
            .as_slice()
            .iter()
            .chain(&self.a_is)
            .chain(self.a_ss.as_slice())
            .map(|v| v.to_bits())
    }

    fn same_as(&self, other: &LocalMatrix) -> bool {
        self.a_is.len() == other.a_is.len() && self.a_ii.dim() == other.a_ii.dim() && self.bits().eq(other.bits())
    }

    fn fingerprint(&self) -> u64 {
        let mut h = DefaultHasher::new();
        for b in self.bits() {
            h.write_u64(b);
        }
        h.finish()
    }
}

impl LocalSolver {
    fn build(local: &LocalMatrix, context: &str) -> Result<Self> {
        let (ni, ns) = (local.a_ii.dim(), local.a_ss.dim());
        let a_is = &local.a_is;
        let ii = Cholesky::factor(&local.a_ii, context)?;

        let mut extension = vec![0.0; ni * ns];
        let mut col = vec![0.0; ni];
        for j in 0..ns {
            for i in 0..ni {
                col[i] = -a_is[i * ns + j];
            }
            ii.solve_in_place(&mut col);
            for i in 0..ni {
                extension[i * ns + j] = col[i];
            }
        }
        // S = A_SS + A_SI X
        let mut schur = DenseMatrix::from_fn(ns, |p, q| {
            let mut v = local.a_ss.get(p, q);
            for i in 0..ni {
                v += a_is[i * ns + p] * extension[i * ns + q];
            }
            v
        });
        schur.symmetrize();
        let schur_factor = Cholesky::factor(&schur, context)?;
        Ok(Self {
            extension,
            schur,
            schur_factor,
        })
    }
}

/// Local solver for one coarse edge or vertex. Stencils with bitwise equal
/// local matrices share one factorization.
#[derive(Debug, Clone)]
pub struct EntityBlock {
    pub entity: CoarseEntity,
    pub interior: Vec<usize>,
    pub skeleton: Vec<usize>,
    solver: Arc<LocalSolver>,
}

impl EntityBlock {
    pub fn schur_complement(&self) -> &DenseMatrix {
        &self.solver.schur
    }

    /// `X s`.
    pub fn extend(&self, s: &[f64]) -> Vec<f64> {
        let ns = self.skeleton.len();
        self.solver.extension
            .chunks_exact(ns)
            .map(|row| dot(row, s))
            .collect()
    }

    pub fn local_len(&self) -> usize {
        self.interior.len() + self.skeleton.len()
    }

    /// Writes `(S⁻¹ t, X S⁻¹ t)` with `t = r_S + Xᵀ r_I` into `out`, the
    /// contribution of this entity to `M⁻¹ r / η`.
    pub fn local_correction(&self, r: &[f64], out: &mut [f64]) {
        let ns = self.skeleton.len();
        let (s, interior) = out.split_at_mut(ns);
        for (t, &d) in s.iter_mut().zip(&self.skeleton) {
            *t = r[d];
        }
        for (row, &d) in self.solver.extension.chunks_exact(ns).zip(&self.interior) {
            let ri = r[d];
            if ri != 0.0 {
                for (t, x) in s.iter_mut().zip(row) {
                    *t += x * ri;
                }
            }
        }
        self.solver.schur_factor.solve_in_place(s);
        for (v, row) in interior.iter_mut().zip(self.solver.extension.chunks_exact(ns)) {
            *v = dot(row, s);
        }
    }
}

fn gather(a: &CsrMatrix, rows: &[usize], cols: &[usize]) -> DenseMatrix {
    debug_assert_eq!(rows.len(), cols.len());
    DenseMatrix::from_fn(rows.len(), |i, j| a.get(rows[i], cols[j]))
}

fn gather_rect(a: &CsrMatrix, rows: &[usize], cols: &[usize]) -> Vec<f64> {
    rows.iter()
        .flat_map(|&r| cols.iter().map(move |&c| a.get(r, c)))
        .collect()
}

/// Factorized local solvers of one smoother.
#[derive(Debug, Clone)]
pub struct SmootherBlocks {
    pub kind: SmootherKind,
    pub eta: f64,
    pub fine_level: usize,
    dim: usize,
    interiors: Vec<InteriorBlock>,
    entities: Vec<EntityBlock>,
    /// Runs of consecutive entities sharing one solver.
    batches: Vec<Batch>,
    /// `A` restricted to skeleton rows and interior columns.
    skeleton_from_interior: CsrMatrix,
    /// `A` restricted to interior rows and skeleton columns.
    interior_from_skeleton: CsrMatrix,
    pub parallelism: Parallelism,
}

pub fn build_blocks(
    hier: &GridHierarchy,
    op: &SystemOperator,
    fine_level: usize,
    config: SmootherConfig,
) -> Result<SmootherBlocks> {
    config.validate()?;
    if fine_level == 0 {
        return Err(Error::CoarsestLevel(0));
    }
    check_len(hier.level(fine_level)?.num_dofs(), op.dim())?;
    let stencils = hier.stencils(fine_level)?;
    let a = &op.matrix;

    let build_interior = |s: &CoarseEntityStencil| -> Result<InteriorBlock> {
        let dofs: [usize; 6] = s.interior.as_slice().try_into().expect("six interior dofs");
        let factor = Cholesky::factor(&gather(a, &dofs, &dofs), &format!("{:?}", s.entity))?;
        Ok(InteriorBlock { dofs, factor })
    };
    let entity_stencils = match config.kind {
        SmootherKind::Edge => &stencils.edges,
        SmootherKind::Vertex => &stencils.vertices,
    };
    let interiors = match op.parallelism {
        Parallelism::Deterministic => stencils.cells.iter().map(build_interior).collect::<Result<Vec<_>>>()?,
        Parallelism::Parallel => stencils.cells.par_iter().map(build_interior).collect::<Result<Vec<_>>>()?,
    };

    // distinct local matrices, first occurrence order
    let mut distinct: Vec<LocalMatrix> = Vec::new();
    let mut by_fingerprint: HashMap<u64, Vec<usize>> = HashMap::new();
    let mut class_of = Vec::with_capacity(entity_stencils.len());
    for stencil in entity_stencils {
        let local = LocalMatrix::gather(a, stencil);
        let candidates = by_fingerprint.entry(local.fingerprint()).or_default();
        match candidates.iter().find(|&&c| distinct[c].same_as(&local)) {
            Some(&c) => class_of.push(c),
            None => {
                candidates.push(distinct.len());
                class_of.push(distinct.len());
                distinct.push(local);
            }
        }
    }
    let build_solver = |(c, local): (usize, &LocalMatrix)| -> Result<Arc<LocalSolver>> {
        let first = class_of.iter().position(|&x| x == c).expect("class has a member");
        LocalSolver::build(local, &format!("{:?}", entity_stencils[first].entity)).map(Arc::new)
    };
    let solvers = match op.parallelism {
        Parallelism::Deterministic => distinct.iter().enumerate().map(build_solver).collect::<Result<Vec<_>>>()?,
        Parallelism::Parallel => distinct.par_iter().enumerate().map(build_solver).collect::<Result<Vec<_>>>()?,
    };
    let entities: Vec<EntityBlock> = entity_stencils
        .iter()
        .zip(&class_of)
        .map(|(stencil, &c)| EntityBlock {
            entity: stencil.entity,
            interior: stencil.interior.clone(),
            skeleton: stencil.skeleton.clone(),
            solver: Arc::clone(&solvers[c]),
        })
        .collect();

    let mut is_interior = vec![false; op.dim()];
    for cell in &stencils.cells {
        for &d in &cell.interior {
            is_interior[d] = true;
        }
    }
    let coupling = |rows_interior: bool| {
        let mut triplets = Vec::new();
        for i in (0..op.dim()).filter(|&i| is_interior[i] == rows_interior) {
            let (cols, vals) = a.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                if is_interior[j as usize] != rows_interior {
                    triplets.push((i as u32, j, v));
                }
            }
        }
        CsrMatrix::from_triplets(op.dim(), op.dim(), triplets)
    };
    let skeleton_from_interior = coupling(false);
    let interior_from_skeleton = coupling(true);
    Ok(SmootherBlocks {
        kind: config.kind,
        eta: config.eta,
        fine_level,
        dim: op.dim(),
        interiors,
        batches: batches(&entities),
        entities,
        skeleton_from_interior,
        interior_from_skeleton,
        parallelism: op.parallelism,
    })
}

#[derive(Debug, Clone, Copy)]
struct Batch {
    start: usize,
    end: usize,
}

const BATCH_WIDTH: usize = 64;

fn batches(entities: &[EntityBlock]) -> Vec<Batch> {
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..=entities.len() {
        let split = i == entities.len()
            || i - start == BATCH_WIDTH
            || !Arc::ptr_eq(&entities[i].solver, &entities[start].solver);
        if split {
            out.push(Batch { start, end: i });
            start = i;
        }
    }
    out
}

/// A field on the dofs of one entity stencil.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalField {
    pub skeleton: Vec<f64>,
    pub interior: Vec<f64>,
}

impl SmootherBlocks {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of distinct factorized entity solvers.
    pub fn num_distinct_solvers(&self) -> usize {
        let mut ptrs: Vec<*const LocalSolver> = self.entities.iter().map(|e| Arc::as_ptr(&e.solver)).collect();
        ptrs.sort();
        ptrs.dedup();
        ptrs.len()
    }

    pub fn num_interior_blocks(&self) -> usize {
        self.interiors.len()
    }

    pub fn entities(&self) -> &[EntityBlock] {
        &self.entities
    }

    /// Dofs of the interior block of coarse cell number `cell` (lexicographic).
    pub fn interior_dofs(&self, cell: usize) -> &[usize; 6] {
        &self.interiors[cell].dofs
    }

    /// `M⁻¹ r`.
    ///
    /// The entity terms are condensed through the cell interiors: with
    /// `y = Σ_T A_T⁻¹ r` the right-hand side `r_S + Xᵀ r_I` equals
    /// `(r − A y)_S`, and the extensions of all entity corrections add up to
    /// `X u` for the summed skeleton field `u`, computed by one more pass over
    /// the interior solvers. Local results are summed in a fixed block order,
    /// so the output does not depend on the mode.
    pub fn apply(&self, r: &[f64]) -> Result<Vec<f64>> {
        check_len(self.dim, r.len())?;
        let mut y = vec![0.0; self.dim];
        self.interior_solve(r, &mut y);

        let ay = self.skeleton_from_interior.matvec(&y, self.parallelism)?;
        let condensed: Vec<f64> = r.iter().zip(&ay).map(|(a, b)| a - b).collect();
        let mut u = vec![0.0; self.dim];
        let solve_batch = |batch: &Batch| -> Vec<f64> {
            let blocks = &self.entities[batch.start..batch.end];
            let nrhs = blocks.len();
            let mut rhs = vec![0.0; blocks[0].skeleton.len() * nrhs];
            for (c, blk) in blocks.iter().enumerate() {
                for (p, &d) in blk.skeleton.iter().enumerate() {
                    rhs[p * nrhs + c] = condensed[d];
                }
            }
            blocks[0].solver.schur_factor.solve_many_in_place(&mut rhs, nrhs);
            rhs
        };
        let solved: Vec<Vec<f64>> = match self.parallelism {
            Parallelism::Deterministic => self.batches.iter().map(solve_batch).collect(),
            Parallelism::Parallel => self.batches.par_iter().map(solve_batch).collect(),
        };
        for (batch, vals) in self.batches.iter().zip(&solved) {
            let nrhs = batch.end - batch.start;
            for (c, blk) in self.entities[batch.start..batch.end].iter().enumerate() {
                for (p, &d) in blk.skeleton.iter().enumerate() {
                    u[d] += vals[p * nrhs + c];
                }
            }
        }

        // X u = −A_II⁻¹ (A u)_I
        let au = self.interior_from_skeleton.matvec(&u, self.parallelism)?;
        let mut xu = vec![0.0; self.dim];
        self.interior_solve(&au, &mut xu);
        Ok((0..self.dim).map(|i| self.eta * (y[i] + u[i] - xu[i])).collect())
    }

    /// `out_I = A_T⁻¹ v_I` on every cell interior; other entries untouched.
    fn interior_solve(&self, v: &[f64], out: &mut [f64]) {
        let mut buf = vec![0.0; 6 * self.interiors.len()];
        let local = |(blk, o): (&InteriorBlock, &mut [f64])| {
            for (x, &d) in o.iter_mut().zip(&blk.dofs) {
                *x = v[d];
            }
            blk.factor.solve_in_place(o);
        };
        match self.parallelism {
            Parallelism::Deterministic => self.interiors.iter().zip(buf.chunks_exact_mut(6)).for_each(local),
            Parallelism::Parallel => self
                .interiors
                .par_iter()
                .zip(buf.par_chunks_exact_mut(6))
                .for_each(local),
        }
        for (blk, vals) in self.interiors.iter().zip(buf.chunks_exact(6)) {
            for (&d, x) in blk.dofs.iter().zip(vals) {
                out[d] = *x;
            }
        }
    }

    /// The entity-space field with skeleton values `s`: `(s, X s)`.
    pub fn harmonic_extension(&self, entity: usize, s: &[f64]) -> Result<LocalField> {
        let blk = self
            .entities
            .get(entity)
            .ok_or_else(|| Error::InvalidEntity(format!("no entity block {entity}")))?;
        check_len(blk.skeleton.len(), s.len())?;
        Ok(LocalField {
            skeleton: s.to_vec(),
            interior: blk.extend(s),
        })
    }
}

/// Energy matrix of an entity's stencil, dofs ordered skeleton then interior.
pub fn local_energy_matrix(op: &SystemOperator, block: &EntityBlock) -> DenseMatrix {
    let dofs: Vec<usize> = block.skeleton.iter().chain(&block.interior).copied().collect();
    gather(&op.matrix, &dofs, &dofs)
}

/// Power-iteration estimate of `λ_max(M⁻¹A)` in the a-inner product.
pub fn max_eigenvalue_estimate(
    op: &SystemOperator,
    blocks: &SmootherBlocks,
    iterations: usize,
    seed: u64,
) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w: Vec<f64> = (0..op.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let norm = op.a_norm(&w)?;
    w.iter_mut().for_each(|x| *x /= norm);
    let mut lambda = 0.0;
    for _ in 0..iterations {
        let aw = op.apply(&w)?;
        let z = blocks.apply(&aw)?;
        // a(z, w) with a(w, w) = 1
        lambda = dot(&z, &aw);
        let nz = op.a_norm(&z)?;
        w = z.into_iter().map(|x| x / nz).collect();
    }
    Ok(lambda)
}

/// Tangential values `−1/+1` on the six fine edges meeting the midpoint of an
/// interior x-parallel coarse edge, zero on the rest of the skeleton of the
/// four adjacent coarse cells, interior values L²-orthogonal to the interior
/// spaces. Returns `‖curl u‖_{L²}` over the four cells.
pub fn lemma_coarse_check(hier: &GridHierarchy, op: &SystemOperator, coarse_edge: Edge) -> Result<f64> {
    let k = op.level;
    if k == 0 {
        return Err(Error::CoarsestLevel(0));
    }
    let coarse = hier.level(k - 1)?;
    let fine = hier.level(k)?;
    check_len(fine.num_dofs(), op.dim())?;
    if coarse_edge.dir != 0 {
        return Err(Error::InvalidEntity(format!("{coarse_edge:?} is not parallel to x1")));
    }
    if !coarse.is_interior(&coarse_edge) {
        return Err(Error::InvalidEntity(format!("{coarse_edge:?} is not an interior coarse edge")));
    }
    let stencil = hier
        .stencils(k)?
        .edges
        .iter()
        .find(|s| s.entity == CoarseEntity::Edge(coarse_edge))
        .expect("interior coarse edge has a stencil");

    let [px, py, pz] = coarse_edge.pos;
    let (mx, my, mz) = (2 * px + 1, 2 * py, 2 * pz);
    let signed = [
        (Edge { dir: 0, pos: [mx - 1, my, mz] }, -1.0),
        (Edge { dir: 0, pos: [mx, my, mz] }, 1.0),
        (Edge { dir: 1, pos: [mx, my - 1, mz] }, -1.0),
        (Edge { dir: 1, pos: [mx, my, mz] }, 1.0),
        (Edge { dir: 2, pos: [mx, my, mz - 1] }, -1.0),
        (Edge { dir: 2, pos: [mx, my, mz] }, 1.0),
    ];
    let mut s = vec![0.0; stencil.skeleton.len()];
    for (edge, value) in signed {
        let dof = fine.dof(&edge).expect("edges at an interior midpoint are interior");
        let slot = stencil
            .skeleton
            .iter()
            .position(|&d| d == dof)
            .expect("edges at the midpoint lie on the edge skeleton");
        s[slot] = value;
    }

    // u_I = −M_II⁻¹ M_IS s
    let m_ii = gather(&op.mass, &stencil.interior, &stencil.interior);
    let m_is = gather_rect(&op.mass, &stencil.interior, &stencil.skeleton);
    let ns = s.len();
    let mut u_i: Vec<f64> = m_is.chunks_exact(ns).map(|row| -dot(row, &s)).collect();
    Cholesky::factor(&m_ii, "lemma interior mass")?.solve_in_place(&mut u_i);

    let dofs: Vec<usize> = stencil.skeleton.iter().chain(&stencil.interior).copied().collect();
    let u: Vec<f64> = s.iter().chain(&u_i).copied().collect();
    let energy = gather(&op.curl, &dofs, &dofs).quadratic_form(&u);
    Ok(energy.max(0.0).sqrt())
}
