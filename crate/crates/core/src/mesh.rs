//! Nested structured hexahedral grids on `(-1, 1)^3`.
//!
//! Level `ℓ` has `n = 2^(ℓ+1)` cells per axis. Nodes, cells and edges are
//! addressed by integer lattice coordinates. An edge with direction `d` has
//! `pos[d]` equal to the index of the cell layer it spans along `d` and its
//! two transverse coordinates equal to node indices. Every edge is oriented
//! along the positive axis, so degrees of freedom carry no orientation signs.
//!
//! Only edges whose transverse node indices are strictly inside the grid
//! carry a degree of freedom; edges on the boundary are eliminated.

use std::sync::OnceLock;

use crate::error::{Error, Result};

/// The two axes orthogonal to `d`, in increasing order.
#[inline]
pub fn transverse_axes(d: usize) -> [usize; 2] {
    match d {
        0 => [1, 2],
        1 => [0, 2],
        _ => [0, 1],
    }
}

/// A grid edge: direction plus lattice position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Edge {
    pub dir: usize,
    pub pos: [usize; 3],
}

/// A grid face: normal axis plus lattice position. `pos[normal]` is a node
/// index, the two in-plane coordinates are cell indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Face {
    pub normal: usize,
    pub pos: [usize; 3],
}

/// One level of the hierarchy.
#[derive(Debug, Clone, PartialEq)]
pub struct GridLevel {
    index: usize,
    n: usize,
    h: f64,
}

impl GridLevel {
    fn new(index: usize) -> Self {
        let n = 2usize << index;
        Self {
            index,
            n,
            h: 2.0 / n as f64,
        }
    }

    pub fn level_index(&self) -> usize {
        self.index
    }

    pub fn cells_per_axis(&self) -> usize {
        self.n
    }

    pub fn mesh_size(&self) -> f64 {
        self.h
    }

    pub fn num_cells(&self) -> usize {
        self.n * self.n * self.n
    }

    /// Interior edge count `3 n (n-1)^2`.
    pub fn num_dofs(&self) -> usize {
        3 * self.per_direction()
    }

    fn per_direction(&self) -> usize {
        self.n * (self.n - 1) * (self.n - 1)
    }

    pub fn node_coord(&self, i: usize) -> f64 {
        -1.0 + i as f64 * self.h
    }

    pub fn cell_corner(&self, cell: [usize; 3]) -> [f64; 3] {
        cell.map(|c| self.node_coord(c))
    }

    pub fn is_interior(&self, edge: &Edge) -> bool {
        let n = self.n;
        edge.pos[edge.dir] < n
            && transverse_axes(edge.dir)
                .iter()
                .all(|&t| edge.pos[t] > 0 && edge.pos[t] < n)
    }

    /// Dense index of an interior edge: direction-major, then lexicographic in
    /// `(pos[0], pos[1], pos[2])`. Boundary edges map to `None`.
    pub fn dof(&self, edge: &Edge) -> Option<usize> {
        if !self.is_interior(edge) {
            return None;
        }
        let mut idx = 0;
        for axis in 0..3 {
            let (extent, p) = if axis == edge.dir {
                (self.n, edge.pos[axis])
            } else {
                (self.n - 1, edge.pos[axis] - 1)
            };
            idx = idx * extent + p;
        }
        Some(edge.dir * self.per_direction() + idx)
    }

    /// Inverse of [`GridLevel::dof`].
    pub fn edge_of_dof(&self, dof: usize) -> Edge {
        let per = self.per_direction();
        let dir = dof / per;
        let mut rem = dof % per;
        let mut pos = [0; 3];
        for axis in (0..3).rev() {
            let extent = if axis == dir { self.n } else { self.n - 1 };
            pos[axis] = rem % extent + usize::from(axis != dir);
            rem /= extent;
        }
        Edge { dir, pos }
    }

    /// All interior edges in dof order.
    pub fn interior_edges(&self) -> Vec<Edge> {
        (0..self.num_dofs()).map(|d| self.edge_of_dof(d)).collect()
    }

    pub fn edge_start(&self, edge: &Edge) -> [f64; 3] {
        edge.pos.map(|p| self.node_coord(p))
    }

    pub fn edge_midpoint(&self, edge: &Edge) -> [f64; 3] {
        let mut p = self.edge_start(edge);
        p[edge.dir] += 0.5 * self.h;
        p
    }

    /// The 12 edges of a cell in local order: four x-edges, four y-edges,
    /// four z-edges, each group in lexicographic order of its transverse
    /// corner offsets `(0,0), (0,1), (1,0), (1,1)`.
    pub fn cell_edges(&self, cell: [usize; 3]) -> [Edge; 12] {
        std::array::from_fn(|local| {
            let dir = local / 4;
            let [t1, t2] = transverse_axes(dir);
            let mut pos = cell;
            pos[t1] += (local % 4) / 2;
            pos[t2] += local % 2;
            Edge { dir, pos }
        })
    }

    /// Global dofs of the 12 cell edges; boundary edges are `None`.
    pub fn cell_dofs(&self, cell: [usize; 3]) -> [Option<usize>; 12] {
        self.cell_edges(cell).map(|e| self.dof(&e))
    }

    pub fn cells(&self) -> impl Iterator<Item = [usize; 3]> {
        let n = self.n;
        (0..n * n * n).map(move |c| [c / (n * n), (c / n) % n, c % n])
    }

    /// The 8 children of a cell of the next coarser level, in lexicographic
    /// offset order.
    pub fn children_of(&self, coarse_cell: [usize; 3]) -> [[usize; 3]; 8] {
        std::array::from_fn(|o| {
            [
                2 * coarse_cell[0] + o / 4,
                2 * coarse_cell[1] + (o / 2) % 2,
                2 * coarse_cell[2] + o % 2,
            ]
        })
    }

    /// The 6 fine dofs strictly inside a coarse cell: the edges through its
    /// centre node, two per direction.
    pub fn coarse_cell_interior_dofs(&self, coarse_cell: [usize; 3]) -> [usize; 6] {
        std::array::from_fn(|i| {
            let dir = i / 2;
            let mut pos = coarse_cell.map(|c| 2 * c + 1);
            pos[dir] = 2 * coarse_cell[dir] + i % 2;
            self.dof(&Edge { dir, pos }).expect("cell-interior edge")
        })
    }

    /// The 4 fine dofs strictly inside a coarse face: its two midlines, each
    /// split in two.
    pub fn coarse_face_interior_dofs(&self, face: &Face) -> [usize; 4] {
        let [a, b] = transverse_axes(face.normal);
        std::array::from_fn(|i| {
            let (dir, other) = if i < 2 { (a, b) } else { (b, a) };
            let mut pos = [0; 3];
            pos[face.normal] = 2 * face.pos[face.normal];
            pos[other] = 2 * face.pos[other] + 1;
            pos[dir] = 2 * face.pos[dir] + i % 2;
            self.dof(&Edge { dir, pos }).expect("face-interior edge")
        })
    }

    /// The 2 fine halves of a coarse edge.
    pub fn coarse_edge_sub_dofs(&self, coarse_edge: &Edge) -> [usize; 2] {
        std::array::from_fn(|i| {
            let mut pos = coarse_edge.pos.map(|p| 2 * p);
            pos[coarse_edge.dir] += i;
            self.dof(&Edge {
                dir: coarse_edge.dir,
                pos,
            })
            .expect("sub-edge of interior coarse edge")
        })
    }
}

/// Which coarse substructure a stencil is attached to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoarseEntity {
    Cell([usize; 3]),
    Edge(Edge),
    Vertex([usize; 3]),
}

/// Fine-level dof sets around one coarse entity.
///
/// `interior` holds the dofs strictly inside the adjacent coarse cells (cell
/// order, 6 per cell). `skeleton` holds the dofs on the free faces and edges:
/// face-interior dofs in face order, then the sub-edges of the adjacent
/// coarse edges.
#[derive(Debug, Clone, PartialEq)]
pub struct CoarseEntityStencil {
    pub entity: CoarseEntity,
    pub interior: Vec<usize>,
    pub skeleton: Vec<usize>,
    pub cells: Vec<[usize; 3]>,
    pub faces: Vec<Face>,
    pub edges: Vec<Edge>,
}

/// All stencils between a fine level and its parent.
#[derive(Debug, Clone, PartialEq)]
pub struct EntityStencils {
    pub fine_level: usize,
    pub cells: Vec<CoarseEntityStencil>,
    pub edges: Vec<CoarseEntityStencil>,
    pub vertices: Vec<CoarseEntityStencil>,
}

#[derive(Debug)]
pub struct GridHierarchy {
    levels: Vec<GridLevel>,
    stencils: Vec<OnceLock<EntityStencils>>,
}

impl Clone for GridHierarchy {
    fn clone(&self) -> Self {
        Self::new(self.finest())
    }
}

impl GridHierarchy {
    fn new(finest: usize) -> Self {
        Self {
            levels: (0..=finest).map(GridLevel::new).collect(),
            stencils: (0..=finest).map(|_| OnceLock::new()).collect(),
        }
    }

    pub fn levels(&self) -> &[GridLevel] {
        &self.levels
    }

    pub fn finest(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn level(&self, k: usize) -> Result<&GridLevel> {
        self.levels.get(k).ok_or(Error::LevelOutOfRange {
            level: k,
            finest: self.finest(),
        })
    }

    /// Stencils for the pair `(fine_level - 1, fine_level)`, built on first use.
    pub fn stencils(&self, fine_level: usize) -> Result<&EntityStencils> {
        if fine_level == 0 {
            return Err(Error::CoarsestLevel(0));
        }
        self.level(fine_level)?;
        Ok(self.stencils[fine_level]
            .get_or_init(|| build_stencils(&self.levels[fine_level - 1], &self.levels[fine_level])))
    }
}

/// Builds levels `0..=levels`; level 0 has two cells per axis.
pub fn build_hierarchy(levels: usize) -> Result<GridHierarchy> {
    let too_many = || Error::TooManyDofs {
        levels,
        required: required_dofs(levels),
    };
    let n = 2usize.checked_shl(levels as u32).filter(|_| levels < 62).ok_or_else(too_many)?;
    let count = n
        .checked_sub(1)
        .and_then(|m| m.checked_mul(m))
        .and_then(|m| m.checked_mul(n))
        .and_then(|m| m.checked_mul(3))
        .ok_or_else(too_many)?;
    if count > u32::MAX as usize {
        return Err(too_many());
    }
    Ok(GridHierarchy::new(levels))
}

fn required_dofs(levels: usize) -> u128 {
    if levels >= 40 {
        return u128::MAX;
    }
    let n = 2u128 << levels;
    3 * n * (n - 1) * (n - 1)
}

/// Stencils for all coarse cells, interior coarse edges and interior coarse
/// vertices.
pub fn coarse_entity_stencils(hier: &GridHierarchy, fine_level: usize) -> Result<&EntityStencils> {
    hier.stencils(fine_level)
}

fn build_stencils(coarse: &GridLevel, fine: &GridLevel) -> EntityStencils {
    let nc = coarse.cells_per_axis();

    let cells = coarse
        .cells()
        .map(|c| CoarseEntityStencil {
            entity: CoarseEntity::Cell(c),
            interior: fine.coarse_cell_interior_dofs(c).to_vec(),
            skeleton: Vec::new(),
            cells: vec![c],
            faces: Vec::new(),
            edges: Vec::new(),
        })
        .collect();

    let edges = coarse
        .interior_edges()
        .into_iter()
        .map(|e| {
            let [t1, t2] = transverse_axes(e.dir);
            let mut cells = Vec::with_capacity(4);
            for a in 0..2 {
                for b in 0..2 {
                    let mut c = e.pos;
                    c[t1] = e.pos[t1] + a - 1;
                    c[t2] = e.pos[t2] + b - 1;
                    cells.push(c);
                }
            }
            let mut faces = Vec::with_capacity(4);
            for (normal, other) in [(t1, t2), (t2, t1)] {
                for s in 0..2 {
                    let mut pos = e.pos;
                    pos[other] = e.pos[other] + s - 1;
                    faces.push(Face { normal, pos });
                }
            }
            stencil(fine, CoarseEntity::Edge(e), cells, faces, vec![e])
        })
        .collect();

    let mut vertices = Vec::new();
    for i in 1..nc {
        for j in 1..nc {
            for k in 1..nc {
                let v = [i, j, k];
                let cells = (0..8)
                    .map(|o| [i + o / 4 - 1, j + (o / 2) % 2 - 1, k + o % 2 - 1])
                    .collect();
                let mut faces = Vec::with_capacity(12);
                for normal in 0..3 {
                    let [a, b] = transverse_axes(normal);
                    for sa in 0..2 {
                        for sb in 0..2 {
                            let mut pos = v;
                            pos[a] = v[a] + sa - 1;
                            pos[b] = v[b] + sb - 1;
                            faces.push(Face { normal, pos });
                        }
                    }
                }
                let mut edges = Vec::with_capacity(6);
                for dir in 0..3 {
                    for s in 0..2 {
                        let mut pos = v;
                        pos[dir] = v[dir] + s - 1;
                        edges.push(Edge { dir, pos });
                    }
                }
                vertices.push(stencil(fine, CoarseEntity::Vertex(v), cells, faces, edges));
            }
        }
    }

    EntityStencils {
        fine_level: fine.level_index(),
        cells,
        edges,
        vertices,
    }
}

fn stencil(
    fine: &GridLevel,
    entity: CoarseEntity,
    cells: Vec<[usize; 3]>,
    faces: Vec<Face>,
    edges: Vec<Edge>,
) -> CoarseEntityStencil {
    let interior = cells
        .iter()
        .flat_map(|&c| fine.coarse_cell_interior_dofs(c))
        .collect();
    let skeleton = faces
        .iter()
        .flat_map(|f| fine.coarse_face_interior_dofs(f))
        .chain(edges.iter().flat_map(|e| fine.coarse_edge_sub_dofs(e)))
        .collect();
    CoarseEntityStencil {
        entity,
        interior,
        skeleton,
        cells,
        faces,
        edges,
    }
}
