//! Symmetric V-cycle, its error propagation operator, and a PCG driver.

use crate::assembly::{assemble_operator, SystemOperator};
use crate::dense::{Cholesky, DenseMatrix};
use crate::error::{Error, Result};
use crate::mesh::GridHierarchy;
use crate::smoother::{build_blocks, SmootherBlocks, SmootherConfig};
use crate::sparse::{check_len, dot};
use crate::transfer::{build_prolongation, ProlongationOperator};
use crate::Parallelism;

#[derive(Debug, Clone)]
struct Level {
    op: SystemOperator,
    // `None` on level 0
    prolongation: Option<ProlongationOperator>,
    smoother: Option<SmootherBlocks>,
}

/// Operators, transfers and smoothers for levels `0..=L` with a direct solve
/// on level 0.
#[derive(Debug, Clone)]
pub struct MultigridHierarchy {
    grid: GridHierarchy,
    levels: Vec<Level>,
    coarse_factor: Cholesky,
    smoother: SmootherConfig,
    /// Smoothing steps used by [`MultigridHierarchy::pcg_solve`].
    pub smoothing_steps: usize,
    parallelism: Parallelism,
}

impl MultigridHierarchy {
    pub fn build(
        grid: GridHierarchy,
        alpha: f64,
        smoother: SmootherConfig,
        parallelism: Parallelism,
    ) -> Result<Self> {
        smoother.validate()?;
        let mut levels = Vec::with_capacity(grid.finest() + 1);
        for k in 0..=grid.finest() {
            let op = assemble_operator(&grid, k, alpha)?.with_parallelism(parallelism);
            let (prolongation, blocks) = if k == 0 {
                (None, None)
            } else {
                (
                    Some(build_prolongation(&grid, k)?),
                    Some(build_blocks(&grid, &op, k, smoother)?),
                )
            };
            levels.push(Level {
                op,
                prolongation,
                smoother: blocks,
            });
        }
        let a0 = &levels[0].op.matrix;
        let dense = DenseMatrix::from_fn(a0.nrows(), |i, j| a0.get(i, j));
        let coarse_factor = Cholesky::factor(&dense, "level-0 operator")?;

        #[cfg(debug_assertions)]
        for k in 1..levels.len() {
            let defect = crate::transfer::galerkin_defect(
                levels[k].prolongation.as_ref().unwrap(),
                &levels[k].op,
                &levels[k - 1].op,
            )?;
            debug_assert!(defect < 1e-10, "Galerkin identity violated at level {k}: {defect:e}");
        }

        Ok(Self {
            grid,
            levels,
            coarse_factor,
            smoother,
            smoothing_steps: 1,
            parallelism,
        })
    }

    pub fn grid(&self) -> &GridHierarchy {
        &self.grid
    }

    pub fn finest(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn alpha(&self) -> f64 {
        self.levels[0].op.alpha
    }

    pub fn smoother_config(&self) -> SmootherConfig {
        self.smoother
    }

    pub fn parallelism(&self) -> Parallelism {
        self.parallelism
    }

    pub fn operator(&self, k: usize) -> Result<&SystemOperator> {
        self.check_level(k)?;
        Ok(&self.levels[k].op)
    }

    pub fn prolongation(&self, k: usize) -> Result<&ProlongationOperator> {
        self.check_level(k)?;
        self.levels[k].prolongation.as_ref().ok_or(Error::CoarsestLevel(k))
    }

    pub fn smoother(&self, k: usize) -> Result<&SmootherBlocks> {
        self.check_level(k)?;
        self.levels[k].smoother.as_ref().ok_or(Error::CoarsestLevel(k))
    }

    fn check_level(&self, k: usize) -> Result<()> {
        if k <= self.finest() {
            Ok(())
        } else {
            Err(Error::LevelOutOfRange {
                level: k,
                finest: self.finest(),
            })
        }
    }

    /// `MG(k, g, z0, m)`: `m` pre-smoothing steps, coarse correction with
    /// `MG(k−1, Pᵀ(g − A z), 0, m)`, `m` post-smoothing steps. Level 0 is the
    /// exact solve `A₀⁻¹ g` regardless of `z0` and `m`.
    pub fn mg_apply(&self, k: usize, g: &[f64], z0: &[f64], m: usize) -> Result<Vec<f64>> {
        self.check_level(k)?;
        if m == 0 {
            return Err(Error::Config("smoothing steps must be at least 1".into()));
        }
        let level = &self.levels[k];
        check_len(level.op.dim(), g.len())?;
        check_len(level.op.dim(), z0.len())?;
        if k == 0 {
            return Ok(self.coarse_factor.solve(g));
        }
        let smoother = level.smoother.as_ref().expect("smoother on levels >= 1");
        let p = level.prolongation.as_ref().expect("prolongation on levels >= 1");

        let mut z = z0.to_vec();
        let mut residual = vec![0.0; z.len()];
        let smooth = |z: &mut Vec<f64>, residual: &mut Vec<f64>| -> Result<()> {
            level.op.apply_into(z, residual)?;
            for (r, gi) in residual.iter_mut().zip(g) {
                *r = gi - *r;
            }
            for (zi, c) in z.iter_mut().zip(smoother.apply(residual)?) {
                *zi += c;
            }
            Ok(())
        };

        for _ in 0..m {
            smooth(&mut z, &mut residual)?;
        }
        level.op.apply_into(&z, &mut residual)?;
        for (r, gi) in residual.iter_mut().zip(g) {
            *r = gi - *r;
        }
        let coarse_g = p.restrict(&residual)?;
        let coarse_zero = vec![0.0; coarse_g.len()];
        let coarse_z = self.mg_apply(k - 1, &coarse_g, &coarse_zero, m)?;
        for (zi, c) in z.iter_mut().zip(p.prolong(&coarse_z, self.parallelism)?) {
            *zi += c;
        }
        for _ in 0..m {
            smooth(&mut z, &mut residual)?;
        }
        Ok(z)
    }

    /// `E_k w = w − MG(k, A_k w, 0, m)`; zero on level 0.
    pub fn error_propagation_apply(&self, k: usize, w: &[f64], m: usize) -> Result<Vec<f64>> {
        self.check_level(k)?;
        let op = &self.levels[k].op;
        check_len(op.dim(), w.len())?;
        if k == 0 {
            return Ok(vec![0.0; w.len()]);
        }
        let aw = op.apply(w)?;
        let zero = vec![0.0; w.len()];
        let bw = self.mg_apply(k, &aw, &zero, m)?;
        Ok(w.iter().zip(bw).map(|(a, b)| a - b).collect())
    }

    /// Conjugate gradients on the finest level preconditioned by one V-cycle
    /// from a zero initial guess. Stops once `sqrt(rᵀBr / r₀ᵀBr₀) ≤ rel_tol`.
    pub fn pcg_solve(&self, f: &[f64], rel_tol: f64, max_iters: usize) -> Result<PcgOutcome> {
        self.pcg_solve_at(self.finest(), f, rel_tol, max_iters)
    }

    /// [`MultigridHierarchy::pcg_solve`] on level `k`.
    pub fn pcg_solve_at(&self, k: usize, f: &[f64], rel_tol: f64, max_iters: usize) -> Result<PcgOutcome> {
        if !(rel_tol > 0.0) {
            return Err(Error::Config(format!("relative tolerance must be positive, got {rel_tol}")));
        }
        self.check_level(k)?;
        let op = &self.levels[k].op;
        check_len(op.dim(), f.len())?;
        let m = self.smoothing_steps;
        let zero = vec![0.0; f.len()];
        let precondition = |r: &[f64]| self.mg_apply(k, r, &zero, m);

        let mut x = vec![0.0; f.len()];
        let mut r = f.to_vec();
        let mut z = precondition(&r)?;
        let mut rz = dot(&r, &z);
        let rz0 = rz;
        if rz0 <= 0.0 {
            return Ok(PcgOutcome {
                solution: x,
                iterations: 0,
                converged: true,
                ratio: 0.0,
            });
        }
        let mut ratio = 1.0;
        if ratio <= rel_tol {
            return Ok(PcgOutcome {
                solution: x,
                iterations: 0,
                converged: true,
                ratio,
            });
        }
        let mut p = z.clone();
        let mut ap = vec![0.0; f.len()];
        for it in 1..=max_iters {
            op.apply_into(&p, &mut ap)?;
            let step = rz / dot(&p, &ap);
            for i in 0..x.len() {
                x[i] += step * p[i];
                r[i] -= step * ap[i];
            }
            z = precondition(&r)?;
            let rz_new = dot(&r, &z);
            ratio = (rz_new.max(0.0) / rz0).sqrt();
            if ratio <= rel_tol {
                return Ok(PcgOutcome {
                    solution: x,
                    iterations: it,
                    converged: true,
                    ratio,
                });
            }
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..p.len() {
                p[i] = z[i] + beta * p[i];
            }
        }
        Ok(PcgOutcome {
            solution: x,
            iterations: max_iters,
            converged: false,
            ratio,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcgOutcome {
    pub solution: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Final preconditioned residual ratio.
    pub ratio: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_hierarchy;
    use crate::smoother::SmootherKind;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn hierarchy(levels: usize, kind: SmootherKind, alpha: f64) -> MultigridHierarchy {
        MultigridHierarchy::build(
            build_hierarchy(levels).unwrap(),
            alpha,
            SmootherConfig::new(kind),
            Parallelism::Deterministic,
        )
        .unwrap()
    }

    fn random_vec(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    #[test]
    fn exact_solution_is_a_fixed_point() {
        let mg = hierarchy(2, SmootherKind::Edge, 1.0);
        let op = mg.operator(2).unwrap();
        let z = random_vec(op.dim(), 3);
        let g = op.apply(&z).unwrap();
        let out = mg.mg_apply(2, &g, &z, 2).unwrap();
        for (a, b) in out.iter().zip(&z) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_in_zero_out() {
        let mg = hierarchy(2, SmootherKind::Vertex, 1.0);
        let n = mg.operator(2).unwrap().dim();
        let out = mg.mg_apply(2, &vec![0.0; n], &vec![0.0; n], 1).unwrap();
        assert!(out.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn level_zero_is_direct() {
        let mg = hierarchy(0, SmootherKind::Edge, 0.3);
        let op = mg.operator(0).unwrap();
        let g = random_vec(6, 1);
        let z = mg.mg_apply(0, &g, &random_vec(6, 2), 3).unwrap();
        let res: f64 = op
            .apply(&z)
            .unwrap()
            .iter()
            .zip(&g)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        let gn = dot(&g, &g).sqrt();
        assert!(res <= 1e-12 * gn);
    }

    #[test]
    fn argument_errors() {
        let mg = hierarchy(1, SmootherKind::Edge, 1.0);
        assert!(matches!(mg.mg_apply(2, &[], &[], 1), Err(Error::LevelOutOfRange { .. })));
        assert!(mg.mg_apply(1, &[0.0; 6], &[0.0; 6], 1).is_err());
        assert!(mg.mg_apply(1, &[0.0; 108], &[0.0; 108], 0).is_err());
        assert_eq!(mg.error_propagation_apply(0, &[1.0; 6], 1).unwrap(), vec![0.0; 6]);
        assert!(mg.pcg_solve(&[0.0; 108], 0.0, 10).is_err());
    }

    #[test]
    fn error_operator_linear_and_a_symmetric() {
        for kind in [SmootherKind::Edge, SmootherKind::Vertex] {
            let mg = hierarchy(2, kind, 10.0);
            let op = mg.operator(2).unwrap();
            let w1 = random_vec(op.dim(), 11);
            let w2 = random_vec(op.dim(), 12);
            let e1 = mg.error_propagation_apply(2, &w1, 2).unwrap();
            let e2 = mg.error_propagation_apply(2, &w2, 2).unwrap();
            let comb: Vec<f64> = w1.iter().zip(&w2).map(|(a, b)| 2.0 * a - 0.5 * b).collect();
            let ec = mg.error_propagation_apply(2, &comb, 2).unwrap();
            let scale = ec.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            for i in 0..ec.len() {
                assert!((ec[i] - (2.0 * e1[i] - 0.5 * e2[i])).abs() <= 1e-12 * scale);
            }
            let l = op.a_inner(&e1, &w2).unwrap();
            let r = op.a_inner(&w1, &e2).unwrap();
            assert!((l - r).abs() <= 1e-10 * l.abs().max(r.abs()), "{kind}: {l} vs {r}");
            let rq = op.a_inner(&e1, &w1).unwrap() / op.a_inner(&w1, &w1).unwrap();
            assert!((-1e-10..1.0).contains(&rq));
        }
    }

    #[test]
    fn deterministic_repeat() {
        let mg = hierarchy(2, SmootherKind::Vertex, 1.0);
        let g = random_vec(mg.operator(2).unwrap().dim(), 4);
        let z0 = vec![0.0; g.len()];
        let a = mg.mg_apply(2, &g, &z0, 3).unwrap();
        let b = mg.mg_apply(2, &g, &z0, 3).unwrap();
        assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn pcg_recovers_solution() {
        // measured iteration counts at α = 1, m = 1, tolerance 1e-10:
        // edge 17/47/74 and vertex 2/22/23 for k = 1/2/3
        for (kind, bound) in [(SmootherKind::Edge, 80), (SmootherKind::Vertex, 30)] {
            for k in 1..=3 {
                let mg = hierarchy(k, kind, 1.0);
                let op = mg.operator(k).unwrap();
                let u = random_vec(op.dim(), 21);
                let f = op.apply(&u).unwrap();
                let out = mg.pcg_solve(&f, 1e-10, 100).unwrap();
                assert!(out.converged);
                assert!(out.iterations <= bound, "{kind} k={k}: {}", out.iterations);
                let err: Vec<f64> = out.solution.iter().zip(&u).map(|(a, b)| a - b).collect();
                assert!(op.a_norm(&err).unwrap() <= 1e-8 * op.a_norm(&u).unwrap());
            }
        }
    }

    #[test]
    fn pcg_trivial_cases() {
        let mg = hierarchy(1, SmootherKind::Edge, 1.0);
        let zero = mg.pcg_solve(&[0.0; 108], 1e-8, 10).unwrap();
        assert_eq!((zero.iterations, zero.converged), (0, true));
        assert!(zero.solution.iter().all(|&x| x == 0.0));
        let f = random_vec(108, 8);
        let loose = mg.pcg_solve(&f, 1.0, 10).unwrap();
        assert!(loose.iterations <= 1);
        let capped = mg.pcg_solve(&f, 1e-14, 1).unwrap();
        assert!(!capped.converged);
        assert_eq!(capped.iterations, 1);
    }
}
