//! Small dense SPD factorizations for the local smoother blocks and the
//! coarsest-level solve.

use crate::error::{Error, Result};

/// Row-major dense square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    n: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                m.data[i * n + j] = f(i, j);
            }
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate().take(self.n) {
            let row = &self.data[i * self.n..(i + 1) * self.n];
            *yi = row.iter().zip(x).map(|(a, b)| a * b).sum();
        }
    }

    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        let mut y = vec![0.0; self.n];
        self.matvec(x, &mut y);
        y.iter().zip(x).map(|(a, b)| a * b).sum()
    }

    /// Replaces the matrix by `(A + Aᵀ) / 2`.
    pub fn symmetrize(&mut self) {
        let n = self.n;
        for i in 0..n {
            for j in i + 1..n {
                let v = 0.5 * (self.data[i * n + j] + self.data[j * n + i]);
                self.data[i * n + j] = v;
                self.data[j * n + i] = v;
            }
        }
    }
}

/// Lower-triangular Cholesky factor `A = L Lᵀ`, rows packed contiguously
/// (row `i` holds `L[i][0..=i]`).
#[derive(Debug, Clone, PartialEq)]
pub struct Cholesky {
    n: usize,
    l: Vec<f64>,
}

fn row_start(i: usize) -> usize {
    i * (i + 1) / 2
}

impl Cholesky {
    pub fn factor(a: &DenseMatrix, context: &str) -> Result<Self> {
        let n = a.dim();
        let mut l = vec![0.0; row_start(n)];
        for i in 0..n {
            let ri = row_start(i);
            for j in 0..=i {
                let rj = row_start(j);
                let s = a.get(i, j) - dot(&l[ri..ri + j], &l[rj..rj + j]);
                if i == j {
                    if !(s > 0.0) || !s.is_finite() {
                        return Err(Error::NotPositiveDefinite {
                            context: context.to_string(),
                            pivot: j,
                            value: s,
                        });
                    }
                    l[ri + i] = s.sqrt();
                } else {
                    l[ri + j] = s / l[rj + j];
                }
            }
        }
        Ok(Self { n, l })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Overwrites `b` with `A⁻¹ b`.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.n;
        debug_assert_eq!(b.len(), n);
        for i in 0..n {
            let row = &self.l[row_start(i)..row_start(i + 1)];
            b[i] = (b[i] - dot(&row[..i], &b[..i])) / row[i];
        }
        for i in (0..n).rev() {
            let row = &self.l[row_start(i)..row_start(i + 1)];
            b[i] /= row[i];
            let bi = b[i];
            for (x, l) in b[..i].iter_mut().zip(&row[..i]) {
                *x -= l * bi;
            }
        }
    }

    /// Solves for `nrhs` right-hand sides at once; `b` is row-major
    /// `n × nrhs`, one system per column.
    pub fn solve_many_in_place(&self, b: &mut [f64], nrhs: usize) {
        let n = self.n;
        debug_assert_eq!(b.len(), n * nrhs);
        for i in 0..n {
            let row = &self.l[row_start(i)..row_start(i + 1)];
            let (done, rest) = b.split_at_mut(i * nrhs);
            let bi = &mut rest[..nrhs];
            for (k, &l) in row[..i].iter().enumerate() {
                for (x, y) in bi.iter_mut().zip(&done[k * nrhs..(k + 1) * nrhs]) {
                    *x -= l * y;
                }
            }
            let d = 1.0 / row[i];
            bi.iter_mut().for_each(|x| *x *= d);
        }
        for i in (0..n).rev() {
            let row = &self.l[row_start(i)..row_start(i + 1)];
            let (head, rest) = b.split_at_mut(i * nrhs);
            let bi = &mut rest[..nrhs];
            let d = 1.0 / row[i];
            bi.iter_mut().for_each(|x| *x *= d);
            for (k, &l) in row[..i].iter().enumerate() {
                for (x, y) in head[k * nrhs..(k + 1) * nrhs].iter_mut().zip(bi.iter()) {
                    *x -= l * y;
                }
            }
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

/// Dot product with four independent partial sums.
pub(crate) fn dot(x: &[f64], y: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), y.len());
    let mut acc = [0.0; 4];
    let (xc, xr) = x.split_at(x.len() - x.len() % 4);
    let (yc, yr) = y.split_at(xc.len());
    for (a, b) in xc.chunks_exact(4).zip(yc.chunks_exact(4)) {
        for k in 0..4 {
            acc[k] += a[k] * b[k];
        }
    }
    let tail: f64 = xr.iter().zip(yr).map(|(a, b)| a * b).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}
