//! Small symmetric matrices of dimension 1 to 3.
//!
//! Operators accumulate moment matrices in a fixed 3x3 buffer; only the
//! leading `n x n` block is meaningful.

use nalgebra::{DMatrix, Matrix3, SymmetricEigen};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sym {
    pub n: usize,
    pub m: [[f64; 3]; 3],
}

impl Sym {
    pub fn zeros(n: usize) -> Self {
        Sym { n, m: [[0.0; 3]; 3] }
    }

    pub fn identity(n: usize) -> Self {
        let mut s = Sym::zeros(n);
        for i in 0..n {
            s.m[i][i] = 1.0;
        }
        s
    }

    /// Outer product `t t^T` of the first `n` coordinates of `t`.
    pub fn outer(n: usize, t: &[f64; 3]) -> Self {
        let mut s = Sym::zeros(n);
        for i in 0..n {
            for j in 0..n {
                s.m[i][j] = t[i] * t[j];
            }
        }
        s
    }

    pub fn from_dmatrix(a: &DMatrix<f64>) -> Self {
        let n = a.nrows();
        let mut s = Sym::zeros(n);
        for i in 0..n {
            for j in 0..n {
                s.m[i][j] = a[(i, j)];
            }
        }
        s
    }

    pub fn to_dmatrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| self.m[i][j])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.m[i][j]
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.m[i][i]).sum()
    }

    pub fn scale(&self, c: f64) -> Self {
        let mut s = *self;
        for row in s.m.iter_mut() {
            for e in row.iter_mut() {
                *e *= c;
            }
        }
        s
    }

    pub fn add(&self, o: &Sym) -> Self {
        let mut s = *self;
        for i in 0..3 {
            for j in 0..3 {
                s.m[i][j] += o.m[i][j];
            }
        }
        s
    }

    pub fn sub(&self, o: &Sym) -> Self {
        self.add(&o.scale(-1.0))
    }

    pub fn add_scaled_identity(&self, c: f64) -> Self {
        let mut s = *self;
        for i in 0..self.n {
            s.m[i][i] += c;
        }
        s
    }

    /// `s += c * t t^T`, the hot-loop accumulation.
    #[inline]
    pub fn add_outer(&mut self, c: f64, t: &[f64; 3]) {
        for i in 0..self.n {
            for j in 0..self.n {
                self.m[i][j] += c * t[i] * t[j];
            }
        }
    }

    /// Frobenius inner product `Tr(A B)`.
    pub fn dot(&self, o: &Sym) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.n {
            for j in 0..self.n {
                acc += self.m[i][j] * o.m[i][j];
            }
        }
        acc
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn quad(&self, t: &[f64; 3]) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.n {
            for j in 0..self.n {
                acc += t[i] * self.m[i][j] * t[j];
            }
        }
        acc
    }

    pub fn det(&self) -> f64 {
        let m = &self.m;
        match self.n {
            1 => m[0][0],
            2 => m[0][0] * m[1][1] - m[0][1] * m[1][0],
            _ => {
                m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
                    - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
                    + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
            }
        }
    }

    /// Eigenvalues in ascending order (first `n` entries valid).
    pub fn eigenvalues(&self) -> Vec<f64> {
        self.eigen().0
    }

    pub fn min_eigenvalue(&self) -> f64 {
        match self.n {
            1 => self.m[0][0],
            2 => {
                let (a, b, c) = (self.m[0][0], self.m[1][1], self.m[0][1]);
                let mean = 0.5 * (a + b);
                let rad = (0.25 * (a - b) * (a - b) + c * c).sqrt();
                mean - rad
            }
            _ => self.eigenvalues()[0],
        }
    }

    /// Ascending eigenvalues with matching unit eigenvectors.
    pub fn eigen(&self) -> (Vec<f64>, Vec<[f64; 3]>) {
        match self.n {
            1 => (vec![self.m[0][0]], vec![[1.0, 0.0, 0.0]]),
            2 => {
                let (a, b, c) = (self.m[0][0], self.m[1][1], self.m[0][1]);
                let mean = 0.5 * (a + b);
                let rad = (0.25 * (a - b) * (a - b) + c * c).sqrt();
                let (l1, l2) = (mean - rad, mean + rad);
                let theta = 0.5 * (2.0 * c).atan2(a - b);
                let v2 = [theta.cos(), theta.sin(), 0.0];
                let v1 = [-theta.sin(), theta.cos(), 0.0];
                (vec![l1, l2], vec![v1, v2])
            }
            _ => {
                let mat = Matrix3::from_fn(|i, j| self.m[i][j]);
                let eig = SymmetricEigen::new(mat);
                let mut idx = [0usize, 1, 2];
                idx.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
                let vals = idx.iter().map(|&i| eig.eigenvalues[i]).collect();
                let vecs = idx
                    .iter()
                    .map(|&i| {
                        let c = eig.eigenvectors.column(i);
                        [c[0], c[1], c[2]]
                    })
                    .collect();
                (vals, vecs)
            }
        }
    }
}

/// Ascending eigenvalues of a symmetric `DMatrix`.
pub fn sym_eigenvalues(a: &DMatrix<f64>) -> Vec<f64> {
    if a.nrows() <= 3 {
        return Sym::from_dmatrix(a).eigenvalues();
    }
    let mut v: Vec<f64> = SymmetricEigen::new(a.clone()).eigenvalues.iter().copied().collect();
    v.sort_by(f64::total_cmp);
    v
}
