//! Dense symmetric positive-definite helpers on row-major `Vec<f64>` storage.

/// Lower-triangular Cholesky factor `L` with `L Lᵀ = A`.
#[derive(Debug, Clone, PartialEq)]
pub struct Cholesky {
    n: usize,
    /// Row-major, upper triangle zero.
    l: Vec<f64>,
}

impl Cholesky {
    /// Factors a symmetric matrix, reading only its lower triangle. Returns
    /// `None` when a pivot is not strictly positive.
    pub fn factor(a: &[f64], n: usize) -> Option<Cholesky> {
        assert_eq!(a.len(), n * n, "matrix is not {n}x{n}");
        let mut l = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let (row_i, row_j) = (&l[i * n..i * n + j], &l[j * n..j * n + j]);
                let dot: f64 = row_i.iter().zip(row_j).map(|(x, y)| x * y).sum();
                let v = a[i * n + j] - dot;
                if i == j {
                    if v.is_nan() || v <= 0.0 || !v.is_finite() {
                        return None;
                    }
                    l[i * n + i] = v.sqrt();
                } else {
                    l[i * n + j] = v / l[j * n + j];
                }
            }
        }
        Some(Cholesky { n, l })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.l[i * self.n + j]
    }

    /// Row-major copy of `L`.
    pub fn lower(&self) -> &[f64] {
        &self.l
    }

    /// Solves `L x = b`.
    pub fn solve_lower(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x = b.to_vec();
        for i in 0..n {
            let row = &self.l[i * n..i * n + i];
            let dot: f64 = row.iter().zip(&x[..i]).map(|(l, x)| l * x).sum();
            x[i] = (x[i] - dot) / self.l[i * n + i];
        }
        x
    }

    /// Solves `Lᵀ x = b`.
    pub fn solve_upper(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x = b.to_vec();
        for i in (0..n).rev() {
            x[i] /= self.l[i * n + i];
            let xi = x[i];
            for (k, xk) in x[..i].iter_mut().enumerate() {
                *xk -= self.l[i * n + k] * xi;
            }
        }
        x
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        self.solve_upper(&self.solve_lower(b))
    }

    /// `log det A`.
    pub fn log_det(&self) -> f64 {
        (0..self.n).map(|i| self.l[i * self.n + i].ln()).sum::<f64>() * 2.0
    }

    /// Full `A⁻¹`, row-major.
    pub fn inverse(&self) -> Vec<f64> {
        let n = self.n;
        // row j of `xt` holds column j of L⁻¹, which is zero before index j
        let mut xt = vec![0.0; n * n];
        for j in 0..n {
            let col = &mut xt[j * n..(j + 1) * n];
            col[j] = 1.0 / self.l[j * n + j];
            for i in j + 1..n {
                let row = &self.l[i * n + j..i * n + i];
                let dot: f64 = row.iter().zip(&col[j..i]).map(|(l, x)| l * x).sum();
                col[i] = -dot / self.l[i * n + i];
            }
        }
        // A⁻¹ = L⁻ᵀ L⁻¹: entry (i, j) is the dot of columns i and j of L⁻¹
        let mut inv = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let (ci, cj) = (&xt[i * n + i..(i + 1) * n], &xt[j * n + i..(j + 1) * n]);
                let s: f64 = ci.iter().zip(cj).map(|(a, b)| a * b).sum();
                inv[i * n + j] = s;
                inv[j * n + i] = s;
            }
        }
        inv
    }

    /// `L Lᵀ`, row-major.
    pub fn reconstruct(&self) -> Vec<f64> {
        let n = self.n;
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let s: f64 = (0..=j).map(|k| self.l[i * n + k] * self.l[j * n + k]).sum();
                a[i * n + j] = s;
                a[j * n + i] = s;
            }
        }
        a
    }
}
