//! Small dense linear-algebra kernels: partially pivoted LU (sign-tracked
//! log-determinant, solves) and Cholesky factorization.
//!
//! Problem sizes here are modest (d ≤ 50 for learner matrices, n ≤ a few
//! thousand for GP Gram matrices), so hand-rolled kernels keep the build free
//! of BLAS backends while staying bit-reproducible across machines.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};

/// LU factorization with partial pivoting, stored packed in `lu`.
pub struct Lu {
    lu: Array2<f64>,
    piv: Vec<usize>,
    sign: f64,
}

pub fn lu_factor(a: &Array2<f64>) -> Result<Lu> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::dims(format!("lu: {}x{} not square", a.nrows(), a.ncols())));
    }
    let mut lu = a.clone();
    let mut piv = vec![0usize; n];
    let mut sign = 1.0;
    for k in 0..n {
        let mut p = k;
        let mut max = lu[[k, k]].abs();
        for i in (k + 1)..n {
            let v = lu[[i, k]].abs();
            if v > max {
                max = v;
                p = i;
            }
        }
        piv[k] = p;
        if max == 0.0 || !max.is_finite() {
            return Err(Error::numeric("lu: singular or non-finite pivot".to_string()));
        }
        if p != k {
            for j in 0..n {
                lu.swap([k, j], [p, j]);
            }
            sign = -sign;
        }
        let pivot = lu[[k, k]];
        for i in (k + 1)..n {
            let m = lu[[i, k]] / pivot;
            lu[[i, k]] = m;
            if m != 0.0 {
                for j in (k + 1)..n {
                    lu[[i, j]] -= m * lu[[k, j]];
                }
            }
        }
    }
    Ok(Lu { lu, piv, sign })
}

impl Lu {
    /// Sign of the determinant (+1/-1) and log of its absolute value.
    pub fn sign_log_det(&self) -> (f64, f64) {
        let n = self.lu.nrows();
        let mut sign = self.sign;
        let mut log = 0.0;
        for i in 0..n {
            let d = self.lu[[i, i]];
            if d < 0.0 {
                sign = -sign;
            }
            log += d.abs().ln();
        }
        (sign, log)
    }

    pub fn solve_vec(&self, b: &Array1<f64>) -> Array1<f64> {
        let n = self.lu.nrows();
        let mut x = b.clone();
        // the factor carries full-row swaps, so apply every pivot first
        for k in 0..n {
            let p = self.piv[k];
            if p != k {
                x.swap(k, p);
            }
        }
        for k in 0..n {
            let xk = x[k];
            if xk != 0.0 {
                for i in (k + 1)..n {
                    x[i] -= self.lu[[i, k]] * xk;
                }
            }
        }
        for k in (0..n).rev() {
            x[k] /= self.lu[[k, k]];
            let xk = x[k];
            if xk != 0.0 {
                for i in 0..k {
                    x[i] -= self.lu[[i, k]] * xk;
                }
            }
        }
        x
    }

    pub fn solve_mat(&self, b: &Array2<f64>) -> Array2<f64> {
        let mut out = Array2::zeros(b.raw_dim());
        for (j, col) in b.columns().into_iter().enumerate() {
            let x = self.solve_vec(&col.to_owned());
            out.column_mut(j).assign(&x);
        }
        out
    }

    pub fn inverse(&self) -> Array2<f64> {
        let n = self.lu.nrows();
        self.solve_mat(&Array2::eye(n))
    }
}

/// In-place lower Cholesky of a symmetric positive-definite matrix.
/// Fails with a numeric error if a pivot is not strictly positive.
pub fn cholesky(a: &Array2<f64>) -> Result<Array2<f64>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::dims(format!(
            "cholesky: {}x{} not square",
            a.nrows(),
            a.ncols()
        )));
    }
    let mut l = a.clone();
    let data = l.as_slice_mut().expect("standard layout");
    for j in 0..n {
        let mut d = data[j * n + j];
        for k in 0..j {
            let v = data[j * n + k];
            d -= v * v;
        }
        if d <= 0.0 || !d.is_finite() {
            return Err(Error::numeric(format!(
                "cholesky: non-positive pivot {d:.3e} at column {j}"
            )));
        }
        let d = d.sqrt();
        data[j * n + j] = d;
        for i in (j + 1)..n {
            let mut s = data[i * n + j];
            // dot of rows i and j up to column j
            for k in 0..j {
                s -= data[i * n + k] * data[j * n + k];
            }
            data[i * n + j] = s / d;
        }
    }
    // zero strict upper triangle
    for i in 0..n {
        for j in (i + 1)..n {
            data[i * n + j] = 0.0;
        }
    }
    Ok(l)
}
