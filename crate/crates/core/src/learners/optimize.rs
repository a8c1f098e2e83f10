//! Inner optimizers for the learner backbones.
//!
//! `ProjectedLbfgs` minimizes a smooth objective over the nonnegative orthant
//! (with optionally frozen coordinates) via limited-memory BFGS directions,
//! active-set restriction, and a projected backtracking line search. The
//! learner objectives are smooth in the split parameterization, so this is
//! all the structure they need.

use crate::error::{Error, Result};

/// Objective with gradient over a flat parameter vector.
pub(crate) trait BoxObjective {
    fn value(&self, x: &[f64]) -> f64;
    /// Returns the value and fills `grad`. Only called at accepted points.
    fn value_grad(&self, x: &[f64], grad: &mut [f64]) -> f64;
}

pub(crate) struct ProjectedLbfgs {
    pub memory: usize,
    pub max_iters: usize,
    pub pg_tol: f64,
    pub f_rel_tol: f64,
}

impl Default for ProjectedLbfgs {
    fn default() -> Self {
        ProjectedLbfgs {
            memory: 10,
            max_iters: 1000,
            pg_tol: 1e-7,
            f_rel_tol: 1e-12,
        }
    }
}

pub(crate) struct SolveOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    /// Line search could not make progress before tolerances were met.
    pub stalled: bool,
}

fn project(x: &mut [f64], frozen: &[bool]) {
    for (xi, &fz) in x.iter_mut().zip(frozen) {
        *xi = if fz { 0.0 } else { xi.max(0.0) };
    }
}

/// Projected gradient: the part of the gradient that can still move the
/// point inside the feasible set (max-norm of this is the optimality gauge).
fn projected_gradient(x: &[f64], g: &[f64], frozen: &[bool], out: &mut [f64]) {
    for i in 0..x.len() {
        out[i] = if frozen[i] {
            0.0
        } else if x[i] <= 0.0 {
            g[i].min(0.0)
        } else {
            g[i]
        };
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, &x| m.max(x.abs()))
}

impl ProjectedLbfgs {
    /// Minimizes `obj` over `{ x >= 0, x[frozen] = 0 }` starting from `x0`.
    pub fn minimize<O: BoxObjective>(
        &self,
        obj: &O,
        x0: &[f64],
        frozen: &[bool],
    ) -> Result<SolveOutcome> {
        let n = x0.len();
        let mut x = x0.to_vec();
        project(&mut x, frozen);

        let mut grad = vec![0.0; n];
        let mut f = obj.value_grad(&x, &mut grad);
        if !f.is_finite() {
            return Err(Error::numeric("objective non-finite at the starting point"));
        }

        let mut s_hist: Vec<Vec<f64>> = Vec::new();
        let mut y_hist: Vec<Vec<f64>> = Vec::new();
        let mut rho_hist: Vec<f64> = Vec::new();
        let mut pg = vec![0.0; n];
        let mut stalled = false;
        let mut iterations = 0;

        for iter in 0..self.max_iters {
            iterations = iter;
            projected_gradient(&x, &grad, frozen, &mut pg);
            if inf_norm(&pg) <= self.pg_tol {
                break;
            }

            // Two-loop recursion on the restricted gradient.
            let mut dir: Vec<f64> = pg.iter().map(|&v| -v).collect();
            let k = s_hist.len();
            if k > 0 {
                let mut alphas = vec![0.0; k];
                for i in (0..k).rev() {
                    let a = rho_hist[i]
                        * s_hist[i].iter().zip(&dir).map(|(s, d)| s * d).sum::<f64>();
                    alphas[i] = a;
                    for (dj, yj) in dir.iter_mut().zip(&y_hist[i]) {
                        *dj -= a * yj;
                    }
                }
                let last = k - 1;
                let sy: f64 = s_hist[last].iter().zip(&y_hist[last]).map(|(s, y)| s * y).sum();
                let yy: f64 = y_hist[last].iter().map(|y| y * y).sum();
                if yy > 0.0 {
                    let gamma = sy / yy;
                    for dj in dir.iter_mut() {
                        *dj *= gamma;
                    }
                }
                for i in 0..k {
                    let b = rho_hist[i]
                        * y_hist[i].iter().zip(&dir).map(|(y, d)| y * d).sum::<f64>();
                    for (dj, sj) in dir.iter_mut().zip(&s_hist[i]) {
                        *dj += (alphas[i] - b) * sj;
                    }
                }
            }
            // Restrict to the active set and keep a descent direction.
            for i in 0..n {
                if frozen[i] || (x[i] <= 0.0 && grad[i] > 0.0) {
                    dir[i] = 0.0;
                }
            }
            let descent: f64 = dir.iter().zip(&grad).map(|(d, g)| d * g).sum();
            if descent >= 0.0 {
                s_hist.clear();
                y_hist.clear();
                rho_hist.clear();
                for (di, pgi) in dir.iter_mut().zip(&pg) {
                    *di = -pgi;
                }
            }

            // Projected backtracking Armijo search.
            let mut t = 1.0;
            let mut accepted = None;
            for _ in 0..50 {
                let mut cand: Vec<f64> = x.iter().zip(&dir).map(|(xi, di)| xi + t * di).collect();
                project(&mut cand, frozen);
                let slope: f64 = cand
                    .iter()
                    .zip(&x)
                    .zip(&grad)
                    .map(|((c, xi), g)| (c - xi) * g)
                    .sum();
                if slope < 0.0 {
                    let f_cand = obj.value(&cand);
                    if f_cand.is_finite() && f_cand <= f + 1e-4 * slope {
                        accepted = Some((cand, f_cand));
                        break;
                    }
                }
                t *= 0.5;
            }
            let Some((x_new, f_new)) = accepted else {
                stalled = true;
                break;
            };

            let mut grad_new = vec![0.0; n];
            let f_check = obj.value_grad(&x_new, &mut grad_new);
            if !f_check.is_finite() {
                return Err(Error::numeric("objective became non-finite during descent"));
            }

            let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
            let y: Vec<f64> = grad_new.iter().zip(&grad).map(|(a, b)| a - b).collect();
            let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
            let s_norm: f64 = s.iter().map(|v| v * v).sum::<f64>().sqrt();
            let y_norm: f64 = y.iter().map(|v| v * v).sum::<f64>().sqrt();
            if sy > 1e-10 * s_norm * y_norm {
                if s_hist.len() == self.memory {
                    s_hist.remove(0);
                    y_hist.remove(0);
                    rho_hist.remove(0);
                }
                rho_hist.push(1.0 / sy);
                s_hist.push(s);
                y_hist.push(y);
            }

            let f_prev = f;
            x = x_new;
            grad = grad_new;
            f = f_new;
            if (f_prev - f).abs() <= self.f_rel_tol * f.abs().max(1.0) {
                break;
            }
        }

        Ok(SolveOutcome {
            x,
            value: f,
            iterations,
            stalled,
        })
    }
}

/// Plain Adam state for the MLP backbone (first-order adaptive steps).
pub(crate) struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: usize,
    lr: f64,
}

impl AdamState {
    pub fn new(dim: usize, lr: f64) -> Self {
        AdamState {
            m: vec![0.0; dim],
            v: vec![0.0; dim],
            t: 0,
            lr,
        }
    }

    pub fn step(&mut self, x: &mut [f64], grad: &[f64], frozen: &[bool]) {
        const B1: f64 = 0.9;
        const B2: f64 = 0.999;
        const EPS: f64 = 1e-8;
        self.t += 1;
        let t = self.t as f64;
        for i in 0..x.len() {
            if frozen[i] {
                continue;
            }
            let g = grad[i];
            self.m[i] = B1 * self.m[i] + (1.0 - B1) * g;
            self.v[i] = B2 * self.v[i] + (1.0 - B2) * g * g;
            let mhat = self.m[i] / (1.0 - B1.powf(t));
            let vhat = self.v[i] / (1.0 - B2.powf(t));
            x[i] -= self.lr * mhat / (vhat.sqrt() + EPS);
        }
    }
}
