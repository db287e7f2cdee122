//! Elastic-net penalized logistic regression.
//!
//! Minimizes, over standardized features z,
//!
//! ```text
//! F(b0, b) = (1/n) sum_i [softplus(eta_i) - y_i eta_i]
//!          + lambda * ((1 - alpha)/2 * |b|^2 + alpha * |b|_1),   eta = b0 + z.b
//! ```
//!
//! by proximal Newton steps (IRLS outer loop, cyclic coordinate descent on
//! the weighted least-squares subproblem, backtracking on F). Convergence is
//! declared when the minimum-norm subgradient has max-norm at most
//! [`GRADIENT_TOLERANCE`].

use nalgebra::DMatrix;
use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::model::{check_width, Model, PredictError};
use crate::stats::sigmoid;

pub const GRADIENT_TOLERANCE: f64 = 1e-6;
const MAX_OUTER: usize = 100;
const MAX_SWEEPS: usize = 500;
const MIN_WEIGHT: f64 = 1e-5;

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// The penalized objective over an already standardized design.
/// Parameter vectors are `[intercept, b_1, ..., b_p]`.
#[derive(Debug, Clone)]
pub struct LogisticObjective {
    pub z: Array2<f64>,
    pub y: Vec<f64>,
    pub lambda: f64,
    pub alpha: f64,
}

impl LogisticObjective {
    fn eta(&self, params: &[f64]) -> Vec<f64> {
        self.z
            .outer_iter()
            .map(|row| params[0] + row.iter().zip(&params[1..]).map(|(a, b)| a * b).sum::<f64>())
            .collect()
    }

    pub fn value(&self, params: &[f64]) -> f64 {
        let n = self.y.len() as f64;
        let eta = self.eta(params);
        let loss = eta.iter().zip(&self.y).map(|(e, y)| softplus(*e) - y * e).sum::<f64>() / n;
        let beta = &params[1..];
        let l2 = beta.iter().map(|b| b * b).sum::<f64>();
        let l1 = beta.iter().map(|b| b.abs()).sum::<f64>();
        loss + self.lambda * (0.5 * (1.0 - self.alpha) * l2 + self.alpha * l1)
    }

    /// Gradient of the smooth part (loss + ridge term).
    pub fn smooth_gradient(&self, params: &[f64]) -> Vec<f64> {
        let n = self.y.len() as f64;
        let eta = self.eta(params);
        let mut g = vec![0.0; params.len()];
        for (i, row) in self.z.outer_iter().enumerate() {
            let r = sigmoid(eta[i]) - self.y[i];
            g[0] += r;
            for (j, v) in row.iter().enumerate() {
                g[j + 1] += r * v;
            }
        }
        for (j, gj) in g.iter_mut().enumerate() {
            *gj /= n;
            if j > 0 {
                *gj += self.lambda * (1.0 - self.alpha) * params[j];
            }
        }
        g
    }

    /// Full gradient, valid where every penalized coefficient is non-zero.
    pub fn gradient(&self, params: &[f64]) -> Vec<f64> {
        let mut g = self.smooth_gradient(params);
        for j in 1..params.len() {
            g[j] += self.lambda * self.alpha * params[j].signum();
        }
        g
    }

    /// Max-norm of the minimum-norm subgradient; zero exactly at the optimum.
    pub fn stationarity(&self, params: &[f64]) -> f64 {
        let g = self.smooth_gradient(params);
        let l1 = self.lambda * self.alpha;
        let mut worst = g[0].abs();
        for j in 1..params.len() {
            let v = if params[j] != 0.0 {
                (g[j] + l1 * params[j].signum()).abs()
            } else {
                (g[j].abs() - l1).max(0.0)
            };
            worst = worst.max(v);
        }
        worst
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub center: Vec<f64>,
    pub scale: Vec<f64>,
    pub intercept: f64,
    /// Coefficients on the standardized scale.
    pub coef: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

pub(crate) fn standardize(x: ArrayView2<'_, f64>) -> (Array2<f64>, Vec<f64>, Vec<f64>) {
    let n = x.nrows() as f64;
    let mut center = Vec::with_capacity(x.ncols());
    let mut scale = Vec::with_capacity(x.ncols());
    for col in x.columns() {
        let m = col.sum() / n;
        let sd = (col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n).sqrt();
        center.push(m);
        scale.push(if sd > 0.0 { sd } else { 1.0 });
    }
    let constant: Vec<bool> = x.columns().into_iter().map(|c| c.iter().all(|&v| v == c[0])).collect();
    let z = Array2::from_shape_fn(x.dim(), |(i, j)| if constant[j] { 0.0 } else { (x[[i, j]] - center[j]) / scale[j] });
    (z, center, scale)
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

pub fn fit_logistic(x: ArrayView2<'_, f64>, y: &[f64], lambda: f64, alpha: f64) -> LogisticModel {
    let (z, center, scale) = standardize(x);
    let obj = LogisticObjective { z, y: y.to_vec(), lambda, alpha };
    let (n, p) = obj.z.dim();
    let nf = n as f64;
    let ybar = (y.iter().sum::<f64>() / nf).clamp(1e-6, 1.0 - 1e-6);
    let mut params = vec![0.0; p + 1];
    params[0] = (ybar / (1.0 - ybar)).ln();
    let mut f_cur = obj.value(&params);
    let mut converged = obj.stationarity(&params) <= GRADIENT_TOLERANCE;
    let mut iterations = 0;

    while !converged && iterations < MAX_OUTER {
        iterations += 1;
        let eta = obj.eta(&params);
        let mut w = vec![0.0; n];
        let mut resid = vec![0.0; n];
        for i in 0..n {
            let pr = sigmoid(eta[i]);
            w[i] = (pr * (1.0 - pr)).max(MIN_WEIGHT);
            // Working response minus current linear predictor.
            resid[i] = (y[i] - pr) / w[i];
        }
        let wsum: f64 = w.iter().sum();
        let xw2: Vec<f64> = (0..p)
            .map(|j| obj.z.column(j).iter().zip(&w).map(|(v, wi)| wi * v * v).sum::<f64>() / nf)
            .collect();
        let mut cand = params.clone();
        for _ in 0..MAX_SWEEPS {
            let mut max_change: f64 = 0.0;
            let shift = resid.iter().zip(&w).map(|(r, wi)| r * wi).sum::<f64>() / wsum;
            if shift != 0.0 {
                cand[0] += shift;
                resid.iter_mut().for_each(|r| *r -= shift);
                max_change = max_change.max(shift.abs());
            }
            for j in 0..p {
                if xw2[j] == 0.0 {
                    continue;
                }
                let col = obj.z.column(j);
                let old = cand[j + 1];
                let rho = col.iter().zip(&resid).zip(&w).map(|((v, r), wi)| wi * v * r).sum::<f64>() / nf
                    + xw2[j] * old;
                let new = soft_threshold(rho, lambda * alpha) / (xw2[j] + lambda * (1.0 - alpha));
                if new != old {
                    let d = new - old;
                    for (r, v) in resid.iter_mut().zip(col.iter()) {
                        *r -= d * v;
                    }
                    cand[j + 1] = new;
                    max_change = max_change.max(d.abs() * xw2[j].sqrt());
                }
            }
            if max_change < 1e-10 {
                break;
            }
        }
        // Backtracking along the proximal Newton direction.
        let dir: Vec<f64> = cand.iter().zip(&params).map(|(c, o)| c - o).collect();
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let trial: Vec<f64> = params.iter().zip(&dir).map(|(o, d)| o + t * d).collect();
            let f_trial = obj.value(&trial);
            if f_trial <= f_cur {
                accepted = Some((trial, f_trial));
                break;
            }
            t *= 0.5;
        }
        let Some((next, f_next)) = accepted else { break };
        let progress = f_cur - f_next;
        params = next;
        f_cur = f_next;
        converged = obj.stationarity(&params) <= GRADIENT_TOLERANCE;
        if progress <= 1e-15 * f_cur.abs().max(1.0) {
            break;
        }
    }

    LogisticModel {
        center,
        scale,
        intercept: params[0],
        coef: params[1..].to_vec(),
        iterations,
        converged,
    }
}

impl LogisticModel {
    fn margin(&self, row: &[f64]) -> f64 {
        self.intercept
            + row
                .iter()
                .enumerate()
                .map(|(j, v)| self.coef[j] * (v - self.center[j]) / self.scale[j])
                .sum::<f64>()
    }

    /// Wald statistics |b_j| / SE_j, with SE from the diagonal of the inverse
    /// penalized observed information evaluated on `x`.
    pub fn wald(&self, x: ArrayView2<'_, f64>, lambda: f64, alpha: f64) -> Vec<f64> {
        let (n, p) = x.dim();
        let z = Array2::from_shape_fn((n, p), |(i, j)| (x[[i, j]] - self.center[j]) / self.scale[j]);
        let w: Vec<f64> = x
            .outer_iter()
            .map(|r| {
                let pr = sigmoid(self.margin(&r.to_vec()));
                pr * (1.0 - pr)
            })
            .collect();
        let k = p + 1;
        let mut info = DMatrix::<f64>::zeros(k, k);
        for i in 0..n {
            let zi = |a: usize| if a == 0 { 1.0 } else { z[[i, a - 1]] };
            for a in 0..k {
                let za = zi(a) * w[i];
                for b in a..k {
                    info[(a, b)] += za * zi(b);
                }
            }
        }
        let ridge = n as f64 * lambda * (1.0 - alpha);
        for a in 0..k {
            for b in 0..a {
                info[(a, b)] = info[(b, a)];
            }
            if a > 0 {
                info[(a, a)] += ridge;
            }
        }
        let trace = info.trace().max(1e-300);
        let inverse = (0..6)
            .find_map(|attempt| {
                let mut m = info.clone();
                if attempt > 0 {
                    let jitter = trace / k as f64 * 10f64.powi(attempt - 13);
                    for a in 0..k {
                        m[(a, a)] += jitter;
                    }
                }
                m.cholesky().map(|c| c.inverse())
            })
            .unwrap_or_else(|| DMatrix::from_diagonal_element(k, k, f64::INFINITY));
        (0..p)
            .map(|j| {
                let se = inverse[(j + 1, j + 1)].sqrt();
                if self.coef[j] == 0.0 || !se.is_finite() || se <= 0.0 {
                    0.0
                } else {
                    self.coef[j].abs() / se
                }
            })
            .collect()
    }

    /// Coalition values via the margin recursion
    /// `eta(S + j) = eta(S) + b_j (x_j - b_j)` on the standardized scale.
    fn table(&self, row: &[f64], background: ArrayView2<'_, f64>) -> Vec<f64> {
        let p = row.len();
        let n_masks = 1usize << p;
        let mut out = vec![0.0; n_masks];
        let mut eta = vec![0.0; n_masks];
        let m = background.nrows() as f64;
        for b in background.outer_iter() {
            let b = b.as_slice().expect("standard layout");
            eta[0] = self.margin(b);
            for mask in 1..n_masks {
                let j = mask.trailing_zeros() as usize;
                eta[mask] = eta[mask & (mask - 1)] + self.coef[j] * (row[j] - b[j]) / self.scale[j];
            }
            for (o, e) in out.iter_mut().zip(&eta) {
                *o += sigmoid(*e) / m;
            }
        }
        out
    }
}

impl Model for LogisticModel {
    fn n_features(&self) -> usize {
        self.coef.len()
    }

    fn predict_proba(&self, rows: ArrayView2<'_, f64>) -> Result<Vec<f64>, PredictError> {
        check_width(self.n_features(), rows.ncols())?;
        Ok(rows.outer_iter().map(|r| sigmoid(self.margin(&r.to_vec()))).collect())
    }

    fn coalition_table(&self, row: &[f64], background: ArrayView2<'_, f64>) -> Result<Vec<f64>, PredictError> {
        check_width(self.n_features(), row.len())?;
        check_width(self.n_features(), background.ncols())?;
        if background.nrows() == 0 {
            return Err(PredictError::EmptyBackground);
        }
        let background = background.as_standard_layout();
        Ok(self.table(row, background.view()))
    }
}
