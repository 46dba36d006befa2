//! L2-regularised logistic regression fitted by L-BFGS.
//!
//! Objective: `(1/n) Σ log(1 + exp(−ỹ·(w·x + b))) + λ‖w‖²` with ỹ ∈ {−1, +1};
//! the intercept is not penalised.

use std::collections::VecDeque;

use rayon::prelude::*;

use super::{Dataset, ModelConfig};
use crate::error::{Error, Result};

/// Rows per partial sum; fixed so results do not depend on the thread count.
const CHUNK_ROWS: usize = 2048;
const HISTORY: usize = 10;

#[derive(Clone, Debug, PartialEq)]
pub struct FittedModel {
    /// On the standardized scale for the first `means.len()` features.
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    pub lambda: f64,
    pub iterations: usize,
    pub converged: bool,
    pub loss: f64,
}

/// `log(1 + e^z)` without overflow.
#[inline]
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// `1 / (1 + e^z)` without overflow.
#[inline]
fn sigmoid_neg(z: f64) -> f64 {
    if z >= 0.0 {
        let e = (-z).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + z.exp())
    }
}

/// Loss and gradient `(∂w, ∂b)` on already-transformed rows `x` (row-major,
/// `d` columns) with 0/1 labels.
pub fn loss_and_gradient(x: &[f64], y: &[u8], d: usize, w: &[f64], b: f64, lambda: f64) -> (f64, Vec<f64>, f64) {
    let n = y.len();
    assert_eq!(x.len(), n * d);
    assert_eq!(w.len(), d);
    let partials: Vec<(f64, Vec<f64>, f64)> = x
        .par_chunks(CHUNK_ROWS * d.max(1))
        .zip(y.par_chunks(CHUNK_ROWS))
        .map(|(xc, yc)| {
            let mut loss = 0.0;
            let mut gw = vec![0.0; d];
            let mut gb = 0.0;
            for (i, &label) in yc.iter().enumerate() {
                let row = &xc[i * d..(i + 1) * d];
                let m = row.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() + b;
                let s = if label == 1 { 1.0 } else { -1.0 };
                let t = s * m;
                loss += softplus(-t);
                let coef = -s * sigmoid_neg(t);
                for (g, v) in gw.iter_mut().zip(row) {
                    *g += coef * v;
                }
                gb += coef;
            }
            (loss, gw, gb)
        })
        .collect();
    let inv = 1.0 / n as f64;
    let mut loss = 0.0;
    let mut gw = vec![0.0; d];
    let mut gb = 0.0;
    for (l, g, b) in partials {
        loss += l;
        for (a, v) in gw.iter_mut().zip(g) {
            *a += v;
        }
        gb += b;
    }
    let penalty: f64 = w.iter().map(|v| v * v).sum::<f64>() * lambda;
    for (g, wi) in gw.iter_mut().zip(w) {
        *g = *g * inv + 2.0 * lambda * wi;
    }
    (loss * inv + penalty, gw, gb * inv)
}

/// Column means and standard deviations of the first `k` features.
pub fn standardization(data: &Dataset, k: usize) -> (Vec<f64>, Vec<f64>) {
    let n = data.n() as f64;
    let d = data.d;
    let mut means = vec![0.0; k];
    for i in 0..data.n() {
        for j in 0..k {
            means[j] += data.x[i * d + j];
        }
    }
    means.iter_mut().for_each(|m| *m /= n);
    let mut vars = vec![0.0; k];
    for i in 0..data.n() {
        for j in 0..k {
            let dv = data.x[i * d + j] - means[j];
            vars[j] += dv * dv;
        }
    }
    let stds = vars
        .iter()
        .map(|v| {
            let s = (v / n).sqrt();
            if s > 0.0 {
                s
            } else {
                log::warn!("constant feature in training split; left unscaled");
                1.0
            }
        })
        .collect();
    (means, stds)
}

fn transform(data: &Dataset, means: &[f64], stds: &[f64]) -> Vec<f64> {
    let d = data.d;
    let mut x = data.x.clone();
    for row in x.chunks_mut(d) {
        for j in 0..means.len() {
            row[j] = (row[j] - means[j]) / stds[j];
        }
    }
    x
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn fit(data: &Dataset, lambda: f64, config: &ModelConfig) -> Result<FittedModel> {
    let n = data.n();
    let pos = data.y.iter().filter(|&&l| l == 1).count();
    if pos == 0 || pos == n {
        return Err(Error::invalid("logistic fit needs both classes"));
    }
    if data.x.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite feature value"));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::invalid(format!("invalid lambda {lambda}")));
    }
    let d = data.d;
    let (means, stds) = standardization(data, data.n_standardized);
    let x = transform(data, &means, &stds);
    let eval = |p: &[f64]| {
        let (l, gw, gb) = loss_and_gradient(&x, &data.y, d, &p[..d], p[d], lambda);
        let mut g = gw;
        g.push(gb);
        (l, g)
    };

    // Parameters are (w, b); b starts at the log-odds of the base rate.
    let rate = pos as f64 / n as f64;
    let mut p = vec![0.0; d + 1];
    p[d] = (rate / (1.0 - rate)).ln();
    let (mut f, mut g) = eval(&p);
    let mut hist: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let mut converged = false;
    let mut iterations = 0;
    while iterations < config.max_iterations {
        iterations += 1;
        // Two-loop recursion for the search direction.
        let mut q = g.clone();
        let mut alphas = Vec::with_capacity(hist.len());
        for (s, yv, rho) in hist.iter().rev() {
            let a = rho * dot(s, &q);
            q.iter_mut().zip(yv).for_each(|(qi, yi)| *qi -= a * yi);
            alphas.push(a);
        }
        if let Some((s, yv, _)) = hist.back() {
            let gamma = dot(s, yv) / dot(yv, yv);
            q.iter_mut().for_each(|v| *v *= gamma);
        }
        for ((s, yv, rho), a) in hist.iter().zip(alphas.iter().rev()) {
            let beta = rho * dot(yv, &q);
            q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - beta) * si);
        }
        let mut dir: Vec<f64> = q.iter().map(|v| -v).collect();
        let mut slope = dot(&g, &dir);
        if !(slope < 0.0) {
            hist.clear();
            dir = g.iter().map(|v| -v).collect();
            slope = -dot(&g, &g);
        }
        if slope == 0.0 {
            converged = true;
            break;
        }
        // Backtracking line search with the Armijo condition.
        let mut step = if hist.is_empty() { 1.0 / dot(&g, &g).sqrt().max(1.0) } else { 1.0 };
        let mut accepted = None;
        for _ in 0..60 {
            let cand: Vec<f64> = p.iter().zip(&dir).map(|(a, b)| a + step * b).collect();
            let (fc, gc) = eval(&cand);
            if fc.is_finite() && fc <= f + 1e-4 * step * slope {
                accepted = Some((cand, fc, gc));
                break;
            }
            step *= 0.5;
        }
        let Some((np, nf, ng)) = accepted else {
            converged = true;
            break;
        };
        let s: Vec<f64> = np.iter().zip(&p).map(|(a, b)| a - b).collect();
        let yv: Vec<f64> = ng.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &yv);
        if sy > 1e-12 {
            if hist.len() == HISTORY {
                hist.pop_front();
            }
            hist.push_back((s, yv, 1.0 / sy));
        }
        let rel = (f - nf).abs() / f.abs().max(1e-12);
        p = np;
        f = nf;
        g = ng;
        if rel < config.tolerance {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("logistic fit stopped at {iterations} iterations without converging");
    }
    Ok(FittedModel {
        coefficients: p[..d].to_vec(),
        intercept: p[d],
        means,
        stds,
        lambda,
        iterations,
        converged,
        loss: f,
    })
}

impl FittedModel {
    /// Objective value at `(w, b)` on `data`, using this model's scaling.
    pub fn objective_at(&self, data: &Dataset, w: &[f64], b: f64) -> f64 {
        let x = transform(data, &self.means, &self.stds);
        loss_and_gradient(&x, &data.y, data.d, w, b, self.lambda).0
    }

    pub fn predict_proba(&self, row: &[f64]) -> f64 {
        let mut m = self.intercept;
        for (j, (&v, &w)) in row.iter().zip(&self.coefficients).enumerate() {
            let v = if j < self.means.len() { (v - self.means[j]) / self.stds[j] } else { v };
            m += v * w;
        }
        1.0 - sigmoid_neg(m)
    }

    /// Class predictions at the 0.5 probability threshold.
    pub fn predict(&self, data: &Dataset) -> Vec<u8> {
        data.x
            .chunks(data.d)
            .map(|row| (self.predict_proba(row) >= 0.5) as u8)
            .collect()
    }

    pub fn odds_ratios(&self) -> Vec<f64> {
        self.coefficients.iter().map(|c| c.exp()).collect()
    }
}
