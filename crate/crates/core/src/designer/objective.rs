//! Per-pair scores of a modulation vector.
//!
//! Every constraint is reduced to a squared separation `u_p(x)`: either
//! `|<b_p, x>|^2` or, under stochastic fading, `x^H G_p x`. The pair's score
//! is `ln D(sqrt(u_p)) - e ln gap_p`; the achieved margin is the minimum
//! score over pairs, and the designer maximizes it.

use std::collections::HashMap;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::channel::{fading_gram, FadingModel};
use crate::error::Result;
use crate::function_model::ConstraintSet;
use crate::metrics::DistanceMetric;

#[derive(Debug, Clone)]
pub(crate) enum Forms {
    /// Difference vectors, row-major `n x q`.
    Linear(Vec<f64>),
    Quadratic(Vec<DMatrix<Complex64>>),
}

#[derive(Debug, Clone)]
pub(crate) struct Objective {
    pub q: usize,
    pub metric: DistanceMetric,
    pub gap_exponent: f64,
    pub log_gap: Vec<f64>,
    pub forms: Forms,
}

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

impl Objective {
    /// With `merge` and no fading, pairs sharing a difference vector (up to
    /// sign) are merged, keeping the largest gap: it dominates the others
    /// because the threshold on `u` grows with the gap.
    pub fn compile(
        constraints: &ConstraintSet,
        metric: DistanceMetric,
        gap_exponent: f64,
        fading: Option<&FadingModel>,
        merge: bool,
    ) -> Result<Self> {
        let q = constraints.q();
        let (log_gap, forms) = match fading {
            Some(f) => {
                let profiles = constraints.profiles();
                let grams = constraints
                    .pairs()
                    .iter()
                    .map(|p| fading_gram(f, &profiles[p.i], &profiles[p.j]))
                    .collect::<Result<Vec<_>>>()?;
                let gaps = constraints.pairs().iter().map(|p| p.gap.ln()).collect();
                (gaps, Forms::Quadratic(grams))
            }
            None => {
                let mut index: HashMap<Vec<i32>, usize> = HashMap::new();
                let mut merged: Vec<(Vec<i32>, f64)> = Vec::new();
                for p in constraints.pairs() {
                    let mut diff = p.diff.clone();
                    if !merge {
                        merged.push((diff, p.gap));
                        continue;
                    }
                    if diff.iter().find(|&&b| b != 0).is_some_and(|&b| b < 0) {
                        diff.iter_mut().for_each(|b| *b = -*b);
                    }
                    match index.get(&diff) {
                        Some(&slot) => merged[slot].1 = merged[slot].1.max(p.gap),
                        None => {
                            index.insert(diff.clone(), merged.len());
                            merged.push((diff, p.gap));
                        }
                    }
                }
                let gaps = merged.iter().map(|(_, g)| g.ln()).collect();
                let flat = merged
                    .into_iter()
                    .flat_map(|(d, _)| d.into_iter().map(f64::from))
                    .collect();
                (gaps, Forms::Linear(flat))
            }
        };
        Ok(Self {
            q,
            metric,
            gap_exponent,
            log_gap,
            forms,
        })
    }

    pub fn len(&self) -> usize {
        self.log_gap.len()
    }

    /// The same objective restricted to pairs `idx`.
    pub fn subset(&self, idx: &[usize]) -> Objective {
        let forms = match &self.forms {
            Forms::Linear(_) => Forms::Linear(
                idx.iter()
                    .flat_map(|&p| self.row(p).iter().copied())
                    .collect(),
            ),
            Forms::Quadratic(g) => Forms::Quadratic(idx.iter().map(|&p| g[p].clone()).collect()),
        };
        Objective {
            q: self.q,
            metric: self.metric,
            gap_exponent: self.gap_exponent,
            log_gap: idx.iter().map(|&p| self.log_gap[p]).collect(),
            forms,
        }
    }

    fn row(&self, p: usize) -> &[f64] {
        match &self.forms {
            Forms::Linear(b) => &b[p * self.q..(p + 1) * self.q],
            Forms::Quadratic(_) => unreachable!("quadratic pairs have no row"),
        }
    }

    fn times(g: &DMatrix<Complex64>, x: &[Complex64]) -> Vec<Complex64> {
        (0..x.len())
            .map(|i| x.iter().enumerate().map(|(j, xj)| g[(i, j)] * xj).sum())
            .collect()
    }

    /// `u_p(x)` together with the half-gradient `g_p` (so that
    /// `grad u_p = 2 g_p` in the complex convention `d/dRe + i d/dIm`).
    pub fn separation_and_direction(&self, p: usize, x: &[Complex64]) -> (f64, Vec<Complex64>) {
        match &self.forms {
            Forms::Linear(_) => {
                let b = self.row(p);
                let delta: Complex64 = b.iter().zip(x).map(|(&bl, xl)| xl * bl).sum();
                (delta.norm_sqr(), b.iter().map(|&bl| delta * bl).collect())
            }
            Forms::Quadratic(g) => {
                let gx = Self::times(&g[p], x);
                let u = x
                    .iter()
                    .zip(&gx)
                    .map(|(xi, gi)| xi.conj() * gi)
                    .sum::<Complex64>()
                    .re;
                (u.max(0.0), gx)
            }
        }
    }

    pub fn separation(&self, p: usize, x: &[Complex64]) -> f64 {
        match &self.forms {
            Forms::Linear(_) => self
                .row(p)
                .iter()
                .zip(x)
                .map(|(&bl, xl)| xl * bl)
                .sum::<Complex64>()
                .norm_sqr(),
            Forms::Quadratic(g) => {
                let gx = Self::times(&g[p], x);
                x.iter()
                    .zip(&gx)
                    .map(|(xi, gi)| xi.conj() * gi)
                    .sum::<Complex64>()
                    .re
                    .max(0.0)
            }
        }
    }

    /// Fills `u` with every separation; `aux` keeps what
    /// [`Self::add_gradient`] needs.
    pub fn evaluate(&self, x: &[Complex64], u: &mut Vec<f64>, aux: &mut Vec<Complex64>) {
        u.clear();
        aux.clear();
        match &self.forms {
            Forms::Linear(b) => {
                for row in b.chunks_exact(self.q) {
                    let mut delta = ZERO;
                    for (&bl, xl) in row.iter().zip(x) {
                        if bl != 0.0 {
                            delta += xl * bl;
                        }
                    }
                    aux.push(delta);
                    u.push(delta.norm_sqr());
                }
            }
            Forms::Quadratic(_) => {
                for p in 0..self.len() {
                    u.push(self.separation(p, x));
                }
            }
        }
    }

    /// `grad += sum_p coef_p g_p`, skipping zero coefficients.
    pub fn add_gradient(
        &self,
        x: &[Complex64],
        aux: &[Complex64],
        coef: &[f64],
        grad: &mut [Complex64],
    ) {
        match &self.forms {
            Forms::Linear(b) => {
                for ((row, delta), &c) in b.chunks_exact(self.q).zip(aux).zip(coef) {
                    if c == 0.0 {
                        continue;
                    }
                    let d = delta * c;
                    for (g, &bl) in grad.iter_mut().zip(row) {
                        if bl != 0.0 {
                            *g += d * bl;
                        }
                    }
                }
            }
            Forms::Quadratic(gs) => {
                for (gm, &c) in gs.iter().zip(coef) {
                    if c == 0.0 {
                        continue;
                    }
                    for (g, v) in grad.iter_mut().zip(Self::times(gm, x)) {
                        *g += v * c;
                    }
                }
            }
        }
    }

    /// `u_p = tr(A_p X)` for a Hermitian `X`.
    pub fn lifted_separation(&self, p: usize, x: &DMatrix<Complex64>) -> f64 {
        match &self.forms {
            Forms::Linear(_) => {
                let b = self.row(p);
                let mut acc = ZERO;
                for i in 0..self.q {
                    if b[i] == 0.0 {
                        continue;
                    }
                    for j in 0..self.q {
                        if b[j] != 0.0 {
                            acc += x[(i, j)] * (b[i] * b[j]);
                        }
                    }
                }
                acc.re.max(0.0)
            }
            Forms::Quadratic(g) => (g[p].transpose().component_mul(x)).sum().re.max(0.0),
        }
    }

    /// The matrix `A_p` with `u_p = x^H A_p x`.
    pub fn pair_matrix(&self, p: usize) -> DMatrix<Complex64> {
        match &self.forms {
            Forms::Linear(_) => {
                let b = self.row(p);
                DMatrix::from_fn(self.q, self.q, |i, j| Complex64::new(b[i] * b[j], 0.0))
            }
            Forms::Quadratic(g) => g[p].clone(),
        }
    }

    pub fn score_of(&self, p: usize, u: f64) -> f64 {
        self.metric.log_of_squared(u) - self.gap_exponent * self.log_gap[p]
    }

    pub fn scores(&self, x: &[Complex64]) -> Vec<f64> {
        let (mut u, mut aux) = (Vec::new(), Vec::new());
        self.evaluate(x, &mut u, &mut aux);
        u.iter()
            .enumerate()
            .map(|(p, &up)| self.score_of(p, up))
            .collect()
    }

    pub fn min_score(&self, x: &[Complex64]) -> f64 {
        self.scores(x).into_iter().fold(f64::INFINITY, f64::min)
    }

    /// Smooth lower bound `-tau ln sum exp(-s_p / tau)` of the minimum score
    /// and its gradient with respect to `x`.
    pub fn softmin_with_gradient(&self, x: &[Complex64], tau: f64) -> (f64, Vec<Complex64>) {
        let n = self.len();
        let (mut u, mut aux) = (Vec::with_capacity(n), Vec::with_capacity(n));
        self.evaluate(x, &mut u, &mut aux);
        let s: Vec<f64> = u
            .iter()
            .enumerate()
            .map(|(p, &up)| self.score_of(p, up))
            .collect();
        let smin = s.iter().copied().fold(f64::INFINITY, f64::min);
        let mut grad = vec![ZERO; self.q];
        if !smin.is_finite() {
            // some pair sits exactly on top of another; push it apart
            let coef: Vec<f64> = s
                .iter()
                .map(|&v| f64::from(v == f64::NEG_INFINITY))
                .collect();
            self.add_gradient(x, &aux, &coef, &mut grad);
            return (smin, grad);
        }
        let mut z = 0.0;
        let coef: Vec<f64> = (0..n)
            .map(|p| {
                let w = (-(s[p] - smin) / tau).exp();
                if w < 1e-300 {
                    return 0.0;
                }
                z += w;
                2.0 * w * self.metric.log_of_squared_slope(u[p])
            })
            .collect();
        self.add_gradient(x, &aux, &coef, &mut grad);
        for g in &mut grad {
            *g /= z;
        }
        (smin - tau * z.ln(), grad)
    }
}

pub(crate) fn softmin_of(s: &[f64], tau: f64) -> f64 {
    let smin = s.iter().copied().fold(f64::INFINITY, f64::min);
    if !smin.is_finite() {
        return smin;
    }
    let z: f64 = s.iter().map(|&v| (-(v - smin) / tau).exp()).sum();
    smin - tau * z.ln()
}

pub(crate) fn norm_sqr(x: &[Complex64]) -> f64 {
    x.iter().map(Complex64::norm_sqr).sum()
}

/// Projection onto the unit power ball.
pub(crate) fn project_ball(x: &mut [Complex64]) {
    let n = norm_sqr(x).sqrt();
    if n > 1.0 {
        x.iter_mut().for_each(|v| *v /= n);
    }
}

/// Rescales onto the unit sphere (scores never decrease with power).
pub(crate) fn to_sphere(x: &mut [Complex64]) {
    let n = norm_sqr(x).sqrt();
    if n > 0.0 {
        x.iter_mut().for_each(|v| *v /= n);
    }
}
