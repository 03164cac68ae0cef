//! Lifted relaxation over `X = x x^H`.
//!
//! Every `u_p` is linear in `X`, so the max–min problem becomes concave once
//! the rank-one condition is dropped. We climb its softmin over
//! `{X >= 0, tr X <= 1}` and round back to a vector by Gaussian
//! randomization around the top eigenvectors.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use super::objective::{softmin_of, to_sphere, Objective};

/// Projects the eigenvalues of a Hermitian matrix onto the capped simplex.
fn project_spectraplex(x: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let herm = (x + x.adjoint()) * Complex64::new(0.5, 0.0);
    let eig = herm.symmetric_eigen();
    let lam: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    let clipped: Vec<f64> = lam.iter().map(|v| v.max(0.0)).collect();
    let proj = if clipped.iter().sum::<f64>() <= 1.0 {
        clipped
    } else {
        let mut sorted = lam.clone();
        sorted.sort_by(|a, b| b.total_cmp(a));
        let mut cum = 0.0;
        let mut shift = 0.0;
        for (i, v) in sorted.iter().enumerate() {
            cum += v;
            let t = (cum - 1.0) / (i + 1) as f64;
            if v - t > 0.0 {
                shift = t;
            }
        }
        lam.iter().map(|v| (v - shift).max(0.0)).collect()
    };
    let v = &eig.eigenvectors;
    let d = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        proj.len(),
        proj.iter().map(|&l| Complex64::new(l, 0.0)),
    ));
    v * d * v.adjoint()
}

fn scores(obj: &Objective, x: &DMatrix<Complex64>) -> Vec<f64> {
    (0..obj.len())
        .map(|p| obj.score_of(p, obj.lifted_separation(p, x)))
        .collect()
}

/// Relaxed optimum followed by randomized rounding; returns the best
/// rounded vector and iterations used.
pub(crate) fn lift_and_round<R: Rng>(
    obj: &Objective,
    rng: &mut R,
    iterations: usize,
    draws: usize,
) -> (Vec<Complex64>, usize) {
    let q = obj.q;
    let mats: Vec<DMatrix<Complex64>> = (0..obj.len()).map(|p| obj.pair_matrix(p)).collect();
    let mut x = DMatrix::from_diagonal_element(q, q, Complex64::new(1.0 / q as f64, 0.0));
    let s0 = scores(obj, &x);
    let scale = (s0
        .iter()
        .filter(|s| s.is_finite())
        .map(|s| s.abs())
        .sum::<f64>()
        / s0.len().max(1) as f64)
        .max(1.0);
    let mut used = 0;
    let mut step = 0.1f64;
    for c in [0.1, 0.01, 1e-3] {
        let tau = c * scale;
        let mut value = softmin_of(&scores(obj, &x), tau);
        for _ in 0..iterations / 3 {
            used += 1;
            let s = scores(obj, &x);
            let smin = s.iter().copied().fold(f64::INFINITY, f64::min);
            let mut grad = DMatrix::<Complex64>::zeros(q, q);
            let mut z = 0.0;
            for (p, &sp) in s.iter().enumerate() {
                let w = (-(sp - smin) / tau).exp();
                if w < 1e-300 {
                    continue;
                }
                z += w;
                let slope = obj
                    .metric
                    .log_of_squared_slope(obj.lifted_separation(p, &x).max(1e-300));
                grad += &mats[p] * Complex64::new(w * slope, 0.0);
            }
            grad /= Complex64::new(z, 0.0);
            let gnorm = grad.norm();
            if !(gnorm > 0.0) || !gnorm.is_finite() {
                break;
            }
            let mut moved = false;
            while step > 1e-10 {
                let trial = project_spectraplex(&(&x + &grad * Complex64::new(step / gnorm, 0.0)));
                let tv = softmin_of(&scores(obj, &trial), tau);
                if tv > value {
                    x = trial;
                    value = tv;
                    step = (step * 1.5).min(1.0);
                    moved = true;
                    break;
                }
                step *= 0.5;
            }
            if !moved {
                break;
            }
        }
    }

    let herm = (&x + x.adjoint()) * Complex64::new(0.5, 0.0);
    let eig = herm.symmetric_eigen();
    let top = eig
        .eigenvalues
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap_or(0);
    let mut best: Vec<Complex64> = eig.eigenvectors.column(top).iter().copied().collect();
    to_sphere(&mut best);
    let mut best_score = obj.min_score(&best);
    let factor: Vec<f64> = eig.eigenvalues.iter().map(|l| l.max(0.0).sqrt()).collect();
    for _ in 0..draws {
        let z: Vec<Complex64> = (0..q)
            .map(|_| {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                Complex64::new(re, im)
            })
            .collect();
        let mut cand = vec![Complex64::new(0.0, 0.0); q];
        for (j, f) in factor.iter().enumerate() {
            for (i, c) in cand.iter_mut().enumerate() {
                *c += eig.eigenvectors[(i, j)] * z[j] * *f;
            }
        }
        to_sphere(&mut cand);
        let s = obj.min_score(&cand);
        if s > best_score {
            best = cand;
            best_score = s;
        }
    }
    (best, used)
}
