//! Successive convex refinement of a max–min design.
//!
//! Each `u_p` is convex in `x`, so its tangent `L_p(x) = 2 Re<g_p, x> - u_p(x_k)`
//! is a global under-estimator. Replacing `u_p` by `L_p` in the threshold
//! constraints gives a second-order cone program whose optimum is feasible
//! for the original problem; iterating climbs to a local max–min point.

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};
use num_complex::Complex64;

use super::objective::{to_sphere, Objective};
use crate::metrics::DistanceMetric;

#[derive(Debug, Clone, Copy)]
pub(crate) struct PolishOptions {
    pub max_iterations: usize,
    pub tol: f64,
}

/// How a pair's threshold on `u` depends on the target level `m`.
enum Threshold {
    /// `h(u) = p ln u + c0`: thresholds scale jointly, `theta_p = a_p T`.
    Power { p: f64, c0: f64 },
    /// Any increasing `h`: `theta_p(m)` linearized around the current level.
    Linearized { exact: bool },
}

fn threshold_kind(metric: &DistanceMetric) -> Threshold {
    match (metric.power_exponent(), metric) {
        (Some(p), _) => Threshold::Power {
            p,
            c0: metric.log_of_squared(1.0),
        },
        (None, DistanceMetric::AwgnExp { .. }) => Threshold::Linearized { exact: true },
        _ => Threshold::Linearized { exact: false },
    }
}

/// Smallest `u` with `h(u) >= y` for increasing `h`.
fn invert(metric: &DistanceMetric, y: f64) -> f64 {
    if let DistanceMetric::AwgnExp { sigma } = *metric {
        return (4.0 * sigma * y).max(0.0);
    }
    let f = |v: f64| metric.log_of_squared(v.exp()) - y;
    let (mut lo, mut hi) = (-1.0f64, 1.0f64);
    while f(lo) > 0.0 && lo > -700.0 {
        lo *= 2.0;
    }
    while f(hi) < 0.0 && hi < 700.0 {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-13 * hi.abs().max(1.0) {
            break;
        }
    }
    hi.exp()
}

struct Subproblem {
    rows: Vec<(Vec<Complex64>, f64, f64)>,
    t_lo: Option<f64>,
    t_hi: f64,
}

/// Solves `max T` s.t. `2 Re<g_p, x> - a_p T >= c_p`, `T in [t_lo, t_hi]`,
/// `||x|| <= 1`. Returns `x` and `T`.
fn solve(q: usize, sub: &Subproblem) -> Option<(Vec<Complex64>, f64)> {
    let n = 2 * q + 1;
    let (mut ri, mut ci, mut vals) = (Vec::new(), Vec::new(), Vec::new());
    let mut b = Vec::new();
    let mut row = 0usize;
    for (g, a, c) in &sub.rows {
        for l in 0..q {
            ri.push(row);
            ci.push(l);
            vals.push(-2.0 * g[l].re);
            ri.push(row);
            ci.push(q + l);
            vals.push(-2.0 * g[l].im);
        }
        ri.push(row);
        ci.push(2 * q);
        vals.push(*a);
        b.push(-c);
        row += 1;
    }
    ri.push(row);
    ci.push(2 * q);
    vals.push(1.0);
    b.push(sub.t_hi);
    row += 1;
    if let Some(lo) = sub.t_lo {
        ri.push(row);
        ci.push(2 * q);
        vals.push(-1.0);
        b.push(-lo);
        row += 1;
    }
    let linear = row;
    b.push(1.0);
    row += 1;
    for l in 0..2 * q {
        ri.push(row);
        ci.push(l);
        vals.push(-1.0);
        b.push(0.0);
        row += 1;
    }
    let a = CscMatrix::new_from_triplets(row, n, ri, ci, vals);
    let p = CscMatrix::zeros((n, n));
    let mut cost = vec![0.0; n];
    cost[2 * q] = -1.0;
    let cones = [
        SupportedConeT::NonnegativeConeT(linear),
        SupportedConeT::SecondOrderConeT(2 * q + 1),
    ];
    let settings = DefaultSettingsBuilder::default()
        .verbose(false)
        .max_iter(200)
        .build()
        .ok()?;
    let mut solver = DefaultSolver::new(&p, &cost, &a, &b, &cones, settings).ok()?;
    solver.solve();
    match solver.solution.status {
        SolverStatus::Solved | SolverStatus::AlmostSolved => {}
        _ => return None,
    }
    let z = &solver.solution.x;
    if z.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let x = (0..q).map(|l| Complex64::new(z[l], z[q + l])).collect();
    Some((x, z[2 * q]))
}

/// The `size` lowest-scoring pairs plus every pair in `extra`.
fn working_set(scores: &[f64], size: usize, extra: &[bool]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    if size < idx.len() {
        idx.select_nth_unstable_by(size, |&a, &b| scores[a].total_cmp(&scores[b]));
        idx.truncate(size);
    }
    let mut chosen = extra.to_vec();
    idx.iter().for_each(|&p| chosen[p] = true);
    (0..scores.len()).filter(|&p| chosen[p]).collect()
}

/// Refines `x` in place; returns the number of convex subproblems solved.
///
/// Constraints are generated lazily: the subproblem only sees the lowest
/// scoring pairs, and any pair a rejected step would have pushed below the
/// current level joins the working set for good.
pub(crate) fn polish(obj: &Objective, x: &mut Vec<Complex64>, opts: PolishOptions) -> usize {
    let n = obj.len();
    let kind = threshold_kind(&obj.metric);
    let base_set = (8 * obj.q + 32).min(n);
    let mut extra = vec![false; n];
    let trust_cap = match kind {
        Threshold::Linearized { exact: true } => 1e3,
        _ => 1.0,
    };
    let mut trust = 1.0f64;
    let mut solved = 0;
    let mut scores = obj.scores(x);
    let mut m = scores.iter().copied().fold(f64::INFINITY, f64::min);
    while solved < opts.max_iterations && m.is_finite() {
        let ws = working_set(&scores, base_set, &extra);
        let mut sub = Subproblem {
            rows: Vec::with_capacity(ws.len()),
            t_lo: Some(0.0),
            t_hi: 0.0,
        };
        for &p in &ws {
            let (u, g) = obj.separation_and_direction(p, x);
            let target = m + obj.gap_exponent * obj.log_gap[p];
            let (a, c) = match kind {
                Threshold::Power { p: pw, c0 } => (((target - c0) / pw).exp(), u),
                Threshold::Linearized { .. } => {
                    let theta = invert(&obj.metric, target);
                    let slope = obj.metric.log_of_squared_slope(theta.max(1e-300));
                    (1.0 / slope, u + theta)
                }
            };
            sub.rows.push((g, a, c));
        }
        sub.t_hi = match kind {
            Threshold::Power { .. } => 1e6,
            Threshold::Linearized { .. } => trust * m.abs().max(1.0),
        };
        solved += 1;
        let Some((cand, _)) = solve(obj.q, &sub) else {
            break;
        };

        let mut step = 1.0;
        let mut outcome = None;
        for _ in 0..12 {
            let mut trial: Vec<Complex64> = x
                .iter()
                .zip(&cand)
                .map(|(a, b)| a + (b - a) * step)
                .collect();
            to_sphere(&mut trial);
            let trial_scores = obj.scores(&trial);
            let tm = trial_scores.iter().copied().fold(f64::INFINITY, f64::min);
            if tm > m {
                outcome = Some((trial, trial_scores, tm));
                break;
            }
            if step == 1.0 {
                let mut fresh = false;
                for (p, &s) in trial_scores.iter().enumerate() {
                    if s <= m && !extra[p] {
                        extra[p] = true;
                        fresh = true;
                    }
                }
                // a pair outside the model caused the failure; re-solve
                if fresh && ws.len() < n {
                    outcome = None;
                    step = 0.0;
                    break;
                }
            }
            step *= 0.5;
        }
        match outcome {
            Some((trial, trial_scores, tm)) => {
                let gain = tm - m;
                *x = trial;
                scores = trial_scores;
                m = tm;
                trust = (trust * 2.0).min(trust_cap);
                if gain <= opts.tol * m.abs().max(1.0) {
                    break;
                }
            }
            None if step == 0.0 => continue,
            None if trust > 1e-8 && !matches!(kind, Threshold::Power { .. }) => trust *= 0.25,
            None => break,
        }
    }
    solved
}
