//! First-order solvers on smoothed objectives.

use num_complex::Complex64;

use super::objective::{project_ball, softmin_of, to_sphere, Objective};

#[derive(Debug, Clone, Copy)]
pub(crate) struct AscentOptions {
    pub max_iterations: usize,
    pub stall_window: usize,
    pub stall_tol: f64,
}

/// Iteration cap per temperature when refinement follows.
const ROUGH_STAGE: usize = 300;

/// Temperatures above the minimum beyond which a pair is dropped.
const ACTIVE_WIDTH: f64 = 50.0;
/// Steps between active-set refreshes.
const REFRESH: usize = 100;

const TEMPERATURES: [f64; 8] = [0.3, 0.1, 0.03, 0.01, 3e-3, 1e-3, 3e-4, 1e-4];

fn norm(v: &[Complex64]) -> f64 {
    v.iter().map(Complex64::norm_sqr).sum::<f64>().sqrt()
}

/// Adaptive normalized-gradient steps on the unit sphere. `eval` returns the
/// value and ascent direction; iteration stops once the value gains less
/// than `stall_tol` (relative) or `floor` (absolute) over `stall_window`
/// steps.
fn climb<F>(
    x: &mut Vec<Complex64>,
    opts: AscentOptions,
    floor: f64,
    budget: &mut usize,
    mut eval: F,
) where
    F: FnMut(&[Complex64]) -> (f64, Vec<Complex64>),
{
    let (mut value, mut grad) = eval(x);
    let mut step = 0.1f64;
    let mut history = vec![value];
    while *budget > 0 {
        *budget -= 1;
        let gnorm = norm(&grad);
        if !(gnorm > 0.0) || !gnorm.is_finite() {
            break;
        }
        let mut improved = false;
        while step > 1e-12 {
            let mut trial: Vec<Complex64> = x
                .iter()
                .zip(&grad)
                .map(|(xi, gi)| xi + gi * (step / gnorm))
                .collect();
            project_ball(&mut trial);
            to_sphere(&mut trial);
            let (tv, tg) = eval(&trial);
            if tv > value || (value == f64::NEG_INFINITY && tv.is_finite()) {
                *x = trial;
                value = tv;
                grad = tg;
                step = (step * 1.5).min(1.0);
                improved = true;
                break;
            }
            step *= 0.5;
        }
        if !improved {
            break;
        }
        history.push(value);
        if history.len() > opts.stall_window {
            let old = history[history.len() - 1 - opts.stall_window];
            if value - old < (opts.stall_tol * value.abs().max(1.0)).max(floor) {
                break;
            }
        }
    }
}

/// Maximizes the softmin of the pair scores with a decreasing temperature.
///
/// Pairs scoring more than `ACTIVE_WIDTH` temperatures above the minimum
/// carry negligible weight, so each temperature climbs on that active subset,
/// re-selected every `REFRESH` steps. A temperature is left once the full
/// softmin gains little against it; with `rough` the last one is too, since
/// a refinement step follows. Returns iterations used.
pub(crate) fn ascend(
    obj: &Objective,
    x: &mut Vec<Complex64>,
    opts: AscentOptions,
    rough: bool,
) -> usize {
    to_sphere(x);
    let scores = obj.scores(x);
    let finite: Vec<f64> = scores.iter().copied().filter(|s| s.is_finite()).collect();
    let scale = if finite.is_empty() {
        1.0
    } else {
        (finite.iter().map(|s| s.abs()).sum::<f64>() / finite.len() as f64).max(1.0)
    };
    let mut budget = opts.max_iterations;
    for (stage, c) in TEMPERATURES.iter().enumerate() {
        let tau = c * scale;
        let last = stage + 1 == TEMPERATURES.len();
        let floor = if last && !rough { 0.0 } else { 1e-2 * tau };
        let mut stage_budget = if rough {
            budget.min(ROUGH_STAGE)
        } else {
            budget
        };
        let mut prev = softmin_of(&obj.scores(x), tau);
        while stage_budget > 0 {
            let s = obj.scores(x);
            let smin = s.iter().copied().fold(f64::INFINITY, f64::min);
            let active: Vec<usize> = (0..s.len())
                .filter(|&p| !(s[p] > smin + ACTIVE_WIDTH * tau))
                .collect();
            let sub = obj.subset(&active);
            let mut chunk = stage_budget.min(REFRESH);
            let before = chunk;
            climb(x, opts, floor, &mut chunk, |z| {
                sub.softmin_with_gradient(z, tau)
            });
            let used = before - chunk;
            stage_budget -= used;
            budget -= used;
            let now = softmin_of(&obj.scores(x), tau);
            let stalled = now - prev < (opts.stall_tol * now.abs().max(1.0)).max(floor);
            prev = now;
            if chunk > 0 || (stalled && now.is_finite()) {
                break;
            }
        }
        if budget == 0 {
            break;
        }
    }
    opts.max_iterations - budget
}

/// Pairs of the smoothed mean-squared-error surrogate: separations enter
/// through `exp(-d_p / nu)` weighted by the squared value gap.
pub(crate) struct MseSurrogate<'a> {
    pub obj: &'a Objective,
    pub nu: f64,
}

impl MseSurrogate<'_> {
    /// `A_p = -d_p + 2 nu ln gap_p`.
    pub fn exponents(&self, x: &[Complex64]) -> Vec<f64> {
        let (mut u, mut aux) = (Vec::new(), Vec::new());
        self.obj.evaluate(x, &mut u, &mut aux);
        self.exponents_of(&u)
    }

    fn exponents_of(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .zip(&self.obj.log_gap)
            .map(|(&up, &lg)| -up.sqrt() + 2.0 * self.nu * lg)
            .collect()
    }

    /// `nu ln sum exp(A_p / nu)`.
    pub fn value(&self, x: &[Complex64]) -> f64 {
        log_sum_exp(&self.exponents(x), self.nu)
    }

    /// Largest exponent, the worst-case pair.
    pub fn worst(&self, x: &[Complex64]) -> f64 {
        self.exponents(x)
            .into_iter()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Negated value and descent direction.
    fn eval(&self, x: &[Complex64]) -> (f64, Vec<Complex64>) {
        let (mut u, mut aux) = (Vec::new(), Vec::new());
        self.obj.evaluate(x, &mut u, &mut aux);
        let a = self.exponents_of(&u);
        let amax = a.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        // d(-d_p) = -g_p / d_p
        let coef: Vec<f64> = a
            .iter()
            .zip(&u)
            .map(|(&ap, &up)| {
                let w = ((ap - amax) / self.nu).exp();
                z += w;
                if up > 0.0 && w > 1e-300 {
                    w / up.sqrt()
                } else {
                    0.0
                }
            })
            .collect();
        let mut grad = vec![Complex64::new(0.0, 0.0); self.obj.q];
        self.obj.add_gradient(x, &aux, &coef, &mut grad);
        for g in &mut grad {
            *g /= z;
        }
        (-(amax + self.nu * z.ln()), grad)
    }
}

/// `nu ln sum exp(v / nu)`, stable for any spread of `v`.
pub fn log_sum_exp(values: &[f64], nu: f64) -> f64 {
    let m = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + nu
        * values
            .iter()
            .map(|v| ((v - m) / nu).exp())
            .sum::<f64>()
            .ln()
}

/// Minimizes the surrogate by projected descent. Returns iterations used.
pub(crate) fn descend(
    sur: &MseSurrogate<'_>,
    x: &mut Vec<Complex64>,
    opts: AscentOptions,
) -> usize {
    to_sphere(x);
    let mut budget = opts.max_iterations;
    climb(x, opts, 0.0, &mut budget, |z| sur.eval(z));
    opts.max_iterations - budget
}
