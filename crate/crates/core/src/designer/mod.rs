//! Max–min constellation design.
//!
//! A design is a vector `x` of `q` complex levels with `||x||^2 <= 1`; node
//! inputs at level `l` transmit `x[l]`, and a profile lands on `<a_i, x>`.
//! The designer maximizes the worst noise-weighted separation between
//! profiles whose function values differ.

mod lifting;
mod objective;
mod polish;
mod smoothed;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::channel::FadingModel;
use crate::error::{invalid, Error, Result};
use crate::function_model::{diff_dot, AggregationKind, ConstraintSet};
use crate::metrics::DistanceMetric;

use objective::Objective;
use polish::PolishOptions;
use smoothed::{AscentOptions, MseSurrogate};

pub use smoothed::log_sum_exp;

/// Slack allowed on the unit power budget.
pub const POWER_TOLERANCE: f64 = 1e-9;
/// Default minimum separation certifying a design.
pub const FEASIBILITY_TOL: f64 = 1e-6;

/// Per-level transmit symbols.
#[derive(Debug, Clone, PartialEq)]
pub struct ModulationVector {
    x: Vec<Complex64>,
}

impl AsRef<[Complex64]> for ModulationVector {
    fn as_ref(&self) -> &[Complex64] {
        &self.x
    }
}

impl ModulationVector {
    pub fn new(x: Vec<Complex64>) -> Result<Self> {
        if x.is_empty() {
            return Err(invalid("x", "need at least one level"));
        }
        if x.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(invalid("x", "entries must be finite"));
        }
        let power: f64 = x.iter().map(Complex64::norm_sqr).sum();
        if power > 1.0 + POWER_TOLERANCE {
            return Err(invalid("x", format!("power {power} exceeds 1")));
        }
        Ok(Self { x })
    }

    /// Unit vector on level `index`.
    pub fn basis(q: usize, index: usize) -> Self {
        let mut x = vec![Complex64::new(0.0, 0.0); q];
        x[index] = Complex64::new(1.0, 0.0);
        Self { x }
    }

    pub fn from_pairs(pairs: &[[f64; 2]]) -> Result<Self> {
        Self::new(pairs.iter().map(|p| Complex64::new(p[0], p[1])).collect())
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.x
    }

    pub fn q(&self) -> usize {
        self.x.len()
    }

    pub fn power(&self) -> f64 {
        self.x.iter().map(Complex64::norm_sqr).sum()
    }

    pub fn to_pairs(&self) -> Vec<[f64; 2]> {
        self.x.iter().map(|v| [v.re, v.im]).collect()
    }

    /// Rotates so the largest-magnitude entry (first on ties) is real and
    /// non-negative.
    pub fn canonicalized(&self) -> Self {
        let mut lead = 0;
        for (i, v) in self.x.iter().enumerate() {
            if v.norm() > self.x[lead].norm() {
                lead = i;
            }
        }
        let pivot = self.x[lead];
        if pivot.norm() == 0.0 {
            return self.clone();
        }
        let rot = pivot.conj() / pivot.norm();
        let mut x: Vec<Complex64> = self.x.iter().map(|v| v * rot).collect();
        x[lead] = Complex64::new(pivot.norm(), 0.0);
        Self { x }
    }

    /// Two whitespace-separated columns, `re im`, one level per line.
    pub fn to_columns(&self) -> String {
        self.x
            .iter()
            .map(|v| format!("{} {}\n", v.re, v.im))
            .collect()
    }

    /// Parses [`Self::to_columns`] output with [`parse_columns`].
    pub fn from_columns(text: &str) -> Result<Self> {
        Self::new(parse_columns(text)?)
    }
}

/// Complex points from `re im` (or `re,im`, or a lone `re`) lines, without
/// any power check; `#` lines are skipped.
pub fn parse_columns(text: &str) -> Result<Vec<Complex64>> {
    let mut x = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .collect();
        let parse = |s: &str| {
            s.parse::<f64>()
                .map_err(|e| invalid("constellation", format!("line {}: {e}", n + 1)))
        };
        match cols.as_slice() {
            [re] => x.push(Complex64::new(parse(re)?, 0.0)),
            [re, im] => x.push(Complex64::new(parse(re)?, parse(im)?)),
            _ => {
                return Err(invalid(
                    "constellation",
                    format!("line {}: expected 1 or 2 columns", n + 1),
                ))
            }
        }
    }
    Ok(x)
}

#[derive(Debug, Clone)]
pub struct DesignProblem {
    pub constraints: ConstraintSet,
    pub metric: DistanceMetric,
    pub fading: Option<FadingModel>,
    /// Power on the value gap `|f_i - f_j|` in the threshold.
    pub gap_exponent: f64,
}

impl DesignProblem {
    pub fn new(constraints: ConstraintSet, metric: DistanceMetric) -> Self {
        Self {
            constraints,
            metric,
            fading: None,
            gap_exponent: 2.0,
        }
    }

    pub fn with_fading(mut self, fading: FadingModel) -> Self {
        self.fading = Some(fading);
        self
    }

    pub fn with_gap_exponent(mut self, e: f64) -> Self {
        self.gap_exponent = e;
        self
    }

    fn validate(&self) -> Result<()> {
        self.metric.validate()?;
        if let DistanceMetric::GndExp { beta, .. } = self.metric {
            if beta < 1.0 {
                return Err(invalid(
                    "beta",
                    format!("design needs beta >= 1 (metric not monotone below), got {beta}"),
                ));
            }
        }
        if !(self.gap_exponent.is_finite() && self.gap_exponent > 0.0) {
            return Err(invalid(
                "gap_exponent",
                format!("must be finite and > 0, got {}", self.gap_exponent),
            ));
        }
        if let Some(f) = &self.fading {
            if f.nodes() != self.constraints.k() {
                return Err(Error::DimensionMismatch {
                    expected: self.constraints.k(),
                    got: f.nodes(),
                });
            }
        }
        Ok(())
    }

    fn objective(&self, merge: bool) -> Result<Objective> {
        let fading = self.fading.as_ref().filter(|f| !f.inversion);
        Objective::compile(
            &self.constraints,
            self.metric,
            self.gap_exponent,
            fading,
            merge,
        )
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub restarts: usize,
    pub seed: u64,
    /// First-order iterations per restart, across all temperatures.
    pub max_iterations: usize,
    pub stall_window: usize,
    pub stall_tol: f64,
    pub feasibility_tol: f64,
    pub polish: bool,
    pub polish_iterations: usize,
    pub lifting: bool,
    pub lifting_iterations: usize,
    pub rounding_draws: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            restarts: 32,
            seed: 0,
            max_iterations: 20_000,
            stall_window: 50,
            stall_tol: 1e-10,
            feasibility_tol: FEASIBILITY_TOL,
            polish: true,
            polish_iterations: 200,
            lifting: false,
            lifting_iterations: 600,
            rounding_draws: 64,
        }
    }
}

impl SolverConfig {
    fn validate(&self) -> Result<()> {
        if self.restarts == 0 && !self.lifting {
            return Err(invalid("restarts", "need at least one restart or lifting"));
        }
        if !(self.feasibility_tol >= 0.0) {
            return Err(invalid("feasibility_tol", "must be >= 0"));
        }
        if self.stall_window == 0 {
            return Err(invalid("stall_window", "must be >= 1"));
        }
        Ok(())
    }

    fn ascent(&self) -> AscentOptions {
        AscentOptions {
            max_iterations: self.max_iterations,
            stall_window: self.stall_window,
            stall_tol: self.stall_tol,
        }
    }
}

/// How [`DesignResult::margin`] relates to the worst pair score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarginKind {
    /// `D_p >= lambda * gap_p^e` for every pair.
    Lambda,
    /// `|r_i - r_j|^2 >= 4 sigma e ln gap_p + t` for every pair.
    Additive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverReport {
    pub iterations: usize,
    pub restarts: usize,
    pub final_objective: f64,
    pub method: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignResult {
    pub x: ModulationVector,
    pub margin: f64,
    pub margin_kind: MarginKind,
    /// Smallest pair score `ln D_p - e ln gap_p`.
    pub log_margin: f64,
    pub feasible: bool,
    /// Per constraint pair, in the units of `margin_kind`: score excess over
    /// the worst pair for `Lambda`, `|r_i - r_j|^2 - 4 sigma e ln gap - t`
    /// for `Additive`.
    pub per_pair_slack: Vec<f64>,
    pub report: SolverReport,
    pub seed: u64,
    pub metric: DistanceMetric,
    pub gap_exponent: f64,
}

/// JSON has no infinities: they are written as the strings `"inf"` and
/// `"-inf"`, NaN as `null`.
fn encode_real(v: f64) -> Value {
    match v {
        f64::INFINITY => json!("inf"),
        f64::NEG_INFINITY => json!("-inf"),
        v if v.is_nan() => Value::Null,
        v => json!(v),
    }
}

fn decode_real(v: &Value) -> Option<f64> {
    match v {
        Value::Null => Some(f64::NAN),
        Value::String(s) if s == "inf" => Some(f64::INFINITY),
        Value::String(s) if s == "-inf" => Some(f64::NEG_INFINITY),
        v => v.as_f64(),
    }
}

impl DesignResult {
    pub fn to_json(&self) -> Value {
        json!({
            "x": self.x.to_pairs(),
            "margin": encode_real(self.margin),
            "margin_kind": self.margin_kind,
            "log_margin": encode_real(self.log_margin),
            "feasible": self.feasible,
            "method": self.report.method,
            "seed": self.seed,
            "iterations": self.report.iterations,
            "restarts": self.report.restarts,
            "final_objective": encode_real(self.report.final_objective),
            "metric": self.metric,
            "gap_exponent": self.gap_exponent,
            "per_pair_slack": self.per_pair_slack.iter().map(|&v| encode_real(v)).collect::<Vec<_>>(),
        })
    }

    /// Inverse of [`Self::to_json`].
    pub fn from_json(value: &Value) -> std::result::Result<Self, String> {
        let obj = value.as_object().ok_or("design result must be an object")?;
        let field = |k: &str| obj.get(k).ok_or_else(|| format!("missing key `{k}`"));
        let num = |k: &str| -> std::result::Result<f64, String> {
            decode_real(field(k)?).ok_or_else(|| format!("`{k}` must be a number"))
        };
        let pairs: Vec<[f64; 2]> =
            serde_json::from_value(field("x")?.clone()).map_err(|e| format!("`x`: {e}"))?;
        let x = ModulationVector::from_pairs(&pairs).map_err(|e| e.to_string())?;
        let parse = |k: &str| field(k).cloned();
        Ok(Self {
            x,
            margin: num("margin")?,
            margin_kind: serde_json::from_value(parse("margin_kind")?)
                .map_err(|e| format!("`margin_kind`: {e}"))?,
            log_margin: num("log_margin")?,
            feasible: field("feasible")?
                .as_bool()
                .ok_or("`feasible` must be a bool")?,
            per_pair_slack: field("per_pair_slack")?
                .as_array()
                .ok_or("`per_pair_slack` must be an array")?
                .iter()
                .map(|v| decode_real(v).ok_or("`per_pair_slack` must hold numbers"))
                .collect::<std::result::Result<_, _>>()?,
            report: SolverReport {
                iterations: field("iterations")?
                    .as_u64()
                    .ok_or("`iterations` must be an integer")? as usize,
                restarts: field("restarts")?
                    .as_u64()
                    .ok_or("`restarts` must be an integer")? as usize,
                final_objective: num("final_objective")?,
                method: field("method")?
                    .as_str()
                    .ok_or("`method` must be a string")?
                    .to_string(),
            },
            seed: field("seed")?.as_u64().ok_or("`seed` must be an integer")?,
            metric: serde_json::from_value(parse("metric")?)
                .map_err(|e| format!("`metric`: {e}"))?,
            gap_exponent: num("gap_exponent")?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityReport {
    pub feasible: bool,
    /// `min |<b_ij, x>|`; infinite when there are no constraints.
    pub min_separation: f64,
    pub separations: Vec<f64>,
}

/// Checks that every constrained pair of profiles lands more than `tol`
/// apart. Any vector is accepted, including reference constellations above
/// the power budget.
pub fn verify_feasibility<X: AsRef<[Complex64]> + ?Sized>(
    x: &X,
    constraints: &ConstraintSet,
    tol: f64,
) -> Result<FeasibilityReport> {
    let x = x.as_ref();
    if x.len() != constraints.q() {
        return Err(Error::DimensionMismatch {
            expected: constraints.q(),
            got: x.len(),
        });
    }
    let separations: Vec<f64> = constraints
        .pairs()
        .iter()
        .map(|p| diff_dot(&p.diff, x).norm())
        .collect();
    let min_separation = separations.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(FeasibilityReport {
        feasible: separations.iter().all(|&d| d > tol),
        min_separation,
        separations,
    })
}

fn margin_of(metric: &DistanceMetric, log_margin: f64) -> (f64, MarginKind) {
    match *metric {
        DistanceMetric::AwgnExp { sigma } => (4.0 * sigma * log_margin, MarginKind::Additive),
        _ => (log_margin.exp(), MarginKind::Lambda),
    }
}

/// Squared separations of every original pair, honoring fading.
fn pair_separations(problem: &DesignProblem, x: &[Complex64]) -> Result<Vec<f64>> {
    match problem.fading.as_ref().filter(|f| !f.inversion) {
        Some(_) => {
            let obj = problem.objective(false)?;
            Ok((0..obj.len()).map(|p| obj.separation(p, x)).collect())
        }
        None => Ok(problem
            .constraints
            .pairs()
            .iter()
            .map(|p| diff_dot(&p.diff, x).norm_sqr())
            .collect()),
    }
}

fn finalize(
    problem: &DesignProblem,
    x: ModulationVector,
    tol: f64,
    report: SolverReport,
    seed: u64,
) -> Result<DesignResult> {
    let u = pair_separations(problem, x.as_slice())?;
    let e = problem.gap_exponent;
    let scores: Vec<f64> = u
        .iter()
        .zip(problem.constraints.pairs())
        .map(|(&u, p)| problem.metric.log_of_squared(u) - e * p.gap.ln())
        .collect();
    let log_margin = scores.iter().copied().fold(f64::INFINITY, f64::min);
    let (margin, margin_kind) = margin_of(&problem.metric, log_margin);
    let unit = match problem.metric {
        DistanceMetric::AwgnExp { sigma } => 4.0 * sigma,
        _ => 1.0,
    };
    let per_pair_slack = scores.iter().map(|s| unit * (s - log_margin)).collect();
    let feasible = u.iter().all(|&v| v.sqrt() > tol);
    Ok(DesignResult {
        x,
        margin,
        margin_kind,
        log_margin,
        feasible,
        per_pair_slack,
        report,
        seed,
        metric: problem.metric,
        gap_exponent: problem.gap_exponent,
    })
}

/// Scores a given modulation vector against the problem without optimizing
/// it, as [`design`] would report it.
pub fn evaluate_design(
    problem: &DesignProblem,
    x: &ModulationVector,
    tol: f64,
) -> Result<DesignResult> {
    problem.validate()?;
    if x.q() != problem.constraints.q() {
        return Err(Error::DimensionMismatch {
            expected: problem.constraints.q(),
            got: x.q(),
        });
    }
    if problem.constraints.is_empty() {
        let mut r = constant_design(problem, 0, "frozen");
        r.x = x.clone();
        return Ok(r);
    }
    let report = SolverReport {
        iterations: 0,
        restarts: 0,
        final_objective: f64::NAN,
        method: "frozen".into(),
    };
    let mut r = finalize(problem, x.clone(), tol, report, 0)?;
    r.report.final_objective = r.log_margin;
    Ok(r)
}

/// The scaled ramp `[0, 1, ..., q-1] / ||.||`, optimal-by-construction for
/// the sum of levels `0..q-1` under the Euclidean metric: every pair meets
/// `|r_i - r_j|^2 = gap^2 / ||ramp||^2`.
pub fn pam_oracle(constraints: &ConstraintSet) -> Result<DesignResult> {
    let q = constraints.q();
    let source = constraints
        .source()
        .ok_or_else(|| Error::WrongFunction("constraints carry no function".into()))?;
    if source.kind != AggregationKind::Sum {
        return Err(Error::WrongFunction(format!(
            "expected sum, got {}",
            source.kind
        )));
    }
    let ramp: Vec<f64> = (0..q).map(|l| l as f64).collect();
    if source.levels != ramp {
        return Err(Error::WrongFunction(
            "sum over levels other than 0..q-1".into(),
        ));
    }
    let norm2: f64 = ramp.iter().map(|v| v * v).sum();
    let x = ModulationVector::new(
        ramp.iter()
            .map(|&v| Complex64::new(v / norm2.sqrt(), 0.0))
            .collect(),
    )?;
    let problem = DesignProblem::new(constraints.clone(), DistanceMetric::Euclidean);
    let mut result = finalize(
        &problem,
        x,
        FEASIBILITY_TOL,
        SolverReport {
            iterations: 0,
            restarts: 0,
            final_objective: 1.0 / norm2,
            method: "pam".into(),
        },
        0,
    )?;
    result.margin = 1.0 / norm2;
    result.log_margin = -norm2.ln();
    result.feasible = true;
    Ok(result)
}

fn constant_design(problem: &DesignProblem, seed: u64, method: &str) -> DesignResult {
    DesignResult {
        x: ModulationVector::basis(problem.constraints.q(), 0),
        margin: f64::INFINITY,
        margin_kind: margin_of(&problem.metric, 0.0).1,
        log_margin: f64::INFINITY,
        feasible: true,
        per_pair_slack: Vec::new(),
        report: SolverReport {
            iterations: 0,
            restarts: 0,
            final_objective: f64::INFINITY,
            method: method.into(),
        },
        seed,
        metric: problem.metric,
        gap_exponent: problem.gap_exponent,
    }
}

fn restart_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn gaussian_start(q: usize, rng: &mut ChaCha8Rng) -> Vec<Complex64> {
    (0..q)
        .map(|_| {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            Complex64::new(re, im)
        })
        .collect()
}

struct Candidate {
    x: Vec<Complex64>,
    score: f64,
    power: f64,
    iterations: usize,
    method: &'static str,
}

fn polish_options(solver: &SolverConfig) -> PolishOptions {
    PolishOptions {
        max_iterations: solver.polish_iterations,
        tol: solver.stall_tol,
    }
}

/// Best-effort maximization of the worst pair score over the unit ball.
///
/// Runs `restarts` independent smoothed ascents (plus the lifted relaxation
/// when enabled), refines each by successive convex steps, and returns the
/// verified candidate with the largest margin.
pub fn design(problem: &DesignProblem, solver: &SolverConfig) -> Result<DesignResult> {
    problem.validate()?;
    solver.validate()?;
    if problem.constraints.is_empty() {
        return Ok(constant_design(problem, solver.seed, "constant"));
    }
    let obj = problem.objective(true)?;
    let q = obj.q;

    let run = |x: &mut Vec<Complex64>| {
        let mut it = smoothed::ascend(&obj, x, solver.ascent(), solver.polish);
        if solver.polish {
            it += polish::polish(&obj, x, polish_options(solver));
        }
        it
    };

    let mut candidates: Vec<Candidate> = (0..solver.restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = restart_rng(solver.seed, r as u64);
            let mut x = gaussian_start(q, &mut rng);
            let iterations = run(&mut x);
            Candidate {
                score: obj.min_score(&x),
                power: objective::norm_sqr(&x),
                x,
                iterations,
                method: if solver.polish {
                    "smoothed+sca"
                } else {
                    "smoothed"
                },
            }
        })
        .collect();
    if solver.lifting {
        let mut rng = restart_rng(solver.seed, solver.restarts as u64);
        let (mut x, mut iterations) = lifting::lift_and_round(
            &obj,
            &mut rng,
            solver.lifting_iterations,
            solver.rounding_draws,
        );
        if solver.polish {
            iterations += polish::polish(&obj, &mut x, polish_options(solver));
        }
        candidates.push(Candidate {
            score: obj.min_score(&x),
            power: objective::norm_sqr(&x),
            x,
            iterations,
            method: if solver.polish {
                "lifting+sca"
            } else {
                "lifting"
            },
        });
    }

    let total_iterations = candidates.iter().map(|c| c.iterations).sum();
    if candidates
        .iter()
        .all(|c| c.x.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()))
    {
        return Err(Error::SolverDiverged);
    }

    let mut best: Option<(DesignResult, f64, &Candidate)> = None;
    for cand in &candidates {
        if cand
            .x
            .iter()
            .any(|v| !v.re.is_finite() || !v.im.is_finite())
        {
            continue;
        }
        let Ok(x) = ModulationVector::new(cand.x.clone()) else {
            continue;
        };
        let report = SolverReport {
            iterations: total_iterations,
            restarts: solver.restarts,
            final_objective: cand.score,
            method: cand.method.into(),
        };
        let result = finalize(
            problem,
            x.canonicalized(),
            solver.feasibility_tol,
            report,
            solver.seed,
        )?;
        if !result.feasible {
            continue;
        }
        let better = match &best {
            None => true,
            Some((_, _, b)) => {
                cand.score > b.score || (cand.score == b.score && cand.power < b.power)
            }
        };
        if better {
            best = Some((result, cand.score, cand));
        }
    }
    best.map(|(r, _, _)| r).ok_or(Error::Infeasible)
}

/// Value of the smoothed mean-squared-error surrogate at `x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurrogateValue {
    /// `nu ln sum_p exp(A_p / nu)` with `A_p = -|r_i - r_j| + 2 nu ln gap_p`.
    pub value: f64,
    /// `max_p A_p`.
    pub worst: f64,
    pub pairs: usize,
}

pub fn mse_surrogate(
    problem: &DesignProblem,
    x: &ModulationVector,
    nu: f64,
) -> Result<SurrogateValue> {
    if !(nu.is_finite() && nu > 0.0) {
        return Err(invalid("nu", format!("must be finite and > 0, got {nu}")));
    }
    if x.q() != problem.constraints.q() {
        return Err(Error::DimensionMismatch {
            expected: problem.constraints.q(),
            got: x.q(),
        });
    }
    let obj = problem.objective(false)?;
    let sur = MseSurrogate { obj: &obj, nu };
    Ok(SurrogateValue {
        value: sur.value(x.as_slice()),
        worst: sur.worst(x.as_slice()),
        pairs: obj.len(),
    })
}

/// Minimizes the smoothed mean-squared-error surrogate
/// `nu ln sum_p exp((-|r_i - r_j| + 2 nu ln gap_p) / nu)` by projected
/// descent from `solver.restarts` random starts.
///
/// The returned margin is measured under the problem's own metric; the
/// surrogate value is in `report.final_objective`.
pub fn smoothed_mse_design(
    problem: &DesignProblem,
    nu: f64,
    solver: &SolverConfig,
) -> Result<DesignResult> {
    problem.validate()?;
    solver.validate()?;
    if !(nu.is_finite() && nu > 0.0) {
        return Err(invalid("nu", format!("must be finite and > 0, got {nu}")));
    }
    if problem.constraints.is_empty() {
        return Ok(constant_design(problem, solver.seed, "surrogate"));
    }
    let obj = problem.objective(false)?;
    let sur = MseSurrogate { obj: &obj, nu };
    let runs: Vec<(Vec<Complex64>, f64, usize)> = (0..solver.restarts.max(1))
        .into_par_iter()
        .map(|r| {
            let mut rng = restart_rng(solver.seed, r as u64);
            let mut x = gaussian_start(obj.q, &mut rng);
            let it = smoothed::descend(&sur, &mut x, solver.ascent());
            let v = sur.value(&x);
            (x, v, it)
        })
        .collect();
    let iterations = runs.iter().map(|r| r.2).sum();
    let mut best: Option<&(Vec<Complex64>, f64, usize)> = None;
    for run in &runs {
        if !run.1.is_finite() {
            continue;
        }
        if best.is_none_or(|b| run.1 < b.1) {
            best = Some(run);
        }
    }
    let (x, value, _) = best.ok_or(Error::SolverDiverged)?;
    let x = ModulationVector::new(x.clone())?.canonicalized();
    finalize(
        problem,
        x,
        solver.feasibility_tol,
        SolverReport {
            iterations,
            restarts: solver.restarts,
            final_objective: *value,
            method: "surrogate".into(),
        },
        solver.seed,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::function_model::{AggregationFunction, QuantizedAlphabet, DEFAULT_PROFILE_CAP};

    fn set(func: AggregationFunction, k: usize, q: usize) -> ConstraintSet {
        ConstraintSet::from_function(
            &func,
            k,
            &QuantizedAlphabet::uniform(q),
            DEFAULT_PROFILE_CAP,
        )
        .unwrap()
    }

    fn quick() -> SolverConfig {
        SolverConfig {
            restarts: 4,
            ..SolverConfig::default()
        }
    }

    #[test]
    fn bpsk_verifies_for_max() {
        let x = [Complex64::new(-1.0, 0.0), Complex64::new(1.0, 0.0)];
        let rep = verify_feasibility(&x[..], &set(AggregationFunction::max(), 2, 2), 1e-6).unwrap();
        assert!(rep.feasible);
        let mut seps = rep.separations.clone();
        seps.sort_by(f64::total_cmp);
        assert_eq!(seps, vec![2.0, 4.0]);
    }

    #[test]
    fn zero_vector_is_infeasible() {
        let x = ModulationVector::new(vec![Complex64::new(0.0, 0.0); 3]).unwrap();
        let rep = verify_feasibility(&x, &set(AggregationFunction::sum(), 2, 3), 1e-6).unwrap();
        assert!(!rep.feasible);
        assert_eq!(rep.min_separation, 0.0);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let x = ModulationVector::basis(2, 0);
        assert!(matches!(
            verify_feasibility(&x, &set(AggregationFunction::sum(), 2, 3), 1e-6),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn power_budget_is_enforced() {
        assert!(ModulationVector::from_pairs(&[[1.0, 0.0], [0.1, 0.0]]).is_err());
        assert!(ModulationVector::from_pairs(&[[1.0 + 1e-10, 0.0]]).is_ok());
    }

    #[test]
    fn canonical_phase_makes_lead_real() {
        let x = ModulationVector::from_pairs(&[[0.1, 0.2], [0.0, -0.8]]).unwrap();
        let c = x.canonicalized();
        assert_eq!(c.as_slice()[1], Complex64::new(0.8, 0.0));
        assert!((c.power() - x.power()).abs() < 1e-15);
    }

    #[test]
    fn columns_round_trip() {
        let x = ModulationVector::from_pairs(&[[0.1, -0.2], [1.0 / 3.0, 0.5]]).unwrap();
        assert_eq!(ModulationVector::from_columns(&x.to_columns()).unwrap(), x);
    }

    #[test]
    fn pam_oracle_small_cases() {
        let r = pam_oracle(&set(AggregationFunction::sum(), 2, 2)).unwrap();
        assert_eq!(r.margin, 1.0);
        assert_eq!(r.x.to_pairs(), vec![[0.0, 0.0], [1.0, 0.0]]);
        let r = pam_oracle(&set(AggregationFunction::sum(), 3, 4)).unwrap();
        assert_eq!(r.margin, 1.0 / 14.0);
        assert!(r.feasible);
    }

    #[test]
    fn pam_oracle_rejects_other_functions() {
        assert!(matches!(
            pam_oracle(&set(AggregationFunction::max(), 2, 3)),
            Err(Error::WrongFunction(_))
        ));
    }

    #[test]
    fn constant_function_gets_basis_vector() {
        let s = set(AggregationFunction::custom(|_| 1.0, true), 2, 3);
        let r = design(&DesignProblem::new(s, DistanceMetric::Euclidean), &quick()).unwrap();
        assert_eq!(r.x, ModulationVector::basis(3, 0));
        assert!(r.margin.is_infinite() && r.feasible);
    }

    #[test]
    fn gnd_below_one_is_rejected() {
        let p = DesignProblem::new(
            set(AggregationFunction::sum(), 2, 2),
            DistanceMetric::GndExp {
                alpha: 1.0,
                beta: 0.5,
            },
        );
        assert!(matches!(
            design(&p, &quick()),
            Err(Error::InvalidParam { .. })
        ));
    }

    #[test]
    fn design_beats_pam_on_small_sum() {
        let s = set(AggregationFunction::sum(), 2, 4);
        let r = design(&DesignProblem::new(s, DistanceMetric::Euclidean), &quick()).unwrap();
        assert!(r.margin >= 1.0 / 14.0 - 1e-6, "{}", r.margin);
        assert!(r.x.power() <= 1.0 + POWER_TOLERANCE);
        assert!(r.per_pair_slack.iter().all(|&s| s >= -1e-6));
    }

    #[test]
    fn result_json_round_trip() {
        let s = set(AggregationFunction::sum(), 2, 3);
        let r = design(
            &DesignProblem::new(s, DistanceMetric::AwgnExp { sigma: 0.1 }),
            &quick(),
        )
        .unwrap();
        let back = DesignResult::from_json(&r.to_json()).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn infinite_fields_round_trip() {
        let s = set(AggregationFunction::max(), 2, 4);
        let a = 0.25;
        let qpsk = ModulationVector::from_pairs(&[[a, a], [-a, a], [-a, -a], [a, -a]]).unwrap();
        let r = evaluate_design(
            &DesignProblem::new(s, DistanceMetric::Euclidean),
            &qpsk,
            1e-6,
        )
        .unwrap();
        assert!(!r.feasible);
        assert_eq!(r.log_margin, f64::NEG_INFINITY);
        let back = DesignResult::from_json(&r.to_json()).unwrap();
        assert_eq!(back.log_margin, f64::NEG_INFINITY);
        assert_eq!(back.margin, 0.0);
        assert!(!back.feasible);
    }
}
