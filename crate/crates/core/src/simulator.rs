//! Monte-Carlo estimates of end-to-end computation error.

use num_complex::Complex64;
use rand::distributions::WeightedIndex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Distribution;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{transmit, FadingModel, NoiseModel};
use crate::designer::{DesignResult, ModulationVector};
use crate::error::{invalid, Result};
use crate::function_model::InputProfile;
use crate::receiver::{build_codebook, decode_with, Codebook, DecodeRule};

/// Trials per random substream.
const CHUNK: usize = 1024;
/// Half-width of the confidence band, in standard errors.
pub const SIGNIFICANCE: f64 = 3.0;

/// How each trial picks the nodes' inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputLaw {
    /// Every profile equally likely.
    #[default]
    UniformProfiles,
    /// Every node draws its level independently and uniformly.
    UniformTuples,
}

#[derive(Debug, Clone)]
pub struct SimulationConfig {
    pub x: ModulationVector,
    pub profiles: Vec<InputProfile>,
    pub noise: NoiseModel,
    pub fading: Option<FadingModel>,
    pub trials: usize,
    pub seed: u64,
    pub input_law: InputLaw,
    pub rule: DecodeRule,
}

impl SimulationConfig {
    pub fn new(design: &DesignResult, profiles: Vec<InputProfile>, noise: NoiseModel) -> Self {
        Self {
            x: design.x.clone(),
            profiles,
            noise,
            fading: None,
            trials: 10_000,
            seed: 0,
            input_law: InputLaw::default(),
            rule: DecodeRule::default(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(invalid("trials", "need at least one trial"));
        }
        if self.profiles.is_empty() {
            return Err(invalid("profiles", "need at least one profile"));
        }
        self.noise.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorEstimate {
    pub mse: f64,
    pub mae: f64,
    /// Standard error of `mse`.
    pub stderr: f64,
    pub mae_stderr: f64,
    pub trials: usize,
}

#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    sq: f64,
    sq2: f64,
    abs: f64,
    abs2: f64,
}

impl Moments {
    fn add(self, o: Self) -> Self {
        Self {
            sq: self.sq + o.sq,
            sq2: self.sq2 + o.sq2,
            abs: self.abs + o.abs,
            abs2: self.abs2 + o.abs2,
        }
    }
}

/// Pairwise sum: the grouping depends only on the length, so totals are
/// reproducible whatever the thread count.
fn pairwise(parts: &[Moments]) -> Moments {
    match parts.len() {
        0 => Moments::default(),
        1 => parts[0],
        n => pairwise(&parts[..n / 2]).add(pairwise(&parts[n / 2..])),
    }
}

fn tuple_weights(profiles: &[InputProfile]) -> Vec<f64> {
    // multinomial coefficients K! / prod c_l!, in log space
    let ln_fact = |n: u32| (1..=n).map(|v| f64::from(v).ln()).sum::<f64>();
    let logs: Vec<f64> = profiles
        .iter()
        .map(|p| ln_fact(p.k() as u32) - p.counts.iter().map(|&c| ln_fact(c)).sum::<f64>())
        .collect();
    let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    logs.iter().map(|l| (l - top).exp()).collect()
}

fn substream(seed: u64, point: u64, chunk: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((point << 32) | chunk);
    rng
}

fn estimate_at(config: &SimulationConfig, book: &Codebook, point: u64) -> Result<ErrorEstimate> {
    let weights = match config.input_law {
        InputLaw::UniformProfiles => None,
        InputLaw::UniformTuples => Some(
            WeightedIndex::new(tuple_weights(&config.profiles))
                .map_err(|e| invalid("profiles", e.to_string()))?,
        ),
    };
    let chunks = config.trials.div_ceil(CHUNK);
    let parts: Vec<Moments> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = substream(config.seed, point, c as u64);
            let n = CHUNK.min(config.trials - c * CHUNK);
            let mut m = Moments::default();
            for _ in 0..n {
                let idx = match &weights {
                    None => rng.gen_range(0..config.profiles.len()),
                    Some(w) => w.sample(&mut rng),
                };
                let profile = &config.profiles[idx];
                let y = transmit(
                    config.x.as_slice(),
                    profile,
                    &config.noise,
                    config.fading.as_ref(),
                    &mut rng,
                )?;
                let (f_hat, _) = decode_with(book, y, &config.noise, config.rule)?;
                let e = f_hat - profile.value;
                let (sq, ab) = (e * e, e.abs());
                m = m.add(Moments {
                    sq,
                    sq2: sq * sq,
                    abs: ab,
                    abs2: ab * ab,
                });
            }
            Ok(m)
        })
        .collect::<Result<Vec<_>>>()?;
    let total = pairwise(&parts);
    let n = config.trials as f64;
    let stderr = |s: f64, s2: f64| {
        if config.trials < 2 {
            return f64::INFINITY;
        }
        let mean = s / n;
        ((s2 / n - mean * mean).max(0.0) / (n - 1.0)).sqrt()
    };
    Ok(ErrorEstimate {
        mse: total.sq / n,
        mae: total.abs / n,
        stderr: stderr(total.sq, total.sq2),
        mae_stderr: stderr(total.abs, total.abs2),
        trials: config.trials,
    })
}

/// Mean squared and absolute error of the decoded value over
/// `config.trials` channel uses; bit-identical for a fixed seed.
pub fn run_mse(config: &SimulationConfig) -> Result<ErrorEstimate> {
    config.validate()?;
    let book = build_codebook(&config.x, &config.profiles)?;
    estimate_at(config, &book, 0)
}

/// Which noise parameter a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    /// Gaussian standard deviation.
    Sigma,
    /// Cauchy scale.
    Gamma,
    /// GND or Laplace scale.
    Alpha,
}

impl SweepAxis {
    pub fn for_noise(noise: &NoiseModel) -> Self {
        match noise {
            NoiseModel::ComplexGaussian { .. } => SweepAxis::Sigma,
            NoiseModel::ComplexCauchy { .. } => SweepAxis::Gamma,
            NoiseModel::Gnd { .. } | NoiseModel::Laplace { .. } => SweepAxis::Alpha,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SweepAxis::Sigma => "sigma",
            SweepAxis::Gamma => "gamma",
            SweepAxis::Alpha => "alpha",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub axis: f64,
    /// Absent under infinite-variance noise.
    pub mse: Option<f64>,
    pub mse_stderr: Option<f64>,
    pub mse_db: Option<f64>,
    pub mae: f64,
    pub mae_stderr: f64,
    pub mae_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub axis: SweepAxis,
    pub points: Vec<SweepPoint>,
    /// MSE is suppressed: the noise has no finite variance.
    pub infinite_variance: bool,
}

impl SweepResult {
    /// The reported figure per point: MSE, or MAE under infinite variance.
    pub fn headline(&self) -> Vec<(f64, f64)> {
        self.points
            .iter()
            .map(|p| match (self.infinite_variance, p.mse, p.mse_stderr) {
                (false, Some(m), Some(s)) => (m, s),
                _ => (p.mae, p.mae_stderr),
            })
            .collect()
    }
}

/// `10 log10(v)`.
pub fn to_db(v: f64) -> f64 {
    10.0 * v.log10()
}

/// One estimate per grid value, each on its own random substreams; grid
/// point 0 reuses [`run_mse`]'s streams.
pub fn sweep(base: &SimulationConfig, axis: SweepAxis, grid: &[f64]) -> Result<SweepResult> {
    base.validate()?;
    if grid.is_empty() {
        return Err(invalid("grid", "need at least one point"));
    }
    if grid.iter().any(|g| !(g.is_finite() && *g >= 0.0)) {
        return Err(invalid("grid", "values must be finite and >= 0"));
    }
    if SweepAxis::for_noise(&base.noise) != axis {
        return Err(invalid(
            "axis",
            format!("{} does not scale {} noise", axis.name(), base.noise.tag()),
        ));
    }
    let mut sorted = grid.to_vec();
    sorted.sort_by(f64::total_cmp);
    let book = build_codebook(&base.x, &base.profiles)?;
    let infinite_variance = !base.noise.has_finite_variance();
    let mut points = Vec::with_capacity(sorted.len());
    for (i, &g) in sorted.iter().enumerate() {
        let mut cfg = base.clone();
        cfg.noise = base.noise.with_scale(g);
        let est = estimate_at(&cfg, &book, i as u64)?;
        let finite = !infinite_variance;
        points.push(SweepPoint {
            axis: g,
            mse: finite.then_some(est.mse),
            mse_stderr: finite.then_some(est.stderr),
            mse_db: finite.then(|| to_db(est.mse)),
            mae: est.mae,
            mae_stderr: est.mae_stderr,
            mae_db: to_db(est.mae),
        });
    }
    Ok(SweepResult {
        axis,
        points,
        infinite_variance,
    })
}

/// Ordering of designs at one grid point, best first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingRow {
    pub axis: f64,
    pub order: Vec<usize>,
    /// `separated[i]`: `order[i]` beats `order[i + 1]` with disjoint
    /// confidence bands; otherwise the two are tied.
    pub separated: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub sweeps: Vec<SweepResult>,
    pub rows: Vec<RankingRow>,
}

/// `a` below `b` with non-overlapping `SIGNIFICANCE`-stderr bands.
pub fn clearly_below(a: (f64, f64), b: (f64, f64)) -> bool {
    a.0 + SIGNIFICANCE * a.1 < b.0 - SIGNIFICANCE * b.1
}

/// Sweeps every design with the same noise, grid and seed, then ranks them
/// per grid point by MSE (MAE under infinite variance).
pub fn compare_designs(
    designs: &[DesignResult],
    base: &SimulationConfig,
    axis: SweepAxis,
    grid: &[f64],
) -> Result<Comparison> {
    let sweeps = designs
        .iter()
        .map(|d| {
            let mut cfg = base.clone();
            cfg.x = d.x.clone();
            sweep(&cfg, axis, grid)
        })
        .collect::<Result<Vec<_>>>()?;
    let heads: Vec<Vec<(f64, f64)>> = sweeps.iter().map(SweepResult::headline).collect();
    let n_points = sweeps.first().map_or(0, |s| s.points.len());
    let rows = (0..n_points)
        .map(|i| {
            let mut order: Vec<usize> = (0..designs.len()).collect();
            order.sort_by(|&a, &b| heads[a][i].0.total_cmp(&heads[b][i].0));
            let separated = order
                .windows(2)
                .map(|w| clearly_below(heads[w[0]][i], heads[w[1]][i]))
                .collect();
            RankingRow {
                axis: sweeps[0].points[i].axis,
                order,
                separated,
            }
        })
        .collect();
    Ok(Comparison { sweeps, rows })
}

/// Received points for every profile under the zero-noise channel, exposed
/// for oracle computations.
pub fn noiseless_points(x: &ModulationVector, profiles: &[InputProfile]) -> Result<Vec<Complex64>> {
    profiles
        .iter()
        .map(|p| crate::function_model::superimpose(x.as_slice(), p))
        .collect()
}
