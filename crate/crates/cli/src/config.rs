//! Run configuration: a versioned JSON document, validated before any
//! computation starts.

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use num_complex::Complex64;
use oaccomp::channel::covariance_from_csv;
use oaccomp::{
    AggregationFunction, AggregationKind, ConstraintSet, DecodeRule, DesignProblem, DistanceMetric,
    FadingGenerator, FadingModel, InputLaw, ModulationVector, NoiseModel, QuantizedAlphabet,
    SolverConfig, SweepAxis, DEFAULT_PROFILE_CAP,
};
use serde::Deserialize;

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;
/// Largest instance accepted without `--allow-blowup`.
pub const MAX_NODES: usize = 6;
pub const MAX_LEVELS: usize = 8;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    pub function: AggregationKind,
    pub k: usize,
    pub q: usize,
    /// Quantizer output values; `0..q-1` when absent.
    #[serde(default)]
    pub levels: Option<Vec<f64>>,
    #[serde(default = "default_metric")]
    pub metric: DistanceMetric,
    #[serde(default = "default_gap_exponent")]
    pub gap_exponent: f64,
    /// Extra designs for `sweep` and `compare`; the top-level metric is used
    /// when empty.
    #[serde(default)]
    pub designs: Vec<DesignSpec>,
    #[serde(default)]
    pub noise: Option<NoiseModel>,
    #[serde(default)]
    pub fading: Option<FadingSpec>,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub simulation: SimulationSpec,
    #[serde(default)]
    pub sweep: Option<SweepSpec>,
    /// A fixed modulation vector, `[re, im]` per level; skips the solver.
    #[serde(default)]
    pub constellation: Option<Vec<[f64; 2]>>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

fn default_metric() -> DistanceMetric {
    DistanceMetric::Euclidean
}

fn default_gap_exponent() -> f64 {
    2.0
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignSpec {
    pub label: String,
    pub metric: DistanceMetric,
    #[serde(default)]
    pub gap_exponent: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FadingSpec {
    pub generator: FadingGenerator,
    /// Rows of `[re, im]` cells; identity when absent.
    #[serde(default)]
    pub covariance: Option<Vec<Vec<[f64; 2]>>>,
    /// CSV file with the covariance, relative to the config file.
    #[serde(default)]
    pub covariance_file: Option<PathBuf>,
    #[serde(default)]
    pub inversion: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationSpec {
    pub trials: usize,
    pub input_law: InputLaw,
    pub rule: DecodeRule,
}

impl Default for SimulationSpec {
    fn default() -> Self {
        Self {
            trials: 10_000,
            input_law: InputLaw::UniformProfiles,
            rule: DecodeRule::MaximumLikelihood,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    #[serde(default)]
    pub axis: Option<SweepAxis>,
    #[serde(default)]
    pub grid: Option<Vec<f64>>,
    #[serde(default)]
    pub log_grid: Option<LogGrid>,
}

/// `points` values evenly spaced in `log10` from `from` to `to`.
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogGrid {
    pub from: f64,
    pub to: f64,
    pub points: usize,
}

impl LogGrid {
    pub fn values(&self) -> Vec<f64> {
        if self.points == 1 {
            return vec![self.from];
        }
        let (a, b) = (self.from.log10(), self.to.log10());
        let step = (b - a) / (self.points - 1) as f64;
        (0..self.points)
            .map(|i| 10f64.powf(a + step * i as f64))
            .collect()
    }
}

/// Command-line overrides applied on top of the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub trials: Option<usize>,
    pub out: Option<PathBuf>,
    pub allow_blowup: bool,
}

impl RunConfig {
    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        if let Some(file) = cfg.fading.as_mut().and_then(|f| f.covariance_file.as_mut()) {
            if file.is_relative() {
                *file = path.parent().unwrap_or(Path::new(".")).join(&*file);
            }
        }
        cfg.apply(overrides)?;
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            if path == "." {
                CliError::Config(format!("config: {}", e.inner()))
            } else {
                CliError::Config(format!("config key `{path}`: {}", e.inner()))
            }
        })?;
        if cfg.version != SCHEMA_VERSION {
            return Err(CliError::Config(format!(
                "config key `version`: expected {SCHEMA_VERSION}, got {}",
                cfg.version
            )));
        }
        Ok(cfg)
    }

    pub fn apply(&mut self, overrides: &Overrides) -> Result<(), CliError> {
        if let Some(seed) = overrides.seed {
            self.seed = seed;
        }
        if let Some(trials) = overrides.trials {
            self.simulation.trials = trials;
        }
        if let Some(out) = &overrides.out {
            self.output_dir = Some(out.clone());
        }
        self.solver.seed = self.seed;
        self.validate(overrides.allow_blowup)
    }

    fn validate(&self, allow_blowup: bool) -> Result<(), CliError> {
        let bad =
            |key: &str, msg: String| Err(CliError::Config(format!("config key `{key}`: {msg}")));
        if self.function == AggregationKind::Custom {
            return bad(
                "function",
                "custom functions cannot be configured from JSON".into(),
            );
        }
        if self.k == 0 {
            return bad("k", "need at least one node".into());
        }
        if self.q < 2 {
            return bad("q", "need at least two levels".into());
        }
        if !allow_blowup && (self.k > MAX_NODES || self.q > MAX_LEVELS) {
            return bad(
                "k",
                format!(
                    "K={} q={} exceeds K<={MAX_NODES}, q<={MAX_LEVELS}; pass --allow-blowup to run it",
                    self.k, self.q
                ),
            );
        }
        if let Some(levels) = &self.levels {
            if levels.len() != self.q {
                return bad(
                    "levels",
                    format!("expected {} values, got {}", self.q, levels.len()),
                );
            }
        }
        if !(self.gap_exponent.is_finite() && self.gap_exponent > 0.0) {
            return bad(
                "gap_exponent",
                format!("must be > 0, got {}", self.gap_exponent),
            );
        }
        for (i, d) in self.designs.iter().enumerate() {
            d.metric
                .validate()
                .map_err(|e| CliError::Config(format!("config key `designs[{i}].metric`: {e}")))?;
        }
        self.metric
            .validate()
            .map_err(|e| CliError::Config(format!("config key `metric`: {e}")))?;
        if let Some(noise) = &self.noise {
            noise
                .validate()
                .map_err(|e| CliError::Config(format!("config key `noise`: {e}")))?;
        }
        if self.simulation.trials == 0 {
            return bad("simulation.trials", "need at least one trial".into());
        }
        if let Some(c) = &self.constellation {
            if c.len() != self.q {
                return bad(
                    "constellation",
                    format!("expected {} levels, got {}", self.q, c.len()),
                );
            }
        }
        if let Some(s) = &self.sweep {
            match (&s.grid, &s.log_grid) {
                (Some(_), Some(_)) => {
                    return bad("sweep", "give either `grid` or `log_grid`".into())
                }
                (None, None) => return bad("sweep", "missing `grid` or `log_grid`".into()),
                (Some(g), None) if g.is_empty() => return bad("sweep.grid", "empty grid".into()),
                (None, Some(l)) if !(l.points >= 1 && l.from > 0.0 && l.to > 0.0) => {
                    return bad(
                        "sweep.log_grid",
                        "need points >= 1 and positive bounds".into(),
                    )
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn alphabet(&self) -> Result<QuantizedAlphabet, CliError> {
        match &self.levels {
            None => Ok(QuantizedAlphabet::uniform(self.q)),
            Some(l) => QuantizedAlphabet::new(l.clone())
                .map_err(|e| CliError::Config(format!("config key `levels`: {e}"))),
        }
    }

    pub fn constraints(&self) -> Result<ConstraintSet, CliError> {
        let func = AggregationFunction::new(self.function);
        Ok(ConstraintSet::from_function(
            &func,
            self.k,
            &self.alphabet()?,
            DEFAULT_PROFILE_CAP,
        )?)
    }

    pub fn fading_model(&self) -> Result<Option<FadingModel>, CliError> {
        let Some(spec) = &self.fading else {
            return Ok(None);
        };
        let model = match &spec.generator {
            FadingGenerator::Fixed { h } => {
                let h: Vec<Complex64> = h.iter().map(|c| Complex64::new(c[0], c[1])).collect();
                FadingModel::fixed(&h, spec.inversion)?
            }
            g => {
                let cov =
                    match (&spec.covariance, &spec.covariance_file) {
                        (Some(_), Some(_)) => return Err(CliError::Config(
                            "config key `fading`: give either `covariance` or `covariance_file`"
                                .into(),
                        )),
                        (Some(rows), None) => {
                            if rows.iter().any(|r| r.len() != rows.len()) {
                                return Err(CliError::Config(
                                    "config key `fading.covariance`: matrix must be square".into(),
                                ));
                            }
                            DMatrix::from_fn(rows.len(), rows.len(), |i, j| {
                                Complex64::new(rows[i][j][0], rows[i][j][1])
                            })
                        }
                        (None, Some(file)) => {
                            let text = std::fs::read_to_string(file).map_err(|e| {
                                CliError::Config(format!("cannot read {}: {e}", file.display()))
                            })?;
                            covariance_from_csv(&text)?
                        }
                        (None, None) => DMatrix::identity(self.k, self.k),
                    };
                FadingModel::new(cov, g.clone(), spec.inversion)?
            }
        };
        if model.nodes() != self.k {
            return Err(CliError::Config(format!(
                "config key `fading`: channel has {} nodes, expected {}",
                model.nodes(),
                self.k
            )));
        }
        Ok(Some(model))
    }

    pub fn problem(
        &self,
        metric: DistanceMetric,
        gap_exponent: f64,
    ) -> Result<DesignProblem, CliError> {
        let p = DesignProblem::new(self.constraints()?, metric).with_gap_exponent(gap_exponent);
        Ok(match self.fading_model()? {
            Some(f) => p.with_fading(f),
            None => p,
        })
    }

    /// `(label, problem)` for every design a sweep asks for.
    pub fn problems(&self) -> Result<Vec<(String, DesignProblem)>, CliError> {
        if self.designs.is_empty() {
            let p = self.problem(self.metric, self.gap_exponent)?;
            return Ok(vec![(self.metric.tag().to_string(), p)]);
        }
        self.designs
            .iter()
            .map(|d| {
                let e = d.gap_exponent.unwrap_or(self.gap_exponent);
                Ok((d.label.clone(), self.problem(d.metric, e)?))
            })
            .collect()
    }

    pub fn frozen(&self) -> Result<Option<ModulationVector>, CliError> {
        match &self.constellation {
            None => Ok(None),
            Some(pairs) => ModulationVector::from_pairs(pairs)
                .map(Some)
                .map_err(|e| CliError::Config(format!("config key `constellation`: {e}"))),
        }
    }

    pub fn noise(&self) -> Result<NoiseModel, CliError> {
        self.noise
            .ok_or_else(|| CliError::Config("config key `noise`: required by this command".into()))
    }

    pub fn grid(&self) -> Result<(SweepAxis, Vec<f64>), CliError> {
        let spec = self.sweep.as_ref().ok_or_else(|| {
            CliError::Config("config key `sweep`: required by this command".into())
        })?;
        let noise = self.noise()?;
        let axis = spec.axis.unwrap_or_else(|| SweepAxis::for_noise(&noise));
        let grid = match (&spec.grid, &spec.log_grid) {
            (Some(g), _) => g.clone(),
            (None, Some(l)) => l.values(),
            (None, None) => unreachable!("validated"),
        };
        Ok((axis, grid))
    }

    pub fn out_dir(&self) -> PathBuf {
        self.output_dir
            .clone()
            .unwrap_or_else(|| PathBuf::from("oaccomp-out"))
    }
}
