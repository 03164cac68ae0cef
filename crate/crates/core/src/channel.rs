//! Multiple-access channel: superposition, channel-inversion power control,
//! residual noise and the second-moment transform for stochastic fading.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::function_model::{superimpose, InputProfile};

/// Channels weaker than this cannot be inverted.
pub const MIN_INVERTIBLE_GAIN: f64 = 1e-12;

/// Residual noise after power control.
///
/// Gaussian noise is circularly symmetric; the other families draw the real
/// and imaginary parts independently from the stated density.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", deny_unknown_fields)]
pub enum NoiseModel {
    /// `CN(0, variance)`: each component `N(0, variance / 2)`.
    #[serde(rename = "complex_gaussian")]
    ComplexGaussian { variance: f64 },
    /// Per-component density `beta / (2 alpha Gamma(1/beta)) exp(-|z/alpha|^beta)`.
    #[serde(rename = "gnd")]
    Gnd { alpha: f64, beta: f64 },
    /// Per-component Laplace of scale `alpha` (GND with `beta = 1`).
    #[serde(rename = "laplace")]
    Laplace { alpha: f64 },
    /// Per-component `Cauchy(0, gamma / 2)`.
    #[serde(rename = "complex_cauchy")]
    ComplexCauchy { gamma: f64 },
}

impl NoiseModel {
    pub fn validate(&self) -> Result<()> {
        let check = |name: &'static str, v: f64, allow_zero: bool| {
            let ok = v.is_finite() && (v > 0.0 || (allow_zero && v == 0.0));
            if ok {
                Ok(())
            } else {
                Err(invalid(name, format!("must be positive, got {v}")))
            }
        };
        match *self {
            NoiseModel::ComplexGaussian { variance } => check("variance", variance, true),
            NoiseModel::Gnd { alpha, beta } => {
                check("alpha", alpha, false)?;
                check("beta", beta, false)
            }
            NoiseModel::Laplace { alpha } => check("alpha", alpha, false),
            NoiseModel::ComplexCauchy { gamma } => check("gamma", gamma, true),
        }
    }

    /// The same family with its scale parameter replaced; used by sweeps.
    pub fn with_scale(&self, scale: f64) -> Self {
        match *self {
            NoiseModel::ComplexGaussian { .. } => NoiseModel::ComplexGaussian {
                variance: scale * scale,
            },
            NoiseModel::Gnd { beta, .. } => NoiseModel::Gnd { alpha: scale, beta },
            NoiseModel::Laplace { .. } => NoiseModel::Laplace { alpha: scale },
            NoiseModel::ComplexCauchy { .. } => NoiseModel::ComplexCauchy { gamma: scale },
        }
    }

    pub fn has_finite_variance(&self) -> bool {
        !matches!(self, NoiseModel::ComplexCauchy { .. })
    }

    pub fn is_noiseless(&self) -> bool {
        matches!(
            *self,
            NoiseModel::ComplexGaussian { variance: 0.0 }
                | NoiseModel::ComplexCauchy { gamma: 0.0 }
        )
    }

    /// Variance of one real component, when finite.
    pub fn component_variance(&self) -> Option<f64> {
        use statrs::function::gamma::gamma;
        match *self {
            NoiseModel::ComplexGaussian { variance } => Some(variance / 2.0),
            NoiseModel::Gnd { alpha, beta } => {
                Some(alpha * alpha * gamma(3.0 / beta) / gamma(1.0 / beta))
            }
            NoiseModel::Laplace { alpha } => Some(2.0 * alpha * alpha),
            NoiseModel::ComplexCauchy { .. } => None,
        }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            NoiseModel::ComplexGaussian { .. } => "complex_gaussian",
            NoiseModel::Gnd { .. } => "gnd",
            NoiseModel::Laplace { .. } => "laplace",
            NoiseModel::ComplexCauchy { .. } => "complex_cauchy",
        }
    }
}

fn sample_gnd_component<R: Rng + ?Sized>(alpha: f64, beta: f64, rng: &mut R) -> f64 {
    // |Z| = alpha * G^(1/beta) with G ~ Gamma(1/beta, 1)
    let g: f64 = Gamma::new(1.0 / beta, 1.0)
        .expect("valid gamma shape")
        .sample(rng);
    let magnitude = alpha * g.powf(1.0 / beta);
    if rng.gen::<bool>() {
        magnitude
    } else {
        -magnitude
    }
}

fn sample_cauchy_component<R: Rng + ?Sized>(scale: f64, rng: &mut R) -> f64 {
    // inverse CDF; the open interval keeps tan finite
    let u: f64 = rng.gen_range(f64::EPSILON..1.0);
    scale * (std::f64::consts::PI * (u - 0.5)).tan()
}

/// One complex noise draw.
pub fn sample_noise<R: Rng + ?Sized>(model: &NoiseModel, rng: &mut R) -> Complex64 {
    match *model {
        NoiseModel::ComplexGaussian { variance } => {
            let s = (variance / 2.0).sqrt();
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            Complex64::new(s * re, s * im)
        }
        NoiseModel::Gnd { alpha, beta } => Complex64::new(
            sample_gnd_component(alpha, beta, rng),
            sample_gnd_component(alpha, beta, rng),
        ),
        NoiseModel::Laplace { alpha } => Complex64::new(
            sample_gnd_component(alpha, 1.0, rng),
            sample_gnd_component(alpha, 1.0, rng),
        ),
        NoiseModel::ComplexCauchy { gamma } => {
            if gamma == 0.0 {
                return Complex64::new(0.0, 0.0);
            }
            Complex64::new(
                sample_cauchy_component(gamma / 2.0, rng),
                sample_cauchy_component(gamma / 2.0, rng),
            )
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FadingGenerator {
    /// `h = L w`, `w ~ CN(0, I)`, `L L^H` the covariance.
    Rayleigh,
    /// Unit line-of-sight component on every node plus a scattered part,
    /// `h = sqrt(kappa / (kappa + 1)) 1 + sqrt(1 / (kappa + 1)) L w`.
    Rician { kappa: f64 },
    /// Deterministic channel.
    Fixed { h: Vec<[f64; 2]> },
}

/// Random or fixed channel gains of the `K` nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct FadingModel {
    /// `K x K` covariance of the scattered component. For `Fixed` channels
    /// this is `h h^H`.
    covariance: DMatrix<Complex64>,
    generator: FadingGenerator,
    /// Apply channel-inversion power control before superposition.
    pub inversion: bool,
    factor: DMatrix<Complex64>,
}

impl FadingModel {
    pub fn new(
        covariance: DMatrix<Complex64>,
        generator: FadingGenerator,
        inversion: bool,
    ) -> Result<Self> {
        let k = covariance.nrows();
        if covariance.ncols() != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                got: covariance.ncols(),
            });
        }
        let scale = covariance.iter().fold(1.0f64, |m, c| m.max(c.norm()));
        for i in 0..k {
            for j in 0..k {
                if (covariance[(i, j)] - covariance[(j, i)].conj()).norm() > 1e-9 * scale {
                    return Err(invalid("covariance", "matrix is not Hermitian"));
                }
            }
        }
        let eig = covariance.clone().symmetric_eigen();
        if eig.eigenvalues.iter().any(|&l| l < -1e-9 * scale) {
            return Err(invalid("covariance", "matrix is not positive semidefinite"));
        }
        match &generator {
            FadingGenerator::Rician { kappa } if !(kappa.is_finite() && *kappa >= 0.0) => {
                return Err(invalid("kappa", format!("must be >= 0, got {kappa}")));
            }
            FadingGenerator::Fixed { h } if h.len() != k => {
                return Err(Error::DimensionMismatch {
                    expected: k,
                    got: h.len(),
                });
            }
            _ => {}
        }
        let mut factor = eig.eigenvectors.clone();
        for (j, &l) in eig.eigenvalues.iter().enumerate() {
            let s = l.max(0.0).sqrt();
            for i in 0..k {
                factor[(i, j)] *= s;
            }
        }
        Ok(Self {
            covariance,
            generator,
            inversion,
            factor,
        })
    }

    pub fn rayleigh(covariance: DMatrix<Complex64>, inversion: bool) -> Result<Self> {
        Self::new(covariance, FadingGenerator::Rayleigh, inversion)
    }

    pub fn rician(covariance: DMatrix<Complex64>, kappa: f64, inversion: bool) -> Result<Self> {
        Self::new(covariance, FadingGenerator::Rician { kappa }, inversion)
    }

    pub fn fixed(h: &[Complex64], inversion: bool) -> Result<Self> {
        let col = DMatrix::from_column_slice(h.len(), 1, h);
        let cov = &col * col.adjoint();
        Self::new(
            cov,
            FadingGenerator::Fixed {
                h: h.iter().map(|c| [c.re, c.im]).collect(),
            },
            inversion,
        )
    }

    pub fn nodes(&self) -> usize {
        self.covariance.nrows()
    }

    pub fn covariance(&self) -> &DMatrix<Complex64> {
        &self.covariance
    }

    pub fn generator(&self) -> &FadingGenerator {
        &self.generator
    }

    /// `E[h h^H]`, including any line-of-sight component.
    pub fn second_moment(&self) -> DMatrix<Complex64> {
        match &self.generator {
            FadingGenerator::Rayleigh | FadingGenerator::Fixed { .. } => self.covariance.clone(),
            FadingGenerator::Rician { kappa } => {
                let k = self.nodes();
                let los = DMatrix::from_element(k, k, Complex64::new(*kappa, 0.0));
                (los + &self.covariance) / Complex64::new(kappa + 1.0, 0.0)
            }
        }
    }

    /// One channel realization.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<Complex64> {
        let k = self.nodes();
        let mut scattered = || {
            let w: Vec<Complex64> = (0..k)
                .map(|_| {
                    let re: f64 = rng.sample(StandardNormal);
                    let im: f64 = rng.sample(StandardNormal);
                    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
                })
                .collect();
            let w = DMatrix::from_column_slice(k, 1, &w);
            (&self.factor * w)
                .column(0)
                .iter()
                .copied()
                .collect::<Vec<_>>()
        };
        match &self.generator {
            FadingGenerator::Fixed { h } => {
                h.iter().map(|&[re, im]| Complex64::new(re, im)).collect()
            }
            FadingGenerator::Rayleigh => scattered(),
            FadingGenerator::Rician { kappa } => {
                let los = (kappa / (kappa + 1.0)).sqrt();
                let nlos = (1.0 / (kappa + 1.0)).sqrt();
                scattered()
                    .into_iter()
                    .map(|s| Complex64::new(los, 0.0) + s * nlos)
                    .collect()
            }
        }
    }
}

/// Transmit gain `p = h* / |h|^2`.
pub fn inversion_gain(h: Complex64) -> Result<Complex64> {
    if h.norm() < MIN_INVERTIBLE_GAIN {
        return Err(Error::ZeroChannel { node: 0 });
    }
    Ok(h.conj() / h.norm_sqr())
}

/// Net gain `p h` seen at the receiver after inversion.
///
/// Evaluated as `(h* h) / |h|^2`, which is exactly `1 + 0i` in floating point.
pub fn inverted_gain(h: Complex64) -> Result<Complex64> {
    if h.norm() < MIN_INVERTIBLE_GAIN {
        return Err(Error::ZeroChannel { node: 0 });
    }
    Ok((h.conj() * h) / h.norm_sqr())
}

/// Received sample for one channel use.
///
/// Without fading (or with inversion) this is the noiseless superposition
/// plus noise. With fading and no inversion every node's symbol is scaled by
/// its own gain, nodes taking levels in nondecreasing order.
pub fn transmit<R: Rng + ?Sized>(
    x: &[Complex64],
    profile: &InputProfile,
    noise: &NoiseModel,
    fading: Option<&FadingModel>,
    rng: &mut R,
) -> Result<Complex64> {
    if x.len() != profile.q() {
        return Err(Error::DimensionMismatch {
            expected: profile.q(),
            got: x.len(),
        });
    }
    let clean = match fading {
        None => superimpose(x, profile)?,
        Some(f) => {
            let levels = profile.expand();
            if f.nodes() != levels.len() {
                return Err(Error::DimensionMismatch {
                    expected: levels.len(),
                    got: f.nodes(),
                });
            }
            let h = f.draw(rng);
            if f.inversion {
                // every net gain is exactly one, so this is the plain sum
                for (node, &hk) in h.iter().enumerate() {
                    inverted_gain(hk).map_err(|_| Error::ZeroChannel { node })?;
                }
                superimpose(x, profile)?
            } else {
                h.iter()
                    .zip(&levels)
                    .map(|(&hk, &level)| hk * x[level])
                    .sum()
            }
        }
    };
    Ok(clean + sample_noise(noise, rng))
}

/// Selection matrix `B` (K x q) of a profile: row `k` picks node `k`'s level.
pub fn selection_matrix(profile: &InputProfile) -> DMatrix<f64> {
    let levels = profile.expand();
    let mut b = DMatrix::zeros(levels.len(), profile.q());
    for (k, &l) in levels.iter().enumerate() {
        b[(k, l)] = 1.0;
    }
    b
}

/// Hermitian `G` with `E|r_i - r_j|^2 = x^H G x` under the fading model.
///
/// With `D = B_i - B_j` and `r_i - r_j = h^T D x`, the expectation is
/// `x^H D^T conj(E[h h^H]) D x`.
pub fn fading_gram(
    fading: &FadingModel,
    first: &InputProfile,
    second: &InputProfile,
) -> Result<DMatrix<Complex64>> {
    if first.q() != second.q() {
        return Err(Error::DimensionMismatch {
            expected: first.q(),
            got: second.q(),
        });
    }
    for p in [first, second] {
        if p.k() != fading.nodes() {
            return Err(Error::DimensionMismatch {
                expected: fading.nodes(),
                got: p.k(),
            });
        }
    }
    let d = selection_matrix(first) - selection_matrix(second);
    let d = d.map(|v| Complex64::new(v, 0.0));
    let moment = fading.second_moment().map(|c| c.conj());
    let g = d.transpose() * moment * &d;
    // symmetrize away rounding
    Ok((&g + g.adjoint()) * Complex64::new(0.5, 0.0))
}

/// `x^H G x` (real for Hermitian `G`).
pub fn quadratic_form(g: &DMatrix<Complex64>, x: &[Complex64]) -> f64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for (i, xi) in x.iter().enumerate() {
        let mut row = Complex64::new(0.0, 0.0);
        for (j, xj) in x.iter().enumerate() {
            row += g[(i, j)] * xj;
        }
        acc += xi.conj() * row;
    }
    acc.re
}

/// Parses a `K x K` complex covariance from CSV rows. Each cell is either a
/// real number or `re+imj` / `re-imj`.
pub fn covariance_from_csv(text: &str) -> Result<DMatrix<Complex64>> {
    let rows: Vec<Vec<Complex64>> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|line| line.split(',').map(|c| parse_complex(c.trim())).collect())
        .collect::<Result<_>>()?;
    let k = rows.len();
    if k == 0 {
        return Err(invalid("covariance", "empty matrix"));
    }
    if let Some(bad) = rows.iter().find(|r| r.len() != k) {
        return Err(Error::DimensionMismatch {
            expected: k,
            got: bad.len(),
        });
    }
    Ok(DMatrix::from_fn(k, k, |i, j| rows[i][j]))
}

fn parse_complex(cell: &str) -> Result<Complex64> {
    let bad = || {
        invalid(
            "covariance",
            format!("cannot parse `{cell}` as a complex number"),
        )
    };
    if let Ok(re) = cell.parse::<f64>() {
        return Ok(Complex64::new(re, 0.0));
    }
    let body = cell
        .strip_suffix('j')
        .or_else(|| cell.strip_suffix('i'))
        .ok_or_else(bad)?;
    // split at the last sign that is not an exponent sign or the leading sign
    let bytes = body.as_bytes();
    let split = (1..bytes.len())
        .rev()
        .find(|&i| (bytes[i] == b'+' || bytes[i] == b'-') && !matches!(bytes[i - 1], b'e' | b'E'))
        .ok_or_else(bad)?;
    let re = body[..split].parse::<f64>().map_err(|_| bad())?;
    let im = body[split..].parse::<f64>().map_err(|_| bad())?;
    Ok(Complex64::new(re, im))
}
