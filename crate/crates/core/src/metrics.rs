//! Noise-aware distance metrics and the tail bounds they come from.
//!
//! Each metric `D(r1, r2)` depends on the points only through their
//! separation `d = |r1 - r2|` and is non-decreasing in `d` for the parameter
//! ranges the designer accepts. Parameter conventions:
//!
//! * `AwgnExp { sigma }`: `sigma` is the noise *variance*, so the metric is
//!   `exp(d^2 / (4 sigma))`.
//! * `TailBound::GaussianUnion` / `GaussianChernoff`: `sigma` is the noise
//!   *standard deviation* and the argument of `Q` is `d / (sqrt(2) sigma)`.
//!   Squaring that argument gives back the `d^2 / (4 sigma^2)` exponent.

use std::f64::consts::{FRAC_1_PI, FRAC_2_PI, PI, SQRT_2};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use statrs::function::gamma::{gamma, gamma_ur};

use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", deny_unknown_fields)]
pub enum DistanceMetric {
    /// `d^2`.
    #[serde(rename = "euclidean")]
    Euclidean,
    /// `exp(d^2 / (4 sigma))`, sigma the noise variance.
    #[serde(rename = "awgn_exp")]
    AwgnExp { sigma: f64 },
    /// `d^(beta-1) exp((d/alpha)^beta)`; `beta = 1` is the Laplace metric.
    #[serde(rename = "gnd_exp")]
    GndExp { alpha: f64, beta: f64 },
    /// `(2 gamma)^(-2/eta) d^(2/eta)` for Cauchy noise of scale `gamma`.
    #[serde(rename = "heavy_tail_power")]
    HeavyTailPower { gamma: f64, eta: f64 },
    /// `d^(alpha/eta)` for an alpha-stable tail.
    #[serde(rename = "stable_power")]
    StablePower { alpha: f64, eta: f64 },
}

fn positive(name: &'static str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(invalid(name, format!("must be finite and > 0, got {v}")))
    }
}

impl DistanceMetric {
    pub fn validate(&self) -> Result<()> {
        match *self {
            DistanceMetric::Euclidean => Ok(()),
            DistanceMetric::AwgnExp { sigma } => positive("sigma", sigma),
            DistanceMetric::GndExp { alpha, beta } => {
                positive("alpha", alpha)?;
                positive("beta", beta)
            }
            DistanceMetric::HeavyTailPower { gamma, eta } => {
                positive("gamma", gamma)?;
                positive("eta", eta)?;
                if eta > 1.0 {
                    return Err(invalid("eta", format!("must be <= 1, got {eta}")));
                }
                Ok(())
            }
            DistanceMetric::StablePower { alpha, eta } => {
                positive("alpha", alpha)?;
                if alpha >= 2.0 {
                    return Err(invalid(
                        "alpha",
                        format!("stable index must be < 2, got {alpha}"),
                    ));
                }
                positive("eta", eta)?;
                if eta > 1.0 {
                    return Err(invalid("eta", format!("must be <= 1, got {eta}")));
                }
                Ok(())
            }
        }
    }

    /// Short tag used in reports and file names.
    pub fn tag(&self) -> &'static str {
        match self {
            DistanceMetric::Euclidean => "euclidean",
            DistanceMetric::AwgnExp { .. } => "awgn_exp",
            DistanceMetric::GndExp { .. } => "gnd_exp",
            DistanceMetric::HeavyTailPower { .. } => "heavy_tail_power",
            DistanceMetric::StablePower { .. } => "stable_power",
        }
    }

    /// Metric value at separation `d >= 0`. Parameters are assumed valid.
    pub fn of_separation(&self, d: f64) -> f64 {
        match *self {
            DistanceMetric::Euclidean => d * d,
            DistanceMetric::AwgnExp { sigma } => (d * d / (4.0 * sigma)).exp(),
            DistanceMetric::GndExp { alpha, beta } => {
                d.powf(beta - 1.0) * (d / alpha).powf(beta).exp()
            }
            DistanceMetric::HeavyTailPower { gamma, eta } => {
                (2.0 * gamma).powf(-2.0 / eta) * d.powf(2.0 / eta)
            }
            DistanceMetric::StablePower { alpha, eta } => d.powf(alpha / eta),
        }
    }

    /// `ln D` as a function of the squared separation `u = d^2`.
    ///
    /// The designer works in this log domain; it stays finite where `D`
    /// itself would overflow.
    pub fn log_of_squared(&self, u: f64) -> f64 {
        match *self {
            DistanceMetric::Euclidean => u.ln(),
            DistanceMetric::AwgnExp { sigma } => u / (4.0 * sigma),
            DistanceMetric::GndExp { alpha, beta } => {
                0.5 * (beta - 1.0) * u.ln() + u.powf(0.5 * beta) / alpha.powf(beta)
            }
            DistanceMetric::HeavyTailPower { gamma, eta } => {
                (u.ln() - 2.0 * (2.0 * gamma).ln()) / eta
            }
            DistanceMetric::StablePower { alpha, eta } => 0.5 * alpha / eta * u.ln(),
        }
    }

    /// Derivative of [`Self::log_of_squared`] with respect to `u`.
    pub fn log_of_squared_slope(&self, u: f64) -> f64 {
        match *self {
            DistanceMetric::Euclidean => 1.0 / u,
            DistanceMetric::AwgnExp { sigma } => 1.0 / (4.0 * sigma),
            DistanceMetric::GndExp { alpha, beta } => {
                0.5 * (beta - 1.0) / u + 0.5 * beta * u.powf(0.5 * beta - 1.0) / alpha.powf(beta)
            }
            DistanceMetric::HeavyTailPower { eta, .. } => 1.0 / (eta * u),
            DistanceMetric::StablePower { alpha, eta } => 0.5 * alpha / (eta * u),
        }
    }

    /// Power `p` with `D = c * u^p` for the pure power-law families.
    pub fn power_exponent(&self) -> Option<f64> {
        match *self {
            DistanceMetric::Euclidean => Some(1.0),
            DistanceMetric::HeavyTailPower { eta, .. } => Some(1.0 / eta),
            DistanceMetric::StablePower { alpha, eta } => Some(0.5 * alpha / eta),
            _ => None,
        }
    }

    /// Value of the metric at zero separation, the smallest it can be.
    pub fn floor(&self) -> f64 {
        self.of_separation(0.0)
    }
}

/// Metric between two received points.
pub fn distance(metric: &DistanceMetric, r1: Complex64, r2: Complex64) -> Result<f64> {
    metric.validate()?;
    Ok(metric.of_separation((r1 - r2).norm()))
}

/// Gaussian tail `Q(x) = P(N(0,1) > x)`.
pub fn q_function(x: f64) -> f64 {
    0.5 * erfc(x / SQRT_2)
}

/// Stable tail constant `C_alpha ~ 2 Gamma(alpha) sin(pi alpha / 2) / pi`.
///
/// Reported alongside stable designs; the power metric drops it because a
/// common factor does not move the max-min solution.
pub fn stable_tail_constant(alpha: f64) -> f64 {
    2.0 * gamma(alpha) * (PI * alpha / 2.0).sin() / PI
}

/// Upper bounds on the pairwise misdetection probability `P(r_i -> r_j)` as
/// a function of the separation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", deny_unknown_fields)]
pub enum TailBound {
    /// `Q(d / (sqrt(2) sigma))`, sigma the standard deviation.
    #[serde(rename = "gaussian_union")]
    GaussianUnion { sigma: f64 },
    /// `exp(-d^2 / (4 sigma^2))`.
    #[serde(rename = "gaussian_chernoff")]
    GaussianChernoff { sigma: f64 },
    /// `alpha^(beta-1) exp(-(d/alpha)^beta) / (2 Gamma(1/beta) d^(beta-1))`.
    #[serde(rename = "gnd")]
    Gnd { alpha: f64, beta: f64 },
    /// `arctan(2 gamma / d) / pi`.
    #[serde(rename = "cauchy")]
    Cauchy { gamma: f64 },
    /// `C_alpha (2 scale / d)^alpha`.
    #[serde(rename = "stable")]
    Stable { alpha: f64, scale: f64 },
}

impl TailBound {
    /// Bound at separation `d >= 0`, clamped to `[0, 1]`.
    pub fn evaluate(&self, d: f64) -> f64 {
        let d = d.max(0.0);
        let raw = match *self {
            TailBound::GaussianUnion { sigma } => q_function(d / (SQRT_2 * sigma)),
            TailBound::GaussianChernoff { sigma } => (-d * d / (4.0 * sigma * sigma)).exp(),
            TailBound::Gnd { alpha, beta } => {
                let z = d / alpha;
                if beta >= 1.0 {
                    if z == 0.0 && beta > 1.0 {
                        f64::INFINITY
                    } else {
                        (-z.powf(beta)).exp() / (2.0 * gamma(1.0 / beta) * z.powf(beta - 1.0))
                    }
                } else {
                    // the closed form is not a bound for beta < 1; use the
                    // exact tail instead
                    0.5 * gamma_ur(1.0 / beta, z.powf(beta))
                }
            }
            TailBound::Cauchy { gamma } => {
                if d == 0.0 {
                    0.5
                } else {
                    FRAC_1_PI * (2.0 * gamma / d).atan()
                }
            }
            TailBound::Stable { alpha, scale } => {
                stable_tail_constant(alpha) * (2.0 * scale / d).powf(alpha)
            }
        };
        if raw.is_nan() {
            1.0
        } else {
            raw.clamp(0.0, 1.0)
        }
    }
}

pub fn tail_bound(model: &TailBound, d: f64) -> f64 {
    model.evaluate(d)
}

/// `1 / arctan(1/x) - x`, the slack of the linear surrogate for the
/// reciprocal arctangent. Non-negative for `x > 0`, tends to 0 as `x` grows.
pub fn arctan_surrogate_gap(x: f64) -> f64 {
    if x <= 0.0 {
        return FRAC_2_PI;
    }
    if x > 1e4 {
        // 1/arctan(y) = 1/y + y/3 - 4y^3/45 + O(y^5), y = 1/x
        let y = 1.0 / x;
        return y / 3.0 - 4.0 * y * y * y / 45.0;
    }
    1.0 / (1.0 / x).atan() - x
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    /// Composite Simpson on [x, x + 40] as an independent oracle for Q.
    fn q_by_quadrature(x: f64) -> f64 {
        let n = 200_000;
        let h = 40.0 / n as f64;
        let f = |t: f64| (-t * t / 2.0).exp();
        let mut s = f(x) + f(x + 40.0);
        for i in 1..n {
            let t = x + i as f64 * h;
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(t);
        }
        s * h / 3.0 / (2.0 * PI).sqrt()
    }

    #[test]
    fn metric_examples() {
        assert_eq!(
            distance(&DistanceMetric::Euclidean, c(0.0), c(2.0)).unwrap(),
            4.0
        );
        assert_abs_diff_eq!(
            distance(&DistanceMetric::AwgnExp { sigma: 1.0 }, c(0.0), c(2.0)).unwrap(),
            std::f64::consts::E,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            distance(
                &DistanceMetric::GndExp {
                    alpha: 1.0,
                    beta: 1.0
                },
                c(0.0),
                c(3.0)
            )
            .unwrap(),
            3f64.exp(),
            epsilon = 1e-9
        );
        assert_abs_diff_eq!(
            distance(
                &DistanceMetric::HeavyTailPower {
                    gamma: 0.5,
                    eta: 1.0
                },
                c(0.0),
                c(2.0)
            )
            .unwrap(),
            4.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn invalid_parameters() {
        assert!(distance(&DistanceMetric::AwgnExp { sigma: 0.0 }, c(0.0), c(1.0)).is_err());
        assert!(distance(
            &DistanceMetric::GndExp {
                alpha: -1.0,
                beta: 1.0
            },
            c(0.0),
            c(1.0)
        )
        .is_err());
        assert!(DistanceMetric::HeavyTailPower {
            gamma: 1.0,
            eta: 1.5
        }
        .validate()
        .is_err());
        assert!(DistanceMetric::StablePower {
            alpha: 2.0,
            eta: 1.0
        }
        .validate()
        .is_err());
        assert!(DistanceMetric::HeavyTailPower {
            gamma: 1.0,
            eta: 1.0
        }
        .validate()
        .is_ok());
    }

    #[test]
    fn q_function_values() {
        assert_eq!(q_function(0.0), 0.5);
        assert!(q_function(40.0) < 1e-300);
        for x in [0.25, 1.0, 2.0, 3.5] {
            assert_abs_diff_eq!(q_function(x), q_by_quadrature(x), epsilon = 1e-10);
        }
        assert_abs_diff_eq!(q_function(1.0), 0.158_655_253_931_457, epsilon = 1e-10);
    }

    #[test]
    fn tail_bound_examples() {
        assert_abs_diff_eq!(TailBound::Cauchy { gamma: 1.0 }.evaluate(0.0), 0.5);
        assert_eq!(
            TailBound::GaussianChernoff { sigma: 1.0 }.evaluate(0.0),
            1.0
        );
        assert_abs_diff_eq!(
            TailBound::GaussianUnion { sigma: 1.0 }.evaluate(2.0),
            q_by_quadrature(SQRT_2),
            epsilon = 1e-10
        );
        assert_abs_diff_eq!(
            TailBound::GaussianUnion { sigma: 1.0 }.evaluate(2.0),
            0.07865,
            epsilon = 1e-5
        );
        assert_eq!(
            TailBound::Gnd {
                alpha: 1.0,
                beta: 2.0
            }
            .evaluate(0.0),
            1.0
        );
        assert_eq!(
            TailBound::Stable {
                alpha: 1.5,
                scale: 1.0
            }
            .evaluate(0.0),
            1.0
        );
    }

    #[test]
    fn arctan_gap_examples() {
        assert_abs_diff_eq!(arctan_surrogate_gap(1.0), 4.0 / PI - 1.0, epsilon = 1e-12);
        assert!((arctan_surrogate_gap(1.0) - 0.2732).abs() < 1e-4);
        assert!(arctan_surrogate_gap(100.0) < 0.01);
        assert_abs_diff_eq!(arctan_surrogate_gap(1e-12), 2.0 / PI, epsilon = 1e-9);
        // series branch joins the direct formula
        assert_abs_diff_eq!(
            arctan_surrogate_gap(1e4 + 1e-6),
            1.0 / (1.0 / 1e4f64).atan() - 1e4,
            epsilon = 1e-9
        );
    }

    #[test]
    fn gnd_with_gaussian_shape_is_awgn_times_d() {
        let sigma = 0.7;
        let gnd = DistanceMetric::GndExp {
            alpha: 2.0 * f64::sqrt(sigma),
            beta: 2.0,
        };
        let awgn = DistanceMetric::AwgnExp { sigma };
        for d in [0.1, 0.5, 1.0, 2.0, 3.0] {
            let ratio = gnd.of_separation(d) / awgn.of_separation(d);
            assert_abs_diff_eq!(ratio, d, epsilon = 1e-12 * d.max(1.0));
        }
    }

    #[test]
    fn log_form_matches_metric() {
        let metrics = [
            DistanceMetric::Euclidean,
            DistanceMetric::AwgnExp { sigma: 0.3 },
            DistanceMetric::GndExp {
                alpha: 0.8,
                beta: 1.5,
            },
            DistanceMetric::HeavyTailPower {
                gamma: 0.2,
                eta: 0.5,
            },
            DistanceMetric::StablePower {
                alpha: 1.2,
                eta: 0.8,
            },
        ];
        for m in metrics {
            for d in [0.05, 0.4, 1.3] {
                let u = d * d;
                assert_abs_diff_eq!(
                    m.log_of_squared(u),
                    m.of_separation(d).ln(),
                    epsilon = 1e-10
                );
                let h = 1e-6 * u;
                let fd = (m.log_of_squared(u + h) - m.log_of_squared(u - h)) / (2.0 * h);
                assert_abs_diff_eq!(
                    m.log_of_squared_slope(u),
                    fd,
                    epsilon = 1e-5 * fd.abs().max(1.0)
                );
            }
        }
    }

    #[test]
    fn serde_shape() {
        let m = DistanceMetric::HeavyTailPower {
            gamma: 0.5,
            eta: 1.0,
        };
        let v = serde_json::to_value(m).unwrap();
        assert_eq!(v["kind"], "heavy_tail_power");
        assert_eq!(v["params"]["gamma"], 0.5);
        let back: DistanceMetric = serde_json::from_value(v).unwrap();
        assert_eq!(back, m);
        let e: DistanceMetric = serde_json::from_str(r#"{"kind":"euclidean"}"#).unwrap();
        assert_eq!(e, DistanceMetric::Euclidean);
    }

    proptest! {
        #[test]
        fn chernoff_dominates_q(x in 0.0f64..12.0) {
            prop_assert!(q_function(x) <= (-x * x / 2.0).exp());
        }

        #[test]
        fn arctan_gap_nonnegative(x in 1e-9f64..1e9) {
            prop_assert!(arctan_surrogate_gap(x) >= 0.0);
        }

        #[test]
        fn tail_bounds_monotone(a in 0.0f64..20.0, b in 0.0f64..20.0, s in 0.05f64..3.0, beta in 0.3f64..3.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let bounds = [
                TailBound::GaussianUnion { sigma: s },
                TailBound::GaussianChernoff { sigma: s },
                TailBound::Gnd { alpha: s, beta },
                TailBound::Cauchy { gamma: s },
                TailBound::Stable { alpha: beta.min(1.99), scale: s },
            ];
            for bound in bounds {
                let (vlo, vhi) = (bound.evaluate(lo), bound.evaluate(hi));
                prop_assert!((0.0..=1.0).contains(&vlo));
                prop_assert!(vhi <= vlo + 1e-15, "{:?}: {} -> {}, {} -> {}", bound, lo, vlo, hi, vhi);
            }
        }

        #[test]
        fn metrics_symmetric(ar in -3.0f64..3.0, ai in -3.0f64..3.0, br in -3.0f64..3.0, bi in -3.0f64..3.0) {
            let a = Complex64::new(ar, ai);
            let b = Complex64::new(br, bi);
            let metrics = [
                DistanceMetric::Euclidean,
                DistanceMetric::AwgnExp { sigma: 0.5 },
                DistanceMetric::GndExp { alpha: 1.0, beta: 1.0 },
                DistanceMetric::GndExp { alpha: 1.0, beta: 2.0 },
                DistanceMetric::HeavyTailPower { gamma: 0.3, eta: 0.7 },
                DistanceMetric::StablePower { alpha: 1.5, eta: 1.0 },
            ];
            for m in metrics {
                let ab = distance(&m, a, b).unwrap();
                let ba = distance(&m, b, a).unwrap();
                prop_assert_eq!(ab, ba);
                prop_assert!(ab >= m.floor());
            }
        }
    }

    #[test]
    fn power_families_vanish_only_at_zero() {
        for m in [
            DistanceMetric::Euclidean,
            DistanceMetric::HeavyTailPower {
                gamma: 0.3,
                eta: 0.7,
            },
            DistanceMetric::StablePower {
                alpha: 1.5,
                eta: 1.0,
            },
        ] {
            assert_eq!(distance(&m, c(1.0), c(1.0)).unwrap(), 0.0);
            assert!(distance(&m, c(1.0), c(1.0 + 1e-6)).unwrap() > 0.0);
        }
        assert_eq!(DistanceMetric::AwgnExp { sigma: 1.0 }.floor(), 1.0);
    }
}
