//! Receiver: nearest-point (or Cauchy maximum-likelihood) detection over the
//! superimposed constellation, followed by the tabular value map.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::NoiseModel;
use crate::designer::ModulationVector;
use crate::error::{invalid, Error, Result};
use crate::function_model::{superimpose, values_equal, InputProfile};

/// Superimposed points closer than this are the same point.
pub const MERGE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CodebookPoint {
    pub r: Complex64,
    pub value: f64,
}

/// Lookup table from received constellation points to function values.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    points: Vec<CodebookPoint>,
    merged: Vec<CodebookPoint>,
    profile_to_point: Vec<usize>,
}

impl Codebook {
    /// One entry per profile, in profile order.
    pub fn points(&self) -> &[CodebookPoint] {
        &self.points
    }

    /// Distinct points in first-appearance order; decoding indexes these.
    pub fn merged(&self) -> &[CodebookPoint] {
        &self.merged
    }

    /// Index into [`Self::merged`] of each profile's point.
    pub fn point_of_profile(&self, profile: usize) -> usize {
        self.profile_to_point[profile]
    }

    pub fn len(&self) -> usize {
        self.merged.len()
    }

    pub fn is_empty(&self) -> bool {
        self.merged.is_empty()
    }

    /// Codebook straight from points, merging as [`build_codebook`] does.
    pub fn from_points(points: Vec<CodebookPoint>) -> Result<Self> {
        let mut merged: Vec<CodebookPoint> = Vec::new();
        let mut owner: Vec<usize> = Vec::new();
        let mut profile_to_point = Vec::with_capacity(points.len());
        for (idx, p) in points.iter().enumerate() {
            match merged.iter().position(|m| (m.r - p.r).norm() <= MERGE_TOL) {
                Some(slot) => {
                    if !values_equal(merged[slot].value, p.value) {
                        return Err(Error::OverlapViolation {
                            first: owner[slot],
                            second: idx,
                            value_first: merged[slot].value,
                            value_second: p.value,
                        });
                    }
                    profile_to_point.push(slot);
                }
                None => {
                    profile_to_point.push(merged.len());
                    owner.push(idx);
                    merged.push(*p);
                }
            }
        }
        Ok(Self {
            points,
            merged,
            profile_to_point,
        })
    }

    /// `re,im,f` rows under a header, one per merged point.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("re,im,f\n");
        for p in &self.merged {
            out.push_str(&format!("{},{},{}\n", p.r.re, p.r.im, p.value));
        }
        out
    }
}

/// Superimposes every profile under `x`; coincident points must agree on
/// the function value.
pub fn build_codebook(x: &ModulationVector, profiles: &[InputProfile]) -> Result<Codebook> {
    let points = profiles
        .iter()
        .map(|p| {
            Ok(CodebookPoint {
                r: superimpose(x.as_slice(), p)?,
                value: p.value,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Codebook::from_points(points)
}

/// Detection rule for [`decode_with`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecodeRule {
    /// Maximum likelihood under the noise model; nearest point except for
    /// Cauchy noise.
    #[default]
    MaximumLikelihood,
    /// Nearest point regardless of noise (suboptimal for Cauchy noise).
    MinimumDistance,
}

fn argmin_by(codebook: &Codebook, cost: impl Fn(Complex64) -> f64) -> usize {
    let mut best = 0;
    let mut best_cost = f64::INFINITY;
    for (i, p) in codebook.merged.iter().enumerate() {
        let c = cost(p.r);
        if c < best_cost {
            best = i;
            best_cost = c;
        }
    }
    best
}

/// Estimated value and the index of the detected point; ties go to the
/// lowest index.
pub fn decode(codebook: &Codebook, y: Complex64, noise: &NoiseModel) -> Result<(f64, usize)> {
    decode_with(codebook, y, noise, DecodeRule::MaximumLikelihood)
}

pub fn decode_with(
    codebook: &Codebook,
    y: Complex64,
    noise: &NoiseModel,
    rule: DecodeRule,
) -> Result<(f64, usize)> {
    if codebook.is_empty() {
        return Err(Error::EmptyCodebook);
    }
    let idx = match (rule, noise) {
        (DecodeRule::MaximumLikelihood, &NoiseModel::ComplexCauchy { gamma }) if gamma > 0.0 => {
            let s = gamma / 2.0;
            argmin_by(codebook, |r| {
                let a = (y.re - r.re) / s;
                let b = (y.im - r.im) / s;
                (1.0 + a * a).ln() + (1.0 + b * b).ln()
            })
        }
        _ => argmin_by(codebook, |r| (y - r).norm_sqr()),
    };
    Ok((codebook.merged[idx].value, idx))
}

/// Nearest level, ties toward the smaller one. `levels` must be sorted.
pub fn quantize_output(f: f64, levels: &[f64]) -> Result<f64> {
    let first = *levels
        .first()
        .ok_or_else(|| invalid("levels", "need at least one level"))?;
    let mut best = first;
    for &l in &levels[1..] {
        if (f - l).abs() < (f - best).abs() {
            best = l;
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::function_model::{enumerate_profiles, AggregationFunction, QuantizedAlphabet};

    fn real(v: f64) -> Complex64 {
        Complex64::new(v, 0.0)
    }

    fn max_book() -> Codebook {
        Codebook::from_points(vec![
            CodebookPoint {
                r: real(-2.0),
                value: 0.0,
            },
            CodebookPoint {
                r: real(0.0),
                value: 1.0,
            },
            CodebookPoint {
                r: real(2.0),
                value: 1.0,
            },
        ])
        .unwrap()
    }

    const GAUSS: NoiseModel = NoiseModel::ComplexGaussian { variance: 1.0 };

    #[test]
    fn bpsk_codebook_for_max() {
        let s = 0.5f64.sqrt();
        let x = ModulationVector::from_pairs(&[[-s, 0.0], [s, 0.0]]).unwrap();
        let profiles = enumerate_profiles(
            &AggregationFunction::max(),
            2,
            &QuantizedAlphabet::uniform(2),
        )
        .unwrap();
        let book = build_codebook(&x, &profiles).unwrap();
        let got: Vec<(f64, f64)> = book
            .merged()
            .iter()
            .map(|p| (p.r.re / s, p.value))
            .collect();
        for ((r, f), (er, ef)) in got.iter().zip([(-2.0, 0.0), (0.0, 1.0), (2.0, 1.0)]) {
            assert!((r - er).abs() < 1e-12);
            assert_eq!(*f, ef);
        }
    }

    #[test]
    fn pam_sum_merges_equal_values() {
        let n = 5f64.sqrt();
        let x =
            ModulationVector::from_pairs(&[[0.0, 0.0], [1.0 / n, 0.0], [2.0 / n, 0.0]]).unwrap();
        let profiles = enumerate_profiles(
            &AggregationFunction::sum(),
            2,
            &QuantizedAlphabet::uniform(3),
        )
        .unwrap();
        let book = build_codebook(&x, &profiles).unwrap();
        assert_eq!(book.points().len(), 6);
        assert_eq!(book.len(), 5);
        let mut values: Vec<f64> = book.merged().iter().map(|p| p.value).collect();
        values.sort_by(f64::total_cmp);
        assert_eq!(values, vec![0.0, 1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn overlap_is_rejected() {
        let x = ModulationVector::from_pairs(&[[0.5, 0.0], [0.5, 0.0]]).unwrap();
        let profiles = enumerate_profiles(
            &AggregationFunction::max(),
            2,
            &QuantizedAlphabet::uniform(2),
        )
        .unwrap();
        assert!(matches!(
            build_codebook(&x, &profiles),
            Err(Error::OverlapViolation { .. })
        ));
    }

    #[test]
    fn nearest_point_and_ties() {
        let book = max_book();
        assert_eq!(decode(&book, real(0.9), &GAUSS).unwrap(), (1.0, 1));
        assert_eq!(decode(&book, real(1.0), &GAUSS).unwrap(), (1.0, 1));
        assert_eq!(decode(&book, real(-1.0), &GAUSS).unwrap(), (0.0, 0));
        for (i, p) in book.merged().iter().enumerate() {
            let cauchy = NoiseModel::ComplexCauchy { gamma: 0.3 };
            assert_eq!(decode(&book, p.r, &cauchy).unwrap().1, i);
        }
    }

    #[test]
    fn cauchy_ml_differs_from_nearest() {
        // far along one axis the heavy tail forgives a large offset
        let book = Codebook::from_points(vec![
            CodebookPoint {
                r: Complex64::new(0.0, 0.0),
                value: 0.0,
            },
            CodebookPoint {
                r: Complex64::new(3.0, 3.0),
                value: 1.0,
            },
        ])
        .unwrap();
        let y = Complex64::new(2.2, 0.0);
        let noise = NoiseModel::ComplexCauchy { gamma: 0.2 };
        assert_eq!(decode(&book, y, &noise).unwrap().1, 0);
        let y = Complex64::new(3.0, 0.4);
        assert_eq!(decode(&book, y, &noise).unwrap().1, 1);
        let y = Complex64::new(4.5, 0.05);
        assert_eq!(
            decode_with(&book, y, &noise, DecodeRule::MinimumDistance)
                .unwrap()
                .1,
            1
        );
        assert_eq!(decode(&book, y, &noise).unwrap().1, 0);
    }

    #[test]
    fn empty_codebook_errors() {
        let book = Codebook::from_points(Vec::new()).unwrap();
        assert_eq!(decode(&book, real(0.0), &GAUSS), Err(Error::EmptyCodebook));
    }

    #[test]
    fn quantizer_rules() {
        let levels: Vec<f64> = (0..7).map(f64::from).collect();
        assert_eq!(quantize_output(2.4, &levels).unwrap(), 2.0);
        assert_eq!(quantize_output(5.0, &levels).unwrap(), 5.0);
        assert_eq!(quantize_output(2.5, &[2.0, 3.0]).unwrap(), 2.0);
        assert!(quantize_output(1.0, &[]).is_err());
    }

    #[test]
    fn csv_lists_merged_points() {
        assert_eq!(max_book().to_csv(), "re,im,f\n-2,0,0\n0,0,1\n2,0,1\n");
    }
}
