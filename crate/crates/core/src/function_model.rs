//! Aggregation functions over quantized inputs and the overlap-avoidance
//! constraint system they induce on a shared modulation encoder.
//!
//! With every node using the same lookup-table encoder `x`, the noiseless
//! superimposed point only depends on how many nodes sent each level. An
//! [`InputProfile`] is one such count vector; two profiles whose function
//! values differ must land on distinct points, which is what
//! [`ConstraintSet`] records.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Default upper bound on the number of enumerated profiles.
pub const DEFAULT_PROFILE_CAP: u128 = 2_000_000;

pub type ScalarMap = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
pub type CustomAggregate = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregationKind {
    Sum,
    Product,
    Max,
    ArithmeticMean,
    GeometricMean,
    Custom,
}

impl fmt::Display for AggregationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            AggregationKind::Sum => "sum",
            AggregationKind::Product => "product",
            AggregationKind::Max => "max",
            AggregationKind::ArithmeticMean => "arithmetic_mean",
            AggregationKind::GeometricMean => "geometric_mean",
            AggregationKind::Custom => "custom",
        };
        f.write_str(name)
    }
}

/// A symmetric function `psi(g(phi(s_1), ..., phi(s_K)))`.
#[derive(Clone)]
pub struct AggregationFunction {
    kind: AggregationKind,
    inner_map: Option<ScalarMap>,
    outer_map: Option<ScalarMap>,
    custom: Option<CustomAggregate>,
    symmetric: bool,
}

impl fmt::Debug for AggregationFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AggregationFunction")
            .field("kind", &self.kind)
            .field("inner_map", &self.inner_map.is_some())
            .field("outer_map", &self.outer_map.is_some())
            .field("symmetric", &self.symmetric)
            .finish()
    }
}

impl AggregationFunction {
    pub fn new(kind: AggregationKind) -> Self {
        assert!(
            kind != AggregationKind::Custom,
            "use AggregationFunction::custom for custom aggregates"
        );
        Self {
            kind,
            inner_map: None,
            outer_map: None,
            custom: None,
            symmetric: true,
        }
    }

    pub fn sum() -> Self {
        Self::new(AggregationKind::Sum)
    }

    pub fn product() -> Self {
        Self::new(AggregationKind::Product)
    }

    pub fn max() -> Self {
        Self::new(AggregationKind::Max)
    }

    pub fn arithmetic_mean() -> Self {
        Self::new(AggregationKind::ArithmeticMean)
    }

    pub fn geometric_mean() -> Self {
        Self::new(AggregationKind::GeometricMean)
    }

    /// A user-supplied aggregate. `symmetric` is the caller's declaration;
    /// enumeration refuses functions declared non-symmetric.
    pub fn custom(f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static, symmetric: bool) -> Self {
        Self {
            kind: AggregationKind::Custom,
            inner_map: None,
            outer_map: None,
            custom: Some(Arc::new(f)),
            symmetric,
        }
    }

    pub fn with_inner_map(mut self, map: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        self.inner_map = Some(Arc::new(map));
        self
    }

    pub fn with_outer_map(mut self, map: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        self.outer_map = Some(Arc::new(map));
        self
    }

    pub fn kind(&self) -> AggregationKind {
        self.kind
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    /// True for a built-in kind with no per-node or outer map attached.
    pub fn is_plain(&self) -> bool {
        self.kind != AggregationKind::Custom && self.inner_map.is_none() && self.outer_map.is_none()
    }

    /// Evaluates the function on one value per node.
    ///
    /// Inputs are sorted before aggregation, so any permutation of the same
    /// multiset produces a bit-identical result.
    pub fn evaluate(&self, inputs: &[f64]) -> f64 {
        let mut mapped: Vec<f64> = match &self.inner_map {
            Some(phi) => inputs.iter().map(|&s| phi(s)).collect(),
            None => inputs.to_vec(),
        };
        mapped.sort_by(f64::total_cmp);
        let k = mapped.len() as f64;
        let g = match self.kind {
            AggregationKind::Sum => mapped.iter().sum(),
            AggregationKind::Product => mapped.iter().product(),
            AggregationKind::Max => mapped.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            AggregationKind::ArithmeticMean => mapped.iter().sum::<f64>() / k,
            AggregationKind::GeometricMean => {
                // a zero input makes the product exactly zero
                if mapped.contains(&0.0) {
                    0.0
                } else {
                    mapped.iter().product::<f64>().powf(1.0 / k)
                }
            }
            AggregationKind::Custom => {
                (self
                    .custom
                    .as_ref()
                    .expect("custom aggregate without closure"))(&mapped)
            }
        };
        match &self.outer_map {
            Some(psi) => psi(g),
            None => g,
        }
    }
}

/// The `q` real values a node's quantizer can output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantizedAlphabet {
    levels: Vec<f64>,
}

impl QuantizedAlphabet {
    pub fn new(levels: Vec<f64>) -> Result<Self> {
        if levels.is_empty() {
            return Err(invalid("levels", "alphabet must have at least one level"));
        }
        if levels.iter().any(|v| !v.is_finite()) {
            return Err(invalid("levels", "levels must be finite"));
        }
        if levels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid("levels", "levels must be strictly increasing"));
        }
        Ok(Self { levels })
    }

    /// Levels `0, 1, ..., q-1`.
    pub fn uniform(q: usize) -> Self {
        Self::with_offset(q, 0.0)
    }

    /// Levels `offset, offset + 1, ..., offset + q - 1`.
    pub fn with_offset(q: usize, offset: f64) -> Self {
        assert!(q >= 1, "alphabet needs at least one level");
        Self {
            levels: (0..q).map(|l| offset + l as f64).collect(),
        }
    }

    pub fn q(&self) -> usize {
        self.levels.len()
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    /// Common step if the levels form an arithmetic progression.
    pub fn uniform_step(&self) -> Option<f64> {
        if self.levels.len() < 2 {
            return None;
        }
        let step = self.levels[1] - self.levels[0];
        let tol = 1e-12 * self.levels.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        self.levels
            .windows(2)
            .all(|w| ((w[1] - w[0]) - step).abs() <= tol)
            .then_some(step)
    }
}

/// How many nodes transmitted each level, together with the function value
/// that combination produces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputProfile {
    pub counts: Vec<u32>,
    pub value: f64,
}

impl InputProfile {
    pub fn new(counts: Vec<u32>, value: f64) -> Self {
        Self { counts, value }
    }

    /// Number of nodes.
    pub fn k(&self) -> usize {
        self.counts.iter().map(|&c| c as usize).sum()
    }

    pub fn q(&self) -> usize {
        self.counts.len()
    }

    /// Per-node level indices, nodes taking levels in nondecreasing order.
    pub fn expand(&self) -> Vec<usize> {
        let mut levels = Vec::with_capacity(self.k());
        for (level, &count) in self.counts.iter().enumerate() {
            levels.extend(std::iter::repeat_n(level, count as usize));
        }
        levels
    }
}

/// Number of multisets of size `k` over `q` levels, `C(k + q - 1, q - 1)`,
/// or `None` on `u128` overflow.
pub fn multiset_count(k: usize, q: usize) -> Option<u128> {
    if q == 0 {
        return Some(u128::from(k == 0));
    }
    let n = (k + q - 1) as u128;
    let r = (q - 1).min(k) as u128;
    let mut acc: u128 = 1;
    for i in 0..r {
        // acc * (n - i) is divisible by (i + 1) at every step
        acc = acc.checked_mul(n - i)? / (i + 1);
    }
    Some(acc)
}

/// Every multiset of `k` inputs over the alphabet, with its function value.
///
/// Profiles are ordered lexicographically by their sorted level tuple
/// `(s_1 <= s_2 <= ... <= s_K)`, so the all-lowest-level profile comes first.
pub fn enumerate_profiles(
    func: &AggregationFunction,
    k: usize,
    alphabet: &QuantizedAlphabet,
) -> Result<Vec<InputProfile>> {
    enumerate_profiles_capped(func, k, alphabet, DEFAULT_PROFILE_CAP)
}

pub fn enumerate_profiles_capped(
    func: &AggregationFunction,
    k: usize,
    alphabet: &QuantizedAlphabet,
    cap: u128,
) -> Result<Vec<InputProfile>> {
    let q = alphabet.q();
    if k < 1 {
        return Err(invalid("K", "need at least one node"));
    }
    if q < 2 {
        return Err(invalid("q", "need at least two quantization levels"));
    }
    if !func.is_symmetric() {
        return Err(Error::NonSymmetric);
    }
    let count = multiset_count(k, q).unwrap_or(u128::MAX);
    if count > cap {
        return Err(Error::CombinatorialBlowup { count, cap });
    }

    let levels = alphabet.levels();
    let mut out = Vec::with_capacity(count as usize);
    let mut tuple = vec![0usize; k];
    let mut inputs = vec![0.0; k];
    loop {
        let mut counts = vec![0u32; q];
        for (slot, &level) in inputs.iter_mut().zip(&tuple) {
            counts[level] += 1;
            *slot = levels[level];
        }
        out.push(InputProfile::new(counts, func.evaluate(&inputs)));

        // advance to the next nondecreasing tuple
        let Some(pos) = tuple.iter().rposition(|&l| l + 1 < q) else {
            break;
        };
        let next = tuple[pos] + 1;
        for slot in &mut tuple[pos..] {
            *slot = next;
        }
    }
    debug_assert_eq!(out.len() as u128, count);
    Ok(out)
}

/// Function-value equality used throughout: relative tolerance `1e-9`.
pub fn values_equal(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * 1f64.max(a.abs()).max(b.abs())
}

/// One overlap-avoidance constraint between profiles `i < j`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintPair {
    pub i: usize,
    pub j: usize,
    /// `a_i - a_j`.
    pub diff: Vec<i32>,
    /// `|f_i - f_j| > 0`.
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSet {
    k: usize,
    q: usize,
    profiles: Vec<InputProfile>,
    pairs: Vec<ConstraintPair>,
    source: Option<ConstraintSource>,
}

/// What generated a constraint set, when it came from a plain built-in
/// function; used by closed-form designs that only apply to one function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSource {
    pub kind: AggregationKind,
    pub levels: Vec<f64>,
}

/// Pairs every two profiles with differing function values.
pub fn build_constraints(profiles: &[InputProfile]) -> Result<ConstraintSet> {
    let first = profiles
        .first()
        .ok_or_else(|| invalid("profiles", "need at least one profile"))?;
    let (k, q) = (first.k(), first.q());
    for p in profiles {
        if p.q() != q {
            return Err(Error::DimensionMismatch {
                expected: q,
                got: p.q(),
            });
        }
        if p.k() != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                got: p.k(),
            });
        }
    }

    let mut pairs = Vec::new();
    for (i, pi) in profiles.iter().enumerate() {
        for (j, pj) in profiles.iter().enumerate().skip(i + 1) {
            if values_equal(pi.value, pj.value) {
                continue;
            }
            let diff: Vec<i32> = pi
                .counts
                .iter()
                .zip(&pj.counts)
                .map(|(&a, &b)| a as i32 - b as i32)
                .collect();
            pairs.push(ConstraintPair {
                i,
                j,
                diff,
                gap: (pi.value - pj.value).abs(),
            });
        }
    }
    Ok(ConstraintSet {
        k,
        q,
        profiles: profiles.to_vec(),
        pairs,
        source: None,
    })
}

impl ConstraintSet {
    /// Enumerates profiles of `func` and builds their constraints in one go,
    /// remembering the function when it is a plain built-in.
    pub fn from_function(
        func: &AggregationFunction,
        k: usize,
        alphabet: &QuantizedAlphabet,
        cap: u128,
    ) -> Result<Self> {
        let profiles = enumerate_profiles_capped(func, k, alphabet, cap)?;
        let mut set = build_constraints(&profiles)?;
        if func.is_plain() {
            set.source = Some(ConstraintSource {
                kind: func.kind(),
                levels: alphabet.levels().to_vec(),
            });
        }
        Ok(set)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn profiles(&self) -> &[InputProfile] {
        &self.profiles
    }

    pub fn pairs(&self) -> &[ConstraintPair] {
        &self.pairs
    }

    pub fn source(&self) -> Option<&ConstraintSource> {
        self.source.as_ref()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(ConstraintFile::from(self)).expect("constraint set serializes")
    }

    pub fn from_json(value: serde_json::Value) -> std::result::Result<Self, String> {
        let file: ConstraintFile = serde_json::from_value(value).map_err(|e| e.to_string())?;
        let mut set = build_constraints(&file.profiles).map_err(|e| e.to_string())?;
        if set.k != file.k || set.q != file.q {
            return Err(format!(
                "header says K={}, q={} but profiles have K={}, q={}",
                file.k, file.q, set.k, set.q
            ));
        }
        set.source = file.source;
        Ok(set)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConstraintFile {
    #[serde(rename = "K")]
    k: usize,
    q: usize,
    profiles: Vec<InputProfile>,
    pairs: Vec<PairRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    source: Option<ConstraintSource>,
}

#[derive(Serialize, Deserialize)]
struct PairRecord {
    i: usize,
    j: usize,
    gap: f64,
}

impl From<&ConstraintSet> for ConstraintFile {
    fn from(set: &ConstraintSet) -> Self {
        Self {
            k: set.k,
            q: set.q,
            profiles: set.profiles.clone(),
            pairs: set
                .pairs
                .iter()
                .map(|p| PairRecord {
                    i: p.i,
                    j: p.j,
                    gap: p.gap,
                })
                .collect(),
            source: set.source.clone(),
        }
    }
}

/// Noiseless superimposed point `sum_l a_l x_l`.
pub fn superimpose(x: &[Complex64], profile: &InputProfile) -> Result<Complex64> {
    superimpose_counts(x, &profile.counts)
}

pub fn superimpose_counts(x: &[Complex64], counts: &[u32]) -> Result<Complex64> {
    if x.len() != counts.len() {
        return Err(Error::DimensionMismatch {
            expected: counts.len(),
            got: x.len(),
        });
    }
    Ok(x.iter().zip(counts).map(|(xl, &a)| xl * a as f64).sum())
}

/// `<b, x>` for an integer difference vector.
pub(crate) fn diff_dot(diff: &[i32], x: &[Complex64]) -> Complex64 {
    diff.iter()
        .zip(x)
        .filter(|(&b, _)| b != 0)
        .map(|(&b, xl)| xl * b as f64)
        .sum()
}
