use std::collections::BTreeSet;

use num_complex::Complex64;
use oaccomp::function_model::{multiset_count, values_equal};
use oaccomp::{
    build_constraints, enumerate_profiles, superimpose, AggregationFunction, AggregationKind,
    ConstraintSet, QuantizedAlphabet, DEFAULT_PROFILE_CAP,
};
use proptest::prelude::*;

fn builtin(kind: usize) -> AggregationFunction {
    [
        AggregationFunction::sum(),
        AggregationFunction::product(),
        AggregationFunction::max(),
        AggregationFunction::arithmetic_mean(),
        AggregationFunction::geometric_mean(),
    ][kind]
        .clone()
}

/// Every ordered input tuple, odometer style.
fn ordered_tuples(k: usize, q: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut t = vec![0usize; k];
    loop {
        out.push(t.clone());
        let mut pos = 0;
        loop {
            if pos == k {
                return out;
            }
            t[pos] += 1;
            if t[pos] < q {
                break;
            }
            t[pos] = 0;
            pos += 1;
        }
    }
}

fn factorial(n: u128) -> u128 {
    (1..=n).product()
}

/// Rounded key so superimposed points can be compared as a set.
fn key(z: Complex64) -> (i64, i64) {
    ((z.re * 1e9).round() as i64, (z.im * 1e9).round() as i64)
}

#[test]
fn examples_from_small_instances() {
    let two = QuantizedAlphabet::uniform(2);
    let sum = enumerate_profiles(&AggregationFunction::sum(), 2, &two).unwrap();
    let vals: Vec<f64> = sum.iter().map(|p| p.value).collect();
    assert_eq!(vals, vec![0.0, 1.0, 2.0]);

    let max = enumerate_profiles(&AggregationFunction::max(), 2, &two).unwrap();
    let vals: Vec<f64> = max.iter().map(|p| p.value).collect();
    assert_eq!(vals, vec![0.0, 1.0, 1.0]);

    let s4 = enumerate_profiles(
        &AggregationFunction::sum(),
        2,
        &QuantizedAlphabet::uniform(4),
    )
    .unwrap();
    let mut vals: Vec<f64> = s4.iter().map(|p| p.value).collect();
    vals.sort_by(f64::total_cmp);
    assert_eq!(vals, vec![0., 1., 2., 2., 3., 3., 4., 4., 5., 6.]);

    let s33 = enumerate_profiles(
        &AggregationFunction::sum(),
        3,
        &QuantizedAlphabet::uniform(3),
    )
    .unwrap();
    assert_eq!(s33.len(), 10);

    assert_eq!(build_constraints(&sum).unwrap().len(), 3);
    assert_eq!(build_constraints(&max).unwrap().len(), 2);
    let constant = AggregationFunction::custom(|_| 7.0, true);
    let c = ConstraintSet::from_function(&constant, 3, &two, DEFAULT_PROFILE_CAP).unwrap();
    assert!(c.is_empty());
}

#[test]
fn lexicographic_order_is_fixed() {
    let p = enumerate_profiles(
        &AggregationFunction::sum(),
        2,
        &QuantizedAlphabet::uniform(3),
    )
    .unwrap();
    let counts: Vec<Vec<u32>> = p.iter().map(|p| p.counts.clone()).collect();
    assert_eq!(
        counts,
        vec![
            vec![2, 0, 0],
            vec![1, 1, 0],
            vec![1, 0, 1],
            vec![0, 2, 0],
            vec![0, 1, 1],
            vec![0, 0, 2],
        ]
    );
}

#[test]
fn superimpose_examples() {
    let bpsk = [Complex64::new(-1.0, 0.0), Complex64::new(1.0, 0.0)];
    let p = oaccomp::InputProfile::new(vec![2, 0], 0.0);
    assert_eq!(superimpose(&bpsk, &p).unwrap(), Complex64::new(-2.0, 0.0));
    let p = oaccomp::InputProfile::new(vec![1, 1], 1.0);
    assert_eq!(superimpose(&bpsk, &p).unwrap(), Complex64::new(0.0, 0.0));
    let p = oaccomp::InputProfile::new(vec![0, 0], 0.0);
    assert_eq!(superimpose(&bpsk, &p).unwrap(), Complex64::new(0.0, 0.0));
    let p = oaccomp::InputProfile::new(vec![1, 1, 0], 0.0);
    assert!(superimpose(&bpsk, &p).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn profile_count_is_binomial(kind in 0usize..5, k in 1usize..6, q in 2usize..6) {
        let f = builtin(kind);
        let p = enumerate_profiles(&f, k, &QuantizedAlphabet::uniform(q)).unwrap();
        // C(K + q - 1, q - 1) by factorials
        let n = (k + q - 1) as u128;
        let expect = factorial(n) / (factorial((q - 1) as u128) * factorial(k as u128));
        prop_assert_eq!(p.len() as u128, expect);
        prop_assert_eq!(multiset_count(k, q), Some(expect));
        for prof in &p {
            prop_assert_eq!(prof.counts.iter().sum::<u32>() as usize, k);
        }
    }

    #[test]
    fn value_is_permutation_invariant(
        kind in 0usize..5,
        k in 1usize..5,
        q in 2usize..5,
        offset in 0.0f64..2.0,
        shuffle_seed in any::<u64>(),
    ) {
        let f = builtin(kind);
        let alphabet = QuantizedAlphabet::with_offset(q, offset);
        let levels = alphabet.levels().to_vec();
        for prof in enumerate_profiles(&f, k, &alphabet).unwrap() {
            let mut inputs: Vec<f64> = prof.expand().iter().map(|&l| levels[l]).collect();
            // Fisher-Yates with a tiny LCG so each profile sees a different order
            let mut s = shuffle_seed | 1;
            for i in (1..inputs.len()).rev() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                let j = (s >> 33) as usize % (i + 1);
                inputs.swap(i, j);
            }
            let v = f.evaluate(&inputs);
            prop_assert!(values_equal(v, prof.value), "{v} vs {}", prof.value);
        }
    }

    #[test]
    fn superimposed_set_matches_brute_force(
        kind in 0usize..5,
        k in 1usize..4,
        q in 2usize..5,
        xs in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 4),
    ) {
        let f = builtin(kind);
        let alphabet = QuantizedAlphabet::uniform(q);
        let x: Vec<Complex64> = xs[..q].iter().map(|&(a, b)| Complex64::new(a, b)).collect();
        let profiles = enumerate_profiles(&f, k, &alphabet).unwrap();
        let via_profiles: BTreeSet<(i64, i64)> = profiles
            .iter()
            .map(|p| key(superimpose(&x, p).unwrap()))
            .collect();
        let brute: BTreeSet<(i64, i64)> = ordered_tuples(k, q)
            .iter()
            .map(|t| key(t.iter().map(|&l| x[l]).sum()))
            .collect();
        prop_assert_eq!(via_profiles, brute);

        // the value set agrees as well
        let levels = alphabet.levels();
        let by_profile: BTreeSet<i64> =
            profiles.iter().map(|p| (p.value * 1e6).round() as i64).collect();
        let by_tuple: BTreeSet<i64> = ordered_tuples(k, q)
            .iter()
            .map(|t| {
                let inputs: Vec<f64> = t.iter().map(|&l| levels[l]).collect();
                (f.evaluate(&inputs) * 1e6).round() as i64
            })
            .collect();
        prop_assert_eq!(by_profile, by_tuple);
    }

    #[test]
    fn constraints_are_sound_and_complete(kind in 0usize..5, k in 1usize..5, q in 2usize..5) {
        let f = builtin(kind);
        let set = ConstraintSet::from_function(
            &f, k, &QuantizedAlphabet::uniform(q), DEFAULT_PROFILE_CAP,
        ).unwrap();
        let profiles = set.profiles();
        let mut listed = BTreeSet::new();
        for pair in set.pairs() {
            prop_assert!(pair.i < pair.j);
            prop_assert!(pair.gap > 0.0);
            prop_assert!(pair.diff.iter().any(|&d| d != 0));
            let expect: Vec<i32> = profiles[pair.i]
                .counts
                .iter()
                .zip(&profiles[pair.j].counts)
                .map(|(&a, &b)| a as i32 - b as i32)
                .collect();
            prop_assert_eq!(&pair.diff, &expect);
            prop_assert!(!values_equal(profiles[pair.i].value, profiles[pair.j].value));
            listed.insert((pair.i, pair.j));
        }
        for i in 0..profiles.len() {
            for j in i + 1..profiles.len() {
                if !listed.contains(&(i, j)) {
                    prop_assert!(values_equal(profiles[i].value, profiles[j].value));
                }
            }
        }
    }

    #[test]
    fn json_export_round_trips(kind in 0usize..5, k in 1usize..4, q in 2usize..5) {
        let f = builtin(kind);
        let set = ConstraintSet::from_function(
            &f, k, &QuantizedAlphabet::uniform(q), DEFAULT_PROFILE_CAP,
        ).unwrap();
        let back = ConstraintSet::from_json(set.to_json()).unwrap();
        prop_assert_eq!(back.pairs(), set.pairs());
        prop_assert_eq!(back.profiles(), set.profiles());
    }
}

#[test]
fn blowup_and_symmetry_errors() {
    let big = enumerate_profiles(
        &AggregationFunction::sum(),
        40,
        &QuantizedAlphabet::uniform(16),
    );
    assert!(matches!(
        big,
        Err(oaccomp::Error::CombinatorialBlowup { .. })
    ));
    let skew = AggregationFunction::custom(|v| v[0], false);
    assert_eq!(skew.kind(), AggregationKind::Custom);
    assert!(matches!(
        enumerate_profiles(&skew, 2, &QuantizedAlphabet::uniform(2)),
        Err(oaccomp::Error::NonSymmetric)
    ));
}
