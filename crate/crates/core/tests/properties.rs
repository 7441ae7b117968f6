//! Randomized invariants of the limit law, empirical laws, transforms and the reflected step.

use mlqlab::sde::euler_reflect_step;
use mlqlab::{EmpiricalDistribution, LevelPartition, LimitDistribution, RenewalSpec};
use proptest::prelude::*;

/// Levels with gaps of at least 0.2, drifts with a negative last entry.
fn limit_params() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<f64>)> {
    (2usize..=4).prop_flat_map(|k| {
        (
            prop::collection::vec(0.2f64..2.0, k - 1),
            prop::collection::vec(prop_oneof![Just(0.0), -2.0f64..2.0], k - 1),
            -3.0f64..-0.05,
            prop::collection::vec(0.2f64..4.0, k),
        )
            .prop_map(|(gaps, mut drifts, last, vars)| {
                let levels = gaps
                    .iter()
                    .scan(0.0, |acc, g| {
                        *acc += g;
                        Some(*acc)
                    })
                    .collect();
                drifts.push(last);
                (levels, drifts, vars)
            })
    })
}

fn build(levels: &[f64], drifts: &[f64], vars: &[f64]) -> LimitDistribution {
    LimitDistribution::new(
        LevelPartition::new(levels.to_vec()).unwrap(),
        drifts.to_vec(),
        vars.to_vec(),
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn limit_masses_and_cdf((levels, drifts, vars) in limit_params()) {
        let l = build(&levels, &drifts, &vars);
        prop_assert!((l.d().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(l.d().iter().all(|&d| d > 0.0));
        let mut prev = 0.0;
        for i in 0..400 {
            let x = 0.025 * i as f64;
            let f = l.cdf(x);
            prop_assert!(f >= prev - 1e-15 && f <= 1.0 + 1e-15);
            prop_assert!(l.pdf(x) >= 0.0);
            prev = f;
        }
        for (i, &b) in levels.iter().enumerate() {
            prop_assert!((l.cdf(b) - l.d()[..=i].iter().sum::<f64>()).abs() < 1e-10);
        }
    }

    #[test]
    fn zero_drift_branch_is_continuous((levels, mut drifts, vars) in limit_params(), which in 0usize..3) {
        let i = which.min(drifts.len() - 2);
        drifts[i] = 0.0;
        let at_zero = build(&levels, &drifts, &vars);
        for eps in [1e-8, -1e-8] {
            drifts[i] = eps;
            let near = build(&levels, &drifts, &vars);
            for (a, b) in near.d().iter().zip(at_zero.d()) {
                prop_assert!((a - b).abs() < 1e-6);
            }
            for j in 0..50 {
                let x = 0.1 * j as f64;
                prop_assert!((near.pdf(x) - at_zero.pdf(x)).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn ecdf_is_a_distribution_function(
        mut samples in prop::collection::vec(0.0f64..10.0, 1..200),
    ) {
        samples.sort_by(f64::total_cmp);
        let e = EmpiricalDistribution::from_samples(&samples).unwrap();
        let mut prev = 0.0;
        for &x in e.support() {
            let f = e.cdf(x);
            prop_assert!(f >= prev);
            prop_assert!(e.cdf(x - 1e-9) < f);
            prev = f;
        }
        prop_assert!((e.cdf(10.0) - 1.0).abs() < 1e-12);
        prop_assert_eq!(e.cdf(-1.0), 0.0);
    }

    #[test]
    fn truncated_transform_decreases(m in 0.5f64..20.0, s in -0.5f64..5.0, ds in 0.01f64..1.0, which in 0usize..5) {
        let spec = [
            RenewalSpec::Exponential,
            RenewalSpec::Deterministic,
            RenewalSpec::erlang(3).unwrap(),
            RenewalSpec::hyperexponential(0.3, 0.6).unwrap(),
            RenewalSpec::uniform(0.4).unwrap(),
        ][which];
        let a = spec.truncated_laplace(m, s).unwrap();
        let b = spec.truncated_laplace(m, s + ds).unwrap();
        prop_assert!(b < a, "{:?}", spec);
        prop_assert!(s < 0.0 || a <= 1.0 + 1e-15);
    }

    #[test]
    fn reflected_step_is_complementary(z in 0.0f64..5.0, b in -3.0f64..3.0, s in 0.0f64..3.0, g in -5.0f64..5.0) {
        let (next, dy) = euler_reflect_step(z, b, s, 1e-2, g);
        prop_assert!(next >= 0.0 && dy >= 0.0);
        prop_assert!(next == 0.0 || dy == 0.0);
        let proposal = z + b * 1e-2 + s * 0.1 * g;
        prop_assert!((next - dy - proposal).abs() < 1e-12);
    }
}
