//! Monte Carlo checks of renewal sampling, truncated transforms and limit draws.

use mlqlab::{LevelPartition, LimitDistribution, RenewalSpec, RngStream, StreamPurpose};

const DRAWS: usize = 1_000_000;

fn families() -> Vec<RenewalSpec> {
    vec![
        RenewalSpec::Exponential,
        RenewalSpec::Deterministic,
        RenewalSpec::erlang(4).unwrap(),
        RenewalSpec::hyperexponential(0.25, 0.5).unwrap(),
        RenewalSpec::uniform(0.5).unwrap(),
    ]
}

fn rng(group: u32) -> RngStream {
    RngStream::derive(2024, StreamPurpose::RenewalTrace, group, 0)
}

/// Sample mean and its standard error.
fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (v / n).sqrt())
}

#[test]
fn unit_mean_and_variance_for_every_family() {
    for (g, spec) in families().into_iter().enumerate() {
        let mut r = rng(g as u32);
        let xs: Vec<f64> = (0..DRAWS).map(|_| spec.sample(&mut r)).collect();
        assert!(xs.iter().all(|&x| x > 0.0), "{spec:?}");
        let (m, se) = mean_se(&xs);
        if spec == RenewalSpec::Deterministic {
            assert!(xs.iter().all(|&x| x == 1.0));
            continue;
        }
        assert!((m - 1.0).abs() <= 4.0 * se, "{spec:?}: mean {m} se {se}");
        let sq: Vec<f64> = xs.iter().map(|x| (x - 1.0).powi(2)).collect();
        let (v, vse) = mean_se(&sq);
        assert!(
            (v - spec.variance()).abs() <= 4.0 * vse,
            "{spec:?}: var {v} se {vse}"
        );
    }
}

#[test]
fn exponential_mean_and_erlang_variance_bands() {
    let mut r = rng(10);
    let xs: Vec<f64> = (0..DRAWS)
        .map(|_| RenewalSpec::Exponential.sample(&mut r))
        .collect();
    assert!((mean_se(&xs).0 - 1.0).abs() < 0.01);
    let erlang = RenewalSpec::erlang(4).unwrap();
    let xs: Vec<f64> = (0..DRAWS).map(|_| erlang.sample(&mut r)).collect();
    let var = xs.iter().map(|x| (x - 1.0).powi(2)).sum::<f64>() / DRAWS as f64;
    assert!((var - 0.25).abs() < 0.01, "{var}");
}

#[test]
fn truncated_laplace_matches_monte_carlo() {
    for (g, spec) in families().into_iter().enumerate() {
        let mut r = rng(20 + g as u32);
        for (m, s) in [(2.0, 0.7), (0.8, -0.5), (5.0, 2.0)] {
            let xs: Vec<f64> = (0..200_000)
                .map(|_| (-s * spec.sample(&mut r).min(m)).exp())
                .collect();
            let (est, se) = mean_se(&xs);
            let exact = spec.truncated_laplace(m, s).unwrap();
            assert!(
                (est - exact).abs() <= (4.0 * se).max(1e-9),
                "{spec:?} m={m} s={s}: {est} vs {exact}"
            );
        }
    }
}

#[test]
fn truncated_transform_limits() {
    for spec in families() {
        assert_eq!(spec.truncated_laplace(3.0, 0.0).unwrap(), 1.0);
        let far = spec.truncated_laplace(1e6, 0.4).unwrap();
        let full = spec.truncated_laplace(f64::INFINITY, 0.4).unwrap();
        assert!((far - full).abs() < 1e-12, "{spec:?}");
    }
    assert!(
        (RenewalSpec::Exponential
            .truncated_laplace(f64::INFINITY, 1.0)
            .unwrap()
            - 0.5)
            .abs()
            < 1e-15
    );
    assert!(
        (RenewalSpec::Deterministic
            .truncated_laplace(2.0, 0.3)
            .unwrap()
            - (-0.3f64).exp())
        .abs()
            < 1e-15
    );
    assert!((RenewalSpec::Exponential.truncated_moment(f64::INFINITY, 2) - 2.0).abs() < 1e-12);
    assert!((RenewalSpec::Exponential.truncated_moment(f64::INFINITY, 3) - 6.0).abs() < 1e-12);
    assert_eq!(RenewalSpec::Deterministic.truncated_moment(1.5, 2), 1.0);
}

#[test]
fn streams_reproduce_and_differ() {
    let a: Vec<f64> = (0..5)
        .map({
            let mut r = rng(1);
            move |_| r.uniform()
        })
        .collect();
    let b: Vec<f64> = (0..5)
        .map({
            let mut r = rng(1);
            move |_| r.uniform()
        })
        .collect();
    let c: Vec<f64> = (0..5)
        .map({
            let mut r = rng(2);
            move |_| r.uniform()
        })
        .collect();
    assert_eq!(a, b);
    assert_ne!(a, c);
}

fn e1() -> LimitDistribution {
    LimitDistribution::new(
        LevelPartition::new(vec![1.0]).unwrap(),
        vec![0.0, -1.0],
        vec![2.0, 2.0],
    )
    .unwrap()
}

#[test]
fn limit_draws_match_masses_and_tail() {
    let l = e1();
    let mut r = RngStream::derive(7, StreamPurpose::LimitSampling, 0, 0);
    let xs: Vec<f64> = (0..DRAWS).map(|_| l.sample(&mut r)).collect();
    let inside: Vec<f64> = xs.iter().map(|&x| f64::from(u8::from(x <= 1.0))).collect();
    let (p, se) = mean_se(&inside);
    assert!((p - 0.5).abs() <= 4.0 * se, "{p} ± {se}");
    let tail: Vec<f64> = xs.iter().filter(|&&x| x > 1.0).map(|x| x - 1.0).collect();
    let (m, se) = mean_se(&tail);
    assert!((m - 1.0).abs() <= 4.0 * se, "{m} ± {se}");
}

#[test]
fn quantile_inverts_cdf() {
    let l = e1();
    for i in 1..200 {
        let x = 0.05 * i as f64;
        let back = l.quantile(l.cdf(x)).unwrap();
        assert!((back - x).abs() < 1e-9, "x={x} back={back}");
    }
}
