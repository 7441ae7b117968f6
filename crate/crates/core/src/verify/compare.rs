//! Distances between empirical and closed-form laws on `[0, ∞)`.
//!
//! Values are plug-in distances without p-values: the DES and SDE outputs
//! are time-correlated, so classical KS p-values would be wrong.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::limit::LimitDistribution;
use crate::quad;
use crate::stats::EmpiricalDistribution;

/// Either side of a comparison.
#[derive(Debug, Clone)]
pub enum Law<'a> {
    Empirical(&'a EmpiricalDistribution),
    Limit(&'a LimitDistribution),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub ks: f64,
    pub w1: f64,
    pub mean_a: f64,
    pub mean_b: f64,
    pub second_moment_a: f64,
    pub second_moment_b: f64,
}

impl Comparison {
    pub fn mean_gap(&self) -> f64 {
        self.mean_a - self.mean_b
    }

    pub fn second_moment_gap(&self) -> f64 {
        self.second_moment_a - self.second_moment_b
    }
}

pub fn compare(a: &Law<'_>, b: &Law<'_>) -> Result<Comparison> {
    Ok(match (a, b) {
        (Law::Empirical(e), Law::Limit(l)) => empirical_vs_limit(e, l),
        (Law::Limit(l), Law::Empirical(e)) => {
            let c = empirical_vs_limit(e, l);
            Comparison {
                mean_a: c.mean_b,
                mean_b: c.mean_a,
                second_moment_a: c.second_moment_b,
                second_moment_b: c.second_moment_a,
                ..c
            }
        }
        (Law::Empirical(x), Law::Empirical(y)) => empirical_vs_empirical(x, y),
        (Law::Limit(x), Law::Limit(y)) => limit_vs_limit(x, y)?,
    })
}

/// Sup-distance including left limits at every atom.
pub fn ks_empirical_vs_limit(e: &EmpiricalDistribution, l: &LimitDistribution) -> f64 {
    let mut prev = 0.0;
    let mut ks: f64 = 0.0;
    for (&x, &fe) in e.support().iter().zip(e.cumulative()) {
        let f = l.cdf(x);
        ks = ks.max((fe - f).abs()).max((prev - f).abs());
        prev = fe;
    }
    ks
}

/// `∫ |F_e - F| dx` with the ECDF held constant between atoms.
pub fn w1_empirical_vs_limit(e: &EmpiricalDistribution, l: &LimitDistribution) -> f64 {
    let support = e.support();
    let cum = e.cumulative();
    let piece = |level: f64, a: f64, b: f64| {
        if b <= a {
            return 0.0;
        }
        quad::integrate(|x| (level - l.cdf(x)).abs(), a, b, 1e-13, 1e-10)
    };
    let mut total = piece(0.0, 0.0, support[0].max(0.0));
    for k in 0..support.len() - 1 {
        total += piece(cum[k], support[k], support[k + 1]);
    }
    let last = *support.last().expect("nonempty support");
    total + piece(1.0, last, last.max(l.quadrature_upper()))
}

fn empirical_vs_limit(e: &EmpiricalDistribution, l: &LimitDistribution) -> Comparison {
    Comparison {
        ks: ks_empirical_vs_limit(e, l),
        w1: w1_empirical_vs_limit(e, l),
        mean_a: e.moment(1).value,
        mean_b: l.mean(),
        second_moment_a: e.moment(2).value,
        second_moment_b: l.moment(2).expect("order 2 supported"),
    }
}

fn empirical_vs_empirical(a: &EmpiricalDistribution, b: &EmpiricalDistribution) -> Comparison {
    let mut grid: Vec<f64> = a.support().iter().chain(b.support()).copied().collect();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let mut ks: f64 = 0.0;
    let mut w1 = 0.0;
    for k in 0..grid.len() {
        let gap = (a.cdf(grid[k]) - b.cdf(grid[k])).abs();
        ks = ks.max(gap);
        if k + 1 < grid.len() {
            w1 += gap * (grid[k + 1] - grid[k]);
        }
    }
    Comparison {
        ks,
        w1,
        mean_a: a.moment(1).value,
        mean_b: b.moment(1).value,
        second_moment_a: a.moment(2).value,
        second_moment_b: b.moment(2).value,
    }
}

fn limit_vs_limit(a: &LimitDistribution, b: &LimitDistribution) -> Result<Comparison> {
    const POINTS: usize = 20_000;
    let upper = a.quadrature_upper().max(b.quadrature_upper());
    let mut knots: Vec<f64> = a
        .partition()
        .boundaries()
        .iter()
        .chain(b.partition().boundaries())
        .copied()
        .chain((0..=POINTS).map(|j| upper * j as f64 / POINTS as f64))
        .collect();
    knots.sort_by(f64::total_cmp);
    knots.dedup();
    let ks = knots
        .iter()
        .map(|&x| (a.cdf(x) - b.cdf(x)).abs())
        .fold(0.0, f64::max);
    let w1 = knots
        .windows(2)
        .map(|w| quad::gk15(&|x: f64| (a.cdf(x) - b.cdf(x)).abs(), w[0], w[1]).0)
        .sum();
    Ok(Comparison {
        ks,
        w1,
        mean_a: a.mean(),
        mean_b: b.mean(),
        second_moment_a: a.moment(2)?,
        second_moment_b: b.moment(2)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::LevelPartition;

    fn e1() -> LimitDistribution {
        LimitDistribution::new(
            LevelPartition::new(vec![1.0]).unwrap(),
            vec![0.0, -1.0],
            vec![2.0, 2.0],
        )
        .unwrap()
    }

    #[test]
    fn self_distance_is_zero() {
        let l = e1();
        let c = compare(&Law::Limit(&l), &Law::Limit(&l)).unwrap();
        assert_eq!((c.ks, c.w1), (0.0, 0.0));
        let e = EmpiricalDistribution::from_samples(&[0.1, 0.5, 2.0]).unwrap();
        let c = compare(&Law::Empirical(&e), &Law::Empirical(&e)).unwrap();
        assert_eq!((c.ks, c.w1), (0.0, 0.0));
    }

    #[test]
    fn single_atom_against_limit() {
        // Point mass at the median: KS = 1/2 and W1 = E|X - m|.
        let l = e1();
        let m = l.quantile(0.5).unwrap();
        let e = EmpiricalDistribution::from_samples(&[m]).unwrap();
        assert!((ks_empirical_vs_limit(&e, &l) - 0.5).abs() < 1e-12);
        // E|X - 1| = ∫_0^1 (1 - x)/2 dx + ∫_1^∞ (x - 1) e^{-(x-1)}/2 dx = 1/4 + 1/2.
        assert!((w1_empirical_vs_limit(&e, &l) - 0.75).abs() < 1e-9);
    }

    #[test]
    fn arguments_swap_moments() {
        let l = e1();
        let e = EmpiricalDistribution::from_samples(&[0.3, 0.9]).unwrap();
        let ab = compare(&Law::Empirical(&e), &Law::Limit(&l)).unwrap();
        let ba = compare(&Law::Limit(&l), &Law::Empirical(&e)).unwrap();
        assert_eq!(ab.ks, ba.ks);
        assert_eq!(ab.mean_gap(), -ba.mean_gap());
    }
}
