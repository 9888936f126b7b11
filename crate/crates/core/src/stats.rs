//! Two-sample Kolmogorov-Smirnov and chi-square goodness-of-fit tests.

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
    pub n1: usize,
    pub n2: usize,
}

/// `P(K > lambda)` for the Kolmogorov distribution.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.18 {
        let pi2 = std::f64::consts::PI * std::f64::consts::PI;
        let t = -pi2 / (8.0 * lambda * lambda);
        let s: f64 = (1..=6).map(|j| ((2 * j - 1) as f64).powi(2) * t).map(f64::exp).sum();
        (1.0 - (2.0 * std::f64::consts::PI).sqrt() / lambda * s).clamp(0.0, 1.0)
    } else {
        let mut s = 0.0;
        for j in 1..=100 {
            let term = (-2.0 * (j * j) as f64 * lambda * lambda).exp();
            s += if j % 2 == 1 { term } else { -term };
            if term < 1e-18 {
                break;
            }
        }
        (2.0 * s).clamp(0.0, 1.0)
    }
}

/// Two-sample KS test with the asymptotic p-value (Stephens' small-sample correction).
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidArgument("KS test needs two nonempty samples".into()));
    }
    if a.iter().chain(b).any(|x| x.is_nan()) {
        return Err(Error::InvalidArgument("KS samples contain NaN".into()));
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n1, n2) = (a.len(), b.len());
    let (mut i, mut j) = (0, 0);
    let mut d = 0.0f64;
    while i < n1 && j < n2 {
        let x = a[i].min(b[j]);
        while i < n1 && a[i] <= x {
            i += 1;
        }
        while j < n2 && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n1 as f64 - j as f64 / n2 as f64).abs());
    }
    let en = ((n1 * n2) as f64 / (n1 + n2) as f64).sqrt();
    let p = kolmogorov_sf((en + 0.12 + 0.11 / en) * d);
    Ok(KsResult {
        statistic: d,
        p_value: p,
        n1,
        n2,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChiSquareResult {
    pub statistic: f64,
    pub degrees_of_freedom: usize,
    pub p_value: f64,
    /// Cells left after pooling those with expected count below 5.
    pub cells: usize,
    pub draws: u64,
}

/// Pearson goodness of fit. `cells` holds `(observed, probability)` pairs; whatever
/// probability mass they do not cover forms a residual cell together with `residual_observed`.
pub fn chi_square_gof(cells: &[(u64, f64)], residual_observed: u64) -> Result<ChiSquareResult> {
    let draws: u64 = cells.iter().map(|c| c.0).sum::<u64>() + residual_observed;
    if draws == 0 {
        return Err(Error::InvalidArgument("chi-square test needs observations".into()));
    }
    let covered: f64 = cells.iter().map(|c| c.1).sum();
    if cells.iter().any(|c| c.1.is_nan() || c.1 < 0.0) || covered > 1.0 + 1e-9 {
        return Err(Error::InvalidArgument("cell probabilities must be nonnegative and sum to at most 1".into()));
    }
    let total = draws as f64;
    let mut kept: Vec<(f64, f64)> = Vec::new();
    let mut pooled = (residual_observed as f64, (1.0 - covered).max(0.0) * total);
    for &(obs, p) in cells {
        if p * total >= 5.0 {
            kept.push((obs as f64, p * total));
        } else {
            pooled.0 += obs as f64;
            pooled.1 += p * total;
        }
    }
    if pooled.1 > 0.0 || pooled.0 > 0.0 {
        if pooled.1 < 5.0 && !kept.is_empty() {
            let smallest = kept
                .iter()
                .enumerate()
                .min_by(|x, y| x.1 .1.total_cmp(&y.1 .1))
                .map(|(i, _)| i)
                .unwrap();
            kept[smallest].0 += pooled.0;
            kept[smallest].1 += pooled.1;
        } else {
            kept.push(pooled);
        }
    }
    if kept.len() < 2 {
        return Err(Error::InvalidArgument("chi-square test needs at least two cells".into()));
    }
    if kept.iter().any(|c| c.1 <= 0.0 && c.0 > 0.0) {
        return Ok(ChiSquareResult {
            statistic: f64::INFINITY,
            degrees_of_freedom: kept.len() - 1,
            p_value: 0.0,
            cells: kept.len(),
            draws,
        });
    }
    let statistic: f64 = kept.iter().map(|(o, e)| (o - e) * (o - e) / e).sum();
    let df = kept.len() - 1;
    let dist = ChiSquared::new(df as f64).map_err(|e| Error::NumericFailure(e.to_string()))?;
    Ok(ChiSquareResult {
        statistic,
        degrees_of_freedom: df,
        p_value: dist.sf(statistic),
        cells: kept.len(),
        draws,
    })
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Standard error of the mean.
pub fn standard_error(xs: &[f64]) -> f64 {
    let m = mean(xs);
    let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0);
    (var / xs.len() as f64).sqrt()
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// `k + U - 1/2` with `U` uniform on `[0, 1)`: an integer observation spread over its
/// lattice cell, so that KS comparisons between different lattices are valid.
pub fn continuize<R: Rng + ?Sized>(k: i64, rng: &mut R) -> f64 {
    k as f64 + rng.random::<f64>() - 0.5
}

/// Empirical CDF of a sorted sample at `x`.
pub fn ecdf(sorted: &[f64], x: f64) -> f64 {
    sorted.partition_point(|v| *v <= x) as f64 / sorted.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn kolmogorov_tail_values() {
        // Reference values of the Kolmogorov distribution.
        assert!((kolmogorov_sf(1.3581) - 0.05).abs() < 2e-4);
        assert!((kolmogorov_sf(1.6276) - 0.01).abs() < 1e-4);
        assert!((kolmogorov_sf(0.5) - 0.9639).abs() < 1e-4);
        assert!((kolmogorov_sf(1.0) - 0.2700).abs() < 1e-4);
        // Both branches agree at the switch point.
        let lo = {
            let pi2 = std::f64::consts::PI.powi(2);
            let l = 1.18;
            1.0 - (2.0 * std::f64::consts::PI).sqrt() / l
                * (1..=6).map(|j| (-((2 * j - 1) as f64).powi(2) * pi2 / (8.0 * l * l)).exp()).sum::<f64>()
        };
        assert!((lo - kolmogorov_sf(1.18)).abs() < 1e-10);
    }

    #[test]
    fn ks_statistic_by_hand() {
        let r = ks_two_sample(&[1.0, 2.0, 3.0], &[2.5, 3.5, 4.5, 5.5]).unwrap();
        assert!((r.statistic - 0.75).abs() < 1e-12);
        let same = ks_two_sample(&[1.0, 2.0, 2.0], &[2.0, 1.0, 2.0]).unwrap();
        assert_eq!(same.statistic, 0.0);
        assert_eq!(same.p_value, 1.0);
    }

    #[test]
    fn ks_separates_shifted_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a: Vec<f64> = (0..500).map(|_| rng.random::<f64>()).collect();
        let b: Vec<f64> = (0..500).map(|_| rng.random::<f64>()).collect();
        let c: Vec<f64> = (0..500).map(|_| rng.random::<f64>() + 0.3).collect();
        assert!(ks_two_sample(&a, &b).unwrap().p_value > 0.01);
        assert!(ks_two_sample(&a, &c).unwrap().p_value < 1e-6);
    }

    #[test]
    fn chi_square_pools_small_cells() {
        let r = chi_square_gof(&[(50, 0.5), (48, 0.48), (1, 0.01)], 1).unwrap();
        assert_eq!(r.cells, 2);
        assert_eq!(r.degrees_of_freedom, 1);
        assert!(r.p_value > 0.5);
        let bad = chi_square_gof(&[(900, 0.5), (100, 0.5)], 0).unwrap();
        assert!(bad.p_value < 1e-10);
        let impossible = chi_square_gof(&[(500, 0.5), (500, 0.5)], 3).unwrap();
        assert!(impossible.statistic > 0.0);
    }

    #[test]
    fn chi_square_uniform_dice() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut counts = [0u64; 6];
        for _ in 0..60_000 {
            counts[rng.random_range(0..6)] += 1;
        }
        let cells: Vec<(u64, f64)> = counts.iter().map(|&c| (c, 1.0 / 6.0)).collect();
        let r = chi_square_gof(&cells, 0).unwrap();
        assert_eq!(r.degrees_of_freedom, 5);
        assert!(r.p_value > 1e-3);
    }
}
