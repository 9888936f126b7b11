//! Discrete snake reference: a uniform plane tree with uniform `{-1, 0, 1}` label
//! increments, rescaled so that its contour and label processes approximate the
//! Brownian snake head `(e, r)` with unit constants.

use std::path::{Path, PathBuf};

use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, Geometric};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampler::{replicate_rng, AttemptStats};
use crate::stats::continuize;
use crate::trees::{PathSample, PlaneTree};

pub const GRID_POINTS: usize = 1024;
pub const MIN_TREE_SIZE: usize = 100;

/// Constants dividing `H / sqrt(m)` and `S / m^(1/4)` for a tree with `m` vertices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingRecord {
    pub offspring: String,
    pub displacement: String,
    pub height_divisor: f64,
    pub label_divisor: f64,
}

impl ScalingRecord {
    /// Geometric(1/2) offspring (variance 2) and uniform `{-1, 0, 1}` steps (variance 2/3).
    pub fn reference() -> Self {
        ScalingRecord {
            offspring: "geometric(1/2)".into(),
            displacement: "uniform{-1,0,1}".into(),
            height_divisor: std::f64::consts::SQRT_2,
            label_divisor: (8.0f64 / 9.0).powf(0.25),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TreeMethod {
    /// Uniform weak composition rotated by the cycle lemma.
    CycleLemma,
    /// Galton-Watson trees rejected until the size is exactly `m`.
    Rejection { max_attempts: u64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceSnakeSample {
    pub e_path: Vec<f64>,
    pub r_path: Vec<f64>,
    pub m: usize,
    pub scaling: ScalingRecord,
    /// Rescaled labels of all `m` vertices in depth-first order.
    pub snake: Vec<f64>,
}

impl ReferenceSnakeSample {
    pub fn delta_plus(&self) -> f64 {
        self.snake.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn delta_minus(&self) -> f64 {
        self.snake.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn delta(&self) -> f64 {
        self.delta_plus() - self.delta_minus()
    }

    /// Divisor taking integer labels to `snake` values.
    pub fn label_scale(&self) -> f64 {
        (self.m as f64).powf(0.25) * self.scaling.label_divisor
    }

    /// `int_0^1 g(r_s - inf r) ds` with the snake indexed by depth-first rank.
    pub fn profile_functional(&self, g: impl Fn(f64) -> f64) -> f64 {
        let low = self.delta_minus();
        self.snake.iter().map(|&x| g(x - low)).sum::<f64>() / self.snake.len() as f64
    }
}

/// Child counts in depth-first order of a uniform plane tree with `m` vertices.
pub fn uniform_plane_tree<R: Rng + ?Sized>(m: usize, rng: &mut R) -> PlaneTree {
    if m == 1 {
        return PlaneTree::singleton();
    }
    // m - 1 bars among 2m - 2 slots give a uniform weak composition of m - 1 into m parts.
    let mut bars = index::sample(rng, 2 * m - 2, m - 1).into_vec();
    bars.sort_unstable();
    let mut parts = Vec::with_capacity(m);
    let mut prev = 0usize;
    for (i, &b) in bars.iter().enumerate() {
        parts.push(b - prev - if i == 0 { 0 } else { 1 });
        prev = b;
    }
    parts.push(2 * m - 3 - prev);
    let mut walk = 0i64;
    let mut low = i64::MAX;
    let mut at = 0;
    for (i, &c) in parts.iter().enumerate() {
        walk += c as i64 - 1;
        if walk < low {
            low = walk;
            at = i;
        }
    }
    parts.rotate_left(at + 1);
    PlaneTree::from_child_counts(&parts).expect("cycle lemma rotation is a Lukasiewicz path")
}

/// Geometric(1/2) Galton-Watson tree conditioned on `m` vertices, by rejection.
pub fn rejection_plane_tree<R: Rng + ?Sized>(
    m: usize,
    max_attempts: u64,
    rng: &mut R,
) -> Result<(PlaneTree, AttemptStats)> {
    let geo = Geometric::new(0.5).expect("valid parameter");
    let mut stats = AttemptStats::default();
    let mut counts = Vec::with_capacity(m);
    while stats.attempts < max_attempts {
        stats.attempts += 1;
        counts.clear();
        let mut open = 1i64;
        while open > 0 && counts.len() < m {
            let k = geo.sample(rng) as usize;
            counts.push(k);
            open += k as i64 - 1;
            if counts.len() as i64 + open > m as i64 {
                break;
            }
        }
        if open == 0 && counts.len() == m {
            return Ok((PlaneTree::from_child_counts(&counts)?, stats));
        }
        stats.aborted_overflow += 1;
    }
    Err(Error::BudgetExhausted(stats))
}

pub fn sample_reference<R: Rng + ?Sized>(m: usize, rng: &mut R) -> Result<ReferenceSnakeSample> {
    sample_reference_with(m, TreeMethod::CycleLemma, rng)
}

pub fn sample_reference_with<R: Rng + ?Sized>(
    m: usize,
    method: TreeMethod,
    rng: &mut R,
) -> Result<ReferenceSnakeSample> {
    if m < MIN_TREE_SIZE {
        return Err(Error::InvalidArgument(format!("reference trees need m >= {MIN_TREE_SIZE}")));
    }
    let tree = match method {
        TreeMethod::CycleLemma => uniform_plane_tree(m, rng),
        TreeMethod::Rejection { max_attempts } => rejection_plane_tree(m, max_attempts, rng)?.0,
    };
    let mut labels = vec![0i64; m];
    for v in 1..m {
        labels[v] = labels[tree.parent(v).unwrap()] + rng.random_range(-1i64..=1);
    }
    let scaling = ScalingRecord::reference();
    let h_scale = (m as f64).sqrt() * scaling.height_divisor;
    let l_scale = (m as f64).powf(0.25) * scaling.label_divisor;
    let contour = tree.contour_vertices();
    let heights: Vec<f64> = contour.iter().map(|&v| tree.depth(v) as f64 / h_scale).collect();
    let contour_labels: Vec<f64> = contour.iter().map(|&v| labels[v] as f64 / l_scale).collect();
    let grid = |values: &[f64]| -> Vec<f64> {
        (0..GRID_POINTS)
            .map(|i| PathSample::interpolate(values, i as f64 / (GRID_POINTS - 1) as f64))
            .collect()
    };
    Ok(ReferenceSnakeSample {
        e_path: grid(&heights),
        r_path: grid(&contour_labels),
        m,
        scaling,
        snake: labels.iter().map(|&l| l as f64 / l_scale).collect(),
    })
}

/// Per-sample statistics of a reference batch, in sample order. The extremes are integer
/// labels spread over their lattice cell before rescaling.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceStatistics {
    pub m: usize,
    pub seed: u64,
    pub delta: Vec<f64>,
    pub delta_plus: Vec<f64>,
    pub neg_delta_minus: Vec<f64>,
    /// `int g(r_s - inf r) ds` for the `g` supplied when the batch was drawn.
    pub profile: Vec<f64>,
}

impl ReferenceStatistics {
    pub fn len(&self) -> usize {
        self.delta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.delta.is_empty()
    }
}

pub fn sorted(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Draws `samples` references of size `m`, sample `i` from substream `i` of `seed`.
pub fn reference_statistics(
    samples: usize,
    m: usize,
    seed: u64,
    g: &(dyn Fn(f64) -> f64 + Sync),
) -> Result<ReferenceStatistics> {
    if samples < 100 {
        return Err(Error::InvalidArgument("reference batches need at least 100 samples".into()));
    }
    let rows: Vec<[f64; 4]> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = replicate_rng(seed, i as u64);
            let s = sample_reference(m, &mut rng)?;
            let scale = s.label_scale();
            let hi = (s.delta_plus() * scale).round() as i64;
            let lo = (s.delta_minus() * scale).round() as i64;
            Ok([
                continuize(hi - lo, &mut rng) / scale,
                continuize(hi, &mut rng) / scale,
                continuize(-lo, &mut rng) / scale,
                s.profile_functional(g),
            ])
        })
        .collect::<Result<_>>()?;
    Ok(ReferenceStatistics {
        m,
        seed,
        delta: rows.iter().map(|r| r[0]).collect(),
        delta_plus: rows.iter().map(|r| r[1]).collect(),
        neg_delta_minus: rows.iter().map(|r| r[2]).collect(),
        profile: rows.iter().map(|r| r[3]).collect(),
    })
}

/// The profile test function used by cached batches.
pub fn profile_test_function(x: f64) -> f64 {
    (-x).exp()
}

#[derive(Serialize, Deserialize)]
struct CacheRow {
    sample_id: usize,
    statistic: String,
    value: f64,
}

const STATISTICS: [&str; 4] = ["delta", "delta_plus", "neg_delta_minus", "profile_exp"];

pub fn cache_path(dir: &Path, samples: usize, m: usize, seed: u64) -> PathBuf {
    dir.join(format!("snake_ref_m{m}_n{samples}_seed{seed}.csv"))
}

pub fn write_cache(path: &Path, stats: &ReferenceStatistics) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_error)?;
    let columns = [&stats.delta, &stats.delta_plus, &stats.neg_delta_minus, &stats.profile];
    for i in 0..stats.len() {
        for (name, col) in STATISTICS.iter().zip(columns) {
            w.serialize(CacheRow {
                sample_id: i,
                statistic: (*name).into(),
                value: col[i],
            })
            .map_err(csv_error)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_cache(path: &Path, m: usize, seed: u64) -> Result<ReferenceStatistics> {
    let mut r = csv::Reader::from_path(path).map_err(csv_error)?;
    let mut cols: [Vec<f64>; 4] = Default::default();
    for row in r.deserialize::<CacheRow>() {
        let row = row.map_err(csv_error)?;
        let k = STATISTICS
            .iter()
            .position(|s| *s == row.statistic)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown statistic {}", row.statistic)))?;
        if row.sample_id != cols[k].len() {
            return Err(Error::InvalidArgument("cache rows out of order".into()));
        }
        cols[k].push(row.value);
    }
    let [delta, delta_plus, neg_delta_minus, profile] = cols;
    if delta.len() != delta_plus.len() || delta.len() != neg_delta_minus.len() || delta.len() != profile.len() {
        return Err(Error::InvalidArgument("cache columns have different lengths".into()));
    }
    Ok(ReferenceStatistics {
        m,
        seed,
        delta,
        delta_plus,
        neg_delta_minus,
        profile,
    })
}

/// Reads the batch for `(m, samples, seed)` from `dir`, drawing and storing it if absent.
pub fn load_or_compute(dir: &Path, samples: usize, m: usize, seed: u64) -> Result<ReferenceStatistics> {
    let path = cache_path(dir, samples, m, seed);
    if path.exists() {
        let stats = read_cache(&path, m, seed)?;
        if stats.len() == samples {
            return Ok(stats);
        }
    }
    let stats = reference_statistics(samples, m, seed, &profile_test_function)?;
    std::fs::create_dir_all(dir)?;
    write_cache(&path, &stats)?;
    Ok(stats)
}

fn csv_error(e: csv::Error) -> Error {
    Error::InvalidArgument(format!("csv: {e}"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{ks_two_sample, mean};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn divisors_follow_from_reference_moments() {
        let s = ScalingRecord::reference();
        // Height: 2 / sigma with sigma^2 = 2. Labels: sqrt(2/3) * sqrt(2 / sigma) .
        assert!((s.height_divisor - 2.0 / 2f64.sqrt()).abs() < 1e-15);
        assert!((s.label_divisor - (2.0f64 / 3.0).sqrt() * (2.0 / 2f64.sqrt()).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn cycle_lemma_trees_have_m_vertices() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for m in [1, 2, 3, 10, 257] {
            assert_eq!(uniform_plane_tree(m, &mut rng).len(), m);
        }
    }

    #[test]
    fn cycle_lemma_is_uniform_on_small_trees() {
        // Five plane trees with four vertices, each of probability 1/5.
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut counts = std::collections::BTreeMap::new();
        let draws = 50_000;
        for _ in 0..draws {
            *counts.entry(uniform_plane_tree(4, &mut rng).child_counts()).or_insert(0u64) += 1;
        }
        assert_eq!(counts.len(), 5);
        let cells: Vec<(u64, f64)> = counts.values().map(|&c| (c, 0.2)).collect();
        assert!(crate::stats::chi_square_gof(&cells, 0).unwrap().p_value > 1e-3);
    }

    #[test]
    fn rejection_and_cycle_lemma_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a: Vec<f64> = (0..400)
            .map(|_| uniform_plane_tree(200, &mut rng).max_depth() as f64)
            .collect();
        let b: Vec<f64> = (0..400)
            .map(|_| rejection_plane_tree(200, 10_000_000, &mut rng).unwrap().0.max_depth() as f64)
            .collect();
        assert!(ks_two_sample(&a, &b).unwrap().p_value > 1e-3);
        assert!(matches!(rejection_plane_tree(200, 1, &mut rng), Err(Error::BudgetExhausted(_)) | Ok(_)));
    }

    #[test]
    fn sample_shape_and_invariants() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        assert!(sample_reference(99, &mut rng).is_err());
        for _ in 0..50 {
            let s = sample_reference(100, &mut rng).unwrap();
            assert_eq!(s.e_path.len(), GRID_POINTS);
            assert_eq!(s.e_path[0], 0.0);
            assert_eq!(*s.e_path.last().unwrap(), 0.0);
            assert_eq!(s.r_path[0], 0.0);
            assert!(s.delta() > 0.0);
            assert!((s.delta() - (s.delta_plus() - s.delta_minus())).abs() < 1e-15);
        }
    }

    #[test]
    fn grid_points_on_integer_times_are_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        // With m = 342 the contour has 683 points; grid point i sits on a contour time
        // whenever i * 682 / 1023 is an integer.
        let s = sample_reference(342, &mut rng).unwrap();
        let max = s.r_path.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        assert!(max <= s.delta_plus() + 1e-12);
        let values: Vec<f64> = s.r_path.clone();
        for i in (0..GRID_POINTS).filter(|i| (i * 682) % 1023 == 0) {
            let scaled = values[i] * (342f64).powf(0.25) * s.scaling.label_divisor;
            assert!((scaled - scaled.round()).abs() < 1e-9);
        }
    }

    #[test]
    fn rescaled_paths_match_excursion_moments() {
        // E[int e] = E[int r_s^2 ds] = sqrt(pi / 8) for the normalized excursion and its snake;
        // the discrete heights approach it from below like m^(-1/2).
        let target = (std::f64::consts::PI / 8.0).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (mut heights, mut squares) = (Vec::new(), Vec::new());
        for _ in 0..1000 {
            let s = sample_reference(16_000, &mut rng).unwrap();
            heights.push(mean(&s.e_path));
            squares.push(s.snake.iter().map(|x| x * x).sum::<f64>() / s.m as f64);
        }
        let (h, l) = (mean(&heights), mean(&squares));
        assert!((h - target).abs() < 0.04 * target, "height mean {h}");
        assert!((l - target).abs() < 0.04 * target, "label second moment {l}");
    }

    #[test]
    fn batch_statistics_are_consistent() {
        let stats = reference_statistics(200, 500, 7, &profile_test_function).unwrap();
        let scale = (500f64).powf(0.25) * ScalingRecord::reference().label_divisor;
        // Each statistic is an integer label count plus a jitter in [-1/2, 1/2).
        let cell = |x: f64| {
            let k = (x * scale).round();
            assert!((x * scale - k).abs() <= 0.5 + 1e-9);
            k as i64
        };
        for i in 0..stats.len() {
            let (d, hi, lo) = (cell(stats.delta[i]), cell(stats.delta_plus[i]), cell(stats.neg_delta_minus[i]));
            assert_eq!(d, hi + lo);
            assert!(hi >= 0 && lo >= 0);
            assert!(stats.profile[i] > 0.0 && stats.profile[i] <= 1.0);
        }
        assert_eq!(stats, reference_statistics(200, 500, 7, &profile_test_function).unwrap());
    }

    #[test]
    fn cache_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let a = load_or_compute(dir.path(), 100, 150, 11).unwrap();
        assert!(cache_path(dir.path(), 100, 150, 11).exists());
        let b = load_or_compute(dir.path(), 100, 150, 11).unwrap();
        assert_eq!(a, b);
    }
}
