use boltzmap::harness::{height_ratios, type_homogeneity, Family, RunConfig, ShapeMethod};
use boltzmap::sampler::{replicate_rng, ConditioningTarget};
use boltzmap::stats::{mean, median};

const RUNS: usize = 200;

#[test]
fn type_homogeneity_gap_shrinks_with_n() {
    let family = Family::quadrangulations();
    let cfg = RunConfig::new(17, 1);
    let medians: Vec<f64> = [250, 1000, 4000]
        .iter()
        .map(|&n| {
            let gaps = type_homogeneity(&family, ConditioningTarget::faces(n), RUNS, &cfg, ShapeMethod::CycleLemma).unwrap();
            median(&gaps)
        })
        .collect();
    assert!(medians.windows(2).all(|w| w[1] < w[0]), "{medians:?}");
}

#[test]
fn height_ratio_is_stable_in_n() {
    let cfg = RunConfig::new(23, 1);
    for family in [Family::quadrangulations(), Family::geometric_eighth()] {
        let at = |n: usize| {
            median(&height_ratios(&family, ConditioningTarget::faces(n), RUNS, &cfg, ShapeMethod::CycleLemma).unwrap())
        };
        let (small, large) = (at(1000), at(4000));
        assert!((large / small - 1.0).abs() <= 0.15, "{}: {small} vs {large}", family.name);
    }
}

#[test]
fn attempts_grow_like_n_to_three_halves() {
    let family = Family::quadrangulations();
    let ns = [50usize, 100, 200, 400];
    let logs: Vec<(f64, f64)> = ns
        .iter()
        .map(|&n| {
            let mut rng = replicate_rng(8, n as u64);
            let attempts: Vec<f64> = (0..2000)
                .map(|_| {
                    let (_, s) = family
                        .sampler()
                        .sample_conditioned_shape(&mut rng, ConditioningTarget::faces(n), u64::MAX, 1 << 24)
                        .unwrap();
                    s.attempts as f64
                })
                .collect();
            ((n as f64).ln(), mean(&attempts).ln())
        })
        .collect();
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / logs.len() as f64;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / logs.len() as f64;
    let slope = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>()
        / logs.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
    assert!((slope - 1.5).abs() <= 0.2, "slope {slope}");
}
