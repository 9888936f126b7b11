use std::collections::HashMap;

use boltzmap::harness::{conditional_law, Family};
use boltzmap::sampler::{replicate_rng, ConditioningTarget, FaceCountSampler};
use boltzmap::stats::{chi_square_gof, ks_two_sample};
use boltzmap::trees::TwoTypeTree;

fn families() -> [Family; 2] {
    [Family::quadrangulations(), Family::geometric_eighth()]
}

#[test]
fn fast_path_matches_the_exact_law() {
    for family in families() {
        for n in 1..=3 {
            let law = conditional_law(&family.weights, ConditioningTarget::faces(n), 20_000).unwrap();
            let probs = law.distribution.probabilities_f64();
            let sampler = FaceCountSampler::new(&family.law, n).unwrap();
            let mut rng = replicate_rng(21, n as u64);
            let mut counts: HashMap<String, u64> = HashMap::new();
            for _ in 0..200_000 {
                let (m, _) = sampler.sample_conditioned(&mut rng, u64::MAX).unwrap();
                *counts.entry(m.to_json()).or_insert(0) += 1;
            }
            let cells: Vec<(u64, f64)> = probs.iter().map(|(k, p)| (counts.get(k).copied().unwrap_or(0), *p)).collect();
            let residual = counts.iter().filter(|(k, _)| !probs.contains_key(*k)).map(|(_, v)| *v).sum();
            let r = chi_square_gof(&cells, residual).unwrap();
            assert!(r.p_value > 1e-3, "{} n = {n}: {r:?}", family.name);
        }
    }
}

#[test]
fn fast_path_matches_rejection_in_distribution() {
    const RUNS: usize = 2000;
    let n = 200;
    for family in families() {
        let target = ConditioningTarget::faces(n);
        let fast = FaceCountSampler::new(&family.law, n).unwrap();
        let mut a = replicate_rng(5, 1);
        let mut b = replicate_rng(5, 2);
        let draw = |t: &TwoTypeTree| (t.len() as f64, t.tree.max_depth() as f64);
        let x: Vec<(f64, f64)> = (0..RUNS).map(|_| draw(&fast.sample_shape(&mut a, u64::MAX).unwrap().0)).collect();
        let y: Vec<(f64, f64)> = (0..RUNS)
            .map(|_| draw(&family.sampler().sample_conditioned_shape(&mut b, target, u64::MAX, 1 << 24).unwrap().0))
            .collect();
        let size = ks_two_sample(&x.iter().map(|v| v.0).collect::<Vec<_>>(), &y.iter().map(|v| v.0).collect::<Vec<_>>());
        let height = ks_two_sample(&x.iter().map(|v| v.1).collect::<Vec<_>>(), &y.iter().map(|v| v.1).collect::<Vec<_>>());
        let (size, height) = (size.unwrap(), height.unwrap());
        assert!(size.p_value > 1e-3, "{} size: {size:?}", family.name);
        assert!(height.p_value > 1e-3, "{} height: {height:?}", family.name);
    }
}

#[test]
fn fast_path_hits_the_face_count() {
    for family in families() {
        for n in [1, 5, 64, 1000] {
            let s = FaceCountSampler::new(&family.law, n).unwrap();
            let mut rng = replicate_rng(2, n as u64);
            let (m, stats) = s.sample_conditioned(&mut rng, u64::MAX).unwrap();
            m.validate().unwrap();
            assert!(stats.attempts >= 1);
            assert_eq!(m.count(boltzmap::trees::VertexType::Black), n);
        }
    }
}
