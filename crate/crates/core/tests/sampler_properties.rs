use boltzmap::enumerate::{displacement_enum, ExactLaw};
use boltzmap::harness::{family_stream, sample_records, Family, RunConfig};
use boltzmap::sampler::{
    replicate_rng, sample_conditioned, sample_displacement, ConditioningTarget, SamplerBudget, TreeDraw,
};
use boltzmap::trees::VertexType;
use num_traits::ToPrimitive;
use proptest::prelude::*;

fn families() -> [Family; 2] {
    [Family::quadrangulations(), Family::geometric_eighth()]
}

#[test]
fn displacements_are_centered_with_exact_variances() {
    const DRAWS: usize = 200_000;
    for k in 1..=6 {
        let law = displacement_enum(k).unwrap();
        let mut rng = replicate_rng(11, k as u64);
        let mut sum = vec![0.0; k];
        let mut sq = vec![0.0; k];
        for _ in 0..DRAWS {
            for (l, y) in sample_displacement(k, &mut rng).into_iter().enumerate() {
                sum[l] += y as f64;
                sq[l] += (y * y) as f64;
            }
        }
        for l in 0..k {
            let var = law.partial_sum_variances[l].to_f64().unwrap();
            let mean = sum[l] / DRAWS as f64;
            assert!(mean.abs() < 5.0 * (var / DRAWS as f64).sqrt(), "k {k} l {l}: mean {mean}");
            let second = sq[l] / DRAWS as f64;
            assert!((second - var).abs() < 0.02 * var.max(1.0), "k {k} l {l}: {second} vs {var}");
        }
    }
}

#[test]
fn displacement_steps_stay_above_minus_one() {
    let mut rng = replicate_rng(5, 0);
    for k in 1..40 {
        for _ in 0..200 {
            let y = sample_displacement(k, &mut rng);
            let mut prev = 0;
            for v in y.iter().copied().chain(std::iter::once(0)) {
                assert!(v - prev >= -1);
                prev = v;
            }
        }
    }
}

#[test]
fn unconditioned_root_is_a_leaf_with_the_right_frequency() {
    const DRAWS: usize = 100_000;
    for family in families() {
        let p = ExactLaw::new(&family.weights).unwrap().mu0(0).to_f64().unwrap();
        let mut rng = replicate_rng(3, 0);
        let leaves = (0..DRAWS)
            .filter(|_| match family.sampler().sample_tree(&mut rng, 1 << 20) {
                TreeDraw::Tree(t) => t.len() == 1,
                TreeDraw::Overflow => false,
            })
            .count();
        let freq = leaves as f64 / DRAWS as f64;
        assert!((freq - p).abs() < 5.0 * (p * (1.0 - p) / DRAWS as f64).sqrt(), "{}: {freq} vs {p}", family.name);
    }
}

#[test]
fn conditioned_samples_hit_the_target() {
    for family in families() {
        for n in [1, 2, 7, 50, 300] {
            for target in [ConditioningTarget::faces(n), ConditioningTarget::white_vertices(n)] {
                let budget = SamplerBudget::new(100_000_000, 1 << 20, n as u64).unwrap();
                let (m, stats) = sample_conditioned(&family.law, target, &budget).unwrap();
                m.validate().unwrap();
                assert!(stats.attempts >= 1);
                assert_eq!(m.count(target.kind.counted_type()), n);
            }
        }
    }
}

#[test]
fn quadrangulation_blacks_have_one_child() {
    let family = Family::quadrangulations();
    let budget = SamplerBudget::new(100_000_000, 1 << 20, 1).unwrap();
    let (m, _) = sample_conditioned(&family.law, ConditioningTarget::faces(400), &budget).unwrap();
    assert!(m.two_type().black_degrees().iter().all(|&d| d == 1));
    assert_eq!(m.count(VertexType::White), 401);
}

#[test]
fn records_do_not_depend_on_worker_count() {
    let family = Family::geometric_eighth();
    let target = ConditioningTarget::faces(60);
    let one = sample_records(&family, 1, target, 24, &RunConfig::new(9, 1)).unwrap();
    let four = sample_records(&family, 1, target, 24, &RunConfig::new(9, 4)).unwrap();
    assert_eq!(one, four);
    let other = sample_records(&family, 1, target, 24, &RunConfig::new(10, 4)).unwrap();
    assert_ne!(one, other);
}

#[test]
fn family_streams_are_disjoint() {
    let mut seen = std::collections::HashSet::new();
    for f in 0..4 {
        for i in [0, 1, 999, 1 << 20] {
            assert!(seen.insert(family_stream(f, i)));
        }
    }
    assert!(!seen.iter().any(|s| s >> 32 == 0));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn same_seed_same_mobile(seed in any::<u64>(), n in 1usize..80, faces in any::<bool>()) {
        let family = Family::geometric_eighth();
        let target = if faces { ConditioningTarget::faces(n) } else { ConditioningTarget::white_vertices(n) };
        let budget = SamplerBudget::new(100_000_000, 1 << 20, seed).unwrap();
        let (a, sa) = sample_conditioned(&family.law, target, &budget).unwrap();
        let (b, sb) = sample_conditioned(&family.law, target, &budget).unwrap();
        prop_assert_eq!(a.to_json(), b.to_json());
        prop_assert_eq!(sa, sb);
        prop_assert_eq!(sa.seed, seed);
    }
}
