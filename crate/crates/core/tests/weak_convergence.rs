use boltzmap::snake_ref::{profile_test_function, reference_statistics};
use boltzmap::stats::{ks_two_sample, mean};

#[test]
fn reference_is_stable_in_m() {
    let small = reference_statistics(1000, 2000, 31, &profile_test_function).unwrap();
    let large = reference_statistics(1000, 8000, 32, &profile_test_function).unwrap();
    let r = ks_two_sample(&small.delta, &large.delta).unwrap();
    assert!(
        r.p_value > 1e-3,
        "{r:?}; mean delta {:.4} at m = 2000, {:.4} at m = 8000",
        mean(&small.delta),
        mean(&large.delta)
    );
}

#[test]
fn reference_extremes_are_symmetric() {
    let a = reference_statistics(2000, 5000, 41, &profile_test_function).unwrap();
    let b = reference_statistics(2000, 5000, 42, &profile_test_function).unwrap();
    let r = ks_two_sample(&a.delta_plus, &b.neg_delta_minus).unwrap();
    assert!(r.p_value > 1e-3, "{r:?}");
}
