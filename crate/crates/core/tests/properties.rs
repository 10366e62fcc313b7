//! Property tests for the invariants that hold on arbitrary inputs.

use ampscape::field::standard_matrix;
use ampscape::io::{matrix_from_csv, matrix_to_csv, observation_from_csv, observation_to_csv, AnyMatrix};
use ampscape::landscape::check_ab_ineq;
use ampscape::losses::{LossFamily, LossSpec};
use ampscape::measurement::Ensemble;
use nalgebra::DVector;
use num_complex::Complex64;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

proptest! {
    /// The b·ℓ'' identities behind the landscape theorems hold pointwise.
    #[test]
    fn loss_identities_hold(b in 1e-2..1e1f64, u in 0.0..3.0f64, delta in 0.0..1e-2f64) {
        // identities are for the raw loss; smoothing shifts the arguments
        let q = LossSpec::new(LossFamily::Quartic, 0.0, 0.0).unwrap();
        let (_, d1, d2) = q.derivatives(b, u).unwrap();
        prop_assert!((b * d2 - (d1 + u * u)).abs() <= 1e-12);
        let a = LossSpec::new(LossFamily::Amplitude, 0.0, 0.0).unwrap();
        let (_, d1, d2) = a.derivatives(b, u).unwrap();
        prop_assert!((2.0 * b * d2 - (1.0 - d1)).abs() <= 1e-12);
        let p = LossSpec::new(LossFamily::Poisson, 0.0, 0.0).unwrap();
        let (_, d1, d2) = p.derivatives(b, u).unwrap();
        prop_assert!((b * d2 - (1.0 - d1)).abs() <= 1e-12);
        // smoothed second derivative stays nonnegative (convexity in b)
        let s = LossSpec::new(LossFamily::Amplitude, delta, 0.0).unwrap();
        let (_, _, d2) = s.derivatives(b, u).unwrap();
        prop_assert!(d2 >= 0.0);
    }

    /// β = α² elementwise and both are nonnegative, on arbitrary factors.
    #[test]
    fn beta_is_alpha_squared(seed in 0u64..5000, d in 1usize..6, n in 1usize..12, p in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ens = Ensemble::from_rank1(standard_matrix::<Complex64, _>(n, d, &mut rng)).unwrap();
        let x = standard_matrix::<Complex64, _>(d, p, &mut rng);
        let alpha = ens.alpha(&x).unwrap();
        let beta = ens.beta(&x).unwrap();
        for i in 0..n {
            prop_assert!(alpha[i] >= 0.0);
            prop_assert!((beta[i] - alpha[i] * alpha[i]).abs() <= 1e-12 * (1.0 + beta[i]));
        }
    }

    /// The matrix CSV format round-trips bit-exactly (real case).
    #[test]
    fn matrix_csv_roundtrip_real(rows in 1usize..5, cols in 1usize..5, seed in 0u64..5000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = standard_matrix::<f64, _>(rows, cols, &mut rng);
        match matrix_from_csv(&matrix_to_csv(&m)).unwrap() {
            AnyMatrix::Real(back) => prop_assert_eq!(back, m),
            _ => prop_assert!(false, "field tag changed"),
        }
    }

    /// The matrix CSV format round-trips bit-exactly (complex case).
    #[test]
    fn matrix_csv_roundtrip_complex(rows in 1usize..5, cols in 1usize..4, seed in 0u64..5000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = standard_matrix::<Complex64, _>(rows, cols, &mut rng);
        match matrix_from_csv(&matrix_to_csv(&m)).unwrap() {
            AnyMatrix::Complex(back) => prop_assert_eq!(back, m),
            _ => prop_assert!(false, "field tag changed"),
        }
    }

    /// Observation CSV round-trips, with or without the noise column.
    #[test]
    fn observation_csv_roundtrip(vals in prop::collection::vec(0.0..10.0f64, 1..20), with_eps in any::<bool>()) {
        let y = DVector::from_vec(vals.clone());
        let eps = with_eps.then(|| DVector::from_fn(vals.len(), |i, _| (i as f64) - 1.5));
        let text = observation_to_csv(&y, eps.as_ref());
        let (y2, eps2) = observation_from_csv(&text).unwrap();
        prop_assert_eq!(y, y2);
        prop_assert_eq!(eps, eps2);
    }

    /// The α/β comparison bound holds on arbitrary (not critical) pairs.
    #[test]
    fn ab_inequality_everywhere(seed in 0u64..5000, d in 1usize..5, p1 in 1usize..4, p2 in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 3 * d;
        let ens = Ensemble::from_rank1(standard_matrix::<f64, _>(n, d, &mut rng)).unwrap();
        let x1 = standard_matrix::<f64, _>(d, p1, &mut rng);
        let x2 = standard_matrix::<f64, _>(d, p2, &mut rng);
        let slack = check_ab_ineq(&ens, &x1, &x2).unwrap();
        let scale = (1.0 + x1.norm_squared() + x2.norm_squared()).powi(2);
        prop_assert!(slack >= -1e-12 * scale);
    }
}

#[test]
fn rank1_and_psd_forms_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let f = standard_matrix::<Complex64, _>(8, 3, &mut rng);
    let rank1 = Ensemble::from_rank1(f).unwrap();
    let lifted = Ensemble::from_psd((0..8).map(|i| rank1.matrix(i)).collect()).unwrap();
    for _ in 0..20 {
        let x = standard_matrix::<Complex64, _>(3, 2, &mut rng);
        let a1 = rank1.alpha(&x).unwrap();
        let a2 = lifted.alpha(&x).unwrap();
        assert!((a1 - a2).amax() <= 1e-12 * (1.0 + x.norm_squared()));
    }
}
