use proptest::prelude::*;

use hclab::conditions::{canonical_p5, check_all, sample_params, Family};
use hclab::model::{eigenvalue, equilibria, saddle_point, spectrum_at, vector_field, SystemParams};
use hclab::Error;

fn params_strategy() -> impl Strategy<Value = SystemParams> {
    (4usize..=8, 0usize..=3, any::<u64>()).prop_map(|(p, extra, seed)| sample_params(p + extra, p, seed).unwrap())
}

#[test]
fn small_sigma_equilibrium() {
    let p = SystemParams::new(
        4,
        4,
        vec![1.0, 2.0, 3.0, 1.0],
        (0..4)
            .map(|i| (0..4).map(|j| if i == j { 1.0 } else { 1.5 }).collect())
            .collect(),
    )
    .unwrap();
    assert_eq!(saddle_point(&p, 2), vec![0.0, 2.0, 0.0, 0.0]);
    assert_eq!(equilibria(&p)[2].point, vec![0.0, 0.0, 3.0, 0.0]);
}

#[test]
fn canonical_o3_and_nu() {
    let p = canonical_p5();
    assert_eq!(equilibria(&p)[2].point, vec![0.0, 0.0, 1.0, 0.0, 0.0]);
    for k in 1..=5 {
        let s = spectrum_at(&p, k).unwrap();
        assert!((s.nu.unwrap() - 1.5).abs() < 1e-12);
        let mut expected = vec![p.cyc(k, 1), p.cyc(k, 2)];
        expected.sort_unstable();
        assert_eq!(s.unstable_set, expected);
    }
}

#[test]
fn weakened_stable_inhibition_flags_only_k1_j4() {
    let p = canonical_p5().with_rho(4, 1, 0.95).unwrap();
    let r = check_all(&p);
    assert!(!r.stable_ok);
    let stable: Vec<_> = r.violations.iter().filter(|v| v.family == Family::Stable).collect();
    assert_eq!(stable.len(), 1);
    assert_eq!((stable[0].k, stable[0].j), (1, Some(4)));
    assert!((stable[0].margin - -0.05).abs() < 1e-12);
}

#[test]
fn p3_and_bad_files() {
    assert!(matches!(sample_params(5, 3, 0), Err(Error::Unsupported(_))));
    let err =
        SystemParams::from_json_str("{\"n\": 2,\n \"p\": 2, \"sigma\": [1, 1], \"rho\": [[1, 1], [1 1]]}").unwrap_err();
    assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
    assert!(SystemParams::from_json_str("{\"n\":1,\"p\":1,\"sigma\":[1],\"rho\":[[1]],\"extra\":0}").is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn sampled_params_pass_every_family(p in params_strategy()) {
        let r = check_all(&p);
        prop_assert!(r.all_pass, "{:?}", r.violations);
    }

    #[test]
    fn saddles_are_exact_fixed_points(p in params_strategy()) {
        for k in 1..=p.n() {
            let f = vector_field(&p, &saddle_point(&p, k)).unwrap();
            prop_assert!(f.iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn cycle_saddles_have_two_unstable_directions(p in params_strategy()) {
        for k in 1..=p.p() {
            let s = spectrum_at(&p, k).unwrap();
            prop_assert_eq!(s.unstable_set.len(), 2);
            prop_assert_eq!(s.eigenvalues.iter().filter(|v| **v < 0.0).count(), p.n() - 2);
        }
    }

    #[test]
    fn coordinate_hyperplanes_are_invariant(
        p in params_strategy(),
        raw in prop::collection::vec(0.0f64..2.0, 12),
        zero in 0usize..12,
    ) {
        let mut x: Vec<f64> = raw[..p.n()].to_vec();
        let i = zero % p.n();
        x[i] = 0.0;
        prop_assert_eq!(vector_field(&p, &x).unwrap()[i], 0.0);
    }

    /// Moving one `rho_jk` across the stable boundary flips only the stable
    /// flag at `k` and only the sign of `lambda_j^k`.
    #[test]
    fn stable_margin_flip_is_local(p in params_strategy(), k_raw in 0usize..8, off in 3usize..8) {
        let k = 1 + k_raw % p.p();
        let stable: Vec<usize> = (1..=p.n())
            .filter(|&j| j != k && j != p.cyc(k, 1) && j != p.cyc(k, 2))
            .collect();
        prop_assume!(!stable.is_empty());
        let j = stable[off % stable.len()];
        // Just past lambda_j^k = 0 on the unstable side.
        let flipped = p.with_rho(j, k, 0.98 * p.sigma_of(j) / p.sigma_of(k)).unwrap();
        let before = check_all(&p);
        let after = check_all(&flipped);
        prop_assert!(!after.saddles[k - 1].stable_ok);
        for m in 1..=p.p() {
            if m != k {
                prop_assert_eq!(after.saddles[m - 1].stable_ok, before.saddles[m - 1].stable_ok);
            }
            for i in 1..=p.n() {
                let (a, b) = (eigenvalue(&p, m, i), eigenvalue(&flipped, m, i));
                if (m, i) == (k, j) {
                    prop_assert!(a < 0.0 && b > 0.0);
                } else {
                    prop_assert_eq!(a.signum(), b.signum());
                }
            }
        }
    }

    #[test]
    fn sampler_is_deterministic(seed in any::<u64>()) {
        prop_assert_eq!(sample_params(6, 5, seed).unwrap(), sample_params(6, 5, seed).unwrap());
    }
}
