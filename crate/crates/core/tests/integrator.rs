use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use hclab::conditions::canonical_p5;
use hclab::integrator::{
    integrate, passage_map, xi_indices, EventKind, Formulation, IntegrateOptions, Method, Output, SaddleNeighborhood,
};
use hclab::model::saddle_point;
use hclab::Error;

fn hood_opts(method: Method) -> IntegrateOptions {
    let p = canonical_p5();
    IntegrateOptions {
        method,
        neighborhoods: SaddleNeighborhood::for_cycle(&p, None).unwrap(),
        ..Default::default()
    }
}

#[test]
fn equilibrium_is_constant_without_events() {
    let p = canonical_p5();
    let o3 = saddle_point(&p, 3);
    let tr = integrate(&p, &o3, 50.0, &hood_opts(Method::default())).unwrap();
    assert!(tr.states.iter().all(|s| *s == o3));
    assert!(tr.events.is_empty());
}

#[test]
fn box_start_stays_in_box() {
    let p = canonical_p5();
    let tr = integrate(&p, &[1.0, 1e-4, 1e-4, 0.0, 0.0], 500.0, &IntegrateOptions::default()).unwrap();
    let worst = tr
        .states
        .iter()
        .flatten()
        .fold(f64::NEG_INFINITY, |m, v| m.max(*v - 1.0));
    assert!(worst <= 1e-9, "excursion {worst}");
    assert!(tr.states.iter().flatten().all(|v| *v >= 0.0));
}

#[test]
fn random_box_starts_stay_in_box() {
    let p = canonical_p5();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..100 {
        let x0: Vec<f64> = (0..5).map(|_| rng.random_range(0.0..=1.0)).collect();
        let tr = integrate(&p, &x0, 200.0, &IntegrateOptions::default()).unwrap();
        let worst = tr
            .states
            .iter()
            .flatten()
            .fold(f64::NEG_INFINITY, |m, v| m.max(*v - 1.0));
        assert!(worst <= 1e-9, "start {x0:?}: excursion {worst}");
    }
}

fn enter_sequence(method: Method, x0: &[f64]) -> Vec<(f64, usize)> {
    let p = canonical_p5();
    let mut opts = hood_opts(method);
    opts.output = Output::Endpoints;
    opts.formulation = Formulation::Log;
    let tr = integrate(&p, x0, 1500.0, &opts).unwrap();
    tr.events
        .iter()
        .filter(|e| e.kind == EventKind::EnterV)
        .map(|e| (e.time, e.k))
        .collect()
}

#[test]
fn interior_itinerary_follows_channels_and_matches_finer_run() {
    let x0 = [0.3, 0.2, 0.1, 1e-4, 0.05];
    let coarse = enter_sequence(
        Method::Adaptive {
            rtol: 1e-10,
            atol: 1e-10,
            h_max: 0.5,
        },
        &x0,
    );
    let fine = enter_sequence(
        Method::Adaptive {
            rtol: 1e-11,
            atol: 1e-11,
            h_max: 0.5,
        },
        &x0,
    );
    assert!(coarse.len() >= 5, "only {} entries", coarse.len());
    for w in coarse.windows(2) {
        let step = (w[1].1 + 5 - w[0].1) % 5;
        assert!(step == 1 || step == 2, "transition {} -> {}", w[0].1, w[1].1);
    }
    // Compare the leading stretch, before sensitivity amplifies the tolerance gap.
    let n = coarse.len().min(fine.len()).min(8);
    let ks = |s: &[(f64, usize)]| s[..n].iter().map(|e| e.1).collect::<Vec<_>>();
    assert_eq!(ks(&coarse), ks(&fine));
}

#[test]
fn halving_the_rk4_step_barely_moves_the_endpoint() {
    let p = canonical_p5();
    let x0 = [0.4, 0.3, 0.2, 0.1, 0.05];
    let run = |h| {
        let opts = IntegrateOptions {
            method: Method::Rk4 { h },
            output: Output::Endpoints,
            ..Default::default()
        };
        integrate(&p, &x0, 100.0, &opts)
            .unwrap()
            .final_state()
            .unwrap()
            .to_vec()
    };
    let (a, b) = (run(1e-3), run(5e-4));
    let diff = a.iter().zip(&b).fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()));
    assert!(diff < 1e-8, "sup difference {diff}");
}

#[test]
fn event_times_are_stable_under_tolerance_refinement() {
    let p = canonical_p5();
    let x0 = [0.05, 0.95, 0.02, 0.0, 0.0];
    let run = |tol| {
        let mut opts = hood_opts(Method::Adaptive {
            rtol: tol,
            atol: tol,
            h_max: 0.5,
        });
        opts.output = Output::Endpoints;
        integrate(&p, &x0, 150.0, &opts).unwrap().events
    };
    let (a, b) = (run(1e-10), run(1e-12));
    assert!(!a.is_empty());
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(&b) {
        assert_eq!((x.kind, x.k), (y.kind, y.k));
        assert!((x.time - y.time).abs() < 1e-6 * x.time.max(1.0), "{x:?} vs {y:?}");
    }
}

#[test]
fn bad_starts_are_rejected() {
    let p = canonical_p5();
    let o = IntegrateOptions::default();
    assert!(integrate(&p, &[0.1, -0.1, 0.0, 0.0, 0.0], 1.0, &o).is_err());
    assert!(integrate(&p, &[0.1, 0.1, 0.0, 0.0, 0.0], 0.0, &o).is_err());
    assert!(integrate(&p, &[0.1, 0.1, 0.0, 0.0], 1.0, &o).is_err());
    assert!(SaddleNeighborhood::new(1, 0.1, 0.1).is_err());
}

fn xi_on_face(k: usize) -> Vec<f64> {
    let p = canonical_p5();
    xi_indices(&p, k)
        .iter()
        .map(|&j| if j == k { -0.1 } else { 0.1 })
        .collect()
}

#[test]
fn passage_time_respects_the_linear_bound() {
    let p = canonical_p5();
    let out = passage_map(&p, 1, &xi_on_face(1), [1e-4, 1e-4], 0.1).unwrap();
    assert!(out.t >= (0.1_f64 / 1e-4).ln() / 0.2, "T = {}", out.t);
    assert!((out.eta[0].max(out.eta[1]) - 0.1).abs() < 1e-9);
}

#[test]
fn passage_in_a_coordinate_plane_stays_there() {
    let p = canonical_p5();
    let out = passage_map(&p, 1, &xi_on_face(1), [0.0, 1e-4], 0.1).unwrap();
    assert_eq!(out.x[1], 0.0);
}

#[test]
fn exit_stable_size_shrinks_superlinearly() {
    let p = canonical_p5();
    let idx = xi_indices(&p, 1);
    let pts: Vec<(f64, f64)> = [1e-3, 1e-4, 1e-5]
        .iter()
        .map(|&e| {
            let out = passage_map(&p, 1, &xi_on_face(1), [0.5 * e, e], 0.1).unwrap();
            let xi = idx
                .iter()
                .zip(&out.xi)
                .filter(|(j, _)| **j != 1)
                .fold(0.0_f64, |m, (_, v)| m.max(v.abs()));
            (e, xi)
        })
        .collect();
    let c = pts.iter().map(|(e, xi)| xi / e.powf(1.4)).fold(0.0_f64, f64::max);
    for (e, xi) in &pts {
        assert!(*xi <= c * e.powf(1.4));
    }
    // The fitted constant must not be hiding a slower rate.
    let ratio = (pts[0].1 / pts[2].1).log10() / 2.0;
    assert!(ratio >= 1.4, "observed exponent {ratio}");
}

#[test]
fn passage_preconditions() {
    let p = canonical_p5();
    let err = passage_map(&p, 1, &xi_on_face(1), [0.2, 0.0], 0.1).unwrap_err();
    assert!(matches!(err, Error::Precondition(_)));
    assert!(passage_map(&p, 1, &[0.1, 0.0], [1e-4, 0.0], 0.1).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn orthant_and_zero_pattern_are_preserved(
        raw in prop::collection::vec(0.0f64..1.2, 5),
        mask in prop::collection::vec(any::<bool>(), 5),
    ) {
        let p = canonical_p5();
        let x0: Vec<f64> = raw.iter().zip(&mask).map(|(v, m)| if *m { *v } else { 0.0 }).collect();
        let tr = integrate(&p, &x0, 60.0, &IntegrateOptions::default()).unwrap();
        for s in &tr.states {
            for (i, v) in s.iter().enumerate() {
                prop_assert!(*v >= 0.0);
                if x0[i] == 0.0 {
                    prop_assert_eq!(*v, 0.0);
                }
            }
        }
        prop_assert!(tr.times.windows(2).all(|w| w[0] < w[1]));
    }
}
