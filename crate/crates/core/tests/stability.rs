use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::sync::OnceLock;

use hclab::conditions::canonical_p5;
use hclab::integrator::{integrate, Event, EventKind, IntegrateOptions};
use hclab::manifold::{build_gamma, GammaMesh, GammaOptions};
use hclab::model::saddle_point;
use hclab::stability::{
    closest_point_on_triangle, contraction_experiment, distance_to_gamma, extract_itinerary, mesh_floor,
    stability_experiment, EtaDirection, MeshIndex, StabilityOptions, TrialStatus,
};
use hclab::Error;

fn mesh(m_angles: usize, m_arc: usize) -> GammaMesh {
    build_gamma(
        &canonical_p5(),
        &GammaOptions {
            m_angles,
            m_arc,
            ..Default::default()
        },
    )
    .unwrap()
}

fn coarse() -> &'static GammaMesh {
    static MESH: OnceLock<GammaMesh> = OnceLock::new();
    MESH.get_or_init(|| mesh(17, 32))
}

fn enter(k: usize) -> Event {
    Event {
        time: k as f64,
        kind: EventKind::EnterV,
        k,
    }
}

#[test]
fn itinerary_labels() {
    let it = extract_itinerary(&[enter(1), enter(2), enter(4)], 5).unwrap();
    assert_eq!(it.saddles, vec![1, 2, 4]);
    assert_eq!(it.labels, vec![1, 2]);
    let wrap = extract_itinerary(&[enter(4), enter(1), enter(2)], 5).unwrap();
    assert_eq!(wrap.labels, vec![2, 1]);
    let err = extract_itinerary(&[enter(1), enter(4)], 5).unwrap_err();
    assert!(matches!(err, Error::ChannelViolation { from: 1, to: 4, p: 5 }));
}

#[test]
fn vertices_are_at_distance_zero() {
    let m = coarse();
    let index = MeshIndex::new(m).unwrap();
    for i in (0..m.vertices.len()).step_by(37) {
        assert!(index.distance(m.position(i)).unwrap() < 1e-12);
    }
}

#[test]
fn flat_patch_offset() {
    // Fan 1 lies in the (x_1, x_2, x_3) subspace, so x_4 is normal to it.
    let m = coarse();
    let v = m
        .vertices
        .iter()
        .find(|v| v.chart.k == 1 && (v.chart.u - 0.5).abs() < 0.05 && v.chart.phi > 0.6 && v.chart.phi < 1.0)
        .expect("mid-chart vertex of fan 1");
    let mut x = v.x.clone();
    x[3] = 1e-3;
    let d = distance_to_gamma(&x, m).unwrap();
    assert!((d - 1e-3).abs() < 1e-12, "{d}");
}

#[test]
fn accelerated_distance_matches_exhaustive_scan() {
    let m = coarse();
    let index = MeshIndex::new(m).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..1000 {
        let x: Vec<f64> = (0..5).map(|_| rng.random_range(0.0..1.0)).collect();
        let brute = m
            .triangles
            .iter()
            .map(|t| {
                let q = closest_point_on_triangle(&x, m.position(t.v[0]), m.position(t.v[1]), m.position(t.v[2]));
                q.iter().zip(&x).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
            })
            .fold(f64::INFINITY, f64::min);
        assert_eq!(index.distance(&x).unwrap(), brute);
    }
}

#[test]
fn coordinate_plane_start_stays_and_settles() {
    let p = canonical_p5();
    let tr = integrate(&p, &[0.3, 0.2, 0.1, 0.0, 0.0], 400.0, &IntegrateOptions::default()).unwrap();
    assert!(tr.states.iter().all(|s| s[3] == 0.0 && s[4] == 0.0));
    let end = tr.final_state().unwrap();
    let gap = end
        .iter()
        .zip(&saddle_point(&p, 3))
        .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
    assert!(gap < 1e-6, "{end:?}");
}

#[test]
fn in_plane_itinerary_uses_single_steps() {
    let p = canonical_p5();
    let opts = IntegrateOptions {
        neighborhoods: hclab::integrator::SaddleNeighborhood::for_cycle(&p, None).unwrap(),
        ..Default::default()
    };
    let tr = integrate(&p, &[0.5, 0.4, 0.0, 0.0, 0.0], 300.0, &opts).unwrap();
    let it = extract_itinerary(&tr.events, 5).unwrap();
    assert!(!it.saddles.is_empty());
    assert!(it.saddles.iter().all(|&k| k == 1 || k == 2));
    assert!(it.labels.iter().all(|&l| l == 1));
}

#[test]
fn unperturbed_starts_stay_within_the_floor() {
    let m = coarse();
    let fine = mesh(33, 64);
    let floor = mesh_floor(&MeshIndex::new(m).unwrap(), &fine).unwrap();
    let opts = StabilityOptions {
        eps0: 0.0,
        laps: 1,
        trials: 6,
        seed: 3,
        mesh_floor: floor,
        ..Default::default()
    };
    let r = stability_experiment(&canonical_p5(), m, &opts).unwrap();
    for t in &r.trials {
        assert_ne!(t.status, TrialStatus::Failed, "{:?}", t.message);
        assert!(
            t.max_distance <= floor,
            "trial {}: {} > {floor}",
            t.trial,
            t.max_distance
        );
    }
}

#[test]
fn both_channel_labels_occur() {
    let opts = StabilityOptions {
        eps0: 1e-3,
        laps: 1,
        trials: 200,
        seed: 2024,
        ..Default::default()
    };
    let r = stability_experiment(&canonical_p5(), coarse(), &opts).unwrap();
    assert!(r.channel_ok);
    assert!(r.label_counts[0] > 0 && r.label_counts[1] > 0, "{:?}", r.label_counts);
}

#[test]
fn stability_requires_certified_parameters() {
    let p = canonical_p5().with_rho(4, 1, 0.95).unwrap();
    let err = stability_experiment(&p, coarse(), &StabilityOptions::default()).unwrap_err();
    assert!(matches!(err, Error::Precondition(_)));
}

#[test]
fn strong_and_generic_directions_agree() {
    let p = canonical_p5();
    let eps = [1e-3, 1e-4, 1e-5, 1e-6];
    let g = contraction_experiment(&p, 3, 0.1, &eps, EtaDirection::Generic).unwrap();
    let s = contraction_experiment(&p, 3, 0.1, &eps, EtaDirection::Strong).unwrap();
    assert!((1.35..=1.65).contains(&g.s), "{}", g.s);
    assert!((g.s - s.s).abs() < 0.1, "{} vs {}", g.s, s.s);
    assert!(g.dissipative);
    assert_eq!(g.e, (g.nu - g.s).max(0.0));
}

#[test]
fn non_dissipative_parameters_expand() {
    let p = canonical_p5().with_rho(4, 1, 1.1).unwrap().with_rho(5, 1, 1.1).unwrap();
    let fit = contraction_experiment(&p, 1, 0.1, &[1e-3, 1e-4, 1e-5, 1e-6], EtaDirection::Generic).unwrap();
    assert!(!fit.dissipative);
    assert!(fit.s < 1.0, "{}", fit.s);
}

#[test]
fn contraction_needs_three_decades() {
    let err = contraction_experiment(&canonical_p5(), 1, 0.1, &[1e-3, 1e-4, 1e-5], EtaDirection::Generic);
    assert!(err.is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn distance_is_one_lipschitz(
        a in prop::collection::vec(0.0f64..1.0, 5),
        b in prop::collection::vec(0.0f64..1.0, 5),
    ) {
        let m = coarse();
        let (da, db) = (distance_to_gamma(&a, m).unwrap(), distance_to_gamma(&b, m).unwrap());
        let gap = a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        prop_assert!((da - db).abs() <= gap * (1.0 + 1e-12) + 1e-15);
    }

    #[test]
    fn labels_are_cycle_steps(start in 1usize..=7, steps in prop::collection::vec(1usize..=2, 0..20), p in 4usize..=7) {
        let mut k = (start - 1) % p + 1;
        let mut events = vec![enter(k)];
        for s in &steps {
            k = (k - 1 + s) % p + 1;
            events.push(enter(k));
        }
        let it = extract_itinerary(&events, p).unwrap();
        let expect: Vec<u8> = steps.iter().map(|&s| s as u8).collect();
        prop_assert_eq!(it.labels, expect);
    }
}
