use std::f64::consts::FRAC_PI_2;

use proptest::prelude::*;

use hclab::conditions::{canonical_p5, sample_params};
use hclab::manifold::{
    build_gamma, chart_map, classify_combinatorial, classify_topology, trace_fan, Classification, GammaMesh,
    GammaOptions, TraceOptions,
};
use hclab::model::{saddle_point, SystemParams};

fn small(m_angles: usize, m_arc: usize) -> GammaOptions {
    GammaOptions {
        m_angles,
        m_arc,
        ..Default::default()
    }
}

fn sup(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()))
}

#[test]
fn edge_orbits_of_the_first_fan() {
    let fan = trace_fan(&canonical_p5(), 1, 9, &TraceOptions::default()).unwrap();
    assert_eq!(fan.triple, [1, 2, 3]);
    let flat = &fan.orbits[0];
    assert_eq!(flat.phi, 0.0);
    assert!(flat.points.iter().all(|x| x[1] == 0.0));
    let end = flat.points.last().unwrap();
    assert!(sup(end, &[0.0, 0.0, 1.0]) < 1e-6, "{end:?}");

    let upper = fan.orbits.last().unwrap();
    assert_eq!(upper.phi, FRAC_PI_2);
    let near_o2 = upper
        .points
        .iter()
        .map(|x| sup(x, &[0.0, 1.0, 0.0]))
        .fold(f64::INFINITY, f64::min);
    assert!(near_o2 < 0.01, "closest approach to O_2 is {near_o2}");
    assert!(sup(upper.points.last().unwrap(), &[0.0, 0.0, 1.0]) < 1e-6);
    assert!((fan.arclengths.last().unwrap() - (fan.d_xy + fan.d_yz)).abs() < 1e-9);
}

#[test]
fn arclength_jumps_shrink_under_angle_refinement() {
    let p = canonical_p5();
    let jump = |m| {
        let fan = trace_fan(&p, 2, m, &TraceOptions::default()).unwrap();
        fan.arclengths
            .windows(2)
            .map(|w| (w[1] - w[0]).abs())
            .fold(0.0_f64, f64::max)
    };
    let (a, b, c) = (jump(9), jump(17), jump(33));
    assert!(b < a && c < b, "jumps {a} {b} {c}");
}

fn canonical_mesh(m_angles: usize, m_arc: usize) -> GammaMesh {
    build_gamma(&canonical_p5(), &small(m_angles, m_arc)).unwrap()
}

#[test]
fn canonical_mesh_is_a_mobius_strip() {
    let p = canonical_p5();
    let mesh = canonical_mesh(9, 16);
    assert_eq!(mesh.fans.len(), 5);
    assert!(mesh.edges.iter().all(|e| matches!(e.triangles.len(), 1 | 2)));
    let t = classify_topology(&mesh).unwrap();
    assert_eq!(t.classification, Classification::MobiusStrip);
    assert_eq!(t, classify_combinatorial(5).unwrap());

    // Saddles are shared vertices placed at chart position u = 0 of their own fan.
    for v in &mesh.vertices[..5] {
        assert_eq!(v.chart.u, 0.0);
        assert_eq!(v.x, saddle_point(&p, v.chart.k));
    }
}

#[test]
fn every_orbit_ends_at_the_target_saddle() {
    for k in 1..=5 {
        let fan = trace_fan(&canonical_p5(), k, 9, &TraceOptions::default()).unwrap();
        for orbit in &fan.orbits {
            assert!(
                sup(&orbit.at_u(1.0), &[0.0, 0.0, 1.0]) < 1e-6,
                "k = {k}, phi = {}",
                orbit.phi
            );
        }
    }
}

#[test]
fn boundary_edges_lie_on_the_skip_orbits() {
    let p = canonical_p5();
    let mesh = canonical_mesh(9, 16);
    let mut boundary = 0;
    for e in mesh.edges.iter().filter(|e| e.triangles.len() == 1) {
        let k = mesh.triangles[e.triangles[0]].fan;
        let skipped = p.cyc(k, 1) - 1;
        for &v in &e.v {
            let x = mesh.position(v);
            assert_eq!(
                x[skipped], 0.0,
                "boundary vertex {x:?} of fan {k} leaves the (k, k+2) plane"
            );
            let outside = (1..=5).filter(|&j| j != k && j != p.cyc(k, 2)).all(|j| x[j - 1] == 0.0);
            assert!(outside);
        }
        boundary += 1;
    }
    assert!(boundary > 0);
}

#[test]
fn area_is_stable_under_refinement() {
    let (a, b) = (canonical_mesh(17, 32).area(), canonical_mesh(33, 64).area());
    assert!(((a - b) / b).abs() < 0.01, "area {a} vs {b}");
}

fn sampled(p: usize, seed: u64) -> SystemParams {
    sample_params(p, p, seed).unwrap()
}

#[test]
fn even_cycle_gives_a_cylinder() {
    let mesh = build_gamma(&sampled(6, 3), &small(9, 16)).unwrap();
    let t = classify_topology(&mesh).unwrap();
    assert_eq!(t.boundary_components, 2);
    assert_eq!(t.classification, Classification::Cylinder);
}

#[test]
fn mesh_topology_agrees_with_combinatorics() {
    for p in [7, 8] {
        let mesh = build_gamma(&sampled(p, 100 + p as u64), &small(9, 12)).unwrap();
        let t = classify_topology(&mesh).unwrap();
        assert_eq!(t, classify_combinatorial(p).unwrap(), "p = {p}");
        assert_eq!(t.euler, 0);
    }
}

#[test]
fn chart_examples() {
    let (u, v) = chart_map(0.3, FRAC_PI_2, 0.3);
    assert_eq!(u, 0.3);
    assert!((v - 0.5).abs() < 1e-15);
    assert_eq!(chart_map(0.7, 0.0, 0.3).1, 0.0);
    assert_eq!(chart_map(1.0, 1.1, 0.3).1, 0.0);
}

#[test]
fn chart_is_injective_on_a_grid() {
    for b in [0.1, 0.37, 0.5, 0.9] {
        let mut pts = Vec::new();
        for i in 1..60 {
            for j in 1..60 {
                pts.push(chart_map(i as f64 / 60.0, j as f64 / 60.0 * FRAC_PI_2, b));
            }
        }
        pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!(pts.windows(2).all(|w| w[0] != w[1]), "collision for b = {b}");
    }
}

proptest! {
    #[test]
    fn combinatorial_parity(p in 4usize..200) {
        let t = classify_combinatorial(p).unwrap();
        prop_assert_eq!(t.euler, 0);
        prop_assert_eq!(t.orientable, p % 2 == 0);
        prop_assert_eq!(t.boundary_components, if p % 2 == 0 { 2 } else { 1 });
    }

    #[test]
    fn chart_lands_in_the_triangle(u in 0.0f64..=1.0, phi in 0.0f64..=FRAC_PI_2, b in 0.01f64..0.99) {
        let (x, v) = chart_map(u, phi, b);
        prop_assert_eq!(x, u);
        let roof = if u <= b { u / (2.0 * b) } else { (1.0 - u) / (2.0 * (1.0 - b)) };
        prop_assert!(v >= 0.0 && v <= roof * (1.0 + 1e-12));
    }
}
