mod common;

use std::f64::consts::PI;

use common::*;
use qlm_core::embedding::shape_data;
use qlm_core::energy::{hat_metric, theta_field, wang_yau_energy_with, EnergyConfig};
use qlm_core::mesh::{gaussian_curvature, gradient, laplacian, VectorField};
use qlm_core::oracles::{ellipsoid_metric, round_sphere, schwarzschild_sphere};
use qlm_core::variation::stability_from_forms;
use qlm_core::{
    brown_york_mass, build_icosphere, embed, wang_yau_energy, BoundaryData, EmbedConfig, Error,
    QuadraticForms, ScalarField,
};
use rand::Rng;

fn cfg() -> EnergyConfig {
    EnergyConfig {
        reference_masses: false,
        ..EnergyConfig::default()
    }
}

#[test]
fn hat_metric_of_constant_tau_is_unchanged() {
    let (m, g) = build_icosphere(2, 1.0).unwrap();
    for c in [0.0, 3.5] {
        let h = hat_metric(&m, &g, &ScalarField::constant(&m, c)).unwrap();
        assert_eq!(h.lengths(), g.lengths());
    }
}

#[test]
fn hat_metric_of_small_harmonic_is_positively_curved() {
    let (m, g) = build_icosphere(4, 1.0).unwrap();
    let tau = ScalarField::new(&m, harmonic1(m.positions().unwrap()).iter().map(|y| 0.1 * y).collect()).unwrap();
    let h = hat_metric(&m, &g, &tau).unwrap();
    for (e, &[a, b]) in m.edges().iter().enumerate() {
        let want = (g.lengths()[e].powi(2) + (tau.values[a] - tau.values[b]).powi(2)).sqrt();
        assert!((h.lengths()[e] - want).abs() < 1e-15);
    }
    let k = gaussian_curvature(&m, &h).unwrap();
    assert!(k.values.iter().all(|x| *x > 0.0));
    let total: f64 = qlm_core::mesh::angle_defects(&m, &h).unwrap().iter().sum();
    assert!((total - 4.0 * PI).abs() < 1e-10);
}

#[test]
fn steep_tau_is_not_admissible() {
    let (m, g) = build_icosphere(2, 1.0).unwrap();
    let mut t = vec![0.0; m.num_vertices()];
    t[5] = 3.0;
    let tau = ScalarField::new(&m, t).unwrap();
    match hat_metric(&m, &g, &tau) {
        Err(Error::NotAdmissibleHint { curvature, .. }) => assert!(curvature <= 1e-12),
        other => panic!("{other:?}"),
    }
    let data = round_sphere(1.0, 2.0, 2).unwrap().data;
    assert!(matches!(wang_yau_energy(&data, &tau), Err(Error::NotAdmissibleHint { .. })));
}

#[test]
fn theta_of_zero_tau_is_zero() {
    let (m, g) = build_icosphere(3, 1.0).unwrap();
    let th = theta_field(&m, &g, &ScalarField::constant(&m, 2.0), &ScalarField::zeros(&m)).unwrap();
    assert!(th.values.iter().all(|x| *x == 0.0));
}

#[test]
fn theta_sign_follows_laplacian() {
    let (m, g) = build_icosphere(3, 1.0).unwrap();
    let mut r = rng(3);
    let tau = ScalarField::new(&m, smooth_field(m.positions().unwrap(), 1.0, 3, &mut r)).unwrap();
    let lap = laplacian(&m, &g).unwrap().apply_values(&tau.values);
    let th = theta_field(&m, &g, &ScalarField::constant(&m, 1.5), &tau).unwrap();
    for (d, t) in lap.iter().zip(&th.values) {
        if *d < -1e-12 {
            assert!(*t > 0.0);
        } else if *d > 1e-12 {
            assert!(*t < 0.0);
        }
    }
}

#[test]
fn theta_for_first_harmonic() {
    let (m, g) = build_icosphere(5, 1.0).unwrap();
    let p = m.positions().unwrap();
    let eps = 0.05;
    let tau = ScalarField::new(&m, harmonic1(p).iter().map(|y| eps * y).collect()).unwrap();
    let th = theta_field(&m, &g, &ScalarField::constant(&m, 1.0), &tau).unwrap();
    let mass = laplacian(&m, &g).unwrap().mass;
    let (mut num, mut den) = (0.0, 0.0);
    for (i, q) in p.iter().enumerate() {
        let z = q[2] / norm(q);
        let want = 2.0 * eps * z / (1.0 + eps * eps * (1.0 - z * z)).sqrt();
        num += mass[i] * (th.values[i].sinh() - want).powi(2);
        den += mass[i] * want * want;
    }
    assert!((num / den).sqrt() < 5e-2, "{}", (num / den).sqrt());
}

#[test]
fn energy_at_zero_equals_brown_york() {
    for (a, b, c) in [(1.0, 1.0, 1.0), (1.0, 1.1, 1.3)] {
        let (m, g, _) = ellipsoid_metric(a, b, c, 3).unwrap();
        let h = ScalarField::new(&m, m.positions().unwrap().iter().map(|p| 1.8 + 0.1 * p[0]).collect()).unwrap();
        let data = BoundaryData::time_symmetric(m.clone(), g, h).unwrap();
        let e = wang_yau_energy(&data, &ScalarField::zeros(&m)).unwrap();
        let mby = brown_york_mass(&data).unwrap();
        assert!(rel(e.energy, mby) < 1e-8, "{} {}", e.energy, mby);
        assert_eq!(e.m_by, Some(e.energy));
        assert!(e.admissible_hint);
    }
}

#[test]
fn schwarzschild_energy_at_zero() {
    let b = schwarzschild_sphere(1.0, 10.0, 4).unwrap();
    let want = 10.0 * (1.0 - (0.8f64).sqrt());
    assert!((want - 1.0557).abs() < 1e-4);
    assert!((b.get("m_BY").unwrap() - want).abs() < 1e-15);
    let e = wang_yau_energy(&b.data, &ScalarField::zeros(&b.data.mesh)).unwrap();
    assert!(rel(e.energy, want) < 5e-3, "{}", e.energy);
}

#[test]
fn brown_york_of_flat_ball_vanishes() {
    let b = round_sphere(1.0, 2.0, 4).unwrap();
    assert!(brown_york_mass(&b.data).unwrap().abs() < 1e-4);
}

#[test]
fn brown_york_large_radius_sweep() {
    let mut prev = f64::INFINITY;
    for r in [20.0, 40.0, 80.0] {
        let b = schwarzschild_sphere(1.0, r, 4).unwrap();
        let m = brown_york_mass(&b.data).unwrap();
        let exact = r * (1.0 - (1.0 - 2.0 / r).sqrt());
        assert!(rel(m, exact) < 2e-3, "R={r}: {m} vs {exact}");
        // exact - 1 = 1/2R + O(R⁻²)
        assert!(rel(exact - 1.0, 0.5 / r) < 2.0 / r);
        assert!((m - 1.0).abs() < prev);
        prev = (m - 1.0).abs();
    }
}

#[test]
fn brown_york_needs_time_symmetry() {
    let b = round_sphere(1.0, 1.5, 2).unwrap();
    let v = VectorField::new(&b.data.mesh, vec![[0.1, 0.0]; b.data.mesh.num_faces()]).unwrap();
    let moving = b.data.with_v(v).unwrap();
    assert!(!moving.time_symmetric);
    assert!(brown_york_mass(&moving).is_err());
}

#[test]
fn boundary_data_invariants() {
    let (m, g) = build_icosphere(1, 1.0).unwrap();
    let mut h = vec![2.0; m.num_vertices()];
    h[3] = 0.0;
    let bad = ScalarField::new(&m, h).unwrap();
    assert!(BoundaryData::time_symmetric(m.clone(), g.clone(), bad).is_err());
    let v = VectorField::new(&m, vec![[0.0, 1e-3]; m.num_faces()]).unwrap();
    assert!(BoundaryData::new(m.clone(), g, ScalarField::constant(&m, 2.0), v, true).is_err());
}

#[test]
fn convex_surface_data_has_nonnegative_energy() {
    let (m, g, _) = ellipsoid_metric(1.0, 1.1, 1.25, 3).unwrap();
    let x = embed(&m, &g, None, &EmbedConfig::default()).unwrap();
    let h0 = shape_data(&m, &x, &g).unwrap().mean_curvature;
    let data = BoundaryData::time_symmetric(m.clone(), g, ScalarField::new(&m, h0).unwrap()).unwrap();
    let mut r = rng(11);
    for _ in 0..6 {
        let deg = r.random_range(1..=3);
        let tau = with_max(smooth_field(&x.positions, 1.0, deg, &mut r), r.random_range(0.01..0.1));
        let e = wang_yau_energy_with(&data, &ScalarField::new(&m, tau).unwrap(), &cfg(), None).unwrap();
        assert!(e.energy >= -1e-4, "{}", e.energy);
    }
}

#[test]
fn energy_even_in_tau_without_v() {
    let b = schwarzschild_sphere(1.0, 6.0, 3).unwrap();
    let p = b.data.mesh.positions().unwrap().to_vec();
    let mut r = rng(12);
    let tau = with_max(smooth_field(&p, 6.0, 3, &mut r), 0.3);
    let neg: Vec<f64> = tau.iter().map(|t| -t).collect();
    let m = &b.data.mesh;
    let ep = wang_yau_energy_with(&b.data, &ScalarField::new(m, tau).unwrap(), &cfg(), None).unwrap();
    let en = wang_yau_energy_with(&b.data, &ScalarField::new(m, neg).unwrap(), &cfg(), None).unwrap();
    assert!((ep.energy - en.energy).abs() < 1e-8 * ep.energy.abs().max(1.0));
    for (a, b) in ep.theta.values.iter().zip(&en.theta.values) {
        assert!((a + b).abs() < 1e-14);
    }
}

#[test]
fn connection_term_is_odd_in_tau() {
    let b = schwarzschild_sphere(1.0, 6.0, 3).unwrap();
    let m = &b.data.mesh;
    let p = m.positions().unwrap().to_vec();
    let w = with_max(smooth_field(&p, 6.0, 2, &mut rng(13)), 0.05);
    let v = gradient(m, &b.data.metric, &ScalarField::new(m, w).unwrap()).unwrap();
    let data = b.data.with_v(v.clone()).unwrap();
    let tau = with_max(smooth_field(&p, 6.0, 3, &mut rng(14)), 0.3);
    let neg: Vec<f64> = tau.iter().map(|t| -t).collect();
    let e = |d: &BoundaryData, t: &[f64]| {
        wang_yau_energy_with(d, &ScalarField::new(m, t.to_vec()).unwrap(), &cfg(), None).unwrap().energy
    };
    let even = e(&b.data, &tau);
    let odd = e(&data, &tau) - even;
    assert!(odd.abs() > 1e-6);
    assert!((e(&data, &neg) - even + odd).abs() < 1e-8);
    // ⟨V, ∇τ⟩ is paired per face
    let gt = gradient(m, &b.data.metric, &ScalarField::new(m, tau.clone()).unwrap()).unwrap();
    let areas: Vec<f64> = qlm_core::mesh::face_geometries(m, &b.data.metric).unwrap().iter().map(|g| g.area).collect();
    let pair: f64 = v.values.iter().zip(&gt.values).zip(&areas).map(|((a, b), s)| s * (a[0] * b[0] + a[1] * b[1])).sum();
    assert!((odd - pair / (8.0 * PI)).abs() < 1e-12, "{odd} {}", pair / (8.0 * PI));
}

#[test]
fn local_minimum_bound() {
    let b = round_sphere(1.0, 1.0, 3).unwrap();
    let q = QuadraticForms::new(&b.data).unwrap();
    let s = stability_from_forms(&q).unwrap();
    assert!(s.beta > 0.0);
    let m = brown_york_mass(&b.data).unwrap();
    let p = b.data.mesh.positions().unwrap().to_vec();
    let mut r = rng(15);
    for _ in 0..8 {
        let deg = r.random_range(1..=4);
        let tau = with_max(smooth_field(&p, 1.0, deg, &mut r), r.random_range(2e-3..1e-2));
        let e = wang_yau_energy_with(&b.data, &ScalarField::new(&b.data.mesh, tau.clone()).unwrap(), &cfg(), None)
            .unwrap()
            .energy;
        assert!(e - m >= s.beta_energy / 8.0 * q.lap_sq(&tau), "{} {}", e - m, q.lap_sq(&tau));
    }
}
