mod common;

use common::*;
use qlm_core::embedding::{
    align_rigid, continuation_embed, d_second_fundamental, linearized_embed, tensor_weak_divergence,
};
use qlm_core::mesh::{edge_form_tensor, laplacian, MetricField, SymTensorField};
use qlm_core::oracles::{ellipsoid_metric, schwarzschild_isotropic_sphere};
use qlm_core::{build_icosphere, embed, shape_data, EmbedConfig, Embedding, Error, TriMesh};
use rand::Rng;

fn tight() -> EmbedConfig {
    EmbedConfig {
        tol: 1e-12,
        ..EmbedConfig::default()
    }
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn max_dist(a: &[[f64; 3]], b: &[[f64; 3]]) -> f64 {
    a.iter().zip(b).map(|(p, q)| norm(&sub(*p, *q))).fold(0.0, f64::max)
}

fn field_rel(a: &[[f64; 3]], b: &[[f64; 3]]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(p, q)| norm(&sub(*p, *q)).powi(2)).sum();
    let den: f64 = b.iter().map(|q| norm(q).powi(2)).sum();
    (num / den).sqrt()
}

/// Sum of principal curvatures of the ellipsoid `x²/a² + y²/b² + z²/c² = 1` at `p`.
fn ellipsoid_h(axes: [f64; 3], p: [f64; 3]) -> f64 {
    let [a, b, c] = axes;
    let h = (p[0].powi(2) / a.powi(4) + p[1].powi(2) / b.powi(4) + p[2].powi(2) / c.powi(4)).sqrt();
    (a * a + b * b + c * c - norm(&p).powi(2)) / ((a * b * c).powi(2) * h.powi(3))
}

fn rotation(angle: f64, axis: [f64; 3]) -> [[f64; 3]; 3] {
    let n = norm(&axis);
    let [x, y, z] = axis.map(|c| c / n);
    let (s, c) = angle.sin_cos();
    let t = 1.0 - c;
    [
        [t * x * x + c, t * x * y - s * z, t * x * z + s * y],
        [t * x * y + s * z, t * y * y + c, t * y * z - s * x],
        [t * x * z - s * y, t * y * z + s * x, t * z * z + c],
    ]
}

fn apply(r: &[[f64; 3]; 3], p: [f64; 3], shift: [f64; 3]) -> [f64; 3] {
    [0, 1, 2].map(|i| r[i][0] * p[0] + r[i][1] * p[1] + r[i][2] * p[2] + shift[i])
}

fn random_velocity(mesh: &TriMesh, x: &[[f64; 3]], seed: u64) -> Vec<[f64; 3]> {
    let mut r = rng(seed);
    let f: Vec<Vec<f64>> = (0..3).map(|_| smooth_field(x, 1.0, 3, &mut r)).collect();
    (0..mesh.num_vertices()).map(|i| [f[0][i], f[1][i], f[2][i]]).collect()
}

#[test]
fn round_metric_embeds_as_round_sphere() {
    let (m, g) = build_icosphere(4, 1.0).unwrap();
    let mut r = rng(1);
    let seed: Vec<[f64; 3]> = m
        .positions()
        .unwrap()
        .iter()
        .map(|p| p.map(|c| c * (1.0 + 0.02 * r.random_range(-1.0..1.0))))
        .collect();
    let e = embed(&m, &g, Some(&seed), &EmbedConfig::default()).unwrap();
    assert!(e.edge_residual < 1e-8);
    for p in &e.positions {
        let rad = norm(p);
        assert!((1.0 - 5e-3..=1.0 + 5e-3).contains(&rad), "{rad}");
    }
    let c = e.positions.iter().fold([0.0; 3], |s, p| [s[0] + p[0], s[1] + p[1], s[2] + p[2]]);
    assert!(norm(&c) / (m.num_vertices() as f64) < 1e-10);
}

#[test]
fn ellipsoid_metric_recovered_up_to_rigid_motion() {
    let (m, g, truth) = ellipsoid_metric(1.0, 1.0, 1.2, 4).unwrap();
    let (_, round) = build_icosphere(4, 1.0).unwrap();
    let _ = round;
    let seed: Vec<[f64; 3]> = truth.positions.iter().map(|p| {
        let q = [p[0], p[1], p[2] / 1.2];
        q.map(|c| c / norm(&q))
    }).collect();
    let e = embed(&m, &g, Some(&seed), &EmbedConfig::default()).unwrap();
    let (aligned, _) = align_rigid(&e.positions, &truth.positions);
    assert!(max_dist(&aligned, &truth.positions) < 1e-2);
}

#[test]
fn isotropic_schwarzschild_sphere_radius() {
    let b = schwarzschild_isotropic_sphere(1.0, 10.0, 4).unwrap();
    let e = embed(&b.data.mesh, &b.data.metric, None, &EmbedConfig::default()).unwrap();
    let want = (1.0f64 + 1.0 / 20.0).powi(2) * 10.0;
    assert!((want - 11.025).abs() < 1e-12);
    for p in &e.positions {
        assert!(rel(norm(p), want) < 1e-8);
    }
}

#[test]
fn negative_curvature_is_refused() {
    let (m, g) = build_icosphere(2, 1.0).unwrap();
    let mut l = g.lengths().to_vec();
    for &n in m.neighbors(7) {
        l[m.edge_between(7, n).unwrap()] *= 0.6;
    }
    let metric = MetricField::new(&m, l).unwrap();
    match embed(&m, &metric, None, &EmbedConfig::default()) {
        Err(Error::NotEmbeddableHere { vertex, curvature }) => {
            assert_eq!(vertex, 7);
            assert!(curvature < 0.0);
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn residual_history_monotone() {
    let (m, g, _) = ellipsoid_metric(1.0, 0.9, 1.3, 3).unwrap();
    let (_, round) = build_icosphere(3, 1.0).unwrap();
    let _ = round;
    let (sm, _) = build_icosphere(3, 1.0).unwrap();
    let e = embed(&m, &g, sm.positions(), &tight()).unwrap();
    assert!(!e.residual_history.is_empty());
    for w in e.residual_history.windows(2) {
        assert!(w[1] <= w[0], "{:?}", e.residual_history);
    }
    assert!(e.edge_residual < 1e-12);
}

#[test]
fn gauge_is_rigid_motion_invariant() {
    let (m, g, _) = ellipsoid_metric(1.0, 1.1, 1.3, 3).unwrap();
    let x = embed(&m, &g, None, &tight()).unwrap();
    let rot = rotation(0.7, [0.3, -1.0, 0.4]);
    let moved: Vec<[f64; 3]> = x.positions.iter().map(|p| apply(&rot, *p, [0.5, -2.0, 1.0])).collect();
    let y = embed(&m, &g, Some(&moved), &tight()).unwrap();
    assert!(max_dist(&x.positions, &y.positions) < 1e-10);
}

#[test]
fn continuation_identity_path() {
    let (m, g, _) = ellipsoid_metric(1.0, 1.1, 1.3, 3).unwrap();
    let x = embed(&m, &g, None, &tight()).unwrap();
    let c = continuation_embed(&m, &x, &g, &g, 3, &tight()).unwrap();
    assert!(max_dist(&c.embedding.positions, &x.positions) < 1e-10);
}

#[test]
fn continuation_scaling_family() {
    let (m, g) = build_icosphere(3, 1.0).unwrap();
    let x = embed(&m, &g, None, &tight()).unwrap();
    let target = g.scaled(1.05);
    let c = continuation_embed(&m, &x, &g, &target, 5, &tight()).unwrap();
    assert_eq!(c.steps, 5);
    for (p, q) in c.embedding.positions.iter().zip(&x.positions) {
        assert!(rel(norm(p), 1.05 * norm(q)) < 1e-9);
    }
}

#[test]
fn continuation_to_ellipsoid_matches_direct_embed() {
    let (m, target, _) = ellipsoid_metric(1.0, 1.0, 1.2, 3).unwrap();
    let (round_mesh, round) = build_icosphere(3, 1.0).unwrap();
    let start = embed(&m, &MetricField::new(&m, round.lengths().to_vec()).unwrap(), round_mesh.positions(), &tight()).unwrap();
    let start_metric = MetricField::new(&m, round.lengths().to_vec()).unwrap();
    let c = continuation_embed(&m, &start, &start_metric, &target, 10, &tight()).unwrap();
    let direct = embed(&m, &target, Some(&start.positions), &tight()).unwrap();
    let (aligned, _) = align_rigid(&c.embedding.positions, &direct.positions);
    assert!(max_dist(&aligned, &direct.positions) < 1e-6);
    assert!(c.min_curvature > 0.0);
}

#[test]
fn unit_sphere_shape_data() {
    let (m, g) = build_icosphere(5, 1.0).unwrap();
    let x = embed(&m, &g, None, &EmbedConfig::default()).unwrap();
    let s = shape_data(&m, &x, &g).unwrap();
    for (h, n) in s.mean_curvature.iter().zip(&s.normals) {
        assert!(rel(*h, 2.0) < 1e-2);
        assert!((norm(n) - 1.0).abs() < 1e-12);
    }
    for t in &s.second_fundamental.values {
        assert!((t[0] - 1.0).abs() < 1e-2 && t[1].abs() < 1e-2 && (t[2] - 1.0).abs() < 1e-2, "{t:?}");
    }
    for (n, p) in s.normals.iter().zip(&x.positions) {
        let d = n[0] * p[0] + n[1] * p[1] + n[2] * p[2];
        assert!(d > 0.99);
    }
}

#[test]
fn sphere_mean_curvature_scales() {
    let r = 3.0;
    let (m, g) = build_icosphere(4, r).unwrap();
    let x = embed(&m, &g, None, &EmbedConfig::default()).unwrap();
    let s = shape_data(&m, &x, &g).unwrap();
    assert!(s.mean_curvature.iter().all(|h| rel(*h, 2.0 / r) < 1e-2));
}

#[test]
fn ellipsoid_mean_curvature_at_poles_and_equator() {
    let axes = [1.0, 1.0, 1.2];
    let (m, g, truth) = ellipsoid_metric(axes[0], axes[1], axes[2], 5).unwrap();
    let x = embed(&m, &g, Some(&truth.positions), &EmbedConfig::default()).unwrap();
    let s = shape_data(&m, &x, &g).unwrap();
    let (aligned, _) = align_rigid(&x.positions, &truth.positions);
    let _ = aligned;
    let pick = |key: &dyn Fn(&[f64; 3]) -> f64| {
        (0..m.num_vertices())
            .max_by(|&i, &j| key(&truth.positions[i]).total_cmp(&key(&truth.positions[j])))
            .unwrap()
    };
    let pole = pick(&|p| p[2]);
    let equator = pick(&|p| -p[2].abs() + 1e-3 * p[0]);
    assert!(rel(ellipsoid_h(axes, [0.0, 0.0, 1.2]), 2.4) < 1e-12);
    assert!(rel(ellipsoid_h(axes, [1.0, 0.0, 0.0]), 1.0 + 1.0 / 1.44) < 1e-12);
    for v in [pole, equator] {
        let want = ellipsoid_h(axes, truth.positions[v]);
        assert!(rel(s.mean_curvature[v], want) < 2e-2, "vertex {v}: {} vs {want}", s.mean_curvature[v]);
    }
    let mass = laplacian(&m, &g).unwrap().mass;
    let area: f64 = mass.iter().sum();
    let l2: f64 = (0..m.num_vertices())
        .map(|v| mass[v] * rel(s.mean_curvature[v], ellipsoid_h(axes, truth.positions[v])).powi(2))
        .sum::<f64>()
        / area;
    assert!(l2.sqrt() < 5e-3);
}

#[test]
fn linearized_embed_zero_rho() {
    let (m, g, _) = ellipsoid_metric(1.0, 1.1, 1.3, 3).unwrap();
    let x = embed(&m, &g, None, &tight()).unwrap();
    let y = linearized_embed(&m, &x, &SymTensorField::zeros(&m)).unwrap();
    assert!(y.velocity.iter().all(|v| norm(v) == 0.0));
}

#[test]
fn linearized_embed_scaling_solution() {
    let (m, g, _) = ellipsoid_metric(1.0, 1.1, 1.3, 3).unwrap();
    let x = embed(&m, &g, None, &tight()).unwrap();
    let y = linearized_embed(&m, &x, &SymTensorField::identity(&m).scaled(2.0)).unwrap();
    let want: Vec<[f64; 3]> = x.positions.iter().map(|p| sub(*p, x.positions[0])).collect();
    assert!(field_rel(&y.velocity, &want) < 1e-8, "{}", field_rel(&y.velocity, &want));
    assert!(y.residual < 1e-8);
    assert!(!y.flat_direction);
}

#[test]
fn linearized_embed_recovers_velocity() {
    let (m, g, _) = ellipsoid_metric(1.0, 1.1, 1.3, 3).unwrap();
    let x = embed(&m, &g, None, &tight()).unwrap();
    let w = random_velocity(&m, &x.positions, 7);
    let rho = edge_form_tensor(&m, &g, &pullback_form(&m, &x.positions, &w)).unwrap();
    let y = linearized_embed(&m, &x, &rho).unwrap();
    // Y - W is an infinitesimal rigid motion.
    let d: Vec<[f64; 3]> = y.velocity.iter().zip(&w).map(|(a, b)| sub(*a, *b)).collect();
    let rigid = fit_rigid(&x.positions, &d);
    let resid: Vec<[f64; 3]> = d.iter().zip(&rigid).map(|(a, b)| sub(*a, *b)).collect();
    let size = |f: &[[f64; 3]]| f.iter().map(|p| norm(p).powi(2)).sum::<f64>().sqrt();
    assert!(size(&resid) < 1e-8 * size(&w), "{}", size(&resid) / size(&w));
}

/// Least-squares infinitesimal rigid motion `a + ω × x` matching `d`.
fn fit_rigid(x: &[[f64; 3]], d: &[[f64; 3]]) -> Vec<[f64; 3]> {
    let mut ata = nalgebra::SMatrix::<f64, 6, 6>::zeros();
    let mut atb = nalgebra::SVector::<f64, 6>::zeros();
    for (p, v) in x.iter().zip(d) {
        // rows: d = a + ω × p = a - [p]× ω
        let rows = [
            [1.0, 0.0, 0.0, 0.0, p[2], -p[1]],
            [0.0, 1.0, 0.0, -p[2], 0.0, p[0]],
            [0.0, 0.0, 1.0, p[1], -p[0], 0.0],
        ];
        for (k, r) in rows.iter().enumerate() {
            let r = nalgebra::SVector::<f64, 6>::from_row_slice(r);
            ata += r * r.transpose();
            atb += r * v[k];
        }
    }
    let s = ata.lu().solve(&atb).unwrap();
    x.iter()
        .map(|p| {
            let w = [s[3], s[4], s[5]];
            [
                s[0] + w[1] * p[2] - w[2] * p[1],
                s[1] + w[2] * p[0] - w[0] * p[2],
                s[2] + w[0] * p[1] - w[1] * p[0],
            ]
        })
        .collect()
}

#[test]
fn linearized_embed_is_linear() {
    let (m, g, _) = ellipsoid_metric(1.0, 1.1, 1.3, 3).unwrap();
    let x = embed(&m, &g, None, &tight()).unwrap();
    let r1 = edge_form_tensor(&m, &g, &pullback_form(&m, &x.positions, &random_velocity(&m, &x.positions, 1))).unwrap();
    let r2 = edge_form_tensor(&m, &g, &pullback_form(&m, &x.positions, &random_velocity(&m, &x.positions, 2))).unwrap();
    let (a, b) = (0.7, -1.9);
    let combo = SymTensorField::new(
        &m,
        r1.values.iter().zip(&r2.values).map(|(p, q)| [0, 1, 2].map(|k| a * p[k] + b * q[k])).collect(),
    )
    .unwrap();
    let y1 = linearized_embed(&m, &x, &r1).unwrap().velocity;
    let y2 = linearized_embed(&m, &x, &r2).unwrap().velocity;
    let y = linearized_embed(&m, &x, &combo).unwrap().velocity;
    let want: Vec<[f64; 3]> = y1.iter().zip(&y2).map(|(p, q)| [0, 1, 2].map(|k| a * p[k] + b * q[k])).collect();
    assert!(field_rel(&y, &want) < 1e-9);
}

#[test]
fn d_second_fundamental_scaling_family() {
    let (m, g) = build_icosphere(4, 1.0).unwrap();
    let x = embed(&m, &g, None, &tight()).unwrap();
    let s = shape_data(&m, &x, &g).unwrap();
    let a = d_second_fundamental(&m, &x, &g, &SymTensorField::identity(&m).scaled(2.0)).unwrap();
    let num: f64 = a.values.iter().zip(&s.second_fundamental.values).map(|(p, q)| (0..3).map(|k| (p[k] - q[k]).powi(2)).sum::<f64>()).sum();
    let den: f64 = s.second_fundamental.values.iter().map(|q| q.iter().map(|c| c * c).sum::<f64>()).sum();
    assert!((num / den).sqrt() < 1e-8, "{}", (num / den).sqrt());
    let zero = d_second_fundamental(&m, &x, &g, &SymTensorField::zeros(&m)).unwrap();
    assert!(zero.values.iter().all(|t| t.iter().all(|c| *c == 0.0)));
}

#[test]
fn newton_tensor_weak_divergence_decays() {
    let mut prev = f64::INFINITY;
    for level in [3, 4] {
        let (m, g, _) = ellipsoid_metric(1.0, 1.1, 1.2, level).unwrap();
        let x = embed(&m, &g, None, &EmbedConfig::default()).unwrap();
        let s = shape_data(&m, &x, &g).unwrap();
        let div = tensor_weak_divergence(&m, &x, &g, &s.normals, &s.newton_tensor()).unwrap();
        let mass = laplacian(&m, &g).unwrap().mass;
        let n: f64 = div.iter().zip(&mass).map(|(d, w)| w * norm(d).powi(2)).sum::<f64>().sqrt();
        assert!(n < prev);
        prev = n;
    }
}

#[test]
fn embedding_rejects_foreign_mesh() {
    let (m, g) = build_icosphere(2, 1.0).unwrap();
    let (m3, _) = build_icosphere(3, 1.0).unwrap();
    let x = embed(&m, &g, None, &EmbedConfig::default()).unwrap();
    assert!(matches!(shape_data(&m3, &x, &g), Err(Error::MeshMismatch) | Err(_)));
    let e = Embedding::from_positions(&m, x.positions.clone()).unwrap();
    assert!(e.check_mesh(&m3).is_err());
}
