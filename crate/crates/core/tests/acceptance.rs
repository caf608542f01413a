//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any failure.

mod common;

use std::f64::consts::PI;
use std::time::Instant;

use common::*;
use qlm_core::embedding::{
    align_rigid, d_second_fundamental, second_fundamental_in_frame, tensor_weak_divergence,
};
use qlm_core::energy::{hat_metric, wang_yau_energy_with, EnergyConfig};
use qlm_core::linalg::wdot;
use qlm_core::mesh::{
    angle_defects, edge_form_tensor, gradient, laplacian, ScalarField,
};
use qlm_core::oracles::{ellipsoid_mean_curvature, ellipsoid_metric, round_sphere, schwarzschild_sphere};
use qlm_core::solver::{newton_solve, SolverConfig};
use qlm_core::variation::{
    el_residual_eval, linear_function_bound, linear_response, stability_from_forms, QuadraticForms,
};
use qlm_core::{
    brown_york_mass, embed, shape_data, stability_beta, BoundaryData, EmbedConfig, Error, Result,
};
use rand::Rng;

type Outcome = Result<(bool, String)>;

fn tight() -> EmbedConfig {
    EmbedConfig {
        tol: 1e-12,
        polish_steps: 6,
        ..EmbedConfig::default()
    }
}

fn energy_cfg() -> EnergyConfig {
    EnergyConfig {
        embed: tight(),
        reference_masses: false,
    }
}

/// Brown-York mass of Schwarzschild spheres.
fn c1() -> Outcome {
    let exact = |m: f64, r: f64| r * (1.0 - (1.0 - 2.0 * m / r).sqrt());
    let b = schwarzschild_sphere(1.0, 10.0, 5)?;
    let m10 = brown_york_mass(&b.data)?;
    let e10 = rel(m10, 1.05573);
    let mut ok = e10 < 5e-3 && rel(exact(1.0, 10.0), 1.05573) < 1e-5;
    let mut detail = format!("R=10: m_BY {m10:.6} (rel err {e10:.2e})");
    for r in [20.0, 40.0, 80.0] {
        let m = brown_york_mass(&schwarzschild_sphere(1.0, r, 5)?.data)?;
        let fit = (m - 1.0) / (1.0 / (2.0 * r));
        ok &= (fit - 1.0).abs() < 0.1;
        detail += &format!("; R={r}: (m_BY-1)/(m²/2R) = {fit:.4}");
    }
    Ok((ok, detail))
}

/// Flat ball: zero mass and a linear-function kernel.
fn c2() -> Outcome {
    let b = round_sphere(1.0, 2.0, 4)?;
    let m = brown_york_mass(&b.data)?;
    let s = stability_beta(&b.data)?;
    let ok = m.abs() <= 1e-6 && s.beta.abs() <= 1e-2 && s.linear_participation > 0.99;
    Ok((
        ok,
        format!(
            "m_BY {m:.2e}, beta {:.2e}, degree-1 participation {:.6}",
            s.beta, s.linear_participation
        ),
    ))
}

/// Umbilic sphere with |H| = 1.
fn c3() -> Outcome {
    let b = round_sphere(1.0, 1.0, 4)?;
    let q = QuadraticForms::new(&b.data)?;
    let s = stability_from_forms(&q)?;
    let p = b.data.mesh.positions().unwrap().to_vec();
    let mut r = rng(3);
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let eta = smooth_field(&p, 1.0, 4, &mut r);
        worst = worst.max(rel(q.second_variation(&eta), q.lap_sq(&eta)));
    }
    let ok = (s.beta - 1.0).abs() <= 1e-2 && worst <= 1e-2;
    Ok((ok, format!("beta {:.6}, worst |Q(η)/∮(Δη)² - 1| {worst:.2e}", s.beta)))
}

/// Positive eigenvalue-criterion margin implies positive beta.
fn c4() -> Outcome {
    let mut r = rng(4);
    let (mut positive, mut violations) = (0, 0);
    let mut min_beta_pos = f64::INFINITY;
    for _ in 0..20 {
        let axes = [r.random_range(0.85..1.2), r.random_range(0.85..1.2), r.random_range(0.85..1.2)];
        let s = r.random_range(0.3..1.0);
        let (mesh, metric, emb) = ellipsoid_metric(axes[0], axes[1], axes[2], 4)?;
        let h: Vec<f64> = emb.positions.iter().map(|p| s * ellipsoid_mean_curvature(axes, *p)).collect();
        let norm_h = ScalarField::named(&mesh, "normH", h)?;
        let data = BoundaryData::time_symmetric(mesh, metric, norm_h)?;
        let rep = stability_beta(&data)?;
        if rep.eigenvalue_criterion_margin > 0.0 {
            positive += 1;
            min_beta_pos = min_beta_pos.min(rep.beta);
            if rep.beta <= 0.0 {
                violations += 1;
            }
        }
    }
    Ok((
        violations == 0 && positive > 0,
        format!("{positive}/20 datasets with positive margin, {violations} with beta <= 0 (min beta among them {min_beta_pos:.4})"),
    ))
}

/// Finite-difference second variation of the energy.
fn c5() -> Outcome {
    let b = schwarzschild_sphere(1.0, 10.0, 4)?;
    let q = QuadraticForms::new(&b.data)?;
    let p = b.data.mesh.positions().unwrap().to_vec();
    let cfg = energy_cfg();
    let e0 = wang_yau_energy_with(&b.data, &ScalarField::zeros(&b.data.mesh), &cfg, None)?.energy;
    let mut r = rng(5);
    let mut worst: f64 = 0.0;
    for _ in 0..3 {
        let eta = with_max(smooth_field(&p, 10.0, 3, &mut r), 10.0);
        let sv = q.second_variation(&eta) / (8.0 * PI);
        let mut fd = Vec::new();
        for t in [1e-2, 5e-3] {
            let tau = ScalarField::new(&b.data.mesh, eta.iter().map(|v| v * t).collect())?;
            let e = wang_yau_energy_with(&b.data, &tau, &cfg, None)?.energy;
            fd.push((e - e0) / (t * t / 2.0));
        }
        let rich = (4.0 * fd[1] - fd[0]) / 3.0;
        worst = worst.max(rel(rich, sv));
    }
    Ok((worst < 2e-2, format!("worst Richardson relative error {worst:.2e}")))
}

/// Local-minimum bound `E - m_BY ≥ (β/8)∮(Δτ)²` with the energy-normalized β.
fn c6() -> Outcome {
    let b = schwarzschild_sphere(1.0, 10.0, 4)?;
    let q = QuadraticForms::new(&b.data)?;
    let s = stability_from_forms(&q)?;
    let m = brown_york_mass(&b.data)?;
    let p = b.data.mesh.positions().unwrap().to_vec();
    let cfg = energy_cfg();
    let mut r = rng(6);
    let mut min_ratio = f64::INFINITY;
    for _ in 0..50 {
        let deg = r.random_range(1..=4);
        let tau = with_max(smooth_field(&p, 10.0, deg, &mut r), r.random_range(2e-3..1e-2));
        let e = wang_yau_energy_with(&b.data, &ScalarField::new(&b.data.mesh, tau.clone())?, &cfg, None)?.energy;
        let bound = s.beta_energy / 8.0 * q.lap_sq(&tau);
        min_ratio = min_ratio.min((e - m) / bound);
    }
    Ok((
        min_ratio >= 1.0,
        format!("beta {:.6} (energy-normalized {:.6}); min (E - m_BY)/bound over 50 τ = {min_ratio:.3}", s.beta, s.beta_energy),
    ))
}

/// Surface Reilly inequality on the ellipsoid (1, 1, 1.2).
fn c7() -> Outcome {
    let (mesh, metric, _) = ellipsoid_metric(1.0, 1.0, 1.2, 5)?;
    let e = embed(&mesh, &metric, None, &EmbedConfig::default())?;
    let sd = shape_data(&mesh, &e, &metric)?;
    let norm_h = sd.mean_curvature.clone();
    let surf = qlm_core::energy::Surface { embedding: e.clone(), shape: sd };
    let q = QuadraticForms::from_surface(&mesh, &metric, surf, &norm_h)?;
    let norms = |eta: &[f64]| q.lap_sq(eta) + q.grad_sq(eta) + wdot(q.mass(), eta, eta);
    let mut r = rng(7);
    let mut min_rand = f64::INFINITY;
    for _ in 0..50 {
        let eta = smooth_field(&e.positions, 1.0, r.random_range(1..=5), &mut r);
        min_rand = min_rand.min(q.i2(&eta) / norms(&eta));
    }
    let mut max_lin: f64 = 0.0;
    for _ in 0..10 {
        let a = [r.random_range(-1.0..1.0), r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)];
        let eta: Vec<f64> = e.positions.iter().map(|p| a[0] * p[0] + a[1] * p[1] + a[2] * p[2] + 0.3).collect();
        max_lin = max_lin.max(q.i2(&eta).abs() / norms(&eta));
    }
    Ok((
        min_rand >= -1e-3 && max_lin < 1e-3,
        format!("min I2/norms over 50 random η {min_rand:.3e}; max |I2|/norms for linear η {max_lin:.3e}"),
    ))
}

/// Linear-function bound on Schwarzschild data.
fn c8() -> Outcome {
    let b = schwarzschild_sphere(1.0, 10.0, 4)?;
    let x = embed(&b.data.mesh, &b.data.metric, None, &EmbedConfig::default())?;
    let gap = linear_function_bound(&b.data, &x)?;
    Ok((gap >= -1e-3, format!("min_a Q(a·X) - 8π m_BY = {gap:.6}")))
}

/// Newton solve against the first-order perturbation oracle; kernel on flat data.
fn c9() -> Outcome {
    let b = schwarzschild_sphere(1.0, 10.0, 4)?;
    let mesh = &b.data.mesh;
    let p = mesh.positions().unwrap();
    let psi = ScalarField::new(mesh, harmonic2(p).iter().map(|v| v * 100.0).collect())?;
    let eps = 1e-3;
    let v = gradient(mesh, &b.data.metric, &psi)?.scaled(eps);
    let data = b.data.with_v(v)?;
    let rep = newton_solve(&data, &ScalarField::zeros(mesh), &SolverConfig::default())?;
    let lin = linear_response(&data)?;
    let err = rep.tau.values.iter().zip(&lin.values).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
        / lin.values.iter().map(|a| a * a).sum::<f64>().sqrt();
    let flat = round_sphere(1.0, 2.0, 4)?;
    let kernel = matches!(
        newton_solve(&flat.data, &ScalarField::zeros(&flat.data.mesh), &SolverConfig::default()),
        Err(Error::KernelObstruction { .. })
    );
    let ok = rep.newton_iterations <= 6 && rep.residual_norm < 1e-9 && err < 5.0 * eps && kernel;
    Ok((
        ok,
        format!(
            "{} Newton steps, residual {:.2e}, relative error vs linear oracle {err:.2e}, flat data KernelObstruction: {kernel}",
            rep.newton_iterations, rep.residual_norm
        ),
    ))
}

/// Embedding recovery and shape derivative.
fn c10() -> Outcome {
    let (mesh, metric, truth) = ellipsoid_metric(1.0, 1.0, 1.2, 4)?;
    let sphere: Vec<[f64; 3]> = truth.positions.iter().map(|p| [p[0], p[1], p[2] / 1.2]).map(|p| {
        let n = norm(&p);
        [p[0] / n, p[1] / n, p[2] / n]
    }).collect();
    let e = embed(&mesh, &metric, Some(&sphere), &EmbedConfig::default())?;
    let (aligned, _) = align_rigid(&e.positions, &truth.positions);
    let hausdorff = aligned
        .iter()
        .zip(&truth.positions)
        .map(|(a, b)| norm(&[a[0] - b[0], a[1] - b[1], a[2] - b[2]]))
        .fold(0.0, f64::max);

    let (mesh, metric, truth) = ellipsoid_metric(1.0, 1.0, 1.2, 3)?;
    let x = embed(&mesh, &metric, None, &tight())?;
    let mut r = rng(10);
    let w: Vec<[f64; 3]> = {
        let f: Vec<Vec<f64>> = (0..3).map(|_| smooth_field(&x.positions, 1.0, 3, &mut r)).collect();
        (0..mesh.num_vertices()).map(|i| [f[0][i], f[1][i], f[2][i]]).collect()
    };
    let q = with_max(pullback_form(&mesh, &x.positions, &w), 0.05);
    let eta = edge_form_tensor(&mesh, &metric, &q)?;
    let a = d_second_fundamental(&mesh, &x, &metric, &eta)?;
    let t = 1e-4;
    let ii = |s: f64| -> Result<Vec<[f64; 3]>> {
        let m = metric.perturbed(&mesh, &q, s)?;
        let y = embed(&mesh, &m, Some(&x.positions), &tight())?;
        let (yal, _) = align_rigid(&y.positions, &x.positions);
        Ok(second_fundamental_in_frame(&mesh, &yal, &metric)?.values)
    };
    let (plus, minus) = (ii(t)?, ii(-t)?);
    let mut num = 0.0;
    let mut den = 0.0;
    for ((p, m), d) in plus.iter().zip(&minus).zip(&a.values) {
        for k in 0..3 {
            let fd = (p[k] - m[k]) / (2.0 * t);
            num += (fd - d[k]).powi(2);
            den += fd * fd;
        }
    }
    let drel = (num / den).sqrt();
    let _ = truth;
    Ok((
        hausdorff < 1e-2 && drel < 1e-3,
        format!("ellipsoid recovery max distance {hausdorff:.2e}; d_second_fundamental vs central FD rel {drel:.2e}"),
    ))
}

/// Structural invariants.
fn c11() -> Outcome {
    let mut ok = true;
    let mut detail = String::new();

    let (ell_mesh, ell_metric, _) = ellipsoid_metric(1.0, 1.1, 1.3, 4)?;
    let (sph_mesh, sph_metric) = qlm_core::build_icosphere(4, 2.5)?;
    let p = sph_mesh.positions().unwrap().to_vec();
    let mut r = rng(11);
    let tau = ScalarField::new(&sph_mesh, with_max(smooth_field(&p, 2.5, 3, &mut r), 0.2))?;
    let hat = hat_metric(&sph_mesh, &sph_metric, &tau)?;
    let mut gb: f64 = 0.0;
    for (m, g) in [(&ell_mesh, &ell_metric), (&sph_mesh, &sph_metric), (&sph_mesh, &hat)] {
        gb = gb.max((angle_defects(m, g)?.iter().sum::<f64>() - 4.0 * PI).abs());
    }
    ok &= gb < 1e-9;
    detail += &format!("Gauss-Bonnet |Σ K dA - 4π| {gb:.1e}");

    let lap = laplacian(&ell_mesh, &ell_metric)?;
    let ep = ell_mesh.positions().unwrap().to_vec();
    let mut green: f64 = 0.0;
    for _ in 0..5 {
        let f = smooth_field(&ep, 1.0, 4, &mut r);
        let g = smooth_field(&ep, 1.0, 4, &mut r);
        let lhs = lap.inner(&f, &lap.apply_values(&g));
        let gf = gradient(&ell_mesh, &ell_metric, &ScalarField::new(&ell_mesh, f.clone())?)?;
        let gg = gradient(&ell_mesh, &ell_metric, &ScalarField::new(&ell_mesh, g.clone())?)?;
        let geo = qlm_core::mesh::face_geometries(&ell_mesh, &ell_metric)?;
        let rhs: f64 = geo
            .iter()
            .zip(gf.values.iter().zip(&gg.values))
            .map(|(fg, (a, b))| fg.area * (a[0] * b[0] + a[1] * b[1]))
            .sum();
        green = green.max((lhs + rhs).abs() / rhs.abs().max(1e-300));
    }
    ok &= green < 1e-10;
    detail += &format!("; Green identity rel {green:.1e}");

    let b = schwarzschild_sphere(1.0, 10.0, 4)?;
    let bp = b.data.mesh.positions().unwrap().to_vec();
    let psi = ScalarField::new(&b.data.mesh, smooth_field(&bp, 10.0, 3, &mut r))?;
    let data = b.data.with_v(gradient(&b.data.mesh, &b.data.metric, &psi)?.scaled(1e-2))?;
    let tau = with_max(smooth_field(&bp, 10.0, 3, &mut r), 0.3);
    let ev = el_residual_eval(&data, &tau, &EmbedConfig::default(), None)?;
    let total = wdot(&ev.hat_mass, &ev.field, &vec![1.0; tau.len()]);
    let scale = ev.norm * ev.hat_mass.iter().sum::<f64>().sqrt();
    let mz = total.abs() / scale;
    ok &= mz < 1e-10;
    detail += &format!("; residual mean {mz:.1e} (relative)");

    let mut divs = Vec::new();
    for level in [3u32, 4, 5] {
        let (m, g, _) = ellipsoid_metric(1.0, 1.0, 1.2, level)?;
        let x = embed(&m, &g, None, &EmbedConfig::default())?;
        let sd = shape_data(&m, &x, &g)?;
        let div = tensor_weak_divergence(&m, &x, &g, &sd.normals, &sd.newton_tensor())?;
        let geo = qlm_core::mesh::face_geometries(&m, &g)?;
        let mass = qlm_core::mesh::integrate(&m, &g, &ScalarField::constant(&m, 1.0))?;
        let _ = mass;
        let lm = laplacian(&m, &g)?.mass;
        let dn: f64 = div.iter().zip(&lm).map(|(d, w)| w * (d[0] * d[0] + d[1] * d[1] + d[2] * d[2])).sum::<f64>().sqrt();
        let iin: f64 = sd
            .second_fundamental
            .values
            .iter()
            .zip(&geo)
            .map(|(t, fg)| fg.area * (t[0] * t[0] + 2.0 * t[1] * t[1] + t[2] * t[2]))
            .sum::<f64>()
            .sqrt();
        divs.push(dn / iin);
    }
    let decays = divs.windows(2).all(|w| w[1] < w[0]);
    ok &= decays && divs[2] < 5e-2;
    detail += &format!(
        "; ‖div(H₀σ - II₀)‖/‖II₀‖ at levels 3,4,5: {:.2e}, {:.2e}, {:.2e}",
        divs[0], divs[1], divs[2]
    );
    Ok((ok, detail))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("Brown-York oracle", c1),
        ("flat rigidity", c2),
        ("umbilic identity", c3),
        ("eigenvalue criterion consistency", c4),
        ("second variation vs energy", c5),
        ("local-minimum bound", c6),
        ("surface Reilly inequality", c7),
        ("linear-function bound", c8),
        ("critical-point solver", c9),
        ("embedding solver", c10),
        ("structural invariants", c11),
    ];
    let filter: Vec<usize> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let mut failed = 0;
    for (k, (name, f)) in criteria.iter().enumerate() {
        let id = k + 1;
        if !filter.is_empty() && !filter.contains(&id) {
            continue;
        }
        let t = Instant::now();
        let (pass, detail) = match f() {
            Ok(r) => r,
            Err(e) => (false, format!("error: {e}")),
        };
        if !pass {
            failed += 1;
        }
        println!(
            "criterion {id:>2} {}: {name}: {detail} [{:.1}s]",
            if pass { "PASS" } else { "FAIL" },
            t.elapsed().as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
