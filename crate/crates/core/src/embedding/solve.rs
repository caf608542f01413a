use log::debug;
use serde::Serialize;

use super::{canonical_gauge, Embedding};
use crate::error::{Error, Result};
use crate::linalg::{Cholesky, CsrMatrix, SparseLu};
use crate::mesh::{face_geometries, lumped_mass, MetricField, SymTensorField, TriMesh};

#[derive(Clone, Debug, Serialize, serde::Deserialize)]
#[serde(default)]
pub struct EmbedConfig {
    /// Target RMS of `(|x_a-x_b|² - ℓ²)/(2ℓ²)`.
    pub tol: f64,
    pub max_iterations: usize,
    /// Extra Newton steps after reaching `tol`, kept only while they reduce the residual.
    pub polish_steps: usize,
    /// Minimum vertex Gaussian curvature (angle defect per area) accepted as positive.
    pub curvature_margin: f64,
    /// Fall back to a metric homotopy from the seed when direct Newton fails.
    pub homotopy: bool,
}

impl Default for EmbedConfig {
    fn default() -> Self {
        EmbedConfig {
            tol: 1e-8,
            max_iterations: 60,
            polish_steps: 3,
            curvature_margin: 1e-8,
            homotopy: true,
        }
    }
}

/// Realizes `metric` in flat space.
///
/// `seed` (or the mesh's own positions) provides the initial guess; it is rescaled to the
/// target area first. Requires strictly positive vertex curvature.
pub fn embed(
    mesh: &TriMesh,
    metric: &MetricField,
    seed: Option<&[[f64; 3]]>,
    cfg: &EmbedConfig,
) -> Result<Embedding> {
    metric.check_mesh(mesh)?;
    check_curvature(mesh, metric, cfg.curvature_margin)
        .map_err(|(vertex, curvature)| Error::NotEmbeddableHere { vertex, curvature })?;
    let seed = match seed.or(mesh.positions()) {
        Some(s) => s.to_vec(),
        None => {
            return Err(Error::InvalidParameter(
                "embedding needs seed positions (mesh has no vertex coordinates)".into(),
            ))
        }
    };
    mesh.check_len("seed positions", seed.len(), crate::mesh::Per::Vertex)?;
    let target = metric.squared();
    let seed_metric = MetricField::from_positions(mesh, &seed)?;
    let s = (metric.total_area(mesh)? / seed_metric.total_area(mesh)?).sqrt();
    let x0: Vec<[f64; 3]> = seed.iter().map(|p| [p[0] * s, p[1] * s, p[2] * s]).collect();

    let mut emb = match newton(mesh, &target, x0.clone(), cfg) {
        Ok(e) => e,
        Err(err) if cfg.homotopy => {
            debug!("direct embedding failed ({err}); trying homotopy from the seed");
            let start_sq: Vec<f64> = seed_metric.squared().iter().map(|l| l * s * s).collect();
            let mut e = homotopy(mesh, &start_sq, &target, x0, cfg)?;
            e.used_homotopy = true;
            e
        }
        Err(err) => return Err(err),
    };
    // Edge lengths alone admit non-convex realizations: a vertex whose neighbors are
    // (nearly) coplanar can sit on either side of them. Reflect such vertices back out
    // and re-solve.
    for _ in 0..8 {
        let popped = reflect_popped_vertices(mesh, &mut emb.positions);
        if popped == 0 {
            break;
        }
        debug!("reflecting {popped} inverted vertices and re-solving");
        let e = newton(mesh, &target, emb.positions.clone(), cfg)?;
        emb.iterations += e.iterations;
        emb.residual_history.extend(e.residual_history.iter().copied());
        emb.positions = e.positions;
        emb.edge_residual = e.edge_residual;
        emb.repaired_vertices += popped;
    }
    finalize(mesh, metric, &mut emb)?;
    Ok(emb)
}

/// Reflects every vertex lying on the inner side of its link (with respect to the
/// orientation given by the enclosed volume) through the link's mean plane.
fn reflect_popped_vertices(mesh: &TriMesh, x: &mut [[f64; 3]]) -> usize {
    let probe = Embedding::new(mesh, x.to_vec());
    let orient = probe.volume(mesh).signum();
    let mut normals = vec![[0.0; 3]; x.len()];
    for tri in mesh.faces() {
        for k in 0..3 {
            let (v, a, b) = (tri[k], x[tri[(k + 1) % 3]], x[tri[(k + 2) % 3]]);
            let c = [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]];
            for j in 0..3 {
                normals[v][j] += orient * c[j];
            }
        }
    }
    let mut count = 0;
    for v in 0..x.len() {
        let ring = mesh.neighbors(v);
        let mut c = [0.0; 3];
        for &u in ring {
            for j in 0..3 {
                c[j] += x[u][j] / ring.len() as f64;
            }
        }
        let n = normals[v];
        let nn = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
        if nn == 0.0 {
            continue;
        }
        let h = ((x[v][0] - c[0]) * n[0] + (x[v][1] - c[1]) * n[1] + (x[v][2] - c[2]) * n[2]) / nn;
        if h < 0.0 {
            for j in 0..3 {
                x[v][j] -= 2.0 * h * n[j] / nn;
            }
            count += 1;
        }
    }
    count
}

fn finalize(mesh: &TriMesh, metric: &MetricField, emb: &mut Embedding) -> Result<()> {
    if emb.volume(mesh) < 0.0 {
        for p in emb.positions.iter_mut() {
            p[0] = -p[0];
        }
    }
    let geo = face_geometries(mesh, metric)?;
    let w = lumped_mass(mesh, &geo);
    canonical_gauge(&mut emb.positions, &w);
    Ok(())
}

/// Fails with [`Error::NotEmbeddableHere`] unless every vertex curvature exceeds the
/// default margin.
pub fn check_metric_curvature(mesh: &TriMesh, metric: &MetricField) -> Result<()> {
    check_curvature(mesh, metric, EmbedConfig::default().curvature_margin)
        .map_err(|(vertex, curvature)| Error::NotEmbeddableHere { vertex, curvature })
}

/// Returns the vertex of smallest curvature when it is not above `margin`.
pub(crate) fn check_curvature(
    mesh: &TriMesh,
    metric: &MetricField,
    margin: f64,
) -> std::result::Result<(), (usize, f64)> {
    let k = match crate::mesh::gaussian_curvature(mesh, metric) {
        Ok(k) => k.values,
        Err(_) => return Err((0, f64::NAN)),
    };
    let (v, kmin) = k
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |(bv, bk), (i, &x)| if x < bk { (i, x) } else { (bv, bk) });
    if kmin > margin {
        Ok(())
    } else {
        Err((v, kmin))
    }
}

fn homotopy(
    mesh: &TriMesh,
    start_sq: &[f64],
    target_sq: &[f64],
    x0: Vec<[f64; 3]>,
    cfg: &EmbedConfig,
) -> Result<Embedding> {
    let mut x = x0;
    let mut t: f64 = 0.0;
    let mut dt: f64 = 0.25;
    let mut iterations = 0;
    let mut history = Vec::new();
    while t < 1.0 {
        let t1 = (t + dt).min(1.0);
        let sq: Vec<f64> = start_sq
            .iter()
            .zip(target_sq)
            .map(|(a, b)| (1.0 - t1) * a + t1 * b)
            .collect();
        let metric = MetricField::from_squared(mesh, &sq)?;
        if let Err((vertex, _)) = check_curvature(mesh, &metric, cfg.curvature_margin) {
            return Err(Error::CurvatureLostAlongPath { t: t1, vertex });
        }
        match newton(mesh, &sq, x.clone(), cfg) {
            Ok(e) => {
                iterations += e.iterations;
                history.extend(e.residual_history.iter().copied());
                x = e.positions;
                t = t1;
                dt = (dt * 2.0).min(0.5);
            }
            Err(err) => {
                dt *= 0.5;
                if dt < 1.0 / 4096.0 {
                    return Err(err);
                }
            }
        }
    }
    let mut e = Embedding {
        mesh_id: mesh.id(),
        positions: x,
        edge_residual: history.last().copied().unwrap_or(0.0),
        iterations,
        residual_history: Vec::new(),
        used_homotopy: true,
        repaired_vertices: 0,
    };
    e.residual_history = history;
    Ok(e)
}

/// Six pinned coordinates removing rigid motions: all of `a`, two of `b`, one of `c`.
fn pinned_coordinates(mesh: &TriMesh, x: &[[f64; 3]]) -> Vec<usize> {
    let a = 0;
    let tri = mesh.faces()[mesh.vertex_faces(a)[0]];
    let k = tri.iter().position(|&v| v == a).unwrap();
    let (b, c) = (tri[(k + 1) % 3], tri[(k + 2) % 3]);
    let ab = [x[b][0] - x[a][0], x[b][1] - x[a][1], x[b][2] - x[a][2]];
    let ac = [x[c][0] - x[a][0], x[c][1] - x[a][1], x[c][2] - x[a][2]];
    let along = argmax_abs(ab);
    let n = [
        ab[1] * ac[2] - ab[2] * ac[1],
        ab[2] * ac[0] - ab[0] * ac[2],
        ab[0] * ac[1] - ab[1] * ac[0],
    ];
    let normal = argmax_abs(n);
    let mut pins = vec![3 * a, 3 * a + 1, 3 * a + 2];
    for k in 0..3 {
        if k != along {
            pins.push(3 * b + k);
        }
    }
    pins.push(3 * c + normal);
    pins.sort_unstable();
    pins
}

fn argmax_abs(v: [f64; 3]) -> usize {
    (0..3).max_by(|&i, &j| v[i].abs().total_cmp(&v[j].abs())).unwrap()
}

/// Column index of every free coordinate.
fn free_map(n: usize, pins: &[usize]) -> Vec<Option<usize>> {
    let mut map = vec![None; 3 * n];
    let mut next = 0;
    for (i, m) in map.iter_mut().enumerate() {
        if pins.binary_search(&i).is_err() {
            *m = Some(next);
            next += 1;
        }
    }
    map
}

/// Rows `2(x_a - x_b)·(y_a - y_b) · w_e` over free coordinates.
fn rigidity_matrix(mesh: &TriMesh, x: &[[f64; 3]], map: &[Option<usize>], w: &[f64]) -> CsrMatrix {
    let nfree = map.iter().filter(|m| m.is_some()).count();
    let mut t = Vec::with_capacity(mesh.num_edges() * 6);
    for (e, &[a, b]) in mesh.edges().iter().enumerate() {
        for k in 0..3 {
            let d = 2.0 * (x[a][k] - x[b][k]) * w[e];
            if let Some(c) = map[3 * a + k] {
                t.push((e, c, d));
            }
            if let Some(c) = map[3 * b + k] {
                t.push((e, c, -d));
            }
        }
    }
    CsrMatrix::from_triplets(mesh.num_edges(), nfree, &t)
}

fn scaled_residual(mesh: &TriMesh, x: &[[f64; 3]], target_sq: &[f64]) -> Vec<f64> {
    mesh.edges()
        .iter()
        .zip(target_sq)
        .map(|(&[a, b], l2)| {
            let d2 = (x[a][0] - x[b][0]).powi(2) + (x[a][1] - x[b][1]).powi(2) + (x[a][2] - x[b][2]).powi(2);
            (d2 - l2) / l2
        })
        .collect()
}

fn rms_half(r: &[f64]) -> f64 {
    0.5 * (r.iter().map(|v| v * v).sum::<f64>() / r.len() as f64).sqrt()
}

fn apply_step(x: &[[f64; 3]], step: &[f64], map: &[Option<usize>], alpha: f64) -> Vec<[f64; 3]> {
    let mut out = x.to_vec();
    for (v, p) in out.iter_mut().enumerate() {
        for k in 0..3 {
            if let Some(c) = map[3 * v + k] {
                p[k] += alpha * step[c];
            }
        }
    }
    out
}

/// Damped Newton on the square edge-length system, with a Levenberg-Marquardt fallback when
/// the line search stalls or the Jacobian is singular.
fn newton(mesh: &TriMesh, target_sq: &[f64], x0: Vec<[f64; 3]>, cfg: &EmbedConfig) -> Result<Embedding> {
    let n = mesh.num_vertices();
    let pins = pinned_coordinates(mesh, &x0);
    let map = free_map(n, &pins);
    let w: Vec<f64> = target_sq.iter().map(|l2| 1.0 / l2).collect();
    let mut x = x0;
    let mut r = scaled_residual(mesh, &x, target_sq);
    let mut f = r.iter().map(|v| v * v).sum::<f64>();
    let mut rms = rms_half(&r);
    let mut history = vec![rms];
    let mut iterations = 0;
    let mut polish = 0;
    let mut mu = 0.0;

    while iterations < cfg.max_iterations {
        if !rms.is_finite() {
            break;
        }
        if rms <= cfg.tol {
            if polish >= cfg.polish_steps || rms < 1e-15 {
                break;
            }
            polish += 1;
        }
        iterations += 1;
        let j = rigidity_matrix(mesh, &x, &map, &w);
        let rhs: Vec<f64> = r.iter().map(|v| -v).collect();
        let mut accepted = false;

        if let Ok(lu) = SparseLu::new(&j) {
            let step = lu.solve(&rhs);
            if step.iter().all(|s| s.is_finite()) {
                let mut alpha = 1.0;
                while alpha >= 1.0 / 1024.0 {
                    let xt = apply_step(&x, &step, &map, alpha);
                    let rt = scaled_residual(mesh, &xt, target_sq);
                    let ft = rt.iter().map(|v| v * v).sum::<f64>();
                    if ft <= f * (1.0 - 2e-4 * alpha) || (rms <= cfg.tol && ft < f) {
                        x = xt;
                        r = rt;
                        f = ft;
                        accepted = true;
                        break;
                    }
                    alpha *= 0.5;
                }
            }
        }

        if !accepted && rms > cfg.tol {
            // Levenberg-Marquardt on the normal equations.
            let jt = j.transpose();
            let jtj = jt.matmul(&j);
            let g: Vec<f64> = jt.mul_vec(&rhs);
            let dmax = (0..jtj.nrows()).map(|i| jtj.get(i, i)).fold(0.0, f64::max);
            if mu == 0.0 {
                mu = 1e-6 * dmax;
            }
            for _ in 0..20 {
                let reg = jtj.add(1.0, &CsrMatrix::from_diagonal(&vec![mu; jtj.nrows()]), 1.0);
                if let Ok(ch) = Cholesky::new(&reg) {
                    let step = ch.solve(&g);
                    let xt = apply_step(&x, &step, &map, 1.0);
                    let rt = scaled_residual(mesh, &xt, target_sq);
                    let ft = rt.iter().map(|v| v * v).sum::<f64>();
                    if ft < f {
                        x = xt;
                        r = rt;
                        f = ft;
                        accepted = true;
                        mu = (mu * 0.3).max(1e-12 * dmax);
                        break;
                    }
                }
                mu *= 10.0;
            }
        }

        if !accepted {
            break;
        }
        rms = rms_half(&r);
        history.push(rms);
    }

    if rms <= cfg.tol {
        Ok(Embedding {
            mesh_id: mesh.id(),
            positions: x,
            edge_residual: rms,
            iterations,
            residual_history: history,
            used_homotopy: false,
            repaired_vertices: 0,
        })
    } else {
        let best = history.iter().cloned().fold(f64::INFINITY, f64::min);
        Err(Error::EmbeddingNonConvergence {
            iterations,
            residual: best,
        })
    }
}

/// Result of the linearized embedding problem.
#[derive(Clone, Debug, Serialize)]
pub struct Linearization {
    /// Velocity field `Y`, gauged by `Y(v0) = 0` and `Σ (x_i - x_0) × Y_i = 0`.
    pub velocity: Vec<[f64; 3]>,
    /// Relative residual of `2 dX·dY = ρ` on the edges.
    pub residual: f64,
    /// Set when the system is numerically singular (an infinitesimal flex).
    pub flat_direction: bool,
}

/// Solves `2 dX·dY = ρ` for a per-face symmetric tensor `ρ`.
pub fn linearized_embed(mesh: &TriMesh, embedding: &Embedding, rho: &SymTensorField) -> Result<Linearization> {
    embedding.check_mesh(mesh)?;
    rho.check_mesh(mesh)?;
    let x = &embedding.positions;
    let mut sum = vec![0.0; mesh.num_edges()];
    for (f, tri) in mesh.faces().iter().enumerate() {
        let p0 = x[tri[0]];
        let e1 = crate::dual::normalize3(crate::dual::sub3(x[tri[1]], p0));
        let nf = crate::dual::normalize3(crate::dual::cross3(
            crate::dual::sub3(x[tri[1]], p0),
            crate::dual::sub3(x[tri[2]], p0),
        ));
        let e2 = crate::dual::cross3(nf, e1);
        let t = rho.values[f];
        for k in 0..3 {
            let d = crate::dual::sub3(x[tri[(k + 1) % 3]], x[tri[k]]);
            let (u, v) = (crate::dual::dot3(d, e1), crate::dual::dot3(d, e2));
            sum[mesh.face_edges()[f][k]] += 0.5 * (t[0] * u * u + 2.0 * t[1] * u * v + t[2] * v * v);
        }
    }
    linearized_embed_edges(mesh, x, &sum)
}

/// Solves `2 (x_a - x_b)·(y_a - y_b) = ρ_e` on every edge.
pub(crate) fn linearized_embed_edges(mesh: &TriMesh, x: &[[f64; 3]], rho: &[f64]) -> Result<Linearization> {
    let n = mesh.num_vertices();
    let pins = pinned_coordinates(mesh, x);
    let map = free_map(n, &pins);
    let ones = vec![1.0; mesh.num_edges()];
    let j = rigidity_matrix(mesh, x, &map, &ones);
    let lu = SparseLu::new(&j)?;
    let sol = lu.solve(rho);
    let mut y = apply_step(&vec![[0.0; 3]; n], &sol, &map, 1.0);

    let check = j.mul_vec(&sol);
    let rnorm = rho.iter().map(|v| v * v).sum::<f64>().sqrt();
    let res = check
        .iter()
        .zip(rho)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt()
        / rnorm.max(f64::MIN_POSITIVE);
    let ysize = y.iter().map(|v| v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sum::<f64>().sqrt();
    let xsize = x.iter().map(|v| v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sum::<f64>().sqrt();
    let amplification = if rnorm > 0.0 { ysize * xsize / rnorm } else { 0.0 };
    let flat_direction = !sol.iter().all(|s| s.is_finite()) || res > 1e-6 || amplification > 1e10;

    fix_linear_gauge(x, &mut y);
    Ok(Linearization {
        velocity: y,
        residual: if rnorm > 0.0 { res } else { 0.0 },
        flat_direction,
    })
}

/// Removes the infinitesimal rigid motion so that `y_0 = 0` and `Σ (x_i - x_0) × y_i = 0`.
pub(crate) fn fix_linear_gauge(x: &[[f64; 3]], y: &mut [[f64; 3]]) {
    use nalgebra::{Matrix3, Vector3};
    let x0 = Vector3::from(x[0]);
    let y0 = Vector3::from(y[0]);
    let mut inertia = Matrix3::zeros();
    let mut moment = Vector3::zeros();
    for (xi, yi) in x.iter().zip(y.iter()) {
        let r = Vector3::from(*xi) - x0;
        inertia += Matrix3::identity() * r.norm_squared() - r * r.transpose();
        moment += r.cross(&(Vector3::from(*yi) - y0));
    }
    let omega = inertia.try_inverse().map(|m| m * moment).unwrap_or_else(Vector3::zeros);
    for (xi, yi) in x.iter().zip(y.iter_mut()) {
        let r = Vector3::from(*xi) - x0;
        let v = Vector3::from(*yi) - y0 - omega.cross(&r);
        *yi = [v[0], v[1], v[2]];
    }
}

/// Outcome of embedding along a path of metrics.
#[derive(Clone, Debug, Serialize)]
pub struct ContinuationEmbedding {
    pub embedding: Embedding,
    pub steps: usize,
    /// Set when a Picard iteration failed to contract and Newton took over.
    pub picard_fallback: bool,
    /// Smallest vertex curvature seen along the path.
    pub min_curvature: f64,
}

/// Follows `σ(t) = (1-t) σ_start + t σ_target` (linear in squared lengths) in `steps` equal
/// steps, correcting each step by the Picard iteration `2dX·dY = Δσ - (dY)²` and polishing
/// with Newton.
pub fn continuation_embed(
    mesh: &TriMesh,
    start: &Embedding,
    start_metric: &MetricField,
    target: &MetricField,
    steps: usize,
    cfg: &EmbedConfig,
) -> Result<ContinuationEmbedding> {
    start.check_mesh(mesh)?;
    start_metric.check_mesh(mesh)?;
    target.check_mesh(mesh)?;
    if steps == 0 {
        return Err(Error::InvalidParameter("continuation needs at least one step".into()));
    }
    let s0 = start_metric.squared();
    let s1 = target.squared();
    let mut x = start.positions.clone();
    let mut fallback = false;
    let mut min_curvature = f64::INFINITY;
    let mut iterations = start.iterations;
    let mut history = Vec::new();
    for k in 1..=steps {
        let t = k as f64 / steps as f64;
        let sq: Vec<f64> = s0.iter().zip(&s1).map(|(a, b)| (1.0 - t) * a + t * b).collect();
        let metric = MetricField::from_squared(mesh, &sq)?;
        let kk = crate::mesh::gaussian_curvature(mesh, &metric)?;
        let (vmin, kmin) = kk
            .values
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |(bv, bk), (i, &x)| if x < bk { (i, x) } else { (bv, bk) });
        min_curvature = min_curvature.min(kmin);
        if kmin <= cfg.curvature_margin {
            return Err(Error::CurvatureLostAlongPath { t, vertex: vmin });
        }

        let cur: Vec<f64> = mesh
            .edges()
            .iter()
            .map(|&[a, b]| {
                (x[a][0] - x[b][0]).powi(2) + (x[a][1] - x[b][1]).powi(2) + (x[a][2] - x[b][2]).powi(2)
            })
            .collect();
        let base: Vec<f64> = sq.iter().zip(&cur).map(|(a, b)| a - b).collect();
        let mut y = vec![[0.0; 3]; x.len()];
        let mut last_change = f64::INFINITY;
        let mut contracted = true;
        for _ in 0..50 {
            let rho: Vec<f64> = mesh
                .edges()
                .iter()
                .zip(&base)
                .map(|(&[a, b], r)| {
                    let d = [y[a][0] - y[b][0], y[a][1] - y[b][1], y[a][2] - y[b][2]];
                    r - (d[0] * d[0] + d[1] * d[1] + d[2] * d[2])
                })
                .collect();
            let next = linearized_embed_edges(mesh, &x, &rho)?.velocity;
            let change = next
                .iter()
                .zip(&y)
                .map(|(p, q)| (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2))
                .sum::<f64>()
                .sqrt();
            let size = next
                .iter()
                .map(|p| p[0] * p[0] + p[1] * p[1] + p[2] * p[2])
                .sum::<f64>()
                .sqrt();
            y = next;
            if change > 0.9 * last_change {
                contracted = false;
                break;
            }
            last_change = change;
            if change <= 1e-13 * size.max(f64::MIN_POSITIVE) || change == 0.0 {
                break;
            }
        }
        let guess: Vec<[f64; 3]> = if contracted {
            x.iter()
                .zip(&y)
                .map(|(p, q)| [p[0] + q[0], p[1] + q[1], p[2] + q[2]])
                .collect()
        } else {
            fallback = true;
            x.clone()
        };
        let e = newton(mesh, &sq, guess, cfg)?;
        iterations += e.iterations;
        history.extend(e.residual_history.iter().copied());
        x = e.positions;
    }
    let mut emb = Embedding {
        mesh_id: mesh.id(),
        positions: x,
        edge_residual: history.last().copied().unwrap_or(start.edge_residual),
        iterations,
        residual_history: history,
        used_homotopy: false,
        repaired_vertices: 0,
    };
    finalize(mesh, target, &mut emb)?;
    Ok(ContinuationEmbedding {
        embedding: emb,
        steps,
        picard_fallback: fallback,
        min_curvature,
    })
}
