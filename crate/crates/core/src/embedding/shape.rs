use serde::Serialize;

use super::{linearized_embed, Embedding};
use crate::dual::{add3, cross3, dot3, normalize3, scale3, sub3, Dual, Real, V3};
use crate::error::{Error, Result};
use crate::mesh::{face_geometries, laplacian_from, FaceGeometry, MetricField, SymTensorField, TriMesh};

/// Extrinsic data of an embedded surface.
#[derive(Clone, Debug, Serialize)]
pub struct ShapeData {
    /// Unit outward normals at vertices (from the local quadric fits).
    pub normals: Vec<[f64; 3]>,
    /// Vertex mean curvature: trace of the fitted second fundamental form.
    pub mean_curvature: Vec<f64>,
    /// `⟨-(LX)_i, n_i⟩ / M_i` from the cotangent mean-curvature normal (diagnostic only;
    /// not pointwise consistent on irregular meshes).
    pub cotan_mean_curvature: Vec<f64>,
    /// Fitted second fundamental form at each vertex as an ambient tangential 3x3 tensor.
    pub vertex_tensors: Vec<[[f64; 3]; 3]>,
    /// Per-face second fundamental form in the intrinsic face frames.
    pub second_fundamental: SymTensorField,
    /// `∮ H₀` with the lumped vertex areas.
    pub total_mean_curvature: f64,
}

impl ShapeData {
    /// Trace of the per-face second fundamental form.
    pub fn face_mean_curvature(&self) -> Vec<f64> {
        self.second_fundamental.values.iter().map(|t| t[0] + t[2]).collect()
    }

    /// `H₀ σ - II₀` per face (the adjugate of `II₀` in an orthonormal frame).
    pub fn newton_tensor(&self) -> Vec<[f64; 3]> {
        self.second_fundamental
            .values
            .iter()
            .map(|t| [t[2], -t[1], t[0]])
            .collect()
    }

    /// Smallest and largest eigenvalue of the per-face second fundamental form.
    pub fn principal_range(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for t in &self.second_fundamental.values {
            let m = 0.5 * (t[0] + t[2]);
            let r = (0.25 * (t[0] - t[2]).powi(2) + t[1] * t[1]).sqrt();
            lo = lo.min(m - r);
            hi = hi.max(m + r);
        }
        (lo, hi)
    }
}

struct VertexFit<T> {
    normal: V3<T>,
    tensor: [[T; 3]; 3],
}

/// Shape data of `embedding`, which must realize `metric`.
pub fn shape_data(mesh: &TriMesh, embedding: &Embedding, metric: &MetricField) -> Result<ShapeData> {
    embedding.check_mesh(mesh)?;
    let geo = face_geometries(mesh, metric)?;
    let x = &embedding.positions;
    let fits = fit_all(mesh, x)?;
    let faces = face_tensors(mesh, x, &fits, &geo);
    let lap = laplacian_from(mesh, &geo);
    let mut cotan = Vec::with_capacity(x.len());
    let lx: Vec<Vec<f64>> = (0..3)
        .map(|k| lap.stiffness.mul_vec(&x.iter().map(|p| p[k]).collect::<Vec<_>>()))
        .collect();
    for (i, fit) in fits.iter().enumerate() {
        let hn = -(lx[0][i] * fit.normal[0] + lx[1][i] * fit.normal[1] + lx[2][i] * fit.normal[2]);
        cotan.push(hn / lap.mass[i]);
    }
    let mean: Vec<f64> = fits
        .iter()
        .map(|f| f.tensor[0][0] + f.tensor[1][1] + f.tensor[2][2])
        .collect();
    let total = crate::linalg::dot(&mean, &lap.mass);
    Ok(ShapeData {
        normals: fits.iter().map(|f| f.normal).collect(),
        mean_curvature: mean,
        cotan_mean_curvature: cotan,
        vertex_tensors: fits.iter().map(|f| f.tensor).collect(),
        second_fundamental: SymTensorField::new(mesh, faces)?,
        total_mean_curvature: total,
    })
}

/// Per-face second fundamental form of `positions`, with components taken against the edge
/// coordinates of `frame_metric` (orthonormal when `positions` realize `frame_metric`).
pub fn second_fundamental_in_frame(
    mesh: &TriMesh,
    positions: &[[f64; 3]],
    frame_metric: &MetricField,
) -> Result<SymTensorField> {
    let geo = face_geometries(mesh, frame_metric)?;
    let fits = fit_all(mesh, positions)?;
    SymTensorField::new(mesh, face_tensors(mesh, positions, &fits, &geo))
}

/// Derivative of the per-face second fundamental form along the metric variation `eta`,
/// in the fixed frames of `metric`: the embedding is moved by the solution of the
/// linearized problem and the shape pipeline is differentiated exactly.
pub fn d_second_fundamental(
    mesh: &TriMesh,
    embedding: &Embedding,
    metric: &MetricField,
    eta: &SymTensorField,
) -> Result<SymTensorField> {
    let lin = linearized_embed(mesh, embedding, eta)?;
    let geo = face_geometries(mesh, metric)?;
    let x: Vec<V3<Dual>> = embedding
        .positions
        .iter()
        .zip(&lin.velocity)
        .map(|(p, y)| [0, 1, 2].map(|k| Dual::new(p[k], y[k])))
        .collect();
    let fits = fit_all(mesh, &x)?;
    let faces = face_tensors(mesh, &x, &fits, &geo);
    SymTensorField::new(mesh, faces.iter().map(|t| t.map(|c| c.d)).collect())
}

/// Weak divergence of a per-face symmetric tensor field, as tangent vectors at vertices:
/// `-(1/M_i) Σ_f A_f T_f ∇φ_i`, each face contribution rotated into the vertex tangent plane.
pub fn tensor_weak_divergence(
    mesh: &TriMesh,
    embedding: &Embedding,
    metric: &MetricField,
    normals: &[[f64; 3]],
    tensor: &[[f64; 3]],
) -> Result<Vec<[f64; 3]>> {
    embedding.check_mesh(mesh)?;
    let geo = face_geometries(mesh, metric)?;
    let mass = crate::mesh::lumped_mass(mesh, &geo);
    let x = &embedding.positions;
    let mut out = vec![[0.0; 3]; mesh.num_vertices()];
    for (f, tri) in mesh.faces().iter().enumerate() {
        let g = &geo[f];
        let e0 = sub3(x[tri[1]], x[tri[0]]);
        let e1 = sub3(x[tri[2]], x[tri[0]]);
        let nf = normalize3(cross3(e0, e1));
        let u = normalize3(e0);
        let v = cross3(nf, u);
        let t = tensor[f];
        for k in 0..3 {
            let gr = g.grads[k];
            let w = [t[0] * gr[0] + t[1] * gr[1], t[1] * gr[0] + t[2] * gr[1]];
            let amb = add3(scale3(w[0] * g.area, u), scale3(w[1] * g.area, v));
            let r = rotate_between(nf, normals[tri[k]], amb);
            let i = tri[k];
            for c in 0..3 {
                out[i][c] -= r[c] / mass[i];
            }
        }
    }
    Ok(out)
}

fn fit_all<T: Real>(mesh: &TriMesh, x: &[V3<T>]) -> Result<Vec<VertexFit<T>>> {
    (0..mesh.num_vertices()).map(|v| fit_vertex(mesh, x, v)).collect()
}

/// Least-squares osculating quadric through vertex `v` over its two-ring.
///
/// The implicit model `w = a u² + b uv + c v² + d u + e v + p w² + q uw + r vw` in a local
/// frame reproduces every quadric surface through the vertex, spheres and ellipsoids
/// included. Falls back to the explicit height model when the implicit one is degenerate.
fn fit_vertex<T: Real>(mesh: &TriMesh, x: &[V3<T>], v: usize) -> Result<VertexFit<T>> {
    let xv = x[v];
    let mut n = [T::cst(0.0); 3];
    for &f in mesh.vertex_faces(v) {
        let [a, b, c] = mesh.faces()[f];
        n = add3(n, cross3(sub3(x[b], x[a]), sub3(x[c], x[a])));
    }
    let n = normalize3(n);
    let d0 = sub3(x[mesh.neighbors(v)[0]], xv);
    let t1 = normalize3(sub3(d0, scale3(dot3(d0, n), n)));
    let t2 = cross3(n, t1);
    let ring = mesh.neighbors(v);
    let mut h = T::cst(0.0);
    for &j in ring {
        h += crate::dual::norm3(sub3(x[j], xv));
    }
    let h = h / T::cst(ring.len() as f64);

    let pts: Vec<V3<T>> = mesh
        .two_ring(v)
        .iter()
        .map(|&j| {
            let p = scale3(T::cst(1.0) / h, sub3(x[j], xv));
            [dot3(p, t1), dot3(p, t2), dot3(p, n)]
        })
        .collect();

    let coef = solve_fit(&pts, 8).or_else(|_| solve_fit(&pts, 5)).map_err(|_| Error::RankDeficientFit { vertex: v })?;
    let z = T::cst(0.0);
    let get = |k: usize| if k < coef.len() { coef[k] } else { z };
    let (a, b, c, d, e, p, q, r) = (get(0), get(1), get(2), get(3), get(4), get(5), get(6), get(7));
    let two = T::cst(2.0);
    let hess = [[-(two * a), -b, -q], [-b, -(two * c), -r], [-q, -r, -(two * p)]];
    let grad = [-d, -e, T::cst(1.0)];
    let gn = crate::dual::norm3(grad);
    let nu = scale3(T::cst(1.0) / gn, grad);
    // P H P / (|∇F| h) in the local frame.
    let mut proj = [[z; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let id = if i == j { T::cst(1.0) } else { z };
            proj[i][j] = id - nu[i] * nu[j];
        }
    }
    let ph = matmul3(&proj, &hess);
    let php = matmul3(&ph, &proj);
    let s = T::cst(1.0) / (gn * h);
    let frame = [t1, t2, n];
    let mut tensor = [[z; 3]; 3];
    for (i, fi) in frame.iter().enumerate() {
        for (j, fj) in frame.iter().enumerate() {
            let m = php[i][j] * s;
            for r in 0..3 {
                for c in 0..3 {
                    tensor[r][c] += m * fi[r] * fj[c];
                }
            }
        }
    }
    let mut normal = [z; 3];
    for (i, fi) in frame.iter().enumerate() {
        normal = add3(normal, scale3(nu[i], *fi));
    }
    Ok(VertexFit { normal, tensor })
}

fn matmul3<T: Real>(a: &[[T; 3]; 3], b: &[[T; 3]; 3]) -> [[T; 3]; 3] {
    let z = T::cst(0.0);
    let mut out = [[z; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let mut s = z;
            for k in 0..3 {
                s += a[i][k] * b[k][j];
            }
            out[i][j] = s;
        }
    }
    out
}

/// Normal-equation least squares with column equilibration; `m` = 8 (implicit) or 5 (height).
fn solve_fit<T: Real>(pts: &[V3<T>], m: usize) -> std::result::Result<Vec<T>, ()> {
    if pts.len() < m {
        return Err(());
    }
    let z = T::cst(0.0);
    let mut nrm = vec![vec![z; m]; m];
    let mut rhs = vec![z; m];
    for p in pts {
        let (u, v, w) = (p[0], p[1], p[2]);
        let row = [u * u, u * v, v * v, u, v, w * w, u * w, v * w];
        for i in 0..m {
            rhs[i] += row[i] * w;
            for j in 0..m {
                nrm[i][j] += row[i] * row[j];
            }
        }
    }
    let scale: Vec<T> = (0..m).map(|i| nrm[i][i].sqrt()).collect();
    if scale.iter().any(|s| !(s.val() > 0.0)) {
        return Err(());
    }
    for i in 0..m {
        rhs[i] = rhs[i] / scale[i];
        for j in 0..m {
            nrm[i][j] = nrm[i][j] / (scale[i] * scale[j]);
        }
    }
    // Cholesky
    let mut l = vec![vec![z; m]; m];
    for j in 0..m {
        let mut d = nrm[j][j];
        for k in 0..j {
            d = d - l[j][k] * l[j][k];
        }
        if !(d.val() > 1e-13) {
            return Err(());
        }
        let dj = d.sqrt();
        l[j][j] = dj;
        for i in j + 1..m {
            let mut s = nrm[i][j];
            for k in 0..j {
                s = s - l[i][k] * l[j][k];
            }
            l[i][j] = s / dj;
        }
    }
    let mut y = vec![z; m];
    for i in 0..m {
        let mut s = rhs[i];
        for k in 0..i {
            s = s - l[i][k] * y[k];
        }
        y[i] = s / l[i][i];
    }
    let mut sol = vec![z; m];
    for i in (0..m).rev() {
        let mut s = y[i];
        for k in i + 1..m {
            s = s - l[k][i] * sol[k];
        }
        sol[i] = s / l[i][i];
    }
    Ok(sol.iter().zip(&scale).map(|(c, s)| *c / *s).collect())
}

/// Minimal rotation taking unit `from` to unit `to`, applied to `v`.
fn rotate_between<T: Real>(from: V3<T>, to: V3<T>, v: V3<T>) -> V3<T> {
    let k = cross3(from, to);
    let c = dot3(from, to);
    let kv = cross3(k, v);
    let s = dot3(k, v) / (T::cst(1.0) + c);
    add3(add3(scale3(c, v), kv), scale3(s, k))
}

fn face_tensors<T: Real>(
    mesh: &TriMesh,
    x: &[V3<T>],
    fits: &[VertexFit<T>],
    geo: &[FaceGeometry],
) -> Vec<[T; 3]> {
    let third = T::cst(1.0 / 3.0);
    mesh.faces()
        .iter()
        .zip(geo)
        .map(|(tri, g)| {
            let e0 = sub3(x[tri[1]], x[tri[0]]);
            let e1 = sub3(x[tri[2]], x[tri[0]]);
            let nf = normalize3(cross3(e0, e1));
            let (c1, c2) = (g.corners[1], g.corners[2]);
            let det = c1[0] * c2[1] - c2[0] * c1[1];
            let inv = [[c2[1] / det, -c2[0] / det], [-c1[1] / det, c1[0] / det]];
            let d = [0, 1].map(|j| {
                add3(scale3(T::cst(inv[0][j]), e0), scale3(T::cst(inv[1][j]), e1))
            });
            let mut out = [T::cst(0.0); 3];
            for &i in tri {
                let fit = &fits[i];
                let r0 = rotate_between(nf, fit.normal, d[0]);
                let r1 = rotate_between(nf, fit.normal, d[1]);
                let p0 = crate::dual::matvec3(&fit.tensor, r0);
                let p1 = crate::dual::matvec3(&fit.tensor, r1);
                out[0] += third * dot3(r0, p0);
                out[1] += third * T::cst(0.5) * (dot3(r0, p1) + dot3(r1, p0));
                out[2] += third * dot3(r1, p1);
            }
            out
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn implicit_fit_is_exact_on_spheres() {
        // Points on a sphere of radius 2 tangent to the uv-plane at the origin, below it.
        let r = 2.0;
        let mut pts = Vec::new();
        for i in 0..14 {
            let th = 0.4 * (1 + i % 3) as f64 / 3.0;
            let ph = i as f64 * 0.9;
            let (u, v) = (r * th.sin() * ph.cos(), r * th.sin() * ph.sin());
            let w = -r * (1.0 - th.cos());
            pts.push([u, v, w]);
        }
        let c = solve_fit(&pts, 8).unwrap();
        for k in [0, 2, 5] {
            assert!((c[k] + 0.25).abs() < 1e-9, "coef {k} = {}", c[k]);
        }
        for k in [1, 3, 4, 6, 7] {
            assert!(c[k].abs() < 1e-9);
        }
    }

    #[test]
    fn rotation_between_normals() {
        let a = normalize3([0.1, 0.2, 1.0]);
        let b = normalize3([-0.3, 0.1, 1.0]);
        let r = rotate_between(a, b, a);
        for k in 0..3 {
            assert!((r[k] - b[k]).abs() < 1e-14);
        }
        let t = cross3(a, [1.0, 0.0, 0.0]);
        let rt = rotate_between(a, b, t);
        assert!(dot3(rt, b).abs() < 1e-14);
        assert!((crate::dual::norm3(rt) - crate::dual::norm3(t)).abs() < 1e-14);
    }
}
