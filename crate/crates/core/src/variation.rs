//! First and second variation of the quasi-local energy at time-symmetric-style data,
//! the stability coefficient, and the eigenvalue and linear-function criteria.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Matrix4, Vector3, Vector4};
use serde::Serialize;

use crate::embedding::{shape_data, EmbedConfig, Embedding, ShapeData};
use crate::energy::{embed_surface, hat_metric_with_margin, time_terms, BoundaryData, Surface};
use crate::error::Result;
use crate::linalg::{
    dot, eigen::leading_multiplicity_abs, smallest_eigenpairs, wdot, CsrMatrix, EigenOptions, MassOp,
};
use crate::mesh::{
    build_icosphere, face_geometries, gradient_values, laplacian_from,
    lumped_mass, tensor_stiffness, weak_pairing, weighted_stiffness, FaceGeometry,
    GalerkinOperator, MetricField, ScalarField, TriMesh,
};

/// The quadratic forms of the second variation on one embedded metric.
///
/// Fourth-order terms are assembled in weak form as `L M⁻¹ diag(w) L`, so `∮(Δη)² w` is
/// the lumped integral of the squared discrete Laplacian and no Hessian is formed.
#[derive(Clone, Debug)]
pub struct QuadraticForms {
    mesh: TriMesh,
    pub geo: Vec<FaceGeometry>,
    pub laplacian: GalerkinOperator,
    pub surface: Surface,
    /// `|H|` at vertices.
    pub norm_h: Vec<f64>,
    /// `|H|` averaged over face corners.
    pub face_norm_h: Vec<f64>,
    /// Matrix of the bilinear form `B`.
    pub b: CsrMatrix,
    /// Matrix of `∮ Δη Δφ`.
    pub d: CsrMatrix,
}

impl QuadraticForms {
    /// Embeds `σ` of the data and assembles the forms.
    pub fn new(data: &BoundaryData) -> Result<Self> {
        let surface = embed_surface(&data.mesh, &data.metric, None, &EmbedConfig::default())?;
        QuadraticForms::from_surface(&data.mesh, &data.metric, surface, &data.norm_h.values)
    }

    pub fn from_surface(
        mesh: &TriMesh,
        metric: &MetricField,
        surface: Surface,
        norm_h: &[f64],
    ) -> Result<Self> {
        surface.embedding.check_mesh(mesh)?;
        mesh.check_len("normH", norm_h.len(), crate::mesh::Per::Vertex)?;
        let geo = face_geometries(mesh, metric)?;
        let laplacian = laplacian_from(mesh, &geo);
        let l = &laplacian.stiffness;
        let face_norm_h: Vec<f64> = mesh
            .faces()
            .iter()
            .map(|t| (norm_h[t[0]] + norm_h[t[1]] + norm_h[t[2]]) / 3.0)
            .collect();
        let inv_m: Vec<f64> = laplacian.mass.iter().map(|m| 1.0 / m).collect();
        let d = l.matmul(&l.scale_rows(&inv_m));
        let w: Vec<f64> = inv_m.iter().zip(norm_h).map(|(a, h)| a / h).collect();
        let fourth = l.matmul(&l.scale_rows(&w));
        let b = fourth
            .add(1.0, &tensor_stiffness(mesh, &geo, &surface.shape.newton_tensor()), 1.0)
            .add(1.0, &weighted_stiffness(mesh, &geo, Some(&face_norm_h)), 1.0);
        Ok(QuadraticForms {
            mesh: mesh.clone(),
            geo,
            laplacian,
            surface,
            norm_h: norm_h.to_vec(),
            face_norm_h,
            b,
            d,
        })
    }

    pub fn mesh(&self) -> &TriMesh {
        &self.mesh
    }

    pub fn shape(&self) -> &ShapeData {
        &self.surface.shape
    }

    pub fn mass(&self) -> &[f64] {
        &self.laplacian.mass
    }

    pub fn lap_values(&self, eta: &[f64]) -> Vec<f64> {
        self.laplacian.apply_values(eta)
    }

    /// `B(η, φ)` through the assembled matrix.
    pub fn bilinear(&self, eta: &[f64], phi: &[f64]) -> f64 {
        self.b.bilinear(eta, phi)
    }

    /// `∮ (Δη)²`.
    pub fn lap_sq(&self, eta: &[f64]) -> f64 {
        let d = self.lap_values(eta);
        wdot(self.mass(), &d, &d)
    }

    /// `∮ |∇η|²`.
    pub fn grad_sq(&self, eta: &[f64]) -> f64 {
        -self.laplacian.stiffness.bilinear(eta, eta)
    }

    fn face_quadratics(&self, eta: &[f64]) -> (Vec<f64>, Vec<[f64; 2]>) {
        (self.lap_values(eta), gradient_values(&self.mesh, &self.geo, eta))
    }

    /// `∮ [(Δη)²/|H| + (H₀ - |H|)|∇η|² - II₀(∇η,∇η)]` by direct quadrature.
    pub fn second_variation(&self, eta: &[f64]) -> f64 {
        let (d, g) = self.face_quadratics(eta);
        let m = self.mass();
        let mut s = 0.0;
        for i in 0..d.len() {
            s += m[i] * d[i] * d[i] / self.norm_h[i];
        }
        let ii = &self.shape().second_fundamental.values;
        for (f, gf) in g.iter().enumerate() {
            let t = ii[f];
            let h0 = t[0] + t[2];
            let sq = gf[0] * gf[0] + gf[1] * gf[1];
            let q = t[0] * gf[0] * gf[0] + 2.0 * t[1] * gf[0] * gf[1] + t[2] * gf[1] * gf[1];
            s += self.geo[f].area * ((h0 - self.face_norm_h[f]) * sq - q);
        }
        s
    }

    /// `I₁ = ∮ [(Δη)²/|H| - (Δη)²/H₀ + (H₀ - |H|)|∇η|²]`.
    pub fn i1(&self, eta: &[f64]) -> f64 {
        let (d, g) = self.face_quadratics(eta);
        let m = self.mass();
        let h0 = &self.shape().mean_curvature;
        let mut s = 0.0;
        for i in 0..d.len() {
            s += m[i] * d[i] * d[i] * (1.0 / self.norm_h[i] - 1.0 / h0[i]);
        }
        let ii = &self.shape().second_fundamental.values;
        for (f, gf) in g.iter().enumerate() {
            let t = ii[f];
            s += self.geo[f].area * (t[0] + t[2] - self.face_norm_h[f]) * (gf[0] * gf[0] + gf[1] * gf[1]);
        }
        s
    }

    /// `I₂ = ∮ [(Δη)²/H₀ - II₀(∇η,∇η)]`.
    pub fn i2(&self, eta: &[f64]) -> f64 {
        i2_quadrature(&self.mesh, &self.geo, self.mass(), self.shape(), eta, &self.lap_values(eta))
    }

    /// `(1/8π) ∮ (H₀ - |H|)`.
    pub fn reference_mass(&self) -> f64 {
        (self.shape().total_mean_curvature - dot(self.mass(), &self.norm_h)) / (8.0 * PI)
    }

    /// Largest `|H|` and smallest eigenvalue of `II₀` over faces.
    pub fn criterion_inputs(&self) -> (f64, f64) {
        let hmax = self.norm_h.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        (hmax, self.shape().principal_range().0)
    }

    /// `λ₁ - H^max (H^max - II₀^min)`.
    pub fn eigenvalue_criterion_margin(&self, lambda1: f64) -> f64 {
        let (hmax, iimin) = self.criterion_inputs();
        lambda1 - hmax * (hmax - iimin)
    }

    /// Matrix `G_kl = B(X^k, X^l)` of the form on linear functions.
    pub fn linear_gram(&self) -> Matrix3<f64> {
        let x = self.coordinates();
        Matrix3::from_fn(|k, l| self.b.bilinear(&x[k], &x[l]))
    }

    fn coordinates(&self) -> [Vec<f64>; 3] {
        let p = &self.surface.embedding.positions;
        [0, 1, 2].map(|k| p.iter().map(|q| q[k]).collect())
    }

    /// Minimum over unit `a` of `Q(a·X) - 8π m` (with `m` the reference mass) and the minimizer.
    pub fn linear_function_gap(&self) -> Result<(f64, [f64; 3])> {
        let g = self.linear_gram();
        let (dirs_mesh, _) = build_icosphere(3, 1.0)?;
        let dirs = dirs_mesh.positions().unwrap_or(&[]);
        let q = |a: &Vector3<f64>| (a.transpose() * g * a)[(0, 0)];
        let mut best = Vector3::new(1.0, 0.0, 0.0);
        let mut best_q = f64::INFINITY;
        for d in dirs {
            let a = Vector3::new(d[0], d[1], d[2]);
            let v = q(&a);
            if v < best_q {
                best_q = v;
                best = a;
            }
        }
        // One Newton step on the Lagrange system (G - λ) a = 0, |a|² = 1.
        let lam = best_q;
        let mut jac = Matrix4::zeros();
        let mut rhs = Vector4::zeros();
        for i in 0..3 {
            for j in 0..3 {
                jac[(i, j)] = g[(i, j)] - if i == j { lam } else { 0.0 };
            }
            jac[(i, 3)] = -best[i];
            jac[(3, i)] = -best[i];
        }
        let r = g * best - lam * best;
        for i in 0..3 {
            rhs[i] = -r[i];
        }
        rhs[3] = -(1.0 - best.norm_squared()) / 2.0;
        if let Some(step) = jac.lu().solve(&rhs) {
            let cand = (best + Vector3::new(step[0], step[1], step[2])).normalize();
            let v = q(&cand);
            if v.is_finite() && v <= best_q {
                best_q = v;
                best = cand;
            }
        }
        Ok((best_q - 8.0 * PI * self.reference_mass(), [best[0], best[1], best[2]]))
    }

    /// Smallest eigenpairs of the pencil `(B, D)` on mean-zero functions.
    /// The returned residual covers the leading three pairs.
    pub fn beta_pairs(&self, count: usize) -> Result<(Vec<f64>, Vec<Vec<f64>>, f64)> {
        let n = self.mesh.num_vertices();
        let bg = self.b.remove_rows_cols(&[0]);
        let dg = self.d.remove_rows_cols(&[0]);
        let (hmax, _) = self.criterion_inputs();
        let pairs = smallest_eigenpairs(
            &bg,
            MassOp::Sparse(&dg),
            &[],
            &EigenOptions {
                count: count.min(n - 1),
                shift: -0.1 / hmax,
                guard: 8,
                tol: 1e-10,
                required: Some(count.min(3)),
                ..Default::default()
            },
        )?;
        let m = self.mass();
        let area: f64 = m.iter().sum();
        let vectors = pairs
            .vectors
            .iter()
            .map(|v| {
                let mut full = Vec::with_capacity(n);
                full.push(0.0);
                full.extend_from_slice(v);
                let mean = dot(m, &full) / area;
                for x in full.iter_mut() {
                    *x -= mean;
                }
                let nrm = wdot(m, &full, &full).sqrt();
                full.iter().map(|x| x / nrm).collect()
            })
            .collect();
        let res = pairs.residuals[..count.min(3)].iter().cloned().fold(0.0, f64::max);
        Ok((pairs.values, vectors, res))
    }

    /// Fraction of `eta`'s mean-zero part (lumped L²) lying in the span of the
    /// coordinate functions of the embedding.
    pub fn linear_participation(&self, eta: &[f64]) -> f64 {
        let m = self.mass();
        let area: f64 = m.iter().sum();
        let center = |v: &[f64]| {
            let mean = dot(m, v) / area;
            v.iter().map(|x| x - mean).collect::<Vec<f64>>()
        };
        let e = center(eta);
        let x = self.coordinates().map(|c| center(&c));
        let gram = Matrix3::from_fn(|k, l| wdot(m, &x[k], &x[l]));
        let proj = Vector3::from_fn(|k, _| wdot(m, &x[k], &e));
        let Some(inv) = gram.try_inverse() else {
            return 0.0;
        };
        let num = (proj.transpose() * inv * proj)[(0, 0)];
        let den = wdot(m, &e, &e);
        if den > 0.0 {
            num / den
        } else {
            0.0
        }
    }
}

fn i2_quadrature(
    mesh: &TriMesh,
    geo: &[FaceGeometry],
    mass: &[f64],
    shape: &ShapeData,
    eta: &[f64],
    d: &[f64],
) -> f64 {
    let h0 = &shape.mean_curvature;
    let mut s = 0.0;
    for i in 0..d.len() {
        s += mass[i] * d[i] * d[i] / h0[i];
    }
    let g = gradient_values(mesh, geo, eta);
    for (f, gf) in g.iter().enumerate() {
        let t = shape.second_fundamental.values[f];
        s -= geo[f].area * (t[0] * gf[0] * gf[0] + 2.0 * t[1] * gf[0] * gf[1] + t[2] * gf[1] * gf[1]);
    }
    s
}

/// Which normalization a second-variation value carries.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Prefactor {
    /// The bracketed integral alone.
    #[default]
    Bare,
    /// Multiplied by `1/8π`, as a second derivative of the energy.
    Energy,
}

impl Prefactor {
    pub fn factor(self) -> f64 {
        match self {
            Prefactor::Bare => 1.0,
            Prefactor::Energy => 1.0 / (8.0 * PI),
        }
    }
}

/// Matrix of `B(η, φ) = ∮ [ΔηΔφ/|H| + (H₀σ - II₀)(∇η,∇φ) - |H|⟨∇η,∇φ⟩]` with the lumped mass.
pub fn linearized_operator(data: &BoundaryData) -> Result<GalerkinOperator> {
    let q = QuadraticForms::new(data)?;
    Ok(GalerkinOperator::from_parts(&data.mesh, q.b, q.laplacian.mass))
}

/// Second variation of the energy at `τ = 0` along `eta`, without the `1/8π`.
pub fn second_variation(data: &BoundaryData, eta: &ScalarField) -> Result<f64> {
    second_variation_with(data, eta, Prefactor::Bare)
}

pub fn second_variation_with(data: &BoundaryData, eta: &ScalarField, prefactor: Prefactor) -> Result<f64> {
    eta.check_mesh(&data.mesh)?;
    Ok(prefactor.factor() * QuadraticForms::new(data)?.second_variation(&eta.values))
}

/// `I₁(η, η)` on the embedding `x` of `metric` with physical mean curvature `norm_h`.
pub fn i1_form(
    mesh: &TriMesh,
    x: &Embedding,
    metric: &MetricField,
    norm_h: &ScalarField,
    eta: &ScalarField,
) -> Result<f64> {
    eta.check_mesh(mesh)?;
    norm_h.check_mesh(mesh)?;
    let shape = shape_data(mesh, x, metric)?;
    let surface = Surface {
        embedding: x.clone(),
        shape,
    };
    Ok(QuadraticForms::from_surface(mesh, metric, surface, &norm_h.values)?.i1(&eta.values))
}

/// `I₂(η, η) = ∮ [(Δη)²/H₀ - II₀(∇η,∇η)]` on the embedding `x` of `metric`.
pub fn i2_form(mesh: &TriMesh, x: &Embedding, metric: &MetricField, eta: &ScalarField) -> Result<f64> {
    eta.check_mesh(mesh)?;
    let shape = shape_data(mesh, x, metric)?;
    let geo = face_geometries(mesh, metric)?;
    let lap = laplacian_from(mesh, &geo);
    let d = lap.apply_values(&eta.values);
    Ok(i2_quadrature(mesh, &geo, &lap.mass, &shape, &eta.values, &d))
}

#[derive(Clone, Debug, Serialize)]
pub struct StabilityReport {
    /// Smallest eigenvalue of `(B, D)` on mean-zero functions: the best constant in
    /// `∮[bracket] ≥ β ∮(Δη)²` with the bare second-variation bracket.
    pub beta: f64,
    /// `beta / 8π`: the same constant for the energy-normalized second variation.
    pub beta_energy: f64,
    /// Mean-zero minimizer, unit lumped L² norm.
    pub minimizing_eta: ScalarField,
    /// Share of the minimizer in the span of the coordinate functions.
    pub linear_participation: f64,
    pub lambda1: f64,
    pub eigenvalue_criterion_margin: f64,
    /// `min_a Q(a·X) - 8π m` over unit vectors `a`.
    pub linear_bound_gap: f64,
    pub linear_bound_direction: [f64; 3],
    pub h_max: f64,
    pub ii_min: f64,
    /// Smallest few eigenvalues of `(B, D)`, ascending. Only the first three are
    /// converged to `eigen_residual`; later entries are Ritz estimates and can be
    /// inaccurate when they sit near the accumulation point `1/H^max`.
    pub spectrum: Vec<f64>,
    pub spectrum_participation: Vec<f64>,
    pub beta_multiplicity: usize,
    pub eigen_residual: f64,
}

/// Stability coefficient and the computable criteria of the second variation.
pub fn stability_beta(data: &BoundaryData) -> Result<StabilityReport> {
    stability_from_forms(&QuadraticForms::new(data)?)
}

pub fn stability_from_forms(q: &QuadraticForms) -> Result<StabilityReport> {
    let (values, vectors, res) = q.beta_pairs(6)?;
    let mesh = q.mesh();
    let metric_spec = first_eigenvalues_of(q)?;
    let (hmax, iimin) = q.criterion_inputs();
    let (gap, dir) = q.linear_function_gap()?;
    let beta = values[0];
    Ok(StabilityReport {
        beta,
        beta_energy: beta / (8.0 * PI),
        minimizing_eta: ScalarField::named(mesh, "minimizing_eta", vectors[0].clone())?,
        linear_participation: q.linear_participation(&vectors[0]),
        lambda1: metric_spec,
        eigenvalue_criterion_margin: q.eigenvalue_criterion_margin(metric_spec),
        linear_bound_gap: gap,
        linear_bound_direction: dir,
        h_max: hmax,
        ii_min: iimin,
        spectrum_participation: vectors.iter().map(|v| q.linear_participation(v)).collect(),
        beta_multiplicity: leading_multiplicity_abs(&values, 1e-6, 1e-6 / hmax),
        spectrum: values,
        eigen_residual: res,
    })
}

fn first_eigenvalues_of(q: &QuadraticForms) -> Result<f64> {
    let a = q.laplacian.stiffness.scale(-1.0);
    let area: f64 = q.mass().iter().sum();
    let pairs = smallest_eigenpairs(
        &a,
        MassOp::Diagonal(q.mass()),
        &[vec![1.0; q.mass().len()]],
        &EigenOptions {
            count: 4,
            shift: -2.0 * PI / area,
            guard: 10,
            tol: 1e-10,
            ..Default::default()
        },
    )?;
    Ok(pairs.values[0])
}

/// `λ₁ - H^max (H^max - II₀^min)`; positive margin is sufficient for `β > 0`.
pub fn eigenvalue_criterion(data: &BoundaryData) -> Result<f64> {
    let q = QuadraticForms::new(data)?;
    Ok(q.eigenvalue_criterion_margin(first_eigenvalues_of(&q)?))
}

/// `min_{|a|=1} Q(a·X) - 8π m` on the embedding `x` of the data's metric, with `m` the
/// `τ = 0` mass `(1/8π)∮(H₀ - |H|)`.
pub fn linear_function_bound(data: &BoundaryData, x: &Embedding) -> Result<f64> {
    let shape = shape_data(&data.mesh, x, &data.metric)?;
    let surface = Surface {
        embedding: x.clone(),
        shape,
    };
    let q = QuadraticForms::from_surface(&data.mesh, &data.metric, surface, &data.norm_h.values)?;
    Ok(q.linear_function_gap()?.0)
}

/// Euler-Lagrange residual of the energy at `tau`, with its ingredients.
#[derive(Clone, Debug)]
pub struct ResidualEval {
    /// Weak residual `R(φ_i)` against each hat function.
    pub weak: Vec<f64>,
    /// `R(φ_i) / M̂_i` (hat-metric lumped mass).
    pub field: Vec<f64>,
    pub hat_mass: Vec<f64>,
    /// Lumped L² norm of `field` with the hat mass.
    pub norm: f64,
    pub hat_embedding: Embedding,
}

/// Weak Euler-Lagrange residual.
///
/// `R(φ) = ∮_Σ̂ (Ĥσ̂ - ĥ)(∇̂τ, ∇̂φ) dv̂ - ∮_Σ ⟨c∇τ - ∇θ - V, ∇φ⟩ dv` with
/// `c = cosh θ |H| / √(1+|∇τ|²)`; it vanishes for every `φ` exactly at critical points.
pub fn el_residual_eval(
    data: &BoundaryData,
    tau: &[f64],
    cfg: &EmbedConfig,
    seed: Option<&[[f64; 3]]>,
) -> Result<ResidualEval> {
    let mesh = &data.mesh;
    mesh.check_len("tau", tau.len(), crate::mesh::Per::Vertex)?;
    let tau_field = ScalarField::new(mesh, tau.to_vec())?;
    let hat = hat_metric_with_margin(mesh, &data.metric, &tau_field, cfg.curvature_margin)?;
    let surf = embed_surface(mesh, &hat, seed, cfg)?;
    let hat_geo = face_geometries(mesh, &hat)?;
    let hat_mass = lumped_mass(mesh, &hat_geo);
    let mut weak = tensor_stiffness(mesh, &hat_geo, &surf.shape.newton_tensor()).mul_vec(tau);

    let geo = face_geometries(mesh, &data.metric)?;
    let lap = laplacian_from(mesh, &geo);
    let h = &data.norm_h.values;
    let t = time_terms(mesh, &geo, &lap, h, tau);
    let c: Vec<f64> = (0..mesh.num_vertices())
        .map(|i| t.theta[i].cosh() * h[i] / (1.0 + t.grad_sq[i]).sqrt())
        .collect();
    let grad_theta = gradient_values(mesh, &geo, &t.theta);
    let w: Vec<[f64; 2]> = mesh
        .faces()
        .iter()
        .enumerate()
        .map(|(f, tri)| {
            let cf = (c[tri[0]] + c[tri[1]] + c[tri[2]]) / 3.0;
            let g = t.grad[f];
            let v = data.v.values[f];
            [
                cf * g[0] - grad_theta[f][0] - v[0],
                cf * g[1] - grad_theta[f][1] - v[1],
            ]
        })
        .collect();
    for (r, p) in weak.iter_mut().zip(weak_pairing(mesh, &geo, &w)) {
        *r -= p;
    }
    let field: Vec<f64> = weak.iter().zip(&hat_mass).map(|(r, m)| r / m).collect();
    let norm = wdot(&hat_mass, &field, &field).sqrt();
    Ok(ResidualEval {
        weak,
        field,
        hat_mass,
        norm,
        hat_embedding: surf.embedding,
    })
}

/// Mass-normalized Euler-Lagrange residual field at `tau`.
pub fn el_residual(data: &BoundaryData, tau: &ScalarField) -> Result<ScalarField> {
    tau.check_mesh(&data.mesh)?;
    let r = el_residual_eval(data, &tau.values, &EmbedConfig::default(), None)?;
    ScalarField::named(&data.mesh, "residual", r.field)
}

/// First-order critical point for small `V`: the mean-zero solution of
/// `B(τ, φ) = -∮⟨V, ∇φ⟩` for all `φ`, with `B` the linearization at `τ = 0`.
pub fn linear_response(data: &BoundaryData) -> Result<ScalarField> {
    let q = QuadraticForms::new(data)?;
    let mesh = &data.mesh;
    let rhs: Vec<f64> = weak_pairing(mesh, &q.geo, &data.v.values).iter().map(|x| -x).collect();
    let lu = crate::linalg::SparseLu::new(&q.b.remove_rows_cols(&[0]))?;
    let mut tau = vec![0.0];
    tau.extend(lu.solve(&rhs[1..]));
    let mean = dot(q.mass(), &tau) / q.mass().iter().sum::<f64>();
    tau.iter_mut().for_each(|x| *x -= mean);
    ScalarField::named(mesh, "tau_linear", tau)
}
