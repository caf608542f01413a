//! Quasi-local energy of boundary data for a given time function, and its
//! Brown-York and Liu-Yau specializations.

use std::f64::consts::PI;

use serde::Serialize;

use crate::embedding::{embed, shape_data, EmbedConfig, Embedding, ShapeData};
use crate::error::{Error, Result};
use crate::linalg::{dot, wdot};
use crate::mesh::{
    face_geometries, gradient_values, laplacian_from, lumped_mass, FaceGeometry, GalerkinOperator,
    MetricField, ScalarField, TriMesh, VectorField,
};

/// Physical data induced on a spacelike sphere: metric, norm of the mean curvature
/// vector, and the connection one-form of the normal bundle (as a per-face vector).
#[derive(Clone, Debug)]
pub struct BoundaryData {
    pub mesh: TriMesh,
    pub metric: MetricField,
    pub norm_h: ScalarField,
    pub v: VectorField,
    /// `V ≡ 0` and `norm_h` is the mean curvature inside a time-symmetric slice.
    pub time_symmetric: bool,
}

impl BoundaryData {
    pub fn new(
        mesh: TriMesh,
        metric: MetricField,
        norm_h: ScalarField,
        v: VectorField,
        time_symmetric: bool,
    ) -> Result<Self> {
        metric.check_mesh(&mesh)?;
        norm_h.check_mesh(&mesh)?;
        v.check_mesh(&mesh)?;
        if let Some(i) = norm_h.values.iter().position(|h| !(*h > 0.0)) {
            return Err(Error::InvalidParameter(format!(
                "normH must be positive (vertex {i} has {})",
                norm_h.values[i]
            )));
        }
        if time_symmetric && !v.is_zero() {
            return Err(Error::InvalidParameter(
                "time-symmetric data must have V = 0".into(),
            ));
        }
        Ok(BoundaryData {
            mesh,
            metric,
            norm_h,
            v,
            time_symmetric,
        })
    }

    /// Time-symmetric data with mean curvature `h`.
    pub fn time_symmetric(mesh: TriMesh, metric: MetricField, h: ScalarField) -> Result<Self> {
        let v = VectorField::zeros(&mesh);
        BoundaryData::new(mesh, metric, h, v, true)
    }

    /// Same data with `V` replaced; clears the time-symmetric flag when `V ≠ 0`.
    pub fn with_v(&self, v: VectorField) -> Result<Self> {
        let ts = self.time_symmetric && v.is_zero();
        BoundaryData::new(self.mesh.clone(), self.metric.clone(), self.norm_h.clone(), v, ts)
    }
}

/// An embedded metric together with its extrinsic shape.
#[derive(Clone, Debug)]
pub struct Surface {
    pub embedding: Embedding,
    pub shape: ShapeData,
}

/// Embeds `metric` and computes its shape data.
pub fn embed_surface(
    mesh: &TriMesh,
    metric: &MetricField,
    seed: Option<&[[f64; 3]]>,
    cfg: &EmbedConfig,
) -> Result<Surface> {
    let embedding = embed(mesh, metric, seed, cfg)?;
    let shape = shape_data(mesh, &embedding, metric)?;
    Ok(Surface { embedding, shape })
}

#[derive(Clone, Debug, Serialize, serde::Deserialize)]
#[serde(default)]
pub struct EnergyConfig {
    pub embed: EmbedConfig,
    /// Also evaluate the `τ = 0` masses (needs an embedding of `σ` when `τ` is not constant).
    pub reference_masses: bool,
}

impl Default for EnergyConfig {
    fn default() -> Self {
        EnergyConfig {
            embed: EmbedConfig::default(),
            reference_masses: true,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct EnergyReport {
    /// Quasi-local energy for the given time function.
    pub energy: f64,
    pub hat_area: f64,
    /// `∮ Ĥ dv̂` over the embedded hat surface.
    pub hat_total_mean_curvature: f64,
    /// `∮ [√(1+|∇τ|²) cosh θ |H| - ⟨∇τ,∇θ⟩ - ⟨V,∇τ⟩] dv`.
    pub physical_term: f64,
    pub theta: ScalarField,
    /// The hat metric is positively curved (always true for a returned report).
    pub admissible_hint: bool,
    pub hat_min_curvature: f64,
    pub m_by: Option<f64>,
    pub m_ly: Option<f64>,
    #[serde(skip)]
    pub hat_embedding: Embedding,
}

/// `σ̂ = σ + dτ⊗dτ` on edges: `ℓ̂² = ℓ² + (τ_i - τ_j)²`.
///
/// Fails with [`Error::NotAdmissibleHint`] unless the result is positively curved at every
/// vertex (default margin).
pub fn hat_metric(mesh: &TriMesh, metric: &MetricField, tau: &ScalarField) -> Result<MetricField> {
    hat_metric_with_margin(mesh, metric, tau, EmbedConfig::default().curvature_margin)
}

pub(crate) fn hat_metric_with_margin(
    mesh: &TriMesh,
    metric: &MetricField,
    tau: &ScalarField,
    margin: f64,
) -> Result<MetricField> {
    let hat = hat_lengths(mesh, metric, &tau.values)?;
    let (v, k) = min_curvature(mesh, &hat)?;
    if !(k > margin) {
        return Err(Error::NotAdmissibleHint {
            vertex: v,
            curvature: k,
        });
    }
    Ok(hat)
}

pub(crate) fn hat_lengths(mesh: &TriMesh, metric: &MetricField, tau: &[f64]) -> Result<MetricField> {
    metric.check_mesh(mesh)?;
    mesh.check_len("tau", tau.len(), crate::mesh::Per::Vertex)?;
    let sq: Vec<f64> = mesh
        .edges()
        .iter()
        .zip(metric.lengths())
        .map(|(&[a, b], l)| l * l + (tau[a] - tau[b]).powi(2))
        .collect();
    MetricField::from_squared(mesh, &sq)
}

fn min_curvature(mesh: &TriMesh, metric: &MetricField) -> Result<(usize, f64)> {
    let k = crate::mesh::gaussian_curvature(mesh, metric)?;
    Ok(k.values
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |(bv, bk), (i, &x)| if x < bk { (i, x) } else { (bv, bk) }))
}

/// Per-vertex and per-face pieces of the time function shared by the energy and its
/// Euler-Lagrange residual.
pub(crate) struct TimeTerms {
    /// `∇τ` per face.
    pub grad: Vec<[f64; 2]>,
    /// `|∇τ|²` at vertices: mass-weighted average over incident faces.
    pub grad_sq: Vec<f64>,
    pub theta: Vec<f64>,
}

pub(crate) fn time_terms(
    mesh: &TriMesh,
    geo: &[FaceGeometry],
    lap: &GalerkinOperator,
    norm_h: &[f64],
    tau: &[f64],
) -> TimeTerms {
    let grad = gradient_values(mesh, geo, tau);
    let mut grad_sq = vec![0.0; mesh.num_vertices()];
    for ((tri, g), d) in mesh.faces().iter().zip(geo).zip(&grad) {
        let w = g.area / 3.0 * (d[0] * d[0] + d[1] * d[1]);
        for &v in tri {
            grad_sq[v] += w;
        }
    }
    for (s, m) in grad_sq.iter_mut().zip(&lap.mass) {
        *s /= m;
    }
    let theta = lap
        .apply_values(tau)
        .iter()
        .zip(&grad_sq)
        .zip(norm_h)
        .map(|((d, g), h)| (-d / (h * (1.0 + g).sqrt())).asinh())
        .collect();
    TimeTerms {
        grad,
        grad_sq,
        theta,
    }
}

/// `θ` with `sinh θ = -Δτ / (|H| √(1+|∇τ|²))` at every vertex.
pub fn theta_field(
    mesh: &TriMesh,
    metric: &MetricField,
    norm_h: &ScalarField,
    tau: &ScalarField,
) -> Result<ScalarField> {
    norm_h.check_mesh(mesh)?;
    tau.check_mesh(mesh)?;
    if norm_h.values.iter().any(|h| !(*h > 0.0)) {
        return Err(Error::InvalidParameter("normH must be positive".into()));
    }
    let geo = face_geometries(mesh, metric)?;
    let lap = laplacian_from(mesh, &geo);
    let t = time_terms(mesh, &geo, &lap, &norm_h.values, &tau.values);
    ScalarField::named(mesh, "theta", t.theta)
}

fn face_pairing(geo: &[FaceGeometry], a: &[[f64; 2]], b: &[[f64; 2]]) -> f64 {
    geo.iter()
        .zip(a.iter().zip(b))
        .map(|(g, (x, y))| g.area * (x[0] * y[0] + x[1] * y[1]))
        .sum()
}

/// Quasi-local energy with default settings, embedding `σ̂` from the mesh seed positions.
pub fn wang_yau_energy(data: &BoundaryData, tau: &ScalarField) -> Result<EnergyReport> {
    wang_yau_energy_with(data, tau, &EnergyConfig::default(), None)
}

/// Quasi-local energy; `seed` is an initial guess for the embedding of `σ̂`.
pub fn wang_yau_energy_with(
    data: &BoundaryData,
    tau: &ScalarField,
    cfg: &EnergyConfig,
    seed: Option<&[[f64; 3]]>,
) -> Result<EnergyReport> {
    let mesh = &data.mesh;
    tau.check_mesh(mesh)?;
    let geo = face_geometries(mesh, &data.metric)?;
    let lap = laplacian_from(mesh, &geo);
    let hat = hat_metric_with_margin(mesh, &data.metric, tau, cfg.embed.curvature_margin)?;
    let (_, hat_min_curvature) = min_curvature(mesh, &hat)?;
    let surf = embed_surface(mesh, &hat, seed, &cfg.embed)?;
    let hat_total = surf.shape.total_mean_curvature;

    let h = &data.norm_h.values;
    let t = time_terms(mesh, &geo, &lap, h, &tau.values);
    let mut phys = 0.0;
    for i in 0..mesh.num_vertices() {
        phys += lap.mass[i] * (1.0 + t.grad_sq[i]).sqrt() * t.theta[i].cosh() * h[i];
    }
    let grad_theta = gradient_values(mesh, &geo, &t.theta);
    phys -= face_pairing(&geo, &t.grad, &grad_theta);
    phys -= face_pairing(&geo, &data.v.values, &t.grad);
    let energy = (hat_total - phys) / (8.0 * PI);

    let (m_by, m_ly) = if cfg.reference_masses {
        let flat = t.grad.iter().all(|d| d[0] == 0.0 && d[1] == 0.0);
        let total = if flat {
            hat_total
        } else {
            embed_surface(mesh, &data.metric, seed, &cfg.embed)?
                .shape
                .total_mean_curvature
        };
        let m = (total - wdot(&lap.mass, h, &vec![1.0; h.len()])) / (8.0 * PI);
        (data.time_symmetric.then_some(m), Some(m))
    } else {
        (None, None)
    };

    Ok(EnergyReport {
        energy,
        hat_area: hat.total_area(mesh)?,
        hat_total_mean_curvature: hat_total,
        physical_term: phys,
        theta: ScalarField::named(mesh, "theta", t.theta)?,
        admissible_hint: hat_min_curvature > 0.0,
        hat_min_curvature,
        m_by,
        m_ly,
        hat_embedding: surf.embedding,
    })
}

/// `(1/8π) ∮ (H₀ - H) dv` for time-symmetric data.
pub fn brown_york_mass(data: &BoundaryData) -> Result<f64> {
    if !data.time_symmetric {
        return Err(Error::InvalidParameter(
            "Brown-York mass needs time-symmetric data".into(),
        ));
    }
    liu_yau_mass(data)
}

/// `(1/8π) ∮ (H₀ - |H|) dv`.
pub fn liu_yau_mass(data: &BoundaryData) -> Result<f64> {
    let surf = embed_surface(&data.mesh, &data.metric, None, &EmbedConfig::default())?;
    mass_from_surface(data, &surf.shape)
}

pub(crate) fn mass_from_surface(data: &BoundaryData, shape: &ShapeData) -> Result<f64> {
    let geo = face_geometries(&data.mesh, &data.metric)?;
    let mass = lumped_mass(&data.mesh, &geo);
    Ok((shape.total_mean_curvature - dot(&mass, &data.norm_h.values)) / (8.0 * PI))
}
