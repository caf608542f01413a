//! Reference geometries with closed-form answers.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::Serialize;

use crate::embedding::Embedding;
use crate::energy::BoundaryData;
use crate::error::{Error, Result};
use crate::mesh::{build_icosphere, MetricField, ScalarField, TriMesh};

#[derive(Clone, Debug, Serialize)]
pub struct Known {
    pub value: f64,
    pub provenance: String,
}

/// Boundary data plus expected values, each with a note on where it comes from.
#[derive(Clone, Debug)]
pub struct OracleBundle {
    pub name: String,
    pub data: BoundaryData,
    pub known: BTreeMap<String, Known>,
}

impl OracleBundle {
    fn new(name: &str, data: BoundaryData) -> Self {
        OracleBundle {
            name: name.to_string(),
            data,
            known: BTreeMap::new(),
        }
    }

    fn know(&mut self, key: &str, value: f64, provenance: &str) {
        self.known.insert(
            key.to_string(),
            Known {
                value,
                provenance: provenance.to_string(),
            },
        );
    }

    pub fn get(&self, key: &str) -> Option<f64> {
        self.known.get(key).map(|k| k.value)
    }
}

fn positive(name: &str, x: f64) -> Result<()> {
    if x.is_finite() && x > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} must be positive, got {x}")))
    }
}

/// Round sphere of radius `r` with constant mean curvature `h` in a time-symmetric slice.
pub fn round_sphere(r: f64, h: f64, subdivisions: u32) -> Result<OracleBundle> {
    positive("radius", r)?;
    positive("H", h)?;
    let (mesh, metric) = build_icosphere(subdivisions, r)?;
    let norm_h = ScalarField::constant(&mesh, h);
    let data = BoundaryData::time_symmetric(mesh, metric, norm_h)?;
    let mut b = OracleBundle::new("round_sphere", data);
    b.know("H0", 2.0 / r, "umbilic sphere: principal curvatures 1/r");
    b.know(
        "m_BY",
        0.5 * r * (2.0 - r * h),
        "constant integrand (2/r - H) over area 4πr², divided by 8π",
    );
    b.know("area", 4.0 * PI * r * r, "round sphere");
    b.know("lambda1", 2.0 / (r * r), "first spherical-harmonic eigenvalue l(l+1)/r² at l = 1");
    if (h - 1.0).abs() < 1e-15 && (r - 1.0).abs() < 1e-15 {
        b.know("beta", 1.0, "umbilic unit sphere with H = 1: bracket equals ∮(Δη)² identically");
    }
    if (r * h - 2.0).abs() < 1e-15 {
        b.know("beta", 0.0, "flat ball: linear functions are null directions");
    }
    Ok(b)
}

/// Areal-radius-`r_areal` round sphere in the time-symmetric Schwarzschild slice of mass `m`.
pub fn schwarzschild_sphere(m: f64, r_areal: f64, subdivisions: u32) -> Result<OracleBundle> {
    positive("m", m)?;
    if !(r_areal > 2.0 * m) {
        return Err(Error::InvalidParameter(format!(
            "areal radius {r_areal} must exceed the horizon radius {}",
            2.0 * m
        )));
    }
    let (mesh, metric) = build_icosphere(subdivisions, r_areal)?;
    let lapse = (1.0 - 2.0 * m / r_areal).sqrt();
    let h = 2.0 / r_areal * lapse;
    let norm_h = ScalarField::constant(&mesh, h);
    let data = BoundaryData::time_symmetric(mesh, metric, norm_h)?;
    let mut b = OracleBundle::new("schwarzschild", data);
    b.know("H", h, "mean curvature (2/R)√(1-2m/R) of an areal sphere in the Schwarzschild slice");
    b.know("H0", 2.0 / r_areal, "round sphere of radius R");
    b.know(
        "m_BY",
        r_areal * (1.0 - lapse),
        "closed form R(1-√(1-2m/R)) from the constant integrand H0 - H",
    );
    b.know("m", m, "large-R limit of m_BY");
    b.know("areal_radius", r_areal, "input");
    b.know("lambda1", 2.0 / (r_areal * r_areal), "round sphere spectrum");
    Ok(b)
}

/// Coordinate sphere `r` in isotropic Schwarzschild coordinates; the induced metric is
/// round of areal radius `r(1+m/2r)²`.
pub fn schwarzschild_isotropic_sphere(m: f64, r: f64, subdivisions: u32) -> Result<OracleBundle> {
    positive("m", m)?;
    if !(r > 0.5 * m) {
        return Err(Error::InvalidParameter(format!(
            "isotropic radius {r} must exceed the horizon radius {}",
            0.5 * m
        )));
    }
    let psi = 1.0 + m / (2.0 * r);
    let areal = r * psi * psi;
    let (mesh, metric) = build_icosphere(subdivisions, areal)?;
    let h = 2.0 / r * (1.0 - m / (2.0 * r)) / psi.powi(3);
    let norm_h = ScalarField::constant(&mesh, h);
    let data = BoundaryData::time_symmetric(mesh, metric, norm_h)?;
    let mut b = OracleBundle::new("schwarzschild_isotropic", data);
    b.know("areal_radius", areal, "conformal factor (1+m/2r)² applied to the coordinate sphere");
    b.know("H", h, "(2/r)(1-m/2r)/(1+m/2r)³ for the coordinate sphere");
    b.know("H0", 2.0 / areal, "round sphere of the areal radius");
    b.know("H_series", 2.0 / r - 4.0 * m / (r * r), "expansion 2/r - 4m/r² in the isotropic radius");
    b.know("H0_series", 2.0 / r - 2.0 * m / (r * r), "expansion 2/r - 2m/r² in the isotropic radius");
    let lapse = (1.0 - 2.0 * m / areal).sqrt();
    b.know("m_BY", areal * (1.0 - lapse), "areal closed form evaluated at the areal radius");
    Ok(b)
}

/// Strictly convex base surfaces for graph data.
#[derive(Clone, Copy, Debug, Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConvexBase {
    Sphere { r: f64 },
    Ellipsoid { a: f64, b: f64, c: f64 },
}

impl ConvexBase {
    fn axes(&self) -> [f64; 3] {
        match *self {
            ConvexBase::Sphere { r } => [r, r, r],
            ConvexBase::Ellipsoid { a, b, c } => [a, b, c],
        }
    }
}

/// Boundary of a graph over a convex domain: `|H| = H₀/√(1+|∇f|²)` with the boundary
/// gradient norm `grad_f` given per vertex (a single value means constant).
pub fn graph_sphere(base: ConvexBase, grad_f: &[f64], subdivisions: u32) -> Result<OracleBundle> {
    let [a, b, c] = base.axes();
    let (mesh, metric, _) = ellipsoid_metric(a, b, c, subdivisions)?;
    crate::embedding::check_metric_curvature(&mesh, &metric)?;
    let g: Vec<f64> = match grad_f.len() {
        1 => vec![grad_f[0]; mesh.num_vertices()],
        n if n == mesh.num_vertices() => grad_f.to_vec(),
        n => {
            return Err(Error::FieldLength {
                name: "grad_f".into(),
                expected: mesh.num_vertices(),
                got: n,
            })
        }
    };
    let pos = mesh.positions().unwrap_or(&[]).to_vec();
    let h: Vec<f64> = pos
        .iter()
        .zip(&g)
        .map(|(p, gi)| ellipsoid_mean_curvature([a, b, c], *p) / (1.0 + gi * gi).sqrt())
        .collect();
    let norm_h = ScalarField::named(&mesh, "normH", h)?;
    let data = BoundaryData::time_symmetric(mesh, metric, norm_h)?;
    let mut bun = OracleBundle::new("graph", data);
    let total = ellipsoid_total_mean_curvature([a, b, c]);
    bun.know("total_H0", total, "Gauss-Legendre quadrature of the analytic mean curvature of the base");
    if grad_f.len() == 1 {
        let s = 1.0 - 1.0 / (1.0 + grad_f[0] * grad_f[0]).sqrt();
        bun.know("m_BY", s * total / (8.0 * PI), "constant factor 1 - 1/√(1+|∇f|²) times ∮H0 / 8π");
    }
    Ok(bun)
}

/// Chordal metric of the ellipsoid with semi-axes `(a, b, c)` sampled at icosphere
/// vertices, with the sampling embedding. The mesh carries the sample positions.
pub fn ellipsoid_metric(
    a: f64,
    b: f64,
    c: f64,
    subdivisions: u32,
) -> Result<(TriMesh, MetricField, Embedding)> {
    positive("a", a)?;
    positive("b", b)?;
    positive("c", c)?;
    let (sphere, _) = build_icosphere(subdivisions, 1.0)?;
    let pos: Vec<[f64; 3]> = sphere
        .positions()
        .unwrap_or(&[])
        .iter()
        .map(|p| [a * p[0], b * p[1], c * p[2]])
        .collect();
    let mesh = sphere.with_positions(pos.clone())?;
    let metric = MetricField::from_positions(&mesh, &pos)?;
    let emb = Embedding::from_positions(&mesh, pos)?;
    Ok((mesh, metric, emb))
}

/// Mean curvature (sum of principal curvatures) of the ellipsoid `Σ x_k²/a_k² = 1` at `p`.
pub fn ellipsoid_mean_curvature(axes: [f64; 3], p: [f64; 3]) -> f64 {
    let [a, b, c] = axes;
    let (x, y, z) = (p[0], p[1], p[2]);
    let q4 = x * x / a.powi(4) + y * y / b.powi(4) + z * z / c.powi(4);
    let q6 = x * x / a.powi(6) + y * y / b.powi(6) + z * z / c.powi(6);
    let s = 1.0 / (a * a) + 1.0 / (b * b) + 1.0 / (c * c);
    (q4 * s - q6) / q4.powf(1.5)
}

/// Gaussian curvature of the ellipsoid at `p`.
pub fn ellipsoid_gaussian_curvature(axes: [f64; 3], p: [f64; 3]) -> f64 {
    let [a, b, c] = axes;
    let q4 = p[0] * p[0] / a.powi(4) + p[1] * p[1] / b.powi(4) + p[2] * p[2] / c.powi(4);
    1.0 / ((a * b * c).powi(2) * q4 * q4)
}

/// `∮ H dA` of the ellipsoid by tensor quadrature in the polar parametrization.
pub fn ellipsoid_total_mean_curvature(axes: [f64; 3]) -> f64 {
    let [a, b, c] = axes;
    let (nodes, weights) = gauss_legendre(96);
    let nphi = 192;
    let mut total = 0.0;
    for (u, w) in nodes.iter().zip(&weights) {
        let th = 0.5 * PI * (u + 1.0);
        let (st, ct) = th.sin_cos();
        for j in 0..nphi {
            let ph = 2.0 * PI * j as f64 / nphi as f64;
            let (sp, cp) = ph.sin_cos();
            let p = [a * st * cp, b * st * sp, c * ct];
            let xt = [a * ct * cp, b * ct * sp, -c * st];
            let xp = [-a * st * sp, b * st * cp, 0.0];
            let n = [
                xt[1] * xp[2] - xt[2] * xp[1],
                xt[2] * xp[0] - xt[0] * xp[2],
                xt[0] * xp[1] - xt[1] * xp[0],
            ];
            let da = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
            total += w * 0.5 * PI * (2.0 * PI / nphi as f64) * da * ellipsoid_mean_curvature(axes, p);
        }
    }
    total
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                let (mut q0, mut q1) = (1.0, z);
                for k in 2..=n {
                    let q2 = ((2 * k - 1) as f64 * z * q1 - (k - 1) as f64 * q0) / k as f64;
                    q0 = q1;
                    q1 = q2;
                }
                let dq = n as f64 * (z * q1 - q0) / (z * z - 1.0);
                x[i] = z;
                w[i] = 2.0 / ((1.0 - z * z) * dq * dq);
                break;
            }
        }
    }
    (x, w)
}
