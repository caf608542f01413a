//! Newton and continuation solvers for critical time functions of the energy.

use log::{debug, info};
use serde::Serialize;

use crate::embedding::{EmbedConfig, Embedding};
use crate::energy::BoundaryData;
use crate::error::{Error, Result};
use crate::linalg::{dot, krylov::gmres, norm2, SparseLu};
use crate::mesh::{face_geometries, lumped_mass, MetricField, ScalarField, VectorField};
use crate::variation::{el_residual_eval, QuadraticForms, ResidualEval};

#[derive(Clone, Debug, Serialize, serde::Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Stop when the lumped L² norm of the residual field falls below this.
    pub tol: f64,
    pub max_newton: usize,
    /// Newton directions from finite-difference Jacobian-vector products (GMRES, frozen
    /// operator at `τ = 0` as preconditioner); otherwise chord steps with the frozen operator.
    pub fd_jacobian: bool,
    /// Relative tolerance of the inner GMRES solve.
    pub gmres_tol: f64,
    pub gmres_max: usize,
    /// Smallest continuation step as a fraction of the parameter range.
    pub continuation_min_step: f64,
    /// `β · max|H|` below this is treated as a kernel.
    pub kernel_threshold: f64,
    /// `β · max|H|` below this sets `kernel_warning`.
    pub kernel_warning: f64,
    pub embed: EmbedConfig,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tol: 1e-9,
            max_newton: 20,
            fd_jacobian: true,
            gmres_tol: 1e-6,
            gmres_max: 60,
            continuation_min_step: 1e-4,
            kernel_threshold: 1e-2,
            kernel_warning: 0.1,
            embed: EmbedConfig {
                tol: 1e-12,
                ..EmbedConfig::default()
            },
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SolveReport {
    /// Family parameter, for continuation reports.
    pub t: Option<f64>,
    pub tau: ScalarField,
    pub residual_norm: f64,
    pub residual_history: Vec<f64>,
    pub newton_iterations: usize,
    pub gmres_iterations: usize,
    pub continuation_steps: usize,
    /// The linearization at `τ = 0` is close to singular.
    pub kernel_warning: bool,
    /// Smallest eigenvalue of the linearization against `∮ΔηΔφ` on mean-zero functions.
    pub min_deflated_eigenvalue: f64,
    /// `min_deflated_eigenvalue · max|H|` (scale free).
    pub kernel_indicator: f64,
    /// `r_{k+1} / r_k²` over the last two Newton steps, when available.
    pub quadratic_constant: Option<f64>,
}

/// Frozen linearization at `τ = 0`, grounded at vertex 0.
struct Frozen {
    lu: SparseLu,
    beta: f64,
    indicator: f64,
    near_null: Vec<f64>,
}

impl Frozen {
    fn new(data: &BoundaryData) -> Result<Self> {
        let q = QuadraticForms::new(data)?;
        let (values, vectors, _) = q.beta_pairs(3)?;
        let (hmax, _) = q.criterion_inputs();
        let lu = SparseLu::new(&q.b.remove_rows_cols(&[0]))?;
        Ok(Frozen {
            lu,
            beta: values[0],
            indicator: values[0] * hmax,
            near_null: vectors[0].clone(),
        })
    }

    fn solve_grounded(&self, r: &[f64]) -> Vec<f64> {
        self.lu.solve(r)
    }
}

fn ground(v: &[f64]) -> Vec<f64> {
    v[1..].to_vec()
}

fn unground(v: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(v.len() + 1);
    out.push(0.0);
    out.extend_from_slice(v);
    out
}

fn remove_mean(v: &mut [f64], mass: &[f64]) {
    let mean = dot(mass, v) / mass.iter().sum::<f64>();
    for x in v.iter_mut() {
        *x -= mean;
    }
}

fn sigma_mass(data: &BoundaryData) -> Result<Vec<f64>> {
    Ok(lumped_mass(&data.mesh, &face_geometries(&data.mesh, &data.metric)?))
}

/// Damped Newton iteration for a critical time function, on mean-zero fields.
pub fn newton_solve(data: &BoundaryData, tau_init: &ScalarField, cfg: &SolverConfig) -> Result<SolveReport> {
    tau_init.check_mesh(&data.mesh)?;
    let frozen = Frozen::new(data)?;
    if frozen.indicator < cfg.kernel_threshold {
        return Err(Error::KernelObstruction {
            indicator: frozen.indicator,
            beta: frozen.beta,
            field: frozen.near_null,
        });
    }
    newton_with(data, &tau_init.values, cfg, &frozen, None)
}

fn newton_with(
    data: &BoundaryData,
    tau_init: &[f64],
    cfg: &SolverConfig,
    frozen: &Frozen,
    seed: Option<&Embedding>,
) -> Result<SolveReport> {
    let mass = sigma_mass(data)?;
    let mut tau = tau_init.to_vec();
    remove_mean(&mut tau, &mass);
    let eval = |t: &[f64], seed: Option<&Embedding>| -> Result<ResidualEval> {
        el_residual_eval(data, t, &cfg.embed, seed.map(|e| e.positions.as_slice()))
    };
    let mut r = eval(&tau, seed)?;
    let mut history = vec![r.norm];
    let mut gmres_total = 0;
    let mut iterations = 0;
    while r.norm >= cfg.tol {
        if iterations >= cfg.max_newton {
            return Err(Error::NonConvergence {
                iterations,
                residual: r.norm,
                tau,
            });
        }
        let rhs: Vec<f64> = ground(&r.weak).iter().map(|x| -x).collect();
        let step = if cfg.fd_jacobian {
            let base = r.weak.clone();
            let tau_ref = tau.clone();
            let seed_ref = r.hat_embedding.clone();
            let scale = tau_ref.iter().fold(1e-3f64, |m, x| m.max(x.abs()));
            let out = gmres(
                |v: &[f64]| {
                    let vn = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
                    if vn == 0.0 {
                        return Ok(vec![0.0; v.len()]);
                    }
                    let eps = 1e-6 * scale / vn;
                    let full = unground(v);
                    let shifted: Vec<f64> = tau_ref.iter().zip(&full).map(|(t, d)| t + eps * d).collect();
                    let rs = eval(&shifted, Some(&seed_ref))?;
                    Ok(ground(&rs.weak)
                        .iter()
                        .zip(ground(&base))
                        .map(|(a, b)| (a - b) / eps)
                        .collect())
                },
                |v: &[f64]| frozen.solve_grounded(v),
                &rhs,
                cfg.gmres_tol.max(0.1 * cfg.tol / r.norm).min(0.5),
                30,
                cfg.gmres_max,
            )?;
            gmres_total += out.iterations;
            debug!(
                "newton {iterations}: gmres {} its, rel {:.2e}",
                out.iterations, out.relative_residual
            );
            out.x
        } else {
            frozen.solve_grounded(&rhs)
        };
        let mut delta = unground(&step);
        remove_mean(&mut delta, &mass);

        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..12 {
            let trial: Vec<f64> = tau.iter().zip(&delta).map(|(t, d)| t + alpha * d).collect();
            match eval(&trial, Some(&r.hat_embedding)) {
                Ok(rt) if rt.norm <= (1.0 - 1e-4 * alpha) * r.norm => {
                    accepted = Some((trial, rt));
                    break;
                }
                Ok(_) => {}
                Err(e) => debug!("line search trial failed: {e}"),
            }
            alpha *= 0.5;
        }
        iterations += 1;
        match accepted {
            Some((t, rt)) => {
                tau = t;
                remove_mean(&mut tau, &mass);
                r = rt;
                history.push(r.norm);
            }
            None => {
                return Err(Error::NonConvergence {
                    iterations,
                    residual: r.norm,
                    tau,
                })
            }
        }
    }
    let quadratic_constant = (history.len() >= 3).then(|| {
        let n = history.len();
        history[n - 1] / (history[n - 2] * history[n - 2])
    });
    info!("newton converged in {iterations} steps, residual {:.3e}", r.norm);
    Ok(SolveReport {
        t: None,
        tau: ScalarField::named(&data.mesh, "tau", tau)?,
        residual_norm: r.norm,
        residual_history: history,
        newton_iterations: iterations,
        gmres_iterations: gmres_total,
        continuation_steps: 0,
        kernel_warning: frozen.indicator < cfg.kernel_warning,
        min_deflated_eigenvalue: frozen.beta,
        kernel_indicator: frozen.indicator,
        quadratic_constant,
    })
}

/// Ordered boundary data on one mesh, interpolated piecewise linearly in `|H|`, `V`, and
/// edge lengths.
#[derive(Clone, Debug)]
pub struct DataFamily {
    members: Vec<(f64, BoundaryData)>,
}

impl DataFamily {
    pub fn new(members: Vec<(f64, BoundaryData)>) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::InvalidParameter("empty data family".into()));
        }
        for w in members.windows(2) {
            if !(w[1].0 > w[0].0) {
                return Err(Error::InvalidParameter(format!(
                    "family parameters must increase strictly ({} then {})",
                    w[0].0, w[1].0
                )));
            }
            if w[1].1.mesh != w[0].1.mesh {
                return Err(Error::MeshMismatch);
            }
        }
        Ok(DataFamily { members })
    }

    pub fn members(&self) -> &[(f64, BoundaryData)] {
        &self.members
    }

    pub fn range(&self) -> (f64, f64) {
        (self.members[0].0, self.members[self.members.len() - 1].0)
    }

    /// Interpolated data at `t` (clamped to the range).
    pub fn at(&self, t: f64) -> Result<BoundaryData> {
        let (lo, hi) = self.range();
        let t = t.clamp(lo, hi);
        let k = self
            .members
            .windows(2)
            .position(|w| t <= w[1].0)
            .unwrap_or(0);
        if self.members.len() == 1 {
            return Ok(self.members[0].1.clone());
        }
        let (t0, a) = (&self.members[k].0, &self.members[k].1);
        let (t1, b) = (&self.members[k + 1].0, &self.members[k + 1].1);
        let s = (t - t0) / (t1 - t0);
        if s == 0.0 {
            return Ok(a.clone());
        }
        if s == 1.0 {
            return Ok(b.clone());
        }
        let lerp = |x: f64, y: f64| x + s * (y - x);
        let mesh = &a.mesh;
        let lengths = a
            .metric
            .lengths()
            .iter()
            .zip(b.metric.lengths())
            .map(|(x, y)| lerp(*x, *y))
            .collect();
        let metric = MetricField::new(mesh, lengths)?;
        let h = a
            .norm_h
            .values
            .iter()
            .zip(&b.norm_h.values)
            .map(|(x, y)| lerp(*x, *y))
            .collect();
        let v = a
            .v
            .values
            .iter()
            .zip(&b.v.values)
            .map(|(x, y)| [lerp(x[0], y[0]), lerp(x[1], y[1])])
            .collect();
        BoundaryData::new(
            mesh.clone(),
            metric,
            ScalarField::named(mesh, "normH", h)?,
            VectorField::new(mesh, v)?,
            a.time_symmetric && b.time_symmetric,
        )
    }
}

/// Predictor-corrector continuation through the family parameters.
///
/// Every family parameter is reached; steps between them are halved on corrector failure
/// down to `continuation_min_step` of the range.
pub fn continuation_solve(
    family: &DataFamily,
    tau_start: &ScalarField,
    cfg: &SolverConfig,
) -> Result<Vec<SolveReport>> {
    let (lo, hi) = family.range();
    let min_step = cfg.continuation_min_step * (hi - lo).max(f64::MIN_POSITIVE);
    let first = family.at(lo)?;
    let mut rep = newton_solve(&first, tau_start, cfg)?;
    rep.t = Some(lo);
    let mut reports = vec![rep];
    let mut prev: Option<(f64, Vec<f64>)> = None;
    let mut cur = (lo, reports[0].tau.values.clone());
    let mut steps = 0;
    for &(target, _) in family.members().iter().skip(1) {
        let mut h = target - cur.0;
        while cur.0 < target {
            let t_new = if cur.0 + h >= target - 1e-14 * (hi - lo) { target } else { cur.0 + h };
            let pred: Vec<f64> = match &prev {
                Some((tp, tau_p)) => {
                    let f = (t_new - cur.0) / (cur.0 - tp);
                    cur.1.iter().zip(tau_p).map(|(c, p)| c + f * (c - p)).collect()
                }
                None => cur.1.clone(),
            };
            let data = family.at(t_new)?;
            let pred_field = ScalarField::named(&data.mesh, "tau", pred)?;
            match newton_solve(&data, &pred_field, cfg) {
                Ok(mut r) => {
                    steps += 1;
                    r.t = Some(t_new);
                    r.continuation_steps = steps;
                    prev = Some(cur.clone());
                    cur = (t_new, r.tau.values.clone());
                    reports.push(r);
                }
                Err(e @ Error::KernelObstruction { .. }) => return Err(e),
                Err(e) => {
                    debug!("corrector failed at t = {t_new}: {e}; halving step");
                    h = (t_new - cur.0) / 2.0;
                    if h < min_step {
                        return Err(Error::ContinuationStalled {
                            t: t_new,
                            last_t: cur.0,
                            tau: cur.1,
                        });
                    }
                }
            }
        }
    }
    Ok(reports)
}

/// `∮ R φ` of a residual field against a test function with the hat mass.
pub fn residual_pairing(eval: &ResidualEval, phi: &[f64]) -> f64 {
    dot(&eval.weak, phi)
}

/// Euclidean norm of the weak residual vector (no mass scaling).
pub fn weak_norm(eval: &ResidualEval) -> f64 {
    norm2(&eval.weak)
}
