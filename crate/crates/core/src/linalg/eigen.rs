//! Shift-invert block subspace iteration for the symmetric pencil `A x = λ B x`.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{dot, CsrMatrix, Cholesky};
use crate::error::{Error, Result};

/// Right-hand matrix of the pencil.
#[derive(Clone, Copy)]
pub enum MassOp<'a> {
    Diagonal(&'a [f64]),
    Sparse(&'a CsrMatrix),
}

impl MassOp<'_> {
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        match self {
            MassOp::Diagonal(d) => d.iter().zip(x).map(|(a, b)| a * b).collect(),
            MassOp::Sparse(m) => m.mul_vec(x),
        }
    }

    fn len(&self) -> usize {
        match self {
            MassOp::Diagonal(d) => d.len(),
            MassOp::Sparse(m) => m.nrows(),
        }
    }

    fn to_csr(self) -> CsrMatrix {
        match self {
            MassOp::Diagonal(d) => CsrMatrix::from_diagonal(d),
            MassOp::Sparse(m) => m.clone(),
        }
    }

    fn norm_inf(&self) -> f64 {
        match self {
            MassOp::Diagonal(d) => d.iter().fold(0.0, |m, v| m.max(v.abs())),
            MassOp::Sparse(m) => m.norm_inf(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct EigenOptions {
    /// Number of smallest eigenpairs wanted.
    pub count: usize,
    /// Initial shift; must lie below the wanted part of the spectrum.
    /// Lowered automatically while `A - shift B` fails to factor.
    pub shift: f64,
    /// Extra block vectors beyond `count`.
    pub guard: usize,
    pub tol: f64,
    /// Leading pairs that must meet `tol`; the rest are returned as Ritz
    /// estimates with their residuals. `None` requires all `count`.
    pub required: Option<usize>,
    pub max_iterations: usize,
    pub seed: u64,
}

impl Default for EigenOptions {
    fn default() -> Self {
        EigenOptions {
            count: 4,
            shift: -1.0,
            guard: 8,
            tol: 1e-10,
            required: None,
            max_iterations: 400,
            seed: 0x5eed,
        }
    }
}

#[derive(Clone, Debug)]
pub struct EigenPairs {
    /// Ascending eigenvalues.
    pub values: Vec<f64>,
    /// `B`-orthonormal eigenvectors.
    pub vectors: Vec<Vec<f64>>,
    pub residuals: Vec<f64>,
    pub iterations: usize,
    /// Shift actually used for the factorization.
    pub shift: f64,
}

/// Smallest eigenpairs of `A x = λ B x` on the `B`-orthogonal complement of `deflate`.
///
/// `A` symmetric, `B` symmetric positive definite.
pub fn smallest_eigenpairs(
    a: &CsrMatrix,
    b: MassOp<'_>,
    deflate: &[Vec<f64>],
    opts: &EigenOptions,
) -> Result<EigenPairs> {
    let n = a.nrows();
    assert_eq!(b.len(), n);
    let k = opts.count.min(n.saturating_sub(deflate.len()));
    if k == 0 {
        return Err(Error::InvalidParameter("no eigenpairs requested".into()));
    }
    let p = (k + opts.guard).min(n - deflate.len());

    let bcsr = b.to_csr();
    let scale = 1e-8 * a.norm_inf() / b.norm_inf().max(f64::MIN_POSITIVE);
    let mut shift = opts.shift;
    let mut factor = None;
    for attempt in 0..12 {
        match Cholesky::new(&a.add(1.0, &bcsr, -shift)) {
            Ok(f) => {
                factor = Some(f);
                break;
            }
            Err(_) => {
                let step = (opts.shift.abs() + scale) * 4f64.powi(attempt as i32);
                shift = opts.shift - step;
            }
        }
    }
    let mut factor = factor.ok_or_else(|| {
        Error::LinearSolve("could not find a shift below the spectrum".into())
    })?;

    let z = b_orthonormalize(deflate.to_vec(), &b, &[], None)?;

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let block: Vec<Vec<f64>> = (0..p)
        .map(|_| (0..n).map(|_| rng.random::<f64>() - 0.5).collect())
        .collect();
    let mut x = b_orthonormalize(block, &b, &z, Some(&mut rng))?;

    // Normwise backward error: |Ax - λBx| / ((|A| + |λ||B|) |x|).
    let anorm = a.norm_inf();
    let bnorm = b.norm_inf();
    let mut best_res = f64::INFINITY;
    for it in 1..=opts.max_iterations {
        let bx: Vec<Vec<f64>> = x.iter().map(|v| b.apply(v)).collect();
        let y = factor.solve_many(&bx);
        let y = b_orthonormalize(y, &b, &z, Some(&mut rng))?;

        let ay: Vec<Vec<f64>> = y.iter().map(|v| a.mul_vec(v)).collect();
        let m = y.len();
        let mut h = DMatrix::zeros(m, m);
        for i in 0..m {
            for j in i..m {
                let v = 0.5 * (dot(&y[i], &ay[j]) + dot(&y[j], &ay[i]));
                h[(i, j)] = v;
                h[(j, i)] = v;
            }
        }
        let eig = SymmetricEigen::new(h);
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));

        let mut new_x = Vec::with_capacity(m);
        let mut vals = Vec::with_capacity(m);
        for &c in &order {
            let mut v = vec![0.0; n];
            let mut av = vec![0.0; n];
            for r in 0..m {
                let s = eig.eigenvectors[(r, c)];
                super::axpy(s, &y[r], &mut v);
                super::axpy(s, &ay[r], &mut av);
            }
            vals.push(eig.eigenvalues[c]);
            new_x.push((v, av));
        }

        let mut residuals = Vec::with_capacity(k);
        for j in 0..k {
            let (v, av) = &new_x[j];
            let bv = b.apply(v);
            let lam = vals[j];
            let r: f64 = av
                .iter()
                .zip(&bv)
                .map(|(p, q)| (p - lam * q).powi(2))
                .sum::<f64>()
                .sqrt();
            let denom = (anorm + lam.abs() * bnorm) * super::norm2(v);
            residuals.push(r / denom.max(f64::MIN_POSITIVE));
        }
        let need = opts.required.unwrap_or(k).clamp(1, k);
        let worst = residuals[..need].iter().cloned().fold(0.0, f64::max);
        best_res = best_res.min(worst);
        x = new_x.into_iter().map(|(v, _)| v).collect();
        // Clustered spectra converge slowly from a distant shift; move it up
        // towards the Ritz values while the shifted matrix stays definite.
        if it % 25 == 0 && worst >= opts.tol {
            let cand = vals[0] - 0.5 * (vals[m - 1] - vals[0]);
            if cand > shift {
                if let Ok(f) = Cholesky::new(&a.add(1.0, &bcsr, -cand)) {
                    factor = f;
                    shift = cand;
                }
            }
        }
        if worst < opts.tol {
            x.truncate(k);
            vals.truncate(k);
            return Ok(EigenPairs {
                values: vals,
                vectors: x,
                residuals,
                iterations: it,
                shift,
            });
        }
    }
    Err(Error::EigenNonConvergence { residual: best_res })
}

/// Two-pass modified Gram-Schmidt in the `B` inner product, also orthogonal to `fixed`.
/// Vectors that collapse are replaced by random ones when `rng` is given, dropped otherwise.
fn b_orthonormalize(
    mut vs: Vec<Vec<f64>>,
    b: &MassOp<'_>,
    fixed: &[Vec<f64>],
    mut rng: Option<&mut ChaCha8Rng>,
) -> Result<Vec<Vec<f64>>> {
    let bfixed: Vec<Vec<f64>> = fixed.iter().map(|f| b.apply(f)).collect();
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(vs.len());
    let mut bout: Vec<Vec<f64>> = Vec::with_capacity(vs.len());
    for v in vs.iter_mut() {
        let mut tries = 0;
        loop {
            let n0 = dot(v, &b.apply(v)).sqrt();
            for _ in 0..2 {
                for (f, bf) in fixed.iter().zip(&bfixed) {
                    let c = dot(bf, v);
                    super::axpy(-c, f, v);
                }
                for (u, bu) in out.iter().zip(&bout) {
                    let c = dot(bu, v);
                    super::axpy(-c, u, v);
                }
            }
            let bv = b.apply(v);
            let nv = dot(v, &bv).sqrt();
            if nv > 1e-10 * n0 && nv > 0.0 && nv.is_finite() {
                let inv = 1.0 / nv;
                out.push(v.iter().map(|x| x * inv).collect());
                bout.push(bv.iter().map(|x| x * inv).collect());
                break;
            }
            tries += 1;
            match rng.as_deref_mut() {
                Some(r) if tries < 5 => {
                    for x in v.iter_mut() {
                        *x = r.random::<f64>() - 0.5;
                    }
                }
                _ => break,
            }
        }
    }
    Ok(out)
}

/// Groups consecutive eigenvalues that agree within `rel_tol` of the largest magnitude
/// in the group; returns the size of the group containing the first value.
pub fn leading_multiplicity(values: &[f64], rel_tol: f64) -> usize {
    leading_multiplicity_abs(values, rel_tol, 0.0)
}

/// As [`leading_multiplicity`] but values within `abs_tol` also group (for clusters near 0).
pub fn leading_multiplicity_abs(values: &[f64], rel_tol: f64, abs_tol: f64) -> usize {
    if values.is_empty() {
        return 0;
    }
    let base = values[0];
    values
        .iter()
        .take_while(|v| {
            let d = (**v - base).abs();
            d <= abs_tol || d <= rel_tol * base.abs().max(v.abs()).max(1e-300)
        })
        .count()
}
