use super::{dot, norm2};
use crate::error::Result;

#[derive(Clone, Debug)]
pub struct GmresOutcome {
    pub x: Vec<f64>,
    pub relative_residual: f64,
    pub iterations: usize,
}

/// Right-preconditioned restarted GMRES for `A x = b`, starting from zero.
pub fn gmres<A, P>(
    mut apply: A,
    mut precond: P,
    b: &[f64],
    rel_tol: f64,
    restart: usize,
    max_iterations: usize,
) -> Result<GmresOutcome>
where
    A: FnMut(&[f64]) -> Result<Vec<f64>>,
    P: FnMut(&[f64]) -> Vec<f64>,
{
    let n = b.len();
    let bnorm = norm2(b);
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok(GmresOutcome {
            x,
            relative_residual: 0.0,
            iterations: 0,
        });
    }
    let mut total = 0;
    let mut r = b.to_vec();
    let mut rel = 1.0;
    while total < max_iterations {
        let beta = norm2(&r);
        rel = beta / bnorm;
        if rel <= rel_tol {
            break;
        }
        let m = restart.min(max_iterations - total).max(1);
        let mut v: Vec<Vec<f64>> = vec![r.iter().map(|x| x / beta).collect()];
        let mut z: Vec<Vec<f64>> = Vec::with_capacity(m);
        let mut h = vec![vec![0.0; m]; m + 1];
        let mut cs = vec![0.0; m];
        let mut sn = vec![0.0; m];
        let mut g = vec![0.0; m + 1];
        g[0] = beta;
        let mut used = 0;
        for j in 0..m {
            let zj = precond(&v[j]);
            let mut w = apply(&zj)?;
            z.push(zj);
            for _ in 0..2 {
                for i in 0..=j {
                    let c = dot(&w, &v[i]);
                    h[i][j] += c;
                    super::axpy(-c, &v[i], &mut w);
                }
            }
            let hn = norm2(&w);
            h[j + 1][j] = hn;
            for i in 0..j {
                let t = cs[i] * h[i][j] + sn[i] * h[i + 1][j];
                h[i + 1][j] = -sn[i] * h[i][j] + cs[i] * h[i + 1][j];
                h[i][j] = t;
            }
            let d = (h[j][j].powi(2) + h[j + 1][j].powi(2)).sqrt();
            if d == 0.0 {
                used = j;
                break;
            }
            cs[j] = h[j][j] / d;
            sn[j] = h[j + 1][j] / d;
            h[j][j] = d;
            h[j + 1][j] = 0.0;
            g[j + 1] = -sn[j] * g[j];
            g[j] *= cs[j];
            used = j + 1;
            total += 1;
            rel = g[j + 1].abs() / bnorm;
            if rel <= rel_tol || hn == 0.0 {
                break;
            }
            v.push(w.iter().map(|x| x / hn).collect());
        }
        let mut y = vec![0.0; used];
        for i in (0..used).rev() {
            let mut s = g[i];
            for k in i + 1..used {
                s -= h[i][k] * y[k];
            }
            y[i] = s / h[i][i];
        }
        for (i, yi) in y.iter().enumerate() {
            super::axpy(*yi, &z[i], &mut x);
        }
        let ax = apply(&x)?;
        r = b.iter().zip(&ax).map(|(p, q)| p - q).collect();
        rel = norm2(&r) / bnorm;
        if rel <= rel_tol || used == 0 {
            break;
        }
    }
    Ok(GmresOutcome {
        x,
        relative_residual: rel,
        iterations: total,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::CsrMatrix;

    #[test]
    fn solves_nonsymmetric_system() {
        let n = 40;
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 4.0));
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
                t.push((i + 1, i, -2.0));
            }
        }
        let a = CsrMatrix::from_triplets(n, n, &t);
        let b: Vec<f64> = (0..n).map(|i| (i as f64 * 0.3).cos()).collect();
        let out = gmres(|x| Ok(a.mul_vec(x)), |x| x.to_vec(), &b, 1e-12, 15, 500).unwrap();
        assert!(out.relative_residual < 1e-12);
        let r = a.mul_vec(&out.x);
        for (ri, bi) in r.iter().zip(&b) {
            assert!((ri - bi).abs() < 1e-10);
        }
    }
}
