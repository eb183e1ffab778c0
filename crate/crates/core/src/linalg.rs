//! Matrix-free Krylov solver and small dense helpers.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Right-preconditioned restarted GMRES for `A x = b` starting from zero.
/// Stops once the Euclidean residual drops below `tol`.
pub(crate) fn gmres(
    mut apply: impl FnMut(&[f64]) -> Vec<f64>,
    mut precond: impl FnMut(&[f64]) -> Vec<f64>,
    b: &[f64],
    tol: f64,
    restart: usize,
    max_iter: usize,
) -> Vec<f64> {
    let n = b.len();
    let mut x = vec![0.0; n];
    let mut total = 0;
    let mut r = b.to_vec();
    let mut beta = norm(&r);
    while beta > tol && total < max_iter {
        let mut basis: Vec<Vec<f64>> = vec![r.iter().map(|v| v / beta).collect()];
        let mut hess = vec![vec![0.0; restart]; restart + 1];
        let mut cs = vec![0.0; restart];
        let mut sn = vec![0.0; restart];
        let mut g = vec![0.0; restart + 1];
        g[0] = beta;
        let mut k = 0;
        while k < restart && total < max_iter {
            let z = precond(&basis[k]);
            let mut w = apply(&z);
            for (j, v) in basis.iter().enumerate() {
                let hjk = dot(&w, v);
                hess[j][k] = hjk;
                w.iter_mut().zip(v).for_each(|(a, b)| *a -= hjk * b);
            }
            let wn = norm(&w);
            hess[k + 1][k] = wn;
            for j in 0..k {
                let t = cs[j] * hess[j][k] + sn[j] * hess[j + 1][k];
                hess[j + 1][k] = -sn[j] * hess[j][k] + cs[j] * hess[j + 1][k];
                hess[j][k] = t;
            }
            let denom = hess[k][k].hypot(hess[k + 1][k]);
            if denom == 0.0 {
                break;
            }
            cs[k] = hess[k][k] / denom;
            sn[k] = hess[k + 1][k] / denom;
            hess[k][k] = denom;
            hess[k + 1][k] = 0.0;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            total += 1;
            k += 1;
            if g[k].abs() <= tol || wn == 0.0 {
                break;
            }
            basis.push(w.iter().map(|v| v / wn).collect());
        }
        let mut y = vec![0.0; k];
        for i in (0..k).rev() {
            let s: f64 = (i + 1..k).map(|j| hess[i][j] * y[j]).sum();
            y[i] = (g[i] - s) / hess[i][i];
        }
        let mut update = vec![0.0; n];
        for (j, yj) in y.iter().enumerate() {
            update.iter_mut().zip(&basis[j]).for_each(|(u, v)| *u += yj * v);
        }
        let dx = precond(&update);
        x.iter_mut().zip(&dx).for_each(|(a, b)| *a += b);
        let ax = apply(&x);
        r = b.iter().zip(&ax).map(|(a, c)| a - c).collect();
        let new_beta = norm(&r);
        if k == 0 || new_beta >= beta {
            break;
        }
        beta = new_beta;
    }
    x
}

/// Ratio of extreme singular values.
pub(crate) fn condition_number(m: &DMatrix<f64>) -> f64 {
    let sv = m.clone().singular_values();
    let max = sv.iter().cloned().fold(0.0, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Dense solve that refuses systems with condition estimate above `max_cond`.
pub(crate) fn solve_checked(m: DMatrix<f64>, rhs: DVector<f64>, max_cond: f64) -> Result<DVector<f64>> {
    let cond = condition_number(&m);
    if !(cond <= max_cond) {
        return Err(Error::SingularSystem(cond));
    }
    m.lu().solve(&rhs).ok_or(Error::SingularSystem(cond))
}
