//! Matrix-free Krylov solvers with a caller-supplied inner product.

pub fn dot_w(w: &[f64], a: &[f64], b: &[f64]) -> f64 {
    w.iter().zip(a).zip(b).map(|((w, a), b)| w * a * b).sum()
}

pub fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (y, x) in y.iter_mut().zip(x) {
        *y += a * x;
    }
}

pub fn sup_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

#[derive(Debug, Clone, Copy)]
pub struct KrylovStats {
    pub iterations: usize,
    pub relative_residual: f64,
    pub converged: bool,
}

/// Preconditioned conjugate gradients for an operator that is symmetric
/// positive definite with respect to `inner`.
pub fn pcg<A, M, I>(
    apply: A,
    precond: M,
    inner: I,
    rhs: &[f64],
    x: &mut [f64],
    rtol: f64,
    max_iter: usize,
) -> KrylovStats
where
    A: Fn(&[f64]) -> Vec<f64>,
    M: Fn(&[f64]) -> Vec<f64>,
    I: Fn(&[f64], &[f64]) -> f64,
{
    let bnorm = inner(rhs, rhs).sqrt();
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return KrylovStats {
            iterations: 0,
            relative_residual: 0.0,
            converged: true,
        };
    }
    let ax = apply(x);
    let mut r: Vec<f64> = rhs.iter().zip(&ax).map(|(b, a)| b - a).collect();
    let mut z = precond(&r);
    let mut p = z.clone();
    let mut rz = inner(&r, &z);
    let mut rel = inner(&r, &r).sqrt() / bnorm;
    for it in 0..max_iter {
        if rel <= rtol {
            return KrylovStats {
                iterations: it,
                relative_residual: rel,
                converged: true,
            };
        }
        let ap = apply(&p);
        let pap = inner(&p, &ap);
        if pap <= 0.0 || !pap.is_finite() {
            return KrylovStats {
                iterations: it,
                relative_residual: rel,
                converged: false,
            };
        }
        let a = rz / pap;
        axpy(x, a, &p);
        axpy(&mut r, -a, &ap);
        rel = inner(&r, &r).sqrt() / bnorm;
        z = precond(&r);
        let rz_new = inner(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for (p, z) in p.iter_mut().zip(&z) {
            *p = z + beta * *p;
        }
    }
    KrylovStats {
        iterations: max_iter,
        relative_residual: rel,
        converged: rel <= rtol,
    }
}

/// Restarted GMRES with right preconditioning.
#[allow(clippy::too_many_arguments)]
pub fn gmres<A, M, I>(
    apply: A,
    precond: M,
    inner: I,
    rhs: &[f64],
    x: &mut [f64],
    rtol: f64,
    restart: usize,
    max_iter: usize,
) -> KrylovStats
where
    A: Fn(&[f64]) -> Vec<f64>,
    M: Fn(&[f64]) -> Vec<f64>,
    I: Fn(&[f64], &[f64]) -> f64,
{
    let n = rhs.len();
    let bnorm = inner(rhs, rhs).sqrt();
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return KrylovStats {
            iterations: 0,
            relative_residual: 0.0,
            converged: true,
        };
    }
    let mut total = 0;
    let mut rel;
    loop {
        let ax = apply(x);
        let r: Vec<f64> = rhs.iter().zip(&ax).map(|(b, a)| b - a).collect();
        let beta = inner(&r, &r).sqrt();
        rel = beta / bnorm;
        if rel <= rtol || total >= max_iter {
            break;
        }
        let mut basis: Vec<Vec<f64>> = vec![r.iter().map(|v| v / beta).collect()];
        let mut zs: Vec<Vec<f64>> = Vec::new();
        let mut h = vec![vec![0.0; restart]; restart + 1];
        let mut cs = vec![0.0; restart];
        let mut sn = vec![0.0; restart];
        let mut g = vec![0.0; restart + 1];
        g[0] = beta;
        let mut k_used = 0;
        for k in 0..restart {
            let z = precond(&basis[k]);
            let mut v = apply(&z);
            zs.push(z);
            // modified Gram-Schmidt, twice for stability
            for _ in 0..2 {
                for (j, b) in basis.iter().enumerate() {
                    let c = inner(&v, b);
                    h[j][k] += c;
                    axpy(&mut v, -c, b);
                }
            }
            let hn = inner(&v, &v).sqrt();
            h[k + 1][k] = hn;
            for j in 0..k {
                let t = cs[j] * h[j][k] + sn[j] * h[j + 1][k];
                h[j + 1][k] = -sn[j] * h[j][k] + cs[j] * h[j + 1][k];
                h[j][k] = t;
            }
            let d = h[k][k].hypot(h[k + 1][k]);
            cs[k] = if d == 0.0 { 1.0 } else { h[k][k] / d };
            sn[k] = if d == 0.0 { 0.0 } else { h[k + 1][k] / d };
            h[k][k] = d;
            h[k + 1][k] = 0.0;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            k_used = k + 1;
            total += 1;
            rel = g[k + 1].abs() / bnorm;
            if rel <= rtol || hn == 0.0 || total >= max_iter {
                break;
            }
            basis.push(v.iter().map(|x| x / hn).collect());
        }
        let mut y = vec![0.0; k_used];
        for i in (0..k_used).rev() {
            let mut s = g[i];
            for j in i + 1..k_used {
                s -= h[i][j] * y[j];
            }
            y[i] = s / h[i][i];
        }
        let mut dx = vec![0.0; n];
        for (yi, z) in y.iter().zip(&zs) {
            axpy(&mut dx, *yi, z);
        }
        axpy(x, 1.0, &dx);
        if rel <= rtol || total >= max_iter {
            let ax = apply(x);
            let r: Vec<f64> = rhs.iter().zip(&ax).map(|(b, a)| b - a).collect();
            rel = inner(&r, &r).sqrt() / bnorm;
            break;
        }
    }
    KrylovStats {
        iterations: total,
        relative_residual: rel,
        converged: rel <= rtol * 10.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spd(n: usize) -> Vec<Vec<f64>> {
        let mut a = vec![vec![0.0; n]; n];
        for i in 0..n {
            a[i][i] = 4.0 + i as f64 * 0.1;
            if i + 1 < n {
                a[i][i + 1] = -1.0;
                a[i + 1][i] = -1.0;
            }
        }
        a
    }

    fn matvec(a: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
        a.iter()
            .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    #[test]
    fn pcg_solves_tridiagonal() {
        let a = spd(40);
        let b: Vec<f64> = (0..40).map(|i| (i as f64).sin()).collect();
        let mut x = vec![0.0; 40];
        let st = pcg(
            |v| matvec(&a, v),
            |r| r.to_vec(),
            |u, v| dot_w(&[1.0; 40], u, v),
            &b,
            &mut x,
            1e-13,
            200,
        );
        assert!(st.converged);
        let r = matvec(&a, &x);
        for (r, b) in r.iter().zip(&b) {
            assert!((r - b).abs() < 1e-11);
        }
    }

    #[test]
    fn gmres_solves_nonsymmetric() {
        let mut a = spd(30);
        a[0][5] = 0.7;
        a[9][2] = -1.3;
        let b: Vec<f64> = (0..30).map(|i| 1.0 + i as f64).collect();
        let mut x = vec![0.0; 30];
        let st = gmres(
            |v| matvec(&a, v),
            |r| r.to_vec(),
            |u, v| u.iter().zip(v).map(|(a, b)| a * b).sum(),
            &b,
            &mut x,
            1e-12,
            8,
            400,
        );
        assert!(st.converged, "{st:?}");
        let r = matvec(&a, &x);
        for (r, b) in r.iter().zip(&b) {
            assert!((r - b).abs() < 1e-9);
        }
    }
}
