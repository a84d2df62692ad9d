//! Quadrature nodes and special functions.

use std::f64::consts::PI;

/// Gauss-Legendre nodes on [-1, 1] in descending order, with weights.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            if n == 1 {
                p1 = z;
                p0 = 1.0;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    (x, w)
}

/// Exponential integral E1(x) for x > 0.
pub fn expint_e1(x: f64) -> f64 {
    const EULER: f64 = 0.577_215_664_901_532_9;
    if x <= 0.0 {
        return f64::INFINITY;
    }
    if x < 1.0 {
        let mut sum = 0.0;
        let mut term = 1.0;
        for k in 1..200 {
            term *= -x / k as f64;
            let add = -term / k as f64;
            sum += add;
            if add.abs() < 1e-18 * sum.abs() {
                break;
            }
        }
        -EULER - x.ln() + sum
    } else {
        // Lentz continued fraction
        let tiny = 1e-300;
        let mut b = x + 1.0;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..500 {
            let an = -((i * i) as f64);
            b += 2.0;
            d = 1.0 / (an * d + b);
            c = b + an / c;
            let del = c * d;
            h *= del;
            if (del - 1.0).abs() < 1e-16 {
                break;
            }
        }
        h * (-x).exp()
    }
}

/// Normalized associated Legendre functions with ∫_{-1}^{1} P̄² dx = 1,
/// returned as `out[m][l - m]` for 0 ≤ m ≤ l ≤ lmax.
pub fn legendre_normalized(lmax: usize, x: f64) -> Vec<Vec<f64>> {
    let s = (1.0 - x * x).max(0.0).sqrt();
    let mut out: Vec<Vec<f64>> = (0..=lmax).map(|m| vec![0.0; lmax + 1 - m]).collect();
    let mut pmm = std::f64::consts::FRAC_1_SQRT_2;
    for m in 0..=lmax {
        if m > 0 {
            pmm *= -((2 * m + 1) as f64 / (2 * m) as f64).sqrt() * s;
        }
        let col = &mut out[m];
        col[0] = pmm;
        if m < lmax {
            col[1] = ((2 * m + 3) as f64).sqrt() * x * pmm;
        }
        for l in m + 2..=lmax {
            let lf = l as f64;
            let mf = m as f64;
            let a = ((4.0 * lf * lf - 1.0) / (lf * lf - mf * mf)).sqrt();
            let b = (((lf - 1.0) * (lf - 1.0) - mf * mf) / (4.0 * (lf - 1.0) * (lf - 1.0) - 1.0))
                .sqrt();
            col[l - m] = a * (x * col[l - m - 1] - b * col[l - m - 2]);
        }
    }
    out
}

/// θ-derivatives of the normalized associated Legendre functions at x = cos θ.
pub fn legendre_normalized_dtheta(p: &[Vec<f64>], x: f64) -> Vec<Vec<f64>> {
    let s = (1.0 - x * x).max(1e-300).sqrt();
    let lmax = p.len() - 1;
    let mut out: Vec<Vec<f64>> = (0..=lmax).map(|m| vec![0.0; lmax + 1 - m]).collect();
    for m in 0..=lmax {
        for l in m..=lmax {
            let lf = l as f64;
            let mf = m as f64;
            let prev = if l > m {
                ((2.0 * lf + 1.0) * (lf * lf - mf * mf) / (2.0 * lf - 1.0)).sqrt() * p[m][l - m - 1]
            } else {
                0.0
            };
            out[m][l - m] = (lf * x * p[m][l - m] - prev) / s;
        }
    }
    out
}

/// C^∞ transition equal to 0 for x ≤ 0 and 1 for x ≥ 1, with two derivatives.
pub fn smooth_step(x: f64) -> (f64, f64, f64) {
    if x <= 0.0 {
        return (0.0, 0.0, 0.0);
    }
    if x >= 1.0 {
        return (1.0, 0.0, 0.0);
    }
    let psi = |t: f64| -> (f64, f64, f64) {
        let e = (-1.0 / t).exp();
        (e, e / (t * t), e * (1.0 / t.powi(4) - 2.0 / t.powi(3)))
    };
    let (a, a1, a2) = psi(x);
    let (b0, b1, b2) = psi(1.0 - x);
    let (b, b1, b2) = (b0, -b1, b2);
    let d = a + b;
    let d1 = a1 + b1;
    let num = a1 * b - a * b1;
    let num1 = a2 * b - a * b2;
    let s = a / d;
    let s1 = num / (d * d);
    let s2 = (num1 * d - 2.0 * num * d1) / (d * d * d);
    (s, s1, s2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_integrates_polynomials() {
        let (x, w) = gauss_legendre(9);
        for k in 0..=17 {
            let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(k)).sum();
            let exact = if k % 2 == 1 {
                0.0
            } else {
                2.0 / (k as f64 + 1.0)
            };
            assert!((q - exact).abs() < 1e-14, "degree {k}");
        }
        assert!(x.windows(2).all(|p| p[0] > p[1]));
    }

    #[test]
    fn e1_reference_values() {
        // tabulated values
        assert!((expint_e1(0.5) - 0.559_773_594_776_160_8).abs() < 1e-14);
        assert!((expint_e1(1.0) - 0.219_383_934_395_520_3).abs() < 1e-14);
        assert!((expint_e1(3.0) - 0.013_048_381_094_197_04).abs() < 1e-15);
    }

    #[test]
    fn legendre_orthonormal() {
        let lmax = 12;
        let (x, w) = gauss_legendre(lmax + 1);
        let tabs: Vec<_> = x.iter().map(|&x| legendre_normalized(lmax, x)).collect();
        for m in 0..=lmax {
            for l in m..=lmax {
                for k in m..=lmax {
                    let s: f64 = (0..x.len())
                        .map(|j| w[j] * tabs[j][m][l - m] * tabs[j][m][k - m])
                        .sum();
                    let e = if l == k { 1.0 } else { 0.0 };
                    assert!((s - e).abs() < 1e-12, "m={m} l={l} k={k}: {s}");
                }
            }
        }
    }

    #[test]
    fn legendre_dtheta_matches_difference() {
        let lmax = 10;
        let th: f64 = 0.7;
        let h = 1e-6;
        let p = legendre_normalized(lmax, th.cos());
        let d = legendre_normalized_dtheta(&p, th.cos());
        let pp = legendre_normalized(lmax, (th + h).cos());
        let pm = legendre_normalized(lmax, (th - h).cos());
        for m in 0..=lmax {
            for l in m..=lmax {
                let fd = (pp[m][l - m] - pm[m][l - m]) / (2.0 * h);
                assert!((fd - d[m][l - m]).abs() < 1e-7, "l={l} m={m}");
            }
        }
    }

    #[test]
    fn smooth_step_derivatives() {
        let h = 1e-5;
        for &x in &[0.2, 0.5, 0.77] {
            let (s, s1, s2) = smooth_step(x);
            let (sp, s1p, _) = smooth_step(x + h);
            let (sm, s1m, _) = smooth_step(x - h);
            assert!(((sp - sm) / (2.0 * h) - s1).abs() < 1e-8);
            assert!(((s1p - s1m) / (2.0 * h) - s2).abs() < 1e-6);
            assert!((sp - 2.0 * s + sm) / (h * h) - s2 < 1e-3);
        }
    }
}
