use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::*;
use crate::testutil::{max_abs_diff, rng, smooth_field};

fn square(v: f64, n: usize) -> BackgroundGeometry {
    BackgroundGeometry::build_torus(Complex64::new(0.0, 1.0), v, n).unwrap()
}

fn dense_operator(geom: &BackgroundGeometry) -> DMatrix<f64> {
    let n = geom.len();
    let mut m = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        let col = geom.laplacian(&e);
        for i in 0..n {
            m[(i, j)] = col[i];
        }
    }
    m
}

#[test]
fn rejects_bad_parameters() {
    assert!(BackgroundGeometry::build_torus(Complex64::new(0.0, 1.0), 1.0, 8).is_err());
    assert!(BackgroundGeometry::build_torus(Complex64::new(1.0, 0.0), 1.0, 32).is_err());
    assert!(BackgroundGeometry::build_torus(Complex64::new(0.0, 1.0), -1.0, 32).is_err());
    assert!(BackgroundGeometry::build_sphere(4.0 * PI, 7).is_err());
}

#[test]
fn torus_weights() {
    let g = square(1.0, 64);
    assert!(g.area_weights.iter().all(|w| *w == 1.0 / 4096.0));
    let g = square(30.0, 128);
    assert!((g.area_weights.iter().sum::<f64>() - 30.0).abs() < 1e-12);
    assert_eq!(g.mean_curvature, 0.0);
}

#[test]
fn torus_lowest_eigenvalue_against_finite_differences() {
    let g = square(1.0, 64);
    let t = g.torus().unwrap();
    assert!((t.eigenvalues()[1] - 4.0 * PI * PI).abs() < 1e-9);
    // 5-point Laplacian on the 16×16 periodic grid
    let n = 16;
    let h = 1.0 / n as f64;
    let mut a = DMatrix::<f64>::zeros(n * n, n * n);
    for i in 0..n {
        for j in 0..n {
            let k = i * n + j;
            a[(k, k)] = 4.0 / (h * h);
            for (di, dj) in [(1, 0), (n - 1, 0), (0, 1), (0, n - 1)] {
                let kk = ((i + di) % n) * n + (j + dj) % n;
                a[(k, kk)] -= 1.0 / (h * h);
            }
        }
    }
    let mut ev: Vec<f64> = a.symmetric_eigen().eigenvalues.iter().cloned().collect();
    ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let fd = ev[1];
    assert!(
        (fd - 4.0 * PI * PI).abs() / (4.0 * PI * PI) < 0.02,
        "fd {fd}"
    );
}

#[test]
fn skewed_torus_laplacian_self_adjoint() {
    let g = BackgroundGeometry::build_torus(Complex64::new(0.31, 0.87), 2.5, 16).unwrap();
    let m = dense_operator(&g);
    let w = &g.area_weights;
    let mut asym = 0.0_f64;
    let scale = m.amax();
    for i in 0..g.len() {
        for j in 0..g.len() {
            asym = asym.max((w[i] * m[(i, j)] - w[j] * m[(j, i)]).abs() / (w[i] * scale));
        }
    }
    assert!(asym < 1e-12, "asymmetry {asym}");
    let ev = m.symmetric_eigen().eigenvalues;
    assert!(ev.iter().all(|l| *l > -1e-9));
}

#[test]
fn sphere_basics() {
    let g = BackgroundGeometry::build_sphere(4.0 * PI, 32).unwrap();
    let s = g.sphere().unwrap();
    let z: Vec<f64> = (0..g.len()).map(|i| s.x[i / s.nlon]).collect();
    let lz = g.laplacian(&z);
    assert!(max_abs_diff(&lz, &z.iter().map(|v| 2.0 * v).collect::<Vec<_>>()) < 1e-10);
    let g = BackgroundGeometry::build_sphere(50.0, 64).unwrap();
    assert!((g.integrate(&g.constant(1.0)) - 50.0).abs() < 1e-10);
    let g = BackgroundGeometry::build_sphere(2.0 * PI, 32).unwrap();
    assert!((g.mean_curvature - 2.0).abs() < 1e-15);
    assert!(
        (g.integrate(&g.constant(g.mean_curvature)) - 2.0 * PI * g.euler_characteristic()).abs()
            < 1e-12
    );
}

#[test]
fn sphere_laplacian_self_adjoint_and_nonnegative() {
    let g = BackgroundGeometry::build_sphere(3.0, 8).unwrap();
    let m = dense_operator(&g);
    let w = &g.area_weights;
    let scale = m.amax();
    for i in 0..g.len() {
        for j in 0..g.len() {
            assert!((w[i] * m[(i, j)] - w[j] * m[(j, i)]).abs() < 1e-12 * w[i] * scale);
        }
    }
    let mut r = rng(3);
    let u = smooth_field(&g, &mut r, 8, 1.0);
    assert!(g.inner(&u, &g.laplacian(&u)) >= 0.0);
}

#[test]
fn laplacian_examples() {
    let mut r = rng(1);
    for g in [
        square(2.0, 32),
        BackgroundGeometry::build_sphere(7.0, 24).unwrap(),
    ] {
        let c = g.laplacian(&g.constant(3.5));
        assert!(c.iter().all(|v| v.abs() < 1e-10));
        let u = smooth_field(&g, &mut r, 6, 1.0);
        assert!(g.integrate(&g.laplacian(&u)).abs() < 1e-10);
    }
    let g = square(1.0, 32);
    let t = g.torus().unwrap();
    let wave: Vec<f64> = (0..g.len())
        .map(|i| {
            let p = t.node_position(i);
            (2.0 * PI * (2.0 * p[0] - p[1])).cos()
        })
        .collect();
    let lw = g.laplacian(&wave);
    let lam = 4.0 * PI * PI * 5.0;
    assert!(max_abs_diff(&lw, &wave.iter().map(|v| lam * v).collect::<Vec<_>>()) < 1e-9);
}

#[test]
fn poisson_round_trip() {
    let mut r = rng(2);
    for g in [
        square(3.0, 32),
        BackgroundGeometry::build_sphere(5.0, 24).unwrap(),
    ] {
        assert!(g
            .poisson_solve(&g.constant(0.0))
            .unwrap()
            .iter()
            .all(|v| *v == 0.0));
        let u = smooth_field(&g, &mut r, 6, 1.0);
        let m = g.mean(&u);
        let u: Vec<f64> = u.iter().map(|v| v - m).collect();
        let rhs = g.laplacian(&u);
        let back = g.poisson_solve(&rhs).unwrap();
        assert!(max_abs_diff(&back, &u) < 1e-10 * crate::linalg::sup_norm(&u));
        let lb = g.laplacian(&back);
        assert!(max_abs_diff(&lb, &rhs) < 1e-10 * crate::linalg::sup_norm(&rhs));
        assert!(matches!(
            g.poisson_solve(&g.constant(1.0)),
            Err(Error::NotMeanZero { .. })
        ));
    }
}

#[test]
fn helmholtz_examples() {
    for g in [
        square(3.0, 32),
        BackgroundGeometry::build_sphere(5.0, 16).unwrap(),
    ] {
        let u = g
            .helmholtz_solve(&g.constant(1.0), &g.constant(1.0))
            .unwrap();
        assert!(u.iter().all(|v| (v - 1.0).abs() < 1e-12));
        assert!(g
            .helmholtz_solve(&g.constant(-1.0), &g.constant(1.0))
            .is_err());
        assert!(g
            .helmholtz_solve(&g.constant(0.0), &g.constant(1.0))
            .is_err());
    }
    let g = BackgroundGeometry::build_sphere(4.0 * PI, 16).unwrap();
    let s = g.sphere().unwrap();
    let z: Vec<f64> = (0..g.len()).map(|i| s.x[i / s.nlon]).collect();
    let u = g.helmholtz_solve(&g.constant(1.0), &z).unwrap();
    assert!(max_abs_diff(&u, &z.iter().map(|v| v / 3.0).collect::<Vec<_>>()) < 1e-12);
}

#[test]
fn helmholtz_matches_dense_solve() {
    let g = BackgroundGeometry::build_torus(Complex64::new(0.2, 1.1), 4.0, 16).unwrap();
    let mut r = rng(5);
    let v: Vec<f64> = smooth_field(&g, &mut r, 3, 1.0)
        .iter()
        .map(|x| x * x + 0.05)
        .collect();
    let rhs = smooth_field(&g, &mut r, 5, 1.0);
    let u = g.helmholtz_solve(&v, &rhs).unwrap();
    let mut m = dense_operator(&g);
    for i in 0..g.len() {
        m[(i, i)] += v[i];
    }
    let x = m.lu().solve(&DVector::from_vec(rhs.clone())).unwrap();
    assert!(max_abs_diff(&u, x.as_slice()) < 1e-8);
}

#[test]
fn green_torus_normalization_and_symmetry() {
    let g = BackgroundGeometry::build_torus(Complex64::new(0.0, 1.0), 2.0, 32).unwrap();
    let p = g.node_point(5 * 32 + 3);
    let q = g.node_point(21 * 32 + 19);
    let gp = GreenFunction::new(&g, p);
    let gq = GreenFunction::new(&g, q);
    assert!(g.integrate(gp.values()).abs() < 1e-10);
    let a = gp.values()[21 * 32 + 19];
    let b = gq.values()[5 * 32 + 3];
    assert!((a - b).abs() < 1e-8, "{a} vs {b}");
    // off-grid evaluation agrees with the stored values at nodes
    let x = g.node_point(7 * 32 + 30);
    assert!((gp.evaluate(&g, &x) - gp.values()[7 * 32 + 30]).abs() < 1e-10);
}

#[test]
fn green_torus_log_singularity() {
    let g = BackgroundGeometry::build_torus(Complex64::new(0.3, 0.9), 1.5, 64).unwrap();
    let p = SurfacePoint::Plane([0.3131, 0.4242]);
    let gp = GreenFunction::new(&g, p);
    let mut prev: Option<f64> = None;
    for r in [1e-2, 1e-3, 1e-4] {
        let x = SurfacePoint::Plane([0.3131 + r * 0.6, 0.4242 + r * 0.8]);
        let reg = gp.evaluate(&g, &x) + (r.ln()) / (2.0 * PI);
        if let Some(pr) = prev {
            assert!((reg - pr).abs() < 1e-3, "{reg} vs {pr}");
        }
        prev = Some(reg);
    }
}

#[test]
fn green_reproduces_poisson() {
    let mut r = rng(11);
    let cases = [
        (
            BackgroundGeometry::build_torus(Complex64::new(0.1, 1.2), 3.0, 32).unwrap(),
            SurfacePoint::Plane([0.41, 0.77]),
        ),
        (
            BackgroundGeometry::build_sphere(6.0, 24).unwrap(),
            SurfacePoint::chart(Complex64::new(0.3, -0.7)),
        ),
    ];
    for (g, p) in cases {
        let h = smooth_field(&g, &mut r, 5, 1.0);
        let m = g.mean(&h);
        let h: Vec<f64> = h.iter().map(|v| v - m).collect();
        let u = g.poisson_solve(&h).unwrap();
        let up = g.evaluate(&g.interpolant(&u), &p);
        let gp = GreenFunction::new(&g, p);
        let via_green = gp.integrate_against(&g, &h);
        assert!((up - via_green).abs() < 1e-8, "{up} vs {via_green}");
    }
}

#[test]
fn green_sphere_matches_closed_form() {
    let g = BackgroundGeometry::build_sphere(4.0 * PI, 64).unwrap();
    for z in [Complex64::new(0.0, 0.0), Complex64::new(0.37, 1.3)] {
        let p = SurfacePoint::chart(z);
        let gp = GreenFunction::new(&g, p);
        let pv = match p {
            SurfacePoint::Sphere(v) => v,
            _ => unreachable!(),
        };
        let mut exact: Vec<f64> = (0..g.len())
            .map(|i| match g.node_point(i) {
                SurfacePoint::Sphere(x) => {
                    let c = 1.0 - (pv[0] * x[0] + pv[1] * x[1] + pv[2] * x[2]);
                    -(c.max(1e-300)).ln() / (4.0 * PI)
                }
                _ => unreachable!(),
            })
            .collect();
        let m = g.mean(&exact);
        exact.iter_mut().for_each(|v| *v -= m);
        let err = max_abs_diff(gp.values(), &exact);
        assert!(err < 1e-4, "max error {err}");
    }
}

#[test]
fn conformal_curvature_gauss_bonnet() {
    let mut r = rng(7);
    for g in [
        square(3.0, 32),
        BackgroundGeometry::build_sphere(9.0, 24).unwrap(),
    ] {
        let s = g.conformal_curvature(&g.constant(0.0)).unwrap();
        assert!(s.iter().all(|v| (v - g.mean_curvature).abs() < 1e-12));
        for _ in 0..5 {
            let k = smooth_field(&g, &mut r, 4, 0.05 * g.volume);
            let lk = g.laplacian(&k);
            let sup = crate::linalg::sup_norm(&lk);
            let k: Vec<f64> = k.iter().map(|v| v * 0.6 / sup).collect();
            let w = g.conformal_factor(&k).unwrap();
            let s = g.conformal_curvature(&k).unwrap();
            let total: f64 = g
                .area_weights
                .iter()
                .zip(&s)
                .zip(&w)
                .map(|((a, s), w)| a * s * w)
                .sum();
            assert!((total - 2.0 * PI * g.euler_characteristic()).abs() < 1e-6);
        }
        let k: Vec<f64> = smooth_field(&g, &mut r, 4, 1.0);
        let lk = g.laplacian(&k);
        let sup = crate::linalg::sup_norm(&lk);
        let bad: Vec<f64> = k.iter().map(|v| v * 3.0 / sup).collect();
        assert!(matches!(
            g.conformal_curvature(&bad),
            Err(Error::NonPositiveConformalFactor { .. })
        ));
    }
}

#[test]
fn dirichlet_pairing_identities() {
    let mut r = rng(9);
    for g in [
        BackgroundGeometry::build_torus(Complex64::new(0.4, 0.8), 3.0, 32).unwrap(),
        BackgroundGeometry::build_sphere(5.0, 24).unwrap(),
    ] {
        let a = smooth_field(&g, &mut r, 5, 1.0);
        let b = smooth_field(&g, &mut r, 5, 1.0);
        assert!(g.dirichlet_pairing(&g.constant(2.0), &b).abs() < 1e-12);
        let lhs = g.dirichlet_pairing(&a, &b);
        let rhs = 0.5 * g.integrate(&g.grad_dot(&a, &b));
        assert!((lhs - rhs).abs() < 1e-10, "{lhs} vs {rhs}");
        assert!((lhs - g.dirichlet_pairing(&b, &a)).abs() < 1e-12);
        assert!(g.dirichlet_pairing(&a, &a) >= 0.0);
    }
}

#[test]
fn dirichlet_first_harmonic_against_fd_quadrature() {
    let g = square(1.0, 16);
    let t = g.torus().unwrap();
    let u: Vec<f64> = (0..g.len())
        .map(|i| (2.0 * PI * t.node_position(i)[0]).sin())
        .collect();
    // ½∫|∇u|² = ½·4π²·½ = π²
    let spectral = g.dirichlet_pairing(&u, &u);
    assert!((spectral - PI * PI).abs() < 1e-10);
    let n = 16;
    let h = 1.0 / n as f64;
    let mut fd = 0.0;
    for i in 0..n {
        for j in 0..n {
            let k = i * n + j;
            let dx = (u[i * n + (j + 1) % n] - u[k]) / h;
            let dy = (u[((i + 1) % n) * n + j] - u[k]) / h;
            fd += 0.5 * (dx * dx + dy * dy) * h * h;
        }
    }
    assert!((fd - spectral).abs() / spectral < 0.01 + 0.02, "fd {fd}");
    assert!((fd - spectral).abs() / spectral < 0.03);
}

#[test]
fn field_dump_round_trip() {
    let g = BackgroundGeometry::build_sphere(5.0, 12).unwrap();
    let mut r = rng(4);
    let u = smooth_field(&g, &mut r, 6, 3.0);
    let mut buf = Vec::new();
    write_field(&g, &u, &mut buf).unwrap();
    let text = String::from_utf8(buf.clone()).unwrap();
    assert!(text.starts_with("vortexlab-field v1 0 12 "));
    let back = read_field(&g, &buf[..]).unwrap();
    assert_eq!(back, u);
    let other = BackgroundGeometry::build_sphere(5.0, 13).unwrap();
    assert!(read_field(&other, &buf[..]).is_err());
}

#[test]
fn abs_integral_resolves_kinks() {
    let v = 50.0;
    let g = BackgroundGeometry::build_sphere(v, 32).unwrap();
    let s = g.sphere().unwrap();
    let z: Vec<f64> = (0..g.len()).map(|i| s.x[i / s.nlon]).collect();
    // ∫|cos θ| ω₀ = V/2
    let got = g.integrate_abs(&z, &g.constant(1.0));
    assert!((got - 0.5 * v).abs() < 1e-9 * v, "{got}");
}

mod props {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn laplacian_integrates_to_zero(seed in 0u64..1000, re in -0.5f64..0.5, im in 0.6f64..1.5) {
            let g = BackgroundGeometry::build_torus(Complex64::new(re, im), 2.0, 16).unwrap();
            let mut r = rng(seed);
            let u = smooth_field(&g, &mut r, 6, 1.0);
            prop_assert!(g.integrate(&g.laplacian(&u)).abs() < 1e-10);
            prop_assert!(g.dirichlet_pairing(&u, &u) >= -1e-14);
        }
    }
}
