use super::*;
use crate::higgs::{build_higgs_explicit_sphere, build_higgs_green, Divisor};
use crate::surface::SurfacePoint;
use crate::testutil::{max_abs_diff, rng, smooth_field};
use num_complex::Complex64;
use rand::Rng;

fn torus(v: f64, n: usize) -> BackgroundGeometry {
    BackgroundGeometry::build_torus(Complex64::new(0.15, 1.05), v, n).unwrap()
}

fn one_point(g: &BackgroundGeometry) -> HiggsData {
    build_higgs_green(g, &Divisor::on_plane(&[([0.7, 1.3], 1)]).unwrap()).unwrap()
}

/// Random admissible Kähler potential with sup|Δ₀φ| = `size`.
fn random_kpot(g: &BackgroundGeometry, r: &mut rand_chacha::ChaCha8Rng, size: f64) -> Vec<f64> {
    let k = smooth_field(g, r, 4, 1.0);
    let s = sup_norm(&g.laplacian(&k));
    k.iter().map(|v| v * size / s).collect()
}

#[test]
fn functional_examples() {
    let g = torus(30.0, 32);
    let h = one_point(&g);
    let p = VortexProblem::flat(&g, &h, 1.0).unwrap();
    assert!(mhat_energy(&p, &g.constant(0.0)).abs() < 1e-13);
    let kappa: f64 = 0.37;
    let expect =
        0.25 * g.integrate(&h.p0) * ((2.0 * kappa).exp() - 1.0) - 0.5 * kappa * (30.0 - 4.0 * PI);
    assert!((mhat_energy(&p, &g.constant(kappa)) - expect).abs() < 1e-12);
    let g0 = mhat_gradient(&p, &g.constant(0.0));
    let expect = 0.5 * (g.integrate(&h.p0) - 30.0) + 2.0 * PI;
    assert!((g.integrate(&g0) - expect).abs() < 1e-11);
}

#[test]
fn gradient_matches_finite_differences() {
    let mut r = rng(31);
    for g in [
        torus(30.0, 32),
        BackgroundGeometry::build_sphere(40.0, 24).unwrap(),
    ] {
        let h = match g.genus {
            1 => one_point(&g),
            _ => build_higgs_green(
                &g,
                &Divisor::on_sphere(&[(Some(Complex64::new(0.2, 0.1)), 2)]).unwrap(),
            )
            .unwrap(),
        };
        let kpot = random_kpot(&g, &mut r, 0.4);
        let p = VortexProblem::new(&g, &h, 1.3, kpot).unwrap();
        let f = smooth_field(&g, &mut r, 5, 0.5);
        let grad = mhat_gradient(&p, &f);
        for _ in 0..20 {
            let d = smooth_field(&g, &mut r, 6, 1.0);
            let eps = 1e-5;
            let at = |s: f64| {
                let x: Vec<f64> = f.iter().zip(&d).map(|(a, b)| a + s * b).collect();
                mhat_energy(&p, &x)
            };
            let fd = (at(eps) - at(-eps)) / (2.0 * eps);
            let an = g.inner(&grad, &d);
            assert!((fd - an).abs() <= 1e-6 * (1.0 + an.abs()), "{fd} vs {an}");
        }
    }
}

#[test]
fn strict_convexity_on_segments() {
    let g = torus(30.0, 32);
    let h = one_point(&g);
    let mut r = rng(41);
    for _ in 0..50 {
        let kpot = random_kpot(&g, &mut r, 0.5);
        let p = VortexProblem::new(&g, &h, 1.0, kpot).unwrap();
        let (a0, a1) = (r.gen_range(0.1..2.0), r.gen_range(0.1..2.0));
        let f0 = smooth_field(&g, &mut r, 4, a0);
        let f1 = smooth_field(&g, &mut r, 4, a1);
        let mid: Vec<f64> = f0.iter().zip(&f1).map(|(a, b)| 0.5 * (a + b)).collect();
        let second = mhat_energy(&p, &f0) + mhat_energy(&p, &f1) - 2.0 * mhat_energy(&p, &mid);
        assert!(second >= 1e-12, "second difference {second}");
    }
}

#[test]
fn torus_degree_identity_and_bounds() {
    let g = torus(30.0, 128);
    let h = one_point(&g);
    let p = VortexProblem::flat(&g, &h, 1.0).unwrap();
    let s = solve_vortex(&p, None).unwrap();
    assert!(s.residual_sup <= 1e-8);
    let total: f64 = g.integrate(&p.density(&s.f));
    assert!((total - (30.0 - 4.0 * PI)).abs() < 1e-5, "{total}");
    assert!(s.degree_defect <= 1e-6 * 30.0);
    assert!(s.pointwise_max <= 1.0 + 1e-8);
    assert!(sup_norm(&mhat_gradient(&p, &s.f)) <= 1e-8);
    let dens = p.density(&s.f);
    let l2 = 0.5 * g.integrate(&g.grad_sq(&dens));
    assert!(l2 <= 2.0 * PI * (1.0 + 1e-6), "curvature L2 {l2}");
    // quadratic tail
    let hist = &s.residual_history;
    let k = hist.iter().position(|r| *r <= 1e-8).unwrap() + 1;
    assert!(k >= 3);
    let c = hist[k - 1] / (hist[k - 2] * hist[k - 2]);
    let c_prev = hist[k - 2] / (hist[k - 3] * hist[k - 3]);
    assert!(c.is_finite() && c < 1e3 && c_prev < 1e3, "{hist:?}");
}

#[test]
fn bradlow_violation_detected() {
    let g = torus(10.0, 64);
    let h = one_point(&g);
    let p = VortexProblem::flat(&g, &h, 1.0).unwrap();
    assert!(matches!(
        solve_vortex(&p, None),
        Err(Error::BradlowViolated { .. })
    ));
    let err = solve_vortex(&p, None).unwrap_err().to_string();
    assert!(err.starts_with("BradlowViolated"));
}

#[test]
fn unique_and_minimizing() {
    let g = torus(25.0, 64);
    let h = build_higgs_green(
        &g,
        &Divisor::on_plane(&[([0.7, 1.3], 1), ([3.0, 2.0], 1)]).unwrap(),
    )
    .unwrap();
    let mut r = rng(51);
    let kpot = random_kpot(&g, &mut r, 0.6);
    let p = VortexProblem::new(&g, &h, 1.2, kpot).unwrap();
    let a = solve_vortex(&p, Some(&smooth_field(&g, &mut r, 3, 2.0))).unwrap();
    let b = solve_vortex(&p, Some(&smooth_field(&g, &mut r, 3, 2.0))).unwrap();
    assert!(max_abs_diff(&a.f, &b.f) <= 1e-8);
    assert!(a.pointwise_max <= 1.2 * (1.0 + 1e-8));
    let e = mhat_energy(&p, &a.f);
    for _ in 0..20 {
        let amp = r.gen_range(1e-3..1.0);
        let d = smooth_field(&g, &mut r, 5, amp);
        let x: Vec<f64> = a.f.iter().zip(&d).map(|(u, v)| u + v).collect();
        assert!(e <= mhat_energy(&p, &x));
    }
}

/// f'' + cot θ f' = R²(2πN/V + ½(sin²θ e^{2f} − τ)), regular at θ = 0,
/// symmetric about the equator.
fn taubes_profile(r2: f64, c: f64, tau: f64, thetas: &[f64]) -> Vec<f64> {
    let rhs = |th: f64, y: [f64; 2]| -> [f64; 2] {
        let s = th.sin();
        [
            y[1],
            r2 * (c + 0.5 * (s * s * (2.0 * y[0]).exp() - tau)) - th.cos() / s * y[1],
        ]
    };
    let th0 = 1e-4;
    let steps = 20000;
    let shoot = |b: f64, record: Option<&[f64]>| -> (f64, Vec<f64>) {
        let s0 = r2 * (c - 0.5 * tau);
        let mut y = [b + 0.25 * s0 * th0 * th0, 0.5 * s0 * th0];
        let hstep = (0.5 * std::f64::consts::PI - th0) / steps as f64;
        let mut th = th0;
        let mut path = vec![(th, y[0])];
        for _ in 0..steps {
            let k1 = rhs(th, y);
            let k2 = rhs(
                th + 0.5 * hstep,
                [y[0] + 0.5 * hstep * k1[0], y[1] + 0.5 * hstep * k1[1]],
            );
            let k3 = rhs(
                th + 0.5 * hstep,
                [y[0] + 0.5 * hstep * k2[0], y[1] + 0.5 * hstep * k2[1]],
            );
            let k4 = rhs(th + hstep, [y[0] + hstep * k3[0], y[1] + hstep * k3[1]]);
            for i in 0..2 {
                y[i] += hstep / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
            th += hstep;
            path.push((th, y[0]));
            if !y[0].is_finite() || y[0].abs() > 1e3 {
                return (
                    if y[0] < 0.0 {
                        f64::NEG_INFINITY
                    } else {
                        f64::INFINITY
                    },
                    vec![],
                );
            }
        }
        let values = match record {
            None => vec![],
            Some(ts) => ts
                .iter()
                .map(|&t| {
                    let t = if t > 0.5 * std::f64::consts::PI {
                        std::f64::consts::PI - t
                    } else {
                        t
                    };
                    // cubic interpolation on the RK grid
                    let k = (((t - th0) / hstep).floor() as usize).clamp(1, steps - 2);
                    let xs = [k - 1, k, k + 1, k + 2];
                    let mut v = 0.0;
                    for &a in &xs {
                        let mut l = 1.0;
                        for &b in &xs {
                            if a != b {
                                l *= (t - path[b].0) / (path[a].0 - path[b].0);
                            }
                        }
                        v += l * path[a].1;
                    }
                    v
                })
                .collect(),
        };
        (y[1], values)
    };
    let (mut lo, mut hi) = (-20.0, 5.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if shoot(mid, None).0 > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    shoot(0.5 * (lo + hi), Some(thetas)).1
}

#[test]
fn sphere_matches_radial_shooting() {
    let v = 40.0;
    let g = BackgroundGeometry::build_sphere(v, 64).unwrap();
    let d = Divisor::on_sphere(&[(Some(Complex64::new(0.0, 0.0)), 1), (None, 1)]).unwrap();
    let h = build_higgs_explicit_sphere(&g, &d).unwrap();
    let p = VortexProblem::flat(&g, &h, 1.0).unwrap();
    let s = solve_vortex(&p, None).unwrap();
    assert!(s.pointwise_max <= 1.0 + 1e-8);
    let sg = g.sphere().unwrap();
    let thetas: Vec<f64> = sg.x.iter().map(|x| x.acos()).collect();
    let oracle = taubes_profile(sg.radius2, 4.0 * PI / v, 1.0, &thetas);
    let mut err = 0.0_f64;
    for j in 0..sg.nlat {
        err = err.max((s.f[j * sg.nlon] - oracle[j]).abs());
    }
    assert!(err < 1e-4, "sup error {err}");
    let _ = SurfacePoint::infinity();
}

#[test]
fn stability_bound() {
    let g = torus(30.0, 64);
    let h = one_point(&g);
    let mut r = rng(61);
    let base = random_kpot(&g, &mut r, 0.3);
    assert_eq!(
        vortex_stability_bound(&g, &h, 1.0, &base, &base).unwrap(),
        (0.0, 0.0)
    );
    for _ in 0..3 {
        let b: Vec<f64> = base
            .iter()
            .zip(random_kpot(&g, &mut r, 0.2))
            .map(|(a, d)| a + d)
            .collect();
        let (lhs, rhs) = vortex_stability_bound(&g, &h, 1.0, &base, &b).unwrap();
        assert!(lhs <= rhs * (1.0 + 1e-6), "{lhs} > {rhs}");
    }
    let bump = random_kpot(&g, &mut r, 0.4);
    let mut prev = f64::INFINITY;
    for e in [0.4, 0.2, 0.1] {
        let b: Vec<f64> = base.iter().zip(&bump).map(|(a, d)| a + e * d).collect();
        let (lhs, rhs) = vortex_stability_bound(&g, &h, 1.0, &base, &b).unwrap();
        assert!(lhs < prev && lhs <= rhs);
        prev = lhs;
    }
}

mod props {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(8))]
        #[test]
        fn solutions_obey_identity_and_bounds(x in 0.0f64..5.0, y in 0.0f64..5.0, tau in 0.6f64..3.0) {
            let g = torus(30.0, 32);
            let h = build_higgs_green(&g, &Divisor::on_plane(&[([x, y], 1)]).unwrap()).unwrap();
            let p = VortexProblem::flat(&g, &h, tau).unwrap();
            let s = solve_vortex(&p, None).unwrap();
            let margin = tau * 30.0 - 4.0 * PI;
            prop_assert!(s.degree_defect <= 1e-8 * margin);
            prop_assert!(s.pointwise_max <= tau * (1.0 + 1e-8));
            prop_assert!(p.density_gradient_energy(&s.f) <= 2.0 * PI * tau * tau * (1.0 + 1e-6));
        }
    }
}
