use super::*;
use crate::testutil::{rng, smooth_field};
use rand::Rng;

fn sphere(l: usize) -> BackgroundGeometry {
    BackgroundGeometry::build_sphere(4.0 * PI, l).unwrap()
}

fn torus(n: usize) -> BackgroundGeometry {
    BackgroundGeometry::build_torus(Complex64::new(0.2, 1.1), 30.0, n).unwrap()
}

fn rotate(v: [f64; 3], axis: [f64; 3], a: f64) -> [f64; 3] {
    let (s, c) = a.sin_cos();
    let d = axis[0] * v[0] + axis[1] * v[1] + axis[2] * v[2];
    let x = [
        axis[1] * v[2] - axis[2] * v[1],
        axis[2] * v[0] - axis[0] * v[2],
        axis[0] * v[1] - axis[1] * v[0],
    ];
    [0, 1, 2].map(|i| v[i] * c + x[i] * s + axis[i] * d * (1.0 - c))
}

fn log_slope(
    geom: &BackgroundGeometry,
    h: &HiggsData,
    p: SurfacePoint,
    step: impl Fn(f64) -> SurfacePoint,
) -> f64 {
    let (r1, r2) = (1e-3, 1e-5);
    let d1 = geom.distance(&p, &step(r1));
    let d2 = geom.distance(&p, &step(r2));
    (h.evaluate_u0(geom, &step(r1)) - h.evaluate_u0(geom, &step(r2))) / (d1.ln() - d2.ln())
}

#[test]
fn parse_and_print() {
    let d = Divisor::parse("# three points\n0 0 1\n1 0 2\n\ninf 1\n", 0).unwrap();
    assert_eq!(d.degree(), 4);
    assert_eq!(d.max_multiplicity(), 2);
    assert_eq!(d.points()[2], SurfacePoint::infinity());
    let again = Divisor::parse(&d.to_string(), 0).unwrap();
    assert_eq!(again.multiplicities(), d.multiplicities());
    for (a, b) in again.points().iter().zip(d.points()) {
        match (a, b) {
            (SurfacePoint::Sphere(a), SurfacePoint::Sphere(b)) => {
                assert!((0..3).all(|i| (a[i] - b[i]).abs() < 1e-15))
            }
            _ => panic!(),
        }
    }
    assert!(Divisor::parse("inf 1", 1).is_err());
    assert!(Divisor::parse("0 0", 1).is_err());
    assert!(Divisor::parse("0 0 0", 1).is_err());
    assert!(Divisor::parse("", 1).is_err());
    assert!(Divisor::parse("a 0 1", 1).is_err());
}

#[test]
fn coincident_points_rejected() {
    let g = torus(32);
    let t = g.torus().unwrap();
    let p = [0.3, 0.4];
    let q = [p[0] + t.e1[0], p[1] + t.e1[1]];
    let d = Divisor::on_plane(&[(p, 1), (q, 1)]).unwrap();
    assert!(matches!(
        build_higgs_green(&g, &d),
        Err(Error::InvalidInput(_))
    ));
    let d = Divisor::on_sphere(&[(None, 1), (Some(Complex64::new(0.0, 0.0)), 1)]).unwrap();
    assert!(build_higgs_green(&g, &d).is_err());
}

#[test]
fn torus_green_route() {
    let g = torus(64);
    for n in [1u32, 2] {
        let p = SurfacePoint::Plane([1.234, 2.345]);
        let d = Divisor::new(vec![p, SurfacePoint::Plane([3.0, 0.5])], vec![n, 1]).unwrap();
        let h = build_higgs_green(&g, &d).unwrap();
        assert_eq!(h.u0.iter().copied().fold(f64::NEG_INFINITY, f64::max), 0.0);
        assert!(h.p0.iter().all(|v| *v <= 1.0 && *v >= 0.0));
        assert!((h.curvature_density - 2.0 * PI * (n + 1) as f64 / 30.0).abs() < 1e-15);
        let slope = log_slope(&g, &h, p, |r| {
            SurfacePoint::Plane([1.234 + 0.6 * r, 2.345 + 0.8 * r])
        });
        assert!(
            (slope - 2.0 * n as f64).abs() < 0.1 * n as f64,
            "slope {slope}"
        );
    }
}

#[test]
fn node_on_divisor_is_floored() {
    let g = torus(32);
    let d = Divisor::new(vec![g.node_point(100)], vec![1]).unwrap();
    let h = build_higgs_green(&g, &d).unwrap();
    assert_eq!(h.u0[100], LOG_FLOOR);
    assert_eq!(h.p0[100], 0.0);
}

#[test]
fn explicit_symmetric_pair() {
    let g = sphere(32);
    let d = Divisor::on_sphere(&[(Some(Complex64::new(0.0, 0.0)), 1), (None, 1)]).unwrap();
    let h = build_higgs_explicit_sphere(&g, &d).unwrap();
    let s = g.sphere().unwrap();
    let mut best = (f64::NEG_INFINITY, 0);
    for j in 0..s.nlat {
        let row = &h.u0[j * s.nlon..(j + 1) * s.nlon];
        assert!(row.iter().all(|v| (v - row[0]).abs() < 1e-13));
        if row[0] > best.0 {
            best = (row[0], j);
        }
    }
    assert!(s.x[best.1].abs() < 1e-14, "{}", s.x[best.1]);
    let north = h.evaluate_u0(&g, &SurfacePoint::chart(Complex64::new(0.0, 0.0)));
    assert_eq!(density(north), 0.0);
    assert!(build_higgs_explicit_sphere(
        &torus(32),
        &Divisor::on_plane(&[([0.0, 0.0], 1)]).unwrap()
    )
    .is_err());
}

#[test]
fn green_route_matches_explicit_formula() {
    let g = sphere(64);
    let d = Divisor::on_sphere(&[
        (Some(Complex64::new(0.0, 0.0)), 1),
        (Some(Complex64::new(1.0, 0.0)), 2),
        (Some(Complex64::new(-0.3, 0.8)), 1),
        (None, 1),
    ])
    .unwrap();
    let a = build_higgs_green(&g, &d).unwrap();
    let b = build_higgs_explicit_sphere(&g, &d).unwrap();
    let diff: Vec<f64> = a.u0.iter().zip(&b.u0).map(|(x, y)| x - y).collect();
    let m = g.mean(&diff);
    let err = diff.iter().fold(0.0_f64, |e, v| e.max((v - m).abs()));
    assert!(err < 1e-4, "max deviation {err}");
}

#[test]
fn sphere_slope_fit() {
    let g = sphere(48);
    let z = Complex64::new(0.4, -0.2);
    let d = Divisor::on_sphere(&[(Some(z), 3), (None, 1)]).unwrap();
    for h in [
        build_higgs_green(&g, &d).unwrap(),
        build_higgs_explicit_sphere(&g, &d).unwrap(),
    ] {
        let slope = log_slope(&g, &h, SurfacePoint::chart(z), |r| {
            SurfacePoint::chart(z + Complex64::new(r, 0.5 * r))
        });
        assert!((slope - 6.0).abs() < 0.3, "slope {slope}");
    }
}

#[test]
fn rotation_pullback() {
    let g = sphere(64);
    let pts = [
        Complex64::new(0.1, 0.2),
        Complex64::new(-1.5, 0.4),
        Complex64::new(0.7, -0.9),
    ];
    let d = Divisor::on_sphere(&[(Some(pts[0]), 1), (Some(pts[1]), 2), (Some(pts[2]), 1)]).unwrap();
    let axis = [0.48, -0.6, 0.64];
    let ang = 0.917;
    let rot = |p: &SurfacePoint| match p {
        SurfacePoint::Sphere(v) => SurfacePoint::Sphere(rotate(*v, axis, ang)),
        _ => unreachable!(),
    };
    let dr = Divisor::new(
        d.points().iter().map(rot).collect(),
        d.multiplicities().to_vec(),
    )
    .unwrap();
    let mut r = rng(17);
    for build in [build_higgs_green, build_higgs_explicit_sphere] {
        let h = build(&g, &d).unwrap();
        let hr = build(&g, &dr).unwrap();
        let mut diffs = Vec::new();
        for _ in 0..40 {
            let x = SurfacePoint::chart(Complex64::new(
                r.gen_range(-2.0..2.0),
                r.gen_range(-2.0..2.0),
            ));
            diffs.push(hr.evaluate_u0(&g, &rot(&x)) - h.evaluate_u0(&g, &x));
        }
        let lo = diffs.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = diffs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        assert!(hi - lo < 1e-6, "spread {}", hi - lo);
    }
}

#[test]
fn weak_degree_identity() {
    // ½∫u0 Δψ ω₀ = (2πN/V)∫ψ ω₀ − 2π Σ n_j ψ(p_j)
    let mut r = rng(23);
    let cases = [
        (
            torus(64),
            Divisor::on_plane(&[([1.0, 1.5], 1), ([3.3, 0.2], 2)]).unwrap(),
        ),
        (
            sphere(48),
            Divisor::on_sphere(&[(Some(Complex64::new(0.3, 0.1)), 2), (None, 1)]).unwrap(),
        ),
    ];
    for (g, d) in cases {
        let psi = smooth_field(&g, &mut r, 4, 1.0);
        let lpsi = g.laplacian(&psi);
        let interp = g.interpolant(&psi);
        {
            let h = build_higgs_green(&g, &d).unwrap();
            let lhs = 0.5 * h.integrate_u0(&g, &lpsi);
            let point_terms: f64 = d
                .points()
                .iter()
                .zip(d.multiplicities())
                .map(|(p, &n)| n as f64 * g.evaluate(&interp, p))
                .sum();
            let rhs = h.curvature_density * g.integrate(&psi) - 2.0 * PI * point_terms;
            assert!((lhs - rhs).abs() < 1e-6, "{lhs} vs {rhs}");
            assert!((h.curvature_density * g.volume - 2.0 * PI * d.degree() as f64).abs() < 1e-12);
        }
    }
}

#[test]
fn flow_of_divisor() {
    let g = sphere(32);
    let d = Divisor::on_sphere(&[
        (Some(Complex64::new(0.0, 0.0)), 1),
        (Some(Complex64::new(1.0, 0.0)), 1),
        (Some(Complex64::new(-1.0, 0.0)), 1),
    ])
    .unwrap();
    let h = build_higgs_explicit_sphere(&g, &d).unwrap();
    assert_eq!(pullback_higgs(&g, &h, 0.0).unwrap().u0, h.u0);
    let f = flow_divisor(&d, 10.0).unwrap();
    assert_eq!(f.degree(), 3);
    let north = SurfacePoint::chart(Complex64::new(0.0, 0.0));
    for p in f.points() {
        let dist = g
            .distance(p, &north)
            .min(g.distance(p, &SurfacePoint::infinity()));
        assert!(dist < 1e-6);
    }
    assert!(flow_divisor(&d, 31.0).is_err());
    let hb = pullback_higgs(&g, &h, -2.0).unwrap();
    assert_eq!(hb.degree(), 3);
    assert_eq!(hb.u0.iter().copied().fold(f64::NEG_INFINITY, f64::max), 0.0);
}

mod props {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]
        #[test]
        fn normalized_density(x in 0.0f64..5.0, y in 0.0f64..5.0, n in 1u32..4) {
            let g = torus(32);
            let d = Divisor::on_plane(&[([x, y], n)]).unwrap();
            let h = build_higgs_green(&g, &d).unwrap();
            prop_assert_eq!(h.u0.iter().copied().fold(f64::NEG_INFINITY, f64::max), 0.0);
            prop_assert!(h.p0.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }
}
