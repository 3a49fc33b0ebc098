use std::f64::consts::PI;
use std::sync::Arc;

use helmholtz_hna::geometry::{make_grating, ConvexPolygon, Point, ProfileSpec};
use helmholtz_hna::oracles::{flat_grating_exact, PlaneWaveSeries};
use helmholtz_hna::unified::{
    equispaced_directions, grating_assemble_solve, interior_planewave_galerkin, plane_wave_neumann,
    rayleigh_modes, DirichletData, GratingDensity, GratingMethod,
};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use proptest::prelude::*;

const I: Complex64 = Complex64::new(0.0, 1.0);

fn gauss_legendre(q: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; q];
    let mut w = vec![0.0; q];
    for i in 0..q {
        let mut z = (PI * (i as f64 + 0.75) / (q as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for n in 2..=q {
                let p2 = ((2 * n - 1) as f64 * z * p1 - (n - 1) as f64 * p0) / n as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = q as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        x[i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
    }
    (x, w)
}

/// Boundary nodes `(x, nu, weight)` on a polygon.
fn boundary_nodes(poly: &ConvexPolygon, panels: usize) -> Vec<(Point, Point, f64)> {
    let (u, w) = gauss_legendre(20);
    let mut out = Vec::new();
    for sd in &poly.sides {
        for p in 0..panels {
            for (ui, wi) in u.iter().zip(&w) {
                let t = (p as f64 + 0.5 * (ui + 1.0)) / panels as f64;
                out.push((sd.start + (sd.end - sd.start) * t, sd.normal, wi * 0.5 * sd.length / panels as f64));
            }
        }
    }
    out
}

/// Weighted least-squares fit of `psi` by plane-wave traces, via Householder QR.
fn qr_best_approximation(
    nodes: &[(Point, Point, f64)],
    k: f64,
    angles: &[f64],
    psi: &[Complex64],
) -> DVector<Complex64> {
    let m = nodes.len();
    let n = angles.len();
    let a = DMatrix::from_fn(m, n, |i, j| {
        let (x, _, w) = nodes[i];
        w.sqrt() * (I * k * (x.x * angles[j].cos() + x.y * angles[j].sin())).exp()
    });
    let b = DVector::from_fn(m, |i, _| nodes[i].2.sqrt() * psi[i]);
    let qr = a.qr();
    let qtb = qr.q().adjoint() * b;
    qr.r().solve_upper_triangular(&qtb).expect("full rank")
}

#[test]
fn interior_galerkin_is_the_l2_best_approximation() {
    let k = 2.0;
    let poly = ConvexPolygon::regular(5, 1.0).unwrap();
    let series = PlaneWaveSeries::new(k, 0.3, 1.0);
    let data = DirichletData::Function(Arc::new(move |x: &Point| series.value(x).unwrap()));
    let thetas = equispaced_directions(8);
    let sol = interior_planewave_galerkin(&poly, k, &data, &thetas).unwrap();

    let nodes = boundary_nodes(&poly, 4);
    let psi: Vec<Complex64> = nodes.iter().map(|(x, nu, _)| series.normal_derivative(x, nu).unwrap()).collect();
    let angles: Vec<f64> = thetas.iter().map(|t| t.re).collect();
    let c = qr_best_approximation(&nodes, k, &angles, &psi);

    let scale = psi.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let mut worst = 0.0_f64;
    for (x, _, _) in &nodes {
        let qr_val: Complex64 = angles
            .iter()
            .zip(c.iter())
            .map(|(a, cj)| cj * (I * k * (x.x * a.cos() + x.y * a.sin())).exp())
            .sum();
        worst = worst.max((sol.eval(x) - qr_val).norm() / scale);
    }
    assert!(worst < 1e-8, "deviation from the least-squares fit {worst:e}");
}

#[test]
fn projection_error_decreases_for_nested_direction_sets() {
    let k = 2.0;
    let poly = ConvexPolygon::regular(6, 1.0).unwrap();
    let data = DirichletData::PlaneWave { angle: 0.3 };
    let mut prev = f64::INFINITY;
    for n in [2, 4, 8, 16] {
        let sol = interior_planewave_galerkin(&poly, k, &data, &equispaced_directions(n)).unwrap();
        let e = sol.l2_error_against(|x, nu| plane_wave_neumann(k, 0.3, x, nu));
        assert!(e <= prev * (1.0 + 1e-10), "N = {n}: {e} after {prev}");
        prev = e;
    }
}

#[test]
fn ss_star_reproduces_flat_grating_density() {
    let (k, l) = (2.5, 2.0 * PI);
    let g = make_grating(l, &ProfileSpec::Flat).unwrap();
    for th in [0.0, PI / 6.0, -0.4] {
        let ex = flat_grating_exact(k, th, l).unwrap();
        for method in [GratingMethod::SsStar, GratingMethod::Ss] {
            let sol = grating_assemble_solve(method, &g, k, th, &[-2, -1, 0, 1, 2]).unwrap();
            let scale = 2.0 * k * th.cos();
            for i in 0..50 {
                let x = l * i as f64 / 50.0;
                let d = (sol.eval(x) - ex.neumann(x)).norm() / scale;
                assert!(d < 1e-8, "{} at theta {th}: {d:e}", method.name());
            }
        }
    }
}

#[test]
fn sc_flat_grating_converges() {
    let (k, l, th) = (2.5, 2.0 * PI, PI / 6.0);
    let g = make_grating(l, &ProfileSpec::Flat).unwrap();
    let ex = flat_grating_exact(k, th, l).unwrap();
    let mut prev = f64::INFINITY;
    for half in [4i64, 8, 16] {
        let modes: Vec<i64> = (-half..=half).collect();
        let sol = grating_assemble_solve(GratingMethod::Sc, &g, k, th, &modes).unwrap();
        let m = 2000;
        let err: f64 = (0..m)
            .map(|i| {
                let x = l * (i as f64 + 0.5) / m as f64;
                (sol.eval(x) - ex.neumann(x)).norm()
            })
            .sum::<f64>()
            / (m as f64 * 2.0 * k * th.cos());
        assert!(err < prev, "{} pulses: {err} after {prev}", modes.len());
        prev = err;
        let c = sol.rayleigh().unwrap();
        let c0 = c.coefficients[c.spectrum.modes.iter().position(|m| m.n == 0).unwrap()];
        assert!((c0 + 1.0).norm() < 2.0 * err + 1e-9);
    }
}

fn distinct_angles(raw: Vec<f64>) -> Option<Vec<Complex64>> {
    let mut v: Vec<f64> = raw.into_iter().map(|a| a.rem_euclid(2.0 * PI)).collect();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let ok = v.windows(2).all(|w| w[1] - w[0] > 0.05) && (v[0] + 2.0 * PI - v[v.len() - 1]) > 0.05;
    ok.then(|| v.into_iter().map(|a| Complex64::new(a, 0.0)).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn gram_is_hermitian_positive_definite(
        raw in prop::collection::vec(0.0..2.0 * PI, 2..10),
        k in 0.5..4.0f64,
    ) {
        if let Some(thetas) = distinct_angles(raw) {
            let poly = ConvexPolygon::regular(5, 1.0).unwrap();
            let sol = interior_planewave_galerkin(&poly, k, &DirichletData::PlaneWave { angle: 0.7 }, &thetas).unwrap();
            prop_assert!(sol.gram.hermitian_defect < 1e-12);
            prop_assert!(sol.gram.min_eigenvalue > 0.0);
        }
    }

    #[test]
    fn rayleigh_modes_lie_on_the_unit_circle(
        k in 0.1..20.0f64,
        l in 0.5..10.0f64,
        th in -1.4..1.4f64,
    ) {
        let spec = rayleigh_modes(k, l, th, -6, 6).unwrap();
        for m in &spec.modes {
            let s = m.alpha * m.alpha + m.beta * m.beta;
            prop_assert!((s - 1.0).norm() < 1e-12 * (1.0 + m.alpha * m.alpha));
            prop_assert!(m.beta.re >= 0.0 && m.beta.im >= 0.0);
        }
    }

    #[test]
    fn grating_density_is_quasi_periodic(
        th in -1.0..1.0f64,
        x in 0.0..6.0f64,
        amp in 0.0..0.5f64,
        method in prop_oneof![Just(GratingMethod::SsStar), Just(GratingMethod::Ss), Just(GratingMethod::Sc)],
    ) {
        let (k, l) = (2.0, 2.0 * PI);
        let g = make_grating(l, &ProfileSpec::Sinusoid { amplitude: amp }).unwrap();
        let sol = grating_assemble_solve(method, &g, k, th, &[-3, -2, -1, 0, 1, 2]).unwrap();
        let mu = k * th.sin();
        let a = sol.eval(x) * (-I * mu * x).exp();
        let b = sol.eval(x + l) * (-I * mu * (x + l)).exp();
        prop_assert!((a - b).norm() < 1e-10 * (1.0 + a.norm()), "{a} vs {b}");
    }
}
