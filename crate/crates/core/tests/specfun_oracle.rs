//! Hankel functions against integral representations evaluated by
//! brute-force Gauss-Legendre quadrature.

use std::f64::consts::PI;

use helmholtz_hna::specfun::{bessel_j, hankel1};
use num_complex::Complex64;

fn gauss_legendre(q: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; q];
    let mut w = vec![0.0; q];
    for i in 0..q {
        let mut z = (PI * (i as f64 + 0.75) / (q as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for n in 2..=q {
                let p2 = ((2 * n - 1) as f64 * z * p1 - (n - 1) as f64 * p0) / n as f64;
                p0 = p1;
                p1 = p2;
            }
            let dp = q as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                let (mut p0, mut p1) = (1.0, z);
                for n in 2..=q {
                    let p2 = ((2 * n - 1) as f64 * z * p1 - (n - 1) as f64 * p0) / n as f64;
                    p0 = p1;
                    p1 = p2;
                }
                let dp = q as f64 * (z * p1 - p0) / (z * z - 1.0);
                w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
                break;
            }
        }
        x[i] = z;
    }
    (x, w)
}

fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize, rule: &(Vec<f64>, Vec<f64>)) -> f64 {
    let h = (b - a) / panels as f64;
    let mut s = 0.0;
    for p in 0..panels {
        let c = a + h * (p as f64 + 0.5);
        for (x, w) in rule.0.iter().zip(&rule.1) {
            s += w * f(c + 0.5 * h * x);
        }
    }
    0.5 * h * s
}

/// `J_n(x) + i Y_n(x)` from Bessel's and Schlaefli's integrals.
fn hankel_oracle(n: u32, x: f64, rule: &(Vec<f64>, Vec<f64>)) -> Complex64 {
    let nf = n as f64;
    let panels = x.ceil() as usize + 20;
    let j = integrate(|t| (nf * t - x * t.sin()).cos(), 0.0, PI, panels, rule) / PI;
    let y1 = integrate(|t| (x * t.sin() - nf * t).sin(), 0.0, PI, panels, rule) / PI;
    let sign = if n.is_multiple_of(2) { 1.0 } else { -1.0 };
    let t_max = (40.0 / x).asinh();
    let y2 = integrate(|t| ((nf * t).exp() + sign * (-nf * t).exp()) * (-x * t.sinh()).exp(), 0.0, t_max, 400, rule) / PI;
    Complex64::new(j, y1 - y2)
}

#[test]
fn hankel_matches_integral_oracle_on_log_grid() {
    let rule = gauss_legendre(24);
    let m = 61;
    let mut worst: f64 = 0.0;
    for i in 0..m {
        let x = 10f64.powf(-3.0 + 6.0 * i as f64 / (m - 1) as f64);
        for n in 0..=1u32 {
            let h = hankel1(n, x).unwrap();
            let o = hankel_oracle(n, x, &rule);
            let rel = (h - o).norm() / o.norm();
            worst = worst.max(rel);
            assert!(rel < 1e-10, "H_{n}({x}): {h} vs {o}, rel {rel:e}");
            let j = bessel_j(n, x).unwrap();
            assert!((j - o.re).abs() < 1e-10 * o.norm(), "J_{n}({x})");
        }
    }
    println!("worst relative deviation {worst:e}");
}

#[test]
fn spot_values() {
    let h0 = hankel1(0, 1.0).unwrap();
    assert!((h0 - Complex64::new(0.7651976866, 0.0882569642)).norm() < 1e-9);
    let h1 = hankel1(1, 1.0).unwrap();
    assert!((h1 - Complex64::new(0.4400505857, -0.7812128213)).norm() < 1e-9);
}
