//! Cylinder functions of real positive argument.
//!
//! `J_0, J_1, Y_0, Y_1` come from their ascending power series below
//! [`SERIES_CUTOFF`] and from the Hankel asymptotic expansion above it.
//! Higher integer orders of `J` use Miller's backward recurrence with the
//! `J_0 + 2 sum J_2k = 1` normalisation, or forward recurrence when the
//! argument exceeds the order.

use std::f64::consts::{FRAC_2_PI, FRAC_PI_2, FRAC_PI_4, PI};

use num_complex::Complex64;

use crate::error::{HnaError, Result};

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Switch point between the power series and the asymptotic expansion.
pub const SERIES_CUTOFF: f64 = 12.0;

const MAX_ORDER: u32 = 200;
const MAX_ARG: f64 = 1.0e6;

/// Bessel function of the first kind `J_order(x)` for `x >= 0`.
pub fn bessel_j(order: u32, x: f64) -> Result<f64> {
    check_j_args(order, x)?;
    Ok(bessel_j_upto(order, x)?[order as usize])
}

/// All of `J_0(x), ..., J_max_order(x)` in one recurrence sweep.
pub fn bessel_j_upto(max_order: u32, x: f64) -> Result<Vec<f64>> {
    check_j_args(max_order, x)?;
    let n = max_order as usize;
    let mut out = vec![0.0; n + 1];
    if x == 0.0 {
        out[0] = 1.0;
        return Ok(out);
    }
    if x <= 1.0 {
        for (order, v) in out.iter_mut().enumerate() {
            *v = j_series(order as u32, x);
        }
        return Ok(out);
    }
    if x > 50.0 && (n as f64) < x {
        let (h0, h1) = hankel_asymptotic(x);
        out[0] = h0.re;
        if n >= 1 {
            out[1] = h1.re;
        }
        for j in 1..n {
            out[j + 1] = 2.0 * j as f64 / x * out[j] - out[j - 1];
        }
        if out.iter().any(|v| !v.is_finite()) {
            return Err(HnaError::RecurrenceOverflow { order: max_order, x });
        }
        return Ok(out);
    }
    miller(max_order, x, &mut out)?;
    Ok(out)
}

fn check_j_args(order: u32, x: f64) -> Result<()> {
    if order > MAX_ORDER {
        return Err(HnaError::Domain(format!("order {order} exceeds {MAX_ORDER}")));
    }
    if !(x >= 0.0) || x > MAX_ARG {
        return Err(HnaError::Domain(format!("argument {x} outside [0, {MAX_ARG:e}]")));
    }
    Ok(())
}

fn j_series(order: u32, x: f64) -> f64 {
    let z = 0.5 * x;
    let z2 = z * z;
    let mut lead = 1.0;
    for j in 1..=order {
        lead *= z / j as f64;
    }
    let mut term = lead;
    let mut sum = lead;
    let mut m = 1.0;
    while term.abs() > 1e-18 * sum.abs() && m < 200.0 {
        term *= -z2 / (m * (m + order as f64));
        sum += term;
        m += 1.0;
    }
    sum
}

fn miller(max_order: u32, x: f64, out: &mut [f64]) -> Result<()> {
    let top = (max_order as f64).max(x);
    let mut start = (top + 40.0 + (40.0 * top).sqrt()) as usize;
    start += start % 2;
    let mut jp1 = 0.0_f64;
    let mut jv = 1.0_f64;
    let mut even_sum = 1.0_f64;
    let n = max_order as usize;
    if start <= n {
        out[start] = jv;
    }
    for j in (1..=start).rev() {
        let jm1 = 2.0 * j as f64 / x * jv - jp1;
        jp1 = jv;
        jv = jm1;
        let idx = j - 1;
        if jv.abs() > 1e250 {
            jv *= 1e-250;
            jp1 *= 1e-250;
            even_sum *= 1e-250;
            for v in out.iter_mut().skip(idx + 1) {
                *v *= 1e-250;
            }
        }
        if idx <= n {
            out[idx] = jv;
        }
        if idx > 0 && idx % 2 == 0 {
            even_sum += jv;
        }
    }
    // even_sum holds J_start (start is even) and every even index down to 2
    let norm = jv + 2.0 * even_sum;
    if !norm.is_finite() || norm == 0.0 {
        return Err(HnaError::RecurrenceOverflow { order: max_order, x });
    }
    for v in out.iter_mut() {
        *v /= norm;
    }
    if out.iter().any(|v| !v.is_finite()) {
        return Err(HnaError::RecurrenceOverflow { order: max_order, x });
    }
    Ok(())
}

/// Hankel function of the first kind `H^(1)_order(x) = J + iY`, orders 0 and 1.
pub fn hankel1(order: u32, x: f64) -> Result<Complex64> {
    if order > 1 {
        return Err(HnaError::Domain(format!("hankel1 supports orders 0 and 1, got {order}")));
    }
    if !(x > 0.0) || !x.is_finite() {
        return Err(HnaError::Domain(format!(
            "hankel1 requires a positive finite argument, got {x}"
        )));
    }
    let (h0, h1) = hankel01(x);
    Ok(if order == 0 { h0 } else { h1 })
}

/// `(H_0^(1)(x), H_1^(1)(x))` for `x > 0` without argument checks.
#[inline]
pub fn hankel01(x: f64) -> (Complex64, Complex64) {
    if x < SERIES_CUTOFF {
        hankel_series(x)
    } else {
        hankel_asymptotic(x)
    }
}

/// `J_0(x)` on the kernel fast path.
#[inline]
pub fn bessel_j0(x: f64) -> f64 {
    if x < SERIES_CUTOFF {
        let z2 = 0.25 * x * x;
        let mut t = 1.0_f64;
        let mut s = 1.0;
        let mut m = 1.0;
        while t.abs() > 1e-18 {
            t *= -z2 / (m * m);
            s += t;
            m += 1.0;
        }
        s
    } else {
        hankel_asymptotic(x).0.re
    }
}

fn hankel_series(x: f64) -> (Complex64, Complex64) {
    let z = 0.5 * x;
    let z2 = z * z;
    // t_m = (-z^2)^m / (m!)^2,  u_m = (-1)^m z^(2m+1) / (m!(m+1)!)
    let mut t = 1.0;
    let mut u = z;
    let mut j0 = 1.0;
    let mut j1 = z;
    let mut y0_sum = 0.0;
    let mut y1_sum = u; // (H_0 + H_1) u_0 with H_0 = 0, H_1 = 1
    let mut harmonic = 0.0; // H_m
    let mut m = 1.0;
    loop {
        t *= -z2 / (m * m);
        u *= -z2 / (m * (m + 1.0));
        harmonic += 1.0 / m;
        let h_next = harmonic + 1.0 / (m + 1.0);
        j0 += t;
        j1 += u;
        y0_sum += harmonic * t;
        y1_sum += (harmonic + h_next) * u;
        if t.abs() < 1e-18 && u.abs() < 1e-18 {
            break;
        }
        m += 1.0;
    }
    let log_term = z.ln() + EULER_GAMMA;
    let y0 = FRAC_2_PI * (log_term * j0 - y0_sum);
    let y1 = -1.0 / (PI * z) + FRAC_2_PI * log_term * j1 - y1_sum / PI;
    (Complex64::new(j0, y0), Complex64::new(j1, y1))
}

fn asymptotic_sum(nu: f64, x: f64) -> Complex64 {
    // sum_k i^k a_k(nu) x^-k,  a_k = prod_{j<=k} (4nu^2 - (2j-1)^2) / (k! 8^k)
    let mu = 4.0 * nu * nu;
    let mut term = Complex64::new(1.0, 0.0);
    let mut sum = term;
    let mut prev_mag = f64::INFINITY;
    for k in 1..200 {
        let kf = k as f64;
        let odd = 2.0 * kf - 1.0;
        term *= Complex64::new(0.0, (mu - odd * odd) / (8.0 * kf * x));
        let mag = term.norm();
        if mag > prev_mag || mag == 0.0 {
            break;
        }
        sum += term;
        if mag < 1e-17 {
            break;
        }
        prev_mag = mag;
    }
    sum
}

fn hankel_asymptotic(x: f64) -> (Complex64, Complex64) {
    let amp = (FRAC_2_PI / x).sqrt();
    let (s, c) = x.sin_cos();
    let carrier = Complex64::new(c, s);
    let rot0 = Complex64::from_polar(1.0, -FRAC_PI_4);
    let rot1 = Complex64::from_polar(1.0, -FRAC_PI_2 - FRAC_PI_4);
    let h0 = carrier * rot0 * asymptotic_sum(0.0, x) * amp;
    let h1 = carrier * rot1 * asymptotic_sum(1.0, x) * amp;
    (h0, h1)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn j_power_series(order: u32, x: f64, terms: usize) -> f64 {
        let z = x / 2.0;
        let mut sum = 0.0;
        let mut fact_m = 1.0;
        for m in 0..terms {
            if m > 0 {
                fact_m *= m as f64;
            }
            let mut fact_mn = 1.0;
            for j in 1..=(m + order as usize) {
                fact_mn *= j as f64;
            }
            let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
            sum += sign * z.powi((2 * m) as i32 + order as i32) / (fact_m * fact_mn);
        }
        sum
    }

    #[test]
    fn j0_at_zero_is_one() {
        assert_eq!(bessel_j(0, 0.0).unwrap(), 1.0);
        assert_eq!(bessel_j(3, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn j_matches_power_series_oracle() {
        let j0 = j_power_series(0, 1.0, 30);
        let j1 = j_power_series(1, 1.0, 30);
        assert!((j0 - 0.765_197_686_6).abs() < 1e-10);
        assert!((j1 - 0.440_050_585_7).abs() < 1e-10);
        assert!((bessel_j(0, 1.0).unwrap() - j0).abs() < 1e-15);
        assert!((bessel_j(1, 1.0).unwrap() - j1).abs() < 1e-15);
        for &x in &[0.3, 2.0, 7.5, 11.0, 20.0, 35.0, 80.0, 400.0] {
            for order in [0u32, 1, 2, 5, 9, 17, 60] {
                let oracle = j_trapezoid(order, x);
                let got = bessel_j(order, x).unwrap();
                assert!((got - oracle).abs() < 1e-13, "J_{order}({x}) {got} vs {oracle}");
            }
        }
    }

    // J_n(x) = (1/2pi) int_0^2pi cos(n t - x sin t) dt; the trapezoid rule is
    // spectrally accurate for this periodic integrand.
    fn j_trapezoid(order: u32, x: f64) -> f64 {
        let m = 2 * (x as usize + order as usize) + 64;
        let h = 2.0 * PI / m as f64;
        (0..m)
            .map(|i| {
                let t = i as f64 * h;
                (order as f64 * t - x * t.sin()).cos()
            })
            .sum::<f64>()
            / m as f64
    }

    #[test]
    fn hankel_examples() {
        let h0 = hankel1(0, 1.0).unwrap();
        assert!((h0.re - 0.765_197_686_6).abs() < 1e-10);
        assert!((h0.im - 0.088_256_964_2).abs() < 1e-10);
        let h1 = hankel1(1, 1.0).unwrap();
        assert!((h1.re - 0.440_050_585_7).abs() < 1e-10);
        assert!((h1.im + 0.781_212_821_3).abs() < 1e-10);
    }

    #[test]
    fn hankel_small_argument_log_behaviour() {
        let x = 1e-8;
        let h = hankel1(0, x).unwrap();
        assert!((h.re - 1.0).abs() < 1e-12);
        let lead = FRAC_2_PI * ((x / 2.0).ln() + EULER_GAMMA);
        assert!((h.im - lead).abs() < 1e-10);
    }

    #[test]
    fn hankel_rejects_non_positive() {
        assert!(hankel1(0, 0.0).is_err());
        assert!(hankel1(1, -1.0).is_err());
        assert!(hankel1(2, 1.0).is_err());
    }

    #[test]
    fn j_argument_checks() {
        assert!(bessel_j(201, 1.0).is_err());
        assert!(bessel_j(0, -1.0).is_err());
        assert!(bessel_j(0, 2e6).is_err());
    }

    #[test]
    fn series_and_asymptotic_agree_at_cutoff() {
        for &x in &[11.999, 12.0, 12.5] {
            let (a0, a1) = hankel_series(x);
            let (b0, b1) = hankel_asymptotic(x);
            assert!((a0 - b0).norm() < 1e-10 * b0.norm(), "x={x}");
            assert!((a1 - b1).norm() < 1e-10 * b1.norm(), "x={x}");
        }
    }

    #[test]
    fn wronskian() {
        let mut x = 0.1;
        while x <= 100.0 {
            let (h0, h1) = hankel01(x);
            let w = h1.re * h0.im - h0.re * h1.im;
            let expect = 2.0 / (PI * x);
            assert!((w - expect).abs() < 1e-9 * expect, "x={x}: {w} vs {expect}");
            x *= 1.07;
        }
    }

    #[test]
    fn large_argument_modulus() {
        for &x in &[100.0, 500.0, 1e4, 1e6] {
            let h = hankel1(0, x).unwrap();
            let scaled = h.norm() * (PI * x / 2.0).sqrt();
            assert!((scaled - 1.0).abs() < 0.01);
        }
    }

    #[test]
    fn high_order_tail_is_small_and_positive() {
        let v = bessel_j_upto(40, 2.0).unwrap();
        assert!(v[40] > 0.0 && v[40] < 1e-40);
        let sum: f64 = v[0] + 2.0 * v.iter().skip(2).step_by(2).sum::<f64>();
        assert!((sum - 1.0).abs() < 1e-14);
    }
}
