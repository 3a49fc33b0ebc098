//! Double-double (about 32 significant digits) complex arithmetic, used
//! where Gram systems are too ill-conditioned for `f64`.

use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub};

use nalgebra::DMatrix;
use num_complex::Complex64;
use twofloat::{consts, TwoFloat};

use crate::error::{HnaError, Result};
use crate::quad::gauss;

pub type Dd = TwoFloat;

const ZERO_DD: Dd = Dd::from_f64(0.0);
const ONE_DD: Dd = Dd::from_f64(1.0);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DdComplex {
    pub re: Dd,
    pub im: Dd,
}

impl DdComplex {
    pub const ZERO: DdComplex = DdComplex { re: ZERO_DD, im: ZERO_DD };

    pub fn new(re: Dd, im: Dd) -> Self {
        DdComplex { re, im }
    }

    pub fn from_c64(z: Complex64) -> Self {
        DdComplex { re: z.re.into(), im: z.im.into() }
    }

    pub fn to_c64(self) -> Complex64 {
        Complex64::new(self.re.into(), self.im.into())
    }

    pub fn conj(self) -> Self {
        DdComplex { re: self.re, im: -self.im }
    }

    pub fn norm_sqr(self) -> Dd {
        self.re * self.re + self.im * self.im
    }

    pub fn scale(self, s: Dd) -> Self {
        DdComplex { re: self.re * s, im: self.im * s }
    }

    /// `i z`
    pub fn mul_i(self) -> Self {
        DdComplex { re: -self.im, im: self.re }
    }

    /// `e^{z}`.
    pub fn exp(self) -> Self {
        let m = exp(self.re);
        let (s, c) = sin_cos(self.im);
        DdComplex { re: m * c, im: m * s }
    }
}

impl Add for DdComplex {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        DdComplex { re: self.re + o.re, im: self.im + o.im }
    }
}

impl AddAssign for DdComplex {
    fn add_assign(&mut self, o: Self) {
        self.re += o.re;
        self.im += o.im;
    }
}

impl Sub for DdComplex {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        DdComplex { re: self.re - o.re, im: self.im - o.im }
    }
}

#[allow(clippy::suspicious_arithmetic_impl)]
impl Div for DdComplex {
    type Output = Self;
    fn div(self, o: Self) -> Self {
        let d = o.norm_sqr();
        let n = self * o.conj();
        DdComplex { re: ddiv(n.re, d), im: ddiv(n.im, d) }
    }
}

impl Neg for DdComplex {
    type Output = Self;
    fn neg(self) -> Self {
        DdComplex { re: -self.re, im: -self.im }
    }
}

impl Mul for DdComplex {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        DdComplex { re: self.re * o.re - self.im * o.im, im: self.re * o.im + self.im * o.re }
    }
}

/// `a / b` to double-double accuracy by two correction steps (the
/// library's own quotient of two double-doubles is only good to about
/// `f64` precision).
pub fn ddiv(a: Dd, b: Dd) -> Dd {
    let q1 = a.hi() / b.hi();
    let r = a - b * q1;
    let q2 = r.hi() / b.hi();
    let r = r - b * q2;
    let q3 = r.hi() / b.hi();
    Dd::from(q1) + q2 + q3
}

/// Square root with one Newton correction on the `f64` estimate.
pub fn dsqrt(x: Dd) -> Dd {
    let r0 = x.hi().sqrt();
    if r0 == 0.0 || !r0.is_finite() {
        return Dd::from(r0);
    }
    Dd::from(r0) + (x - Dd::new_mul(r0, r0)) / (2.0 * r0)
}

/// Sine and cosine to full double-double accuracy.
pub fn sin_cos(x: Dd) -> (Dd, Dd) {
    // reduce modulo pi/2, then halve three times before the Taylor series
    let q = (f64::from(x / consts::FRAC_PI_2)).round();
    let r = x - consts::FRAC_PI_2 * q;
    let h = r / 8.0;
    let h2 = h * h;
    let mut s = h;
    let mut c = ONE_DD;
    let mut ts = h;
    let mut tc = ONE_DD;
    for n in 1..20 {
        ts = -ts * h2 / (((2 * n) * (2 * n + 1)) as f64);
        tc = -tc * h2 / (((2 * n - 1) * (2 * n)) as f64);
        s += ts;
        c += tc;
    }
    for _ in 0..3 {
        let s2 = s * c * 2.0;
        let c2 = c * c - s * s;
        s = s2;
        c = c2;
    }
    match (q as i64).rem_euclid(4) {
        0 => (s, c),
        1 => (c, -s),
        2 => (-s, -c),
        _ => (-c, s),
    }
}

/// Real exponential to full double-double accuracy.
pub fn exp(x: Dd) -> Dd {
    let n = (f64::from(x / consts::LN_2)).round();
    let r = (x - consts::LN_2 * n) / 256.0;
    let mut t = ONE_DD;
    let mut e = ONE_DD;
    for m in 1..25 {
        t = t * r / m as f64;
        e += t;
    }
    for _ in 0..8 {
        e = e * e;
    }
    e * 2f64.powi(n as i32)
}

/// Gauss-Legendre rule on `[-1, 1]` refined to double-double accuracy by Newton's method.
pub fn gauss_dd(q: usize) -> Result<(Vec<Dd>, Vec<Dd>)> {
    crate::quad::gauss_rule(q)?;
    let base = gauss(q);
    let mut nodes = Vec::with_capacity(q);
    let mut weights = Vec::with_capacity(q);
    for &x0 in &base.nodes {
        let mut x = Dd::from(x0);
        let mut dp = ONE_DD;
        for _ in 0..3 {
            let (p, d) = legendre_dd(q, x);
            dp = d;
            x -= ddiv(p, d);
        }
        let (_, d) = legendre_dd(q, x);
        if d != ZERO_DD {
            dp = d;
        }
        nodes.push(x);
        weights.push(ddiv(Dd::from(2.0), (ONE_DD - x * x) * dp * dp));
    }
    Ok((nodes, weights))
}

fn legendre_dd(q: usize, x: Dd) -> (Dd, Dd) {
    let mut p0 = ONE_DD;
    let mut p1 = x;
    for n in 2..=q {
        let nf = n as f64;
        let p2 = (x * p1 * (2.0 * nf - 1.0) - p0 * (nf - 1.0)) / nf;
        p0 = p1;
        p1 = p2;
    }
    if q == 0 {
        return (ONE_DD, ZERO_DD);
    }
    let d = ddiv((x * p1 - p0) * q as f64, x * x - 1.0);
    (p1, d)
}

/// Cholesky factor `L` (lower, `A = L L^H`) of a Hermitian matrix, or an
/// error if a pivot is not positive.
pub fn cholesky(a: &[Vec<DdComplex>]) -> Result<Vec<Vec<DdComplex>>> {
    let n = a.len();
    let mut l = vec![vec![DdComplex::ZERO; n]; n];
    for j in 0..n {
        let mut d = a[j][j].re;
        for p in 0..j {
            d -= l[j][p].norm_sqr();
        }
        if !(f64::from(d) > 0.0) {
            return Err(HnaError::IllConditioned {
                condition: f64::INFINITY,
                advice: format!("Gram matrix is not numerically positive definite (pivot {j})"),
            });
        }
        let djj = dsqrt(d);
        l[j][j] = DdComplex::new(djj, ZERO_DD);
        for i in j + 1..n {
            let mut s = a[i][j];
            for p in 0..j {
                s = s - l[i][p] * l[j][p].conj();
            }
            l[i][j] = DdComplex::new(ddiv(s.re, djj), ddiv(s.im, djj));
        }
    }
    Ok(l)
}

/// Solves `L L^H x = b`.
pub fn cholesky_solve(l: &[Vec<DdComplex>], b: &[DdComplex]) -> Vec<DdComplex> {
    let n = l.len();
    let mut y = b.to_vec();
    for i in 0..n {
        let mut s = y[i];
        for p in 0..i {
            s = s - l[i][p] * y[p];
        }
        y[i] = DdComplex::new(ddiv(s.re, l[i][i].re), ddiv(s.im, l[i][i].re));
    }
    for i in (0..n).rev() {
        let mut s = y[i];
        for p in i + 1..n {
            s = s - l[p][i].conj() * y[p];
        }
        y[i] = DdComplex::new(ddiv(s.re, l[i][i].re), ddiv(s.im, l[i][i].re));
    }
    y
}

pub fn matvec(a: &[Vec<DdComplex>], x: &[DdComplex]) -> Vec<DdComplex> {
    a.iter()
        .map(|row| row.iter().zip(x).fold(DdComplex::ZERO, |acc, (r, v)| acc + *r * *v))
        .collect()
}

fn dot(x: &[DdComplex], y: &[DdComplex]) -> DdComplex {
    // x^H y
    x.iter().zip(y).fold(DdComplex::ZERO, |acc, (a, b)| acc + a.conj() * *b)
}

fn normalize(x: &mut [DdComplex]) {
    let n = dsqrt(dot(x, x).re);
    for v in x.iter_mut() {
        *v = DdComplex::new(ddiv(v.re, n), ddiv(v.im, n));
    }
}

/// Extreme eigenvalues of a Hermitian positive definite matrix with Cholesky
/// factor `l`, by power and inverse iteration.
pub fn extreme_eigenvalues(a: &[Vec<DdComplex>], l: &[Vec<DdComplex>]) -> (f64, f64) {
    let n = a.len();
    if n == 0 {
        return (1.0, 1.0);
    }
    let start = |seed: f64| -> Vec<DdComplex> {
        (0..n)
            .map(|i| DdComplex::new(Dd::from(1.0 + seed * (i as f64 * 0.7).sin()), Dd::from((i as f64 * 1.3).cos() * 0.1)))
            .collect()
    };
    let mut x = start(0.5);
    normalize(&mut x);
    let mut lmax = 0.0;
    for _ in 0..200 {
        let mut y = matvec(a, &x);
        let r = f64::from(dot(&x, &y).re);
        normalize(&mut y);
        x = y;
        if (r - lmax).abs() <= 1e-10 * r.abs() {
            lmax = r;
            break;
        }
        lmax = r;
    }
    let mut x = start(0.3);
    normalize(&mut x);
    let mut lmin = f64::INFINITY;
    for _ in 0..200 {
        let mut y = cholesky_solve(l, &x);
        let r = f64::from(dot(&x, &y).re);
        normalize(&mut y);
        x = y;
        let est = 1.0 / r;
        if (est - lmin).abs() <= 1e-10 * est.abs() {
            lmin = est;
            break;
        }
        lmin = est;
    }
    // the Rayleigh quotient of the converged vector is the sharper estimate
    let ax = matvec(a, &x);
    let rq = f64::from(dot(&x, &ax).re);
    if rq > 0.0 && rq < lmin {
        lmin = rq;
    }
    (lmin, lmax)
}

pub fn to_matrix(a: &[Vec<DdComplex>]) -> DMatrix<Complex64> {
    let n = a.len();
    let m = a.first().map_or(0, |r| r.len());
    DMatrix::from_fn(n, m, |i, j| a[i][j].to_c64())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: Dd, b: Dd, tol: f64) -> bool {
        f64::from((a - b).abs()) < tol
    }

    #[test]
    fn division_and_sqrt() {
        let a = Dd::from(2.0);
        let b = Dd::from(23.0) + Dd::from(1e-20);
        let q = ddiv(a, b);
        assert!(f64::from((q * b - a).abs()) < 1e-31);
        let r = dsqrt(Dd::from(3.0));
        assert!(f64::from((r * r - 3.0).abs()) < 1e-31);
    }

    #[test]
    fn trig_identities() {
        for x in [0.1_f64, 0.5235987755982988, 1.0, 2.5, -3.7, 10.0, 123.456] {
            let xd = Dd::from(x);
            let (s, c) = sin_cos(xd);
            assert!(close(s * s + c * c, ONE_DD, 1e-30));
            assert!((f64::from(s) - x.sin()).abs() < 1e-15);
            assert!((f64::from(c) - x.cos()).abs() < 1e-15);
        }
        let (s, _) = sin_cos(consts::FRAC_PI_6);
        assert!(close(s, Dd::from(0.5), 1e-30));
        let (s, c) = sin_cos(consts::FRAC_PI_4);
        assert!(close(s, c, 1e-30));
        assert!(close(s * s, Dd::from(0.5), 1e-30));
    }

    #[test]
    fn exp_identities() {
        assert!(close(exp(consts::LN_2), Dd::from(2.0), 1e-30));
        let a = Dd::from(0.731);
        let b = Dd::from(-2.25);
        let lhs = exp(a + b);
        let rhs = exp(a) * exp(b);
        assert!(f64::from(((lhs - rhs) / lhs).abs()) < 1e-30);
        assert!(close(exp(ZERO_DD), ONE_DD, 1e-32));
        assert!(f64::from(((exp(ONE_DD) - consts::E) / consts::E).abs()) < 1e-30);
    }

    #[test]
    fn gauss_dd_exactness() {
        let (x, w) = gauss_dd(12).unwrap();
        // integral of t^22 over [-1, 1] is 2/23
        let mut s = ZERO_DD;
        for (xi, wi) in x.iter().zip(&w) {
            s += *wi * xi.powi(22);
        }
        assert!(close(s, Dd::from(2.0) / 23.0, 1e-30));
        let total = w.iter().fold(ZERO_DD, |a, b| a + *b);
        assert!(close(total, Dd::from(2.0), 1e-30));
    }

    #[test]
    fn cholesky_round_trip() {
        let c = |r: f64, i: f64| DdComplex::from_c64(Complex64::new(r, i));
        let a = vec![
            vec![c(4.0, 0.0), c(1.0, -1.0), c(0.0, 0.5)],
            vec![c(1.0, 1.0), c(3.0, 0.0), c(0.2, 0.0)],
            vec![c(0.0, -0.5), c(0.2, 0.0), c(2.0, 0.0)],
        ];
        let l = cholesky(&a).unwrap();
        let b = vec![c(1.0, 0.0), c(0.0, 1.0), c(-1.0, 2.0)];
        let x = cholesky_solve(&l, &b);
        let r = matvec(&a, &x);
        for (u, v) in r.iter().zip(&b) {
            assert!(f64::from((*u - *v).norm_sqr()) < 1e-60);
        }
        let (lmin, lmax) = extreme_eigenvalues(&a, &l);
        assert!(lmin > 0.0 && lmax > lmin && lmax < 6.0);
        let bad = vec![vec![c(1.0, 0.0), c(2.0, 0.0)], vec![c(2.0, 0.0), c(1.0, 0.0)]];
        assert!(cholesky(&bad).is_err());
    }
}
