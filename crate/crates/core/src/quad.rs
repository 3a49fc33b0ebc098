//! Gauss-Legendre rules, geometrically graded composite rules, and the
//! adaptive panel builder used by the operator engine.

use std::sync::OnceLock;

use num_complex::Complex64;

use crate::error::{HnaError, Result};

pub const MAX_GAUSS: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct QuadRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QuadRule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// `q`-point Gauss-Legendre rule on `[-1, 1]`.
pub fn gauss_rule(q: usize) -> Result<QuadRule> {
    if q == 0 || q > MAX_GAUSS {
        return Err(HnaError::Config(format!("Gauss order must lie in 1..={MAX_GAUSS}, got {q}")));
    }
    Ok(gauss(q).clone())
}

/// Cached rule; panics if `q` is out of range.
pub fn gauss(q: usize) -> &'static QuadRule {
    static RULES: OnceLock<Vec<QuadRule>> = OnceLock::new();
    let rules = RULES.get_or_init(|| (1..=MAX_GAUSS).map(compute_gauss).collect());
    &rules[q - 1]
}

fn compute_gauss(q: usize) -> QuadRule {
    let mut nodes = vec![0.0; q];
    let mut weights = vec![0.0; q];
    let n = q as f64;
    for i in 0..q.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(q, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(q, x);
        dp = if d != 0.0 { d } else { dp };
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[q - 1 - i] = x;
        weights[i] = w;
        weights[q - 1 - i] = w;
    }
    if q % 2 == 1 {
        nodes[q / 2] = 0.0;
    }
    QuadRule { nodes, weights }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for j in 2..=n {
        let jf = j as f64;
        let p2 = ((2.0 * jf - 1.0) * x * p1 - (jf - 1.0) * p0) / jf;
        p0 = p1;
        p1 = p2;
    }
    (p1, n as f64 * (x * p1 - p0) / (x * x - 1.0))
}

/// Legendre values `P_0(x), ..., P_{out.len()-1}(x)` and their derivatives.
#[inline]
pub fn legendre_all(x: f64, vals: &mut [f64], ders: Option<&mut [f64]>) {
    let n = vals.len();
    if n == 0 {
        return;
    }
    vals[0] = 1.0;
    if n > 1 {
        vals[1] = x;
    }
    for j in 2..n {
        let jf = j as f64;
        vals[j] = ((2.0 * jf - 1.0) * x * vals[j - 1] - (jf - 1.0) * vals[j - 2]) / jf;
    }
    if let Some(d) = ders {
        d[0] = 0.0;
        for j in 1..n {
            // P'_j = j P_{j-1} + x P'_{j-1}
            d[j] = j as f64 * vals[j - 1] + x * d[j - 1];
        }
    }
}

/// A panel `[a, b]` of a composite rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Panel {
    pub a: f64,
    pub b: f64,
}

impl Panel {
    pub fn len(&self) -> f64 {
        self.b - self.a
    }
}

/// Number of geometric sub-panels per grading layer so that adjacent panel
/// ratios stay above 0.38; Gauss rules then converge at the rate of a panel
/// whose length is comparable to its distance from the singularity.
pub fn sublayers(sigma: f64) -> usize {
    (sigma.ln() / 0.38f64.ln()).ceil().max(1.0) as usize
}

/// Panels on `[a, b]` graded geometrically toward `a` (if `left`) and/or `b` (if `right`).
///
/// Each of the `layers` layers shrinks by `sigma` and is split into
/// [`sublayers`] geometric sub-panels; the innermost panel touches the endpoint.
/// When both ends are graded the interval is split at its midpoint.
pub fn graded_panels(a: f64, b: f64, left: bool, right: bool, layers: usize, sigma: f64) -> Vec<Panel> {
    // keep Gauss nodes distinguishable from a nonzero endpoint in floating point
    let floor = |e: f64| if e == 0.0 { f64::MIN_POSITIVE } else { 1e-13 * e.abs() };
    let mut out = Vec::new();
    match (left, right) {
        (false, false) => out.push(Panel { a, b }),
        (true, false) => grade_toward(a, b, layers, sigma, floor(a), &mut out),
        (false, true) => grade_toward(b, a, layers, sigma, floor(b), &mut out),
        (true, true) => {
            let m = 0.5 * (a + b);
            grade_toward(a, m, layers, sigma, floor(a), &mut out);
            grade_toward(b, m, layers, sigma, floor(b), &mut out);
        }
    }
    out
}

/// Geometric panels between the singular end `s` and the far end `f` (in
/// either order), appended in ascending order. Grading stops after `layers`
/// layers or when panels fall below `min_len`.
pub fn grade_toward(s: f64, f: f64, layers: usize, sigma: f64, min_len: f64, out: &mut Vec<Panel>) {
    let len = (f - s).abs();
    if len == 0.0 {
        return;
    }
    let dir = if f > s { 1.0 } else { -1.0 };
    let m = sublayers(sigma);
    let ratio = sigma.powf(1.0 / m as f64);
    // distances from s of panel breakpoints, outermost first
    let mut d = vec![len];
    let mut cur = len;
    'outer: for _ in 0..layers {
        for _ in 0..m {
            let next = cur * ratio;
            if next < min_len {
                break 'outer;
            }
            d.push(next);
            cur = next;
        }
    }
    d.push(0.0);
    let mut panels: Vec<Panel> = d
        .windows(2)
        .map(|w| {
            let (x0, x1) = (s + dir * w[0], s + dir * w[1]);
            Panel { a: x0.min(x1), b: x0.max(x1) }
        })
        .collect();
    panels.sort_by(|p, q| p.a.partial_cmp(&q.a).unwrap());
    out.extend(panels);
}

/// Splits panels longer than `h_max` uniformly.
pub fn cap_length(panels: Vec<Panel>, h_max: f64) -> Vec<Panel> {
    let mut out = Vec::with_capacity(panels.len());
    for p in panels {
        let m = (p.len() / h_max).ceil().max(1.0) as usize;
        let h = p.len() / m as f64;
        for i in 0..m {
            let a = p.a + h * i as f64;
            let b = if i + 1 == m { p.b } else { p.a + h * (i + 1) as f64 };
            out.push(Panel { a, b });
        }
    }
    out
}

/// Composite Gauss on geometrically graded panels; `singular` flags the ends
/// of `[a, b]` toward which panels are graded.
pub fn integrate_graded<F>(
    f: F,
    interval: (f64, f64),
    singular: (bool, bool),
    layers: usize,
    sigma: f64,
    q: usize,
) -> Result<Complex64>
where
    F: Fn(f64) -> Complex64,
{
    if !(sigma > 0.0 && sigma < 1.0) {
        return Err(HnaError::Config(format!("grading must lie in (0, 1), got {sigma}")));
    }
    let rule = gauss_rule(q)?;
    let (a, b) = interval;
    let mut sum = Complex64::new(0.0, 0.0);
    for p in graded_panels(a, b, singular.0, singular.1, layers, sigma) {
        let c = 0.5 * (p.a + p.b);
        let h = 0.5 * p.len();
        for (x, w) in rule.nodes.iter().zip(&rule.weights) {
            let v = f(c + h * x);
            if !v.re.is_finite() || !v.im.is_finite() {
                return Err(HnaError::Quadrature {
                    test: format!("integrand at {}", c + h * x),
                    trial: format!("panel [{}, {}]", p.a, p.b),
                });
            }
            sum += v * (w * h);
        }
    }
    Ok(sum)
}

/// Appends Gauss nodes and weights of `panels` to `nodes`/`weights`.
pub fn push_nodes(panels: &[Panel], rule: &QuadRule, nodes: &mut Vec<f64>, weights: &mut Vec<f64>) {
    for p in panels {
        let c = 0.5 * (p.a + p.b);
        let h = 0.5 * p.len();
        for (x, w) in rule.nodes.iter().zip(&rule.weights) {
            nodes.push(c + h * x);
            weights.push(w * h);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_rules() {
        let r1 = gauss_rule(1).unwrap();
        assert_eq!(r1.nodes, vec![0.0]);
        assert!((r1.weights[0] - 2.0).abs() < 1e-15);
        let r2 = gauss_rule(2).unwrap();
        assert!((r2.nodes[1] - 0.577_350_269_2).abs() < 1e-10);
        assert!((r2.nodes[0] + 0.577_350_269_2).abs() < 1e-10);
        assert!((r2.weights[0] - 1.0).abs() < 1e-14 && (r2.weights[1] - 1.0).abs() < 1e-14);
        assert!(gauss_rule(0).is_err());
        assert!(gauss_rule(65).is_err());
    }

    #[test]
    fn exactness() {
        for q in 1..=MAX_GAUSS {
            let r = gauss(q);
            let wsum: f64 = r.weights.iter().sum();
            assert!((wsum - 2.0).abs() < 1e-13, "q={q}");
            for deg in 0..(2 * q) {
                let got: f64 = r.nodes.iter().zip(&r.weights).map(|(x, w)| w * x.powi(deg as i32)).sum();
                let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
                assert!((got - exact).abs() < 1e-13 * exact.max(1.0), "q={q} deg={deg}");
            }
        }
        let r = gauss(5);
        let x9: f64 = r.nodes.iter().zip(&r.weights).map(|(x, w)| w * x.powi(9)).sum();
        assert!(x9.abs() < 1e-14);
    }

    #[test]
    fn graded_singular_integrals() {
        let c = |v: f64| Complex64::new(v, 0.0);
        let ln = integrate_graded(|t| c(t.ln()), (0.0, 1.0), (true, false), 20, 0.15, 10).unwrap();
        assert!((ln.re + 1.0).abs() < 1e-8);
        let sq = integrate_graded(|t| c(t.powf(-0.5)), (0.0, 1.0), (true, false), 20, 0.15, 10).unwrap();
        assert!((sq.re - 2.0).abs() < 1e-8);
        let corner = integrate_graded(|t| c(t.powf(-0.4)), (0.0, 1.0), (true, false), 20, 0.15, 10).unwrap();
        assert!((corner.re - 5.0 / 3.0).abs() < 1e-8);
        let right = integrate_graded(|t| c((1.0 - t).powf(-0.4)), (0.0, 1.0), (false, true), 20, 0.15, 10).unwrap();
        assert!((right.re - 5.0 / 3.0).abs() < 1e-8);
        let both = integrate_graded(|t| c((t * (1.0 - t)).ln()), (0.0, 1.0), (true, true), 20, 0.15, 10).unwrap();
        assert!((both.re + 2.0).abs() < 1e-8);
        assert!(integrate_graded(|_| c(f64::NAN), (0.0, 1.0), (false, false), 1, 0.15, 4).is_err());
        assert!(integrate_graded(|_| c(1.0), (0.0, 1.0), (false, false), 1, 1.5, 4).is_err());
    }

    #[test]
    fn oscillatory_resolution() {
        // 10 points per wavelength: panels of one wavelength with 10-point Gauss
        for &(k, l) in &[(10.0, 1.0), (1000.0, 10.0), (1e4, 1.0)] {
            let h = 2.0 * std::f64::consts::PI / k;
            let panels = cap_length(vec![Panel { a: 0.0, b: l }], h);
            let (mut x, mut w) = (Vec::new(), Vec::new());
            push_nodes(&panels, gauss(10), &mut x, &mut w);
            let got: Complex64 = x.iter().zip(&w).map(|(s, w)| Complex64::new(0.0, k * s).exp() * w).sum();
            let exact = (Complex64::new(0.0, k * l).exp() - 1.0) / Complex64::new(0.0, k);
            assert!((got - exact).norm() < 1e-8, "k={k}");
        }
    }

    #[test]
    fn legendre_derivatives() {
        let mut v = [0.0; 6];
        let mut d = [0.0; 6];
        legendre_all(0.3, &mut v, Some(&mut d));
        let x: f64 = 0.3;
        assert!((v[2] - 0.5 * (3.0 * x * x - 1.0)).abs() < 1e-15);
        assert!((d[3] - 0.5 * (15.0 * x * x - 3.0)).abs() < 1e-14);
    }

    #[test]
    fn grading_stops_at_floor() {
        let mut out = Vec::new();
        grade_toward(1.0, 0.0, 40, 0.15, 1e-6, &mut out);
        assert!(out.windows(2).all(|w| (w[0].b - w[1].a).abs() < 1e-15));
        assert!(out.last().unwrap().len() < 1e-5);
        assert!((out.last().unwrap().b - 1.0).abs() < 1e-15);
        assert!(out.iter().all(|p| p.len() > 0.0));
    }
}
