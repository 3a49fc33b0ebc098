//! Kernels of the 2D Helmholtz layer operators and their Galerkin pairings.
//!
//! Pairings are computed one element pair at a time. The outer integral runs
//! over the test element, the inner one over the trial element; both use
//! composite Gauss rules on panels that are graded geometrically toward any
//! point where the integrand is singular or nearly so, and capped in length
//! to resolve oscillation. Points near shared corners are represented by
//! their distance from the corner so that small separations are exact.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{HnaError, Result};
use crate::geometry::{Boundary, ConvexPolygon, Point};
use crate::quad::{gauss, grade_toward, legendre_all, Panel};
use crate::specfun::hankel01;

const I: Complex64 = Complex64::new(0.0, 1.0);
const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Relative length below which inner grading toward a singular point stops.
const INNER_FLOOR: f64 = 1e-12;
/// Relative length below which outer grading toward a singular point stops.
const OUTER_FLOOR: f64 = 1e-7;
/// Near-field rule: a panel may be at most `NEAR_RATIO` times its distance to the target.
const NEAR_RATIO: f64 = 1.0;

/// Quadrature resolution shared by all boundary integrals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadBudget {
    pub points_per_wavelength: f64,
    pub singular_layers: usize,
    pub singular_grading: f64,
    pub gauss_order: usize,
}

impl Default for QuadBudget {
    fn default() -> Self {
        QuadBudget { points_per_wavelength: 10.0, singular_layers: 20, singular_grading: 0.15, gauss_order: 10 }
    }
}

impl QuadBudget {
    pub fn validate(&self) -> Result<()> {
        if !(self.points_per_wavelength >= 1.0) {
            return Err(HnaError::Config("points_per_wavelength must be at least 1".into()));
        }
        if !(self.singular_grading > 0.0 && self.singular_grading < 1.0) {
            return Err(HnaError::Config(format!(
                "singular_grading must lie in (0, 1), got {}",
                self.singular_grading
            )));
        }
        if self.singular_layers == 0 {
            return Err(HnaError::Config("singular_layers must be positive".into()));
        }
        if self.gauss_order == 0 || self.gauss_order > crate::quad::MAX_GAUSS {
            return Err(HnaError::Config(format!("gauss_order must lie in 1..=64, got {}", self.gauss_order)));
        }
        Ok(())
    }

    /// Longest panel resolving oscillation at wavenumber `k_eff`.
    pub fn h_max(&self, k_eff: f64) -> f64 {
        if k_eff <= 0.0 {
            f64::INFINITY
        } else {
            self.gauss_order as f64 * 2.0 * PI / (self.points_per_wavelength * k_eff)
        }
    }

    fn ratio(&self) -> f64 {
        let m = crate::quad::sublayers(self.singular_grading);
        self.singular_grading.powf(1.0 / m as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelKind {
    /// `Phi(x, y) = (i/4) H_0(k|x - y|)`
    Phi,
    /// `dPhi/dnu(y)`, the double-layer kernel
    DnuY,
    /// `dPhi/dnu(x)`, the adjoint double-layer kernel
    DnuX,
}

/// Kernel value; `nu` is the normal at `y` for `DnuY` and at `x` for `DnuX`.
pub fn kernel_eval(kind: KernelKind, k: f64, x: &Point, y: &Point, nu: Option<&Point>) -> Result<Complex64> {
    let d = x - y;
    let r = d.norm();
    if r == 0.0 {
        return Err(HnaError::SingularEvaluation);
    }
    let (phi, c1) = kernel_pair(k, &d, r);
    match kind {
        KernelKind::Phi => Ok(phi),
        KernelKind::DnuY => {
            let n = nu.ok_or_else(|| HnaError::Config("double-layer kernel needs the normal at y".into()))?;
            Ok(-c1 * d.dot(n))
        }
        KernelKind::DnuX => {
            let n = nu.ok_or_else(|| HnaError::Config("adjoint double-layer kernel needs the normal at x".into()))?;
            Ok(c1 * d.dot(n))
        }
    }
}

/// `(Phi, c)` with `grad_x Phi = c (x - y)`.
#[inline]
fn kernel_pair(k: f64, _d: &Point, r: f64) -> (Complex64, Complex64) {
    let (h0, h1) = hankel01(k * r);
    let phi = Complex64::new(-0.25 * h0.im, 0.25 * h0.re);
    let c = Complex64::new(0.25 * k * h1.im / r, -0.25 * k * h1.re / r);
    (phi, c)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OperatorKind {
    SingleLayer,
    DoubleLayer,
    AdjointDoubleLayer,
    /// `x . grad_Gamma S`, paired by parts onto the test function.
    TangentialGradSingleLayer,
    /// `x.nu (I/2 + D') + x . grad_Gamma S - i eta S`
    StarCombined,
    /// `I/2 + D' - i eta S`
    Combined,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CouplingParam {
    Constant(Complex64),
    /// `eta(x) = k|x| + i/2`
    Star,
}

impl CouplingParam {
    pub fn validate(&self) -> Result<()> {
        if let CouplingParam::Constant(eta) = self {
            if eta.re == 0.0 {
                return Err(HnaError::Config("coupling parameter must have nonzero real part".into()));
            }
        }
        Ok(())
    }

    pub fn at(&self, k: f64, x: &Point) -> Complex64 {
        match self {
            CouplingParam::Constant(e) => *e,
            CouplingParam::Star => Complex64::new(k * x.norm(), 0.5),
        }
    }
}

/// Parameter interval `[a, b]` on a side, with the distances `ra = L - a`,
/// `rb = L - b` to the side's end stored separately so that whichever end
/// an endpoint is close to, its distance from that end is exact.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Span {
    pub side: usize,
    pub a: f64,
    pub b: f64,
    pub ra: f64,
    pub rb: f64,
}

impl Span {
    /// Span given by parameters measured from the side start.
    pub fn from_start(side: usize, length: f64, a: f64, b: f64) -> Self {
        Span { side, a, b, ra: length - a, rb: length - b }
    }

    /// Span given by distances `ra > rb` from the side end.
    pub fn from_end(side: usize, length: f64, ra: f64, rb: f64) -> Self {
        Span { side, a: length - ra, b: length - rb, ra, rb }
    }

    pub fn len(&self) -> f64 {
        if self.near_end() {
            self.ra - self.rb
        } else {
            self.b - self.a
        }
    }

    /// Whether the span is closer to the side end than to its start, in
    /// which case the distances `ra`, `rb` are the accurate description.
    pub fn near_end(&self) -> bool {
        self.a.min(self.b) > self.ra.min(self.rb)
    }

    /// Local coordinate in `[-1, 1]` of the point at parameter `s`, distance `r` from the side end.
    pub fn local(&self, s: f64, r: f64) -> f64 {
        if self.near_end() {
            ((self.ra - r) - (r - self.rb)) / self.len()
        } else {
            ((s - self.a) - (self.b - s)) / self.len()
        }
    }

    /// Gauss nodes `(s, r, weight)` on the subinterval `[lo, hi]` of this
    /// span's side, with panels no longer than `h_max`; the interval is
    /// given in the span's accurate coordinate (parameters from the start,
    /// or distances from the end when [`Span::near_end`]).
    pub fn nodes_between(&self, lo: f64, hi: f64, q: usize, h_max: f64, out: &mut Vec<(f64, f64, f64)>) {
        let len_side = self.a + self.ra;
        let rule = gauss(q);
        for p in crate::quad::cap_length(vec![Panel { a: lo, b: hi }], h_max) {
            let c = 0.5 * (p.a + p.b);
            let h = 0.5 * p.len();
            for (x, w) in rule.nodes.iter().zip(&rule.weights) {
                let u = c + h * x;
                if self.near_end() {
                    out.push((len_side - u, u, w * h));
                } else {
                    out.push((u, len_side - u, w * h));
                }
            }
        }
    }

    /// The span's own interval in its accurate coordinate.
    pub fn accurate_interval(&self) -> (f64, f64) {
        if self.near_end() {
            (self.rb, self.ra)
        } else {
            (self.a, self.b)
        }
    }
}

/// Local functions `scale * c_l P_l(xi) e^{i omega s}`, `l = 0..=degree`,
/// on one span, where `xi` maps the span to `[-1, 1]` and
/// `c_l = sqrt((2l + 1)/|span|)` when `normalized` (an L2-orthonormal set
/// before the phase), otherwise `c_l = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Element {
    pub span: Span,
    pub degree: usize,
    pub omega: f64,
    pub scale: Complex64,
    pub normalized: bool,
}

impl Element {
    pub fn new(span: Span, degree: usize, omega: f64) -> Self {
        Element { span, degree, omega, scale: Complex64::new(1.0, 0.0), normalized: true }
    }

    pub fn side(&self) -> usize {
        self.span.side
    }

    pub fn count(&self) -> usize {
        self.degree + 1
    }

    /// The element whose functions are the complex conjugates of this one's.
    pub fn conjugate(&self) -> Self {
        Element { omega: -self.omega, scale: self.scale.conj(), ..*self }
    }

    fn coef(&self, l: usize) -> f64 {
        if self.normalized {
            ((2 * l + 1) as f64 / self.span.len()).sqrt()
        } else {
            1.0
        }
    }

    pub fn contains(&self, s: f64) -> bool {
        s >= self.span.a && s <= self.span.b
    }

    /// Containment judged in the span's accurate coordinate.
    pub fn contains_at(&self, s: f64, r: f64) -> bool {
        if self.span.near_end() {
            r >= self.span.rb && r <= self.span.ra
        } else {
            s >= self.span.a && s <= self.span.b
        }
    }

    /// Values of all local functions at parameter `s`.
    pub fn eval(&self, s: f64, out: &mut [Complex64]) {
        self.eval_at(s, self.span.a + self.span.ra - s, out)
    }

    /// Values at parameter `s`, distance `r` from the side end.
    pub fn eval_at(&self, s: f64, r: f64, out: &mut [Complex64]) {
        let mut p = [0.0; 32];
        let n = self.count();
        legendre_all(self.span.local(s, r), &mut p[..n], None);
        let ph = self.scale * Complex64::from_polar(1.0, self.omega * s);
        for l in 0..n {
            out[l] = ph * (self.coef(l) * p[l]);
        }
    }

    /// Values and arclength derivatives of all local functions.
    pub fn eval_with_derivative(&self, s: f64, r: f64, vals: &mut [Complex64], ders: &mut [Complex64]) {
        let mut p = [0.0; 32];
        let mut dp = [0.0; 32];
        let n = self.count();
        let len = self.span.len();
        legendre_all(self.span.local(s, r), &mut p[..n], Some(&mut dp[..n]));
        let ph = self.scale * Complex64::from_polar(1.0, self.omega * s);
        for l in 0..n {
            let c = self.coef(l);
            vals[l] = ph * (c * p[l]);
            ders[l] = ph * Complex64::new(c * dp[l] * 2.0 / len, self.omega * c * p[l]);
        }
    }
}

/// Quadrature node on a side: parameter `t`, distance `rt` from the side end,
/// and weight. `delta = t - s` relative to the observation point when both lie
/// on the same side (NaN otherwise).
#[derive(Debug, Clone, Copy)]
struct QNode {
    t: f64,
    rt: f64,
    delta: f64,
    w: f64,
}

/// Observation point, either on a side (with exact distances to both ends) or free.
#[derive(Debug, Clone, Copy)]
struct Obs {
    side: Option<usize>,
    s: f64,
    r: f64,
    pos: Point,
}

impl Obs {
    fn on_side(bnd: &Boundary, side: usize, s: f64, r: f64) -> Self {
        let sd = &bnd.sides[side];
        let pos = if s <= r { sd.start + sd.tangent * s } else { sd.end - sd.tangent * r };
        Obs { side: Some(side), s, r, pos }
    }

    fn free(x: Point) -> Self {
        Obs { side: None, s: f64::NAN, r: f64::NAN, pos: x }
    }
}

/// `t1 - t2` for two parameters on one side, using whichever end both are closer to.
#[inline]
fn pdiff(t1: f64, r1: f64, t2: f64, r2: f64) -> f64 {
    if t1.min(t2) <= r1.min(r2) {
        t1 - t2
    } else {
        r2 - r1
    }
}

/// `x - P` for the observation point and vertex `P` (start or end of side `j`).
fn obs_minus_vertex(bnd: &Boundary, obs: &Obs, j: usize, at_end: bool) -> Point {
    let sd = &bnd.sides[j];
    let vertex = if at_end { sd.end } else { sd.start };
    if let Some(i) = obs.side {
        let si = &bnd.sides[i];
        if i == j {
            return if at_end { -si.tangent * obs.r } else { si.tangent * obs.s };
        }
        if !at_end && bnd.next(i) == Some(j) {
            // start of side j is the end of side i
            return -si.tangent * obs.r;
        }
        if at_end && bnd.prev(i) == Some(j) {
            // end of side j is the start of side i
            return si.tangent * obs.s;
        }
    }
    obs.pos - vertex
}

/// `x - y(node)` for a node on side `j`.
#[inline]
fn diff(bnd: &Boundary, obs: &Obs, j: usize, node: &QNode) -> Point {
    let sd = &bnd.sides[j];
    if let Some(i) = obs.side {
        if i == j {
            let d = if node.delta.is_nan() { pdiff(obs.s, obs.r, node.t, node.rt) } else { -node.delta };
            return sd.tangent * d;
        }
        let si = &bnd.sides[i];
        if bnd.next(i) == Some(j) {
            // shared vertex: end of side i, start of side j
            return -si.tangent * obs.r - sd.tangent * node.t;
        }
        if bnd.prev(i) == Some(j) {
            // shared vertex: start of side i, end of side j
            return si.tangent * obs.s + sd.tangent * node.rt;
        }
    }
    let y = if node.t <= node.rt { sd.start + sd.tangent * node.t } else { sd.end - sd.tangent * node.rt };
    obs.pos - y
}

/// Nodes on `span` for integrals with a kernel singular at `obs`.
fn inner_nodes(bnd: &Boundary, obs: &Obs, span: &Span, k_eff: f64, budget: &QuadBudget, out: &mut Vec<QNode>) {
    out.clear();
    let len = span.len();
    let floor = INNER_FLOOR * len;
    let h_max = budget.h_max(k_eff);
    let rule = gauss(budget.gauss_order);
    let near = |dist: f64| if dist > 0.0 { (NEAR_RATIO * dist * budget.ratio()).max(floor) } else { floor };
    let j = span.side;
    if obs.side == Some(j) {
        let s_minus_a = pdiff(obs.s, obs.r, span.a, span.ra);
        let b_minus_s = pdiff(span.b, span.rb, obs.s, obs.r);
        if s_minus_a > 0.0 && b_minus_s > 0.0 {
            push_graded(out, rule, s_minus_a, floor, h_max, budget, |v| (obs.s - v, obs.r + v, -v));
            push_graded(out, rule, b_minus_s, floor, h_max, budget, |v| (obs.s + v, obs.r - v, v));
        } else if s_minus_a <= 0.0 {
            let gap = -s_minus_a;
            push_graded(out, rule, len, near(gap), h_max, budget, |v| (span.a + v, span.ra - v, gap + v));
        } else {
            let gap = -b_minus_s;
            push_graded(out, rule, len, near(gap), h_max, budget, |v| (span.b - v, span.rb + v, -(gap + v)));
        }
        return;
    }
    let sd = &bnd.sides[j];
    // projection of the observation point, measured from the nearer side end
    let to_start = obs_minus_vertex(bnd, obs, j, false);
    let to_end = obs_minus_vertex(bnd, obs, j, true);
    let (tp, rp) = if to_start.norm() <= to_end.norm() {
        let t = to_start.dot(&sd.tangent);
        (t, sd.length - t)
    } else {
        let r = -to_end.dot(&sd.tangent);
        (sd.length - r, r)
    };
    let perp = to_start.dot(&sd.normal).abs();
    let nan = f64::NAN;
    if pdiff(tp, rp, span.a, span.ra) <= 0.0 {
        let along = -pdiff(tp, rp, span.a, span.ra);
        let dist = (along * along + perp * perp).sqrt();
        push_graded(out, rule, len, near(dist), h_max, budget, |v| (span.a + v, span.ra - v, nan));
    } else if pdiff(span.b, span.rb, tp, rp) <= 0.0 {
        let along = -pdiff(span.b, span.rb, tp, rp);
        let dist = (along * along + perp * perp).sqrt();
        push_graded(out, rule, len, near(dist), h_max, budget, |v| (span.b - v, span.rb + v, nan));
    } else {
        let left = pdiff(tp, rp, span.a, span.ra);
        let right = pdiff(span.b, span.rb, tp, rp);
        let m = near(perp);
        push_graded(out, rule, left, m, h_max, budget, |v| (tp - v, rp + v, nan));
        push_graded(out, rule, right, m, h_max, budget, |v| (tp + v, rp - v, nan));
    }
}

/// Gauss nodes on `[0, len]` in the offset variable `v`, graded toward `v = 0`
/// until panels are shorter than `min_len`, mapped through `map(v) = (t, rt, delta)`.
fn push_graded<F>(out: &mut Vec<QNode>, rule: &crate::quad::QuadRule, len: f64, min_len: f64, h_max: f64, budget: &QuadBudget, map: F)
where
    F: Fn(f64) -> (f64, f64, f64),
{
    if !(len > 0.0) {
        return;
    }
    let mut panels = Vec::new();
    if min_len < len {
        grade_toward(0.0, len, 400, budget.singular_grading, min_len, &mut panels);
    } else {
        panels.push(Panel { a: 0.0, b: len });
    }
    for p in crate::quad::cap_length(panels, h_max) {
        let c = 0.5 * (p.a + p.b);
        let h = 0.5 * p.len();
        for (x, w) in rule.nodes.iter().zip(&rule.weights) {
            let (t, rt, delta) = map(c + h * x);
            out.push(QNode { t, rt, delta, w: w * h });
        }
    }
}

/// Outer nodes on the test span `test` for pairing against `trial`.
fn outer_nodes(bnd: &Boundary, test: &Span, trial: &Span, k_eff: f64, budget: &QuadBudget) -> (Vec<QNode>, bool) {
    let len = test.len();
    let floor = OUTER_FLOOR * len;
    let h_max = budget.h_max(k_eff);
    let rule = gauss(budget.gauss_order);
    let nan = f64::NAN;
    let scale = bnd.diameter();
    let touch_tol = 1e-14 * scale;
    // candidate points of the test span closest to the trial span, each as (t, rt, distance)
    let mut cands: Vec<(f64, f64, f64)> = Vec::new();
    for &(t, rt) in &[(test.a, test.ra), (test.b, test.rb)] {
        let obs = Obs::on_side(bnd, test.side, t, rt);
        cands.push((t, rt, span_distance(bnd, &obs, trial)));
    }
    for &(t, rt) in &[(trial.a, trial.ra), (trial.b, trial.rb)] {
        let obs = Obs::on_side(bnd, trial.side, t, rt);
        let sd = &bnd.sides[test.side];
        let to_start = obs_minus_vertex(bnd, &obs, test.side, false);
        let to_end = obs_minus_vertex(bnd, &obs, test.side, true);
        let (tp, rp) = if to_start.norm() <= to_end.norm() {
            let t = to_start.dot(&sd.tangent);
            (t, sd.length - t)
        } else {
            let r = -to_end.dot(&sd.tangent);
            (sd.length - r, r)
        };
        if pdiff(tp, rp, test.a, test.ra) > 0.0 && pdiff(test.b, test.rb, tp, rp) > 0.0 {
            let o = Obs::on_side(bnd, test.side, tp, rp);
            cands.push((tp, rp, span_distance(bnd, &o, trial)));
        }
    }
    let touching = cands.iter().any(|c| c.2 <= touch_tol);
    let mut targets: Vec<(f64, f64, f64)> = if touching {
        cands.iter().copied().filter(|c| c.2 <= touch_tol).map(|c| (c.0, c.1, 0.0)).collect()
    } else {
        let best = cands.iter().copied().fold((0.0, 0.0, f64::INFINITY), |a, c| if c.2 < a.2 { c } else { a });
        if best.2 < len {
            vec![best]
        } else {
            vec![]
        }
    };
    targets.sort_by(|x, y| pdiff(x.0, x.1, y.0, y.1).partial_cmp(&0.0).unwrap());
    targets.dedup_by(|x, y| pdiff(x.0, x.1, y.0, y.1).abs() <= touch_tol);
    let ratio = budget.ratio();
    let min_len = |d: f64| if d > 0.0 { (NEAR_RATIO * d * ratio).max(floor) } else { floor };
    let mut out = Vec::new();
    // breakpoints: test endpoints plus interior targets
    let mut pts: Vec<(f64, f64, Option<f64>)> = vec![(test.a, test.ra, None)];
    for t in &targets {
        let at_a = pdiff(t.0, t.1, test.a, test.ra).abs() <= touch_tol;
        let at_b = pdiff(test.b, test.rb, t.0, t.1).abs() <= touch_tol;
        if at_a {
            pts[0].2 = Some(t.2);
        } else if !at_b {
            pts.push((t.0, t.1, Some(t.2)));
        }
    }
    let end_target = targets.iter().find(|t| pdiff(test.b, test.rb, t.0, t.1).abs() <= touch_tol).map(|t| t.2);
    pts.push((test.b, test.rb, end_target));
    for w in pts.windows(2) {
        let (t0, r0, g0) = w[0];
        let (t1, r1, g1) = w[1];
        let piece = pdiff(t1, r1, t0, r0);
        if piece <= 0.0 {
            continue;
        }
        match (g0, g1) {
            (None, None) => push_graded(&mut out, rule, piece, piece, h_max, budget, |v| (t0 + v, r0 - v, nan)),
            (Some(d), None) => push_graded(&mut out, rule, piece, min_len(d), h_max, budget, |v| (t0 + v, r0 - v, nan)),
            (None, Some(d)) => push_graded(&mut out, rule, piece, min_len(d), h_max, budget, |v| (t1 - v, r1 + v, nan)),
            (Some(d0), Some(d1)) => {
                let half = 0.5 * piece;
                push_graded(&mut out, rule, half, min_len(d0), h_max, budget, |v| (t0 + v, r0 - v, nan));
                push_graded(&mut out, rule, half, min_len(d1), h_max, budget, |v| (t1 - v, r1 + v, nan));
            }
        }
    }
    (out, touching)
}

/// Distance from an observation point to a span.
fn span_distance(bnd: &Boundary, obs: &Obs, span: &Span) -> f64 {
    let j = span.side;
    if obs.side == Some(j) {
        let s_minus_a = pdiff(obs.s, obs.r, span.a, span.ra);
        let b_minus_s = pdiff(span.b, span.rb, obs.s, obs.r);
        return (-s_minus_a).max(-b_minus_s).max(0.0);
    }
    let sd = &bnd.sides[j];
    let to_start = obs_minus_vertex(bnd, obs, j, false);
    let to_end = obs_minus_vertex(bnd, obs, j, true);
    let (tp, rp) = if to_start.norm() <= to_end.norm() {
        let t = to_start.dot(&sd.tangent);
        (t, sd.length - t)
    } else {
        let r = -to_end.dot(&sd.tangent);
        (sd.length - r, r)
    };
    let perp = to_start.dot(&sd.normal).abs();
    let along = (-pdiff(tp, rp, span.a, span.ra)).max(-pdiff(span.b, span.rb, tp, rp)).max(0.0);
    (along * along + perp * perp).sqrt()
}

/// Which inner integrals an operator needs.
#[derive(Debug, Clone, Copy, Default)]
struct Needs {
    s: bool,
    dnx: bool,
    dny: bool,
    tan: bool,
}

fn needs_of(kind: OperatorKind) -> Needs {
    match kind {
        OperatorKind::SingleLayer | OperatorKind::TangentialGradSingleLayer => Needs { s: true, ..Default::default() },
        OperatorKind::DoubleLayer => Needs { dny: true, ..Default::default() },
        OperatorKind::AdjointDoubleLayer => Needs { dnx: true, ..Default::default() },
        OperatorKind::StarCombined | OperatorKind::Combined => Needs { s: true, dnx: true, ..Default::default() },
    }
}

#[derive(Debug, Clone)]
struct InnerVals {
    s: Vec<Complex64>,
    dnx: Vec<Complex64>,
    dny: Vec<Complex64>,
    tan: Vec<Complex64>,
}

impl InnerVals {
    fn new(n: usize) -> Self {
        InnerVals { s: vec![ZERO; n], dnx: vec![ZERO; n], dny: vec![ZERO; n], tan: vec![ZERO; n] }
    }

    fn clear(&mut self) {
        for v in [&mut self.s, &mut self.dnx, &mut self.dny, &mut self.tan] {
            v.iter_mut().for_each(|z| *z = ZERO);
        }
    }
}

/// Accumulates inner integrals of the trial functions at one observation point.
#[allow(clippy::too_many_arguments)]
fn accumulate_inner(
    bnd: &Boundary,
    obs: &Obs,
    trial: &Element,
    nodes: &[QNode],
    basis: Option<&[Complex64]>,
    k: f64,
    needs: Needs,
    out: &mut InnerVals,
) -> Result<()> {
    let j = trial.side();
    let n = trial.count();
    let sdj = bnd.sides[j];
    let (nu_x, tau_x) = match obs.side {
        Some(i) => (bnd.sides[i].normal, bnd.sides[i].tangent),
        None => (Point::zeros(), Point::zeros()),
    };
    let same = obs.side == Some(j);
    let need_grad = (needs.dnx || needs.tan) && !same || needs.dny && !same;
    let mut vals = [ZERO; 32];
    out.clear();
    for (q, node) in nodes.iter().enumerate() {
        let d = diff(bnd, obs, j, node);
        let r = d.norm();
        if !(r > 0.0) {
            return Err(HnaError::SingularEvaluation);
        }
        let (phi, c1) = kernel_pair(k, &d, r);
        let f: &[Complex64] = match basis {
            Some(b) => &b[q * n..(q + 1) * n],
            None => {
                trial.eval_at(node.t, node.rt, &mut vals[..n]);
                for v in vals[..n].iter_mut() {
                    *v *= node.w;
                }
                &vals[..n]
            }
        };
        if needs.s {
            for l in 0..n {
                out.s[l] += phi * f[l];
            }
        }
        if need_grad {
            if needs.dnx {
                let kx = c1 * d.dot(&nu_x);
                for l in 0..n {
                    out.dnx[l] += kx * f[l];
                }
            }
            if needs.dny {
                let ky = -c1 * d.dot(&sdj.normal);
                for l in 0..n {
                    out.dny[l] += ky * f[l];
                }
            }
            if needs.tan {
                let kt = c1 * d.dot(&tau_x);
                for l in 0..n {
                    out.tan[l] += kt * f[l];
                }
            }
        }
    }
    if !out.s.iter().chain(&out.dnx).chain(&out.dny).chain(&out.tan).all(|z| z.re.is_finite() && z.im.is_finite()) {
        return Err(HnaError::Quadrature { test: format!("point {:?}", obs.pos), trial: format!("{:?}", trial.span) });
    }
    Ok(())
}

fn trial_k_eff(k: f64, trial: &Element) -> f64 {
    k + trial.omega.abs()
}

/// `B[t][l] = <A f_l, g_t>` for trial functions `f_l` on `trial` and test functions `g_t` on `test`.
pub fn element_block(
    bnd: &Boundary,
    kind: OperatorKind,
    coupling: CouplingParam,
    k: f64,
    test: &Element,
    trial: &Element,
    budget: &QuadBudget,
) -> Result<DMatrix<Complex64>> {
    let needs = needs_of(kind);
    block_impl(bnd, kind, needs, coupling, k, test, trial, budget)
}

/// Direct evaluation of `<x . grad_Gamma S f_l, g_t>` with the derivative kernel;
/// valid only for spans that do not touch.
pub fn tangential_direct_block(
    bnd: &Boundary,
    k: f64,
    test: &Element,
    trial: &Element,
    budget: &QuadBudget,
) -> Result<DMatrix<Complex64>> {
    let needs = Needs { tan: true, ..Default::default() };
    block_impl(bnd, OperatorKind::TangentialGradSingleLayer, needs, CouplingParam::Star, k, test, trial, budget)
}

#[allow(clippy::too_many_arguments)]
fn block_impl(
    bnd: &Boundary,
    kind: OperatorKind,
    needs: Needs,
    coupling: CouplingParam,
    k: f64,
    test: &Element,
    trial: &Element,
    budget: &QuadBudget,
) -> Result<DMatrix<Complex64>> {
    let nt = test.count();
    let nl = trial.count();
    let i = test.side();
    let j = trial.side();
    let side_i = bnd.sides[i];
    let mut block = DMatrix::<Complex64>::zeros(nt, nl);
    let same = i == j;
    let by_parts = !needs.tan
        && matches!(kind, OperatorKind::TangentialGradSingleLayer | OperatorKind::StarCombined);
    // operators whose kernel vanishes identically on a straight side
    if same && !needs.s && !needs.tan {
        add_identity_part(bnd, kind, k, test, trial, budget, &mut block);
        return Ok(block);
    }
    let k_in = trial_k_eff(k, trial);
    let k_out = k.max(trial.omega.abs()) + test.omega.abs();
    let (outer, touching) = outer_nodes(bnd, &test.span, &trial.span, k_out, budget);
    let mut shared_nodes = Vec::new();
    let mut shared_basis = Vec::new();
    if !touching {
        // all outer points are separated from the trial span: one inner rule serves them all
        let target = closest_obs_on(bnd, &test.span, &trial.span);
        inner_nodes(bnd, &target, &trial.span, k_in, budget, &mut shared_nodes);
        if same {
            for n in shared_nodes.iter_mut() {
                n.delta = f64::NAN;
            }
        }
        shared_basis.resize(shared_nodes.len() * nl, ZERO);
        for (q, node) in shared_nodes.iter().enumerate() {
            trial.eval_at(node.t, node.rt, &mut shared_basis[q * nl..(q + 1) * nl]);
            for v in shared_basis[q * nl..(q + 1) * nl].iter_mut() {
                *v *= node.w;
            }
        }
    }
    let mut nodes = Vec::new();
    let mut inner = InnerVals::new(nl);
    let mut g = [ZERO; 32];
    let mut dg = [ZERO; 32];
    for on in &outer {
        let obs = Obs::on_side(bnd, i, on.t, on.rt);
        if touching {
            inner_nodes(bnd, &obs, &trial.span, k_in, budget, &mut nodes);
            accumulate_inner(bnd, &obs, trial, &nodes, None, k, needs, &mut inner)?;
        } else {
            accumulate_inner(bnd, &obs, trial, &shared_nodes, Some(&shared_basis), k, needs, &mut inner)?;
        }
        test.eval_with_derivative(on.t, on.rt, &mut g[..nt], &mut dg[..nt]);
        let x = obs.pos;
        let xn = x.dot(&side_i.normal);
        let xt = x.dot(&side_i.tangent);
        let w = on.w;
        match kind {
            OperatorKind::SingleLayer => {
                for t in 0..nt {
                    let gc = g[t].conj() * w;
                    for l in 0..nl {
                        block[(t, l)] += gc * inner.s[l];
                    }
                }
            }
            OperatorKind::DoubleLayer => {
                for t in 0..nt {
                    let gc = g[t].conj() * w;
                    for l in 0..nl {
                        block[(t, l)] += gc * inner.dny[l];
                    }
                }
            }
            OperatorKind::AdjointDoubleLayer => {
                for t in 0..nt {
                    let gc = g[t].conj() * w;
                    for l in 0..nl {
                        block[(t, l)] += gc * inner.dnx[l];
                    }
                }
            }
            OperatorKind::TangentialGradSingleLayer => {
                for t in 0..nt {
                    if by_parts {
                        let h = (g[t].conj() + dg[t].conj() * xt) * w;
                        for l in 0..nl {
                            block[(t, l)] -= h * inner.s[l];
                        }
                    } else {
                        let gc = g[t].conj() * (w * xt);
                        for l in 0..nl {
                            block[(t, l)] += gc * inner.tan[l];
                        }
                    }
                }
            }
            OperatorKind::StarCombined => {
                let eta = coupling.at(k, &x);
                for t in 0..nt {
                    let gc = g[t].conj() * w;
                    let h = (g[t].conj() + dg[t].conj() * xt) * w;
                    for l in 0..nl {
                        block[(t, l)] += gc * (inner.dnx[l] * xn - I * eta * inner.s[l]) - h * inner.s[l];
                    }
                }
            }
            OperatorKind::Combined => {
                let eta = coupling.at(k, &x);
                for t in 0..nt {
                    let gc = g[t].conj() * w;
                    for l in 0..nl {
                        block[(t, l)] += gc * (inner.dnx[l] - I * eta * inner.s[l]);
                    }
                }
            }
        }
    }
    if by_parts {
        // boundary terms [(x.tau) S f conj(g)] at the ends of the test element
        for (sign, t_end, r_end) in [(1.0, test.span.b, test.span.rb), (-1.0, test.span.a, test.span.ra)] {
            let obs = Obs::on_side(bnd, i, t_end, r_end);
            inner_nodes(bnd, &obs, &trial.span, k_in, budget, &mut nodes);
            let sneeds = Needs { s: true, ..Default::default() };
            accumulate_inner(bnd, &obs, trial, &nodes, None, k, sneeds, &mut inner)?;
            test.eval_at(t_end, r_end, &mut g[..nt]);
            let xt = obs.pos.dot(&side_i.tangent);
            for t in 0..nt {
                let gc = g[t].conj() * (sign * xt);
                for l in 0..nl {
                    block[(t, l)] += gc * inner.s[l];
                }
            }
        }
    }
    add_identity_part(bnd, kind, k, test, trial, budget, &mut block);
    Ok(block)
}

/// The observation point on `test` closest to `trial`.
fn closest_obs_on(bnd: &Boundary, test: &Span, trial: &Span) -> Obs {
    let mut best = (f64::INFINITY, Obs::on_side(bnd, test.side, test.a, test.ra));
    let rule = [0.0, 0.25, 0.5, 0.75, 1.0];
    for &f in &rule {
        let (t, rt) = if f <= 0.5 {
            (test.a + f * test.len(), test.ra - f * test.len())
        } else {
            (test.b - (1.0 - f) * test.len(), test.rb + (1.0 - f) * test.len())
        };
        let o = Obs::on_side(bnd, test.side, t, rt);
        let d = span_distance(bnd, &o, trial);
        if d < best.0 {
            best = (d, o);
        }
    }
    // refine: golden-section search on the (convex) distance function
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    let at = |f: f64| {
        let (t, rt) = if f <= 0.5 {
            (test.a + f * test.len(), test.ra - f * test.len())
        } else {
            (test.b - (1.0 - f) * test.len(), test.rb + (1.0 - f) * test.len())
        };
        Obs::on_side(bnd, test.side, t, rt)
    };
    let gr = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..80 {
        let m1 = hi - gr * (hi - lo);
        let m2 = lo + gr * (hi - lo);
        if span_distance(bnd, &at(m1), trial) <= span_distance(bnd, &at(m2), trial) {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    let o = at(0.5 * (lo + hi));
    if span_distance(bnd, &o, trial) < best.0 {
        o
    } else {
        best.1
    }
}

/// Identity contributions `c <f_l, g_t>` on the overlap of the two spans.
fn add_identity_part(
    bnd: &Boundary,
    kind: OperatorKind,
    k: f64,
    test: &Element,
    trial: &Element,
    budget: &QuadBudget,
    block: &mut DMatrix<Complex64>,
) {
    let _ = k;
    if test.side() != trial.side() {
        return;
    }
    let side = &bnd.sides[test.side()];
    let c = match kind {
        OperatorKind::StarCombined => 0.5 * side.start.dot(&side.normal),
        OperatorKind::Combined => 0.5,
        _ => return,
    };
    let m = mass_block(test, trial, budget);
    *block += m * Complex64::new(c, 0.0);
}

/// `M[t][l] = int f_l conj(g_t) ds` over the overlap of two elements on one side.
pub fn mass_block(test: &Element, trial: &Element, budget: &QuadBudget) -> DMatrix<Complex64> {
    let nt = test.count();
    let nl = trial.count();
    let mut m = DMatrix::<Complex64>::zeros(nt, nl);
    if test.side() != trial.side() {
        return m;
    }
    // overlap in the coordinate that is accurate for the shorter span
    let anchor = if test.span.len() <= trial.span.len() { test.span } else { trial.span };
    let (lo, hi) = if anchor.near_end() {
        (test.span.rb.max(trial.span.rb), test.span.ra.min(trial.span.ra))
    } else {
        (test.span.a.max(trial.span.a), test.span.b.min(trial.span.b))
    };
    if !(hi > lo) {
        return m;
    }
    let q = (budget.gauss_order).max((test.degree + trial.degree) / 2 + 2).min(crate::quad::MAX_GAUSS);
    let k_eff = (trial.omega - test.omega).abs();
    let h_max = if k_eff > 0.0 { q as f64 * 2.0 * PI / (budget.points_per_wavelength * k_eff) } else { f64::INFINITY };
    let mut nodes = Vec::new();
    anchor.nodes_between(lo, hi, q, h_max, &mut nodes);
    let mut f = [ZERO; 32];
    let mut g = [ZERO; 32];
    for (s, r, w) in nodes {
        test.eval_at(s, r, &mut g[..nt]);
        trial.eval_at(s, r, &mut f[..nl]);
        for t in 0..nt {
            let gc = g[t].conj() * w;
            for l in 0..nl {
                m[(t, l)] += gc * f[l];
            }
        }
    }
    m
}

/// One Galerkin entry `<A f, g>`, with `f` the `l`-th function of `trial`
/// and `g` the `t`-th function of `test`.
#[allow(clippy::too_many_arguments)]
pub fn weak_pairing(
    bnd: &Boundary,
    kind: OperatorKind,
    coupling: CouplingParam,
    k: f64,
    trial: (&Element, usize),
    test: (&Element, usize),
    budget: &QuadBudget,
) -> Result<Complex64> {
    budget.validate()?;
    coupling.validate()?;
    if trial.1 > trial.0.degree || test.1 > test.0.degree {
        return Err(HnaError::Config("local function index exceeds element degree".into()));
    }
    let b = element_block(bnd, kind, coupling, k, test.0, trial.0, budget)?;
    Ok(b[(test.1, trial.1)])
}

/// Galerkin matrix over a list of elements: rows indexed by test functions,
/// columns by trial functions, both in element order.
pub fn assemble_matrix(
    bnd: &Boundary,
    kind: OperatorKind,
    coupling: CouplingParam,
    k: f64,
    elements: &[Element],
    budget: &QuadBudget,
) -> Result<DMatrix<Complex64>> {
    assemble_rect(bnd, kind, coupling, k, elements, elements, budget)
}

/// Rectangular Galerkin matrix `<A trial, test>`.
pub fn assemble_rect(
    bnd: &Boundary,
    kind: OperatorKind,
    coupling: CouplingParam,
    k: f64,
    tests: &[Element],
    trials: &[Element],
    budget: &QuadBudget,
) -> Result<DMatrix<Complex64>> {
    budget.validate()?;
    coupling.validate()?;
    let off = |els: &[Element]| {
        let mut o = Vec::with_capacity(els.len() + 1);
        o.push(0usize);
        for e in els {
            o.push(o.last().unwrap() + e.count());
        }
        o
    };
    let ro = off(tests);
    let co = off(trials);
    let pairs: Vec<(usize, usize)> =
        (0..tests.len()).flat_map(|a| (0..trials.len()).map(move |b| (a, b))).collect();
    let blocks: Vec<Result<DMatrix<Complex64>>> = pairs
        .par_iter()
        .map(|&(a, b)| element_block(bnd, kind, coupling, k, &tests[a], &trials[b], budget))
        .collect();
    let mut m = DMatrix::<Complex64>::zeros(*ro.last().unwrap(), *co.last().unwrap());
    for (&(a, b), blk) in pairs.iter().zip(blocks) {
        let blk = blk?;
        m.view_mut((ro[a], co[b]), (blk.nrows(), blk.ncols())).copy_from(&blk);
    }
    Ok(m)
}

/// Right-hand side `<f, g_t>` for a function given on the boundary.
pub fn load_vector<F>(bnd: &Boundary, elements: &[Element], k_eff: f64, budget: &QuadBudget, f: F) -> Vec<Complex64>
where
    F: Fn(usize, f64, &Point) -> Complex64 + Sync,
{
    let parts: Vec<Vec<Complex64>> = elements
        .par_iter()
        .map(|e| {
            let side = &bnd.sides[e.side()];
            let n = e.count();
            let mut acc = vec![ZERO; n];
            let mut g = [ZERO; 32];
            let q = budget.gauss_order.max(e.degree + 2).min(crate::quad::MAX_GAUSS);
            let h_max = budget.h_max(k_eff + e.omega.abs());
            let (lo, hi) = e.span.accurate_interval();
            let mut nodes = Vec::new();
            e.span.nodes_between(lo, hi, q, h_max, &mut nodes);
            for (s, r, w) in nodes {
                let y = if s <= r { side.point(s) } else { side.end - side.tangent * r };
                let v = f(e.side(), s, &y) * w;
                e.eval_at(s, r, &mut g[..n]);
                for t in 0..n {
                    acc[t] += v * g[t].conj();
                }
            }
            acc
        })
        .collect();
    parts.into_iter().flatten().collect()
}

/// Which layer potential to evaluate off the boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PotentialKind {
    Single,
    Double,
}

/// `int Phi(x, y) f(y) ds(y)` (single) or `int dPhi(x, y)/dnu(y) f(y) ds(y)` (double)
/// for `x` off the boundary, where `f` is a sum of element expansions.
pub fn element_potential(
    bnd: &Boundary,
    kind: PotentialKind,
    k: f64,
    terms: &[(Element, Vec<Complex64>)],
    x: &Point,
    budget: &QuadBudget,
) -> Result<Complex64> {
    let obs = Obs::free(*x);
    let needs = match kind {
        PotentialKind::Single => Needs { s: true, ..Default::default() },
        PotentialKind::Double => Needs { dny: true, ..Default::default() },
    };
    let mut nodes = Vec::new();
    let mut sum = ZERO;
    for (e, c) in terms {
        let mut inner = InnerVals::new(e.count());
        inner_nodes(bnd, &obs, &e.span, trial_k_eff(k, e), budget, &mut nodes);
        accumulate_inner(bnd, &obs, e, &nodes, None, k, needs, &mut inner)?;
        let v = if kind == PotentialKind::Single { &inner.s } else { &inner.dny };
        for (a, b) in v.iter().zip(c) {
            sum += a * b;
        }
    }
    Ok(sum)
}

/// Layer potential of a boundary function `f(side, s, y)` at `x` off the
/// boundary; `aux` is a further point near which `f` varies rapidly (for
/// instance a source point), toward which panels are also refined.
#[allow(clippy::too_many_arguments)]
pub fn function_potential<F>(
    bnd: &Boundary,
    kind: PotentialKind,
    k: f64,
    x: &Point,
    aux: Option<&Point>,
    budget: &QuadBudget,
    f: F,
) -> Result<Complex64>
where
    F: Fn(usize, f64, &Point) -> Complex64,
{
    let obs = Obs::free(*x);
    let mut nodes = Vec::new();
    let mut sum = ZERO;
    for (j, sd) in bnd.sides.iter().enumerate() {
        let span = Span::from_start(j, sd.length, 0.0, sd.length);
        inner_nodes(bnd, &obs, &span, k, budget, &mut nodes);
        if let Some(z) = aux {
            nodes = refine_toward(bnd, &span, &nodes, z, budget);
        }
        for node in &nodes {
            let d = diff(bnd, &obs, j, node);
            let r = d.norm();
            let y = sd.point(node.t);
            let (phi, c1) = kernel_pair(k, &d, r);
            let kv = match kind {
                PotentialKind::Single => phi,
                PotentialKind::Double => -c1 * d.dot(&sd.normal),
            };
            sum += kv * f(j, node.t, &y) * node.w;
        }
    }
    if !(sum.re.is_finite() && sum.im.is_finite()) {
        return Err(HnaError::Quadrature { test: format!("point {x:?}"), trial: "boundary".into() });
    }
    Ok(sum)
}

/// Splits the panels underlying `nodes` so that no panel is longer than its
/// distance to `z`. Nodes come in groups of one Gauss rule per panel.
fn refine_toward(bnd: &Boundary, span: &Span, nodes: &[QNode], z: &Point, budget: &QuadBudget) -> Vec<QNode> {
    let q = budget.gauss_order;
    let rule = gauss(q);
    let sd = &bnd.sides[span.side];
    let mut out = Vec::with_capacity(nodes.len());
    let mut stack: Vec<(f64, f64)> = Vec::new();
    for chunk in nodes.chunks(q) {
        // recover the panel from its first and last Gauss nodes
        let (t0, t1) = (chunk[0].t, chunk[q - 1].t);
        let (x0, x1) = (rule.nodes[0], rule.nodes[q - 1]);
        if q == 1 {
            out.extend_from_slice(chunk);
            continue;
        }
        let h = (t1 - t0) / (x1 - x0);
        let c = t0 - h * x0;
        let (a, b) = if h >= 0.0 { (c - h, c + h) } else { (c + h, c - h) };
        stack.push((a, b));
        while let Some((a, b)) = stack.pop() {
            let ta = sd.closest_param(z).clamp(a, b);
            let dist = (sd.point(ta) - z).norm();
            if b - a > NEAR_RATIO * dist && b - a > INNER_FLOOR * span.len() {
                let m = 0.5 * (a + b);
                stack.push((a, m));
                stack.push((m, b));
                continue;
            }
            let cc = 0.5 * (a + b);
            let hh = 0.5 * (b - a);
            for (x, w) in rule.nodes.iter().zip(&rule.weights) {
                let t = cc + hh * x;
                out.push(QNode { t, rt: sd.length - t, delta: f64::NAN, w: w * hh });
            }
        }
    }
    out
}

/// Residual of Green's representation for `u = Phi(., z)` with `z` outside
/// the polygon: `S du/dnu - D u - (u(x) if x inside else 0)`.
pub fn greens_identity_residual(
    poly: &ConvexPolygon,
    k: f64,
    z: &Point,
    x: &Point,
    budget: &QuadBudget,
) -> Result<Complex64> {
    budget.validate()?;
    let bnd = Boundary::polygon(poly);
    let diam = poly.diameter();
    if poly.contains(z) || poly.distance_to_boundary(z) < 1e-6 * diam {
        return Err(HnaError::Config("source point must lie strictly outside the polygon".into()));
    }
    let dist = poly.distance_to_boundary(x);
    if dist < 1e-6 * diam {
        return Err(HnaError::NearBoundary { distance: dist });
    }
    let u = |y: &Point| kernel_pair(k, &(y - z), (y - z).norm());
    let sl = function_potential(&bnd, PotentialKind::Single, k, x, Some(z), budget, |j, _, y| {
        let (_, c1) = u(y);
        // grad_y Phi(y, z) . nu
        c1 * (y - z).dot(&bnd.sides[j].normal)
    })?;
    let dl = function_potential(&bnd, PotentialKind::Double, k, x, Some(z), budget, |_, _, y| u(y).0)?;
    let inside = if poly.contains(x) { kernel_pair(k, &(x - z), (x - z).norm()).0 } else { ZERO };
    Ok(sl - dl - inside)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{make_screen, ConvexPolygon};

    fn screen_bnd(l: f64) -> Boundary {
        Boundary::screen(&make_screen(l).unwrap())
    }

    #[test]
    fn kernel_value_at_unit_argument() {
        let x = Point::new(0.3, 0.0);
        let y = Point::new(0.3, 1.0);
        let phi = kernel_eval(KernelKind::Phi, 1.0, &x, &y, None).unwrap();
        assert!((phi.re + 0.022_064_2).abs() < 1e-7);
        assert!((phi.im - 0.191_299_4).abs() < 1e-7);
        assert!(matches!(kernel_eval(KernelKind::Phi, 1.0, &x, &x, None), Err(HnaError::SingularEvaluation)));
    }

    #[test]
    fn kernel_symmetry_and_orthogonal_normal() {
        let pts = [(0.1, 0.2), (3.0, -1.0), (-0.5, 0.7), (10.0, 4.0)];
        for &(a, b) in &pts {
            for &(c, d) in &pts {
                let (x, y) = (Point::new(a, b), Point::new(c, d));
                if x == y {
                    continue;
                }
                let p1 = kernel_eval(KernelKind::Phi, 2.5, &x, &y, None).unwrap();
                let p2 = kernel_eval(KernelKind::Phi, 2.5, &y, &x, None).unwrap();
                assert_eq!(p1, p2);
                let dd = x - y;
                let nu = Point::new(-dd.y, dd.x).normalize();
                assert!(kernel_eval(KernelKind::DnuY, 2.5, &x, &y, Some(&nu)).unwrap().norm() < 1e-15);
            }
        }
    }

    #[test]
    fn kernel_gradient_matches_finite_difference() {
        let k = 3.0;
        let x = Point::new(0.4, 0.9);
        let y = Point::new(-0.2, 0.1);
        let nu = Point::new(0.6, 0.8);
        let h = 1e-6;
        let fd = (kernel_eval(KernelKind::Phi, k, &(x + nu * h), &y, None).unwrap()
            - kernel_eval(KernelKind::Phi, k, &(x - nu * h), &y, None).unwrap())
            / (2.0 * h);
        let an = kernel_eval(KernelKind::DnuX, k, &x, &y, Some(&nu)).unwrap();
        assert!((fd - an).norm() < 1e-8);
        let fdy = (kernel_eval(KernelKind::Phi, k, &x, &(y + nu * h), None).unwrap()
            - kernel_eval(KernelKind::Phi, k, &x, &(y - nu * h), None).unwrap())
            / (2.0 * h);
        let any = kernel_eval(KernelKind::DnuY, k, &x, &y, Some(&nu)).unwrap();
        assert!((fdy - any).norm() < 1e-8);
    }

    #[test]
    fn single_layer_is_symmetric_unconjugated() {
        let tri = ConvexPolygon::equilateral(2.0).unwrap();
        let bnd = Boundary::polygon(&tri);
        let b = QuadBudget::default();
        let l = bnd.sides[0].length;
        let e1 = Element::new(Span::from_start(0, l, 0.1, 0.9), 2, 3.0);
        let e2 = Element::new(Span::from_end(1, l, 0.5, 0.0), 1, -3.0);
        let e3 = Element::new(Span::from_start(0, l, 0.5, 1.5), 1, 1.0);
        for (f, g) in [(&e1, &e2), (&e1, &e3), (&e2, &e3), (&e1, &e1)] {
            let a = element_block(&bnd, OperatorKind::SingleLayer, CouplingParam::Star, 4.0, g, f, &b).unwrap();
            let bt = element_block(&bnd, OperatorKind::SingleLayer, CouplingParam::Star, 4.0, &f.conjugate(), &g.conjugate(), &b)
                .unwrap();
            assert!((&a - bt.transpose()).norm() < 1e-10 * a.norm());
        }
        let _ = screen_bnd(1.0);
    }

    #[test]
    fn adjoint_double_layer_vanishes_on_one_side() {
        let tri = ConvexPolygon::equilateral(2.0).unwrap();
        let bnd = Boundary::polygon(&tri);
        let l = bnd.sides[0].length;
        let e1 = Element::new(Span::from_start(0, l, 0.0, 1.0), 2, 0.0);
        let e2 = Element::new(Span::from_start(0, l, 0.5, 2.0), 2, 0.0);
        let m = element_block(&bnd, OperatorKind::AdjointDoubleLayer, CouplingParam::Star, 2.0, &e1, &e2, &QuadBudget::default())
            .unwrap();
        assert_eq!(m.norm(), 0.0);
    }

    /// Adaptive Gauss 10/20 on `[a, b]`.
    fn adaptive<F: Fn(f64) -> Complex64 + Copy>(f: F, a: f64, b: f64, tol: f64, depth: usize) -> Complex64 {
        let rule = |q: usize| {
            let r = gauss(q);
            let (c, h) = (0.5 * (a + b), 0.5 * (b - a));
            r.nodes.iter().zip(&r.weights).map(|(x, w)| f(c + h * x) * (w * h)).sum::<Complex64>()
        };
        let (g1, g2) = (rule(10), rule(20));
        if (g1 - g2).norm() <= tol || depth == 0 {
            return g2;
        }
        let m = 0.5 * (a + b);
        adaptive(f, a, m, 0.5 * tol, depth - 1) + adaptive(f, m, b, 0.5 * tol, depth - 1)
    }

    /// int_c^d Phi(k|s - t|) dt on a line, with the logarithm subtracted and integrated exactly.
    fn pulse_potential(k: f64, s: f64, c: f64, d: f64) -> Complex64 {
        let two_i_pi = Complex64::new(0.0, 2.0 / PI);
        let j0s = crate::specfun::bessel_j0(0.0);
        // H0(kr) = (2i/pi) ln(r) J0(kr) + R(r)
        let rem = |t: f64| {
            let r = (s - t).abs();
            if r == 0.0 {
                return Complex64::new(1.0, (2.0 / PI) * ((k / 2.0).ln() + 0.577_215_664_901_532_9));
            }
            let (h0, _) = hankel01(k * r);
            h0 - two_i_pi * r.ln() * crate::specfun::bessel_j0(k * r)
        };
        let logpart = |t: f64| {
            let r = (s - t).abs();
            if r == 0.0 {
                return Complex64::new(0.0, 0.0);
            }
            two_i_pi * r.ln() * (crate::specfun::bessel_j0(k * r) - j0s)
        };
        // int_c^d ln|s - t| dt
        let lint = |u: f64| if u == 0.0 { 0.0 } else { u * u.abs().ln() - u };
        let exact_log = lint(d - s) - lint(c - s);
        let mut total = two_i_pi * exact_log * j0s;
        let pieces: Vec<(f64, f64)> = if s > c && s < d { vec![(c, s), (s, d)] } else { vec![(c, d)] };
        for (a, b) in pieces {
            total += adaptive(rem, a, b, 1e-12, 40) + adaptive(logpart, a, b, 1e-12, 40);
        }
        total * Complex64::new(0.0, 0.25)
    }

    fn pulse_oracle(k: f64, test: (f64, f64), trial: (f64, f64)) -> Complex64 {
        adaptive(|s| pulse_potential(k, s, trial.0, trial.1), test.0, test.1, 1e-11, 30)
    }

    fn pulse(len: f64, a: f64, b: f64) -> Element {
        Element { normalized: false, ..Element::new(Span::from_start(0, len, a, b), 0, 0.0) }
    }

    #[test]
    fn single_layer_pulses_match_log_split_oracle() {
        let bnd = screen_bnd(1.0);
        let budget = QuadBudget::default();
        let (p1, p2) = (pulse(1.0, 0.0, 0.5), pulse(1.0, 0.5, 1.0));
        let got = element_block(&bnd, OperatorKind::SingleLayer, CouplingParam::Star, 1.0, &p2, &p1, &budget).unwrap()[(0, 0)];
        let want = pulse_oracle(1.0, (0.5, 1.0), (0.0, 0.5));
        assert!((got - want).norm() < 1e-8, "{got} vs {want}");
        for &k in &[1.0, 5.0, 20.0] {
            let got = element_block(&bnd, OperatorKind::SingleLayer, CouplingParam::Star, k, &p1, &p1, &budget).unwrap()[(0, 0)];
            let want = pulse_oracle(k, (0.0, 0.5), (0.0, 0.5));
            assert!((got - want).norm() < 1e-8, "k={k}: {got} vs {want}");
        }
    }

    #[test]
    fn tangential_term_by_parts_matches_direct() {
        let tri = ConvexPolygon::equilateral(2.0).unwrap();
        let tri = tri.translated(-tri.centroid());
        let bnd = Boundary::polygon(&tri);
        let l = bnd.sides[0].length;
        let budget = QuadBudget::default();
        let test = Element::new(Span::from_start(0, l, 0.2, 0.9), 3, 2.0);
        let trial = Element::new(Span::from_start(1, l, 0.6, 1.5), 2, -2.0);
        let parts = element_block(&bnd, OperatorKind::TangentialGradSingleLayer, CouplingParam::Star, 2.0, &test, &trial, &budget)
            .unwrap();
        let direct = tangential_direct_block(&bnd, 2.0, &test, &trial, &budget).unwrap();
        assert!((&parts - &direct).norm() < 1e-6 * direct.norm(), "{parts} vs {direct}");
    }

    #[test]
    fn greens_identity_on_triangle() {
        let tri = ConvexPolygon::equilateral(2.0 * PI).unwrap();
        let c = tri.centroid();
        let z = c + Point::new(9.0, 5.0);
        let budget = QuadBudget::default();
        for &k in &[1.0, 5.0] {
            for x in [c, c + Point::new(1.0, 0.5), c + Point::new(-20.0, 3.0), c + Point::new(0.0, -4.0)] {
                let r = greens_identity_residual(&tri, k, &z, &x, &budget).unwrap();
                assert!(r.norm() < 1e-8, "k={k} x={x:?}: {r}");
            }
        }
    }
}
