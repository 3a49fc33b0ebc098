//! Plane-wave (global relation) methods: the interior Dirichlet problem on a
//! convex polygon and sound-soft periodic diffraction gratings.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::dd::{self, Dd, DdComplex};
use crate::error::{HnaError, Result};
use crate::geometry::{ConvexPolygon, GratingProfile, Point};
use crate::linalg;
use crate::oracles::FlatGratingExact;
use crate::quad::gauss;

type C = Complex64;

const I: C = Complex64::new(0.0, 1.0);

/// Gauss order per panel for the double-double interior integrals.
pub const INTERIOR_QUAD_ORDER: usize = 16;

/// Interior Gram systems are solved in double-double arithmetic, so the
/// usable condition range is roughly `1e16` times wider than for `f64`.
pub const INTERIOR_MAX_CONDITION: f64 = 1e30;

/// Largest condition number accepted for `f64` grating systems.
pub const GRATING_MAX_CONDITION: f64 = 1e14;

/// Modes with `|beta_n|` below this are treated as grazing.
pub const RAYLEIGH_GRAZING_TOL: f64 = 1e-6;

const GRATING_QUAD_ORDER: usize = 20;

/// `v(x, theta) = exp(ik(cos(theta) x_1 + sin(theta) x_2))` for complex `theta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneralizedPlaneWave {
    pub theta: C,
    pub k: f64,
}

impl GeneralizedPlaneWave {
    pub fn new(theta: C, k: f64) -> Self {
        GeneralizedPlaneWave { theta, k }
    }

    pub fn direction(&self) -> (C, C) {
        (self.theta.cos(), self.theta.sin())
    }

    pub fn value(&self, x: &Point) -> C {
        let (c, s) = self.direction();
        (I * self.k * (c * x.x + s * x.y)).exp()
    }

    pub fn normal_derivative(&self, x: &Point, nu: &Point) -> C {
        let (c, s) = self.direction();
        I * self.k * (c * nu.x + s * nu.y) * self.value(x)
    }
}

/// Value of the generalized plane wave and, if a normal is given, its normal derivative.
pub fn gpw_eval(theta: C, k: f64, x: &Point, nu: Option<&Point>) -> (C, Option<C>) {
    let v = GeneralizedPlaneWave::new(theta, k);
    (v.value(x), nu.map(|n| v.normal_derivative(x, n)))
}

/// `ik (d.nu) exp(ik d.x)` for the real plane wave with direction `(cos a, sin a)`.
pub fn plane_wave_neumann(k: f64, angle: f64, x: &Point, nu: &Point) -> C {
    let (c, s) = (angle.cos(), angle.sin());
    I * k * (c * nu.x + s * nu.y) * (I * k * (c * x.x + s * x.y)).exp()
}

/// `exp(ik d.x)` in double-double arithmetic for a complex direction `d`.
fn dd_wave(k: f64, d: (C, C), x: &[Dd; 2]) -> DdComplex {
    let re = (x[0] * d.0.re + x[1] * d.1.re) * k;
    let im = (x[0] * d.0.im + x[1] * d.1.im) * k;
    DdComplex::new(-im, re).exp()
}

/// `ik (d.nu)` in double-double arithmetic.
fn dd_normal_factor(k: f64, d: (C, C), nu: &[Dd; 2]) -> DdComplex {
    let g = DdComplex::new(nu[0] * d.0.re + nu[1] * d.1.re, nu[0] * d.0.im + nu[1] * d.1.im);
    g.mul_i().scale(Dd::from(k))
}

/// Dirichlet data for the interior problem.
#[derive(Clone)]
pub enum DirichletData {
    /// Trace of `exp(ik(cos a x_1 + sin a x_2))`, evaluated in double-double.
    PlaneWave { angle: f64 },
    /// Arbitrary data, evaluated in `f64`.
    Function(Arc<dyn Fn(&Point) -> C + Send + Sync>),
}

impl fmt::Debug for DirichletData {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DirichletData::PlaneWave { angle } => write!(f, "PlaneWave {{ angle: {angle} }}"),
            DirichletData::Function(_) => write!(f, "Function(..)"),
        }
    }
}

impl DirichletData {
    fn eval_dd(&self, k: f64, x: &[Dd; 2]) -> DdComplex {
        match self {
            DirichletData::PlaneWave { angle } => dd_wave(k, (C::new(angle.cos(), 0.0), C::new(angle.sin(), 0.0)), x),
            DirichletData::Function(h) => {
                let p = Point::new(x[0].into(), x[1].into());
                DdComplex::from_c64(h(&p))
            }
        }
    }
}

/// Hermitian Gram (or general) system with diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct GramSystem {
    pub matrix: DMatrix<C>,
    pub rhs: DVector<C>,
    /// `max |a_mn - conj(a_nm)| / max |a_mn|`.
    pub hermitian_defect: f64,
    pub hermitian: bool,
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
    pub condition: f64,
}

fn hermitian_defect(a: &DMatrix<C>) -> f64 {
    let scale = a.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if scale == 0.0 {
        return 0.0;
    }
    let n = a.nrows();
    let mut d = 0.0_f64;
    for i in 0..n {
        for j in 0..n {
            d = d.max((a[(i, j)] - a[(j, i)].conj()).norm());
        }
    }
    d / scale
}

/// `N` real equispaced directions `2 pi (n - 1) / N`.
pub fn equispaced_directions(n: usize) -> Vec<C> {
    (0..n).map(|j| C::new(2.0 * PI * j as f64 / n as f64, 0.0)).collect()
}

struct DdNode {
    x: [Dd; 2],
    nu: [Dd; 2],
    w: Dd,
}

fn panels_for(k: f64, dmax: f64, len: f64) -> usize {
    ((k * dmax * len / 2.0).ceil() as usize).max(1)
}

fn direction_norm(d: (C, C)) -> f64 {
    (d.0.norm_sqr() + d.1.norm_sqr()).sqrt()
}

/// Double-double Gauss nodes on side `j` of the polygon.
fn side_nodes(poly: &ConvexPolygon, j: usize, panels: usize, rule: &(Vec<Dd>, Vec<Dd>)) -> Vec<DdNode> {
    let sd = &poly.sides[j];
    let s = [Dd::from(sd.start.x), Dd::from(sd.start.y)];
    let e = [Dd::from(sd.end.x) - s[0], Dd::from(sd.end.y) - s[1]];
    let len = dd::dsqrt(e[0] * e[0] + e[1] * e[1]);
    let nu = [dd::ddiv(e[1], len), dd::ddiv(-e[0], len)];
    let mut out = Vec::with_capacity(panels * rule.0.len());
    for p in 0..panels {
        for (u, w) in rule.0.iter().zip(&rule.1) {
            let t = (Dd::from(p as f64) + (*u + 1.0) * 0.5) / panels as f64;
            out.push(DdNode {
                x: [s[0] + e[0] * t, s[1] + e[1] * t],
                nu,
                w: len * *w * 0.5 / panels as f64,
            });
        }
    }
    out
}

/// Result of the interior plane-wave Galerkin method.
#[derive(Debug, Clone)]
pub struct InteriorSolution {
    pub k: f64,
    pub thetas: Vec<C>,
    pub polygon: ConvexPolygon,
    pub gram: GramSystem,
    pub assembly_s: f64,
    pub solve_s: f64,
    coeffs: Vec<DdComplex>,
}

impl InteriorSolution {
    pub fn coefficients(&self) -> Vec<C> {
        self.coeffs.iter().map(|c| c.to_c64()).collect()
    }

    fn directions(&self) -> Vec<(C, C)> {
        self.thetas.iter().map(|t| (t.cos(), t.sin())).collect()
    }

    /// `phi_N(x) = sum_n c_n v(x, theta_n)`, summed in double-double.
    pub fn eval(&self, x: &Point) -> C {
        self.eval_with(&self.directions(), x)
    }

    fn eval_with(&self, dirs: &[(C, C)], x: &Point) -> C {
        let xd = [Dd::from(x.x), Dd::from(x.y)];
        let mut s = DdComplex::ZERO;
        for (c, d) in self.coeffs.iter().zip(dirs) {
            s += *c * dd_wave(self.k, *d, &xd);
        }
        s.to_c64()
    }

    /// `||phi_N - g||_{L^2(boundary)}` for `g(x, nu)`.
    pub fn l2_error_against<F>(&self, exact: F) -> f64
    where
        F: Fn(&Point, &Point) -> C,
    {
        let dirs = self.directions();
        let dmax = dirs.iter().map(|d| direction_norm(*d)).fold(1.0, f64::max);
        boundary_l2_norm_with(&self.polygon, self.k * dmax, |x, nu| self.eval_with(&dirs, x) - exact(x, nu))
    }
}

/// `||g||_{L^2(boundary)}` with panels resolving oscillations of wavenumber `k`.
pub fn boundary_l2_norm<F>(poly: &ConvexPolygon, k: f64, g: F) -> f64
where
    F: Fn(&Point, &Point) -> C,
{
    boundary_l2_norm_with(poly, k, g)
}

fn boundary_l2_norm_with<F>(poly: &ConvexPolygon, k: f64, g: F) -> f64
where
    F: Fn(&Point, &Point) -> C,
{
    let rule = gauss(20);
    let mut sum = 0.0;
    for sd in &poly.sides {
        let panels = panels_for(k, 2.0, sd.length);
        for p in 0..panels {
            for (u, w) in rule.nodes.iter().zip(&rule.weights) {
                let t = (p as f64 + 0.5 * (u + 1.0)) / panels as f64;
                let x = sd.start + (sd.end - sd.start) * t;
                sum += w * 0.5 * sd.length / panels as f64 * g(&x, &sd.normal).norm_sqr();
            }
        }
    }
    sum.sqrt()
}

fn check_distinct_directions(thetas: &[C]) -> Result<()> {
    let dirs: Vec<(C, C)> = thetas.iter().map(|t| (t.cos(), t.sin())).collect();
    for i in 0..dirs.len() {
        if !(dirs[i].0.is_finite() && dirs[i].1.is_finite()) {
            return Err(HnaError::Config(format!("direction {i} is not finite")));
        }
        for j in 0..i {
            if ((dirs[i].0 - dirs[j].0).norm() + (dirs[i].1 - dirs[j].1).norm()) < 1e-12 {
                return Err(HnaError::Config(format!("directions {j} and {i} coincide")));
            }
        }
    }
    Ok(())
}

/// Plane-wave Galerkin approximation of the Neumann trace of the interior
/// Dirichlet problem `Delta u + k^2 u = 0`, `u = h` on the polygon boundary.
///
/// Solves `sum_n a_mn c_n = int h conj(d_nu v_m)` with
/// `a_mn = int v_n conj(v_m)`; the Gram matrix, right-hand side and Cholesky
/// solve are carried out in double-double arithmetic.
pub fn interior_planewave_galerkin(
    poly: &ConvexPolygon,
    k: f64,
    data: &DirichletData,
    thetas: &[C],
) -> Result<InteriorSolution> {
    if !(k > 0.0) || !k.is_finite() {
        return Err(HnaError::Config(format!("wavenumber must be positive, got {k}")));
    }
    if thetas.is_empty() {
        return Err(HnaError::Config("at least one direction is required".into()));
    }
    check_distinct_directions(thetas)?;
    let t0 = Instant::now();
    let n = thetas.len();
    let dirs: Vec<(C, C)> = thetas.iter().map(|t| (t.cos(), t.sin())).collect();
    let dmax = dirs.iter().map(|d| direction_norm(*d)).fold(1.0, f64::max);
    let rule = dd::gauss_dd(INTERIOR_QUAD_ORDER)?;

    let partial = |j: usize| -> (Vec<Vec<DdComplex>>, Vec<DdComplex>) {
        let mut g = vec![vec![DdComplex::ZERO; n]; n];
        let mut b = vec![DdComplex::ZERO; n];
        let nodes = side_nodes(poly, j, panels_for(k, dmax, poly.sides[j].length), &rule);
        let mut v = vec![DdComplex::ZERO; n];
        let mut wv = vec![DdComplex::ZERO; n];
        for nd in &nodes {
            for i in 0..n {
                v[i] = dd_wave(k, dirs[i], &nd.x);
                wv[i] = v[i].scale(nd.w);
            }
            let h = data.eval_dd(k, &nd.x).scale(nd.w);
            for m in 0..n {
                let vm = v[m].conj();
                for (gmn, wvn) in g[m].iter_mut().zip(&wv) {
                    *gmn += *wvn * vm;
                }
                let dvm = (dd_normal_factor(k, dirs[m], &nd.nu) * v[m]).conj();
                b[m] += h * dvm;
            }
        }
        (g, b)
    };
    let parts: Vec<_> = (0..poly.num_sides()).into_par_iter().map(partial).collect();
    let mut g = vec![vec![DdComplex::ZERO; n]; n];
    let mut b = vec![DdComplex::ZERO; n];
    for (pg, pb) in parts {
        for m in 0..n {
            for l in 0..n {
                g[m][l] += pg[m][l];
            }
            b[m] += pb[m];
        }
    }
    let assembly_s = t0.elapsed().as_secs_f64();

    let t1 = Instant::now();
    let matrix = dd::to_matrix(&g);
    let rhs = DVector::from_iterator(n, b.iter().map(|z| z.to_c64()));
    let defect = hermitian_defect(&matrix);
    let advice = "reduce the imaginary parts of the directions or use fewer directions".to_string();
    let l = dd::cholesky(&g).map_err(|_| HnaError::IllConditioned { condition: f64::INFINITY, advice: advice.clone() })?;
    let (lmin, lmax) = dd::extreme_eigenvalues(&g, &l);
    let condition = if lmin > 0.0 { lmax / lmin } else { f64::INFINITY };
    if !(condition <= INTERIOR_MAX_CONDITION) {
        return Err(HnaError::IllConditioned { condition, advice });
    }
    let coeffs = dd::cholesky_solve(&l, &b);
    let solve_s = t1.elapsed().as_secs_f64();
    Ok(InteriorSolution {
        k,
        thetas: thetas.to_vec(),
        polygon: poly.clone(),
        gram: GramSystem {
            matrix,
            rhs,
            hermitian_defect: defect,
            hermitian: true,
            min_eigenvalue: lmin,
            max_eigenvalue: lmax,
            condition,
        },
        assembly_s,
        solve_s,
        coeffs,
    })
}

/// One quasi-periodic Rayleigh mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayleighMode {
    pub n: i64,
    pub alpha: f64,
    /// `sqrt(1 - alpha^2)`, real nonnegative or positive imaginary.
    pub beta: C,
}

impl RayleighMode {
    pub fn is_propagating(&self) -> bool {
        self.alpha.abs() <= 1.0
    }

    pub fn is_grazing(&self) -> bool {
        self.beta.norm() < RAYLEIGH_GRAZING_TOL
    }

    /// Complex angle with `(cos, sin) = (-alpha, beta)`.
    pub fn angle(&self) -> C {
        C::new(-self.alpha, 0.0).acos()
    }

    /// `exp(ik(-alpha x_1 + beta x_2))`, the test wave of the global relation.
    pub fn test_wave(&self, k: f64, x: &Point) -> C {
        (I * k * (-self.alpha * x.x + self.beta * x.y)).exp()
    }
}

/// Modes `alpha_n = mu/k + 2 pi n/(kL)` for a window of indices.
#[derive(Debug, Clone, PartialEq)]
pub struct RayleighSpectrum {
    pub k: f64,
    pub period: f64,
    pub theta_inc: f64,
    pub mu: f64,
    pub modes: Vec<RayleighMode>,
}

impl RayleighSpectrum {
    pub fn mode(&self, n: i64) -> Option<&RayleighMode> {
        self.modes.iter().find(|m| m.n == n)
    }

    pub fn beta0(&self) -> f64 {
        self.theta_inc.cos()
    }

    pub fn propagating(&self) -> impl Iterator<Item = &RayleighMode> {
        self.modes.iter().filter(|m| m.is_propagating())
    }
}

fn check_grating_inputs(k: f64, period: f64, theta_inc: f64) -> Result<()> {
    if !(k > 0.0) || !k.is_finite() {
        return Err(HnaError::Config(format!("wavenumber must be positive, got {k}")));
    }
    if !(period > 0.0) || !period.is_finite() {
        return Err(HnaError::Config(format!("grating period must be positive, got {period}")));
    }
    if !(theta_inc.abs() < PI / 2.0) {
        return Err(HnaError::Config(format!("incidence angle must lie in (-pi/2, pi/2), got {theta_inc}")));
    }
    Ok(())
}

fn make_mode(k: f64, period: f64, mu: f64, n: i64) -> RayleighMode {
    let alpha = mu / k + 2.0 * PI * n as f64 / (k * period);
    let beta = if alpha.abs() <= 1.0 {
        C::new((1.0 - alpha * alpha).sqrt(), 0.0)
    } else {
        C::new(0.0, (alpha * alpha - 1.0).sqrt())
    };
    RayleighMode { n, alpha, beta }
}

pub fn rayleigh_modes(k: f64, period: f64, theta_inc: f64, n_min: i64, n_max: i64) -> Result<RayleighSpectrum> {
    check_grating_inputs(k, period, theta_inc)?;
    if n_min > n_max {
        return Err(HnaError::Config(format!("empty mode window [{n_min}, {n_max}]")));
    }
    let modes: Vec<i64> = (n_min..=n_max).collect();
    spectrum_for(k, period, theta_inc, &modes)
}

/// Spectrum for an arbitrary list of mode indices, in the given order.
pub fn spectrum_for(k: f64, period: f64, theta_inc: f64, modes: &[i64]) -> Result<RayleighSpectrum> {
    check_grating_inputs(k, period, theta_inc)?;
    let mu = k * theta_inc.sin();
    Ok(RayleighSpectrum {
        k,
        period,
        theta_inc,
        mu,
        modes: modes.iter().map(|&n| make_mode(k, period, mu, n)).collect(),
    })
}

/// Index window `[n_min, n_max]` of all propagating modes.
pub fn propagating_window(k: f64, period: f64, theta_inc: f64) -> Result<(i64, i64)> {
    check_grating_inputs(k, period, theta_inc)?;
    let mu = k * theta_inc.sin();
    let scale = k * period / (2.0 * PI);
    let mut lo = ((-1.0 - mu / k) * scale).floor() as i64 - 1;
    let mut hi = ((1.0 - mu / k) * scale).ceil() as i64 + 1;
    while !make_mode(k, period, mu, lo).is_propagating() {
        lo += 1;
    }
    while !make_mode(k, period, mu, hi).is_propagating() {
        hi -= 1;
    }
    Ok((lo, hi))
}

/// All propagating mode indices followed by `extra` evanescent ones in order
/// of increasing `|alpha_n|`.
pub fn mode_sequence(k: f64, period: f64, theta_inc: f64, extra: usize) -> Result<Vec<i64>> {
    let (lo, hi) = propagating_window(k, period, theta_inc)?;
    let mu = k * theta_inc.sin();
    let mut out: Vec<i64> = (lo..=hi).collect();
    let (mut below, mut above) = (lo - 1, hi + 1);
    for _ in 0..extra {
        let a = make_mode(k, period, mu, below).alpha.abs();
        let b = make_mode(k, period, mu, above).alpha.abs();
        if a <= b {
            out.push(below);
            below -= 1;
        } else {
            out.push(above);
            above += 1;
        }
    }
    Ok(out)
}

/// Grating discretizations: piecewise-constant pulses, plane waves, and the
/// conjugated test waves (Hermitian positive definite system).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GratingMethod {
    Sc,
    Ss,
    SsStar,
}

impl GratingMethod {
    pub fn name(&self) -> &'static str {
        match self {
            GratingMethod::Sc => "SC",
            GratingMethod::Ss => "SS",
            GratingMethod::SsStar => "SSstar",
        }
    }
}

impl FromStr for GratingMethod {
    type Err = HnaError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sc" => Ok(GratingMethod::Sc),
            "ss" => Ok(GratingMethod::Ss),
            "ssstar" | "ss*" => Ok(GratingMethod::SsStar),
            _ => Err(HnaError::Config(format!("unknown grating method '{s}' (expected SC, SS or SSstar)"))),
        }
    }
}

/// A total-field Neumann density on the grating, as a function of `x_1`.
pub trait GratingDensity {
    fn eval(&self, x1: f64) -> C;

    /// Points in `[0, L]` where the density may be discontinuous.
    fn breakpoints(&self) -> Vec<f64> {
        Vec::new()
    }
}

impl GratingDensity for FlatGratingExact {
    fn eval(&self, x1: f64) -> C {
        self.neumann(x1)
    }
}

impl<F: Fn(f64) -> C> GratingDensity for F {
    fn eval(&self, x1: f64) -> C {
        self(x1)
    }
}

/// Composite Gauss nodes `(x_1, weight * jacobian)` over one period.
fn grating_nodes(profile: &GratingProfile, extra_breaks: &[f64], osc: f64) -> Vec<(f64, f64)> {
    let l = profile.period;
    let mut br: Vec<f64> = profile.knots();
    br.extend(extra_breaks.iter().copied().filter(|x| *x > 0.0 && *x < l));
    br.push(0.0);
    br.push(l);
    br.sort_by(|a, b| a.partial_cmp(b).unwrap());
    br.dedup_by(|a, b| (*a - *b).abs() <= 1e-14 * l);
    let rule = gauss(GRATING_QUAD_ORDER);
    let mut out = Vec::new();
    for w in br.windows(2) {
        let (a, b) = (w[0], w[1]);
        let panels = ((osc * (b - a) / 4.0).ceil() as usize).max(2);
        let h = (b - a) / panels as f64;
        for p in 0..panels {
            for (u, wt) in rule.nodes.iter().zip(&rule.weights) {
                let x = a + h * (p as f64 + 0.5 * (u + 1.0));
                out.push((x, wt * 0.5 * h * profile.jacobian(x)));
            }
        }
    }
    out
}

fn oscillation(k: f64, profile: &GratingProfile, spec: &RayleighSpectrum) -> f64 {
    let s = profile.max_slope();
    let m = spec.modes.iter().map(|m| m.alpha.abs() + m.beta.norm() * (1.0 + s)).fold(1.0, f64::max);
    2.0 * k * m + 8.0 * PI / profile.period
}

/// Solution of a grating global-relation system.
#[derive(Debug, Clone)]
pub struct GratingSolution {
    pub method: GratingMethod,
    pub k: f64,
    pub theta_inc: f64,
    pub profile: GratingProfile,
    pub spectrum: RayleighSpectrum,
    pub coefficients: DVector<C>,
    pub system: GramSystem,
    pub n_propagating: usize,
    pub n_evanescent: usize,
    pub assembly_s: f64,
    pub solve_s: f64,
}

impl GratingSolution {
    fn basis(&self, m: usize, x1: f64) -> C {
        basis_value(self.method, &self.spectrum, &self.profile, self.coefficients.len(), m, x1)
    }

    /// Propagating Rayleigh coefficients recovered from this density.
    pub fn rayleigh(&self) -> Result<RayleighCoefficients> {
        let (lo, hi) = propagating_window(self.k, self.profile.period, self.theta_inc)?;
        let spec = rayleigh_modes(self.k, self.profile.period, self.theta_inc, lo, hi)?;
        rayleigh_coefficients(self, &self.profile, &spec)
    }
}

impl GratingDensity for GratingSolution {
    fn eval(&self, x1: f64) -> C {
        (0..self.coefficients.len()).map(|m| self.coefficients[m] * self.basis(m, x1)).sum()
    }

    fn breakpoints(&self) -> Vec<f64> {
        match self.method {
            GratingMethod::Sc => {
                let n = self.coefficients.len();
                (0..=n).map(|j| self.profile.period * j as f64 / n as f64).collect()
            }
            _ => Vec::new(),
        }
    }
}

fn basis_value(method: GratingMethod, spec: &RayleighSpectrum, profile: &GratingProfile, n: usize, m: usize, x1: f64) -> C {
    let k = spec.k;
    let x = profile.point(x1);
    match method {
        GratingMethod::SsStar => spec.modes[m].test_wave(k, &x).conj(),
        GratingMethod::Ss => {
            let md = &spec.modes[m];
            (I * k * (md.alpha * x.x - md.beta * x.y)).exp()
        }
        GratingMethod::Sc => {
            let l = profile.period;
            let shift = (x1 / l).floor();
            let xr = x1 - shift * l;
            let idx = ((xr / l * n as f64).floor() as usize).min(n - 1);
            if idx == m {
                (I * spec.mu * shift * l).exp()
            } else {
                C::new(0.0, 0.0)
            }
        }
    }
}

/// Assembles and solves `sum_m c_m int chi_m w_{n_j} ds = -2ik beta_0 L delta_{0 n_j}`
/// for the total-field Neumann density on one period, where
/// `w_n = exp(ik(-alpha_n x_1 + beta_n x_2))`.
pub fn grating_assemble_solve(
    method: GratingMethod,
    profile: &GratingProfile,
    k: f64,
    theta_inc: f64,
    modes: &[i64],
) -> Result<GratingSolution> {
    if modes.is_empty() {
        return Err(HnaError::Config("at least one mode index is required".into()));
    }
    for (i, a) in modes.iter().enumerate() {
        if modes[..i].contains(a) {
            return Err(HnaError::Config(format!("mode index {a} repeated")));
        }
    }
    let spec = spectrum_for(k, profile.period, theta_inc, modes)?;
    let t0 = Instant::now();
    let n = modes.len();
    let l = profile.period;
    let breaks: Vec<f64> = match method {
        GratingMethod::Sc => (1..n).map(|j| l * j as f64 / n as f64).collect(),
        _ => Vec::new(),
    };
    let nodes = grating_nodes(profile, &breaks, oscillation(k, profile, &spec));
    let rows: Vec<Vec<C>> = (0..n)
        .into_par_iter()
        .map(|j| {
            let mut row = vec![C::new(0.0, 0.0); n];
            for &(x1, w) in &nodes {
                let t = spec.modes[j].test_wave(k, &profile.point(x1)) * w;
                for (m, r) in row.iter_mut().enumerate() {
                    let b = basis_value(method, &spec, profile, n, m, x1);
                    if b != C::new(0.0, 0.0) {
                        *r += b * t;
                    }
                }
            }
            row
        })
        .collect();
    let matrix = DMatrix::from_fn(n, n, |j, m| rows[j][m]);
    let beta0 = theta_inc.cos();
    let rhs = DVector::from_iterator(
        n,
        modes.iter().map(|&nj| if nj == 0 { -2.0 * I * k * beta0 * l } else { C::new(0.0, 0.0) }),
    );
    let assembly_s = t0.elapsed().as_secs_f64();

    let t1 = Instant::now();
    let n_prop = spec.modes.iter().filter(|m| m.is_propagating()).count();
    let n_evan = n - n_prop;
    let advice = format!("{n_prop} propagating and {n_evan} evanescent modes; remove evanescent modes or refine");
    let defect = hermitian_defect(&matrix);
    let (coefficients, system) = match method {
        GratingMethod::SsStar => {
            let herm = (&matrix + matrix.adjoint()) * C::new(0.5, 0.0);
            let eig = herm.clone().symmetric_eigen();
            let lmin = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
            let lmax = eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let condition = if lmin > 0.0 { lmax / lmin } else { f64::INFINITY };
            if !(condition <= GRATING_MAX_CONDITION) {
                return Err(HnaError::IllConditioned { condition, advice });
            }
            let chol = herm
                .cholesky()
                .ok_or_else(|| HnaError::IllConditioned { condition, advice: advice.clone() })?;
            let c = chol.solve(&rhs);
            let sys = GramSystem {
                matrix,
                rhs,
                hermitian_defect: defect,
                hermitian: true,
                min_eigenvalue: lmin,
                max_eigenvalue: lmax,
                condition,
            };
            (c, sys)
        }
        _ => {
            let (c, condition) = linalg::lu_solve(&matrix, &rhs).map_err(|e| match e {
                HnaError::SingularSystem { condition } => HnaError::IllConditioned { condition, advice: advice.clone() },
                other => other,
            })?;
            let sv = matrix.clone().singular_values();
            let sys = GramSystem {
                matrix,
                rhs,
                hermitian_defect: defect,
                hermitian: false,
                min_eigenvalue: sv.iter().cloned().fold(f64::INFINITY, f64::min),
                max_eigenvalue: sv.iter().cloned().fold(0.0, f64::max),
                condition,
            };
            (c, sys)
        }
    };
    let solve_s = t1.elapsed().as_secs_f64();
    Ok(GratingSolution {
        method,
        k,
        theta_inc,
        profile: profile.clone(),
        spectrum: spec,
        coefficients,
        system,
        n_propagating: n_prop,
        n_evanescent: n_evan,
        assembly_s,
        solve_s,
    })
}

/// Scattered-field Rayleigh coefficients with efficiencies of the propagating modes.
#[derive(Debug, Clone, PartialEq)]
pub struct RayleighCoefficients {
    pub spectrum: RayleighSpectrum,
    pub coefficients: Vec<C>,
    /// `(beta_n / beta_0) |c_n|^2` for propagating modes, `None` otherwise.
    pub efficiencies: Vec<Option<f64>>,
}

/// Recovers `u^S = sum c_n exp(ik(alpha_n x_1 + beta_n x_2))` above the
/// grating from the total-field Neumann density:
/// `c_n = int (d_nu u) exp(-ik(alpha_n x_1 + beta_n x_2)) ds / (2ik beta_n L)`.
pub fn rayleigh_coefficients(
    density: &dyn GratingDensity,
    profile: &GratingProfile,
    spectrum: &RayleighSpectrum,
) -> Result<RayleighCoefficients> {
    if (spectrum.period - profile.period).abs() > 1e-12 * profile.period {
        return Err(HnaError::Config("spectrum and profile periods differ".into()));
    }
    if let Some(m) = spectrum.modes.iter().find(|m| m.is_grazing()) {
        return Err(HnaError::GrazingMode(m.n));
    }
    let k = spectrum.k;
    let l = profile.period;
    let nodes = grating_nodes(profile, &density.breakpoints(), oscillation(k, profile, spectrum));
    let vals: Vec<(Point, C)> = nodes.iter().map(|&(x1, w)| (profile.point(x1), density.eval(x1) * w)).collect();
    let beta0 = spectrum.beta0();
    let mut coefficients = Vec::with_capacity(spectrum.modes.len());
    let mut efficiencies = Vec::with_capacity(spectrum.modes.len());
    for m in &spectrum.modes {
        let s: C = vals.iter().map(|(x, d)| d * (-I * k * (m.alpha * x.x + m.beta * x.y)).exp()).sum();
        let c = s / (2.0 * I * k * m.beta * l);
        coefficients.push(c);
        efficiencies.push(if m.is_propagating() { Some(m.beta.re / beta0 * c.norm_sqr()) } else { None });
    }
    Ok(RayleighCoefficients { spectrum: spectrum.clone(), coefficients, efficiencies })
}

/// Sum of the propagating efficiencies; `1` for a lossless grating.
pub fn energy_balance(coeffs: &RayleighCoefficients) -> Result<f64> {
    if !(coeffs.spectrum.beta0() > 0.0) {
        return Err(HnaError::Config("beta_0 must be positive".into()));
    }
    Ok(coeffs.efficiencies.iter().flatten().sum())
}
