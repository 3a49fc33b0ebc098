//! Hybrid numerical-asymptotic Galerkin spaces for screens and convex
//! polygons: on every side the unknown is a piecewise polynomial times
//! `e^{iks}` on a mesh graded toward the start corner, plus a piecewise
//! polynomial times `e^{-iks}` on a mesh graded toward the end corner.

use std::time::Instant;

use nalgebra::DVector;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{HnaError, Result};
use crate::geometry::{classify, Boundary, ConvexPolygon, Incidence, Point, Screen, SideClass};
use crate::linalg::lu_solve;
use crate::ops::{
    assemble_matrix, assemble_rect, element_potential, load_vector, CouplingParam, Element, OperatorKind,
    PotentialKind, QuadBudget, Span,
};
use crate::quad::{cap_length, gauss, Panel};

const I: Complex64 = Complex64::new(0.0, 1.0);
const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Default mesh grading.
pub const DEFAULT_SIGMA: f64 = 0.15;

/// Scatterers handled by the HNA solvers.
#[derive(Debug, Clone, PartialEq)]
pub enum HnaGeometry {
    Screen(Screen),
    Polygon(ConvexPolygon),
}

impl HnaGeometry {
    pub fn boundary(&self) -> Boundary {
        match self {
            HnaGeometry::Screen(s) => Boundary::screen(s),
            HnaGeometry::Polygon(p) => Boundary::polygon(p),
        }
    }

    /// Whether the physical optics term is active on side `j`.
    pub fn lit(&self, j: usize, inc: &Incidence) -> bool {
        match self {
            HnaGeometry::Screen(_) => true,
            HnaGeometry::Polygon(p) => classify(&p.sides[j].normal, inc) == SideClass::Illuminated,
        }
    }

    fn side_normal(&self, j: usize) -> Point {
        match self {
            HnaGeometry::Screen(s) => s.side().normal,
            HnaGeometry::Polygon(p) => p.sides[j].normal,
        }
    }
}

/// Geometric mesh `0, sigma^{n-1} L, ..., sigma L, L`.
#[derive(Debug, Clone, PartialEq)]
pub struct GradedMesh {
    pub length: f64,
    pub sigma: f64,
    pub points: Vec<f64>,
}

impl GradedMesh {
    pub fn layers(&self) -> usize {
        self.points.len() - 1
    }
}

pub fn geometric_mesh(length: f64, n: usize, sigma: f64) -> Result<GradedMesh> {
    if !(sigma > 0.0 && sigma < 1.0) {
        return Err(HnaError::Config(format!("grading sigma must lie in (0, 1), got {sigma}")));
    }
    if n == 0 {
        return Err(HnaError::Config("mesh needs at least one layer".into()));
    }
    if !(length > 0.0) {
        return Err(HnaError::Config(format!("mesh length must be positive, got {length}")));
    }
    let mut points = Vec::with_capacity(n + 1);
    points.push(0.0);
    for i in 1..=n {
        points.push(sigma.powi((n - i) as i32) * length);
    }
    Ok(GradedMesh { length, sigma, points })
}

/// Orientation of a basis family on a side.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    /// Phase `e^{iks}`, mesh graded toward the side start.
    Plus,
    /// Phase `e^{-iks}`, mesh graded toward the side end.
    Minus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HnaBasisFn {
    pub side: usize,
    pub family: Family,
    pub element: usize,
    pub degree: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HnaSpaceSpec {
    pub k: f64,
    pub p: usize,
    pub n: usize,
    pub sigma: f64,
    pub dimension: usize,
    /// Singularity exponents `(start, end)` of each side, for information.
    pub corner_exponents: Vec<(f64, f64)>,
}

#[derive(Debug, Clone)]
pub struct HnaSpace {
    pub geometry: HnaGeometry,
    pub boundary: Boundary,
    pub spec: HnaSpaceSpec,
    /// Element list; element `e` carries `p + 1` consecutive basis functions.
    pub elements: Vec<Element>,
    pub basis: Vec<HnaBasisFn>,
}

pub fn build_hna_space(geometry: &HnaGeometry, k: f64, p: usize, n: usize, sigma: f64) -> Result<HnaSpace> {
    if !(k > 0.0) {
        return Err(HnaError::Config(format!("wavenumber must be positive, got {k}")));
    }
    if p > 20 {
        return Err(HnaError::Config(format!("polynomial degree {p} is too large")));
    }
    let boundary = geometry.boundary();
    let mut elements = Vec::new();
    let mut basis = Vec::new();
    for (j, side) in boundary.sides.iter().enumerate() {
        let mesh = geometric_mesh(side.length, n, sigma)?;
        let x = &mesh.points;
        for (family, omega) in [(Family::Plus, k), (Family::Minus, -k)] {
            for i in 1..=n {
                let span = match family {
                    Family::Plus => Span::from_start(j, side.length, x[i - 1], x[i]),
                    Family::Minus => Span::from_end(j, side.length, x[i], x[i - 1]),
                };
                elements.push(Element::new(span, p, omega));
                for d in 0..=p {
                    basis.push(HnaBasisFn { side: j, family, element: i - 1, degree: d });
                }
            }
        }
    }
    let corner_exponents = match geometry {
        HnaGeometry::Screen(_) => vec![(0.5, 0.5)],
        HnaGeometry::Polygon(poly) => (0..poly.num_sides()).map(|j| (poly.delta_plus(j), poly.delta_minus(j))).collect(),
    };
    let spec = HnaSpaceSpec { k, p, n, sigma, dimension: basis.len(), corner_exponents };
    Ok(HnaSpace { geometry: geometry.clone(), boundary, spec, elements, basis })
}

/// Physical optics density `2 du^I/dnu` at parameter `s` on side `j`
/// (zero on shadow sides of a polygon).
pub fn physical_optics(geometry: &HnaGeometry, inc: &Incidence, j: usize, s: f64) -> Complex64 {
    if !geometry.lit(j, inc) {
        return ZERO;
    }
    let side = &geometry.boundary().sides[j];
    2.0 * inc.normal_derivative(&side.point(s), &geometry.side_normal(j))
}

/// The physical optics density as one exact degree-0 element per lit side.
pub fn physical_optics_terms(geometry: &HnaGeometry, inc: &Incidence) -> Vec<(Element, Vec<Complex64>)> {
    let bnd = geometry.boundary();
    let k = inc.k;
    let d = inc.direction;
    bnd.sides
        .iter()
        .enumerate()
        .filter(|(j, _)| geometry.lit(*j, inc))
        .map(|(j, sd)| {
            let nu = geometry.side_normal(j);
            let omega = k * sd.tangent.dot(&d);
            let scale = inc.amplitude * 2.0 * I * k * d.dot(&nu) * (I * k * sd.start.dot(&d)).exp();
            let e = Element {
                span: Span::from_start(j, sd.length, 0.0, sd.length),
                degree: 0,
                omega,
                scale,
                normalized: false,
            };
            (e, vec![Complex64::new(1.0, 0.0)])
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Formulation {
    /// `<S phi, w> = (1/k) <u^I - S Psi, w>` on a screen.
    ScreenSingleLayer,
    /// `<A phi, w> = (1/k) <f - A Psi, w>` with the star-combined operator `A`.
    PolygonStarCombined,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearSystemReport {
    pub dimension: usize,
    pub condition: f64,
    pub assembly_s: f64,
    pub solve_s: f64,
}

/// What a density represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DensityTag {
    /// `phi = (du/dnu - Psi) / k`
    ScaledPhi,
    /// The Neumann trace (or its jump across a screen).
    FullNeumann,
}

/// A boundary density as a sum of element expansions.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityApprox {
    pub tag: DensityTag,
    pub k: f64,
    pub terms: Vec<(Element, Vec<Complex64>)>,
}

impl DensityApprox {
    pub fn from_coefficients(tag: DensityTag, k: f64, elements: &[Element], coeffs: &[Complex64]) -> Result<Self> {
        let total: usize = elements.iter().map(|e| e.count()).sum();
        if total != coeffs.len() {
            return Err(HnaError::Config(format!(
                "coefficient count {} does not match space dimension {total}",
                coeffs.len()
            )));
        }
        let mut off = 0;
        let terms = elements
            .iter()
            .map(|e| {
                let c = coeffs[off..off + e.count()].to_vec();
                off += e.count();
                (*e, c)
            })
            .collect();
        Ok(DensityApprox { tag, k, terms })
    }

    pub fn coefficients(&self) -> Vec<Complex64> {
        self.terms.iter().flat_map(|(_, c)| c.iter().copied()).collect()
    }

    pub fn dimension(&self) -> usize {
        self.terms.iter().map(|(_, c)| c.len()).sum()
    }

    /// Value at parameter `s` on side `j`.
    pub fn eval(&self, j: usize, s: f64) -> Complex64 {
        let mut buf = [ZERO; 32];
        let mut v = ZERO;
        for (e, c) in &self.terms {
            if e.side() == j && e.contains(s) {
                e.eval(s, &mut buf[..e.count()]);
                for (a, b) in buf.iter().zip(c) {
                    v += a * b;
                }
            }
        }
        v
    }

    /// Value at parameter `s`, distance `r` from the end of side `j`;
    /// accurate for points very close to either corner.
    pub fn eval_at(&self, j: usize, s: f64, r: f64) -> Complex64 {
        let mut buf = [ZERO; 32];
        let mut v = ZERO;
        for (e, c) in &self.terms {
            if e.side() == j && e.contains_at(s, r) {
                e.eval_at(s, r, &mut buf[..e.count()]);
                for (a, b) in buf.iter().zip(c) {
                    v += a * b;
                }
            }
        }
        v
    }

    /// Element endpoints on side `j` lying within `half` of the start
    /// (`from_end = false`) or of the end, measured from that corner.
    fn breakpoints(&self, j: usize, half: f64, from_end: bool) -> Vec<f64> {
        let mut pts = vec![0.0, half];
        for (e, _) in &self.terms {
            if e.side() == j {
                let (u, w) = if from_end { (e.span.rb, e.span.ra) } else { (e.span.a, e.span.b) };
                pts.extend([u, w].into_iter().filter(|x| *x > 0.0 && *x < half));
            }
        }
        pts
    }

    fn max_omega(&self) -> f64 {
        self.terms.iter().map(|(e, _)| e.omega.abs()).fold(0.0, f64::max)
    }

    fn max_degree(&self) -> usize {
        self.terms.iter().map(|(e, _)| e.degree).max().unwrap_or(0)
    }
}

/// Galerkin matrix and right-hand side of an HNA formulation.
pub fn assemble_system(
    space: &HnaSpace,
    formulation: Formulation,
    inc: &Incidence,
    budget: &QuadBudget,
) -> Result<(nalgebra::DMatrix<Complex64>, DVector<Complex64>)> {
    let k = space.spec.k;
    if (inc.k - k).abs() > 1e-12 * k {
        return Err(HnaError::Config(format!("space built for k = {k}, incidence has k = {}", inc.k)));
    }
    let bnd = &space.boundary;
    let psi = physical_optics_terms(&space.geometry, inc);
    let psi_elements: Vec<Element> = psi.iter().map(|(e, _)| *e).collect();
    let (kind, coupling) = match (formulation, &space.geometry) {
        (Formulation::ScreenSingleLayer, HnaGeometry::Screen(_)) => {
            (OperatorKind::SingleLayer, CouplingParam::Constant(Complex64::new(1.0, 0.0)))
        }
        (Formulation::PolygonStarCombined, HnaGeometry::Polygon(poly)) => {
            let margin = poly.star_margin();
            if !(margin > 0.0) {
                return Err(HnaError::Formulation(format!(
                    "polygon is not star-shaped about the origin (min x.nu = {margin:e}); \
                     translate it so that the origin lies well inside, e.g. at its centroid"
                )));
            }
            (OperatorKind::StarCombined, CouplingParam::Star)
        }
        (f, _) => return Err(HnaError::Formulation(format!("{f:?} does not match the geometry"))),
    };
    let a = assemble_matrix(bnd, kind, coupling, k, &space.elements, budget)?;
    let mut rhs = match formulation {
        Formulation::ScreenSingleLayer => load_vector(bnd, &space.elements, k, budget, |_, _, y| inc.field(y)),
        Formulation::PolygonStarCombined => load_vector(bnd, &space.elements, k, budget, |_, _, y| {
            let eta = coupling.at(k, y);
            (I * k * y.dot(&inc.direction) - I * eta) * inc.field(y)
        }),
    };
    if !psi_elements.is_empty() {
        let ap = assemble_rect(bnd, kind, coupling, k, &space.elements, &psi_elements, budget)?;
        for t in 0..rhs.len() {
            for c in 0..ap.ncols() {
                rhs[t] -= ap[(t, c)];
            }
        }
    }
    let b = DVector::from_vec(rhs) / Complex64::new(k, 0.0);
    Ok((a, b))
}

/// Assembles and solves the HNA Galerkin system, returning the scaled density `phi`.
pub fn assemble_and_solve(
    space: &HnaSpace,
    formulation: Formulation,
    inc: &Incidence,
    budget: &QuadBudget,
) -> Result<(DensityApprox, LinearSystemReport)> {
    let t0 = Instant::now();
    let (a, b) = assemble_system(space, formulation, inc, budget)?;
    let assembly_s = t0.elapsed().as_secs_f64();
    let t1 = Instant::now();
    let (x, condition) = lu_solve(&a, &b)?;
    let solve_s = t1.elapsed().as_secs_f64();
    let density = DensityApprox::from_coefficients(DensityTag::ScaledPhi, space.spec.k, &space.elements, x.as_slice())?;
    let report = LinearSystemReport { dimension: b.len(), condition, assembly_s, solve_s };
    Ok((density, report))
}

/// `du/dnu = k phi + Psi` from the scaled density.
pub fn reconstruct_neumann(phi: &DensityApprox, geometry: &HnaGeometry, inc: &Incidence) -> Result<DensityApprox> {
    if phi.tag != DensityTag::ScaledPhi {
        return Err(HnaError::WrongTag { expected: "scaled-phi" });
    }
    let k = phi.k;
    let mut terms: Vec<(Element, Vec<Complex64>)> =
        phi.terms.iter().map(|(e, c)| (*e, c.iter().map(|v| v * k).collect())).collect();
    terms.extend(physical_optics_terms(geometry, inc));
    Ok(DensityApprox { tag: DensityTag::FullNeumann, k, terms })
}

fn check_off_boundary(bnd: &Boundary, x: &Point) -> Result<()> {
    let d = bnd.distance_to(x);
    if d < 1e-6 * bnd.diameter() {
        return Err(HnaError::NearBoundary { distance: d });
    }
    Ok(())
}

/// Scattered field `-int Phi(x, y) du/dnu(y) ds(y)`.
pub fn scattered_field(bnd: &Boundary, density: &DensityApprox, x: &Point, budget: &QuadBudget) -> Result<Complex64> {
    if density.tag != DensityTag::FullNeumann {
        return Err(HnaError::WrongTag { expected: "full-neumann" });
    }
    check_off_boundary(bnd, x)?;
    Ok(-element_potential(bnd, PotentialKind::Single, density.k, &density.terms, x, budget)?)
}

/// Total field `u^I(x) - int Phi(x, y) du/dnu(y) ds(y)` at a point off the boundary.
pub fn domain_field(
    bnd: &Boundary,
    density: &DensityApprox,
    inc: &Incidence,
    x: &Point,
    budget: &QuadBudget,
) -> Result<Complex64> {
    Ok(inc.field(x) + scattered_field(bnd, density, x, budget)?)
}

/// Far-field pattern `F(d) = -int e^{-ik d.y} du/dnu(y) ds(y)` at unit directions `d`.
pub fn far_field(
    bnd: &Boundary,
    density: &DensityApprox,
    directions: &[Point],
    budget: &QuadBudget,
) -> Result<Vec<Complex64>> {
    if density.tag != DensityTag::FullNeumann {
        return Err(HnaError::WrongTag { expected: "full-neumann" });
    }
    for d in directions {
        if (d.norm() - 1.0).abs() > 1e-10 {
            return Err(HnaError::Config(format!("far-field direction {d:?} is not a unit vector")));
        }
    }
    let k = density.k;
    let elements: Vec<Element> = density.terms.iter().map(|(e, _)| *e).collect();
    directions
        .iter()
        .map(|d| {
            // load_vector pairs against conj(f_l); conjugate back afterwards
            let v = load_vector(bnd, &elements, k, budget, |_, _, y| (I * k * d.dot(y)).exp());
            let mut f = ZERO;
            let mut off = 0;
            for (_, c) in &density.terms {
                for cl in c {
                    f -= cl * v[off].conj();
                    off += 1;
                }
            }
            Ok(f)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorNorm {
    L1,
    L2,
}

/// `||a - b|| / ||b||` over the boundary, integrating piecewise over the
/// union of both densities' element breakpoints.
pub fn relative_error(
    bnd: &Boundary,
    a: &DensityApprox,
    b: &DensityApprox,
    norm: ErrorNorm,
    budget: &QuadBudget,
) -> Result<f64> {
    let q = (budget.gauss_order + a.max_degree().max(b.max_degree())).min(crate::quad::MAX_GAUSS);
    let rule = gauss(q);
    let k_eff = a.max_omega().max(b.max_omega()).max(a.k).max(1e-300);
    let h_max = budget.h_max(2.0 * k_eff);
    let parts: Vec<(f64, f64)> = (0..bnd.sides.len())
        .into_par_iter()
        .map(|j| {
            let len = bnd.sides[j].length;
            let half = 0.5 * len;
            let mut num = 0.0;
            let mut den = 0.0;
            for from_end in [false, true] {
                let mut pts = a.breakpoints(j, half, from_end);
                pts.extend(b.breakpoints(j, half, from_end));
                pts.sort_by(|x, y| x.partial_cmp(y).unwrap());
                pts.dedup();
                let panels: Vec<Panel> =
                    pts.windows(2).filter(|w| w[1] > w[0]).map(|w| Panel { a: w[0], b: w[1] }).collect();
                for p in cap_length(panels, h_max) {
                    let c = 0.5 * (p.a + p.b);
                    let h = 0.5 * p.len();
                    for (x, w) in rule.nodes.iter().zip(&rule.weights) {
                        let u = c + h * x;
                        let (s, r) = if from_end { (len - u, u) } else { (u, len - u) };
                        let va = a.eval_at(j, s, r);
                        let vb = b.eval_at(j, s, r);
                        let (dn, dd) = match norm {
                            ErrorNorm::L1 => ((va - vb).norm(), vb.norm()),
                            ErrorNorm::L2 => ((va - vb).norm_sqr(), vb.norm_sqr()),
                        };
                        num += w * h * dn;
                        den += w * h * dd;
                    }
                }
            }
            (num, den)
        })
        .collect();
    let (num, den) = parts.iter().fold((0.0, 0.0), |acc, p| (acc.0 + p.0, acc.1 + p.1));
    if !(den > 0.0) {
        return Err(HnaError::ZeroNorm);
    }
    Ok(match norm {
        ErrorNorm::L1 => num / den,
        ErrorNorm::L2 => (num / den).sqrt(),
    })
}
