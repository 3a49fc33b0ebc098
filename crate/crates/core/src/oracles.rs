//! Independent reference solutions: a conventional piecewise-polynomial BEM,
//! separable solutions on the disk, and the exact flat-grating solution.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{HnaError, Result};
use crate::geometry::{Boundary, ConvexPolygon, Incidence, Point};
use crate::hna::{geometric_mesh, DensityApprox, DensityTag, HnaGeometry};
use crate::linalg::lu_solve;
use crate::ops::{assemble_matrix, load_vector, mass_block, CouplingParam, Element, OperatorKind, QuadBudget, Span};
use crate::specfun::bessel_j_upto;

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Largest dense reference system that will be attempted.
pub const MAX_REFERENCE_DOFS: usize = 20000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    StandardBem,
    DiskSeries,
    FlatGrating,
}

/// Discretisation of the reference BEM.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceOptions {
    /// Polynomial degree on every element.
    pub degree: usize,
    /// Geometric layers added inside the elements touching a corner or screen tip.
    pub corner_layers: usize,
    pub corner_sigma: f64,
}

impl Default for ReferenceOptions {
    fn default() -> Self {
        ReferenceOptions { degree: 5, corner_layers: 24, corner_sigma: 0.15 }
    }
}

#[derive(Debug, Clone)]
pub struct ReferenceSolution {
    pub density: DensityApprox,
    pub provenance: Provenance,
    /// Degrees of freedom per wavelength of the uniform part of the mesh.
    pub dof_per_wavelength: f64,
    pub dofs: usize,
}

/// `ceil(dpw |Gamma| / lambda)`.
pub fn reference_dofs(bnd: &Boundary, k: f64, dof_per_wavelength: f64) -> usize {
    (dof_per_wavelength * bnd.total_length() * k / (2.0 * PI)).ceil() as usize
}

/// Uniform elements with `dpw` unknowns per wavelength on each side,
/// each end element further split geometrically toward its corner.
pub fn reference_elements(bnd: &Boundary, k: f64, dof_per_wavelength: f64, opts: &ReferenceOptions) -> Result<Vec<Element>> {
    let required = reference_dofs(bnd, k, dof_per_wavelength);
    let per = opts.degree + 1;
    let n_el = required.div_ceil(per).max(1);
    let total = bnd.total_length();
    let mut out = Vec::new();
    for (j, sd) in bnd.sides.iter().enumerate() {
        let len = sd.length;
        let nj = ((n_el as f64 * len / total).round() as usize).max(2);
        let h = len / nj as f64;
        let inner = if opts.corner_layers > 0 {
            geometric_mesh(h, opts.corner_layers, opts.corner_sigma)?.points
        } else {
            vec![0.0, h]
        };
        for w in inner.windows(2) {
            out.push(Element::new(Span::from_start(j, len, w[0], w[1]), opts.degree, 0.0));
        }
        for i in 1..nj - 1 {
            let a = i as f64 * h;
            out.push(Element::new(Span::from_start(j, len, a, a + h), opts.degree, 0.0));
        }
        for w in inner.windows(2).rev() {
            out.push(Element::new(Span::from_end(j, len, w[1], w[0]), opts.degree, 0.0));
        }
    }
    let dofs: usize = out.iter().map(|e| e.count()).sum();
    if required > MAX_REFERENCE_DOFS || dofs > MAX_REFERENCE_DOFS {
        return Err(HnaError::TooLarge { required: required.max(dofs), limit: MAX_REFERENCE_DOFS });
    }
    Ok(out)
}

/// Conventional Galerkin BEM for the Neumann trace: the single-layer
/// equation on a screen, the combined equation `(I/2 + D' - ik S) du/dnu =
/// du^I/dnu - ik u^I` on a polygon.
pub fn standard_bem_reference(
    geometry: &HnaGeometry,
    inc: &Incidence,
    dof_per_wavelength: f64,
    opts: &ReferenceOptions,
    budget: &QuadBudget,
) -> Result<ReferenceSolution> {
    if !(dof_per_wavelength >= 10.0) {
        return Err(HnaError::Config(format!(
            "reference needs at least 10 unknowns per wavelength, got {dof_per_wavelength}"
        )));
    }
    let k = inc.k;
    let bnd = geometry.boundary();
    let elements = reference_elements(&bnd, k, dof_per_wavelength, opts)?;
    let (a, rhs) = match geometry {
        HnaGeometry::Screen(_) => {
            let a = assemble_matrix(&bnd, OperatorKind::SingleLayer, CouplingParam::Constant(1.0.into()), k, &elements, budget)?;
            let b = load_vector(&bnd, &elements, k, budget, |_, _, y| inc.field(y));
            (a, b)
        }
        HnaGeometry::Polygon(_) => {
            let eta = Complex64::new(k, 0.0);
            let a = assemble_matrix(&bnd, OperatorKind::Combined, CouplingParam::Constant(eta), k, &elements, budget)?;
            let b = load_vector(&bnd, &elements, k, budget, |j, _, y| {
                inc.normal_derivative(y, &bnd.sides[j].normal) - I * eta * inc.field(y)
            });
            (a, b)
        }
    };
    let x = a.lu().solve(&DVector::from_vec(rhs)).ok_or(HnaError::SingularSystem { condition: f64::INFINITY })?;
    let density = DensityApprox::from_coefficients(DensityTag::FullNeumann, k, &elements, x.as_slice())?;
    Ok(ReferenceSolution {
        dofs: density.dimension(),
        density,
        provenance: Provenance::StandardBem,
        dof_per_wavelength,
    })
}

fn check_orders(k: f64, a: f64, max_order: u32, j: &[f64]) -> Result<()> {
    // J_m(ka) can only vanish for m < ka
    for m in 0..=max_order {
        if (m as f64) < k * a && j[m as usize].abs() < 1e-8 {
            return Err(HnaError::NearEigenvalue { order: m as i64, value: j[m as usize].abs() });
        }
    }
    Ok(())
}

/// `k J'_m(ka) / J_m(ka)`: the Dirichlet-to-Neumann eigenvalue of the disk of
/// radius `a` for the mode `e^{i m theta}`.
pub fn disk_dtn_eigenvalue(k: f64, a: f64, m: i64) -> Result<f64> {
    if !(k > 0.0 && a > 0.0) {
        return Err(HnaError::Config("disk oracle needs k > 0 and a > 0".into()));
    }
    let mm = m.unsigned_abs() as u32;
    let j = bessel_j_upto(mm + 1, k * a)?;
    check_orders(k, a, mm, &j)?;
    let jm = j[mm as usize];
    if jm.abs() < 1e-8 {
        return Err(HnaError::NearEigenvalue { order: m, value: jm.abs() });
    }
    let dj = if mm == 0 { -j[1] } else { 0.5 * (j[mm as usize - 1] - j[mm as usize + 1]) };
    Ok(k * dj / jm)
}

/// Jacobi-Anger expansion of the plane wave `e^{ik x.d}`, `d = (cos t, sin t)`:
/// `sum_m i^m J_m(kr) e^{i m (theta - t)}`, truncated at `|m| <= order`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlaneWaveSeries {
    pub k: f64,
    pub angle: f64,
    pub order: u32,
}

impl PlaneWaveSeries {
    /// Truncation `ceil(k r_max) + 20`, enough for the tail to drop below 1e-10 on `|x| <= r_max`.
    pub fn new(k: f64, angle: f64, r_max: f64) -> Self {
        PlaneWaveSeries { k, angle, order: (k * r_max).ceil() as u32 + 20 }
    }

    /// Fails if the disk of radius `a` is at a Dirichlet eigenvalue for a retained order.
    pub fn check_disk(&self, a: f64) -> Result<()> {
        let j = bessel_j_upto(self.order, self.k * a)?;
        check_orders(self.k, a, self.order, &j)
    }

    pub fn value(&self, x: &Point) -> Result<Complex64> {
        Ok(self.value_and_gradient(x)?.0)
    }

    /// Field and Cartesian gradient at `x != 0`.
    pub fn value_and_gradient(&self, x: &Point) -> Result<(Complex64, [Complex64; 2])> {
        let r = x.norm();
        if r == 0.0 {
            return Ok((Complex64::new(1.0, 0.0), [I * self.k * self.angle.cos(), I * self.k * self.angle.sin()]));
        }
        let th = x.y.atan2(x.x);
        let psi = th - self.angle;
        let n = self.order as usize;
        let j = bessel_j_upto(self.order + 1, self.k * r)?;
        let mut u = Complex64::new(j[0], 0.0);
        let mut ur = Complex64::new(-self.k * j[1], 0.0);
        let mut ut = Complex64::new(0.0, 0.0);
        let mut im = Complex64::new(1.0, 0.0);
        for m in 1..=n {
            im *= I;
            let c = (m as f64 * psi).cos();
            let s = (m as f64 * psi).sin();
            let dj = 0.5 * (j[m - 1] - j[m + 1]);
            u += im * (2.0 * j[m] * c);
            ur += im * (2.0 * self.k * dj * c);
            ut -= im * (2.0 * m as f64 * j[m] * s / r);
        }
        let (ct, st) = (th.cos(), th.sin());
        Ok((u, [ur * ct - ut * st, ur * st + ut * ct]))
    }

    /// Normal derivative at `x` with unit normal `nu`.
    pub fn normal_derivative(&self, x: &Point, nu: &Point) -> Result<Complex64> {
        let (_, g) = self.value_and_gradient(x)?;
        Ok(g[0] * nu.x + g[1] * nu.y)
    }
}

/// Rayleigh quotient `<psi, g> / <g, g>` of the computed Neumann trace `psi`
/// for Dirichlet data `g = e^{i m theta}` on a regular polygon of
/// circumradius `a`, where `psi` solves `<S psi, w> = <(D + I/2) g, w>`.
pub fn polygon_dtn_quotient(
    k: f64,
    a: f64,
    m: i64,
    sides: usize,
    degree: usize,
    budget: &QuadBudget,
) -> Result<Complex64> {
    let poly = ConvexPolygon::regular(sides, a)?;
    let bnd = Boundary::polygon(&poly);
    let elements: Vec<Element> = bnd
        .sides
        .iter()
        .enumerate()
        .map(|(j, sd)| Element::new(Span::from_start(j, sd.length, 0.0, sd.length), degree, 0.0))
        .collect();
    let g = |y: &Point| Complex64::from_polar(1.0, m as f64 * y.y.atan2(y.x));
    // project g onto the elements (orthonormal on each side)
    let gvec = DVector::from_vec(load_vector(&bnd, &elements, k, budget, |_, _, y| g(y)));
    let one = CouplingParam::Constant(1.0.into());
    let s = assemble_matrix(&bnd, OperatorKind::SingleLayer, one, k, &elements, budget)?;
    let d = assemble_matrix(&bnd, OperatorKind::DoubleLayer, one, k, &elements, budget)?;
    let n = gvec.len();
    let mut mass = DMatrix::<Complex64>::zeros(n, n);
    let mut off = 0;
    for e in &elements {
        let blk = mass_block(e, e, budget);
        mass.view_mut((off, off), (e.count(), e.count())).copy_from(&blk);
        off += e.count();
    }
    let rhs = (&d + &mass * Complex64::new(0.5, 0.0)) * &gvec;
    let (psi, _) = lu_solve(&s, &rhs)?;
    Ok(psi.dotc(&gvec).conj() / gvec.dotc(&gvec))
}

/// Exact solution for the flat grating `f = 0`: the total field
/// `u^I - e^{ik(alpha_0 x_1 + beta_0 x_2)}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlatGratingExact {
    pub k: f64,
    pub theta: f64,
    pub period: f64,
    pub alpha0: f64,
    pub beta0: f64,
}

pub fn flat_grating_exact(k: f64, theta: f64, period: f64) -> Result<FlatGratingExact> {
    if !(theta.abs() < PI / 2.0) {
        return Err(HnaError::Config(format!("incidence angle must lie in (-pi/2, pi/2), got {theta}")));
    }
    if !(k > 0.0 && period > 0.0) {
        return Err(HnaError::Config("flat grating needs k > 0 and L > 0".into()));
    }
    Ok(FlatGratingExact { k, theta, period, alpha0: theta.sin(), beta0: theta.cos() })
}

impl FlatGratingExact {
    /// `du/dnu` on `x_2 = 0` with the upward normal.
    pub fn neumann(&self, x1: f64) -> Complex64 {
        -2.0 * I * self.k * self.beta0 * (I * self.k * self.alpha0 * x1).exp()
    }

    /// Scattered Rayleigh coefficient of mode `n`.
    pub fn coefficient(&self, n: i64) -> Complex64 {
        if n == 0 {
            Complex64::new(-1.0, 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        }
    }

    /// Exact density as a density over the single side `[0, L]`.
    pub fn reference(&self) -> ReferenceSolution {
        let e = Element {
            span: Span::from_start(0, self.period, 0.0, self.period),
            degree: 0,
            omega: self.k * self.alpha0,
            scale: -2.0 * I * self.k * self.beta0,
            normalized: false,
        };
        ReferenceSolution {
            density: DensityApprox { tag: DensityTag::FullNeumann, k: self.k, terms: vec![(e, vec![Complex64::new(1.0, 0.0)])] },
            provenance: Provenance::FlatGrating,
            dof_per_wavelength: f64::INFINITY,
            dofs: 1,
        }
    }
}
