//! Boundaries: the flat screen, convex polygons and periodic grating profiles,
//! together with the incident plane wave.

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::{DMatrix, DVector, Vector2};
use num_complex::Complex64;

use crate::error::{HnaError, Result};

pub type Point = Vector2<f64>;

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Incident plane wave `u^I(x) = A exp(ik x.d)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Incidence {
    pub k: f64,
    pub direction: Point,
    pub amplitude: Complex64,
}

impl Incidence {
    pub fn new(k: f64, direction: Point) -> Result<Self> {
        if !(k > 0.0) || !k.is_finite() {
            return Err(HnaError::Config(format!("wavenumber must be positive, got {k}")));
        }
        let n = direction.norm();
        if !(n > 0.0) || !n.is_finite() {
            return Err(HnaError::Config("incident direction must be nonzero".into()));
        }
        Ok(Incidence { k, direction: direction / n, amplitude: Complex64::new(1.0, 0.0) })
    }

    /// Direction `(sin theta, -cos theta)`, the convention used for screens and gratings.
    pub fn from_angle(k: f64, theta: f64) -> Result<Self> {
        Self::new(k, Point::new(theta.sin(), -theta.cos()))
    }

    pub fn with_amplitude(mut self, amplitude: Complex64) -> Self {
        self.amplitude = amplitude;
        self
    }

    /// Angle `theta` with `direction = (sin theta, -cos theta)`.
    pub fn angle(&self) -> f64 {
        self.direction.x.atan2(-self.direction.y)
    }

    /// Quasi-periodicity phase shift `mu = k sin theta`.
    pub fn mu(&self) -> f64 {
        self.k * self.direction.x
    }

    pub fn field(&self, x: &Point) -> Complex64 {
        self.amplitude * (I * self.k * x.dot(&self.direction)).exp()
    }

    pub fn gradient(&self, x: &Point) -> Vector2<Complex64> {
        let u = self.field(x) * I * self.k;
        Vector2::new(u * self.direction.x, u * self.direction.y)
    }

    pub fn normal_derivative(&self, x: &Point, normal: &Point) -> Complex64 {
        self.field(x) * I * self.k * self.direction.dot(normal)
    }
}

/// A straight boundary piece `x(s) = start + s tangent`, `0 <= s <= length`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Side {
    pub start: Point,
    pub end: Point,
    pub length: f64,
    pub tangent: Point,
    pub normal: Point,
}

impl Side {
    fn new(start: Point, end: Point, normal: Point) -> Self {
        let d = end - start;
        let length = d.norm();
        Side { start, end, length, tangent: d / length, normal }
    }

    pub fn point(&self, s: f64) -> Point {
        self.start + self.tangent * s
    }

    /// Parameter of the orthogonal projection of `x`, clamped to the side.
    pub fn closest_param(&self, x: &Point) -> f64 {
        (x - self.start).dot(&self.tangent).clamp(0.0, self.length)
    }

    pub fn distance_to(&self, x: &Point) -> f64 {
        (self.point(self.closest_param(x)) - x).norm()
    }
}

/// The open screen `{(s, 0) : 0 < s < L}` with normal `(0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Screen {
    pub length: f64,
}

pub fn make_screen(length: f64) -> Result<Screen> {
    if !(length > 0.0) || !length.is_finite() {
        return Err(HnaError::Config(format!("screen length must be positive, got {length}")));
    }
    Ok(Screen { length })
}

impl Screen {
    pub fn side(&self) -> Side {
        Side::new(Point::zeros(), Point::new(self.length, 0.0), Point::new(0.0, 1.0))
    }

    pub fn point(&self, s: f64) -> Point {
        Point::new(s, 0.0)
    }
}

/// Strictly convex polygon with counterclockwise vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexPolygon {
    pub vertices: Vec<Point>,
    pub sides: Vec<Side>,
    /// `exterior_angles[j]` is the exterior angle at vertex `j`, the start of side `j`.
    pub exterior_angles: Vec<f64>,
}

pub fn make_polygon(vertices: &[Point]) -> Result<ConvexPolygon> {
    let n = vertices.len();
    if n < 3 {
        return Err(HnaError::Geometry { vertex: 0, reason: format!("need at least 3 vertices, got {n}") });
    }
    let scale = vertices.iter().map(|v| v.norm()).fold(0.0, f64::max).max(1e-300);
    let mut exterior_angles = Vec::with_capacity(n);
    for j in 0..n {
        let prev = vertices[(j + n - 1) % n];
        let here = vertices[j];
        let next = vertices[(j + 1) % n];
        let e_in = here - prev;
        let e_out = next - here;
        if e_in.norm() <= 1e-14 * scale || e_out.norm() <= 1e-14 * scale {
            return Err(HnaError::Geometry { vertex: j, reason: "repeated vertex".into() });
        }
        let cross = e_in.perp(&e_out);
        if cross <= 1e-12 * e_in.norm() * e_out.norm() {
            let reason = if cross.abs() <= 1e-12 * e_in.norm() * e_out.norm() {
                "collinear with its neighbours"
            } else {
                "reflex or clockwise turn (vertices must be counterclockwise and strictly convex)"
            };
            return Err(HnaError::Geometry { vertex: j, reason: reason.into() });
        }
        let turn = cross.atan2(e_in.dot(&e_out));
        exterior_angles.push(PI + turn);
    }
    let total: f64 = exterior_angles.iter().map(|w| w - PI).sum();
    if (total - 2.0 * PI).abs() > 1e-9 {
        return Err(HnaError::Geometry { vertex: 0, reason: "boundary is self-intersecting".into() });
    }
    let sides = (0..n)
        .map(|j| {
            let a = vertices[j];
            let b = vertices[(j + 1) % n];
            let t = (b - a).normalize();
            Side::new(a, b, Point::new(t.y, -t.x))
        })
        .collect();
    Ok(ConvexPolygon { vertices: vertices.to_vec(), sides, exterior_angles })
}

impl ConvexPolygon {
    pub fn num_sides(&self) -> usize {
        self.sides.len()
    }

    /// Regular polygon with `n` vertices on the circle of radius `r` about the origin.
    pub fn regular(n: usize, radius: f64) -> Result<Self> {
        let v: Vec<Point> = (0..n)
            .map(|j| {
                let t = 2.0 * PI * j as f64 / n as f64;
                Point::new(radius * t.cos(), radius * t.sin())
            })
            .collect();
        make_polygon(&v)
    }

    /// Equilateral triangle with its base on the x1 axis starting at the origin.
    pub fn equilateral(side: f64) -> Result<Self> {
        make_polygon(&[
            Point::new(0.0, 0.0),
            Point::new(side, 0.0),
            Point::new(0.5 * side, 0.5 * 3f64.sqrt() * side),
        ])
    }

    pub fn centroid(&self) -> Point {
        self.vertices.iter().fold(Point::zeros(), |a, v| a + v) / self.vertices.len() as f64
    }

    pub fn translated(&self, shift: Point) -> Self {
        let v: Vec<Point> = self.vertices.iter().map(|p| p + shift).collect();
        make_polygon(&v).expect("translation preserves convexity")
    }

    pub fn perimeter(&self) -> f64 {
        self.sides.iter().map(|s| s.length).sum()
    }

    pub fn diameter(&self) -> f64 {
        let mut d: f64 = 0.0;
        for a in &self.vertices {
            for b in &self.vertices {
                d = d.max((a - b).norm());
            }
        }
        d
    }

    /// Corner exponent at the start of side `j`.
    pub fn delta_plus(&self, j: usize) -> f64 {
        1.0 - PI / self.exterior_angles[j]
    }

    /// Corner exponent at the end of side `j`.
    pub fn delta_minus(&self, j: usize) -> f64 {
        1.0 - PI / self.exterior_angles[(j + 1) % self.sides.len()]
    }

    /// `min_j x.nu_j`, positive iff the polygon is star-shaped about the origin
    /// in the strict sense needed by the star-combined formulation.
    pub fn star_margin(&self) -> f64 {
        self.sides.iter().map(|s| s.start.dot(&s.normal)).fold(f64::INFINITY, f64::min)
    }

    pub fn contains(&self, x: &Point) -> bool {
        self.sides.iter().all(|s| (x - s.start).dot(&s.normal) < 0.0)
    }

    pub fn distance_to_boundary(&self, x: &Point) -> f64 {
        self.sides.iter().map(|s| s.distance_to(x)).fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SideClass {
    Illuminated,
    Shadow,
}

/// Tolerance below which `d.nu` is treated as grazing.
pub const GRAZING_TOL: f64 = 1e-12;

/// Grazing incidence counts as shadow.
pub fn classify(normal: &Point, inc: &Incidence) -> SideClass {
    if inc.direction.dot(normal) < -GRAZING_TOL {
        SideClass::Illuminated
    } else {
        SideClass::Shadow
    }
}

pub fn classify_sides(poly: &ConvexPolygon, inc: &Incidence) -> Vec<SideClass> {
    poly.sides.iter().map(|s| classify(&s.normal, inc)).collect()
}

/// A chain of straight sides carrying densities: the screen (one open side)
/// or a polygon (closed).
#[derive(Debug, Clone, PartialEq)]
pub struct Boundary {
    pub sides: Vec<Side>,
    pub closed: bool,
}

impl Boundary {
    pub fn screen(screen: &Screen) -> Self {
        Boundary { sides: vec![screen.side()], closed: false }
    }

    pub fn polygon(poly: &ConvexPolygon) -> Self {
        Boundary { sides: poly.sides.clone(), closed: true }
    }

    pub fn total_length(&self) -> f64 {
        self.sides.iter().map(|s| s.length).sum()
    }

    /// Side following `j` on a closed boundary.
    pub fn next(&self, j: usize) -> Option<usize> {
        if j + 1 < self.sides.len() {
            Some(j + 1)
        } else if self.closed {
            Some(0)
        } else {
            None
        }
    }

    pub fn prev(&self, j: usize) -> Option<usize> {
        if j > 0 {
            Some(j - 1)
        } else if self.closed {
            Some(self.sides.len() - 1)
        } else {
            None
        }
    }

    pub fn distance_to(&self, x: &Point) -> f64 {
        self.sides.iter().map(|s| s.distance_to(x)).fold(f64::INFINITY, f64::min)
    }

    pub fn diameter(&self) -> f64 {
        let pts: Vec<Point> = self.sides.iter().flat_map(|s| [s.start, s.end]).collect();
        let mut d: f64 = 0.0;
        for a in &pts {
            for b in &pts {
                d = d.max((a - b).norm());
            }
        }
        d
    }
}

/// Profile shapes accepted by [`make_grating`].
#[derive(Debug, Clone, PartialEq)]
pub enum ProfileSpec {
    Flat,
    /// `a sin(2 pi x / L)`
    Sinusoid { amplitude: f64 },
    /// Nodes `0 = x_0 < ... < x_m = L` with `f(x_0) = f(x_m)`, interpolated by a periodic cubic spline.
    Samples { x: Vec<f64>, f: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
enum Shape {
    Flat,
    Sinusoid(f64),
    Spline(PeriodicSpline),
}

/// Periodic graph `x2 = f(x1)` with period `L`.
#[derive(Debug, Clone, PartialEq)]
pub struct GratingProfile {
    pub period: f64,
    shape: Shape,
    f_max: f64,
    max_slope: f64,
}

pub fn make_grating(period: f64, spec: &ProfileSpec) -> Result<GratingProfile> {
    if !(period > 0.0) || !period.is_finite() {
        return Err(HnaError::Config(format!("grating period must be positive, got {period}")));
    }
    let shape = match spec {
        ProfileSpec::Flat => Shape::Flat,
        ProfileSpec::Sinusoid { amplitude } => {
            if !amplitude.is_finite() {
                return Err(HnaError::Config("sinusoid amplitude must be finite".into()));
            }
            Shape::Sinusoid(*amplitude)
        }
        ProfileSpec::Samples { x, f } => Shape::Spline(PeriodicSpline::new(period, x, f)?),
    };
    let mut g = GratingProfile { period, shape, f_max: 0.0, max_slope: 0.0 };
    let m = 4096;
    let (mut fm, mut sl) = (f64::NEG_INFINITY, 0.0_f64);
    for i in 0..m {
        let x = period * i as f64 / m as f64;
        fm = fm.max(g.f(x));
        sl = sl.max(g.df(x).abs());
    }
    g.f_max = match &g.shape {
        Shape::Flat => 0.0,
        Shape::Sinusoid(a) => a.abs(),
        Shape::Spline(_) => fm,
    };
    g.max_slope = sl;
    Ok(g)
}

impl GratingProfile {
    fn reduce(&self, x: f64) -> f64 {
        x.rem_euclid(self.period)
    }

    pub fn f(&self, x: f64) -> f64 {
        match &self.shape {
            Shape::Flat => 0.0,
            Shape::Sinusoid(a) => a * (2.0 * PI * x / self.period).sin(),
            Shape::Spline(s) => s.eval(self.reduce(x)).0,
        }
    }

    pub fn df(&self, x: f64) -> f64 {
        match &self.shape {
            Shape::Flat => 0.0,
            Shape::Sinusoid(a) => a * 2.0 * PI / self.period * (2.0 * PI * x / self.period).cos(),
            Shape::Spline(s) => s.eval(self.reduce(x)).1,
        }
    }

    pub fn point(&self, x: f64) -> Point {
        Point::new(x, self.f(x))
    }

    /// Unit normal `(-f', 1)/sqrt(1 + f'^2)`, pointing into the region above the grating.
    pub fn normal(&self, x: f64) -> Point {
        let d = self.df(x);
        Point::new(-d, 1.0) / (1.0 + d * d).sqrt()
    }

    /// Surface element `sqrt(1 + f'^2)`.
    pub fn jacobian(&self, x: f64) -> f64 {
        let d = self.df(x);
        (1.0 + d * d).sqrt()
    }

    pub fn f_max(&self) -> f64 {
        self.f_max
    }

    pub fn max_slope(&self) -> f64 {
        self.max_slope
    }

    /// Break points of the profile within one period (spline knots), for quadrature.
    pub fn knots(&self) -> Vec<f64> {
        match &self.shape {
            Shape::Spline(s) => s.x.clone(),
            _ => vec![0.0, self.period],
        }
    }
}

/// Reads a two-column `x,f` table (an optional header line is skipped).
pub fn read_profile_csv(path: &Path) -> Result<ProfileSpec> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| HnaError::Io(format!("{}: {e}", path.display())))?;
    let (mut xs, mut fs) = (Vec::new(), Vec::new());
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| HnaError::Io(e.to_string()))?;
        if rec.len() != 2 {
            return Err(HnaError::Config(format!("profile line {}: expected two columns", line + 1)));
        }
        match (rec[0].parse::<f64>(), rec[1].parse::<f64>()) {
            (Ok(x), Ok(f)) => {
                xs.push(x);
                fs.push(f);
            }
            _ if line == 0 => continue,
            _ => return Err(HnaError::Config(format!("profile line {}: not numeric", line + 1))),
        }
    }
    Ok(ProfileSpec::Samples { x: xs, f: fs })
}

#[derive(Debug, Clone, PartialEq)]
struct PeriodicSpline {
    x: Vec<f64>,
    y: Vec<f64>,
    m: Vec<f64>,
}

impl PeriodicSpline {
    fn new(period: f64, x: &[f64], f: &[f64]) -> Result<Self> {
        let n = x.len();
        if n != f.len() || n < 4 {
            return Err(HnaError::Config("profile needs at least 4 (x, f) samples".into()));
        }
        if x[0].abs() > 1e-12 * period || (x[n - 1] - period).abs() > 1e-12 * period {
            return Err(HnaError::Config(format!("profile samples must span [0, {period}]")));
        }
        if x.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(HnaError::Config("profile abscissae must be strictly increasing".into()));
        }
        if f.iter().any(|v| !v.is_finite()) {
            return Err(HnaError::Config("profile values must be finite".into()));
        }
        let scale = f.iter().fold(0.0_f64, |a, v| a.max(v.abs())).max(period);
        if (f[0] - f[n - 1]).abs() > 1e-12 * scale {
            return Err(HnaError::Config(format!(
                "profile is not periodic: f(0) = {} but f(L) = {}",
                f[0],
                f[n - 1]
            )));
        }
        // unknown second derivatives at nodes 0..n-2 (node n-1 repeats node 0)
        let m = n - 1;
        let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
        let mut a = DMatrix::<f64>::zeros(m, m);
        let mut rhs = DVector::<f64>::zeros(m);
        for i in 0..m {
            let hl = h[(i + m - 1) % m];
            let hr = h[i];
            let yl = f[(i + m - 1) % m];
            let yr = f[i + 1];
            a[(i, (i + m - 1) % m)] += hl / 6.0;
            a[(i, i)] += (hl + hr) / 3.0;
            a[(i, (i + 1) % m)] += hr / 6.0;
            rhs[i] = (yr - f[i]) / hr - (f[i] - yl) / hl;
        }
        let sol = a
            .lu()
            .solve(&rhs)
            .ok_or_else(|| HnaError::Config("degenerate spline samples".into()))?;
        let mut mm: Vec<f64> = sol.iter().copied().collect();
        mm.push(mm[0]);
        Ok(PeriodicSpline { x: x.to_vec(), y: f.to_vec(), m: mm })
    }

    fn eval(&self, t: f64) -> (f64, f64) {
        let n = self.x.len();
        let i = match self.x.partition_point(|&v| v <= t) {
            0 => 0,
            p if p >= n => n - 2,
            p => p - 1,
        };
        let h = self.x[i + 1] - self.x[i];
        let a = (self.x[i + 1] - t) / h;
        let b = (t - self.x[i]) / h;
        let (mi, mj) = (self.m[i], self.m[i + 1]);
        let val = a * self.y[i] + b * self.y[i + 1] + ((a * a * a - a) * mi + (b * b * b - b) * mj) * h * h / 6.0;
        let der = (self.y[i + 1] - self.y[i]) / h - (3.0 * a * a - 1.0) / 6.0 * h * mi
            + (3.0 * b * b - 1.0) / 6.0 * h * mj;
        (val, der)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn screen_endpoints() {
        let s = make_screen(2.0 * PI).unwrap();
        let side = s.side();
        assert_eq!(side.start, Point::new(0.0, 0.0));
        assert!((side.end - Point::new(2.0 * PI, 0.0)).norm() < 1e-15);
        assert_eq!(make_screen(1.0).unwrap().point(0.5), Point::new(0.5, 0.0));
        assert!(make_screen(0.0).is_err());
        assert!(make_screen(-1.0).is_err());
        // k = 5 on a 2 pi screen: five wavelengths
        assert!((s.length / (2.0 * PI / 5.0) - 5.0).abs() < 1e-14);
    }

    #[test]
    fn equilateral_triangle_angles() {
        let t = ConvexPolygon::equilateral(2.0 * PI).unwrap();
        assert_eq!(t.num_sides(), 3);
        for j in 0..3 {
            assert!((t.exterior_angles[j] - 5.0 * PI / 3.0).abs() < 1e-12);
            assert!((t.delta_plus(j) - 0.4).abs() < 1e-12);
            assert!((t.delta_minus(j) - 0.4).abs() < 1e-12);
        }
    }

    #[test]
    fn unit_square_angles() {
        let sq = make_polygon(&[
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0),
            Point::new(1.0, 1.0),
            Point::new(0.0, 1.0),
        ])
        .unwrap();
        for j in 0..4 {
            assert!((sq.exterior_angles[j] - 1.5 * PI).abs() < 1e-12);
            assert!((sq.delta_plus(j) - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_polygons() {
        let collinear = [Point::new(0.0, 0.0), Point::new(1.0, 0.0), Point::new(2.0, 0.0)];
        assert!(matches!(make_polygon(&collinear), Err(HnaError::Geometry { .. })));
        let cw = [Point::new(0.0, 0.0), Point::new(0.0, 1.0), Point::new(1.0, 0.0)];
        assert!(matches!(make_polygon(&cw), Err(HnaError::Geometry { vertex: 0, .. })));
        let dart = [
            Point::new(0.0, 0.0),
            Point::new(2.0, 0.0),
            Point::new(1.0, 0.3),
            Point::new(1.0, 2.0),
        ];
        assert!(matches!(make_polygon(&dart), Err(HnaError::Geometry { vertex: 2, .. })));
    }

    #[test]
    fn triangle_classification() {
        let t = ConvexPolygon::equilateral(2.0 * PI).unwrap();
        let down = Incidence::new(1.0, Point::new(0.0, -1.0)).unwrap();
        assert_eq!(
            classify_sides(&t, &down),
            vec![SideClass::Shadow, SideClass::Illuminated, SideClass::Illuminated]
        );
        let oblique = Incidence::from_angle(1.0, PI / 6.0).unwrap();
        // base, right side (grazing), left side
        assert_eq!(
            classify_sides(&t, &oblique),
            vec![SideClass::Shadow, SideClass::Shadow, SideClass::Illuminated]
        );
        for side in &t.sides {
            let inc = Incidence::new(1.0, -side.normal).unwrap();
            assert_eq!(classify(&side.normal, &inc), SideClass::Illuminated);
        }
    }

    #[test]
    fn incidence_angle_round_trip() {
        let inc = Incidence::from_angle(2.0, PI / 6.0).unwrap();
        assert!((inc.direction.norm() - 1.0).abs() < 1e-14);
        assert!((inc.angle() - PI / 6.0).abs() < 1e-14);
        assert!((inc.mu() - 1.0).abs() < 1e-14);
        assert!(Incidence::new(0.0, Point::new(1.0, 0.0)).is_err());
    }

    #[test]
    fn gratings() {
        let flat = make_grating(2.0 * PI, &ProfileSpec::Flat).unwrap();
        assert_eq!(flat.f(1.3), 0.0);
        assert_eq!(flat.jacobian(0.7), 1.0);
        let sin = make_grating(2.0 * PI, &ProfileSpec::Sinusoid { amplitude: 0.3 }).unwrap();
        assert!((sin.f_max() - 0.3).abs() < 1e-15);
        let bad = ProfileSpec::Samples { x: vec![0.0, 1.0, 2.0, 3.0], f: vec![0.0, 1.0, 0.5, 0.2] };
        assert!(matches!(make_grating(3.0, &bad), Err(HnaError::Config(_))));
    }

    #[test]
    fn spline_reproduces_smooth_profile() {
        let l = 2.0 * PI;
        let m = 64;
        let x: Vec<f64> = (0..=m).map(|i| l * i as f64 / m as f64).collect();
        let mut f: Vec<f64> = x.iter().map(|t| 0.2 * t.sin() + 0.05 * (2.0 * t).cos()).collect();
        f[m] = f[0];
        let g = make_grating(l, &ProfileSpec::Samples { x, f }).unwrap();
        for i in 0..200 {
            let t = l * (i as f64 + 0.37) / 200.0;
            let exact = 0.2 * t.sin() + 0.05 * (2.0 * t).cos();
            let dexact = 0.2 * t.cos() - 0.1 * (2.0 * t).sin();
            assert!((g.f(t) - exact).abs() < 1e-5);
            assert!((g.df(t) - dexact).abs() < 1e-3);
        }
        assert!((g.f(l + 0.5) - g.f(0.5)).abs() < 1e-14);
    }

    fn regular_polygon(n: usize, rot: f64, r: f64, c: Point) -> Vec<Point> {
        (0..n)
            .map(|j| {
                let t = rot + 2.0 * PI * j as f64 / n as f64;
                c + Point::new(r * t.cos(), r * t.sin())
            })
            .collect()
    }

    proptest! {
        #[test]
        fn angle_sum_and_outward_normals(n in 3usize..40, rot in 0.0..6.3f64, r in 0.1..10.0f64,
                                        cx in -5.0..5.0f64, cy in -5.0..5.0f64, stretch in 0.3..3.0f64) {
            let v: Vec<Point> = regular_polygon(n, rot, r, Point::new(cx, cy))
                .into_iter().map(|p| Point::new(p.x * stretch, p.y)).collect();
            let poly = make_polygon(&v).unwrap();
            let total: f64 = poly.exterior_angles.iter().sum();
            prop_assert!((total - (n as f64 + 2.0) * PI).abs() < 1e-10);
            let c = poly.centroid();
            for (j, s) in poly.sides.iter().enumerate() {
                let mid = 0.5 * (s.start + s.end);
                prop_assert!(s.normal.dot(&(c - mid)) < 0.0);
                prop_assert!(poly.delta_plus(j) > 0.0 && poly.delta_plus(j) < 0.5);
                prop_assert!(((s.point(0.3 * s.length) - s.point(0.2 * s.length)).norm() / (0.1 * s.length) - 1.0).abs() < 1e-12);
            }
        }

        #[test]
        fn flipping_direction_swaps_lit_sides(n in 2usize..12, rot in 0.0..6.3f64, phi in 0.0..6.3f64) {
            let poly = make_polygon(&regular_polygon(2 * n, rot, 1.0, Point::zeros())).unwrap();
            let d = Point::new(phi.cos(), phi.sin());
            let a = classify_sides(&poly, &Incidence::new(1.0, d).unwrap());
            let b = classify_sides(&poly, &Incidence::new(1.0, -d).unwrap());
            for j in 0..poly.num_sides() {
                let dn = d.dot(&poly.sides[j].normal);
                if dn.abs() > 1e-12 {
                    prop_assert_ne!(a[j], b[j]);
                }
            }
        }
    }
}
