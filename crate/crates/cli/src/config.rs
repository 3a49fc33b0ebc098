//! Flat `key = value` experiment configuration.
//!
//! One entry per line, `#` starts a comment, sections are dotted key
//! prefixes (`incidence.k = 5, 10`). Numbers may use `pi`, as in `2*pi`
//! or `pi/6`.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use helmholtz_hna::geometry::{read_profile_csv, ConvexPolygon, Point, ProfileSpec};
use helmholtz_hna::ops::QuadBudget;
use helmholtz_hna::unified::GratingMethod;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    Screen,
    Polygon,
    Interior,
    Grating,
    ConvergenceSweep,
    GreensCheck,
}

impl ExperimentKind {
    fn parse(s: &str) -> CliResult<Self> {
        Ok(match s {
            "screen" => ExperimentKind::Screen,
            "polygon" => ExperimentKind::Polygon,
            "interior" => ExperimentKind::Interior,
            "grating" => ExperimentKind::Grating,
            "convergence-sweep" => ExperimentKind::ConvergenceSweep,
            "greens-check" => ExperimentKind::GreensCheck,
            _ => return Err(CliError::Config(format!("unknown experiment '{s}'"))),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::Screen => "screen",
            ExperimentKind::Polygon => "polygon",
            ExperimentKind::Interior => "interior",
            ExperimentKind::Grating => "grating",
            ExperimentKind::ConvergenceSweep => "convergence-sweep",
            ExperimentKind::GreensCheck => "greens-check",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum GeometrySpec {
    Screen { length: f64 },
    /// Counterclockwise vertices; `regular` records a circumradius for the disk eigenvalue check.
    Polygon { poly: ConvexPolygon, regular: Option<f64> },
    Grating { period: f64, profile: ProfileSpec },
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModeSpec {
    /// All propagating modes plus this many evanescent ones.
    Auto(usize),
    List(Vec<i64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldGrid {
    pub nx: usize,
    pub ny: usize,
    pub x: (f64, f64),
    pub y: (f64, f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSpec {
    pub enabled: bool,
    /// HNA reference order (screens).
    pub p: usize,
    /// Unknowns per wavelength of the standard BEM reference (polygons).
    pub dpw: f64,
    pub degree: usize,
    pub layers: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub geometry: GeometrySpec,
    pub ks: Vec<f64>,
    pub theta: f64,
    pub ps: Vec<usize>,
    pub n: Option<usize>,
    pub sigma: f64,
    pub method: GratingMethod,
    pub modes: ModeSpec,
    pub directions: Vec<usize>,
    pub reference: ReferenceSpec,
    pub budget: QuadBudget,
    pub out_dir: PathBuf,
    pub far_field: usize,
    pub field_grid: Option<FieldGrid>,
    pub timings: bool,
    pub seed: u64,
    pub greens_source: Point,
    pub greens_points: usize,
    /// Every effective setting, defaults included, for the manifest.
    pub resolved: BTreeMap<String, String>,
}

/// Command-line overrides; each replaces one config key.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub k: Option<String>,
    pub p: Option<String>,
    pub n: Option<String>,
    pub sigma: Option<String>,
    pub theta_inc: Option<String>,
    pub method: Option<String>,
    pub out_dir: Option<PathBuf>,
    pub seed: Option<u64>,
}

/// Parses the text of a config file into raw entries.
pub fn parse_entries(text: &str) -> CliResult<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("line {}: expected 'key = value'", lineno + 1)))?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() || k.contains(char::is_whitespace) {
            return Err(CliError::Config(format!("line {}: invalid key '{k}'", lineno + 1)));
        }
        if out.insert(k.to_string(), v.to_string()).is_some() {
            return Err(CliError::Config(format!("line {}: duplicate key '{k}'", lineno + 1)));
        }
    }
    Ok(out)
}

/// Evaluates a number such as `0.5`, `pi`, `2pi`, `2*pi/3` or `-pi/6`.
pub fn parse_number(s: &str) -> CliResult<f64> {
    let bad = || CliError::Config(format!("cannot parse number '{s}'"));
    let t = s.trim();
    if t.is_empty() {
        return Err(bad());
    }
    let (sign, t) = match t.strip_prefix('-') {
        Some(r) => (-1.0, r),
        None => (1.0, t),
    };
    let mut parts = t.split('/');
    let mut value = product(parts.next().ok_or_else(bad)?).ok_or_else(bad)?;
    for d in parts {
        value /= product(d).ok_or_else(bad)?;
    }
    let v = sign * value;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(bad())
    }
}

fn product(s: &str) -> Option<f64> {
    let mut v = 1.0;
    for f in s.split('*') {
        let f = f.trim();
        v *= if f == "pi" {
            PI
        } else if let Some(c) = f.strip_suffix("pi") {
            c.trim().parse::<f64>().ok()? * PI
        } else {
            f.parse::<f64>().ok()?
        };
    }
    Some(v)
}

fn parse_list<T>(s: &str, item: impl Fn(&str) -> CliResult<T>) -> CliResult<Vec<T>> {
    let v: Vec<T> = s.split(',').map(|x| item(x.trim())).collect::<CliResult<_>>()?;
    if v.is_empty() {
        return Err(CliError::Config(format!("empty list '{s}'")));
    }
    Ok(v)
}

fn parse_usize(s: &str) -> CliResult<usize> {
    s.trim().parse().map_err(|_| CliError::Config(format!("expected a nonnegative integer, got '{s}'")))
}

fn parse_i64(s: &str) -> CliResult<i64> {
    s.trim().parse().map_err(|_| CliError::Config(format!("expected an integer, got '{s}'")))
}

/// Integer list with inclusive ranges: `1..5` or `1, 2, 4`.
fn parse_int_list<T: TryFrom<i64>>(s: &str) -> CliResult<Vec<T>> {
    let mut out = Vec::new();
    for part in s.split(',') {
        let part = part.trim();
        let (a, b) = match part.split_once("..") {
            Some((a, b)) => (parse_i64(a)?, parse_i64(b)?),
            None => {
                let v = parse_i64(part)?;
                (v, v)
            }
        };
        if a > b {
            return Err(CliError::Config(format!("empty range '{part}'")));
        }
        for v in a..=b {
            out.push(T::try_from(v).map_err(|_| CliError::Config(format!("value {v} out of range in '{s}'")))?);
        }
    }
    if out.is_empty() {
        return Err(CliError::Config(format!("empty list '{s}'")));
    }
    Ok(out)
}

fn parse_bool(s: &str) -> CliResult<bool> {
    match s {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(CliError::Config(format!("expected true or false, got '{s}'"))),
    }
}

struct Reader {
    raw: BTreeMap<String, String>,
    used: BTreeSet<String>,
    resolved: BTreeMap<String, String>,
}

impl Reader {
    fn get(&mut self, key: &str, default: Option<&str>) -> Option<String> {
        let v = match self.raw.get(key) {
            Some(v) => {
                self.used.insert(key.to_string());
                Some(v.clone())
            }
            None => default.map(str::to_string),
        };
        if let Some(v) = &v {
            self.resolved.insert(key.to_string(), v.clone());
        }
        v
    }

    fn need(&mut self, key: &str, default: Option<&str>) -> CliResult<String> {
        self.get(key, default).ok_or_else(|| CliError::Config(format!("missing required key '{key}'")))
    }

    fn num(&mut self, key: &str, default: &str) -> CliResult<f64> {
        let v = self.need(key, Some(default))?;
        parse_number(&v).map_err(|e| CliError::Config(format!("{key}: {e}")))
    }

    fn int(&mut self, key: &str, default: &str) -> CliResult<usize> {
        let v = self.need(key, Some(default))?;
        parse_usize(&v).map_err(|e| CliError::Config(format!("{key}: {e}")))
    }
}

fn parse_vertices(s: &str) -> CliResult<Vec<Point>> {
    s.split(';')
        .map(|pair| {
            let xy: Vec<&str> = pair.split_whitespace().collect();
            if xy.len() != 2 {
                return Err(CliError::Config(format!("vertex '{}' must be 'x y'", pair.trim())));
            }
            Ok(Point::new(parse_number(xy[0])?, parse_number(xy[1])?))
        })
        .collect()
}

fn parse_point(s: &str) -> CliResult<Point> {
    let v = parse_list(s, parse_number)?;
    if v.len() != 2 {
        return Err(CliError::Config(format!("expected 'x, y', got '{s}'")));
    }
    Ok(Point::new(v[0], v[1]))
}

/// Builds the experiment from raw entries and overrides; `base` resolves relative paths.
pub fn build(mut raw: BTreeMap<String, String>, ov: &Overrides, base: &Path) -> CliResult<ExperimentConfig> {
    let mut override_keys = BTreeSet::new();
    let mut set = |raw: &mut BTreeMap<String, String>, key: &str, v: Option<String>| {
        if let Some(v) = v {
            raw.insert(key.to_string(), v);
            override_keys.insert(key.to_string());
        }
    };
    set(&mut raw, "incidence.k", ov.k.clone());
    set(&mut raw, "discretization.p", ov.p.clone());
    set(&mut raw, "discretization.n", ov.n.clone());
    set(&mut raw, "discretization.sigma", ov.sigma.clone());
    set(&mut raw, "incidence.theta", ov.theta_inc.clone());
    set(&mut raw, "discretization.method", ov.method.clone());
    set(&mut raw, "output.dir", ov.out_dir.as_ref().map(|p| p.display().to_string()));
    set(&mut raw, "seed", ov.seed.map(|s| s.to_string()));

    let mut r = Reader { raw, used: BTreeSet::new(), resolved: BTreeMap::new() };
    let kind = ExperimentKind::parse(&r.need("experiment", None)?)?;

    let default_geom = match kind {
        ExperimentKind::Screen | ExperimentKind::ConvergenceSweep => "screen",
        ExperimentKind::Polygon | ExperimentKind::GreensCheck => "triangle",
        ExperimentKind::Interior => "regular",
        ExperimentKind::Grating => "grating",
    };
    let gkind = r.need("geometry.kind", Some(default_geom))?;
    let geometry = match gkind.as_str() {
        "screen" => GeometrySpec::Screen { length: r.num("geometry.length", "2*pi")? },
        "triangle" => {
            let t = ConvexPolygon::equilateral(r.num("geometry.side", "2*pi")?)?;
            let c = t.centroid();
            GeometrySpec::Polygon { poly: t.translated(-c), regular: None }
        }
        "regular" => {
            let n = r.int("geometry.sides", "128")?;
            let radius = r.num("geometry.radius", "1")?;
            GeometrySpec::Polygon { poly: ConvexPolygon::regular(n, radius)?, regular: Some(radius) }
        }
        "polygon" => {
            let v = parse_vertices(&r.need("geometry.vertices", None)?)?;
            let poly = helmholtz_hna::geometry::make_polygon(&v)?;
            let center = parse_bool(&r.need("geometry.center", Some("false"))?)?;
            let poly = if center {
                let c = poly.centroid();
                poly.translated(-c)
            } else {
                poly
            };
            GeometrySpec::Polygon { poly, regular: None }
        }
        "grating" => {
            let period = r.num("geometry.period", "2*pi")?;
            let profile = match r.need("geometry.profile", Some("flat"))?.as_str() {
                "flat" => ProfileSpec::Flat,
                "sinusoid" => ProfileSpec::Sinusoid { amplitude: r.num("geometry.amplitude", "0")? },
                "samples" => {
                    let p = PathBuf::from(r.need("geometry.samples", None)?);
                    read_profile_csv(&base.join(p))?
                }
                other => return Err(CliError::Config(format!("unknown grating profile '{other}'"))),
            };
            GeometrySpec::Grating { period, profile }
        }
        other => return Err(CliError::Config(format!("unknown geometry kind '{other}'"))),
    };
    let geometry_ok = matches!(
        (kind, &geometry),
        (ExperimentKind::Screen, GeometrySpec::Screen { .. })
            | (ExperimentKind::Polygon | ExperimentKind::Interior | ExperimentKind::GreensCheck, GeometrySpec::Polygon { .. })
            | (ExperimentKind::Grating, GeometrySpec::Grating { .. })
            | (ExperimentKind::ConvergenceSweep, GeometrySpec::Screen { .. } | GeometrySpec::Polygon { .. })
    );
    if !geometry_ok {
        return Err(CliError::Config(format!("geometry '{gkind}' is not valid for experiment '{}'", kind.name())));
    }

    let ks = parse_list(&r.need("incidence.k", None)?, parse_number)?;
    if ks.iter().any(|k| !(*k > 0.0)) {
        return Err(CliError::Config("incidence.k values must be positive".into()));
    }
    let default_theta = match (&geometry, kind) {
        (_, ExperimentKind::Interior) => "0.3",
        (GeometrySpec::Screen { .. }, _) => "pi/6",
        (GeometrySpec::Polygon { .. }, _) => "3*pi/4",
        (GeometrySpec::Grating { .. }, _) => "0",
    };
    let theta = r.num("incidence.theta", default_theta)?;
    if matches!(geometry, GeometrySpec::Grating { .. }) && !(theta.abs() < PI / 2.0) {
        return Err(CliError::Config(format!("grating incidence angle must lie in (-pi/2, pi/2), got {theta}")));
    }

    let mut ps = vec![3];
    let mut n = None;
    let mut sigma = 0.15;
    let mut reference = ReferenceSpec { enabled: false, p: 6, dpw: 20.0, degree: 5, layers: 24 };
    let mut far_field = 0;
    let mut field_grid = None;
    let hna = matches!(kind, ExperimentKind::Screen | ExperimentKind::Polygon | ExperimentKind::ConvergenceSweep);
    if hna {
        let default_p = if kind == ExperimentKind::ConvergenceSweep { "1..5" } else { "3" };
        ps = parse_int_list(&r.need("discretization.p", Some(default_p))?)?;
        if ps.iter().any(|p| *p > 12) {
            return Err(CliError::Config("discretization.p must not exceed 12".into()));
        }
        let nv = r.need("discretization.n", Some("auto"))?;
        n = if nv == "auto" { None } else { Some(parse_usize(&nv)?) };
        sigma = r.num("discretization.sigma", "0.15")?;
        if !(sigma > 0.0 && sigma < 1.0) {
            return Err(CliError::Config(format!("discretization.sigma must lie in (0, 1), got {sigma}")));
        }
        reference.enabled = parse_bool(&r.need("reference.enabled", Some("true"))?)?;
        if reference.enabled {
            match geometry {
                GeometrySpec::Screen { .. } => reference.p = r.int("reference.p", "6")?,
                _ => {
                    reference.dpw = r.num("reference.dpw", "20")?;
                    reference.degree = r.int("reference.degree", "5")?;
                    reference.layers = r.int("reference.layers", "24")?;
                    if !(reference.dpw >= 10.0) {
                        return Err(CliError::Config("reference.dpw must be at least 10".into()));
                    }
                }
            }
        }
        far_field = r.int("output.far_field", "0")?;
        if let Some(g) = r.get("output.field_grid", None) {
            let v = parse_list(&g, parse_number)?;
            if v.len() != 6 || v[0] < 1.0 || v[1] < 1.0 || v[0].fract() != 0.0 || v[1].fract() != 0.0 {
                return Err(CliError::Config("output.field_grid must be 'nx, ny, x0, x1, y0, y1'".into()));
            }
            field_grid = Some(FieldGrid { nx: v[0] as usize, ny: v[1] as usize, x: (v[2], v[3]), y: (v[4], v[5]) });
        }
    }

    let mut method = GratingMethod::SsStar;
    let mut modes = ModeSpec::Auto(4);
    if kind == ExperimentKind::Grating {
        method = r.need("discretization.method", Some("SSstar"))?.parse().map_err(|e: helmholtz_hna::HnaError| CliError::Config(e.to_string()))?;
        let mv = r.need("discretization.modes", Some("auto"))?;
        modes = if mv == "auto" {
            ModeSpec::Auto(r.int("discretization.extra_modes", "4")?)
        } else {
            ModeSpec::List(parse_int_list(&mv)?)
        };
    }

    let mut directions = vec![16];
    if kind == ExperimentKind::Interior {
        directions = parse_int_list(&r.need("discretization.directions", Some("16"))?)?;
        if directions.contains(&0) {
            return Err(CliError::Config("discretization.directions must be positive".into()));
        }
    }

    let mut greens_source = Point::new(0.0, 0.0);
    let mut greens_points = 20;
    if kind == ExperimentKind::GreensCheck {
        greens_source = parse_point(&r.need("greens.source", Some("10, 3"))?)?;
        greens_points = r.int("greens.points", "20")?;
    }

    let budget = QuadBudget {
        points_per_wavelength: r.num("quadrature.points_per_wavelength", "10")?,
        singular_layers: r.int("quadrature.singular_layers", "20")?,
        singular_grading: r.num("quadrature.singular_grading", "0.15")?,
        gauss_order: r.int("quadrature.gauss_order", "10")?,
    };
    budget.validate()?;

    let out_dir = base.join(r.need("output.dir", Some("out"))?);
    let timings = parse_bool(&r.need("output.timings", Some("false"))?)?;
    let seed = r
        .need("seed", Some("1"))?
        .parse::<u64>()
        .map_err(|_| CliError::Config("seed must be a nonnegative integer".into()))?;

    let unused: Vec<&String> =
        r.raw.keys().filter(|k| !r.used.contains(*k) && !override_keys.contains(*k)).collect();
    if !unused.is_empty() {
        return Err(CliError::Config(format!(
            "keys not used by experiment '{}': {}",
            kind.name(),
            unused.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(", ")
        )));
    }

    Ok(ExperimentConfig {
        kind,
        geometry,
        ks,
        theta,
        ps,
        n,
        sigma,
        method,
        modes,
        directions,
        reference,
        budget,
        out_dir,
        far_field,
        field_grid,
        timings,
        seed,
        greens_source,
        greens_points,
        resolved: r.resolved,
    })
}

/// Reads and builds a config file; relative paths resolve against the working directory.
pub fn load(path: &Path, ov: &Overrides) -> CliResult<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    build(parse_entries(&text)?, ov, Path::new("."))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(text: &str) -> CliResult<ExperimentConfig> {
        build(parse_entries(text).unwrap(), &Overrides::default(), Path::new("."))
    }

    #[test]
    fn numbers_with_pi() {
        assert_eq!(parse_number("2").unwrap(), 2.0);
        assert_eq!(parse_number("pi").unwrap(), PI);
        assert_eq!(parse_number("2pi").unwrap(), 2.0 * PI);
        assert_eq!(parse_number("2*pi").unwrap(), 2.0 * PI);
        assert_eq!(parse_number("-pi/6").unwrap(), -PI / 6.0);
        assert_eq!(parse_number("1e-3").unwrap(), 1e-3);
        assert!(parse_number("pie").is_err());
        assert!(parse_number("").is_err());
        assert!(parse_number("1/0").is_err());
    }

    #[test]
    fn entries_and_comments() {
        let e = parse_entries("# header\nexperiment = screen  # trailing\n\nincidence.k = 5, 10\n").unwrap();
        assert_eq!(e["experiment"], "screen");
        assert_eq!(e["incidence.k"], "5, 10");
        assert!(parse_entries("a = 1\na = 2\n").is_err());
        assert!(parse_entries("no equals sign\n").is_err());
    }

    #[test]
    fn int_lists_and_ranges() {
        assert_eq!(parse_int_list::<usize>("1..3, 5").unwrap(), vec![1, 2, 3, 5]);
        assert_eq!(parse_int_list::<i64>("-2..2").unwrap(), vec![-2, -1, 0, 1, 2]);
        assert!(parse_int_list::<usize>("-1").is_err());
        assert!(parse_int_list::<i64>("3..1").is_err());
    }

    #[test]
    fn screen_defaults() {
        let c = cfg("experiment = screen\nincidence.k = 5\n").unwrap();
        assert_eq!(c.ps, vec![3]);
        assert!((c.theta - PI / 6.0).abs() < 1e-15);
        assert!(matches!(c.geometry, GeometrySpec::Screen { length } if (length - 2.0 * PI).abs() < 1e-15));
        assert_eq!(c.resolved["discretization.sigma"], "0.15");
        let c = cfg("experiment = convergence-sweep\nincidence.k = 5\n").unwrap();
        assert_eq!(c.ps, vec![1, 2, 3, 4, 5]);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(matches!(cfg("experiment = screen\nincidence.k = 5\ndiscretization.sigma = 1.5\n"), Err(CliError::Config(_))));
        assert!(cfg("experiment = nothing\nincidence.k = 5\n").is_err());
        assert!(cfg("experiment = screen\n").is_err());
        assert!(cfg("experiment = screen\nincidence.k = -1\n").is_err());
        assert!(cfg("experiment = screen\nincidence.k = 5\ngeometry.kind = grating\n").is_err());
        assert!(cfg("experiment = screen\nincidence.k = 5\ndiscretization.method = SC\n").is_err());
        assert!(cfg("experiment = grating\nincidence.k = 2\nincidence.theta = 2\n").is_err());
    }

    #[test]
    fn overrides_replace_keys() {
        let ov = Overrides { k: Some("7".into()), method: Some("SC".into()), seed: Some(9), ..Default::default() };
        let c = build(parse_entries("experiment = screen\nincidence.k = 5\n").unwrap(), &ov, Path::new(".")).unwrap();
        assert_eq!(c.ks, vec![7.0]);
        assert_eq!(c.seed, 9);
        let c = build(parse_entries("experiment = grating\nincidence.k = 2\n").unwrap(), &ov, Path::new(".")).unwrap();
        assert_eq!(c.method, GratingMethod::Sc);
    }
}
