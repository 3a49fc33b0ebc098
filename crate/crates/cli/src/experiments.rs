//! Experiment drivers. Each returns its CSV tables and per-cell timings.

use std::time::Instant;

use helmholtz_hna::geometry::{make_grating, make_screen, ConvexPolygon, Incidence, Point};
use helmholtz_hna::hna::{
    assemble_and_solve, build_hna_space, domain_field, far_field, reconstruct_neumann, relative_error, DensityApprox,
    ErrorNorm, Formulation, HnaGeometry,
};
use helmholtz_hna::oracles::{standard_bem_reference, PlaneWaveSeries, ReferenceOptions};
use helmholtz_hna::ops::greens_identity_residual;
use helmholtz_hna::unified::{
    boundary_l2_norm, energy_balance, equispaced_directions, grating_assemble_solve, interior_planewave_galerkin,
    mode_sequence, plane_wave_neumann, DirichletData,
};
use helmholtz_hna::HnaError;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{ExperimentConfig, ExperimentKind, GeometrySpec, ModeSpec};
use crate::error::CliResult;
use crate::output::{num, timing, Table};

pub struct Outcome {
    pub tables: Vec<Table>,
    pub timings: Vec<(String, f64)>,
}

pub fn run(cfg: &ExperimentConfig) -> CliResult<Outcome> {
    match cfg.kind {
        ExperimentKind::Screen | ExperimentKind::Polygon | ExperimentKind::ConvergenceSweep => run_hna(cfg),
        ExperimentKind::Interior => run_interior(cfg),
        ExperimentKind::Grating => run_grating(cfg),
        ExperimentKind::GreensCheck => run_greens(cfg),
    }
}

fn hna_geometry(cfg: &ExperimentConfig) -> CliResult<HnaGeometry> {
    Ok(match &cfg.geometry {
        GeometrySpec::Screen { length } => HnaGeometry::Screen(make_screen(*length)?),
        GeometrySpec::Polygon { poly, .. } => HnaGeometry::Polygon(poly.clone()),
        GeometrySpec::Grating { .. } => unreachable!("rejected during config validation"),
    })
}

fn polygon(cfg: &ExperimentConfig) -> (&ConvexPolygon, Option<f64>) {
    match &cfg.geometry {
        GeometrySpec::Polygon { poly, regular } => (poly, *regular),
        _ => unreachable!("rejected during config validation"),
    }
}

fn run_hna(cfg: &ExperimentConfig) -> CliResult<Outcome> {
    let geom = hna_geometry(cfg)?;
    let bnd = geom.boundary();
    let (formulation, kind) = match geom {
        HnaGeometry::Screen(_) => (Formulation::ScreenSingleLayer, "screen"),
        HnaGeometry::Polygon(_) => (Formulation::PolygonStarCombined, "polygon"),
    };
    let b = &cfg.budget;
    let mut conv = Table::new(
        "convergence.csv",
        &["kind", "k", "p", "n", "N", "rel_err_L1", "rel_err_L2", "cond", "assembly_s", "solve_s"],
    );
    let mut ff = Table::new("far_field.csv", &["k", "p", "angle", "re_F", "im_F", "abs_F"]);
    let mut grid = Table::new("field.csv", &["k", "p", "x", "y", "re_u", "im_u"]);
    let mut timings = Vec::new();
    for &k in &cfg.ks {
        let inc = Incidence::from_angle(k, cfg.theta)?;
        let t0 = Instant::now();
        let reference: Option<DensityApprox> = if cfg.reference.enabled {
            Some(match geom {
                HnaGeometry::Screen(_) => {
                    let p = cfg.reference.p;
                    let space = build_hna_space(&geom, k, p, 2 * (p + 1), cfg.sigma)?;
                    let (phi, _) = assemble_and_solve(&space, formulation, &inc, b)?;
                    reconstruct_neumann(&phi, &geom, &inc)?
                }
                HnaGeometry::Polygon(_) => {
                    let opts = ReferenceOptions {
                        degree: cfg.reference.degree,
                        corner_layers: cfg.reference.layers,
                        corner_sigma: cfg.sigma,
                    };
                    standard_bem_reference(&geom, &inc, cfg.reference.dpw, &opts, b)?.density
                }
            })
        } else {
            None
        };
        timings.push((format!("reference.k{k}"), t0.elapsed().as_secs_f64()));
        for &p in &cfg.ps {
            let n = cfg.n.unwrap_or(2 * (p + 1));
            let t0 = Instant::now();
            let space = build_hna_space(&geom, k, p, n, cfg.sigma)?;
            let (phi, rep) = assemble_and_solve(&space, formulation, &inc, b)?;
            let full = reconstruct_neumann(&phi, &geom, &inc)?;
            let (e1, e2) = match &reference {
                // the screen density has inverse square-root edge singularities,
                // so only the L1 error is meaningful there
                Some(r) => (
                    relative_error(&bnd, &full, r, ErrorNorm::L1, b)?,
                    match geom {
                        HnaGeometry::Screen(_) => f64::NAN,
                        HnaGeometry::Polygon(_) => relative_error(&bnd, &full, r, ErrorNorm::L2, b)?,
                    },
                ),
                None => (f64::NAN, f64::NAN),
            };
            conv.push(vec![
                kind.into(),
                num(k),
                p.to_string(),
                n.to_string(),
                rep.dimension.to_string(),
                num(e1),
                num(e2),
                num(rep.condition),
                timing(cfg.timings, rep.assembly_s),
                timing(cfg.timings, rep.solve_s),
            ]);
            if cfg.far_field > 0 {
                let m = cfg.far_field;
                let angles: Vec<f64> = (0..m).map(|j| 2.0 * std::f64::consts::PI * j as f64 / m as f64).collect();
                let dirs: Vec<Point> = angles.iter().map(|a| Point::new(a.cos(), a.sin())).collect();
                let f = far_field(&bnd, &full, &dirs, b)?;
                for (a, v) in angles.iter().zip(&f) {
                    ff.push(vec![num(k), p.to_string(), num(*a), num(v.re), num(v.im), num(v.norm())]);
                }
            }
            if let Some(g) = &cfg.field_grid {
                for iy in 0..g.ny {
                    for ix in 0..g.nx {
                        let x = lerp(g.x, ix, g.nx);
                        let y = lerp(g.y, iy, g.ny);
                        let pt = Point::new(x, y);
                        let inside = matches!(&geom, HnaGeometry::Polygon(poly) if poly.contains(&pt));
                        let u = if inside {
                            None
                        } else {
                            match domain_field(&bnd, &full, &inc, &pt, b) {
                                Ok(u) => Some(u),
                                Err(HnaError::NearBoundary { .. }) => None,
                                Err(e) => return Err(e.into()),
                            }
                        };
                        let (re, im) = u.map_or((f64::NAN, f64::NAN), |u| (u.re, u.im));
                        grid.push(vec![num(k), p.to_string(), num(x), num(y), num(re), num(im)]);
                    }
                }
            }
            timings.push((format!("cell.k{k}.p{p}"), t0.elapsed().as_secs_f64()));
        }
    }
    let mut tables = vec![conv];
    if cfg.far_field > 0 {
        tables.push(ff);
    }
    if cfg.field_grid.is_some() {
        tables.push(grid);
    }
    Ok(Outcome { tables, timings })
}

fn lerp(r: (f64, f64), i: usize, n: usize) -> f64 {
    if n == 1 {
        r.0
    } else {
        r.0 + (r.1 - r.0) * i as f64 / (n - 1) as f64
    }
}

fn run_interior(cfg: &ExperimentConfig) -> CliResult<Outcome> {
    let (poly, regular) = polygon(cfg);
    let angle = cfg.theta;
    let mut summary = Table::new(
        "interior.csv",
        &[
            "k",
            "N",
            "cond",
            "min_eig",
            "max_eig",
            "hermitian_defect",
            "l2_error",
            "rel_l2_error",
            "assembly_s",
            "solve_s",
        ],
    );
    let mut coeffs = Table::new("coefficients.csv", &["k", "N", "index", "theta", "re_c", "im_c"]);
    let mut timings = Vec::new();
    for &k in &cfg.ks {
        if let Some(radius) = regular {
            PlaneWaveSeries::new(k, angle, radius).check_disk(radius)?;
        }
        let exact = |x: &Point, nu: &Point| plane_wave_neumann(k, angle, x, nu);
        let norm = boundary_l2_norm(poly, k, exact);
        for &n in &cfg.directions {
            let t0 = Instant::now();
            let thetas = equispaced_directions(n);
            let sol = interior_planewave_galerkin(poly, k, &DirichletData::PlaneWave { angle }, &thetas)?;
            let err = sol.l2_error_against(exact);
            let g = &sol.gram;
            summary.push(vec![
                num(k),
                n.to_string(),
                num(g.condition),
                num(g.min_eigenvalue),
                num(g.max_eigenvalue),
                num(g.hermitian_defect),
                num(err),
                num(err / norm),
                timing(cfg.timings, sol.assembly_s),
                timing(cfg.timings, sol.solve_s),
            ]);
            for (i, (c, t)) in sol.coefficients().iter().zip(&thetas).enumerate() {
                coeffs.push(vec![num(k), n.to_string(), i.to_string(), num(t.re), num(c.re), num(c.im)]);
            }
            timings.push((format!("cell.k{k}.N{n}"), t0.elapsed().as_secs_f64()));
        }
    }
    Ok(Outcome { tables: vec![summary, coeffs], timings })
}

fn run_grating(cfg: &ExperimentConfig) -> CliResult<Outcome> {
    let (period, profile) = match &cfg.geometry {
        GeometrySpec::Grating { period, profile } => (*period, profile),
        _ => unreachable!("rejected during config validation"),
    };
    let profile = make_grating(period, profile)?;
    let mut report = Table::new(
        "grating.csv",
        &["method", "k", "L", "theta_inc", "N", "n_prop", "cond", "energy_defect", "runtime_s"],
    );
    let mut tables = Vec::new();
    let mut timings = Vec::new();
    for (idx, &k) in cfg.ks.iter().enumerate() {
        let t0 = Instant::now();
        let modes = match &cfg.modes {
            ModeSpec::Auto(extra) => mode_sequence(k, period, cfg.theta, *extra)?,
            ModeSpec::List(v) => v.clone(),
        };
        let sol = grating_assemble_solve(cfg.method, &profile, k, cfg.theta, &modes)?;
        let rc = sol.rayleigh()?;
        let energy = energy_balance(&rc)?;
        let elapsed = t0.elapsed().as_secs_f64();
        report.push(vec![
            cfg.method.name().into(),
            num(k),
            num(period),
            num(cfg.theta),
            modes.len().to_string(),
            sol.n_propagating.to_string(),
            num(sol.system.condition),
            num((energy - 1.0).abs()),
            timing(cfg.timings, elapsed),
        ]);
        let mut mt = Table::new(
            format!("modes_{idx}.csv"),
            &["n", "alpha_n", "re_beta_n", "im_beta_n", "re_c_n", "im_c_n", "efficiency"],
        );
        for ((m, c), e) in rc.spectrum.modes.iter().zip(&rc.coefficients).zip(&rc.efficiencies) {
            mt.push(vec![
                m.n.to_string(),
                num(m.alpha),
                num(m.beta.re),
                num(m.beta.im),
                num(c.re),
                num(c.im),
                e.map_or_else(String::new, num),
            ]);
        }
        tables.push(mt);
        timings.push((format!("cell.k{k}"), elapsed));
    }
    tables.insert(0, report);
    Ok(Outcome { tables, timings })
}

/// Random points inside the polygon, and outside it within twice its
/// circumradius, kept away from the boundary and the source.
fn sample_points(poly: &ConvexPolygon, z: &Point, count: usize, rng: &mut ChaCha8Rng) -> (Vec<Point>, Vec<Point>) {
    let c = poly.centroid();
    let r = poly.vertices.iter().map(|v| (v - c).norm()).fold(0.0, f64::max);
    let gap = 0.05 * poly.diameter();
    let mut inside = Vec::new();
    while inside.len() < count {
        let p = c + Point::new(rng.gen_range(-r..r), rng.gen_range(-r..r));
        if poly.contains(&p) && poly.distance_to_boundary(&p) > gap {
            inside.push(p);
        }
    }
    let mut outside = Vec::new();
    while outside.len() < count {
        let t = rng.gen_range(0.0..2.0 * std::f64::consts::PI);
        let rho = rng.gen_range(1.2 * r..2.0 * r);
        let p = c + Point::new(rho * t.cos(), rho * t.sin());
        if !poly.contains(&p) && poly.distance_to_boundary(&p) > gap && (p - z).norm() > gap {
            outside.push(p);
        }
    }
    (inside, outside)
}

fn run_greens(cfg: &ExperimentConfig) -> CliResult<Outcome> {
    let (poly, _) = polygon(cfg);
    let z = cfg.greens_source;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (inside, outside) = sample_points(poly, &z, cfg.greens_points, &mut rng);
    let mut t = Table::new("greens.csv", &["k", "location", "x", "y", "residual"]);
    let mut timings = Vec::new();
    for &k in &cfg.ks {
        let t0 = Instant::now();
        for (label, pts) in [("interior", &inside), ("exterior", &outside)] {
            for x in pts.iter() {
                let r = greens_identity_residual(poly, k, &z, x, &cfg.budget)?;
                t.push(vec![num(k), label.into(), num(x.x), num(x.y), num(r.norm())]);
            }
        }
        timings.push((format!("cell.k{k}"), t0.elapsed().as_secs_f64()));
    }
    Ok(Outcome { tables: vec![t], timings })
}
