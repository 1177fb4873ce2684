//! Subcommand implementations. Every file is written with fixed float
//! formatting so identical configurations give identical bytes.

use std::f64::consts::FRAC_PI_2;
use std::fmt::Write as _;
use std::path::Path;

use imexglm::catalogue::right_angle_beta;
use imexglm::integrate::{checked_reference, convergence_study, integrate as run_integration, ErrorMeasure};
use imexglm::problems::shallow_water;
use imexglm::stability::{
    boundary_locus, optimize_beta, ray_angles, region_area, s_alpha_boundary, OptimizeTarget, CELL_UNSTABLE,
};
use imexglm::GlmTableau;
use serde::Serialize;
use serde_json::json;

use crate::config::{ProblemKind, RunConfig};
use crate::{CliError, Flags};

/// Residuals above this fail `check`.
const CHECK_TOL: f64 = 1e-8;

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Validation(format!("cannot create {}: {e}", dir.display())))?;
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|e| CliError::Validation(format!("cannot write {}: {e}", path.display())))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn write_json(dir: &Path, name: &str, value: &impl Serialize) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("output serializes");
    text.push('\n');
    write_file(dir, name, &text)
}

pub fn check(cfg: &RunConfig, _: &Flags) -> Result<(), CliError> {
    let (label, tab): (String, GlmTableau) = match &cfg.tableau {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))?;
            let tab = serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
            (path.display().to_string(), tab)
        }
        None => {
            let family = cfg.family()?;
            (format!("{family:?}"), family.tableau()?)
        }
    };
    println!("{label}: s = {}, r = {}, p = {}, q = {}", tab.s(), tab.r(), tab.p, tab.q);
    let (stage, order) = tab.residual_report()?;
    let mut failed = Vec::new();
    for (kind, res) in [("stage-order", &stage), ("order", &order)] {
        for (k, r) in res.iter().enumerate() {
            let ok = *r <= CHECK_TOL;
            println!("{kind:<11} k={k} residual {r:.3e} {}", if ok { "ok" } else { "FAIL" });
            if !ok {
                failed.push(format!("{kind} k={k}"));
            }
        }
    }
    if failed.is_empty() {
        println!("all conditions hold");
        Ok(())
    } else {
        Err(CliError::Validation(format!("conditions violated: {}", failed.join(", "))))
    }
}

pub fn tableau(cfg: &RunConfig, flags: &Flags) -> Result<(), CliError> {
    let text = if flags.base_only {
        serde_json::to_string_pretty(&cfg.family()?.tableau()?)
    } else {
        serde_json::to_string_pretty(&cfg.scheme()?)
    }
    .expect("tableau serializes");
    println!("{text}");
    Ok(())
}

pub fn region(cfg: &RunConfig, _: &Flags) -> Result<(), CliError> {
    let scheme = cfg.scheme()?;
    let alpha = cfg.alpha()?;
    let res = region_area(&scheme, alpha, cfg.scan())?;
    let boundary = s_alpha_boundary(&scheme, alpha, &ray_angles(cfg.rays.max(1)), &cfg.boundary)?;

    let mut csv = String::from("psi,re,im,y,max_modulus\n");
    for p in &boundary {
        let _ = writeln!(csv, "{},{},{},{},{}", num(p.psi), num(p.z0.re), num(p.z0.im), num(p.y), num(p.max_modulus));
    }
    write_file(&cfg.out_dir, "boundary.csv", &csv)?;

    let r = &res.raster;
    let mut raster = String::from("x,y,cell\n");
    for iy in 0..r.ny {
        for ix in 0..r.nx {
            let z = r.centre(ix, iy);
            let _ = writeln!(raster, "{},{},{}", num(z.re), num(z.im), r.get(ix, iy));
        }
    }
    write_file(&cfg.out_dir, "raster.csv", &raster)?;
    write_file(&cfg.out_dir, "boundary.svg", &boundary_svg(&boundary, cfg.scan().rect))?;

    let summary = json!({
        "method": cfg.family()?,
        "beta": scheme.beta_entries(),
        "alpha_deg": cfg.alpha_deg,
        "area": res.area,
        "explicit_area": res.explicit_area,
        "cells": r.cells.iter().filter(|&&c| c != CELL_UNSTABLE).count(),
        "scan": res.settings,
    });
    write_json(&cfg.out_dir, "area.json", &summary)?;
    println!("area {:.6} (explicit region {:.6})", res.area, res.explicit_area);
    Ok(())
}

/// Boundary polyline over the scan rectangle, imaginary axis upwards.
fn boundary_svg(points: &[imexglm::stability::BoundaryPoint], rect: [f64; 4]) -> String {
    let [x0, x1, y0, y1] = rect;
    let scale = 60.0;
    let (w, h) = ((x1 - x0) * scale, (y1 - y0) * scale);
    let mut pts = String::new();
    for p in points {
        let _ = write!(pts, "{:.3},{:.3} ", (p.z0.re - x0) * scale, (y1 - p.z0.im) * scale);
    }
    let axis_x = (0.0 - x0) * scale;
    let axis_y = y1 * scale;
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w:.0}\" height=\"{h:.0}\" viewBox=\"0 0 {w:.3} {h:.3}\">\n\
         <line x1=\"{axis_x:.3}\" y1=\"0\" x2=\"{axis_x:.3}\" y2=\"{h:.3}\" stroke=\"#999\"/>\n\
         <line x1=\"0\" y1=\"{axis_y:.3}\" x2=\"{w:.3}\" y2=\"{axis_y:.3}\" stroke=\"#999\"/>\n\
         <polyline fill=\"none\" stroke=\"black\" points=\"{}\"/>\n</svg>\n",
        pts.trim_end()
    )
}

pub fn locus(cfg: &RunConfig, _: &Flags) -> Result<(), CliError> {
    let scheme = cfg.scheme()?;
    let (alpha, y) = match cfg.alpha()? {
        Some(a) => (a, cfg.locus_y),
        None => (FRAC_PI_2, 0.0),
    };
    let pts = boundary_locus(&scheme, alpha, y, cfg.locus_samples, cfg.locus_windings)?;
    let mut csv = String::from("re,im\n");
    for z in &pts {
        let _ = writeln!(csv, "{},{}", num(z.re), num(z.im));
    }
    write_file(&cfg.out_dir, "locus.csv", &csv)?;
    println!("{} locus points", pts.len());
    Ok(())
}

pub fn optimize(cfg: &RunConfig, _: &Flags) -> Result<(), CliError> {
    let family = cfg.family()?;
    let target = OptimizeTarget {
        family,
        alpha: cfg.alpha()?,
        vary_parameter: cfg.vary_parameter,
    };
    let x0 = match &cfg.x0 {
        Some(x) => x.clone(),
        None => {
            let beta = cfg.beta.clone().unwrap_or_else(|| right_angle_beta(&family));
            match (cfg.vary_parameter, family.parameter()) {
                (true, Some(p)) => std::iter::once(p).chain(beta).collect(),
                _ => beta,
            }
        }
    };
    let res = optimize_beta(&target, &x0, cfg.scan(), &cfg.search)?;
    write_json(&cfg.out_dir, "optimize.json", &json!({ "start": x0, "result": res }))?;
    println!(
        "area {:.6} at beta {:?} after {} evaluations{}",
        res.area,
        res.beta,
        res.evaluations,
        if res.budget_exhausted { " (budget exhausted)" } else { "" }
    );
    Ok(())
}

pub fn integrate(cfg: &RunConfig, _: &Flags) -> Result<(), CliError> {
    let h = cfg.h.ok_or_else(|| CliError::Validation("integrate needs a step size (--h)".into()))?;
    let scheme = cfg.scheme()?;
    let problem = cfg.problem.build()?;
    let res = run_integration(problem.as_ref(), &scheme, h, cfg.trace)?;
    let exact = problem.exact(res.t);
    let error = exact.as_ref().map(|e| {
        e.iter().zip(&res.solution).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
    });

    let solution = if cfg.problem.kind == ProblemKind::Swe {
        let p = &cfg.problem;
        shallow_water(p.nx, p.ny, p.g_grav)?.snapshot_csv(&res.solution)
    } else {
        let mut csv = String::from("index,value\n");
        for (i, v) in res.solution.iter().enumerate() {
            let _ = writeln!(csv, "{i},{}", num(*v));
        }
        csv
    };
    write_file(&cfg.out_dir, "solution.csv", &solution)?;
    if let Some(trace) = &res.trace {
        let mut csv = String::from("step,t,norm\n");
        for row in trace {
            let _ = writeln!(csv, "{},{},{}", row.step, num(row.t), num(row.norm));
        }
        write_file(&cfg.out_dir, "trace.csv", &csv)?;
    }
    write_json(
        &cfg.out_dir,
        "integrate.json",
        &json!({ "t": res.t, "steps": res.steps, "h": h, "error": error }),
    )?;
    match error {
        Some(e) => println!("t = {} after {} steps, error {e:.3e}", res.t, res.steps),
        None => println!("t = {} after {} steps", res.t, res.steps),
    }
    Ok(())
}

pub fn converge(cfg: &RunConfig, _: &Flags) -> Result<(), CliError> {
    if cfg.hs.len() < 2 {
        return Err(CliError::Validation("converge needs at least two step sizes (--hs)".into()));
    }
    let schemes = cfg.schemes()?;
    let problem = cfg.problem.build()?;
    let (t0, _) = problem.span();
    let (measure, reference_diff) = if problem.derivative(0, t0).is_some() {
        (ErrorMeasure::Expansion, None)
    } else {
        let h_min = cfg.hs.iter().copied().fold(f64::INFINITY, f64::min);
        let h_ref = cfg.h_ref.unwrap_or(h_min / 8.0);
        let (reference, diff) = checked_reference(problem.as_ref(), h_ref, cfg.ref_tol)?;
        println!("reference at h = {h_ref:e}, halving difference {diff:.3e}");
        (ErrorMeasure::Terminal(reference), Some(diff))
    };
    let table = convergence_study(problem.as_ref(), &schemes, &cfg.hs, &measure)?;
    write_file(&cfg.out_dir, "convergence.csv", &table.to_csv())?;
    write_json(
        &cfg.out_dir,
        "convergence.json",
        &json!({ "table": table, "reference_difference": reference_diff }),
    )?;
    for (name, slope) in &table.slopes {
        println!("{name}: observed order {slope:.3}");
    }
    Ok(())
}
