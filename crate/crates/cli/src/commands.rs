use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;

use anyhow::{Context, Result};
use deltasl::fef::SurfaceMetadata;
use deltasl::inverse::{
    default_validation_grid, reconstruct, roundtrip_check, tabulate, validate_fef, ReconstructOptions,
    ValidationOptions,
};
use deltasl::io::fmt_num;
use deltasl::measure::{weakstar_convergence_study, write_study_csv};
use deltasl::spectrum::{eigenfunction, verify_simplicity};
use deltasl::{CoefficientFunction, DirichletProblem, FefSolver, Grid, LambdaSurface};
use serde_json::json;

use crate::config::{Coefficient, ConfigError, Resolved, SurfaceSource};
use crate::output::{write_atomic, write_text};

fn sample(c: &Coefficient, grid: &Grid) -> Result<CoefficientFunction> {
    Ok(match c {
        Coefficient::Rules(rules) => rules.sample(grid)?,
        Coefficient::Csv(path) => {
            let file = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
            let f = CoefficientFunction::read_csv(file).with_context(|| path.display().to_string())?;
            if f.grid() == grid {
                f
            } else {
                CoefficientFunction::sample(grid, |x| f.eval(x))?
            }
        }
    })
}

fn problem(cfg: &Resolved) -> Result<DirichletProblem> {
    let grid = Grid::uniform(cfg.grid_points)?;
    Ok(DirichletProblem::unperturbed(
        sample(&cfg.potential, &grid)?,
        sample(&cfg.weight, &grid)?,
    )?)
}

fn metadata(cfg: &Resolved) -> SurfaceMetadata {
    SurfaceMetadata {
        potential: cfg.potential.to_string(),
        weight: cfg.weight.to_string(),
        grid_points: cfg.grid_points,
    }
}

fn load_surface(source: &SurfaceSource, t: &[f64], r: &[f64]) -> Result<LambdaSurface> {
    match source {
        SurfaceSource::SineLaw(law) => Ok(tabulate(|t, r| law.eval(t, r), t, r)?),
        SurfaceSource::File(path) => {
            let ctx = || path.display().to_string();
            if path.extension().is_some_and(|e| e == "json") {
                let text = fs::read_to_string(path).with_context(ctx)?;
                Ok(LambdaSurface::from_json(&text).with_context(ctx)?)
            } else {
                let file = fs::File::open(path).with_context(ctx)?;
                Ok(LambdaSurface::read_csv(file).with_context(ctx)?)
            }
        }
    }
}

fn to_pretty<T: serde::Serialize>(v: &T) -> deltasl::Result<String> {
    Ok(serde_json::to_string_pretty(v)?)
}

pub fn spectrum(cfg: &Resolved) -> Result<()> {
    let p = problem(cfg)?;
    let results: Vec<_> = (1..=cfg.spectrum_count)
        .map(|m| eigenfunction(&p, m))
        .collect::<deltasl::Result<_>>()?;
    let out = &cfg.output_dir;
    let mut eigen = Vec::new();
    for e in &results {
        write_atomic(out, &format!("eigenfunction_{}.csv", e.index), |buf| e.eigenfunction.write_csv(buf))?;
        let simplicity = verify_simplicity(e, &p);
        eigen.push(json!({"summary": e.summary(), "simplicity": simplicity}));
        println!("lambda_{} = {}", e.index, fmt_num(e.lambda));
    }
    let doc = json!({
        "potential": cfg.potential.to_string(),
        "weight": cfg.weight.to_string(),
        "grid_points": cfg.grid_points,
        "eigenvalues": eigen,
    });
    write_text(out, "spectrum.json", &to_pretty(&doc)?)?;
    Ok(())
}

/// Gnuplot `splot` data: one block per t, blank line between blocks.
fn gnuplot_blocks(s: &LambdaSurface) -> String {
    let mut text = String::from("# t r lambda\n");
    for (t, row) in s.t_grid.iter().zip(&s.values) {
        for (r, v) in s.r_list.iter().zip(row) {
            let _ = writeln!(text, "{} {} {}", fmt_num(*t), fmt_num(*r), fmt_num(*v));
        }
        text.push('\n');
    }
    text
}

pub fn fef_surface(cfg: &Resolved) -> Result<()> {
    let solver = FefSolver::new(&problem(cfg)?)?;
    let mut surface = solver.surface(&cfg.surface_t, &cfg.surface_r)?;
    surface.metadata = metadata(cfg);
    let out = &cfg.output_dir;
    write_atomic(out, "surface.csv", |buf| surface.write_csv(buf))?;
    write_text(out, "surface.json", &surface.to_json()?)?;
    write_text(out, "surface.dat", &gnuplot_blocks(&surface))?;
    println!("lambda_1 = {}", fmt_num(surface.lambda1));
    println!(
        "surface: {} t x {} r written to {}",
        surface.t_grid.len(),
        surface.r_list.len(),
        out.display()
    );
    Ok(())
}

fn validation_options(cfg: &Resolved) -> ValidationOptions {
    ValidationOptions {
        reconstruct: ReconstructOptions {
            delta: cfg.delta,
            smoothing: cfg.smoothing,
        },
        sample_range: cfg.sample_range,
        ..Default::default()
    }
}

fn run_validation(cfg: &Resolved, surface: &LambdaSurface, w: &CoefficientFunction) -> Result<bool> {
    let report = validate_fef(surface, w, validation_options(cfg))?;
    write_text(&cfg.output_dir, "validation.json", &report.to_json()?)?;
    let line = serde_json::to_string(&report.verdict)?;
    println!("validation: {line}");
    Ok(report.accepted())
}

pub fn reconstruct_cmd(cfg: &Resolved, validate: bool) -> Result<()> {
    let source = cfg
        .reconstruct_source
        .as_ref()
        .ok_or_else(|| ConfigError::new("reconstruct.surface", "no surface given"))?
        .require("reconstruct.surface")?;
    let (t, r) = default_validation_grid();
    let surface = load_surface(source, &t, &r)?;
    let grid = Grid::uniform(cfg.grid_points)?;
    let w = sample(&cfg.weight, &grid)?;
    if validate {
        run_validation(cfg, &surface, &w)?;
    }

    let opts = ReconstructOptions {
        delta: cfg.delta,
        smoothing: cfg.smoothing,
    };
    let mut result = reconstruct(&surface, &w, opts)?;
    if let Some(truth) = &cfg.truth {
        let q = sample(truth, &grid)?;
        let report = roundtrip_check(&q, &result, &w)?;
        write_text(&cfg.output_dir, "roundtrip.json", &to_pretty(&report)?)?;
        println!("roundtrip: relative L2 error {:e}", report.relative_l2_error);
        result.diagnostics.residual_norms = Some(report);
    }
    write_text(&cfg.output_dir, "reconstruction.json", &result.to_json()?)?;
    write_atomic(&cfg.output_dir, "reconstruction.csv", |buf| result.write_csv(buf))?;
    println!(
        "reconstructed on [{}, {}], lambda_1 error {:e}",
        result.interior_margin,
        1.0 - result.interior_margin,
        result.diagnostics.roundtrip_lambda1_error
    );
    Ok(())
}

pub fn validate_cmd(cfg: &Resolved) -> Result<()> {
    let source = cfg
        .candidate
        .as_ref()
        .ok_or_else(|| ConfigError::new("validate_fef.candidate", "no candidate given"))?
        .require("validate_fef.candidate")?;
    let (t0, r0) = default_validation_grid();
    let t = cfg.validate_t.clone().unwrap_or(t0);
    let r = cfg.validate_r.clone().unwrap_or(r0);
    let surface = load_surface(source, &t, &r)?;
    let w = sample(&cfg.weight, &Grid::uniform(cfg.grid_points)?)?;
    run_validation(cfg, &surface, &w)?;
    Ok(())
}

pub fn weakstar(cfg: &Resolved) -> Result<()> {
    let p = problem(cfg)?;
    let ws = &cfg.weakstar;
    let rows = weakstar_convergence_study(p.q(), p.w(), ws.t, ws.r, &ws.n_list)?;
    write_atomic(&cfg.output_dir, "weakstar.csv", |buf| write_study_csv(&rows, buf))?;
    let mut stdout = std::io::stdout().lock();
    for row in &rows {
        writeln!(stdout, "n = {:>4}  gap = {:e}", row.n, row.gap)?;
    }
    Ok(())
}
