//! One function per subcommand. Each writes its files into the output directory and returns the
//! summary that was saved as `summary.json`.

use std::path::Path;

use anyhow::anyhow;
use serde::Serialize;
use serde_json::Value;

use swflow_core::descent::{check_separation_bound, step_size_sweep, Init, SeparationCheck};
use swflow_core::landscape::{
    analyze_cell, envelope_radius, kink_scan, local_max_at_zero, perturb_split_translation, perturb_vector_field,
    Convention, LocalMaxCheck, PerturbationCurve,
};
use swflow_core::swgrad::grad_p2;
use swflow_core::{run_descent, DescentConfig, DirectionSet, Error, PointCloud, ProjectedTarget};

use crate::config::{self, FieldSpec, PerturbModeSpec, RunConfig};
use crate::output::{config_hash, fmt_f64, fmt_opt, OutputDir};

#[derive(Debug)]
pub enum Failure {
    Config(anyhow::Error),
    Degenerate(anyhow::Error),
    Run(anyhow::Error),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Degenerate(_) => 3,
            Failure::Run(_) => 1,
        }
    }

    pub fn error(&self) -> &anyhow::Error {
        match self {
            Failure::Config(e) | Failure::Degenerate(e) | Failure::Run(e) => e,
        }
    }
}

/// Core errors on bad parameters are config errors; coincident particles and projection ties are
/// degenerate inputs.
fn classify(e: Error) -> Failure {
    match e {
        Error::OnDiagonal(..) | Error::TieInDirection { .. } => Failure::Degenerate(e.into()),
        Error::InvalidArgument(_) | Error::DimensionMismatch { .. } | Error::LengthMismatch(..) => {
            Failure::Config(e.into())
        }
        _ => Failure::Run(e.into()),
    }
}

trait OrConfig<T> {
    fn or_config(self) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> OrConfig<T> for Result<T, E> {
    fn or_config(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Config(e.into()))
    }
}

fn io<T>(r: anyhow::Result<T>) -> Result<T, Failure> {
    r.map_err(Failure::Run)
}

fn config_error(msg: String) -> Failure {
    Failure::Config(anyhow!(msg))
}

fn load<C: RunConfig>(path: &Path, seed: Option<u64>, out: &Path) -> Result<(C, OutputDir), Failure> {
    let cfg: C = config::load(path, seed).or_config()?;
    let hash = config_hash(&cfg).or_config()?;
    let dir = io(OutputDir::create(out, hash))?;
    Ok((cfg, dir))
}

fn check_dims(x: &PointCloud, target: &ProjectedTarget, dirs: &DirectionSet) -> Result<(), Failure> {
    if x.dim() != target.dim() || dirs.dim() != target.dim() {
        return Err(config_error(format!(
            "dimension mismatch: cloud {}, target {}, directions {}",
            x.dim(),
            target.dim(),
            dirs.dim()
        )));
    }
    Ok(())
}

fn initial_cloud(init: &Init, n: Option<usize>, dim: usize, seed: u64) -> Result<PointCloud, Failure> {
    if matches!(init, Init::UniformBox { .. }) && n.is_none() {
        return Err(config_error("uniform_box init needs n".into()));
    }
    let x0 = init.build(n.unwrap_or(0), dim, seed).or_config()?;
    if let Some(n) = n {
        if x0.len() != n {
            return Err(config_error(format!("initial cloud has {} particles, config says n = {n}", x0.len())));
        }
    }
    Ok(x0)
}

fn write_cloud(out: &OutputDir, name: &str, convention: &str, x: &PointCloud) -> Result<(), Failure> {
    let header: Vec<String> = (0..x.dim()).map(|a| format!("x{a}")).collect();
    let rows = x.points().map(|p| p.iter().map(|v| fmt_f64(*v)).collect());
    io(out.csv(name, convention, &header, rows, &[]))?;
    Ok(())
}

fn finish<T: Serialize>(out: &OutputDir, summary: &T) -> Result<Value, Failure> {
    let value = serde_json::to_value(summary).map_err(|e| Failure::Run(e.into()))?;
    io(out.json("summary.json", &value))?;
    Ok(value)
}

fn headers(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| (*s).to_owned()).collect()
}

const F_HALF: &str = "f_l_half";

#[derive(Serialize)]
struct DescendSummary<'a> {
    command: &'static str,
    config_hash: &'a str,
    n: usize,
    dim: usize,
    directions: usize,
    step: f64,
    stop_reason: &'static str,
    iterations: usize,
    final_energy: f64,
    final_grad_norm: f64,
    final_min_sep: f64,
    run_min_sep: f64,
    max_lemma_slack: Option<f64>,
    lloyd_deviation: Option<f64>,
    separation: SeparationCheck,
}

pub fn descend(path: &Path, out: &Path, seed: Option<u64>) -> Result<Value, Failure> {
    let (cfg, dir) = load::<config::DescendConfig>(path, seed, out)?;
    let target = cfg.target.build(cfg.seed).or_config()?;
    let dirs = cfg.dirs.build(cfg.seed).or_config()?;
    let x0 = initial_cloud(&cfg.init, cfg.n, cfg.dim, cfg.seed)?;
    check_dims(&x0, &target, &dirs)?;
    let dcfg = DescentConfig {
        step_multiple: cfg.step_multiple,
        max_iters: cfg.max_iters,
        grad_tol: cfg.grad_tol,
        seed: cfg.seed,
        init: cfg.init.clone(),
    };
    dcfg.validate().or_config()?;
    x0.check_off_diagonal().map_err(|e| Failure::Degenerate(e.into()))?;
    // collisions later in the run are ordinary failures
    let (x, trace) = run_descent(&x0, &target, &dirs, &dcfg).map_err(|e| Failure::Run(e.into()))?;

    let rows = trace.rows.iter().map(|r| {
        vec![
            r.k.to_string(),
            fmt_f64(r.energy),
            fmt_f64(r.grad_norm),
            fmt_f64(r.min_sep),
            fmt_opt(r.lemma_slack),
        ]
    });
    let trailer = [format!("stop_reason={}", trace.stop_reason.as_str())];
    io(dir.csv(
        "trace.csv",
        F_HALF,
        &headers(&["k", "energy", "grad_norm", "min_sep", "lemma_slack"]),
        rows,
        &trailer,
    ))?;
    write_cloud(&dir, "final_cloud.csv", F_HALF, &x)?;

    let last = trace.last();
    finish(
        &dir,
        &DescendSummary {
            command: "descend",
            config_hash: dir.hash(),
            n: x.len(),
            dim: x.dim(),
            directions: dirs.len(),
            step: trace.step,
            stop_reason: trace.stop_reason.as_str(),
            iterations: last.k,
            final_energy: last.energy,
            final_grad_norm: last.grad_norm,
            final_min_sep: last.min_sep,
            run_min_sep: trace.rows.iter().map(|r| r.min_sep).fold(f64::INFINITY, f64::min),
            max_lemma_slack: trace.rows.iter().filter_map(|r| r.lemma_slack).reduce(f64::max),
            lloyd_deviation: trace.lloyd_deviation,
            separation: check_separation_bound(&x, &target),
        },
    )
}

#[derive(Serialize)]
struct PerturbSummary<'a> {
    command: &'static str,
    config_hash: &'a str,
    mode: PerturbModeSpec,
    convention: &'static str,
    target_kind: &'a str,
    n: usize,
    directions: usize,
    value_at_zero: Option<f64>,
    local_max: Option<bool>,
    checks: Vec<LocalMaxCheck>,
    envelope_c: Option<f64>,
    envelope_radius: Option<f64>,
    slope_jump: Option<f64>,
    resolution: Option<f64>,
    jump_below_resolution: Option<bool>,
}

fn grid_has(ts: &[f64], t: f64) -> bool {
    ts.iter().any(|s| (s - t).abs() <= 1e-12)
}

pub fn perturb(path: &Path, out: &Path, seed: Option<u64>) -> Result<Value, Failure> {
    let (cfg, dir) = load::<config::PerturbConfig>(path, seed, out)?;
    let target = cfg.target.build(cfg.seed).or_config()?;
    let dirs = cfg.dirs.build(cfg.seed).or_config()?;
    let x = cfg.cloud.build(&dirs, cfg.seed).or_config()?;
    check_dims(&x, &target, &dirs)?;
    let ts = cfg.grid.build().or_config()?;
    if !ts.contains(&0.0) {
        return Err(config_error("perturbation grid must contain t = 0".into()));
    }
    let field = || -> Result<Vec<Vec<f64>>, Failure> {
        let spec = cfg.field.clone().unwrap_or(FieldSpec::Alternating { range: None });
        spec.build(&cfg.cloud, &x).or_config()
    };
    let check_deltas = || -> Result<(), Failure> {
        match cfg.deltas.iter().find(|&&d| !(grid_has(&ts, d) && grid_has(&ts, -d))) {
            Some(d) => Err(config_error(format!("grid does not contain ±{d}"))),
            None => Ok(()),
        }
    };

    let mut summary = PerturbSummary {
        command: "perturb",
        config_hash: dir.hash(),
        mode: cfg.mode,
        convention: "",
        target_kind: target.kind_name(),
        n: x.len(),
        directions: dirs.len(),
        value_at_zero: None,
        local_max: None,
        checks: Vec::new(),
        envelope_c: None,
        envelope_radius: None,
        slope_jump: None,
        resolution: None,
        jump_below_resolution: None,
    };
    let curve: PerturbationCurve = match cfg.mode {
        PerturbModeSpec::VectorField | PerturbModeSpec::SplitTranslation => {
            check_deltas()?;
            let curve = if cfg.mode == PerturbModeSpec::VectorField {
                perturb_vector_field(&x, &field()?, &ts, &target, &dirs).map_err(classify)?
            } else {
                let curve = perturb_split_translation(&x, &cfg.n_hat, &ts, &target, &dirs).map_err(classify)?;
                summary.envelope_c = Some(cfg.envelope_c);
                summary.envelope_radius = envelope_radius(&curve, cfg.envelope_c);
                curve
            };
            let checks = local_max_at_zero(&curve, &cfg.deltas).map_err(classify)?;
            summary.local_max = Some(checks.iter().all(|c| c.holds));
            summary.checks = checks;
            curve
        }
        PerturbModeSpec::Kink => {
            let scan = kink_scan(&x, &field()?, &target, &dirs, &ts).map_err(classify)?;
            summary.slope_jump = Some(scan.slope_jump);
            summary.resolution = Some(scan.resolution);
            summary.jump_below_resolution = Some(scan.slope_jump.abs() <= scan.resolution);
            scan.curve
        }
    };
    summary.convention = curve.convention.as_str();
    summary.value_at_zero = curve.value_at(0.0);

    let rows = curve.ts.iter().zip(&curve.values).map(|(t, v)| vec![fmt_f64(*t), fmt_f64(*v)]);
    io(dir.csv("curve.csv", curve.convention.as_str(), &headers(&["t", "value"]), rows, &[]))?;
    finish(&dir, &summary)
}

#[derive(Serialize)]
struct CriticalitySummary<'a> {
    command: &'static str,
    config_hash: &'a str,
    n: usize,
    directions: usize,
    energy: f64,
    grad_norm: f64,
    max_residual: f64,
    mean_residual: f64,
    tol: f64,
    critical_at_tol: bool,
}

/// Residual norms `‖N ∇_i F‖`, one per particle.
pub fn criticality(path: &Path, out: &Path, seed: Option<u64>) -> Result<Value, Failure> {
    let (cfg, dir) = load::<config::CriticalityConfig>(path, seed, out)?;
    let target = cfg.target.build(cfg.seed).or_config()?;
    let dirs = cfg.dirs.build(cfg.seed).or_config()?;
    let x = cfg.cloud.build(&dirs, cfg.seed).or_config()?;
    check_dims(&x, &target, &dirs)?;
    if !(cfg.tol >= 0.0) {
        return Err(config_error("tol must be nonnegative".into()));
    }
    let report = grad_p2(&x, &target, &dirs).map_err(classify)?;
    let norms = report.residual_norms().unwrap_or_default();
    let max = norms.iter().copied().fold(0.0, f64::max);
    let mean = norms.iter().sum::<f64>() / norms.len() as f64;

    let rows = norms.iter().enumerate().map(|(i, r)| vec![i.to_string(), fmt_f64(*r)]);
    io(dir.csv("residuals.csv", F_HALF, &headers(&["i", "residual_norm"]), rows, &[]))?;
    for (i, r) in norms.iter().enumerate() {
        println!("{i},{}", fmt_f64(*r));
    }
    finish(
        &dir,
        &CriticalitySummary {
            command: "criticality",
            config_hash: dir.hash(),
            n: x.len(),
            directions: dirs.len(),
            energy: report.energy,
            grad_norm: report.grad_norm,
            max_residual: max,
            mean_residual: mean,
            tol: cfg.tol,
            critical_at_tol: max <= cfg.tol,
        },
    )
}

#[derive(Serialize)]
struct SweepSummary<'a> {
    command: &'static str,
    config_hash: &'a str,
    n: usize,
    directions: usize,
    multiples: &'a [f64],
    stop_reasons: Vec<&'static str>,
    final_energies: Vec<Option<f64>>,
}

pub fn sweep(path: &Path, out: &Path, seed: Option<u64>) -> Result<Value, Failure> {
    let (cfg, dir) = load::<config::SweepConfig>(path, seed, out)?;
    let target = cfg.target.build(cfg.seed).or_config()?;
    let dirs = cfg.dirs.build(cfg.seed).or_config()?;
    let x0 = initial_cloud(&cfg.init, cfg.n, cfg.dim, cfg.seed)?;
    check_dims(&x0, &target, &dirs)?;
    if cfg.multiples.is_empty() || cfg.iters == 0 {
        return Err(config_error("sweep needs at least one multiple and iters >= 1".into()));
    }
    x0.check_off_diagonal().map_err(|e| Failure::Degenerate(e.into()))?;
    let table = step_size_sweep(&x0, &target, &dirs, &cfg.multiples, cfg.iters).map_err(classify)?;

    let mut header = vec!["k".to_owned()];
    header.extend(cfg.multiples.iter().map(|m| format!("lambda_over_n={}", fmt_f64(*m))));
    let rows = (0..table.iterations()).map(|k| {
        let mut row = vec![k.to_string()];
        row.extend(table.energies.iter().map(|col| fmt_opt(col[k])));
        row
    });
    let reasons: Vec<&'static str> = table.stop_reasons.iter().map(|r| r.as_str()).collect();
    let trailer = [format!("stop_reasons={}", reasons.join(";"))];
    io(dir.csv("sweep.csv", F_HALF, &header, rows, &trailer))?;
    finish(
        &dir,
        &SweepSummary {
            command: "sweep",
            config_hash: dir.hash(),
            n: x0.len(),
            directions: dirs.len(),
            multiples: &cfg.multiples,
            stop_reasons: reasons,
            final_energies: table.energies.iter().map(|col| col.iter().rev().find_map(|v| *v)).collect(),
        },
    )
}

#[derive(Serialize)]
struct CellsSummary<'a> {
    command: &'static str,
    config_hash: &'a str,
    n: usize,
    directions: usize,
    convention: &'static str,
    cell: swflow_core::landscape::CellDescriptor,
}

/// The quadratic piece of `F_L` around the configured cloud.
pub fn cells(path: &Path, out: &Path, seed: Option<u64>) -> Result<Value, Failure> {
    let (cfg, dir) = load::<config::CellsConfig>(path, seed, out)?;
    let target = cfg.target.build(cfg.seed).or_config()?;
    let dirs = cfg.dirs.build(cfg.seed).or_config()?;
    let x = cfg.cloud.build(&dirs, cfg.seed).or_config()?;
    check_dims(&x, &target, &dirs)?;
    let cell = analyze_cell(&x, &target, &dirs).map_err(classify)?;

    let mut header = vec!["i".to_owned()];
    header.extend((0..x.dim()).map(|a| format!("c{a}")));
    let rows = cell.linear_terms.iter().enumerate().map(|(i, c)| {
        let mut row = vec![i.to_string()];
        row.extend(c.iter().map(|v| fmt_f64(*v)));
        row
    });
    io(dir.csv("linear_terms.csv", F_HALF, &header, rows, &[]))?;
    finish(
        &dir,
        &CellsSummary {
            command: "cells",
            config_hash: dir.hash(),
            n: x.len(),
            directions: dirs.len(),
            convention: Convention::HalfEstimator.as_str(),
            cell,
        },
    )
}
