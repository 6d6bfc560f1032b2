//! Fixed-step gradient descent on `F` with per-iteration monitoring.
//!
//! The step is `λ = step_multiple · N`. For `λ ∈ (0, 2Nd)` each step must satisfy
//! `F(X^{k+1}) - F(X^k) ≤ -λ(1 - λ/(2Nd))‖∇F(X^k)‖²`; the trace records the slack of
//! that inequality so callers can assert it.

use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::directions::DirectionSet;
use crate::special::sphere_mean_abs_coordinate;
use crate::swgrad::{PointCloud, SlicedEnergy};
use crate::targets::ProjectedTarget;
use crate::{invalid, Result};

/// Energy growth factor (relative to the initial energy) that flags divergence.
pub const DIVERGENCE_FACTOR: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Init {
    UniformBox { lo: f64, hi: f64 },
    File { path: PathBuf },
    Explicit { points: Vec<Vec<f64>> },
}

impl Init {
    /// Builds `X⁰`; `uniform_box` draws from the given seed.
    pub fn build(&self, n: usize, dim: usize, seed: u64) -> Result<PointCloud> {
        match self {
            Init::UniformBox { lo, hi } => uniform_box(n, dim, *lo, *hi, seed),
            Init::File { path } => crate::io::read_cloud_csv(path),
            Init::Explicit { points } => PointCloud::from_points(points),
        }
    }
}

/// `N` points uniform in `[lo, hi]^d`.
pub fn uniform_box(n: usize, dim: usize, lo: f64, hi: f64, seed: u64) -> Result<PointCloud> {
    if n == 0 || dim == 0 {
        return Err(invalid("uniform box needs N >= 1 and d >= 1"));
    }
    if !(lo < hi && lo.is_finite() && hi.is_finite()) {
        return Err(invalid("uniform box needs finite lo < hi"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coords = (0..n * dim).map(|_| rng.random_range(lo..hi)).collect();
    PointCloud::new(dim, coords)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DescentConfig {
    /// `λ / N`.
    pub step_multiple: f64,
    pub max_iters: usize,
    /// Stop when `‖∇F‖ ≤ grad_tol`; defaults to `1e-8 · N`.
    #[serde(default)]
    pub grad_tol: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    pub init: Init,
}

impl DescentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_multiple > 0.0 && self.step_multiple.is_finite()) {
            return Err(invalid("step_multiple must be positive"));
        }
        if self.max_iters == 0 {
            return Err(invalid("max_iters must be >= 1"));
        }
        if let Some(tol) = self.grad_tol {
            if !(tol >= 0.0) {
                return Err(invalid("grad_tol must be nonnegative"));
            }
        }
        Ok(())
    }

    pub fn step(&self, n: usize) -> f64 {
        self.step_multiple * n as f64
    }

    pub fn tolerance(&self, n: usize) -> f64 {
        self.grad_tol.unwrap_or(1e-8 * n as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Converged,
    MaxIters,
    Diverged,
}

impl StopReason {
    pub fn as_str(self) -> &'static str {
        match self {
            StopReason::Converged => "converged",
            StopReason::MaxIters => "max_iters",
            StopReason::Diverged => "diverged",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub k: usize,
    pub energy: f64,
    pub grad_norm: f64,
    pub min_sep: f64,
    /// `F(X^{k+1}) - F(X^k) + λ(1 - λ/(2Nd))‖∇F(X^k)‖²`; absent on the final row.
    pub lemma_slack: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescentTrace {
    pub rows: Vec<TraceRow>,
    pub stop_reason: StopReason,
    pub step: f64,
    /// Largest `|X^{k+1}_i - d Σ_l w_l b θ_l|` over the run when `λ = Nd`.
    pub lloyd_deviation: Option<f64>,
}

impl DescentTrace {
    pub fn last(&self) -> &TraceRow {
        self.rows.last().expect("trace has at least one row")
    }

    pub fn energies(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.energy).collect()
    }
}

/// Runs `X^{k+1} = X^k - λ ∇F(X^k)` from `x0` until convergence, divergence or `max_iters` steps.
pub fn run_descent(
    x0: &PointCloud,
    target: &ProjectedTarget,
    dirs: &DirectionSet,
    cfg: &DescentConfig,
) -> Result<(PointCloud, DescentTrace)> {
    cfg.validate()?;
    let model = SlicedEnergy::new(target, dirs, x0.len())?;
    run_with_model(x0, &model, cfg)
}

pub(crate) fn run_with_model(
    x0: &PointCloud,
    model: &SlicedEnergy,
    cfg: &DescentConfig,
) -> Result<(PointCloud, DescentTrace)> {
    let n = x0.len();
    let d = x0.dim();
    let nd = (n * d) as f64;
    let lambda = cfg.step(n);
    let tol = cfg.tolerance(n);
    let decrease = lambda * (1.0 - lambda / (2.0 * nd));
    let is_lloyd = (lambda - nd).abs() <= 1e-12 * nd;

    let mut x = x0.clone();
    let mut report = model.grad_p2(&x)?;
    let initial = report.energy;
    let mut rows = Vec::with_capacity(cfg.max_iters + 1);
    let mut lloyd_deviation: Option<f64> = None;

    let stop_reason = loop {
        let k = rows.len();
        rows.push(TraceRow {
            k,
            energy: report.energy,
            grad_norm: report.grad_norm,
            min_sep: x.min_separation(),
            lemma_slack: None,
        });
        if report.energy > DIVERGENCE_FACTOR * initial {
            break StopReason::Diverged;
        }
        if report.grad_norm <= tol {
            break StopReason::Converged;
        }
        if k == cfg.max_iters {
            break StopReason::MaxIters;
        }

        let mut coords = x.coords().to_vec();
        for (i, g) in report.grads.iter().enumerate() {
            for a in 0..d {
                coords[i * d + a] -= lambda * g[a];
            }
        }
        let next = PointCloud::new(d, coords)?;
        if is_lloyd {
            if let Some(pull) = &report.pull {
                let dev = next
                    .points()
                    .zip(pull)
                    .flat_map(|(p, q)| p.iter().zip(q).map(|(a, b)| (a - d as f64 * b).abs()))
                    .fold(0.0, f64::max);
                lloyd_deviation = Some(lloyd_deviation.map_or(dev, |m| m.max(dev)));
            }
        }
        let next_report = model.grad_p2(&next)?;
        let prev_sq = report.grad_norm * report.grad_norm;
        rows[k].lemma_slack = Some(next_report.energy - report.energy + decrease * prev_sq);
        x = next;
        report = next_report;
    };

    Ok((
        x,
        DescentTrace {
            rows,
            stop_reason,
            step: lambda,
            lloyd_deviation,
        },
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparationCheck {
    /// `d C(d) / (N β)` with `C(d) = E|θ₁|`; absent when the target has no density bound.
    pub bound: Option<f64>,
    pub min_separation: f64,
    pub satisfied: Option<bool>,
}

pub fn separation_bound(dim: usize, n: usize, beta: f64) -> f64 {
    dim as f64 * sphere_mean_abs_coordinate(dim) / (n as f64 * beta)
}

pub fn check_separation_bound(x: &PointCloud, target: &ProjectedTarget) -> SeparationCheck {
    let min_separation = x.min_separation();
    let bound = target
        .density_bound()
        .map(|beta| separation_bound(x.dim(), x.len(), beta));
    SeparationCheck {
        bound,
        min_separation,
        satisfied: bound.map(|b| min_separation >= b - 1e-9),
    }
}

/// Energy-vs-iteration columns, one per step multiple. Runs stopped early leave `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub multiples: Vec<f64>,
    pub energies: Vec<Vec<Option<f64>>>,
    pub stop_reasons: Vec<StopReason>,
}

impl SweepTable {
    pub fn iterations(&self) -> usize {
        self.energies.first().map_or(0, Vec::len)
    }
}

/// Runs `iters` descent steps from the same `x0` for every `λ = multiple · N`.
///
/// Gradient tolerance is zero, so only divergence (or an exactly critical iterate) ends a
/// column early.
pub fn step_size_sweep(
    x0: &PointCloud,
    target: &ProjectedTarget,
    dirs: &DirectionSet,
    multiples: &[f64],
    iters: usize,
) -> Result<SweepTable> {
    let model = SlicedEnergy::new(target, dirs, x0.len())?;
    let runs = multiples
        .par_iter()
        .map(|&m| {
            let cfg = DescentConfig {
                step_multiple: m,
                max_iters: iters.max(1),
                grad_tol: Some(0.0),
                seed: 0,
                init: Init::Explicit { points: Vec::new() },
            };
            cfg.validate()?;
            let (_, trace) = run_with_model(x0, &model, &cfg)?;
            let mut column: Vec<Option<f64>> = trace.rows.iter().map(|r| Some(r.energy)).collect();
            column.resize(iters + 1, None);
            column.truncate(iters + 1);
            Ok((column, trace.stop_reason))
        })
        .collect::<Result<Vec<_>>>()?;
    let (energies, stop_reasons) = runs.into_iter().unzip();
    Ok(SweepTable {
        multiples: multiples.to_vec(),
        energies,
        stop_reasons,
    })
}
