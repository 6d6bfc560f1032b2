//! Probes of the energy landscape around candidate critical points.
//!
//! Curves from [`perturb_vector_field`] and [`perturb_split_translation`] report
//! `SW₂² = 2F`; [`kink_scan`] reports the fixed-direction estimator `F_L` itself.
//!
//! For fixed directions and a fixed family of sorting permutations `σ`, the estimator is
//! a quadratic `F_L = q_σ + C₀`:
//!
//! ```text
//! q_σ(X) = (1/(2N)) Σ_l w_l Σ_k (⟨X_{σ_l(k)}, θ_l⟩ - b_{l,k})²
//! C₀     = ½ Σ_l w_l (1/N) Σ_k var_{l,k}
//! ```
//!
//! with per-particle Hessian block `(1/N) Σ_l w_l θ_l θ_lᵀ`. [`analyze_cell`] returns
//! these pieces.

use std::ops::Range;

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::directions::{DirectionOrigin, DirectionSet};
use crate::ot1d::sort_projection;
use crate::special::{normal_pdf, normal_quantile};
use crate::sum::Neumaier;
use crate::swgrad::{PointCloud, SlicedEnergy};
use crate::targets::ProjectedTarget;
use crate::{invalid, Error, Result};

/// `N` equispaced points on `[-4/π, 4/π] × {0}`.
pub fn segment_critical_cloud(n: usize) -> Result<PointCloud> {
    if n < 2 {
        return Err(invalid("segment cloud needs N >= 2"));
    }
    let a = 4.0 / std::f64::consts::PI;
    let coords = (0..n)
        .flat_map(|i| [-a + 2.0 * a * i as f64 / (n - 1) as f64, 0.0])
        .collect();
    PointCloud::new(2, coords)
}

/// `α_d = d Σ_l w_l |⟨θ_l, e₁⟩|`.
pub fn alpha(dirs: &DirectionSet) -> f64 {
    let mut acc = Neumaier::default();
    for (theta, w) in dirs.iter() {
        acc.add(w * theta[0].abs());
    }
    dirs.dim() as f64 * acc.value()
}

/// Where the particles of the discretized Gaussian line sit along `e₁`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinePlacement {
    /// `α Φ⁻¹((i - ½)/N)`.
    QuantileMidpoint,
    /// `α` times the mean of the `i`-th standard-normal cell; a critical point of the
    /// discretized energy.
    CellMean,
}

/// `N` points on the `e₁` axis approximating `N(0, α_d²)`.
pub fn gaussian_line_critical_cloud(
    n: usize,
    dim: usize,
    dirs: &DirectionSet,
    placement: LinePlacement,
) -> Result<PointCloud> {
    if n == 0 || dim < 2 {
        return Err(invalid("gaussian line needs N >= 1 and d >= 2"));
    }
    if dirs.dim() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: dirs.dim(),
        });
    }
    let a = alpha(dirs);
    let nf = n as f64;
    let knot = |k: usize| match k {
        0 => f64::NEG_INFINITY,
        k if k == n => f64::INFINITY,
        k => normal_quantile(k as f64 / nf),
    };
    let mut coords = vec![0.0; n * dim];
    for i in 0..n {
        coords[i * dim] = match placement {
            LinePlacement::QuantileMidpoint => a * normal_quantile((i as f64 + 0.5) / nf),
            LinePlacement::CellMean => a * nf * (normal_pdf(knot(i)) - normal_pdf(knot(i + 1))),
        };
    }
    PointCloud::new(dim, coords)
}

/// `ξ_i = (-1)^i e₂` on `range` (all particles when `None`), zero elsewhere.
pub fn alternating_field(n: usize, dim: usize, range: Option<Range<usize>>) -> Result<Vec<Vec<f64>>> {
    if dim < 2 {
        return Err(invalid("alternating field needs d >= 2"));
    }
    let range = range.unwrap_or(0..n);
    if range.end > n {
        return Err(invalid("perturbed range exceeds the cloud"));
    }
    Ok((0..n)
        .map(|i| {
            let mut v = vec![0.0; dim];
            if range.contains(&i) {
                v[1] = if (i - range.start) % 2 == 0 { 1.0 } else { -1.0 };
            }
            v
        })
        .collect())
}

/// A segment of `segment_points` particles on `[-1, 1] × {0}` flanked by two disks of
/// `blob_points` particles each (sunflower layout), centred at `(±center, 0)`.
///
/// The segment particles come first, so `0..segment_points` is the perturbed range.
pub fn dumbbell_cloud(segment_points: usize, blob_points: usize, center: f64, radius: f64) -> Result<PointCloud> {
    if segment_points < 2 || blob_points == 0 {
        return Err(invalid("dumbbell needs >= 2 segment points and nonempty blobs"));
    }
    if !(radius > 0.0 && center - radius > 1.0) {
        return Err(invalid("dumbbell blobs must not touch the segment"));
    }
    let mut coords = Vec::with_capacity(2 * (segment_points + 2 * blob_points));
    for i in 0..segment_points {
        coords.push(-1.0 + 2.0 * i as f64 / (segment_points - 1) as f64);
        coords.push(0.0);
    }
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    for side in [-1.0, 1.0] {
        for k in 0..blob_points {
            let r = radius * ((k as f64 + 0.5) / blob_points as f64).sqrt();
            let (s, c) = (golden * k as f64).sin_cos();
            coords.push(side * center + r * c);
            coords.push(r * s);
        }
    }
    PointCloud::new(2, coords)
}

/// Symmetric uniform grid of `points` values `t_max · (2j - (points-1)) / (points-1)`.
pub fn uniform_grid(t_max: f64, points: usize) -> Result<Vec<f64>> {
    if points < 2 || !(t_max > 0.0) {
        return Err(invalid("uniform grid needs >= 2 points and t_max > 0"));
    }
    let m = (points - 1) as f64;
    Ok((0..points)
        .map(|j| t_max * (2.0 * j as f64 - m) / m)
        .collect())
}

/// `0` plus `±` log-spaced magnitudes from `t_min` to `t_max`, `per_side` on each side.
pub fn symmetric_log_grid(t_min: f64, t_max: f64, per_side: usize) -> Result<Vec<f64>> {
    if per_side < 2 || !(t_min > 0.0 && t_max > t_min) {
        return Err(invalid("log grid needs 0 < t_min < t_max and >= 2 points per side"));
    }
    let ratio = (t_max / t_min).ln() / (per_side - 1) as f64;
    let side: Vec<f64> = (0..per_side)
        .map(|k| {
            if k + 1 == per_side {
                t_max
            } else {
                t_min * (ratio * k as f64).exp()
            }
        })
        .collect();
    let mut grid: Vec<f64> = side.iter().rev().map(|t| -t).collect();
    grid.push(0.0);
    grid.extend(side);
    Ok(grid)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbationMode {
    VectorField,
    SplitTranslation,
    Kink,
}

/// Which quantity a curve holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Convention {
    /// `SW₂² = 2F`.
    Sw2Squared,
    /// `F_L = ½ Σ_l w_l W₂²`.
    HalfEstimator,
}

impl Convention {
    pub fn as_str(self) -> &'static str {
        match self {
            Convention::Sw2Squared => "sw2_squared",
            Convention::HalfEstimator => "f_l_half",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationCurve {
    pub ts: Vec<f64>,
    pub values: Vec<f64>,
    pub mode: PerturbationMode,
    pub convention: Convention,
    pub target_kind: String,
    pub n: usize,
    pub l: usize,
    pub dirs_origin: DirectionOrigin,
}

impl PerturbationCurve {
    fn zero_index(&self) -> Option<usize> {
        self.ts.iter().position(|t| *t == 0.0)
    }

    /// Value at the grid point equal to `t` (within 1e-12).
    pub fn value_at(&self, t: f64) -> Option<f64> {
        self.ts
            .iter()
            .position(|s| (s - t).abs() <= 1e-12)
            .map(|j| self.values[j])
    }
}

fn check_grid(ts: &[f64]) -> Result<()> {
    if ts.is_empty() || ts.iter().any(|t| !t.is_finite()) {
        return Err(invalid("perturbation grid must be nonempty and finite"));
    }
    if ts.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid("perturbation grid must be strictly increasing"));
    }
    let scale = ts.iter().fold(0.0_f64, |m, t| m.max(t.abs()));
    let m = ts.len();
    if (0..m).any(|j| (ts[j] + ts[m - 1 - j]).abs() > 1e-12 * scale) {
        return Err(invalid("perturbation grid must be symmetric about 0"));
    }
    Ok(())
}

fn curve_meta(
    ts: &[f64],
    values: Vec<f64>,
    mode: PerturbationMode,
    convention: Convention,
    target: &ProjectedTarget,
    n: usize,
    dirs: &DirectionSet,
) -> PerturbationCurve {
    PerturbationCurve {
        ts: ts.to_vec(),
        values,
        mode,
        convention,
        target_kind: target.kind_name().to_owned(),
        n,
        l: dirs.len(),
        dirs_origin: dirs.origin(),
    }
}

fn scan_displacements(
    x: &PointCloud,
    xi: &[Vec<f64>],
    ts: &[f64],
    target: &ProjectedTarget,
    dirs: &DirectionSet,
    scale: f64,
) -> Result<Vec<f64>> {
    check_grid(ts)?;
    let model = SlicedEnergy::new(target, dirs, x.len())?;
    x.displaced(xi, 0.0)?;
    ts.par_iter()
        .map(|&t| Ok(scale * model.energy(&x.displaced(xi, t)?)?))
        .collect()
}

/// `t ↦ SW₂²(X + tξ) = 2F(X + tξ)` on the grid.
pub fn perturb_vector_field(
    x: &PointCloud,
    xi: &[Vec<f64>],
    ts: &[f64],
    target: &ProjectedTarget,
    dirs: &DirectionSet,
) -> Result<PerturbationCurve> {
    let values = scan_displacements(x, xi, ts, target, dirs, 2.0)?;
    Ok(curve_meta(
        ts,
        values,
        PerturbationMode::VectorField,
        Convention::Sw2Squared,
        target,
        x.len(),
        dirs,
    ))
}

/// `t ↦ SW₂²(μ^t)` with `μ^t = ½(τ_{-t n̂} μ_X + τ_{t n̂} μ_X)`, realized as a `2N`-point cloud.
pub fn perturb_split_translation(
    x: &PointCloud,
    n_hat: &[f64],
    ts: &[f64],
    target: &ProjectedTarget,
    dirs: &DirectionSet,
) -> Result<PerturbationCurve> {
    if x.dim() != 2 {
        return Err(invalid("split translation is only defined in d = 2"));
    }
    if n_hat.len() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            got: n_hat.len(),
        });
    }
    let norm = n_hat.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(norm > 0.0 && norm.is_finite()) {
        return Err(invalid("split direction must be nonzero"));
    }
    let u = [n_hat[0] / norm, n_hat[1] / norm];
    check_grid(ts)?;
    let n = x.len();
    let model = SlicedEnergy::new(target, dirs, 2 * n)?;
    let values = ts
        .par_iter()
        .map(|&t| {
            let mut coords = Vec::with_capacity(4 * n);
            for sign in [-1.0, 1.0] {
                for p in x.points() {
                    coords.push(p[0] + sign * t * u[0]);
                    coords.push(p[1] + sign * t * u[1]);
                }
            }
            Ok(2.0 * model.energy(&PointCloud::new(2, coords)?)?)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(curve_meta(
        ts,
        values,
        PerturbationMode::SplitTranslation,
        Convention::Sw2Squared,
        target,
        n,
        dirs,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalMaxCheck {
    pub delta: f64,
    pub left: f64,
    pub center: f64,
    pub right: f64,
    pub holds: bool,
}

/// Checks `value(±δ) < value(0)` for each `δ`; every `±δ` and `0` must lie on the grid.
pub fn local_max_at_zero(curve: &PerturbationCurve, deltas: &[f64]) -> Result<Vec<LocalMaxCheck>> {
    let center = curve
        .value_at(0.0)
        .ok_or_else(|| invalid("grid does not contain t = 0"))?;
    deltas
        .iter()
        .map(|&delta| {
            let missing = || invalid(format!("grid does not contain ±{delta}"));
            let left = curve.value_at(-delta).ok_or_else(missing)?;
            let right = curve.value_at(delta).ok_or_else(missing)?;
            Ok(LocalMaxCheck {
                delta,
                left,
                center,
                right,
                holds: left < center && right < center,
            })
        })
        .collect()
}

/// Largest `δ` on the grid with `value(t) ≤ value(0) - C t²` for every grid `t` in `[-δ, δ]`.
pub fn envelope_radius(curve: &PerturbationCurve, c: f64) -> Option<f64> {
    let z = curve.zero_index()?;
    let v0 = curve.values[z];
    let ok = |j: usize| curve.values[j] <= v0 - c * curve.ts[j] * curve.ts[j];
    let mut radius = None;
    let (mut lo, mut hi) = (z, z);
    while lo > 0 && hi + 1 < curve.ts.len() {
        lo -= 1;
        hi += 1;
        if !(ok(lo) && ok(hi)) {
            break;
        }
        radius = Some(curve.ts[hi].min(-curve.ts[lo]));
    }
    radius
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KinkScan {
    pub curve: PerturbationCurve,
    /// Right slope minus left slope at `t = 0`, by one-sided differences.
    pub slope_jump: f64,
    /// Largest grid step adjacent to `t = 0`.
    pub resolution: f64,
}

/// `t ↦ F_L(X + tξ)` over fixed directions and its slope jump at `t = 0`.
pub fn kink_scan(
    x: &PointCloud,
    xi: &[Vec<f64>],
    target: &ProjectedTarget,
    fixed_dirs: &DirectionSet,
    ts: &[f64],
) -> Result<KinkScan> {
    check_grid(ts)?;
    let z = ts
        .iter()
        .position(|t| *t == 0.0)
        .ok_or_else(|| invalid("kink scan grid must contain t = 0"))?;
    if z == 0 || z + 1 == ts.len() {
        return Err(invalid("kink scan grid needs points on both sides of 0"));
    }
    let values = scan_displacements(x, xi, ts, target, fixed_dirs, 1.0)?;
    let (tl, tr) = (ts[z - 1], ts[z + 1]);
    let right = (values[z + 1] - values[z]) / tr;
    let left = (values[z] - values[z - 1]) / -tl;
    let curve = curve_meta(
        ts,
        values,
        PerturbationMode::Kink,
        Convention::HalfEstimator,
        target,
        x.len(),
        fixed_dirs,
    );
    Ok(KinkScan {
        curve,
        slope_jump: right - left,
        resolution: tr.max(-tl),
    })
}

/// The quadratic piece of `F_L` containing a tie-free cloud.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellDescriptor {
    /// One sorting permutation per direction (`sigma[l][k]` = particle of rank `k`).
    pub sigma: Vec<Vec<usize>>,
    /// `(1/N) Σ_l w_l θ_l θ_lᵀ`, row-major `d×d`.
    pub hessian_block: Vec<f64>,
    pub hessian_eigenvalues: Vec<f64>,
    /// `c_i = (1/N) Σ_l w_l b_{l, rank_l(i)} θ_l`.
    pub linear_terms: Vec<Vec<f64>>,
    /// `(1/(2N)) Σ_l w_l Σ_k b_{l,k}²`.
    pub quadratic_constant: f64,
    pub c0: f64,
    pub fl_value: f64,
    pub q_value: f64,
    pub hessian_psd: bool,
    pub strictly_convex: bool,
}

impl CellDescriptor {
    pub fn dim(&self) -> usize {
        self.linear_terms.first().map_or(0, Vec::len)
    }

    /// `q_σ(Y) = Σ_i (½ Y_iᵀ H Y_i - c_i·Y_i) + const`.
    pub fn q(&self, y: &PointCloud) -> Result<f64> {
        let d = self.dim();
        if y.dim() != d || y.len() != self.linear_terms.len() {
            return Err(Error::LengthMismatch(self.linear_terms.len(), y.len()));
        }
        let mut acc = Neumaier::default();
        for (p, c) in y.points().zip(&self.linear_terms) {
            for a in 0..d {
                let hp: f64 = (0..d).map(|b| self.hessian_block[a * d + b] * p[b]).sum();
                acc.add(0.5 * p[a] * hp - c[a] * p[a]);
            }
        }
        acc.add(self.quadratic_constant);
        Ok(acc.value())
    }

    /// Whether `y` sorts identically to the analyzed cloud on every direction.
    pub fn same_cell(&self, y: &PointCloud, dirs: &DirectionSet) -> bool {
        self.sigma
            .iter()
            .enumerate()
            .all(|(l, s)| sort_projection(&y.project(dirs.direction(l))).perm == *s)
    }
}

pub fn analyze_cell(x: &PointCloud, target: &ProjectedTarget, fixed_dirs: &DirectionSet) -> Result<CellDescriptor> {
    let n = x.len();
    let d = x.dim();
    let model = SlicedEnergy::new(target, fixed_dirs, n)?;
    let fl_value = model.energy(x)?;
    let nf = n as f64;

    let mut sigma = Vec::with_capacity(fixed_dirs.len());
    let mut linear = vec![vec![Neumaier::default(); d]; n];
    let mut qconst = Neumaier::default();
    let mut c0 = Neumaier::default();
    for (l, (theta, w)) in fixed_dirs.iter().enumerate() {
        let proj = x.project(theta);
        let s = sort_projection(&proj);
        if s.perm.windows(2).any(|p| proj[p[0]] == proj[p[1]]) {
            return Err(Error::TieInDirection { direction: l });
        }
        let table = model.table(l);
        for (i, row) in linear.iter_mut().enumerate() {
            let c = w * table.barycenters[s.rank(i)] / nf;
            for a in 0..d {
                row[a].add(c * theta[a]);
            }
        }
        for k in 0..n {
            qconst.add(w * table.barycenters[k] * table.barycenters[k] / (2.0 * nf));
            c0.add(0.5 * w * table.variances[k] / nf);
        }
        sigma.push(s.perm);
    }
    let hessian_block: Vec<f64> = fixed_dirs.second_moment().iter().map(|m| m / nf).collect();
    let eig = SymmetricEigen::new(DMatrix::from_row_slice(d, d, &hessian_block));
    let mut hessian_eigenvalues: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    hessian_eigenvalues.sort_by(f64::total_cmp);
    let top = hessian_eigenvalues.last().copied().unwrap_or(0.0).abs();
    let floor = 1e-12 * top.max(f64::MIN_POSITIVE);
    let smallest = hessian_eigenvalues[0];

    let mut cell = CellDescriptor {
        sigma,
        hessian_block,
        linear_terms: linear
            .into_iter()
            .map(|r| r.iter().map(Neumaier::value).collect())
            .collect(),
        quadratic_constant: qconst.value(),
        c0: c0.value(),
        fl_value,
        q_value: 0.0,
        hessian_psd: smallest >= -floor,
        strictly_convex: smallest > floor,
        hessian_eigenvalues,
    };
    cell.q_value = cell.q(x)?;
    Ok(cell)
}
