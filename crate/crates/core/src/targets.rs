//! Target measures seen through their 1D projections.
//!
//! Every gradient or energy evaluation only needs, for each direction `θ` and particle
//! count `N`, the projected law `ρ_θ` cut into `N` ordered blocks of mass `1/N`
//! (the Power cells `V_{θ,i} = F⁻¹([(i-1)/N, i/N])` when `ρ_θ` has no atoms).
//! [`ProjectedTarget::slice`] builds that decomposition once per direction; the
//! resulting [`Slice`] answers barycenter, moment and `|a - x|^p` integral queries.
//!
//! Cell indices are 0-based in code: cell `i` is the mass interval `[i/N, (i+1)/N]`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::special::{integrate_gl, normal_cdf, normal_pdf, normal_quantile};
use crate::sum::Neumaier;
use crate::{invalid, Error, Result};

/// Standardized truncation of Gaussian tail cells; `φ(12) ≈ 2e-32`.
const GAUSS_TAIL: f64 = 12.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalCloud {
    dim: usize,
    points: Vec<f64>,
    weights: Vec<f64>,
}

impl EmpiricalCloud {
    /// Row-major support points with optional positive weights (normalized to sum one).
    pub fn new(dim: usize, points: Vec<f64>, weights: Option<Vec<f64>>) -> Result<Self> {
        if dim == 0 || points.is_empty() || points.len() % dim != 0 {
            return Err(invalid("support must be a nonempty row-major array of d-vectors"));
        }
        if points.iter().any(|x| !x.is_finite()) {
            return Err(invalid("support points must be finite"));
        }
        let m = points.len() / dim;
        let weights = match weights {
            None => vec![1.0 / m as f64; m],
            Some(w) => {
                if w.len() != m {
                    return Err(Error::LengthMismatch(m, w.len()));
                }
                if w.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
                    return Err(invalid("empirical weights must be positive"));
                }
                let total: f64 = w.iter().sum();
                w.into_iter().map(|x| x / total).collect()
            }
        };
        Ok(Self {
            dim,
            points,
            weights,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn point(&self, j: usize) -> &[f64] {
        &self.points[j * self.dim..(j + 1) * self.dim]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    fn projected(&self, theta: &[f64]) -> Vec<(f64, f64)> {
        (0..self.len())
            .map(|j| (dot(self.point(j), theta), self.weights[j]))
            .collect()
    }
}

/// The target `ρ`, described by what its projections look like.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProjectedTarget {
    /// Planar density `(2π)⁻¹(r² - |x|²)^{-1/2} / r` on the disk of radius `r`; every
    /// projection is uniform on `[-r, r]`.
    SlicedUniformDisk { radius: f64 },
    /// `N(0, σ² I_d)`.
    IsotropicGaussian { dim: usize, std_dev: f64 },
    EmpiricalCloud(EmpiricalCloud),
    /// Uniform measure on the segment `[start, end]`.
    LineSegmentUniform { start: Vec<f64>, end: Vec<f64> },
}

impl ProjectedTarget {
    pub fn sliced_uniform_disk() -> Self {
        Self::SlicedUniformDisk { radius: 1.0 }
    }

    pub fn sliced_uniform_disk_with_radius(radius: f64) -> Result<Self> {
        if !(radius.is_finite() && radius > 0.0) {
            return Err(invalid("disk radius must be positive"));
        }
        Ok(Self::SlicedUniformDisk { radius })
    }

    pub fn standard_gaussian(dim: usize) -> Result<Self> {
        Self::isotropic_gaussian(dim, 1.0)
    }

    pub fn isotropic_gaussian(dim: usize, std_dev: f64) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("gaussian dimension must be positive"));
        }
        if !(std_dev.is_finite() && std_dev > 0.0) {
            return Err(invalid("gaussian standard deviation must be positive"));
        }
        Ok(Self::IsotropicGaussian { dim, std_dev })
    }

    pub fn empirical(dim: usize, points: Vec<f64>, weights: Option<Vec<f64>>) -> Result<Self> {
        Ok(Self::EmpiricalCloud(EmpiricalCloud::new(dim, points, weights)?))
    }

    pub fn line_segment(start: Vec<f64>, end: Vec<f64>) -> Result<Self> {
        if start.len() != end.len() {
            return Err(Error::DimensionMismatch {
                expected: start.len(),
                got: end.len(),
            });
        }
        if start.is_empty() || start.iter().chain(&end).any(|x| !x.is_finite()) {
            return Err(invalid("segment endpoints must be finite vectors"));
        }
        Ok(Self::LineSegmentUniform { start, end })
    }

    /// `M` points uniform on the planar annulus `r_in ≤ |x| ≤ r_out`, by rejection from
    /// the bounding square.
    pub fn shell_sample(r_in: f64, r_out: f64, count: usize, seed: u64) -> Result<Self> {
        if !(r_in >= 0.0 && r_out > r_in && r_out.is_finite()) {
            return Err(invalid("shell radii must satisfy 0 <= r_in < r_out"));
        }
        if count == 0 {
            return Err(invalid("shell sample size must be positive"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut points = Vec::with_capacity(2 * count);
        while points.len() < 2 * count {
            let x = rng.random_range(-r_out..r_out);
            let y = rng.random_range(-r_out..r_out);
            let r2 = x * x + y * y;
            if r2 >= r_in * r_in && r2 <= r_out * r_out {
                points.push(x);
                points.push(y);
            }
        }
        Self::empirical(2, points, None)
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::SlicedUniformDisk { .. } => 2,
            Self::IsotropicGaussian { dim, .. } => *dim,
            Self::EmpiricalCloud(c) => c.dim(),
            Self::LineSegmentUniform { start, .. } => start.len(),
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Self::SlicedUniformDisk { .. } => "sliced_uniform_disk",
            Self::IsotropicGaussian { .. } => "isotropic_gaussian",
            Self::EmpiricalCloud(_) => "empirical_cloud",
            Self::LineSegmentUniform { .. } => "line_segment_uniform",
        }
    }

    /// Uniform upper bound `β` on the density of every projection, when one exists.
    pub fn density_bound(&self) -> Option<f64> {
        match self {
            Self::SlicedUniformDisk { radius } => Some(0.5 / radius),
            Self::IsotropicGaussian { std_dev, .. } => {
                Some(1.0 / (std_dev * (2.0 * std::f64::consts::PI).sqrt()))
            }
            Self::EmpiricalCloud(_) | Self::LineSegmentUniform { .. } => None,
        }
    }

    fn check_theta(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: theta.len(),
            });
        }
        Ok(())
    }

    fn segment_bounds(start: &[f64], end: &[f64], theta: &[f64]) -> (f64, f64) {
        let a = dot(start, theta);
        let b = dot(end, theta);
        (a.min(b), a.max(b))
    }

    /// `F⁻¹_{ρ_θ}(t) = inf{s : F_{ρ_θ}(s) ≥ t}`.
    pub fn quantile(&self, theta: &[f64], t: f64) -> Result<f64> {
        self.check_theta(theta)?;
        if !(t > 0.0 && t < 1.0) {
            return Err(invalid(format!("quantile level must lie in (0, 1), got {t}")));
        }
        Ok(match self {
            Self::SlicedUniformDisk { radius } => radius * (2.0 * t - 1.0),
            Self::IsotropicGaussian { std_dev, .. } => std_dev * normal_quantile(t),
            Self::LineSegmentUniform { start, end } => {
                let (lo, hi) = Self::segment_bounds(start, end, theta);
                lo + t * (hi - lo)
            }
            Self::EmpiricalCloud(cloud) => {
                let atoms = merged_sorted(cloud.projected(theta));
                let mut cum = Neumaier::default();
                let mut found = atoms[atoms.len() - 1].0;
                for (pos, w) in &atoms {
                    cum.add(*w);
                    if cum.value() >= t {
                        found = *pos;
                        break;
                    }
                }
                found
            }
        })
    }

    /// CDF of `ρ_θ` at `s`.
    pub fn cdf(&self, theta: &[f64], s: f64) -> Result<f64> {
        self.check_theta(theta)?;
        Ok(match self {
            Self::SlicedUniformDisk { radius } => ((s + radius) / (2.0 * radius)).clamp(0.0, 1.0),
            Self::IsotropicGaussian { std_dev, .. } => normal_cdf(s / std_dev),
            Self::LineSegmentUniform { start, end } => {
                let (lo, hi) = Self::segment_bounds(start, end, theta);
                if hi > lo {
                    ((s - lo) / (hi - lo)).clamp(0.0, 1.0)
                } else if s >= lo {
                    1.0
                } else {
                    0.0
                }
            }
            Self::EmpiricalCloud(cloud) => {
                let mut cum = Neumaier::default();
                for (pos, w) in cloud.projected(theta) {
                    if pos <= s {
                        cum.add(w);
                    }
                }
                cum.value().min(1.0)
            }
        })
    }

    /// Mean of `ρ_θ`.
    pub fn projected_mean(&self, theta: &[f64]) -> Result<f64> {
        self.check_theta(theta)?;
        Ok(match self {
            Self::SlicedUniformDisk { .. } | Self::IsotropicGaussian { .. } => 0.0,
            Self::LineSegmentUniform { start, end } => 0.5 * (dot(start, theta) + dot(end, theta)),
            Self::EmpiricalCloud(cloud) => {
                let mut acc = Neumaier::default();
                for (pos, w) in cloud.projected(theta) {
                    acc.add(pos * w);
                }
                acc.value()
            }
        })
    }

    /// Decomposes `ρ_θ` into `N` ordered blocks of mass `1/N`.
    pub fn slice(&self, theta: &[f64], n: usize) -> Result<Slice> {
        self.check_theta(theta)?;
        if n == 0 {
            return Err(invalid("number of cells must be positive"));
        }
        let law = match self {
            Self::SlicedUniformDisk { radius } => SliceLaw::Uniform {
                lo: -radius,
                hi: *radius,
            },
            Self::IsotropicGaussian { std_dev, .. } => SliceLaw::Gaussian {
                std_dev: *std_dev,
                knots: gaussian_knots(n),
            },
            Self::LineSegmentUniform { start, end } => {
                let (lo, hi) = Self::segment_bounds(start, end, theta);
                if hi > lo {
                    SliceLaw::Uniform { lo, hi }
                } else {
                    SliceLaw::Dirac(lo)
                }
            }
            Self::EmpiricalCloud(cloud) => {
                SliceLaw::Blocks(block_decomposition(cloud.projected(theta), n))
            }
        };
        Ok(Slice { n, law })
    }

    /// Barycenters and second moments of the `N` cells of `ρ_θ`.
    pub fn cell_table(&self, theta: &[f64], n: usize) -> Result<CellTable> {
        Ok(self.slice(theta, n)?.table())
    }

    /// `∫_{V_{θ,i}} sgn(a - x)|a - x|^{p-1} dρ_θ(x)` for cell `i` (0-based), `p ≥ 2`.
    pub fn cell_integral_p(&self, theta: &[f64], n: usize, cell: usize, a: f64, p: f64) -> Result<f64> {
        let slice = self.slice(theta, n)?;
        slice.integral_p(cell, a, p)
    }
}

/// Per-cell barycenters `b_i = N∫_{V_i} x dρ_θ` and second moments `m_i = N∫_{V_i} x² dρ_θ`.
///
/// `variances[i] = m_i - b_i²` is stored separately, computed without cancellation where
/// the law allows it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellTable {
    pub barycenters: Vec<f64>,
    pub second_moments: Vec<f64>,
    pub variances: Vec<f64>,
}

impl CellTable {
    pub fn len(&self) -> usize {
        self.barycenters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.barycenters.is_empty()
    }

    pub fn cell_mass(&self) -> f64 {
        1.0 / self.len() as f64
    }
}

#[derive(Debug, Clone)]
enum SliceLaw {
    Uniform { lo: f64, hi: f64 },
    Dirac(f64),
    /// Standardized knots `Φ⁻¹(k/N)`, `k = 0..=N`.
    Gaussian { std_dev: f64, knots: Vec<f64> },
    /// Per cell: `(position, fraction of the cell's mass)`, fractions summing to one.
    Blocks(Vec<Vec<(f64, f64)>>),
}

/// One projected target cut into `N` cells.
#[derive(Debug, Clone)]
pub struct Slice {
    n: usize,
    law: SliceLaw,
}

impl Slice {
    pub fn cells(&self) -> usize {
        self.n
    }

    /// Mass of each cell; `1/N` up to rounding.
    pub fn cell_masses(&self) -> Vec<f64> {
        let nf = self.n as f64;
        match &self.law {
            SliceLaw::Blocks(blocks) => blocks
                .iter()
                .map(|b| b.iter().map(|(_, f)| f).sum::<f64>() / nf)
                .collect(),
            _ => vec![1.0 / nf; self.n],
        }
    }

    pub fn table(&self) -> CellTable {
        let n = self.n;
        let nf = n as f64;
        let mut b = Vec::with_capacity(n);
        let mut m = Vec::with_capacity(n);
        let mut v = Vec::with_capacity(n);
        match &self.law {
            SliceLaw::Uniform { lo, hi } => {
                let width = (hi - lo) / nf;
                for i in 0..n {
                    let (c0, c1) = self.uniform_cell(*lo, *hi, i);
                    let mid = 0.5 * (c0 + c1);
                    let var = width * width / 12.0;
                    b.push(mid);
                    v.push(var);
                    m.push(mid * mid + var);
                }
            }
            SliceLaw::Dirac(c) => {
                b.resize(n, *c);
                m.resize(n, c * c);
                v.resize(n, 0.0);
            }
            SliceLaw::Gaussian { std_dev, knots } => {
                for i in 0..n {
                    let (z0, z1) = (knots[i], knots[i + 1]);
                    let (p0, p1) = (normal_pdf(z0), normal_pdf(z1));
                    let zp0 = if z0.is_finite() { z0 * p0 } else { 0.0 };
                    let zp1 = if z1.is_finite() { z1 * p1 } else { 0.0 };
                    let mean = nf * (p0 - p1);
                    let second = nf * (zp0 - zp1) + 1.0;
                    let var = (second - mean * mean).max(0.0);
                    b.push(std_dev * mean);
                    m.push(std_dev * std_dev * second);
                    v.push(std_dev * std_dev * var);
                }
            }
            SliceLaw::Blocks(blocks) => {
                for block in blocks {
                    let mut mean = Neumaier::default();
                    let mut second = Neumaier::default();
                    for &(pos, frac) in block {
                        mean.add(frac * pos);
                        second.add(frac * pos * pos);
                    }
                    let mean = mean.value();
                    let mut var = Neumaier::default();
                    for &(pos, frac) in block {
                        var.add(frac * (pos - mean) * (pos - mean));
                    }
                    b.push(mean);
                    m.push(second.value());
                    v.push(var.value());
                }
            }
        }
        CellTable {
            barycenters: b,
            second_moments: m,
            variances: v,
        }
    }

    fn uniform_cell(&self, lo: f64, hi: f64, i: usize) -> (f64, f64) {
        let nf = self.n as f64;
        let c0 = lo + (hi - lo) * (i as f64 / nf);
        let c1 = if i + 1 == self.n {
            hi
        } else {
            lo + (hi - lo) * ((i + 1) as f64 / nf)
        };
        (c0, c1)
    }

    fn check_cell(&self, cell: usize, p: f64) -> Result<()> {
        if cell >= self.n {
            return Err(invalid(format!("cell index {cell} out of range for N = {}", self.n)));
        }
        if !(p >= 2.0) || !p.is_finite() {
            return Err(invalid(format!("exponent p must be >= 2, got {p}")));
        }
        Ok(())
    }

    /// `∫_{V_i} sgn(a - x)|a - x|^{p-1} dρ_θ(x)`. At `p = 2` this is `(a - b_i)/N` exactly.
    pub fn integral_p(&self, cell: usize, a: f64, p: f64) -> Result<f64> {
        self.check_cell(cell, p)?;
        let nf = self.n as f64;
        Ok(match &self.law {
            SliceLaw::Uniform { lo, hi } => {
                let (c0, c1) = self.uniform_cell(*lo, *hi, cell);
                let h = 1.0 / (hi - lo);
                if p == 2.0 {
                    (a - 0.5 * (c0 + c1)) / nf
                } else {
                    h * ((a - c0).abs().powf(p) - (a - c1).abs().powf(p)) / p
                }
            }
            SliceLaw::Dirac(c) => signed_pow(a - c, p - 1.0) / nf,
            SliceLaw::Gaussian { .. } if p == 2.0 => {
                let b = self.gaussian_barycenter(cell);
                (a - b) / nf
            }
            SliceLaw::Gaussian { .. } => self.quadrature(cell, a, |u| signed_pow(u, p - 1.0)),
            SliceLaw::Blocks(blocks) => {
                let mut acc = Neumaier::default();
                for &(pos, frac) in &blocks[cell] {
                    acc.add(frac * signed_pow(a - pos, p - 1.0));
                }
                acc.value() / nf
            }
        })
    }

    /// `∫_{V_i} |a - x|^p dρ_θ(x)`.
    pub fn moment_p(&self, cell: usize, a: f64, p: f64) -> Result<f64> {
        self.check_cell(cell, p)?;
        let nf = self.n as f64;
        Ok(match &self.law {
            SliceLaw::Uniform { lo, hi } => {
                let (c0, c1) = self.uniform_cell(*lo, *hi, cell);
                let h = 1.0 / (hi - lo);
                let q = p + 1.0;
                let raw = if a <= c0 {
                    (c1 - a).powf(q) - (c0 - a).powf(q)
                } else if a >= c1 {
                    (a - c0).powf(q) - (a - c1).powf(q)
                } else {
                    (a - c0).powf(q) + (c1 - a).powf(q)
                };
                h * raw / q
            }
            SliceLaw::Dirac(c) => (a - c).abs().powf(p) / nf,
            SliceLaw::Gaussian { .. } => self.quadrature(cell, a, |u| u.abs().powf(p)),
            SliceLaw::Blocks(blocks) => {
                let mut acc = Neumaier::default();
                for &(pos, frac) in &blocks[cell] {
                    acc.add(frac * (a - pos).abs().powf(p));
                }
                acc.value() / nf
            }
        })
    }

    fn gaussian_barycenter(&self, cell: usize) -> f64 {
        match &self.law {
            SliceLaw::Gaussian { std_dev, knots } => {
                std_dev * self.n as f64 * (normal_pdf(knots[cell]) - normal_pdf(knots[cell + 1]))
            }
            _ => unreachable!("gaussian_barycenter on a non-gaussian slice"),
        }
    }

    /// Composite Gauss–Legendre evaluation of `∫_{V_i} g(a - x) dρ_θ(x)`, split at `x = a`.
    fn quadrature(&self, cell: usize, a: f64, g: impl Fn(f64) -> f64) -> f64 {
        match &self.law {
            SliceLaw::Gaussian { std_dev, knots } => {
                let s = *std_dev;
                let z0 = knots[cell].max(-GAUSS_TAIL);
                let z1 = knots[cell + 1].min(GAUSS_TAIL);
                panels(z0, z1, a / s, |lo, hi| {
                    integrate_gl(lo, hi, |z| g(a - s * z) * normal_pdf(z))
                })
            }
            SliceLaw::Uniform { lo, hi } => {
                let (c0, c1) = self.uniform_cell(*lo, *hi, cell);
                let h = 1.0 / (hi - lo);
                panels(c0, c1, a, |l, r| integrate_gl(l, r, |x| g(a - x) * h))
            }
            SliceLaw::Dirac(c) => g(a - c) / self.n as f64,
            SliceLaw::Blocks(blocks) => {
                let mut acc = Neumaier::default();
                for &(pos, frac) in &blocks[cell] {
                    acc.add(frac * g(a - pos));
                }
                acc.value() / self.n as f64
            }
        }
    }
}

/// Splits `[lo, hi]` at `split` (when interior) and into unit-width panels, summing
/// `f(panel)` left to right.
fn panels(lo: f64, hi: f64, split: f64, f: impl Fn(f64, f64) -> f64) -> f64 {
    if hi <= lo {
        return 0.0;
    }
    let mut cuts = vec![lo];
    let push_range = |from: f64, to: f64, cuts: &mut Vec<f64>| {
        let pieces = ((to - from).ceil() as usize).max(1);
        for k in 1..pieces {
            cuts.push(from + (to - from) * k as f64 / pieces as f64);
        }
        cuts.push(to);
    };
    if split > lo && split < hi {
        push_range(lo, split, &mut cuts);
        push_range(split, hi, &mut cuts);
    } else {
        push_range(lo, hi, &mut cuts);
    }
    let mut acc = Neumaier::default();
    for w in cuts.windows(2) {
        acc.add(f(w[0], w[1]));
    }
    acc.value()
}

fn signed_pow(u: f64, e: f64) -> f64 {
    if u == 0.0 {
        0.0
    } else {
        u.signum() * u.abs().powf(e)
    }
}

fn gaussian_knots(n: usize) -> Vec<f64> {
    let mut knots = Vec::with_capacity(n + 1);
    knots.push(f64::NEG_INFINITY);
    for k in 1..n {
        knots.push(normal_quantile(k as f64 / n as f64));
    }
    knots.push(f64::INFINITY);
    knots
}

/// Stable sort by position, merging exactly equal positions.
fn merged_sorted(mut atoms: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    atoms.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
    let mut merged: Vec<(f64, f64)> = Vec::with_capacity(atoms.len());
    for (pos, w) in atoms {
        match merged.last_mut() {
            Some(last) if last.0 == pos => last.1 += w,
            _ => merged.push((pos, w)),
        }
    }
    merged
}

/// Monotone block decomposition of a discrete 1D law into `n` ordered pieces of mass `1/n`,
/// splitting atoms that straddle a boundary `k/n`.
fn block_decomposition(atoms: Vec<(f64, f64)>, n: usize) -> Vec<Vec<(f64, f64)>> {
    let atoms = merged_sorted(atoms);
    let nf = n as f64;
    let mut blocks = vec![Vec::new(); n];
    let mut cum = Neumaier::default();
    let mut start = 0.0_f64;
    let last = atoms.len() - 1;
    for (j, (pos, w)) in atoms.into_iter().enumerate() {
        cum.add(w);
        let end = if j == last {
            nf
        } else {
            snap(cum.value() * nf).clamp(start, nf)
        };
        let mut k = (start.floor() as usize).min(n - 1);
        while k < n && (k as f64) < end {
            let lo = start.max(k as f64);
            let hi = end.min(k as f64 + 1.0);
            if hi > lo {
                blocks[k].push((pos, hi - lo));
            }
            k += 1;
        }
        start = end;
    }
    blocks
}

fn snap(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() < 1e-9 {
        r
    } else {
        x
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    const E1: [f64; 2] = [1.0, 0.0];

    fn unit(angle: f64) -> [f64; 2] {
        [angle.cos(), angle.sin()]
    }

    /// Independent oracle: midpoint rule for `∫_lo^hi f`.
    fn midpoint(lo: f64, hi: f64, steps: usize, f: impl Fn(f64) -> f64) -> f64 {
        let h = (hi - lo) / steps as f64;
        (0..steps).map(|k| f(lo + (k as f64 + 0.5) * h) * h).sum()
    }

    #[test]
    fn median_of_symmetric_targets_is_zero() {
        let disk = ProjectedTarget::sliced_uniform_disk();
        let gauss = ProjectedTarget::standard_gaussian(2).unwrap();
        for angle in [0.0, 0.4, 2.0] {
            assert_eq!(disk.quantile(&unit(angle), 0.5).unwrap(), 0.0);
            assert_eq!(gauss.quantile(&unit(angle), 0.5).unwrap(), 0.0);
        }
    }

    #[test]
    fn empirical_quantile_by_enumeration() {
        let target = ProjectedTarget::empirical(2, vec![-1.0, 5.0, 3.0, -2.0], None).unwrap();
        // projections on e1: {-1, 3}; CDF steps 0.5 at -1, 1.0 at 3
        assert_eq!(target.quantile(&E1, 0.7).unwrap(), 3.0);
        assert_eq!(target.quantile(&E1, 0.5).unwrap(), -1.0);
        assert_eq!(target.quantile(&E1, 0.2).unwrap(), -1.0);
    }

    #[test]
    fn quantile_level_outside_unit_interval_rejected() {
        let disk = ProjectedTarget::sliced_uniform_disk();
        for t in [0.0, 1.0, -0.1, 1.5, f64::NAN] {
            assert!(disk.quantile(&E1, t).is_err());
        }
    }

    #[test]
    fn quantile_inverts_cdf_for_atomless_kinds() {
        let targets = [
            ProjectedTarget::sliced_uniform_disk(),
            ProjectedTarget::isotropic_gaussian(2, 1.7).unwrap(),
            ProjectedTarget::line_segment(vec![-1.0, 0.5], vec![2.0, 1.0]).unwrap(),
        ];
        let theta = unit(0.3);
        for target in &targets {
            for k in 1..40 {
                let t = k as f64 / 40.0;
                let s = target.quantile(&theta, t).unwrap();
                let back = target.quantile(&theta, target.cdf(&theta, s).unwrap()).unwrap();
                assert!((back - s).abs() < 1e-9, "{}: {s} vs {back}", target.kind_name());
            }
        }
    }

    #[test]
    fn disk_single_cell_moments() {
        let t = ProjectedTarget::sliced_uniform_disk().cell_table(&E1, 1).unwrap();
        assert_eq!(t.barycenters, vec![0.0]);
        assert!((t.second_moments[0] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn disk_two_cells_by_integration() {
        let t = ProjectedTarget::sliced_uniform_disk().cell_table(&unit(1.1), 2).unwrap();
        // oracle: b_i = N ∫_{V_i} x · ½ dx
        let left = 2.0 * midpoint(-1.0, 0.0, 10_000, |x| 0.5 * x);
        let right = 2.0 * midpoint(0.0, 1.0, 10_000, |x| 0.5 * x);
        assert!((t.barycenters[0] - left).abs() < 1e-10);
        assert!((t.barycenters[1] - right).abs() < 1e-10);
        assert!((t.barycenters[0] + 0.5).abs() < 1e-15);
    }

    #[test]
    fn gaussian_two_cells_are_half_normal_means() {
        let t = ProjectedTarget::standard_gaussian(2).unwrap().cell_table(&E1, 2).unwrap();
        let half_normal = (2.0 / PI).sqrt();
        let oracle = 2.0 * midpoint(0.0, 12.0, 200_000, |x| x * normal_pdf(x));
        assert!((oracle - half_normal).abs() < 1e-9);
        assert!((t.barycenters[1] - oracle).abs() < 1e-9);
        assert!((t.barycenters[0] + half_normal).abs() < 1e-12);
        // second moment of a half normal is 1
        assert!((t.second_moments[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gaussian_cells_by_integration() {
        let n = 7;
        let t = ProjectedTarget::isotropic_gaussian(3, 2.0)
            .unwrap()
            .cell_table(&[0.0, 0.0, 1.0], n)
            .unwrap();
        for i in 0..n {
            let lo = if i == 0 { -12.0 } else { normal_quantile(i as f64 / n as f64) };
            let hi = if i + 1 == n { 12.0 } else { normal_quantile((i + 1) as f64 / n as f64) };
            let b = n as f64 * midpoint(lo, hi, 100_000, |z| 2.0 * z * normal_pdf(z));
            let m = n as f64 * midpoint(lo, hi, 100_000, |z| 4.0 * z * z * normal_pdf(z));
            assert!((t.barycenters[i] - b).abs() < 1e-7, "cell {i}");
            assert!((t.second_moments[i] - m).abs() < 1e-7, "cell {i}");
        }
    }

    #[test]
    fn empirical_fractional_split() {
        // atoms at projections {0, 1, 2} with equal mass, N = 2
        let target =
            ProjectedTarget::empirical(2, vec![0.0, 9.0, 1.0, -3.0, 2.0, 0.5], None).unwrap();
        let t = target.cell_table(&E1, 2).unwrap();
        assert!((t.barycenters[0] - 1.0 / 3.0).abs() < 1e-14);
        assert!((t.barycenters[1] - 5.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn empirical_ties_are_merged() {
        // two atoms project to the same point on e1
        let target =
            ProjectedTarget::empirical(2, vec![1.0, 0.0, 1.0, 4.0, 3.0, 0.0, 5.0, 1.0], None)
                .unwrap();
        let t = target.cell_table(&E1, 2).unwrap();
        assert!((t.barycenters[0] - 1.0).abs() < 1e-15);
        assert!((t.barycenters[1] - 4.0).abs() < 1e-15);
        assert_eq!(t.variances[0], 0.0);
    }

    #[test]
    fn empirical_blocks_have_exact_mass() {
        let target = ProjectedTarget::shell_sample(1.0, 2.0, 997, 3).unwrap();
        for n in [1usize, 3, 10, 100, 997, 1500] {
            let slice = target.slice(&unit(0.7), n).unwrap();
            let SliceLaw::Blocks(blocks) = &slice.law else { panic!() };
            let mut prev_max = f64::NEG_INFINITY;
            for block in blocks {
                let mass: f64 = block.iter().map(|(_, f)| f).sum();
                assert!((mass - 1.0).abs() < 1e-12, "n = {n}: mass {mass}");
                let lo = block.iter().map(|(p, _)| *p).fold(f64::INFINITY, f64::min);
                let hi = block.iter().map(|(p, _)| *p).fold(f64::NEG_INFINITY, f64::max);
                assert!(lo >= prev_max);
                prev_max = hi;
            }
        }
    }

    #[test]
    fn cell_tables_match_projected_mean() {
        let targets = [
            ProjectedTarget::sliced_uniform_disk(),
            ProjectedTarget::standard_gaussian(2).unwrap(),
            ProjectedTarget::shell_sample(1.0, 2.0, 500, 9).unwrap(),
            ProjectedTarget::line_segment(vec![0.0, 1.0], vec![2.0, -1.0]).unwrap(),
        ];
        for target in &targets {
            for angle in [0.0, 0.9, FRAC_PI_2 + 0.3] {
                let theta = unit(angle);
                for n in [1usize, 2, 9, 64] {
                    let t = target.cell_table(&theta, n).unwrap();
                    let mean: f64 = t.barycenters.iter().sum::<f64>() / n as f64;
                    let expected = target.projected_mean(&theta).unwrap();
                    assert!((mean - expected).abs() < 1e-10, "{}", target.kind_name());
                    for i in 0..n {
                        assert!(t.second_moments[i] >= t.barycenters[i].powi(2) - 1e-12);
                        if i > 0 {
                            assert!(t.barycenters[i] >= t.barycenters[i - 1]);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn barycenter_gaps_respect_density_bound() {
        let targets = [
            ProjectedTarget::sliced_uniform_disk(),
            ProjectedTarget::standard_gaussian(2).unwrap(),
            ProjectedTarget::isotropic_gaussian(2, 0.3).unwrap(),
        ];
        for target in &targets {
            let beta = target.density_bound().unwrap();
            for n in [2usize, 5, 50, 400] {
                let t = target.cell_table(&unit(0.2), n).unwrap();
                for i in 1..n {
                    let gap = t.barycenters[i] - t.barycenters[i - 1];
                    assert!(gap >= 1.0 / (n as f64 * beta) - 1e-12, "{} n={n} i={i}", target.kind_name());
                }
            }
        }
    }

    #[test]
    fn rotation_invariant_tables() {
        for target in [
            ProjectedTarget::sliced_uniform_disk(),
            ProjectedTarget::standard_gaussian(2).unwrap(),
        ] {
            let a = target.cell_table(&unit(0.0), 13).unwrap();
            let b = target.cell_table(&unit(2.3), 13).unwrap();
            for i in 0..13 {
                assert!((a.barycenters[i] - b.barycenters[i]).abs() < 1e-12);
                assert!((a.second_moments[i] - b.second_moments[i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn density_bounds() {
        assert_eq!(ProjectedTarget::sliced_uniform_disk().density_bound(), Some(0.5));
        let g = ProjectedTarget::standard_gaussian(2).unwrap().density_bound().unwrap();
        assert!((g - 0.398_942_280_401_432_7).abs() < 1e-15);
        let e = ProjectedTarget::empirical(2, vec![0.0, 0.0], None).unwrap();
        assert_eq!(e.density_bound(), None);
        let s = ProjectedTarget::line_segment(vec![0.0, 0.0], vec![1.0, 0.0]).unwrap();
        assert_eq!(s.density_bound(), None);
    }

    #[test]
    fn segment_perpendicular_direction_is_an_atom() {
        let s = ProjectedTarget::line_segment(vec![-1.0, 0.5], vec![1.0, 0.5]).unwrap();
        let t = s.cell_table(&[0.0, 1.0], 4).unwrap();
        assert!(t.barycenters.iter().all(|b| *b == 0.5));
        assert!(t.variances.iter().all(|v| *v == 0.0));
        assert_eq!(s.quantile(&[0.0, 1.0], 0.3).unwrap(), 0.5);
    }

    #[test]
    fn p2_integral_reduces_to_barycenter_gap() {
        let targets = [
            ProjectedTarget::sliced_uniform_disk(),
            ProjectedTarget::standard_gaussian(2).unwrap(),
            ProjectedTarget::shell_sample(1.0, 2.0, 300, 1).unwrap(),
        ];
        let theta = unit(0.6);
        for target in &targets {
            let n = 9;
            let slice = target.slice(&theta, n).unwrap();
            let table = slice.table();
            for i in 0..n {
                for a in [-2.5, -0.3, 0.0, 0.17, 1.9] {
                    let expected = (a - table.barycenters[i]) / n as f64;
                    let closed = slice.integral_p(i, a, 2.0).unwrap();
                    let quad = slice.quadrature(i, a, |u| u);
                    assert!((closed - expected).abs() < 1e-10);
                    assert!((quad - expected).abs() < 1e-10, "{} cell {i} a {a}", target.kind_name());
                }
            }
        }
    }

    #[test]
    fn p3_integrals_on_the_disk() {
        let disk = ProjectedTarget::sliced_uniform_disk();
        assert!(disk.cell_integral_p(&E1, 1, 0, 0.0, 3.0).unwrap().abs() < 1e-15);
        let v = disk.cell_integral_p(&E1, 1, 0, 1.0, 3.0).unwrap();
        assert!((v - 4.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn closed_forms_agree_with_quadrature() {
        let disk = ProjectedTarget::sliced_uniform_disk();
        let slice = disk.slice(&E1, 5).unwrap();
        for p in [2.0, 2.5, 3.0, 4.0, 5.5] {
            for i in 0..5 {
                for a in [-1.3, -0.5, 0.05, 0.6, 2.0] {
                    let closed = slice.integral_p(i, a, p).unwrap();
                    let quad = slice.quadrature(i, a, |u| signed_pow(u, p - 1.0));
                    assert!((closed - quad).abs() < 1e-9, "p={p} i={i} a={a}: {closed} vs {quad}");
                    let closed = slice.moment_p(i, a, p).unwrap();
                    let quad = slice.quadrature(i, a, |u| u.abs().powf(p));
                    assert!((closed - quad).abs() < 1e-9, "p={p} i={i} a={a}: {closed} vs {quad}");
                }
            }
        }
    }

    #[test]
    fn gaussian_general_p_against_midpoint_oracle() {
        let g = ProjectedTarget::standard_gaussian(2).unwrap();
        let n = 4;
        let slice = g.slice(&E1, n).unwrap();
        for i in 0..n {
            let lo = if i == 0 { -12.0 } else { normal_quantile(i as f64 / n as f64) };
            let hi = if i + 1 == n { 12.0 } else { normal_quantile((i + 1) as f64 / n as f64) };
            for a in [-1.0, 0.1, 2.2] {
                let oracle = midpoint(lo, hi, 400_000, |x| signed_pow(a - x, 2.0) * normal_pdf(x));
                let v = slice.integral_p(i, a, 3.0).unwrap();
                assert!((v - oracle).abs() < 1e-8, "cell {i} a {a}: {v} vs {oracle}");
            }
        }
    }

    #[test]
    fn p_below_two_rejected() {
        let disk = ProjectedTarget::sliced_uniform_disk();
        assert!(disk.cell_integral_p(&E1, 3, 0, 0.0, 1.5).is_err());
        assert!(disk.cell_integral_p(&E1, 3, 3, 0.0, 2.0).is_err());
        assert!(disk.cell_table(&E1, 0).is_err());
    }

    #[test]
    fn shell_sample_is_inside_annulus() {
        let ProjectedTarget::EmpiricalCloud(c) = ProjectedTarget::shell_sample(1.0, 2.0, 1000, 5).unwrap() else {
            panic!()
        };
        assert_eq!(c.len(), 1000);
        for j in 0..c.len() {
            let r = c.point(j).iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((1.0..=2.0).contains(&r));
        }
        assert!((c.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
