//! Sliced energies and gradients over a fixed direction set.
//!
//! With `σ_l` the sorting permutation of `⟨X, θ_l⟩` and `b_{l,k}` the barycenter of the
//! `k`-th cell of `ρ_{θ_l}`:
//!
//! ```text
//! F(X)     = Σ_l w_l · ½ W₂²(μ_{⟨X,θ_l⟩}, ρ_{θ_l})
//! ∇_i F(X) = (1/N) (M X_i - Σ_l w_l b_{l, rank_l(i)} θ_l),   M = Σ_l w_l θ_l θ_lᵀ
//! ```
//!
//! `M` is the direction set's own second moment, so the gradient is exact for the
//! discretized energy. Per-direction work runs in parallel; partial results are reduced
//! in direction order, so outputs do not depend on the number of worker threads.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::directions::DirectionSet;
use crate::ot1d::{sort_projection, w2sq_sorted, SortPermutation};
use crate::sum::{neumaier_sum, Neumaier};
use crate::targets::{dot, CellTable, ProjectedTarget, Slice};
use crate::{invalid, Error, Result};

/// `N` particles in `R^d`, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointCloud {
    dim: usize,
    coords: Vec<f64>,
}

impl PointCloud {
    pub fn new(dim: usize, coords: Vec<f64>) -> Result<Self> {
        if dim == 0 || coords.is_empty() || coords.len() % dim != 0 {
            return Err(invalid("point cloud needs N >= 1 points of a positive dimension"));
        }
        if coords.iter().any(|x| !x.is_finite()) {
            return Err(invalid("point coordinates must be finite"));
        }
        Ok(Self { dim, coords })
    }

    pub fn from_points(points: &[Vec<f64>]) -> Result<Self> {
        let dim = points.first().map_or(0, Vec::len);
        let mut coords = Vec::with_capacity(points.len() * dim);
        for p in points {
            if p.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: p.len(),
                });
            }
            coords.extend_from_slice(p);
        }
        Self::new(dim, coords)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks_exact(self.dim)
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.points().map(<[f64]>::to_vec).collect()
    }

    /// `⟨X_i, θ⟩` for every particle.
    pub fn project(&self, theta: &[f64]) -> Vec<f64> {
        self.points().map(|p| dot(p, theta)).collect()
    }

    /// `X + t ξ` for a per-particle field `ξ`.
    pub fn displaced(&self, xi: &[Vec<f64>], t: f64) -> Result<Self> {
        if xi.len() != self.len() {
            return Err(Error::LengthMismatch(self.len(), xi.len()));
        }
        let mut coords = self.coords.clone();
        for (i, v) in xi.iter().enumerate() {
            if v.len() != self.dim {
                return Err(Error::DimensionMismatch {
                    expected: self.dim,
                    got: v.len(),
                });
            }
            for k in 0..self.dim {
                coords[i * self.dim + k] += t * v[k];
            }
        }
        Self::new(self.dim, coords)
    }

    /// Closest pair `(i, j, distance)` with `i < j`; lowest indices win ties.
    pub fn closest_pair(&self) -> Option<(usize, usize, f64)> {
        let n = self.len();
        let mut best: Option<(usize, usize, f64)> = None;
        for i in 0..n {
            let p = self.point(i);
            for j in i + 1..n {
                let q = self.point(j);
                let d2: f64 = p.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum();
                if best.is_none_or(|(_, _, b)| d2 < b) {
                    best = Some((i, j, d2));
                }
            }
        }
        best.map(|(i, j, d2)| (i, j, d2.sqrt()))
    }

    /// `min_{i≠j} ‖X_i - X_j‖`, infinite for a single particle.
    pub fn min_separation(&self) -> f64 {
        self.closest_pair().map_or(f64::INFINITY, |(_, _, d)| d)
    }

    pub fn is_off_diagonal(&self) -> bool {
        self.min_separation() > 0.0
    }

    pub fn check_off_diagonal(&self) -> Result<()> {
        match self.closest_pair() {
            Some((i, j, d)) if d == 0.0 => Err(Error::OnDiagonal(i, j)),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientReport {
    pub energy: f64,
    pub grads: Vec<Vec<f64>>,
    pub grad_norm: f64,
    /// `v_{μ_X}(X_i) = N ∇_i F`; only filled for `p = 2`.
    pub residuals: Option<Vec<Vec<f64>>>,
    /// `Σ_l w_l b_{l, rank_l(i)} θ_l`; only filled for `p = 2`.
    #[serde(skip)]
    pub pull: Option<Vec<Vec<f64>>>,
}

impl GradientReport {
    fn assemble(energy: f64, grads: Vec<Vec<f64>>, pull: Option<Vec<Vec<f64>>>, with_residuals: bool) -> Self {
        let n = grads.len();
        let grad_norm = neumaier_sum(grads.iter().flatten().map(|g| g * g)).sqrt();
        let residuals = with_residuals.then(|| {
            grads
                .iter()
                .map(|g| g.iter().map(|x| x * n as f64).collect())
                .collect()
        });
        Self {
            energy,
            grads,
            grad_norm,
            residuals,
            pull,
        }
    }

    /// Euclidean norm of each residual vector.
    pub fn residual_norms(&self) -> Option<Vec<f64>> {
        self.residuals.as_ref().map(|r| {
            r.iter()
                .map(|v| v.iter().map(|x| x * x).sum::<f64>().sqrt())
                .collect()
        })
    }
}

/// Energy and gradient evaluator with the per-direction cell tables cached for one `N`.
#[derive(Debug, Clone)]
pub struct SlicedEnergy {
    target: ProjectedTarget,
    dirs: DirectionSet,
    n: usize,
    slices: Vec<Slice>,
    tables: Vec<CellTable>,
    moment: Vec<f64>,
}

struct DirectionPart {
    sigma: SortPermutation,
    value: f64,
}

impl SlicedEnergy {
    pub fn new(target: &ProjectedTarget, dirs: &DirectionSet, n: usize) -> Result<Self> {
        if target.dim() != dirs.dim() {
            return Err(Error::DimensionMismatch {
                expected: dirs.dim(),
                got: target.dim(),
            });
        }
        dirs.validate()?;
        let slices = (0..dirs.len())
            .into_par_iter()
            .map(|l| target.slice(dirs.direction(l), n))
            .collect::<Result<Vec<_>>>()?;
        let tables = slices.par_iter().map(Slice::table).collect();
        Ok(Self {
            target: target.clone(),
            dirs: dirs.clone(),
            n,
            slices,
            tables,
            moment: dirs.second_moment(),
        })
    }

    pub fn target(&self) -> &ProjectedTarget {
        &self.target
    }

    pub fn dirs(&self) -> &DirectionSet {
        &self.dirs
    }

    pub fn cells(&self) -> usize {
        self.n
    }

    pub fn table(&self, l: usize) -> &CellTable {
        &self.tables[l]
    }

    fn check(&self, x: &PointCloud) -> Result<()> {
        if x.dim() != self.dirs.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dirs.dim(),
                got: x.dim(),
            });
        }
        if x.len() != self.n {
            return Err(Error::LengthMismatch(self.n, x.len()));
        }
        Ok(())
    }

    fn parts(&self, x: &PointCloud) -> Vec<(Vec<f64>, DirectionPart)> {
        (0..self.dirs.len())
            .into_par_iter()
            .map(|l| {
                let proj = x.project(self.dirs.direction(l));
                let sigma = sort_projection(&proj);
                let value = w2sq_sorted(&proj, &sigma, &self.tables[l]);
                (proj, DirectionPart { sigma, value })
            })
            .collect()
    }

    /// Per-direction `W₂²(μ_{⟨X,θ_l⟩}, ρ_{θ_l})` in direction order.
    pub fn per_direction_w2sq(&self, x: &PointCloud) -> Result<Vec<f64>> {
        self.check(x)?;
        Ok(self.parts(x).into_iter().map(|(_, p)| p.value).collect())
    }

    /// `F(X) = Σ_l w_l · ½ W₂²(⟨X,θ_l⟩, ρ_{θ_l})`.
    pub fn energy(&self, x: &PointCloud) -> Result<f64> {
        let values = self.per_direction_w2sq(x)?;
        Ok(self.reduce_energy(&values))
    }

    fn reduce_energy(&self, values: &[f64]) -> f64 {
        let mut acc = Neumaier::default();
        for (v, w) in values.iter().zip(self.dirs.weights()) {
            acc.add(w * 0.5 * v);
        }
        acc.value()
    }

    /// The `p = 2` gradient with residuals; errors on the generalized diagonal.
    pub fn grad_p2(&self, x: &PointCloud) -> Result<GradientReport> {
        self.check(x)?;
        x.check_off_diagonal()?;
        let (n, d) = (self.n, x.dim());
        let parts = self.parts(x);
        let values: Vec<f64> = parts.iter().map(|(_, p)| p.value).collect();
        let energy = self.reduce_energy(&values);

        let mut pull = vec![vec![Neumaier::default(); d]; n];
        for (l, (_, part)) in parts.iter().enumerate() {
            let theta = self.dirs.direction(l);
            let w = self.dirs.weight(l);
            let b = &self.tables[l].barycenters;
            for (i, acc) in pull.iter_mut().enumerate() {
                let c = w * b[part.sigma.rank(i)];
                for k in 0..d {
                    acc[k].add(c * theta[k]);
                }
            }
        }
        let pull: Vec<Vec<f64>> = pull
            .into_iter()
            .map(|acc| acc.iter().map(Neumaier::value).collect())
            .collect();
        let grads = (0..n)
            .map(|i| {
                let xi = x.point(i);
                (0..d)
                    .map(|a| {
                        let mx = neumaier_sum((0..d).map(|b| self.moment[a * d + b] * xi[b]));
                        (mx - pull[i][a]) / n as f64
                    })
                    .collect()
            })
            .collect();
        Ok(GradientReport::assemble(energy, grads, Some(pull), true))
    }

    /// Gradient of `F_p(X) = Σ_l w_l (1/p) W_p^p(⟨X,θ_l⟩, ρ_{θ_l})` for `p ≥ 2`.
    ///
    /// The reported energy is `F_p`. Residuals are filled only at `p = 2`.
    pub fn grad_general_p(&self, x: &PointCloud, p: f64) -> Result<GradientReport> {
        self.check(x)?;
        check_p(p)?;
        x.check_off_diagonal()?;
        let (n, d) = (self.n, x.dim());
        let per_dir = (0..self.dirs.len())
            .into_par_iter()
            .map(|l| {
                let proj = x.project(self.dirs.direction(l));
                let sigma = sort_projection(&proj);
                let slice = &self.slices[l];
                let mut coeffs = Vec::with_capacity(n);
                let mut value = Neumaier::default();
                for (i, &a) in proj.iter().enumerate() {
                    coeffs.push(slice.integral_p(sigma.rank(i), a, p)?);
                    value.add(slice.moment_p(sigma.rank(i), a, p)?);
                }
                Ok((coeffs, value.value()))
            })
            .collect::<Result<Vec<_>>>()?;

        let mut energy = Neumaier::default();
        let mut acc = vec![vec![Neumaier::default(); d]; n];
        for (l, (coeffs, value)) in per_dir.iter().enumerate() {
            let theta = self.dirs.direction(l);
            let w = self.dirs.weight(l);
            energy.add(w * value / p);
            for (i, row) in acc.iter_mut().enumerate() {
                for k in 0..d {
                    row[k].add(w * coeffs[i] * theta[k]);
                }
            }
        }
        let grads = acc
            .into_iter()
            .map(|row| row.iter().map(Neumaier::value).collect())
            .collect();
        Ok(GradientReport::assemble(energy.value(), grads, None, p == 2.0))
    }

    /// `F_p(X) = Σ_l w_l (1/p) Σ_i ∫_{V_{l,rank(i)}} |⟨X_i,θ_l⟩ - x|^p dρ_{θ_l}`.
    pub fn energy_p(&self, x: &PointCloud, p: f64) -> Result<f64> {
        self.check(x)?;
        check_p(p)?;
        let values = (0..self.dirs.len())
            .into_par_iter()
            .map(|l| {
                let proj = x.project(self.dirs.direction(l));
                let sigma = sort_projection(&proj);
                let mut acc = Neumaier::default();
                for (i, &a) in proj.iter().enumerate() {
                    acc.add(self.slices[l].moment_p(sigma.rank(i), a, p)?);
                }
                Ok(acc.value())
            })
            .collect::<Result<Vec<f64>>>()?;
        let mut acc = Neumaier::default();
        for (v, w) in values.iter().zip(self.dirs.weights()) {
            acc.add(w * v / p);
        }
        Ok(acc.value())
    }
}

fn check_p(p: f64) -> Result<()> {
    if !(p >= 2.0) || !p.is_finite() {
        return Err(invalid(format!("exponent p must be >= 2, got {p}")));
    }
    Ok(())
}

pub fn energy(x: &PointCloud, target: &ProjectedTarget, dirs: &DirectionSet) -> Result<f64> {
    SlicedEnergy::new(target, dirs, x.len())?.energy(x)
}

pub fn grad_p2(x: &PointCloud, target: &ProjectedTarget, dirs: &DirectionSet) -> Result<GradientReport> {
    SlicedEnergy::new(target, dirs, x.len())?.grad_p2(x)
}

pub fn grad_general_p(
    x: &PointCloud,
    target: &ProjectedTarget,
    dirs: &DirectionSet,
    p: f64,
) -> Result<GradientReport> {
    SlicedEnergy::new(target, dirs, x.len())?.grad_general_p(x, p)
}

/// `F_L(X) = (1/2) Σ_l w_l W₂²(⟨X,θ_l⟩, ρ_{θ_l})` over a user-chosen set of fixed directions.
pub fn estimator_fl(x: &PointCloud, target: &ProjectedTarget, fixed_dirs: &DirectionSet) -> Result<f64> {
    energy(x, target, fixed_dirs)
}
