//! Exact optimal transport on the line.

use serde::{Deserialize, Serialize};

use crate::sum::Neumaier;
use crate::targets::CellTable;
use crate::{invalid, Error, Result};

/// `perm[k]` is the index of the `k`-th smallest value; `inverse[i]` is the rank of value `i`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SortPermutation {
    pub perm: Vec<usize>,
    pub inverse: Vec<usize>,
}

impl SortPermutation {
    pub fn len(&self) -> usize {
        self.perm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.perm.is_empty()
    }

    /// Rank of particle `i` in the sorted order.
    pub fn rank(&self, i: usize) -> usize {
        self.inverse[i]
    }
}

/// Stable ascending sort; equal values keep their original index order.
pub fn sort_projection(values: &[f64]) -> SortPermutation {
    let mut perm: Vec<usize> = (0..values.len()).collect();
    perm.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut inverse = vec![0; perm.len()];
    for (k, &i) in perm.iter().enumerate() {
        inverse[i] = k;
    }
    SortPermutation { perm, inverse }
}

/// `W₂²(μ_proj, ρ_θ) = Σ_i ∫_{V_i} (proj_{σ(i)} - x)² dρ_θ`, evaluated per cell as
/// `((proj_{σ(i)} - b_i)² + var_i) / N`.
pub fn w2sq_semidiscrete(proj: &[f64], table: &CellTable) -> Result<f64> {
    let n = proj.len();
    if n != table.len() {
        return Err(Error::LengthMismatch(n, table.len()));
    }
    let sigma = sort_projection(proj);
    Ok(w2sq_sorted(proj, &sigma, table))
}

pub(crate) fn w2sq_sorted(proj: &[f64], sigma: &SortPermutation, table: &CellTable) -> f64 {
    let mut acc = Neumaier::default();
    for (k, &i) in sigma.perm.iter().enumerate() {
        let gap = proj[i] - table.barycenters[k];
        acc.add(gap * gap + table.variances[k]);
    }
    acc.value() / proj.len() as f64
}

/// `W_p^p` between two uniform empirical measures of equal size: the sorted matching cost.
pub fn wpp_discrete(x: &[f64], y: &[f64], p: f64) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch(x.len(), y.len()));
    }
    if x.is_empty() {
        return Err(invalid("empty measures"));
    }
    if !(p >= 1.0) || !p.is_finite() {
        return Err(invalid(format!("exponent p must be >= 1, got {p}")));
    }
    let sx = sort_projection(x);
    let sy = sort_projection(y);
    let mut acc = Neumaier::default();
    for (&i, &j) in sx.perm.iter().zip(&sy.perm) {
        acc.add((x[i] - y[j]).abs().powf(p));
    }
    Ok(acc.value() / x.len() as f64)
}
