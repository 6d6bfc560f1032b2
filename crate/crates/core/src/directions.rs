//! Direction sets on the unit sphere with quadrature weights.
//!
//! A [`DirectionSet`] replaces every integral `∫_{S^{d-1}} f(θ) dθ` (uniform probability
//! measure) by the finite sum `Σ_l w_l f(θ_l)`. Directions are kept in a fixed index order
//! and every downstream reduction walks them in that order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::{invalid, Error, Result};

const UNIT_TOL: f64 = 1e-12;

/// How a direction set was produced. Serialized as the `phase_or_seed` field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DirectionOrigin {
    Phase(f64),
    Seed(u64),
    Explicit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionSet {
    dim: usize,
    #[serde(rename = "phase_or_seed")]
    origin: DirectionOrigin,
    dirs: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

impl DirectionSet {
    /// `L` directions at angles `phase + 2πk/L` in the plane, uniform weights.
    pub fn equispaced_circle(count: usize, phase: f64) -> Result<Self> {
        if count == 0 {
            return Err(invalid("equispaced_circle needs at least one direction"));
        }
        if !phase.is_finite() {
            return Err(invalid("phase must be finite"));
        }
        let step = 2.0 * std::f64::consts::PI / count as f64;
        let dirs = (0..count)
            .map(|k| {
                let (s, c) = (phase + step * k as f64).sin_cos();
                vec![c, s]
            })
            .collect();
        Ok(Self {
            dim: 2,
            origin: DirectionOrigin::Phase(phase),
            dirs,
            weights: vec![1.0 / count as f64; count],
        })
    }

    /// `L` i.i.d. uniform directions obtained by normalizing seeded Gaussian vectors.
    pub fn sampled_sphere(dim: usize, count: usize, seed: u64) -> Result<Self> {
        if dim < 2 {
            return Err(invalid(format!("sphere dimension must be >= 2, got {dim}")));
        }
        if count == 0 {
            return Err(invalid("sampled_sphere needs at least one direction"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut dirs = Vec::with_capacity(count);
        while dirs.len() < count {
            let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            // a zero draw has probability zero but would poison the set
            if norm > 1e-300 {
                dirs.push(v.into_iter().map(|x| x / norm).collect());
            }
        }
        Ok(Self {
            dim,
            origin: DirectionOrigin::Seed(seed),
            dirs,
            weights: vec![1.0 / count as f64; count],
        })
    }

    /// User-supplied directions, normalized, with uniform weights.
    pub fn from_directions(dim: usize, dirs: Vec<Vec<f64>>) -> Result<Self> {
        if dim < 2 {
            return Err(invalid(format!("sphere dimension must be >= 2, got {dim}")));
        }
        if dirs.is_empty() {
            return Err(invalid("direction set must not be empty"));
        }
        let count = dirs.len();
        let mut out = Vec::with_capacity(count);
        for v in dirs {
            if v.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: v.len(),
                });
            }
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if !(norm.is_finite() && norm > 0.0) {
                return Err(invalid("directions must be finite and nonzero"));
            }
            out.push(v.into_iter().map(|x| x / norm).collect());
        }
        Ok(Self {
            dim,
            origin: DirectionOrigin::Explicit,
            dirs: out,
            weights: vec![1.0 / count as f64; count],
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.dirs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dirs.is_empty()
    }

    pub fn origin(&self) -> DirectionOrigin {
        self.origin
    }

    pub fn direction(&self, l: usize) -> &[f64] {
        &self.dirs[l]
    }

    pub fn weight(&self, l: usize) -> f64 {
        self.weights[l]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], f64)> {
        self.dirs
            .iter()
            .map(Vec::as_slice)
            .zip(self.weights.iter().copied())
    }

    /// Quadrature of `∫ θθᵀ dθ`, row-major `d×d`. Equals `I/d` for exact quadratures.
    pub fn second_moment(&self) -> Vec<f64> {
        let d = self.dim;
        let mut m = vec![0.0; d * d];
        for (theta, w) in self.iter() {
            for a in 0..d {
                for b in 0..d {
                    m[a * d + b] += w * theta[a] * theta[b];
                }
            }
        }
        m
    }

    /// Checks the stored invariants (unit directions, weights summing to one).
    pub fn validate(&self) -> Result<()> {
        if self.dirs.is_empty() || self.dirs.len() != self.weights.len() {
            return Err(invalid("direction set must be nonempty with one weight per direction"));
        }
        for v in &self.dirs {
            if v.len() != self.dim {
                return Err(Error::DimensionMismatch {
                    expected: self.dim,
                    got: v.len(),
                });
            }
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > UNIT_TOL {
                return Err(invalid(format!("direction has norm {norm}")));
            }
        }
        if self.weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(invalid("weights must be nonnegative"));
        }
        let total: f64 = self.weights.iter().sum();
        if (total - 1.0).abs() > UNIT_TOL {
            return Err(invalid(format!("weights sum to {total}")));
        }
        Ok(())
    }
}
