//! JSON run configurations. Every config carries `format_version` and rejects unknown fields.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use swflow_core::descent::Init;
use swflow_core::landscape::{self, LinePlacement};
use swflow_core::{DirectionSet, PointCloud, ProjectedTarget};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TargetSpec {
    SlicedUniformDisk {
        #[serde(default = "one")]
        radius: f64,
    },
    Gaussian {
        #[serde(default = "two")]
        dim: usize,
        #[serde(default = "one")]
        std_dev: f64,
    },
    /// Either a CSV support (`path`) or the annulus sampler (`sampler: "shell"`).
    Empirical {
        #[serde(default)]
        path: Option<PathBuf>,
        #[serde(default)]
        sampler: Option<String>,
        #[serde(default)]
        r_in: Option<f64>,
        #[serde(default)]
        r_out: Option<f64>,
        #[serde(default, rename = "M")]
        m: Option<usize>,
        #[serde(default)]
        seed: Option<u64>,
    },
    Segment {
        start: Vec<f64>,
        end: Vec<f64>,
    },
}

fn one() -> f64 {
    1.0
}

fn two() -> usize {
    2
}

impl TargetSpec {
    pub fn build(&self, seed: u64) -> Result<ProjectedTarget> {
        Ok(match self {
            TargetSpec::SlicedUniformDisk { radius } => ProjectedTarget::sliced_uniform_disk_with_radius(*radius)?,
            TargetSpec::Gaussian { dim, std_dev } => ProjectedTarget::isotropic_gaussian(*dim, *std_dev)?,
            TargetSpec::Empirical {
                path,
                sampler,
                r_in,
                r_out,
                m,
                seed: own_seed,
            } => match (path, sampler.as_deref()) {
                (Some(path), None) => {
                    ensure!(
                        r_in.is_none() && r_out.is_none() && m.is_none() && own_seed.is_none(),
                        "sampler parameters given for a file-backed empirical target"
                    );
                    swflow_core::io::read_empirical_csv(path)
                        .with_context(|| format!("reading {}", path.display()))?
                }
                (None, Some("shell")) => {
                    let (Some(r_in), Some(r_out), Some(m)) = (r_in, r_out, m) else {
                        bail!("shell sampler needs r_in, r_out and M");
                    };
                    ProjectedTarget::shell_sample(*r_in, *r_out, *m, own_seed.unwrap_or(seed))?
                }
                (None, Some(other)) => bail!("unknown empirical sampler {other:?}"),
                (Some(_), Some(_)) => bail!("empirical target takes either path or sampler, not both"),
                (None, None) => bail!("empirical target needs path or sampler"),
            },
            TargetSpec::Segment { start, end } => ProjectedTarget::line_segment(start.clone(), end.clone())?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DirsSpec {
    Equispaced {
        #[serde(rename = "L")]
        l: usize,
        #[serde(default)]
        phase: f64,
    },
    Sampled {
        dim: usize,
        #[serde(rename = "L")]
        l: usize,
        #[serde(default)]
        seed: Option<u64>,
    },
    /// Equispaced circle rotated so that `e₂` is (or is not) one of the directions.
    Circle {
        #[serde(rename = "L")]
        l: usize,
        include_e2: bool,
    },
}

impl DirsSpec {
    pub fn build(&self, seed: u64) -> Result<DirectionSet> {
        Ok(match self {
            DirsSpec::Equispaced { l, phase } => DirectionSet::equispaced_circle(*l, *phase)?,
            DirsSpec::Sampled { dim, l, seed: own } => DirectionSet::sampled_sphere(*dim, *l, own.unwrap_or(seed))?,
            DirsSpec::Circle { l, include_e2 } => {
                ensure!(*l > 0, "direction count must be positive");
                let phase = if *include_e2 { PI / 2.0 } else { PI / 2.0 + PI / *l as f64 };
                DirectionSet::equispaced_circle(*l, phase)?
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CloudSpec {
    Segment {
        n: usize,
    },
    GaussianLine {
        n: usize,
        #[serde(default = "two")]
        dim: usize,
        #[serde(default = "quantile_midpoint")]
        placement: LinePlacement,
    },
    Dumbbell {
        segment_points: usize,
        blob_points: usize,
        center: f64,
        radius: f64,
    },
    UniformBox {
        n: usize,
        #[serde(default = "two")]
        dim: usize,
        lo: f64,
        hi: f64,
    },
    File {
        path: PathBuf,
    },
    Explicit {
        points: Vec<Vec<f64>>,
    },
}

fn quantile_midpoint() -> LinePlacement {
    LinePlacement::QuantileMidpoint
}

impl CloudSpec {
    pub fn build(&self, dirs: &DirectionSet, seed: u64) -> Result<PointCloud> {
        Ok(match self {
            CloudSpec::Segment { n } => landscape::segment_critical_cloud(*n)?,
            CloudSpec::GaussianLine { n, dim, placement } => {
                landscape::gaussian_line_critical_cloud(*n, *dim, dirs, *placement)?
            }
            CloudSpec::Dumbbell {
                segment_points,
                blob_points,
                center,
                radius,
            } => landscape::dumbbell_cloud(*segment_points, *blob_points, *center, *radius)?,
            CloudSpec::UniformBox { n, dim, lo, hi } => swflow_core::descent::uniform_box(*n, *dim, *lo, *hi, seed)?,
            CloudSpec::File { path } => {
                swflow_core::io::read_cloud_csv(path).with_context(|| format!("reading {}", path.display()))?
            }
            CloudSpec::Explicit { points } => PointCloud::from_points(points)?,
        })
    }

    /// Particles that belong to the segment part of the cloud.
    pub fn segment_len(&self, n: usize) -> usize {
        match self {
            CloudSpec::Dumbbell { segment_points, .. } => *segment_points,
            _ => n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GridSpec {
    Uniform { t_max: f64, points: usize },
    SymmetricLog { t_min: f64, t_max: f64, per_side: usize },
    Values { values: Vec<f64> },
}

impl GridSpec {
    pub fn build(&self) -> Result<Vec<f64>> {
        Ok(match self {
            GridSpec::Uniform { t_max, points } => landscape::uniform_grid(*t_max, *points)?,
            GridSpec::SymmetricLog { t_min, t_max, per_side } => landscape::symmetric_log_grid(*t_min, *t_max, *per_side)?,
            GridSpec::Values { values } => values.clone(),
        })
    }
}

/// Perturbation field for `vector_field` and `kink` modes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldSpec {
    /// `(-1)^i e₂` on particles `range[0]..range[1]`; defaults to the segment part of the cloud.
    Alternating {
        #[serde(default)]
        range: Option<[usize; 2]>,
    },
    Explicit {
        vectors: Vec<Vec<f64>>,
    },
}

impl FieldSpec {
    pub fn build(&self, cloud: &CloudSpec, x: &PointCloud) -> Result<Vec<Vec<f64>>> {
        match self {
            FieldSpec::Alternating { range } => {
                let range = match range {
                    Some([a, b]) => *a..*b,
                    None => 0..cloud.segment_len(x.len()),
                };
                Ok(landscape::alternating_field(x.len(), x.dim(), Some(range))?)
            }
            FieldSpec::Explicit { vectors } => {
                ensure!(vectors.len() == x.len(), "field has {} vectors for {} particles", vectors.len(), x.len());
                ensure!(vectors.iter().all(|v| v.len() == x.dim()), "field vectors must have dimension {}", x.dim());
                Ok(vectors.clone())
            }
        }
    }
}

fn default_seed() -> u64 {
    0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DescendConfig {
    pub format_version: u32,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Particle count; required for `uniform_box` init, checked otherwise.
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default = "two")]
    pub dim: usize,
    pub target: TargetSpec,
    pub dirs: DirsSpec,
    pub init: Init,
    pub step_multiple: f64,
    pub max_iters: usize,
    #[serde(default)]
    pub grad_tol: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbModeSpec {
    VectorField,
    SplitTranslation,
    Kink,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbConfig {
    pub format_version: u32,
    #[serde(default = "default_seed")]
    pub seed: u64,
    pub mode: PerturbModeSpec,
    pub target: TargetSpec,
    pub dirs: DirsSpec,
    pub cloud: CloudSpec,
    #[serde(default)]
    pub field: Option<FieldSpec>,
    /// Split direction for `split_translation`.
    #[serde(default = "e2")]
    pub n_hat: Vec<f64>,
    pub grid: GridSpec,
    #[serde(default = "default_deltas")]
    pub deltas: Vec<f64>,
    /// Curvature constant of the envelope check in `split_translation` mode.
    #[serde(default = "default_envelope")]
    pub envelope_c: f64,
}

fn e2() -> Vec<f64> {
    vec![0.0, 1.0]
}

fn default_deltas() -> Vec<f64> {
    vec![0.01, 0.02, 0.05]
}

fn default_envelope() -> f64 {
    100.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CriticalityConfig {
    pub format_version: u32,
    #[serde(default = "default_seed")]
    pub seed: u64,
    pub cloud: CloudSpec,
    pub target: TargetSpec,
    pub dirs: DirsSpec,
    /// Verdict threshold on the largest residual norm.
    #[serde(default = "default_residual_tol")]
    pub tol: f64,
}

fn default_residual_tol() -> f64 {
    1e-2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub format_version: u32,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default = "two")]
    pub dim: usize,
    pub target: TargetSpec,
    pub dirs: DirsSpec,
    pub init: Init,
    /// Values of `λ / N`.
    pub multiples: Vec<f64>,
    pub iters: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellsConfig {
    pub format_version: u32,
    #[serde(default = "default_seed")]
    pub seed: u64,
    pub cloud: CloudSpec,
    pub target: TargetSpec,
    pub dirs: DirsSpec,
}

/// Shared access to the fields every command config has.
pub trait RunConfig: Serialize + DeserializeOwned {
    fn format_version(&self) -> u32;
    fn seed_mut(&mut self) -> &mut u64;
}

macro_rules! run_config {
    ($($t:ty),*) => {$(
        impl RunConfig for $t {
            fn format_version(&self) -> u32 {
                self.format_version
            }
            fn seed_mut(&mut self) -> &mut u64 {
                &mut self.seed
            }
        }
    )*};
}

run_config!(DescendConfig, PerturbConfig, CriticalityConfig, SweepConfig, CellsConfig);

pub fn parse<C: RunConfig>(text: &str, seed_override: Option<u64>) -> Result<C> {
    let mut cfg: C = serde_json::from_str(text).context("invalid config")?;
    ensure!(
        cfg.format_version() == FORMAT_VERSION,
        "unsupported format_version {} (expected {FORMAT_VERSION})",
        cfg.format_version()
    );
    if let Some(seed) = seed_override {
        *cfg.seed_mut() = seed;
    }
    Ok(cfg)
}

pub fn load<C: RunConfig>(path: &Path, seed_override: Option<u64>) -> Result<C> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse(&text, seed_override)
}
