//! Run configurations: one JSON document per run.

use std::fs;
use std::path::{Path, PathBuf};

use coiso_core::capacity::LowerBoundOptions;
use coiso_core::chord::{LinkingConfig, MinimaxOptions};
use coiso_core::dynamics::SamplerConfig;
use coiso_core::geometry::{CoisoSpace, PhasePoint};
use coiso_core::hamiltonian::{RadialHamiltonian, RadialProfile};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use sha2::{Digest, Sha256};

use crate::Failure;

/// A parsed config together with the hash of its bytes.
pub struct Loaded<T> {
    pub config: T,
    pub sha256: String,
    /// Directory of the config file; relative paths inside it resolve here.
    pub base: PathBuf,
}

pub fn load<T: DeserializeOwned>(path: &Path) -> Result<Loaded<T>, Failure> {
    let bytes = fs::read(path).map_err(|e| Failure::config(format!("cannot read config {}: {e}", path.display())))?;
    let config = serde_json::from_slice(&bytes)
        .map_err(|e| Failure::config(format!("invalid config {}: {e}", path.display())))?;
    let sha256 = format!("{:x}", Sha256::digest(&bytes));
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(Loaded { config, sha256, base })
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProfileSpec {
    SmoothStep { u0: f64, u1: f64, height: f64 },
    Linear { slope: f64 },
    LowerBound { abs_a: f64, eps: f64, delta: f64, n_knots: usize },
    /// A serialized `RadialProfile`.
    File { path: PathBuf },
}

impl ProfileSpec {
    pub fn build(&self, base: &Path) -> Result<RadialProfile, Failure> {
        let built = match self {
            ProfileSpec::SmoothStep { u0, u1, height } => RadialProfile::smooth_step(*u0, *u1, *height),
            ProfileSpec::Linear { slope } => RadialProfile::linear(*slope),
            ProfileSpec::LowerBound { abs_a, eps, delta, n_knots } => {
                RadialProfile::lower_bound_canonical(*abs_a, *eps, *delta, *n_knots)
            }
            ProfileSpec::File { path } => {
                let full = base.join(path);
                let text = fs::read(&full)
                    .map_err(|e| Failure::config(format!("profile.path: cannot read {}: {e}", full.display())))?;
                let p: RadialProfile = serde_json::from_slice(&text)
                    .map_err(|e| Failure::config(format!("profile.path: invalid profile {}: {e}", full.display())))?;
                p.validate().map(|_| p)
            }
        };
        built.map_err(|e| Failure::config(format!("profile: {e}")))
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HamiltonianSpec {
    /// `(0, …, 0, b_n)`.
    pub center: Vec<f64>,
    pub profile: ProfileSpec,
}

impl HamiltonianSpec {
    pub fn build(&self, space: &CoisoSpace, base: &Path) -> Result<RadialHamiltonian, Failure> {
        let profile = self.profile.build(base)?;
        RadialHamiltonian::new(space, PhasePoint(self.center.clone()), profile)
            .map_err(|e| Failure::config(format!("hamiltonian.center: {e}")))
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceSpec {
    pub n: usize,
    pub k: usize,
}

impl SpaceSpec {
    pub fn build(self) -> Result<CoisoSpace, Failure> {
        CoisoSpace::new(self.n, self.k).map_err(|e| Failure::config(format!("space: {e}")))
    }
}

fn default_tol() -> f64 {
    1e-12
}

fn default_dt_out() -> f64 {
    0.01
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowConfig {
    pub space: SpaceSpec,
    pub hamiltonian: HamiltonianSpec,
    pub x0: Vec<f64>,
    pub t_max: f64,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_dt_out")]
    pub dt_out: f64,
    /// Horizon for the return-time search; `t_max` if absent.
    #[serde(default)]
    pub return_horizon: Option<f64>,
    #[serde(default)]
    pub seed: u64,
}

fn default_r_grid() -> Vec<f64> {
    (0..=4).map(|i| i as f64 * 0.25).collect()
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CapacityConfig {
    pub space: SpaceSpec,
    /// `b_n` of the center `a = (0, …, 0, b_n)`.
    pub b_n: f64,
    #[serde(default)]
    pub lower_bound: LowerBoundOptions,
    /// A custom witness profile instead of the canonical construction.
    #[serde(default)]
    pub profile: Option<ProfileSpec>,
    #[serde(default = "default_r_grid")]
    pub r_grid: Vec<f64>,
    #[serde(default)]
    pub seed: u64,
}

fn default_n_f() -> usize {
    32
}

fn default_subcritical_slope() -> f64 {
    1.0
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChordConfig {
    pub space: SpaceSpec,
    pub hamiltonian: HamiltonianSpec,
    /// Declared `m(H)`; must match the profile.
    pub m_h: f64,
    /// Extension parameter; `0.05·(m(H) − π/2)` capped at `0.1` if absent.
    #[serde(default)]
    pub eps: Option<f64>,
    /// Far slope of the continuation used when `m(H) ≤ π/2`.
    #[serde(default = "default_subcritical_slope")]
    pub subcritical_slope: f64,
    #[serde(default)]
    pub n_scale: Option<f64>,
    #[serde(default = "default_n_f")]
    pub n_f: usize,
    #[serde(default)]
    pub n_quad: Option<usize>,
    #[serde(default)]
    pub linking: LinkingConfig,
    #[serde(default)]
    pub minimax: MinimaxOptions,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NonsqueezeConfig {
    /// `(r, A)` pairs.
    #[serde(default)]
    pub cases: Vec<(f64, f64)>,
    #[serde(default)]
    pub seed: u64,
}

/// Tolerances must be positive.
pub fn positive(name: &str, v: f64) -> Result<(), Failure> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Failure::config(format!("{name} must be positive, got {v}")))
    }
}

pub fn sampler_seeded(s: &SamplerConfig, seed: u64) -> SamplerConfig {
    SamplerConfig { seed, ..*s }
}
