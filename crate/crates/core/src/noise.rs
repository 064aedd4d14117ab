//! Reproducible randomness: per-path substreams, dyadic Brownian grids with
//! exact coarsening, and the uniform draws behind the randomized drift time.
//!
//! Every substream is a ChaCha8 generator keyed by the master seed, with the
//! 64-bit stream id `path_index * 4 + role`. Gaussian increments are
//! `sqrt(dt) * z` with `z` drawn by the `rand_distr` standard-normal
//! ziggurat, so a given (seed, path, role) always yields the same bits.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SdeError};
use crate::model::NoiseStructure;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    Brownian,
    Randomization,
    /// Sampling for diagnostics such as the taming audit.
    Audit,
}

impl Role {
    fn tag(self) -> u64 {
        match self {
            Role::Brownian => 0,
            Role::Randomization => 1,
            Role::Audit => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedPolicy {
    pub master_seed: u64,
}

impl SeedPolicy {
    pub fn new(master_seed: u64) -> Self {
        Self { master_seed }
    }

    pub fn derive_substream(&self, path_index: u64, role: Role) -> Substream {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(path_index.wrapping_mul(4).wrapping_add(role.tag()));
        Substream { rng }
    }
}

/// An owned, independent random stream.
#[derive(Debug, Clone)]
pub struct Substream {
    rng: ChaCha8Rng,
}

impl Substream {
    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }
}

impl RngCore for Substream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }
    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }
    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

/// Brownian increments on the uniform grid with `2^level` steps over `[0, T]`.
/// Row `j` holds `w(t_{j+1}) − w(t_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BrownianGrid {
    level: u32,
    horizon: f64,
    noise_dim: usize,
    increments: Vec<f64>,
}

impl BrownianGrid {
    pub fn from_increments(level: u32, horizon: f64, noise_dim: usize, increments: Vec<f64>) -> Result<Self> {
        if noise_dim == 0 || horizon.is_nan() || horizon <= 0.0 {
            return Err(SdeError::InvalidParameter("grid needs m >= 1 and a positive horizon".into()));
        }
        let steps = 1usize
            .checked_shl(level)
            .ok_or_else(|| SdeError::InvalidParameter(format!("level {level} too large")))?;
        if increments.len() != steps * noise_dim {
            return Err(SdeError::DimensionMismatch(format!(
                "{} increments for a {steps} x {noise_dim} grid",
                increments.len()
            )));
        }
        Ok(Self { level, horizon, noise_dim, increments })
    }

    pub fn level(&self) -> u32 {
        self.level
    }
    pub fn horizon(&self) -> f64 {
        self.horizon
    }
    pub fn noise_dim(&self) -> usize {
        self.noise_dim
    }
    pub fn steps(&self) -> usize {
        1 << self.level
    }
    pub fn dt(&self) -> f64 {
        self.horizon / self.steps() as f64
    }
    pub fn increments(&self) -> &[f64] {
        &self.increments
    }
    pub fn increment(&self, j: usize) -> &[f64] {
        &self.increments[j * self.noise_dim..(j + 1) * self.noise_dim]
    }

    /// Merge adjacent pairs of steps until `target_level` is reached.
    ///
    /// Sums are always formed one level at a time, so coarsening telescopes
    /// bit-exactly.
    pub fn coarsen(&self, target_level: u32) -> Result<BrownianGrid> {
        if target_level > self.level {
            return Err(SdeError::Level { target: target_level, level: self.level });
        }
        let m = self.noise_dim;
        let mut inc = self.increments.clone();
        for _ in target_level..self.level {
            let half = inc.len() / (2 * m);
            let next: Vec<f64> = (0..half)
                .flat_map(|j| {
                    let (a, b) = (&inc[2 * j * m..(2 * j + 1) * m], &inc[(2 * j + 1) * m..(2 * j + 2) * m]);
                    a.iter().zip(b).map(|(x, y)| x + y).collect::<Vec<_>>()
                })
                .collect();
            inc = next;
        }
        Ok(BrownianGrid { level: target_level, horizon: self.horizon, noise_dim: m, increments: inc })
    }

    /// `w(T)`, summed pairwise in index order (identical to `coarsen(0)`).
    pub fn terminal_value(&self) -> Vec<f64> {
        self.coarsen(0).expect("level 0 is always reachable").increments
    }
}

pub fn sample_brownian_grid(level: u32, noise_dim: usize, horizon: f64, stream: &mut Substream) -> Result<BrownianGrid> {
    if noise_dim == 0 || horizon.is_nan() || horizon <= 0.0 {
        return Err(SdeError::InvalidParameter("grid needs m >= 1 and a positive horizon".into()));
    }
    if level > 40 {
        return Err(SdeError::InvalidParameter(format!("level {level} too large")));
    }
    let steps = 1usize << level;
    let scale = (horizon / steps as f64).sqrt();
    let increments = (0..steps * noise_dim).map(|_| scale * stream.standard_normal()).collect();
    BrownianGrid::from_increments(level, horizon, noise_dim, increments)
}

/// One uniform per step; the step `j` drift is evaluated at `t_j + dt·u_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomizationStream {
    uniforms: Vec<f64>,
}

impl RandomizationStream {
    pub fn from_uniforms(uniforms: Vec<f64>) -> Result<Self> {
        if uniforms.iter().any(|u| !(0.0..1.0).contains(u)) {
            return Err(SdeError::InvalidParameter("randomization draws must lie in [0, 1)".into()));
        }
        Ok(Self { uniforms })
    }

    pub fn zeros(n: usize) -> Self {
        Self { uniforms: vec![0.0; n] }
    }

    pub fn uniforms(&self) -> &[f64] {
        &self.uniforms
    }

    pub fn len(&self) -> usize {
        self.uniforms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.uniforms.is_empty()
    }
}

pub fn sample_randomization(n: usize, stream: &mut Substream) -> RandomizationStream {
    RandomizationStream { uniforms: (0..n).map(|_| stream.uniform()).collect() }
}

/// `t_left + dt·u`, kept strictly below `t_left + dt`.
pub fn randomized_time(t_left: f64, dt: f64, u: f64) -> f64 {
    let t = t_left + dt * u;
    let end = t_left + dt;
    if t >= end && end > 0.0 {
        f64::from_bits(end.to_bits() - 1)
    } else {
        t
    }
}

/// Per-step iterated Itô integrals `I[k][l] = ∫∫ dw^k dw^l`, row-major `m × m`.
pub fn iterated_integrals(dw: &[f64], dt: f64, structure: NoiseStructure) -> Result<Vec<f64>> {
    let mut out = vec![0.0; dw.len() * dw.len()];
    iterated_integrals_into(dw, dt, structure, &mut out)?;
    Ok(out)
}

pub(crate) fn iterated_integrals_into(dw: &[f64], dt: f64, structure: NoiseStructure, out: &mut [f64]) -> Result<()> {
    let m = dw.len();
    match structure {
        NoiseStructure::Scalar | NoiseStructure::Diagonal => {
            out.fill(0.0);
            for k in 0..m {
                out[k * m + k] = 0.5 * (dw[k] * dw[k] - dt);
            }
        }
        NoiseStructure::Commutative => {
            for k in 0..m {
                for l in 0..m {
                    let diag = if k == l { dt } else { 0.0 };
                    out[k * m + l] = 0.5 * (dw[k] * dw[l] - diag);
                }
            }
        }
        NoiseStructure::General => return Err(SdeError::UnsupportedNoise(structure.name())),
    }
    Ok(())
}
