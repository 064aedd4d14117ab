//! Explicit one-step integrators and the drift taming they share.
//!
//! All four kinds advance
//!
//! ```text
//! x' = x + b̃ dt + ρ(t_j, x) Δw + Σ_{k,l} Λ[·][k][l](t_j, x) I[k][l]
//! ```
//!
//! and differ only in how `b̃` is formed and whether the Milstein term is kept.
//! The randomized-tamed Milstein scheme evaluates the drift at
//! `t_j + dt·u_j`; diffusion and tensor stay at the left endpoint `t_j`.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SdeError};
use crate::model::{NoiseStructure, SdeProblem};
use crate::noise::{iterated_integrals_into, randomized_time, BrownianGrid, RandomizationStream, Substream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeKind {
    EulerMaruyama,
    TamedEuler,
    TamedMilstein,
    RandomizedTamedMilstein,
}

impl SchemeKind {
    pub const ALL: [SchemeKind; 4] = [
        SchemeKind::EulerMaruyama,
        SchemeKind::TamedEuler,
        SchemeKind::TamedMilstein,
        SchemeKind::RandomizedTamedMilstein,
    ];

    pub fn is_tamed(self) -> bool {
        !matches!(self, SchemeKind::EulerMaruyama)
    }

    pub fn has_milstein_correction(self) -> bool {
        matches!(self, SchemeKind::TamedMilstein | SchemeKind::RandomizedTamedMilstein)
    }

    pub fn is_randomized(self) -> bool {
        matches!(self, SchemeKind::RandomizedTamedMilstein)
    }

    pub fn name(self) -> &'static str {
        match self {
            SchemeKind::EulerMaruyama => "euler_maruyama",
            SchemeKind::TamedEuler => "tamed_euler",
            SchemeKind::TamedMilstein => "tamed_milstein",
            SchemeKind::RandomizedTamedMilstein => "randomized_tamed_milstein",
        }
    }

    /// Rejects noise structures the scheme cannot handle without Lévy areas.
    pub fn check_support(self, structure: NoiseStructure) -> Result<()> {
        if self.has_milstein_correction() && structure == NoiseStructure::General {
            Err(SdeError::UnsupportedNoise(structure.name()))
        } else {
            Ok(())
        }
    }
}

impl std::str::FromStr for SchemeKind {
    type Err = SdeError;

    fn from_str(s: &str) -> Result<Self> {
        SchemeKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| SdeError::InvalidParameter(format!("unknown scheme '{s}'")))
    }
}

/// Inputs of a single step `[t_left, t_left + dt]`.
#[derive(Debug, Clone, Copy)]
pub struct StepContext<'a> {
    pub t_left: f64,
    pub dt: f64,
    pub dw: &'a [f64],
    /// Row-major `m × m` iterated integrals matching `dw`.
    pub iterated: &'a [f64],
    /// Uniform draw locating the drift evaluation time inside the step.
    pub u: f64,
    /// Total number of steps; the taming parameter.
    pub n: u64,
}

/// `|x|^{2ξ}` from the squared norm.
fn norm_pow(norm_sq: f64, xi: f64) -> f64 {
    if xi.fract() == 0.0 && xi <= 64.0 {
        norm_sq.powi(xi as i32)
    } else {
        norm_sq.powf(xi)
    }
}

pub(crate) fn taming_denominator(norm_sq: f64, n: u64, xi: f64) -> f64 {
    1.0 + norm_pow(norm_sq, xi) / n as f64
}

/// `μ / (1 + n^{-1} |x|^{2ξ})` with the Euclidean norm of `x`.
pub fn tame_drift(mu: &[f64], x: &[f64], n: u64, xi: f64) -> Vec<f64> {
    let denom = taming_denominator(x.iter().map(|v| v * v).sum(), n, xi);
    mu.iter().map(|m| m / denom).collect()
}

/// Scratch buffers for allocation-free stepping.
#[derive(Debug, Clone)]
pub(crate) struct Workspace {
    tamed: Vec<f64>,
    untamed: Vec<f64>,
    diffusion: Vec<f64>,
    tensor: Vec<f64>,
    pub(crate) iterated: Vec<f64>,
}

impl Workspace {
    pub(crate) fn new(problem: &SdeProblem) -> Self {
        let (d, m) = (problem.dim(), problem.noise_dim());
        Self {
            tamed: vec![0.0; d],
            untamed: vec![0.0; d],
            diffusion: vec![0.0; d * m],
            tensor: vec![0.0; d * m * m],
            iterated: vec![0.0; m * m],
        }
    }
}

pub(crate) fn step_into(
    problem: &SdeProblem,
    kind: SchemeKind,
    x: &[f64],
    ctx: &StepContext<'_>,
    ws: &mut Workspace,
    out: &mut [f64],
) {
    let (d, m) = (problem.dim(), problem.noise_dim());
    let coeffs = problem.coefficients();
    let t_drift = if kind.is_randomized() { randomized_time(ctx.t_left, ctx.dt, ctx.u) } else { ctx.t_left };

    coeffs.drift_parts(t_drift, x, &mut ws.tamed, &mut ws.untamed);
    let denom = if kind.is_tamed() { taming_denominator(coeffs.taming_norm_sq(x), ctx.n, problem.xi()) } else { 1.0 };
    coeffs.diffusion(ctx.t_left, x, &mut ws.diffusion);
    let milstein = kind.has_milstein_correction();
    if milstein {
        coeffs.milstein_tensor(ctx.t_left, x, &mut ws.tensor);
    }

    for i in 0..d {
        let drift = ws.tamed[i] / denom + ws.untamed[i];
        let mut noise = 0.0;
        for k in 0..m {
            noise += ws.diffusion[i * m + k] * ctx.dw[k];
        }
        let mut correction = 0.0;
        if milstein {
            for k in 0..m {
                for l in 0..m {
                    correction += ws.tensor[(i * m + k) * m + l] * ctx.iterated[k * m + l];
                }
            }
        }
        out[i] = x[i] + drift * ctx.dt + noise + correction;
    }
}

/// One step of `kind` from `x`.
pub fn step(problem: &SdeProblem, kind: SchemeKind, x: &[f64], ctx: &StepContext<'_>) -> Result<Vec<f64>> {
    let (d, m) = (problem.dim(), problem.noise_dim());
    if x.len() != d || ctx.dw.len() != m || ctx.iterated.len() != m * m {
        return Err(SdeError::DimensionMismatch(format!(
            "step expects x in R^{d}, dw in R^{m} and I in R^{m}x{m}"
        )));
    }
    if ctx.n == 0 || ctx.dt.is_nan() || ctx.dt <= 0.0 {
        return Err(SdeError::InvalidParameter("step needs n >= 1 and dt > 0".into()));
    }
    kind.check_support(problem.noise_structure())?;
    let mut ws = Workspace::new(problem);
    let mut out = vec![0.0; d];
    step_into(problem, kind, x, ctx, &mut ws, &mut out);
    Ok(out)
}

/// Terminal state of a path, or the step at which it left the finite range.
#[derive(Debug, Clone, PartialEq)]
pub enum PathOutcome {
    Finite(Vec<f64>),
    /// `step` is the 1-based index of the first step producing a non-finite state.
    Overflow { step: usize },
}

impl PathOutcome {
    pub fn terminal(&self) -> Option<&[f64]> {
        match self {
            PathOutcome::Finite(x) => Some(x),
            PathOutcome::Overflow { .. } => None,
        }
    }
}

fn check_path_inputs(
    problem: &SdeProblem,
    kind: SchemeKind,
    level: u32,
    brownian: &BrownianGrid,
    uniforms: &RandomizationStream,
) -> Result<()> {
    if brownian.noise_dim() != problem.noise_dim() {
        return Err(SdeError::DimensionMismatch(format!(
            "Brownian grid has m = {}, problem has m = {}",
            brownian.noise_dim(),
            problem.noise_dim()
        )));
    }
    if brownian.level() < level {
        return Err(SdeError::Level { target: level, level: brownian.level() });
    }
    if (brownian.horizon() - problem.horizon()).abs() > 0.0 {
        return Err(SdeError::DimensionMismatch("grid horizon differs from problem horizon".into()));
    }
    if kind.is_randomized() && uniforms.len() < (1usize << level) {
        return Err(SdeError::DimensionMismatch(format!(
            "{} randomization draws for {} steps",
            uniforms.len(),
            1usize << level
        )));
    }
    kind.check_support(problem.noise_structure())
}

/// Runs `kind` over all `2^level` steps on the coarsened Brownian path.
///
/// `observe(j, x_j)` is called for `j = 0` (the initial state) and after each
/// step while the state stays finite.
pub fn integrate_path_observed(
    problem: &SdeProblem,
    kind: SchemeKind,
    level: u32,
    brownian: &BrownianGrid,
    uniforms: &RandomizationStream,
    mut observe: impl FnMut(usize, &[f64]),
) -> Result<PathOutcome> {
    check_path_inputs(problem, kind, level, brownian, uniforms)?;
    let grid = brownian.coarsen(level)?;
    let steps = grid.steps();
    let dt = grid.dt();
    let structure = problem.noise_structure();
    let milstein = kind.has_milstein_correction();

    let mut ws = Workspace::new(problem);
    let mut iterated = std::mem::take(&mut ws.iterated);
    let mut x = problem.initial_state().to_vec();
    let mut next = vec![0.0; x.len()];
    observe(0, &x);

    for j in 0..steps {
        let dw = grid.increment(j);
        if milstein {
            iterated_integrals_into(dw, dt, structure, &mut iterated)?;
        }
        let ctx = StepContext {
            t_left: j as f64 * dt,
            dt,
            dw,
            iterated: &iterated,
            u: if kind.is_randomized() { uniforms.uniforms()[j] } else { 0.0 },
            n: steps as u64,
        };
        step_into(problem, kind, &x, &ctx, &mut ws, &mut next);
        if next.iter().any(|v| !v.is_finite()) {
            return Ok(PathOutcome::Overflow { step: j + 1 });
        }
        std::mem::swap(&mut x, &mut next);
        observe(j + 1, &x);
    }
    Ok(PathOutcome::Finite(x))
}

pub fn integrate_path(
    problem: &SdeProblem,
    kind: SchemeKind,
    level: u32,
    brownian: &BrownianGrid,
    uniforms: &RandomizationStream,
) -> Result<PathOutcome> {
    integrate_path_observed(problem, kind, level, brownian, uniforms, |_, _| {})
}

/// Per-`n` summary of the taming audit.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditRow {
    pub n: u64,
    /// max |μ_tm| / |μ|; never above 1.
    pub max_shrink: f64,
    /// max |μ_tm| / (√n (1 + |x|)), the empirical growth constant.
    pub growth_constant: f64,
    /// max n |μ − μ_tm| / (|μ| |x|^{2ξ}); never above 1.
    pub max_consistency: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditReport {
    pub rows: Vec<AuditRow>,
}

impl AuditReport {
    pub fn max_shrink(&self) -> f64 {
        self.rows.iter().map(|r| r.max_shrink).fold(0.0, f64::max)
    }
    pub fn max_consistency(&self) -> f64 {
        self.rows.iter().map(|r| r.max_consistency).fold(0.0, f64::max)
    }
}

/// Samples `(t, x)` uniformly from `[0, T] × ball(radius)` and measures the
/// whole-vector taming `tame_drift(μ(t, x), x, n, ξ)` against its bounds.
pub fn audit_taming(
    problem: &SdeProblem,
    n_values: &[u64],
    sample_count: usize,
    radius: f64,
    stream: &mut Substream,
) -> Result<AuditReport> {
    if sample_count == 0 || radius.is_nan() || radius <= 0.0 {
        return Err(SdeError::InvalidParameter("audit needs sample_count >= 1 and radius > 0".into()));
    }
    if n_values.contains(&0) {
        return Err(SdeError::InvalidParameter("taming parameter n must be >= 1".into()));
    }
    let d = problem.dim();
    let xi = problem.xi();
    let samples: Vec<(f64, Vec<f64>)> = (0..sample_count)
        .map(|_| {
            let t = problem.horizon() * stream.uniform();
            let dir: Vec<f64> = (0..d).map(|_| stream.standard_normal()).collect();
            let len = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
            let r = radius * stream.uniform().powf(1.0 / d as f64);
            let x = if len > 0.0 { dir.iter().map(|v| r * v / len).collect() } else { vec![0.0; d] };
            (t, x)
        })
        .collect();

    let mut rows = Vec::with_capacity(n_values.len());
    for &n in n_values {
        let mut row = AuditRow { n, max_shrink: 0.0, growth_constant: 0.0, max_consistency: 0.0, samples: sample_count };
        for (t, x) in &samples {
            let mu = problem.eval_drift(*t, x)?;
            let tamed = tame_drift(&mu, x, n, xi);
            let mu_norm = euclid(&mu);
            let tamed_norm = euclid(&tamed);
            let x_norm = euclid(x);
            if mu_norm > 0.0 {
                row.max_shrink = row.max_shrink.max(tamed_norm / mu_norm);
                let growth = norm_pow(x_norm * x_norm, xi);
                if growth > 0.0 {
                    let diff: Vec<f64> = mu.iter().zip(&tamed).map(|(a, b)| a - b).collect();
                    row.max_consistency = row.max_consistency.max(n as f64 * euclid(&diff) / (mu_norm * growth));
                }
            }
            row.growth_constant = row.growth_constant.max(tamed_norm / ((n as f64).sqrt() * (1.0 + x_norm)));
        }
        rows.push(row);
    }
    Ok(AuditReport { rows })
}

pub(crate) fn euclid(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}
