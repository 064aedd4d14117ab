//! Monte-Carlo strong-error and moment experiments.
//!
//! Each path `i` draws one Brownian grid at the finest level in play from
//! substream `(i, Brownian)`; coarser levels are obtained by exact
//! coarsening, so every level sees the same Brownian path. Randomization
//! draws come from `(i, Randomization)` and are taken in a fixed order:
//! reference first, then the coarse levels in the order given.
//!
//! Paths run in parallel in fixed blocks of [`BLOCK`] paths. Partial sums are
//! formed in path order inside a block and blocks are combined in order, so
//! every aggregate is bit-identical whatever the worker count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SdeError};
use crate::model::{make_builtin, Builtin, CubicParams, SdeProblem};
use crate::noise::{sample_brownian_grid, sample_randomization, RandomizationStream, Role, SeedPolicy};
use crate::schemes::{euclid, integrate_path, integrate_path_observed, PathOutcome, SchemeKind};

pub const BLOCK: usize = 64;

/// Surrogate truth for the strong error.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reference {
    /// Closed-form terminal value from the terminal Brownian value.
    Exact,
    /// The same scheme on a finer dyadic level.
    Level(u32),
}

impl std::fmt::Display for Reference {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Reference::Exact => write!(f, "exact"),
            Reference::Level(l) => write!(f, "level {l}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorRow {
    pub level: u32,
    pub n: u64,
    pub dt: f64,
    /// `(1/M Σ |x_T − x_T^n|^p)^{1/p}` over the `paths` non-overflowing paths.
    pub lp_error: f64,
    pub paths: usize,
    pub p: f64,
    /// Delta-method standard error of `lp_error`.
    pub stderr: f64,
    pub overflows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorTable {
    pub reference: Reference,
    pub rows: Vec<ErrorRow>,
    /// Paths dropped because the reference itself overflowed.
    pub reference_overflows: usize,
}

impl ErrorTable {
    pub fn total_overflows(&self) -> usize {
        self.reference_overflows + self.rows.iter().map(|r| r.overflows).sum::<usize>()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Knobs that only tests need.
#[derive(Debug, Clone, Copy, Default)]
pub struct ExperimentOptions {
    /// Coarse levels reuse the reference's randomization draws instead of
    /// fresh ones, and a coarse level may equal the reference level.
    pub share_uniforms: bool,
    /// Walk the paths of each block in reverse order.
    pub reverse_paths: bool,
}

enum PathErrors {
    ReferenceOverflow,
    /// `|Δ|^p` per level, `None` when that level overflowed.
    Levels(Vec<Option<f64>>),
}

#[derive(Clone, Default)]
struct LevelSums {
    sum: f64,
    sum_sq: f64,
    count: usize,
    overflows: usize,
}

pub fn strong_error_experiment(
    problem: &SdeProblem,
    kind: SchemeKind,
    levels: &[u32],
    reference: Reference,
    p: f64,
    paths: usize,
    policy: SeedPolicy,
) -> Result<ErrorTable> {
    strong_error_experiment_with(problem, kind, levels, reference, p, paths, policy, ExperimentOptions::default())
}

#[allow(clippy::too_many_arguments)]
pub fn strong_error_experiment_with(
    problem: &SdeProblem,
    kind: SchemeKind,
    levels: &[u32],
    reference: Reference,
    p: f64,
    paths: usize,
    policy: SeedPolicy,
    options: ExperimentOptions,
) -> Result<ErrorTable> {
    if levels.is_empty() {
        return Err(SdeError::InvalidParameter("at least one level is required".into()));
    }
    if !(p >= 1.0 && p.is_finite()) {
        return Err(SdeError::InvalidParameter(format!("p must be >= 1, got {p}")));
    }
    if paths == 0 {
        return Err(SdeError::InvalidParameter("paths must be >= 1".into()));
    }
    kind.check_support(problem.noise_structure())?;
    let max_level = *levels.iter().max().unwrap();
    let grid_level = match reference {
        Reference::Exact => {
            if !problem.has_exact_solution() {
                return Err(SdeError::InvalidParameter(format!(
                    "problem '{}' has no exact solution",
                    problem.name()
                )));
            }
            max_level
        }
        Reference::Level(r) => {
            let ok = if options.share_uniforms { max_level <= r } else { max_level < r };
            if !ok {
                return Err(SdeError::InvalidParameter(format!(
                    "every level must be below the reference level {r}"
                )));
            }
            r
        }
    };

    let run_path = |i: usize| -> Result<PathErrors> {
        let mut bstream = policy.derive_substream(i as u64, Role::Brownian);
        let mut ustream = policy.derive_substream(i as u64, Role::Randomization);
        let grid = sample_brownian_grid(grid_level, problem.noise_dim(), problem.horizon(), &mut bstream)?;
        let (truth, ref_uniforms) = match reference {
            Reference::Exact => (problem.exact_terminal(&grid.terminal_value()).expect("checked above"), None),
            Reference::Level(r) => {
                let u = sample_randomization(1 << r, &mut ustream);
                match integrate_path(problem, kind, r, &grid, &u)? {
                    PathOutcome::Finite(x) => (x, Some(u)),
                    PathOutcome::Overflow { .. } => return Ok(PathErrors::ReferenceOverflow),
                }
            }
        };
        let mut out = Vec::with_capacity(levels.len());
        for &level in levels {
            let uniforms = match (&ref_uniforms, options.share_uniforms) {
                (Some(u), true) => u.clone(),
                _ => sample_randomization(1 << level, &mut ustream),
            };
            let outcome = integrate_path(problem, kind, level, &grid, &uniforms)?;
            out.push(outcome.terminal().map(|x| {
                let diff: Vec<f64> = x.iter().zip(&truth).map(|(a, b)| a - b).collect();
                euclid(&diff).powf(p)
            }));
        }
        Ok(PathErrors::Levels(out))
    };

    let blocks: Vec<(Vec<LevelSums>, usize)> = (0..paths.div_ceil(BLOCK))
        .into_par_iter()
        .map(|b| {
            let mut sums = vec![LevelSums::default(); levels.len()];
            let mut ref_overflows = 0;
            let range = b * BLOCK..((b + 1) * BLOCK).min(paths);
            let start = range.start;
            let indices: Vec<usize> = if options.reverse_paths { range.rev().collect() } else { range.collect() };
            let mut results: Vec<Option<PathErrors>> = (0..indices.len()).map(|_| None).collect();
            for i in indices {
                results[i - start] = Some(run_path(i)?);
            }
            // accumulate in path order whatever order the paths ran in
            for r in results.into_iter().flatten() {
                match r {
                    PathErrors::ReferenceOverflow => ref_overflows += 1,
                    PathErrors::Levels(errs) => {
                        for (s, e) in sums.iter_mut().zip(errs) {
                            match e {
                                Some(v) => {
                                    s.sum += v;
                                    s.sum_sq += v * v;
                                    s.count += 1;
                                }
                                None => s.overflows += 1,
                            }
                        }
                    }
                }
            }
            Ok((sums, ref_overflows))
        })
        .collect::<Result<_>>()?;

    let mut totals = vec![LevelSums::default(); levels.len()];
    let mut reference_overflows = 0;
    for (sums, ro) in blocks {
        reference_overflows += ro;
        for (t, s) in totals.iter_mut().zip(sums) {
            t.sum += s.sum;
            t.sum_sq += s.sum_sq;
            t.count += s.count;
            t.overflows += s.overflows;
        }
    }

    let mut rows: Vec<ErrorRow> = levels
        .iter()
        .zip(totals)
        .map(|(&level, s)| {
            let n = 1u64 << level;
            let (lp_error, stderr) = if s.count == 0 {
                (f64::NAN, f64::NAN)
            } else {
                let m = s.count as f64;
                let mean = s.sum / m;
                let var = if s.count > 1 { ((s.sum_sq - m * mean * mean) / (m - 1.0)).max(0.0) } else { 0.0 };
                let lp = mean.powf(1.0 / p);
                let se_mean = (var / m).sqrt();
                let se = if mean > 0.0 { lp / (p * mean) * se_mean } else { 0.0 };
                (lp, se)
            };
            ErrorRow {
                level,
                n,
                dt: problem.horizon() / n as f64,
                lp_error,
                paths: s.count,
                p,
                stderr,
                overflows: s.overflows,
            }
        })
        .collect();
    rows.sort_by_key(|r| r.level);
    Ok(ErrorTable { reference, rows, reference_overflows })
}

/// Ordinary least squares of `ln y` on `ln x`.
pub fn fit_log_log(points: &[(f64, f64)]) -> Result<RateFit> {
    if points.len() < 2 {
        return Err(SdeError::Degenerate(format!("need at least 2 points, got {}", points.len())));
    }
    if points.iter().any(|&(x, y)| !(x > 0.0 && y > 0.0 && x.is_finite() && y.is_finite())) {
        return Err(SdeError::Degenerate("log-log fit needs strictly positive finite values".into()));
    }
    let logs: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    let k = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / k;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = logs.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(SdeError::Degenerate("all step sizes are equal".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 { 1.0 } else { (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0) };
    Ok(RateFit { slope, intercept, r_squared })
}

/// Slope of `ln lp_error` against `ln dt`.
pub fn fit_rate(table: &ErrorTable) -> Result<RateFit> {
    let pts: Vec<(f64, f64)> = table.rows.iter().map(|r| (r.dt, r.lp_error)).collect();
    fit_log_log(&pts)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentRow {
    pub level: u32,
    pub t_index: usize,
    /// `(1/M) Σ |x_{t_j}|^q` over the non-overflowing paths.
    pub moment: f64,
    pub overflows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentTable {
    pub q: f64,
    pub rows: Vec<MomentRow>,
    pub overflows: Vec<(u32, usize)>,
}

impl MomentTable {
    /// `sup_j E|x_{t_j}|^q` per level, in level order. Levels where every path
    /// overflowed report infinity.
    pub fn sup_per_level(&self) -> Vec<(u32, f64)> {
        self.overflows
            .iter()
            .map(|&(level, _)| {
                let sup = self
                    .rows
                    .iter()
                    .filter(|r| r.level == level)
                    .map(|r| r.moment)
                    .fold(f64::NEG_INFINITY, |a, b| if b.is_nan() || a.is_nan() { f64::NAN } else { a.max(b) });
                (level, if sup == f64::NEG_INFINITY { f64::INFINITY } else { sup })
            })
            .collect()
    }

    /// max over levels / min over levels of the sup-moments.
    pub fn stability_ratio(&self) -> f64 {
        let sups: Vec<f64> = self.sup_per_level().into_iter().map(|s| s.1).collect();
        let max = sups.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min = sups.iter().cloned().fold(f64::INFINITY, f64::min);
        max / min
    }

    pub fn total_overflows(&self) -> usize {
        self.overflows.iter().map(|o| o.1).sum()
    }
}

/// Empirical `E|x_{t_j}^n|^q` at every grid point of every level.
pub fn moment_experiment(
    problem: &SdeProblem,
    kind: SchemeKind,
    q: f64,
    levels: &[u32],
    paths: usize,
    policy: SeedPolicy,
) -> Result<MomentTable> {
    if !(q >= 2.0 && q.is_finite()) {
        return Err(SdeError::InvalidParameter(format!("q must be >= 2, got {q}")));
    }
    if levels.is_empty() || paths == 0 {
        return Err(SdeError::InvalidParameter("need at least one level and one path".into()));
    }
    kind.check_support(problem.noise_structure())?;
    let max_level = *levels.iter().max().unwrap();

    // per level: (sums over grid points, path count, overflow count)
    type Acc = Vec<(Vec<f64>, usize, usize)>;
    let empty = || -> Acc { levels.iter().map(|&l| (vec![0.0; (1usize << l) + 1], 0, 0)).collect() };

    let blocks: Vec<Acc> = (0..paths.div_ceil(BLOCK))
        .into_par_iter()
        .map(|b| {
            let mut acc = empty();
            let mut scratch: Vec<f64> = Vec::new();
            for i in b * BLOCK..((b + 1) * BLOCK).min(paths) {
                let mut bstream = policy.derive_substream(i as u64, Role::Brownian);
                let mut ustream = policy.derive_substream(i as u64, Role::Randomization);
                let grid = sample_brownian_grid(max_level, problem.noise_dim(), problem.horizon(), &mut bstream)?;
                for (li, &level) in levels.iter().enumerate() {
                    let uniforms = sample_randomization(1 << level, &mut ustream);
                    scratch.clear();
                    scratch.resize((1usize << level) + 1, 0.0);
                    let outcome = integrate_path_observed(problem, kind, level, &grid, &uniforms, |j, x| {
                        scratch[j] = euclid(x).powf(q);
                    })?;
                    let slot = &mut acc[li];
                    match outcome {
                        PathOutcome::Finite(_) => {
                            for (s, v) in slot.0.iter_mut().zip(&scratch) {
                                *s += v;
                            }
                            slot.1 += 1;
                        }
                        PathOutcome::Overflow { .. } => slot.2 += 1,
                    }
                }
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;

    let mut total = empty();
    for acc in blocks {
        for (t, a) in total.iter_mut().zip(acc) {
            for (s, v) in t.0.iter_mut().zip(&a.0) {
                *s += v;
            }
            t.1 += a.1;
            t.2 += a.2;
        }
    }

    let mut rows = Vec::new();
    let mut overflows = Vec::new();
    for (&level, (sums, count, over)) in levels.iter().zip(total) {
        overflows.push((level, over));
        if count == 0 {
            continue;
        }
        for (t_index, s) in sums.into_iter().enumerate() {
            rows.push(MomentRow { level, t_index, moment: s / count as f64, overflows: over });
        }
    }
    Ok(MomentTable { q, rows, overflows })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlowupReport {
    pub untamed: MomentTable,
    pub tamed: MomentTable,
}

impl BlowupReport {
    /// Untamed Euler overflowed or exceeded `E|x|² > 10^6` at some level `>= min_level`.
    pub fn untamed_diverged(&self, min_level: u32) -> bool {
        let overflowed = self.untamed.overflows.iter().any(|&(l, c)| l >= min_level && c > 0);
        let huge = self.untamed.sup_per_level().iter().any(|&(l, s)| l >= min_level && (s.is_nan() || s > 1e6));
        overflowed || huge
    }

    /// Tamed Euler stayed finite with every second moment at most `10^2`.
    pub fn tamed_bounded(&self) -> bool {
        self.tamed.total_overflows() == 0 && self.tamed.rows.iter().all(|r| r.moment <= 100.0)
    }
}

/// Second moments of untamed and tamed Euler on `dx = (x − x³) dt + s dw`.
pub fn blowup_demo(params: &CubicParams, levels: &[u32], paths: usize, policy: SeedPolicy) -> Result<BlowupReport> {
    let problem = make_builtin(&Builtin::Cubic(params.clone()))?;
    Ok(BlowupReport {
        untamed: moment_experiment(&problem, SchemeKind::EulerMaruyama, 2.0, levels, paths, policy)?,
        tamed: moment_experiment(&problem, SchemeKind::TamedEuler, 2.0, levels, paths, policy)?,
    })
}

/// Terminal values of one path for every scheme on a shared Brownian path,
/// handy for quick comparisons.
pub fn shared_path_terminals(
    problem: &SdeProblem,
    level: u32,
    path_index: u64,
    policy: SeedPolicy,
) -> Result<Vec<(SchemeKind, PathOutcome)>> {
    let grid = sample_brownian_grid(
        level,
        problem.noise_dim(),
        problem.horizon(),
        &mut policy.derive_substream(path_index, Role::Brownian),
    )?;
    let uniforms: RandomizationStream =
        sample_randomization(1 << level, &mut policy.derive_substream(path_index, Role::Randomization));
    SchemeKind::ALL
        .into_iter()
        .filter(|k| k.check_support(problem.noise_structure()).is_ok())
        .map(|k| integrate_path(problem, k, level, &grid, &uniforms).map(|o| (k, o)))
        .collect()
}
