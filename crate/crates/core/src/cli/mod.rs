//! `sde-rtm <command> [--config file.json] [--key value]...`
//!
//! Commands: `converge`, `simulate`, `moments`, `audit`, `blowup`. Each writes
//! `<output_dir>/<command>.csv`; `converge` also writes `rate.txt` and
//! `convergence.svg`.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 invalid configuration,
//! 3 noise structure not supported by the chosen scheme.

pub mod config;
pub mod report;
pub mod svg;

use std::path::{Path, PathBuf};

use thiserror::Error;

pub use config::ExperimentConfig;

use crate::analysis::{blowup_demo, fit_rate, moment_experiment, strong_error_experiment, RateFit};
use crate::error::SdeError;
use crate::noise::{sample_brownian_grid, sample_randomization, Role};
use crate::schemes::{audit_taming, integrate_path_observed, PathOutcome};
use report::{num, CsvReport};

pub const THREADS_ENV: &str = "SDE_RTM_THREADS";

pub const USAGE: &str = "\
usage: sde-rtm <converge|simulate|moments|audit|blowup> [--config <file.json>] [--<key> <value>]...

Any config key can be overridden, nested keys with dots:
  --problem fhn|gbm|rough_drift|cubic|zero   --problem.params.beta 0.25
  --scheme randomized_tamed_milstein         --levels 4..9
  --reference 14|exact  --p 2  --q 4  --paths 2000  --master_seed 2024
  --output_dir out      --print-config

Environment: SDE_RTM_THREADS caps the worker count (0 = all cores).";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage error: {0}")]
    Usage(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{0}")]
    UnsupportedNoise(String),
    #[error("i/o failure: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io(_) => 1,
            CliError::Usage(_) | CliError::Config(_) => 2,
            CliError::UnsupportedNoise(_) => 3,
        }
    }
}

impl From<SdeError> for CliError {
    fn from(e: SdeError) -> Self {
        match e {
            SdeError::UnsupportedNoise(_) => CliError::UnsupportedNoise(e.to_string()),
            other => CliError::Config(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Converge,
    Simulate,
    Moments,
    Audit,
    Blowup,
}

impl Command {
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "converge" => Command::Converge,
            "simulate" => Command::Simulate,
            "moments" => Command::Moments,
            "audit" => Command::Audit,
            "blowup" => Command::Blowup,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Command::Converge => "converge",
            Command::Simulate => "simulate",
            Command::Moments => "moments",
            Command::Audit => "audit",
            Command::Blowup => "blowup",
        }
    }
}

#[derive(Debug)]
pub struct Invocation {
    pub command: Command,
    pub config: ExperimentConfig,
    pub print_config: bool,
}

pub fn parse_args(argv: &[String]) -> Result<Invocation, CliError> {
    let (cmd, rest) = argv.split_first().ok_or_else(|| CliError::Usage("missing command".into()))?;
    let command = Command::parse(cmd).ok_or_else(|| CliError::Usage(format!("unknown command '{cmd}'")))?;
    let mut config_path: Option<PathBuf> = None;
    let mut overrides = Vec::new();
    let mut print_config = false;
    let mut it = rest.iter();
    while let Some(arg) = it.next() {
        let key = arg
            .strip_prefix("--")
            .ok_or_else(|| CliError::Usage(format!("unexpected argument '{arg}'")))?;
        if key == "print-config" {
            print_config = true;
            continue;
        }
        let (key, value) = match key.split_once('=') {
            Some((k, v)) => (k.to_string(), v.to_string()),
            None => {
                let v = it.next().ok_or_else(|| CliError::Usage(format!("--{key} needs a value")))?;
                (key.to_string(), v.clone())
            }
        };
        if key == "config" {
            config_path = Some(PathBuf::from(value));
        } else {
            overrides.push((key, value));
        }
    }
    let base = match &config_path {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    Ok(Invocation { command, config: base.with_overrides(&overrides)?, print_config })
}

/// What a command produced.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    pub fit: Option<RateFit>,
    pub summary: String,
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

/// Validates `config` and runs `command`, writing its files.
pub fn execute(command: Command, config: &ExperimentConfig) -> Result<Outcome, CliError> {
    let problem = config.validate()?;
    let dir = &config.output_dir;
    std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    let csv_path = dir.join(format!("{}.csv", command.name()));
    let policy = config.policy();
    let mut files = vec![csv_path.clone()];
    let mut fit = None;

    let (csv, summary) = match command {
        Command::Converge => {
            let table = strong_error_experiment(
                &problem,
                config.scheme,
                &config.levels,
                config.reference(),
                config.p,
                config.paths,
                policy,
            )?;
            let f = fit_rate(&table)?;
            write_file(&dir.join("rate.txt"), &report::rate_txt(&f))?;
            svg::render_svg(&table, &f, &dir.join("convergence.svg"))?;
            files.push(dir.join("rate.txt"));
            files.push(dir.join("convergence.svg"));
            fit = Some(f);
            let summary = format!(
                "{} on {}: slope {:.4} (r^2 {:.4}), predicted {:.2}, overflows {}",
                config.scheme.name(),
                problem.name(),
                f.slope,
                f.r_squared,
                problem.predicted_rate(),
                table.total_overflows()
            );
            (report::converge_csv(&table), summary)
        }
        Command::Moments => {
            let table = moment_experiment(&problem, config.scheme, config.q, &config.levels, config.paths, policy)?;
            let summary = format!(
                "sup E|x|^{} per level {:?}, max/min {:.4}, overflows {}",
                config.q,
                table.sup_per_level(),
                table.stability_ratio(),
                table.total_overflows()
            );
            (report::moments_csv(&table), summary)
        }
        Command::Audit => {
            let mut stream = policy.derive_substream(0, Role::Audit);
            let rep = audit_taming(&problem, &config.audit.n_values, config.audit.samples, config.audit.radius, &mut stream)?;
            let summary = format!(
                "taming audit on {}: max shrink {:.6}, max consistency {:.6}",
                problem.name(),
                rep.max_shrink(),
                rep.max_consistency()
            );
            (report::audit_csv(&rep), summary)
        }
        Command::Blowup => {
            let rep = blowup_demo(&config.blowup, &config.levels, config.paths, policy)?;
            let min_level = *config.levels.first().unwrap();
            let summary = format!(
                "untamed diverged: {}, tamed bounded: {}; untamed sup {:?}; tamed sup {:?}",
                rep.untamed_diverged(min_level),
                rep.tamed_bounded(),
                rep.untamed.sup_per_level(),
                rep.tamed.sup_per_level()
            );
            (report::blowup_csv(&rep), summary)
        }
        Command::Simulate => {
            let level = config.simulate.level.unwrap_or(*config.levels.last().unwrap());
            simulate(&problem, config, level)?
        }
    };
    write_file(&csv_path, &csv.render())?;
    Ok(Outcome { files, fit, summary })
}

fn simulate(problem: &crate::model::SdeProblem, config: &ExperimentConfig, level: u32) -> Result<(CsvReport, String), CliError> {
    let policy = config.policy();
    let mut csv = CsvReport::new(&report::simulate_header(problem.dim()));
    let dt = problem.horizon() / (1u64 << level) as f64;
    let mut overflowed = 0;
    for i in 0..config.simulate.paths {
        let grid = sample_brownian_grid(
            level,
            problem.noise_dim(),
            problem.horizon(),
            &mut policy.derive_substream(i as u64, Role::Brownian),
        )?;
        let uniforms = sample_randomization(1 << level, &mut policy.derive_substream(i as u64, Role::Randomization));
        let outcome = integrate_path_observed(problem, config.scheme, level, &grid, &uniforms, |j, x| {
            let mut f = vec![i.to_string(), j.to_string(), num(j as f64 * dt)];
            f.extend(x.iter().map(|v| num(*v)));
            csv.push(&f);
        })?;
        if matches!(outcome, PathOutcome::Overflow { .. }) {
            overflowed += 1;
        }
    }
    let summary = format!(
        "simulated {} paths of {} at level {level}, {overflowed} overflowed",
        config.simulate.paths,
        config.scheme.name()
    );
    Ok((csv, summary))
}

/// Entry point shared by the binary and the tests. Returns the exit status.
pub fn run_command(argv: &[String]) -> i32 {
    if argv.first().is_some_and(|a| a == "--help" || a == "-h" || a == "help") {
        println!("{USAGE}");
        return 0;
    }
    let result = parse_args(argv).and_then(|inv| {
        if inv.print_config {
            println!("{}", inv.config.to_json());
        }
        execute(inv.command, &inv.config)
    });
    match result {
        Ok(outcome) => {
            println!("{}", outcome.summary);
            for f in &outcome.files {
                println!("wrote {}", f.display());
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            if matches!(e, CliError::Usage(_)) {
                eprintln!("{USAGE}");
            }
            e.exit_code()
        }
    }
}

/// Worker count from `SDE_RTM_THREADS`; `None` means rayon's default.
pub fn threads_from_env() -> Option<usize> {
    std::env::var(THREADS_ENV).ok().and_then(|v| v.trim().parse::<usize>().ok()).filter(|&n| n > 0)
}
