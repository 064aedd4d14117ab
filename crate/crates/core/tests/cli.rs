use std::path::Path;
use std::process::Command;

use sde_rtm::analysis::{fit_rate, strong_error_experiment, ErrorRow, ErrorTable, RateFit, Reference};
use sde_rtm::cli::svg::render_svg;
use sde_rtm::cli::{execute, parse_args, run_command, Command as Cmd, ExperimentConfig};
use sde_rtm::model::{make_builtin, Builtin};
use sde_rtm::{SchemeKind, SeedPolicy};

fn args(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

fn read(p: &Path) -> String {
    std::fs::read_to_string(p).unwrap()
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sde-rtm"))
}

fn small_gbm(dir: &Path) -> Vec<String> {
    args(&[
        "--problem", "gbm", "--scheme", "tamed_milstein", "--reference", "exact", "--levels", "3..6", "--paths", "64",
        "--output_dir", dir.to_str().unwrap(),
    ])
}

#[test]
fn converge_writes_csv_rate_and_svg() {
    let dir = tempfile::tempdir().unwrap();
    let mut a = args(&["converge"]);
    a.extend(small_gbm(dir.path()));
    assert_eq!(run_command(&a), 0);

    let csv = read(&dir.path().join("converge.csv"));
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "level,n,dt,lp_error,paths,p,stderr");
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 4);
    assert_eq!(rows[0][..2], ["3", "8"]);
    assert_eq!(rows[0][2], "1.2500000000000000e-1");
    assert!(!csv.contains("\r"));

    let rate = read(&dir.path().join("rate.txt"));
    let kv: Vec<(&str, &str)> = rate.lines().map(|l| l.split_once('=').unwrap()).collect();
    assert_eq!(kv.iter().map(|p| p.0).collect::<Vec<_>>(), ["slope", "intercept", "r_squared"]);

    let svg = read(&dir.path().join("convergence.svg"));
    assert!(svg.starts_with("<?xml"));
    assert!(svg.trim_end().ends_with("</svg>"));
    assert_eq!(svg.matches("class=\"point\"").count(), 4);
    assert_eq!(svg.matches("class=\"fit\"").count(), 1);
    assert_eq!(svg.matches("class=\"guide\"").count(), 1);
    assert!(svg.contains(&format!(">slope={}<", kv[0].1)));
}

#[test]
fn svg_point_count_and_empty_table() {
    let dir = tempfile::tempdir().unwrap();
    let row = |level: u32, e: f64| ErrorRow {
        level,
        n: 1 << level,
        dt: 1.0 / (1u64 << level) as f64,
        lp_error: e,
        paths: 1,
        p: 2.0,
        stderr: 0.0,
        overflows: 0,
    };
    let table = ErrorTable { reference: Reference::Exact, reference_overflows: 0, rows: vec![row(1, 0.5), row(2, 0.25), row(3, 0.125)] };
    let fit = fit_rate(&table).unwrap();
    let path = dir.path().join("plot.svg");
    render_svg(&table, &fit, &path).unwrap();
    assert_eq!(read(&path).matches("<circle").count(), 3);

    let empty = ErrorTable { rows: vec![], ..table };
    let path = dir.path().join("empty.svg");
    assert!(render_svg(&empty, &RateFit { slope: 1.0, intercept: 0.0, r_squared: 1.0 }, &path).is_err());
    assert!(!path.exists());
}

#[test]
fn simulate_zero_problem_stays_at_initial_state() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("zero.json");
    std::fs::write(
        &cfg,
        r#"{"problem":{"id":"zero","params":{"initial_state":[1.5,-2.0],"noise_dim":2}},"levels":[5],"reference":6,"simulate":{"paths":3}}"#,
    )
    .unwrap();
    let out = dir.path().join("out");
    for scheme in SchemeKind::ALL {
        let a = args(&["simulate", "--config", cfg.to_str().unwrap(), "--output_dir", out.to_str().unwrap(), "--scheme", scheme.name()]);
        assert_eq!(run_command(&a), 0);
        let csv = read(&out.join("simulate.csv"));
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "path,t_index,t,x0,x1");
        let rows: Vec<&str> = lines.collect();
        assert_eq!(rows.len(), 3 * 33);
        for r in rows {
            let f: Vec<&str> = r.split(',').collect();
            assert_eq!(f[3..], ["1.5000000000000000e0", "-2.0000000000000000e0"]);
        }
    }
}

#[test]
fn other_commands_emit_stable_headers() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let cases = [
        ("moments", "level,t_index,moment_q,overflows"),
        ("audit", "n,max_shrink,growth_constant,max_consistency,samples"),
        ("blowup", "scheme,level,t_index,moment_q,overflows"),
    ];
    for (cmd, header) in cases {
        let a = args(&[cmd, "--levels", "3,4", "--paths", "20", "--audit.samples", "50", "--output_dir", d]);
        assert_eq!(run_command(&a), 0, "{cmd}");
        let csv = read(&dir.path().join(format!("{cmd}.csv")));
        assert_eq!(csv.lines().next().unwrap(), header);
        assert!(csv.lines().count() > 1);
    }
    let moments = read(&dir.path().join("moments.csv"));
    assert_eq!(moments.lines().count(), 1 + 9 + 17);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let status = |a: &[&str]| bin().args(a).output().unwrap().status.code().unwrap();

    assert_eq!(status(&["converge", "--levels", "[6,5]", "--output_dir", d]), 2);
    assert_eq!(status(&["converge", "--reference", "5", "--output_dir", d]), 2);
    assert_eq!(status(&["frobnicate"]), 2);
    assert_eq!(status(&["converge", "--config", "/nonexistent/cfg.json"]), 1);

    let cfg = dir.path().join("general.json");
    std::fs::write(&cfg, r#"{"problem":{"id":"zero","params":{"initial_state":[1.0],"noise_dim":2,"structure":"general"}},"scheme":"tamed_milstein","levels":[2],"reference":3,"paths":2}"#).unwrap();
    assert_eq!(status(&["converge", "--config", cfg.to_str().unwrap(), "--output_dir", d]), 3);

    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    let under_file = blocker.join("sub");
    assert_eq!(status(&["audit", "--audit.samples", "10", "--output_dir", under_file.to_str().unwrap()]), 1);

    assert_eq!(status(&["--help"]), 0);
}

#[test]
fn binary_output_is_byte_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for threads in ["1", "4", "0"] {
        let out = dir.path().join(format!("t{threads}"));
        let status = bin()
            .env("SDE_RTM_THREADS", threads)
            .args(["converge", "--levels", "3..5", "--reference", "8", "--paths", "150", "--output_dir", out.to_str().unwrap()])
            .status()
            .unwrap();
        assert!(status.success());
        outputs.push(["converge.csv", "rate.txt", "convergence.svg"].map(|f| std::fs::read(out.join(f)).unwrap()));
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(outputs[0], outputs[2]);
}

#[test]
fn config_round_trip_reproduces_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("a");
    let mut a = args(&["converge"]);
    a.extend(small_gbm(&first));
    let inv = parse_args(&a).unwrap();
    execute(Cmd::Converge, &inv.config).unwrap();

    let saved = dir.path().join("saved.json");
    std::fs::write(&saved, inv.config.to_json()).unwrap();
    let mut reloaded = ExperimentConfig::load(&saved).unwrap();
    assert_eq!(reloaded, inv.config);
    reloaded.output_dir = dir.path().join("b");
    execute(Cmd::Converge, &reloaded).unwrap();
    for f in ["converge.csv", "rate.txt", "convergence.svg"] {
        assert_eq!(read(&first.join(f)), read(&reloaded.output_dir.join(f)), "{f}");
    }
}

#[test]
fn cli_matches_library() {
    let dir = tempfile::tempdir().unwrap();
    let mut a = args(&["converge"]);
    a.extend(small_gbm(dir.path()));
    let inv = parse_args(&a).unwrap();
    let outcome = execute(Cmd::Converge, &inv.config).unwrap();
    let p = make_builtin(&Builtin::from_id("gbm").unwrap()).unwrap();
    let t = strong_error_experiment(&p, SchemeKind::TamedMilstein, &[3, 4, 5, 6], Reference::Exact, 2.0, 64, SeedPolicy::new(2024)).unwrap();
    assert_eq!(outcome.fit.unwrap(), fit_rate(&t).unwrap());
}
