use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use gammakde_cli::naive;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_gammakde"))
}

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read_column(path: &Path) -> Vec<f64> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.trim().parse().unwrap())
        .collect()
}

#[test]
fn golden_estimate_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("grid.csv");
    let o = run(bin().args(["estimate", "--input"]).arg(data("exp1_n100.csv")).args([
        "--b",
        "0.1",
        "--grid",
        "0:5:51",
        "--output",
    ])
    .arg(&out));
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stderr(&o).contains("source=fixed"));
    let produced = std::fs::read(&out).unwrap();
    let golden_path = data("exp1_n100_b0.1.golden.csv");
    if std::env::var_os("GAMMAKDE_BLESS").is_some() {
        std::fs::write(&golden_path, &produced).unwrap();
    }
    let golden = std::fs::read(&golden_path).unwrap();
    assert!(produced == golden, "estimate output differs from the golden file");

    // the golden file itself agrees with the direct double loop
    let rows: Vec<Vec<f64>> = read_column(&data("exp1_n100.csv")).into_iter().map(|v| vec![v]).collect();
    let text = String::from_utf8(golden).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("x0,density"));
    let mut count = 0;
    for line in lines {
        let (x, v) = line.split_once(',').unwrap();
        let (x, v): (f64, f64) = (x.parse().unwrap(), v.parse().unwrap());
        let reference = naive::density(&rows, &[x], &[0.1]);
        assert!((v - reference).abs() <= 1e-12 * reference.abs().max(1.0), "x={x}: {v} vs {reference}");
        count += 1;
    }
    assert_eq!(count, 51);
}

#[test]
fn tau_fragments_univariate_input() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("s.txt");
    std::fs::write(&input, "0.5\n1.0\n1.5\n2.0\n").unwrap();
    let o = run(bin()
        .args(["estimate", "--input"])
        .arg(&input)
        .args(["--tau", "1", "--b", "0.2", "--grid", "0.5:2:4"]));
    assert!(o.status.success(), "{}", stderr(&o));
    let text = String::from_utf8(o.stdout.clone()).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("x0,x1,density"));
    assert_eq!(lines.count(), 16);
    assert!(stderr(&o).contains("n=3 d=2"));
}

#[test]
fn fixed_and_plugin_share_the_grid() {
    let input = data("exp1_n100.csv");
    let estimate = |extra: &[&str]| {
        let o = run(bin().args(["estimate", "--input"]).arg(&input).args(extra));
        assert!(o.status.success(), "{}", stderr(&o));
        (String::from_utf8(o.stdout.clone()).unwrap(), stderr(&o))
    };
    let (fixed, fixed_report) = estimate(&["--b", "0.1"]);
    let (plugin, plugin_report) = estimate(&["--rule", "plugin"]);
    assert_eq!(estimate(&["--rule", "plugin"]).0, plugin);
    assert!(fixed_report.contains("source=fixed"));
    assert!(plugin_report.contains("source=plugin"));
    let coords = |t: &str| t.lines().map(|l| l.rsplit_once(',').unwrap().0.to_string()).collect::<Vec<_>>();
    assert_eq!(coords(&fixed), coords(&plugin));
    assert_ne!(fixed, plugin);
}

#[test]
fn derivative_estimate_names_axis() {
    let o = run(bin()
        .args(["estimate", "--input"])
        .arg(data("exp1_n100.csv"))
        .args(["--which", "derivative", "--b", "0.1", "--grid", "0.5:3:6"]));
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(String::from_utf8(o.stdout).unwrap().starts_with("x0,d_density_dx0\n"));
}

#[test]
fn input_errors_are_located() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.txt");
    std::fs::write(&bad, "1.0\n2.0\nnot-a-number\n").unwrap();
    let o = run(bin().args(["estimate", "--input"]).arg(&bad).args(["--b", "0.1"]));
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));

    let neg = dir.path().join("neg.txt");
    std::fs::write(&neg, "1,2\n3,-4\n").unwrap();
    let o = run(bin().args(["estimate", "--input"]).arg(&neg).args(["--b", "0.1"]));
    assert_eq!(o.status.code(), Some(2));
    let msg = stderr(&o);
    assert!(msg.contains("row 1") && msg.contains("column 1"), "{msg}");

    let o = run(bin().args(["estimate", "--input"]).arg(&neg).args(["--b", "0.1", "--tau", "1"]));
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn simulate_requires_seed() {
    let o = run(bin().args(["simulate", "--n-grid", "100,200,400", "--replicates", "2"]));
    assert!(!o.status.success());
    assert!(stderr(&o).contains("--seed"));
}

#[test]
fn simulate_writes_only_the_output_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("mise.txt");
    let o = run(bin()
        .args([
            "simulate", "--seed", "3", "--n-grid", "100,200,400", "--replicates", "3", "--b", "0.2", "--output",
        ])
        .arg(&out));
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(o.stdout.is_empty());
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.contains("# summary") && text.contains("# fit"));
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
}

#[test]
fn bandwidth_reports_reference_constant() {
    let o = run(bin().args(["bandwidth", "--model", "exp:1", "--n", "1000"]));
    assert!(o.status.success(), "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    let c: f64 = text
        .lines()
        .find_map(|l| l.strip_prefix("C="))
        .unwrap()
        .parse()
        .unwrap();
    assert!((c - 2f64.powf(0.4)).abs() < 1e-6);
    let o = run(bin().args(["bandwidth", "--model", "exp:1", "--which", "derivative"]));
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("too heavy at the origin"));
}

#[test]
fn validate_quick_runs_analytic_checks() {
    let o = run(bin().args(["validate", "--quick"]));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(o.status.success(), "{text}");
    assert!(text.contains("(quick)"));
    assert!(!text.contains("MISE rate"));
    assert!(text.lines().filter(|l| l.starts_with("[PASS]")).count() >= 8);
}

#[test]
fn injected_fault_fails_variance_check() {
    let o = run(bin().args(["validate", "--quick"]).env("GAMMAKDE_FAULT", "flip-v1"));
    let text = String::from_utf8(o.stdout).unwrap();
    assert_eq!(o.status.code(), Some(1), "{text}");
    let line = text.lines().find(|l| l.contains("variance expansion")).unwrap();
    assert!(line.starts_with("[FAIL]"), "{line}");
}
