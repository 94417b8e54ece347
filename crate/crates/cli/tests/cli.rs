use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn scenarios() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn example() -> PathBuf {
    scenarios().join("example1.toml")
}

fn epigame(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_epigame"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Example scenario with `edit` applied to its text, written into `dir`.
fn variant(dir: &Path, name: &str, edit: impl Fn(String) -> String) -> PathBuf {
    let text = fs::read_to_string(example()).unwrap();
    let path = dir.join(name);
    fs::write(&path, edit(text)).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn design_report() {
    let o = epigame(&["design", "--scenario", s(&example())]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("beta*: 0.17\n"), "{out}");
    assert!(out.contains("x*: (0.5, 0.5)"));
    assert!(out.contains("(I*, R*): (1.961%, 39.22%)"));
    assert!(out.contains("case: I (pivot strategy 1)"));
    assert!(out.contains("assumption 1: holds"));
}

#[test]
fn design_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let o = epigame(&["design", "--scenario", s(&example()), "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let saved = dir.path().join("example1_design.toml");
    let text = fs::read_to_string(&saved).unwrap();
    assert!(text.contains("[expected_design]"));
    let again = epigame(&["design", "--scenario", s(&saved)]);
    assert_eq!(again.status.code(), Some(0), "{}", stderr(&again));
    assert_eq!(stdout(&again), stdout(&epigame(&["design", "--scenario", s(&example())])));

    let tampered = dir.path().join("tampered.toml");
    fs::write(&tampered, text.replace("pivot = 1", "pivot = 2")).unwrap();
    let o = epigame(&["design", "--scenario", s(&tampered)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("DesignMismatch"), "{}", stderr(&o));
}

#[test]
fn validation_failures_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let budget = variant(dir.path(), "budget.toml", |t| t.replace("c_star = 0.1", "c_star = 0.25"));
    let o = epigame(&["design", "--scenario", s(&budget)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("BudgetOutOfRange"), "{}", stderr(&o));

    let a1 = variant(dir.path(), "a1.toml", |t| {
        t.replace("beta = [0.15, 0.19]", "beta = [0.12, 0.15, 0.19]")
            .replace("cost = [0.2, 0.0]", "cost = [0.3, 0.29, 0.0]")
            .replace("x = [1.0, 0.0]", "x = [0.0, 1.0, 0.0]")
    });
    let o = epigame(&["design", "--scenario", s(&a1)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("Assumption1Violated"), "{}", stderr(&o));

    let unknown = variant(dir.path(), "unknown.toml", |t| t.replace("gamma = 0.1", "gamma = 0.1\ndelta = 1.0"));
    assert_eq!(epigame(&["design", "--scenario", s(&unknown)]).status.code(), Some(2));

    let shorthand = variant(dir.path(), "short.toml", |t| t.replace("endemic_at_beta = 0.15", "endemic_at_beta = 0.16"));
    assert_eq!(epigame(&["design", "--scenario", s(&shorthand)]).status.code(), Some(2));

    let missing = dir.path().join("missing.toml");
    assert_eq!(epigame(&["design", "--scenario", s(&missing)]).status.code(), Some(2));
    assert_eq!(epigame(&["simulate", "--scenario", s(&example()), "--tol", "-1"]).status.code(), Some(2));
}

#[test]
fn integration_failure_exits_3_with_state() {
    let dir = tempfile::tempdir().unwrap();
    let stiff = variant(dir.path(), "stiff.toml", |t| {
        t.replace("lambda = 0.1", "lambda = 1e9")
            .replace("cap = 0.1", "cap = 1e9")
            .replace("sample_every = 1.0", "sample_every = 1.0\nmax_steps = 200")
    });
    let o = epigame(&["simulate", "--scenario", s(&stiff), "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("state = ["), "{}", stderr(&o));
}

#[test]
fn simulate_summary_and_determinism() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = |d: &Path| -> Vec<String> {
        ["simulate", "--scenario", s(&example()), "--t-end", "600", "--plot", "--out", s(d)]
            .iter()
            .map(|x| x.to_string())
            .collect()
    };
    let run = |d: &Path| {
        let v = args(d);
        epigame(&v.iter().map(String::as_str).collect::<Vec<_>>())
    };
    let o = run(a.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("peak I/I*: 1.129"), "{out}");
    assert!(out.contains("anytime bound I/I* <= 1.344"), "{out}");
    assert_eq!(run(b.path()).status.code(), Some(0));

    let csv_a = fs::read(a.path().join("example1_trajectory.csv")).unwrap();
    let csv_b = fs::read(b.path().join("example1_trajectory.csv")).unwrap();
    assert_eq!(csv_a, csv_b);
    let text = String::from_utf8(csv_a).unwrap();
    let header = text.lines().next().unwrap();
    assert_eq!(
        header,
        "t,I,R,S,B,q,x_1,x_2,r_1,r_2,reward_cost,L,sS,S_storage,P_dissipation,I_hat,R_hat"
    );
    assert_eq!(text.lines().count(), 602);
    let svg = fs::read_to_string(a.path().join("example1_trajectory.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains("Lyapunov function"));
}

#[test]
fn equilibrium_start_is_flat() {
    let dir = tempfile::tempdir().unwrap();
    let eq = variant(dir.path(), "eq.toml", |t| {
        t.replace("endemic_at_beta = 0.15", "endemic_at_beta = 0.17")
            .replace("x = [1.0, 0.0]", "x = [0.5, 0.5]")
    });
    let o = epigame(&["simulate", "--scenario", s(&eq), "--t-end", "200", "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("peak I/I*: 1.000\n"), "{out}");
    assert!(out.contains("settled (relative"), "{out}");
}

#[test]
fn bound_table() {
    let dir = tempfile::tempdir().unwrap();
    let o = epigame(&[
        "bound", "--scenario", s(&example()), "--upsilon", "0.806,2", "--oracle-grid", "100", "--plot", "--out",
        s(dir.path()),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("example1_bound.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("upsilon,alpha,pi_star,floor,oracle_value"));
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 2);
    assert!((rows[0][2] - 1.3436).abs() < 5e-4, "{rows:?}");
    assert!(rows[1][2] > 1.5);
    assert!((rows[0][3] - 1.1504).abs() < 1e-4);
    assert!(dir.path().join("example1_bound.svg").exists());
}

#[test]
fn bound_needs_endemic_start() {
    let dir = tempfile::tempdir().unwrap();
    let off = variant(dir.path(), "off.toml", |t| {
        t.replace("endemic_at_beta = 0.15\n", "infectious = 0.01\nrecovered = 0.2\n")
    });
    let o = epigame(&["bound", "--scenario", s(&off)]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
    let o = epigame(&["select-upsilon", "--scenario", s(&off), "--target", "1.5"]);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn select_upsilon() {
    let dir = tempfile::tempdir().unwrap();
    let o = epigame(&["select-upsilon", "--scenario", s(&example()), "--target", "1.01"]);
    assert_eq!(o.status.code(), Some(4));
    assert!(stderr(&o).contains("TargetBelowFloor"), "{}", stderr(&o));

    let o = epigame(&["select-upsilon", "--scenario", s(&example()), "--target", "2.0", "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let derived = dir.path().join("example1_upsilon.toml");
    let text = fs::read_to_string(&derived).unwrap();
    let upsilon: f64 = text
        .lines()
        .find_map(|l| l.strip_prefix("upsilon = "))
        .unwrap()
        .parse()
        .unwrap();
    assert!(upsilon > 0.806);
    let o = epigame(&["bound", "--scenario", s(&derived), "--upsilon", &upsilon.to_string(), "--tol", "1e-9"]);
    let pi: f64 = stdout(&o)
        .lines()
        .last()
        .unwrap()
        .split(',')
        .nth(2)
        .unwrap()
        .parse()
        .unwrap();
    assert!(pi <= 2.0 + 1e-8, "{pi}");
}

#[test]
fn sweeps() {
    let dir = tempfile::tempdir().unwrap();
    let o = epigame(&[
        "sweep", "--manifest", s(&scenarios().join("bound_curves.toml")), "--out", s(dir.path()), "--plot",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let summary = fs::read_to_string(dir.path().join("sweep_summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 4);
    let curve = |job: &str| -> Vec<f64> {
        fs::read_to_string(dir.path().join(job).join(format!("{job}_bound.csv")))
            .unwrap()
            .lines()
            .skip(1)
            .map(|l| l.split(',').nth(2).unwrap().parse().unwrap())
            .collect()
    };
    let (hi, mid, lo) = (curve("bound_c0.125"), curve("bound_c0.1"), curve("bound_c0.075"));
    assert_eq!(hi.len(), 100);
    for c in [&hi, &mid, &lo] {
        assert!(c.windows(2).all(|w| w[1] >= w[0] - 1e-6));
    }
    assert!(dir.path().join("sweep_bounds.svg").exists());

    let empty = dir.path().join("empty.toml");
    fs::write(&empty, "").unwrap();
    let out = dir.path().join("empty_out");
    let o = epigame(&["sweep", "--manifest", s(&empty), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(fs::read_to_string(out.join("sweep_summary.csv")).unwrap().lines().count(), 1);
}

#[test]
fn sweep_records_failures() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dir.path().join("m.toml");
    fs::write(
        &manifest,
        format!(
            r#"
[[job]]
name = "good"
command = "design"
scenario = "{0}"

[[job]]
name = "broke"
command = "design"
scenario = "{0}"
overrides = {{ design = {{ c_star = 0.5 }} }}
"#,
            example().display()
        ),
    )
    .unwrap();
    let o = epigame(&["sweep", "--manifest", s(&manifest), "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
    let summary = fs::read_to_string(dir.path().join("sweep_summary.csv")).unwrap();
    let lines: Vec<&str> = summary.lines().collect();
    assert!(lines[1].starts_with("good,design,ok,0,"));
    assert!(lines[2].starts_with("broke,design,failed,2,"), "{}", lines[2]);
}
