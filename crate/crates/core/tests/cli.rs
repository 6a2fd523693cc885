use std::fs;
use std::path::Path;
use std::process::{Command, Output};
use std::time::Instant;

fn picarz(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_picarz"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn set(kv: String) -> [String; 2] {
    ["--set".into(), kv]
}

fn run(cmd: &str, sets: &[String]) -> Output {
    let mut args: Vec<String> = vec![cmd.to_string()];
    for s in sets {
        args.extend(set(s.clone()));
    }
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    picarz(&refs)
}

fn ok(o: &Output) {
    assert!(
        o.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        o.status.code(),
        String::from_utf8_lossy(&o.stdout),
        String::from_utf8_lossy(&o.stderr)
    );
}

fn simulate_one(dir: &Path, family: &str, n: usize, n_cv: usize, seed: u64) -> std::path::PathBuf {
    let o = run(
        "simulate",
        &[
            format!("paths.out_dir={}", dir.display()),
            "simulate.replicates=1".into(),
            format!("simulate.n={n}"),
            format!("simulate.n_cv={n_cv}"),
            format!("run.family={family}"),
            format!("run.seed={seed}"),
        ],
    );
    ok(&o);
    dir.join("dataset_000.csv")
}

#[test]
fn simulate_writes_requested_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let path = simulate_one(tmp.path(), "mixture-poisson", 20, 7, 3);
    let text = fs::read_to_string(&path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "x_coord,y_coord,z,x1,x2,split");
    assert_eq!(lines.count(), 27);
    assert!(tmp.path().join("simulate.config").exists());
}

#[test]
fn simulate_is_deterministic_in_the_seed() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let c = tempfile::tempdir().unwrap();
    let pa = simulate_one(a.path(), "hurdle-count", 30, 10, 11);
    let pb = simulate_one(b.path(), "hurdle-count", 30, 10, 11);
    let pc = simulate_one(c.path(), "hurdle-count", 30, 10, 12);
    let ta = fs::read(&pa).unwrap();
    assert_eq!(ta, fs::read(&pb).unwrap());
    assert_ne!(ta, fs::read(&pc).unwrap());
}

#[test]
fn config_echo_lists_reference_defaults() {
    let tmp = tempfile::tempdir().unwrap();
    simulate_one(tmp.path(), "mixture-tobit", 10, 5, 1);
    let echo = fs::read_to_string(tmp.path().join("simulate.config")).unwrap();
    assert!(echo.contains("simulate.rho = 0.7"));
    assert!(echo.contains("mcmc.iterations = 150000"));
    assert!(echo.contains("simulate.n = 10\n"));
    assert!(echo.contains("run.family = mixture-tobit\n"));
    // Explicit keys carry no annotation.
    assert!(!echo.contains("simulate.n = 10  #"));
}

#[test]
fn missing_dataset_exits_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(
        "fit",
        &[
            format!("paths.out_dir={}", tmp.path().display()),
            format!("paths.dataset={}", tmp.path().join("nope.csv").display()),
        ],
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("error"));
}

#[test]
fn unset_dataset_exits_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run("mesh", &[format!("paths.out_dir={}", tmp.path().display())]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn config_errors_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run("simulate", &["no.such_key=1".into()]);
    assert_eq!(o.status.code(), Some(2));
    let o = run("simulate", &["mcmc.iterations".into()]);
    assert_eq!(o.status.code(), Some(2));

    let bad = tmp.path().join("bad.conf");
    fs::write(&bad, "simulate.n = many\n").unwrap();
    let out_dir = format!("paths.out_dir={}", tmp.path().display());
    let o = picarz(&["simulate", bad.to_str().unwrap(), "--set", &out_dir]);
    assert_eq!(o.status.code(), Some(2));

    let o = picarz(&["simulate", tmp.path().join("absent.conf").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn non_integer_counts_are_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("d.csv");
    let mut text = String::from("x_coord,y_coord,z,x1,x2,split\n");
    for i in 0..30 {
        let z = if i == 4 { "1.5".to_string() } else { (i % 3).to_string() };
        let split = if i < 20 { "train" } else { "validation" };
        text.push_str(&format!("{},{},{z},0.1,-0.2,{split}\n", (i % 6) as f64 / 6.0, (i / 6) as f64 / 5.0));
    }
    fs::write(&path, text).unwrap();
    let o = run(
        "fit",
        &[
            format!("paths.out_dir={}", tmp.path().display()),
            format!("paths.dataset={}", path.display()),
            "run.family=hurdle-count".into(),
            "mcmc.iterations=50".into(),
            "mcmc.burn_in=10".into(),
            "rank.p_o=3".into(),
            "rank.p_p=3".into(),
            "mesh.target_vertices=60".into(),
        ],
    );
    assert!(!o.status.success());
}

#[test]
fn fit_predict_report_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let data = simulate_one(dir, "hurdle-count", 100, 40, 5);
    let common = vec![
        format!("paths.out_dir={}", dir.display()),
        format!("paths.dataset={}", data.display()),
        "run.family=hurdle-count".into(),
        "mesh.target_vertices=150".into(),
        "mcmc.iterations=500".into(),
        "mcmc.burn_in=150".into(),
        "mcmc.predict_draws=50".into(),
        "report.grid_nx=6".into(),
        "report.grid_ny=5".into(),
    ];

    let mut sel = common.clone();
    sel.extend(["rank.p_max=12".to_string(), "rank.h=4".to_string()]);
    ok(&run("select-rank", &sel));
    let ranks = fs::read_to_string(dir.join("ranks.csv")).unwrap();
    assert!(ranks.lines().count() >= 2);

    let mut fixed = common.clone();
    fixed.extend(["rank.p_o=6".to_string(), "rank.p_p=4".to_string()]);
    let start = Instant::now();
    ok(&run("fit", &fixed));
    assert!(start.elapsed().as_secs() < 60);
    let chain = fs::read_to_string(dir.join("chain.csv")).unwrap();
    assert_eq!(chain.lines().count(), 1 + 500 - 150);
    assert!(chain.lines().next().unwrap().contains("beta_o_1"));
    let side = fs::read_to_string(dir.join("chain.summary")).unwrap();
    assert!(side.contains("picar"));

    ok(&run("predict", &fixed));
    let pred = fs::read_to_string(dir.join("predictions.csv")).unwrap();
    let mut lines = pred.lines();
    assert_eq!(lines.next().unwrap(), "x_coord,y_coord,z,mean,sd,prob");
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 40);
    for r in &rows {
        assert!(r[3] >= 0.0 && r[4] >= 0.0);
        assert!((0.0..=1.0).contains(&r[5]));
    }
    let summary = fs::read_to_string(dir.join("summary.csv")).unwrap();
    assert!(summary.starts_with("family,method,rmspe_total,rmspe_positive,auc,minutes"));

    ok(&run("report", &fixed));
    assert!(dir.join("table.csv").exists());
    let surface = fs::read_to_string(dir.join("surface.csv")).unwrap();
    assert_eq!(surface.lines().count(), 1 + 30);
}

fn write_summary(path: &Path, rows: &[(&str, f64, f64, f64, f64)]) {
    let mut s = String::from("family,method,rmspe_total,rmspe_positive,auc,minutes\n");
    for (m, a, b, c, d) in rows {
        s.push_str(&format!("hurdle-count,{m},{a},{b},{c},{d}\n"));
    }
    fs::write(path, s).unwrap();
}

fn table(dir: &Path, files: &[&Path]) -> Vec<Vec<String>> {
    let list: Vec<String> = files.iter().map(|p| p.display().to_string()).collect();
    ok(&run(
        "report",
        &[format!("paths.out_dir={}", dir.display()), format!("paths.summaries={}", list.join(","))],
    ));
    fs::read_to_string(dir.join("table.csv"))
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn report_takes_medians_per_method() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let a = d.join("a.csv");
    let b = d.join("b.csv");
    let c = d.join("c.csv");
    write_summary(&a, &[("picar", 3.0, 5.0, 0.70, 1.0), ("frk-bisquare", 9.0, 1.0, 0.6, 2.0)]);
    write_summary(&b, &[("picar", 1.0, 4.0, 0.90, 3.0), ("frk-bisquare", 7.0, 3.0, 0.8, 4.0)]);
    write_summary(&c, &[("picar", 2.0, 6.0, 0.80, 2.0)]);

    let t = table(d, &[&a, &b, &c]);
    assert_eq!(t.len(), 2);
    let num = |s: &str| s.parse::<f64>().unwrap();
    assert_eq!(t[0][1], "picar");
    assert_eq!(
        (num(&t[0][2]), num(&t[0][3]), num(&t[0][4]), num(&t[0][5])),
        (2.0, 5.0, 0.8, 2.0)
    );
    // Two replicates: midpoint.
    assert_eq!(t[1][1], "frk-bisquare");
    assert_eq!((num(&t[1][2]), num(&t[1][3]), num(&t[1][4])), (8.0, 2.0, 0.7));

    let t = table(d, &[&c]);
    assert_eq!(num(&t[0][2]), 2.0);
}

#[test]
fn help_lists_subcommands() {
    let o = picarz(&["--help"]);
    ok(&o);
    let s = String::from_utf8_lossy(&o.stdout);
    for cmd in ["simulate", "mesh", "select-rank", "fit", "predict", "report", "benchmark"] {
        assert!(s.contains(cmd), "{cmd}");
    }
}
