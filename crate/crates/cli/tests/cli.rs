use std::path::Path;
use std::process::{Command, Output};

use simcov::rates::{allocation_bound, KernelClass, RateParams};
use simcov::spectrum::se_gaussian_eigenvalues;

const GOLDEN_QUICK: &str = include_str!("golden/dejong1d-quick.convergence.csv");

fn simcov(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_simcov"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn simcov_env(args: &[&str], out: &Path, threads: &str) -> Output {
    Command::new(env!("CARGO_BIN_EXE_simcov"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env("SIMCOV_THREADS", threads)
        .output()
        .expect("binary runs")
}

fn read(p: &Path) -> String {
    std::fs::read_to_string(p).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn parse_csv(text: &str) -> (Vec<String>, Vec<Vec<String>>) {
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines.map(|l| l.split(',').map(String::from).collect()).collect();
    (header, rows)
}

#[test]
fn quick_preset_matches_golden_file() {
    let dir = tempfile::tempdir().unwrap();
    let o = simcov(&["convergence", "--preset", "dejong1d-quick"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = read(&dir.path().join("convergence.csv"));
    assert_eq!(csv, GOLDEN_QUICK);

    let (header, rows) = parse_csv(&csv);
    assert_eq!(
        header.join(","),
        "problem,kernel,dist,m,n,macro_reps,mean_max_imse,se_max_imse,mean_ipfs_ind,se_ipfs_ind,mean_ipfs_apfs,se_ipfs_apfs"
    );
    assert_eq!(rows.len(), 12);
    for r in &rows {
        for v in &r[6..] {
            let x: f64 = v.parse().unwrap();
            assert!(x.is_finite() && x >= 0.0, "{v}");
        }
    }
}

#[test]
fn reruns_are_byte_identical_across_thread_counts() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = ["convergence", "--preset", "dejong1d-quick", "--set", "experiment.kernels=[\"sqexp\", \"exp\"]"];
    assert!(simcov_env(&args, a.path(), "1").status.success());
    assert!(simcov_env(&args, b.path(), "3").status.success());
    assert_eq!(read(&a.path().join("convergence.csv")), read(&b.path().join("convergence.csv")));
    assert_eq!(read(&a.path().join("cells.csv")), read(&b.path().join("cells.csv")));

    let hash = |p: &Path| -> String {
        let v: serde_json::Value = serde_json::from_str(&read(&p.join("manifest.json"))).unwrap();
        v["config_hash"].as_str().unwrap().to_string()
    };
    assert_eq!(hash(a.path()), hash(b.path()));
}

#[test]
fn manifest_records_seed_version_and_timing() {
    let dir = tempfile::tempdir().unwrap();
    let o = simcov(
        &["convergence", "--preset", "dejong1d-quick", "--set", "experiment.kernels=[\"sqexp\"]", "--set", "experiment.seed=99"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&read(&dir.path().join("manifest.json"))).unwrap();
    assert_eq!(v["master_seed"], 99);
    assert_eq!(v["tool_version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(v["config_hash"].as_str().unwrap().len(), 64);
    assert_eq!(v["timing"].as_array().unwrap().len(), 1);
    assert!(v["warnings"].is_array());
}

#[test]
fn quick_preset_settings_are_pinned() {
    // The adaptive acceptance check in the core crate replays these settings.
    let text = include_str!("../presets/dejong1d-quick.toml");
    let v: toml::Value = toml::from_str(text).unwrap();
    let e = &v["experiment"];
    assert_eq!(e["seed"].as_integer(), Some(20240517));
    assert_eq!(e["macro_reps"].as_integer(), Some(5));
    assert_eq!(e["n"].as_integer(), Some(10));
    let m: Vec<i64> = e["m"].as_array().unwrap().iter().map(|x| x.as_integer().unwrap()).collect();
    assert_eq!(m, vec![5, 12, 28]);
    assert_eq!(v["adaptive"]["n0"].as_integer(), Some(10));
    assert_eq!(v["adaptive"]["pool_size"].as_integer(), Some(512));
}

#[test]
fn adaptive_compare_adds_strategy_column() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["adaptive-compare", "--preset", "dejong1d-quick", "--set", "experiment.kernels=[\"sqexp\"]"];
    let o = simcov(&args, dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = read(&dir.path().join("convergence.csv"));
    let (header, rows) = parse_csv(&csv);
    assert_eq!(header[0], "strategy");
    assert_eq!(rows.len(), 6);
    assert_eq!(rows.iter().filter(|r| r[0] == "adaptive").count(), 3);
    let v: serde_json::Value = serde_json::from_str(&read(&dir.path().join("manifest.json"))).unwrap();
    assert_eq!(v["metadata"]["adaptive_pool_size"], 512);

    let again = tempfile::tempdir().unwrap();
    assert!(simcov(&args, again.path()).status.success());
    assert_eq!(csv, read(&again.path().join("convergence.csv")));
}

#[test]
fn unknown_config_key_exits_2_with_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[problem]\nkind = \"dejong\"\n\n[experiment]\nmacro_repz = 3\n").unwrap();
    let o = simcov(&["convergence", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("bad.toml:5:1:"), "{}", stderr(&o));
}

#[test]
fn missing_section_and_bad_override_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = simcov(&["convergence", "--preset", "allocate-example"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let o = simcov(&["convergence", "--preset", "dejong1d-quick", "--set", "experiment.m=[5, 5]"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let o = simcov(&["convergence"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn predict_m_from_tabulated_line() {
    let dir = tempfile::tempdir().unwrap();
    let o = simcov(&["predict-m", "--slope", "-1.03", "--intercept", "-4.58", "--c0", "7.5e-5"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("m_hat = 119"));
    let csv = read(&dir.path().join("predict_m.csv"));
    assert!(csv.lines().any(|l| l.starts_with("m_hat,119,")));
}

#[test]
fn predict_m_inverts_synthetic_law() {
    let dir = tempfile::tempdir().unwrap();
    let pts: Vec<String> = [10usize, 15, 23, 35, 53, 80].iter().map(|m| format!("{m}:{}", 3.0 / *m as f64)).collect();
    let c0 = format!("{}", 3.0 / 200.0);
    let mut args = vec!["predict-m", "--c0", c0.as_str()];
    for p in &pts {
        args.push("--point");
        args.push(p);
    }
    let o = simcov(&args, dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = read(&dir.path().join("predict_m.csv"));
    let m_hat: usize = csv.lines().find(|l| l.starts_with("m_hat,")).unwrap().split(',').nth(1).unwrap().parse().unwrap();
    assert!((199..=201).contains(&m_hat), "{m_hat}");
}

#[test]
fn predict_m_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let o = simcov(&["predict-m", "--c0", "0.1", "--point", "10:1", "--point", "20:0.5"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let o = simcov(&["predict-m", "--c0", "0.1", "--point", "10:1", "--point", "20:1.5", "--point", "40:2"], dir.path());
    assert_eq!(o.status.code(), Some(3));
    let o = simcov(&["predict-m", "--slope", "0.5", "--intercept", "0", "--c0", "0.1"], dir.path());
    assert_eq!(o.status.code(), Some(3));
}

fn allocation_rows(dir: &Path) -> Vec<(f64, f64, f64)> {
    let (_, rows) = parse_csv(&read(&dir.join("allocation.csv")));
    rows.iter().map(|r| (r[3].parse().unwrap(), r[4].parse().unwrap(), r[5].parse().unwrap())).collect()
}

#[test]
fn allocate_symmetric_designs_split_evenly() {
    let dir = tempfile::tempdir().unwrap();
    let o = simcov(&["allocate", "--preset", "allocate-example", "--set", "allocate.designs.1.kernel.tau2=1.0"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    for (rho, _, _) in allocation_rows(dir.path()) {
        assert!((rho - 0.5).abs() < 1e-3, "{rho}");
    }

    let cfg = dir.path().join("sym.toml");
    let design = "[[allocate.designs]]\nkernel = { kind = \"stationary\", family = \"matern52\", tau2 = 1.0, phi = 1.0 }\n";
    let text = format!(
        "[sampling]\nkind = \"uniform\"\nlower = 0.0\nupper = 1.0\n\n[allocate]\nn_tot = 10000\nm = 50\n\n{design}\n{design}\n{design}"
    );
    std::fs::write(&cfg, text).unwrap();
    let o = simcov(&["allocate", "--config", cfg.to_str().unwrap()], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = allocation_rows(dir.path());
    assert_eq!(rows.len(), 3);
    for (rho, n_i, _) in &rows {
        assert!((rho - 1.0 / 3.0).abs() < 1e-3, "{rho}");
        assert!((n_i - rho * 10000.0 / 50.0).abs() < 1e-9);
    }
}

#[test]
fn allocate_two_designs_matches_grid_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let o = simcov(&["allocate", "--preset", "allocate-example"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = allocation_rows(dir.path());
    let max_bound = rows.iter().map(|r| r.2).fold(f64::MIN, f64::max);
    assert!((rows[0].0 + rows[1].0 - 1.0).abs() < 1e-6);
    assert!(rows[1].0 >= rows[0].0, "harder design gets at least as much budget");

    let mut p = RateParams::new(KernelClass::ExpDecay { kappa: 1.0 }, 1);
    p.rho_star = 0.01;
    p.r_star = 4.0;
    let eigs = [1.0, 2.0].map(|tau2| se_gaussian_eigenvalues(tau2, 1.0, 0.25, 200).unwrap());
    let params = [p, p];
    let mut best = f64::INFINITY;
    for j in 1..1000 {
        let rho = j as f64 * 1e-3;
        let b = allocation_bound(&params, &eigs, 100_000, 100, &[rho, 1.0 - rho], 1000).unwrap();
        best = best.min(b[0].max(b[1]));
    }
    assert!(max_bound <= best * 1.01, "{max_bound} vs grid {best}");
}

#[test]
fn allocate_manifest_is_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert!(simcov(&["allocate", "--preset", "allocate-example"], a.path()).status.success());
    assert!(simcov(&["allocate", "--preset", "allocate-example"], b.path()).status.success());
    assert_eq!(read(&a.path().join("allocation.csv")), read(&b.path().join("allocation.csv")));
    let strip = |p: &Path| {
        let mut v: serde_json::Value = serde_json::from_str(&read(&p.join("manifest.json"))).unwrap();
        v.as_object_mut().unwrap().remove("timing");
        v
    };
    assert_eq!(strip(a.path()), strip(b.path()));
}

#[test]
fn eigs_and_fit_dump() {
    let dir = tempfile::tempdir().unwrap();
    let o = simcov(&["eigs", "--preset", "allocate-example"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let (header, rows) = parse_csv(&read(&dir.path().join("eigs.csv")));
    assert_eq!(header[4], "eigenvalue");
    assert_eq!(rows.len(), 400);
    let first: f64 = rows[0][4].parse().unwrap();
    assert!((first - 0.5).abs() < 1e-12);

    let o = simcov(&["fit", "--preset", "dejong1d-quick", "--m", "12"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&read(&dir.path().join("fit.json"))).unwrap();
    assert_eq!(v["designs"].as_array().unwrap().len(), 10);
    assert_eq!(v["m"], 12);
    assert!(v["measures"]["max_imse"].as_f64().unwrap() > 0.0);
}

#[test]
fn presets_are_listed() {
    let o = Command::new(env!("CARGO_BIN_EXE_simcov")).arg("presets").output().unwrap();
    let s = String::from_utf8_lossy(&o.stdout);
    for name in ["dejong1d-quick", "mm1-paper", "griewank10d-compare", "mm1-predict-m"] {
        assert!(s.lines().any(|l| l == name), "{name}");
    }
}
