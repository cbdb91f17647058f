use std::path::Path;
use std::process::{Command, Output};

fn reflab(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_reflab"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn rows(text: &str) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    r.records().map(|x| x.unwrap().iter().map(String::from).collect()).collect()
}

fn header(text: &str) -> &str {
    text.lines().next().unwrap()
}

#[test]
fn kernel_table_columns_and_values() {
    let dir = tempfile::tempdir().unwrap();
    let o = reflab(&["kernel-table", "--times", "0.1", "--thetas", "0.5"], dir.path());
    assert!(o.status.success());
    let text = stdout(&o);
    assert_eq!(header(&text), "kernel,t,theta,theta_p,value,err_bound");
    let g = rows(&text).into_iter().find(|r| r[0] == "g").unwrap();
    let v: f64 = g[4].parse().unwrap();
    assert!((v - 1.2445655330).abs() < 1e-9);
    let qinf = rows(&text).into_iter().find(|r| r[0] == "q_inf").unwrap();
    assert!((qinf[4].parse::<f64>().unwrap() - 0.25).abs() < 1e-8);
}

#[test]
fn kernel_table_defaults_cover_all_kernels() {
    let dir = tempfile::tempdir().unwrap();
    let o = reflab(&["kernel-table"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = rows(&stdout(&o));
    for k in ["g", "G", "q", "q_complement", "q_inf"] {
        assert!(r.iter().any(|x| x[0] == k), "{k}");
    }
    assert!(r.iter().all(|x| x[5].parse::<f64>().unwrap() <= 1e-8));
}

#[test]
fn kernel_table_potentials() {
    let dir = tempfile::tempdir().unwrap();
    let o = reflab(
        &["kernel-table", "--potentials", "--thetas", "0.25,0.5", "--levels", "0,0.2"],
        dir.path(),
    );
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(header(&text).starts_with("theta,a,u3,u3_err,gamma3,gamma3_err,rho_theta"));
    let r = rows(&text);
    assert_eq!(r.len(), 4);
    for row in &r {
        let u3: f64 = row[2].parse().unwrap();
        assert!(u3 > 0.0 && u3.is_finite());
    }
    // U₃ decreases as the level moves away from the start
    let u = |i: usize| r[i][2].parse::<f64>().unwrap();
    assert!(u(1) < u(0) && u(3) < u(2));
}

#[test]
fn simulate_scalar_and_vector_processes() {
    let dir = tempfile::tempdir().unwrap();
    let o = reflab(&["simulate", "--process", "bessel3", "--n", "7"], dir.path());
    let text = stdout(&o);
    assert_eq!(header(&text), "t,theta,value");
    let r = rows(&text);
    assert_eq!(r.len(), 7);
    assert!(r.iter().all(|x| x[2].parse::<f64>().unwrap() >= 0.0));

    let o = reflab(
        &["simulate", "--process", "string", "--n", "7", "--snapshots", "3"],
        dir.path(),
    );
    let text = stdout(&o);
    assert_eq!(header(&text), "t,theta,v1,v2,v3");
    assert_eq!(rows(&text).len(), 4 * 7);

    let o = reflab(
        &["simulate", "--process", "convolution", "--n", "7", "--dt", "0.01", "--snapshots", "5"],
        dir.path(),
    );
    let r = rows(&stdout(&o));
    assert_eq!(r.len(), 6 * 7);
    assert!(r[..7].iter().all(|x| x[2].parse::<f64>().unwrap() == 0.0));
}

#[test]
fn simulate_reflected_writes_ledger() {
    let dir = tempfile::tempdir().unwrap();
    let o = reflab(
        &[
            "simulate", "--process", "reflected", "--n", "15", "--dt", "0.001", "--T", "0.2", "--snapshots", "4",
            "--out", "u.csv",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let u = std::fs::read_to_string(dir.path().join("u.csv")).unwrap();
    let ledger = std::fs::read_to_string(dir.path().join("u.ledger.csv")).unwrap();
    assert_eq!(header(&u), "t,theta,value");
    assert_eq!(header(&ledger), "t,theta,eta_density");
    let ur = rows(&u);
    assert_eq!(ur.len(), 5 * 15);
    assert!(ur.iter().all(|x| x[2].parse::<f64>().unwrap() >= 0.0));
    // the ledger is nondecreasing in time at every site
    let lr = rows(&ledger);
    for i in 0..15 {
        let series: Vec<f64> = lr.iter().skip(i).step_by(15).map(|x| x[2].parse().unwrap()).collect();
        assert!(series.windows(2).all(|w| w[1] >= w[0]));
    }
}

#[test]
fn simulate_reflected_from_file_and_same_seed() {
    let dir = tempfile::tempdir().unwrap();
    let x0: String = (1..=7).map(|i| format!("{},{}\n", i as f64 / 8.0, 0.05 * i as f64)).collect();
    std::fs::write(dir.path().join("x0.csv"), format!("theta,value\n{x0}")).unwrap();
    let args = |out: &'static str| {
        [
            "simulate", "--process", "reflected", "--n", "7", "--dt", "0.01", "--init", "file", "--init-file",
            "x0.csv", "--seed", "3", "--out", out,
        ]
    };
    assert!(reflab(&args("a.csv"), dir.path()).status.success());
    assert!(reflab(&args("b.csv"), dir.path()).status.success());
    let a = std::fs::read(dir.path().join("a.csv")).unwrap();
    assert_eq!(a, std::fs::read(dir.path().join("b.csv")).unwrap());
    let first = rows(&String::from_utf8(a).unwrap());
    assert!((first[0][2].parse::<f64>().unwrap() - 0.05).abs() < 1e-15);

    std::fs::write(dir.path().join("short.csv"), "0.1\n0.2\n").unwrap();
    let o = reflab(
        &[
            "simulate", "--process", "reflected", "--n", "7", "--init", "file", "--init-file", "short.csv", "--out",
            "c.csv",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn estimate_surrogate_passes_with_exit_zero() {
    let dir = tempfile::tempdir().unwrap();
    let o = reflab(&["estimate", "--experiment", "intl3", "--analytic-surrogate"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert_eq!(header(&text), "experiment,param,value,stderr,n,target,target_provenance");
    assert!(rows(&text).iter().all(|r| r[0] == "intl3"));
}

#[test]
fn estimate_is_reproducible_and_writes_files() {
    let dir = tempfile::tempdir().unwrap();
    let args = |out: &'static str| {
        [
            "estimate", "--experiment", "zeroset", "--n", "15", "--dt", "0.001", "--T", "0.1", "--replicas", "8",
            "--seed", "5", "--out", out,
        ]
    };
    let o = reflab(&args("a.csv"), dir.path());
    assert!(matches!(o.status.code(), Some(0) | Some(2)));
    reflab(&args("b.csv"), dir.path());
    let a = std::fs::read(dir.path().join("a.csv")).unwrap();
    assert_eq!(a, std::fs::read(dir.path().join("b.csv")).unwrap());
    assert!(dir.path().join("a.json").exists());
}

#[test]
fn estimate_reads_config_and_rejects_bad_input() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("cfg.json"),
        r#"{"experiment":"otfr","n_sites":15,"dt":0.001,"horizon":0.1,"replicas":8}"#,
    )
    .unwrap();
    let o = reflab(&["estimate", "--config", "cfg.json"], dir.path());
    assert!(o.status.code() != Some(1), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(rows(&stdout(&o)).iter().all(|r| r[0] == "otfr"));

    let o = reflab(&["estimate", "--experiment", "intl1", "--replicas", "0"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    let o = reflab(&["estimate", "--experiment", "nope"], dir.path());
    assert!(!o.status.success());
}

#[test]
fn verify_subset_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let o = reflab(&["verify", "--only", "1,2", "--out", "vout"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let results = std::fs::read_to_string(dir.path().join("vout/results.csv")).unwrap();
    assert_eq!(header(&results), "experiment,param,estimate,stderr,target,provenance,pass");
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("vout/summary.json")).unwrap()).unwrap();
    assert_eq!(summary["total"], 2);
    assert_eq!(summary["passed"], 2);
}
