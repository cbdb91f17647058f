use std::f64::consts::PI;

use reflab::harness::{
    batched_statistic, run_ensemble, run_experiment, write_estimate_csv, EnsembleSpec, ExperimentConfig,
    ExperimentId, Provenance, Tolerance,
};

fn small(experiment: ExperimentId) -> ExperimentConfig {
    ExperimentConfig {
        n_sites: 15,
        dt: 1e-3,
        horizon: 0.1,
        replicas: 8,
        seed: 7,
        ..ExperimentConfig::preset(experiment)
    }
}

fn csv_bytes(cfg: &ExperimentConfig) -> Vec<u8> {
    let results = run_experiment(cfg).unwrap();
    let mut buf = Vec::new();
    write_estimate_csv(&results, &mut buf).unwrap();
    buf
}

#[test]
fn zero_replicas_rejected() {
    for id in ExperimentId::ALL {
        let cfg = ExperimentConfig {
            replicas: 0,
            ..small(id)
        };
        if id == ExperimentId::Intl3 {
            continue;
        }
        assert!(run_experiment(&cfg).is_err(), "{id:?}");
    }
    let cfg = ExperimentConfig {
        replicas: 4,
        ..small(ExperimentId::Intl1)
    };
    assert!(cfg.validate().is_err());
}

#[test]
fn invalid_parameters_rejected() {
    let base = small(ExperimentId::Intl1);
    let cases = [
        ExperimentConfig { theta: 1.0, ..base.clone() },
        ExperimentConfig { eps_list: vec![0.1, -0.1], ..base.clone() },
        ExperimentConfig { eps_list: vec![], ..base.clone() },
        ExperimentConfig { dt: 0.0, ..base.clone() },
        ExperimentConfig { interval: Some((0.6, 0.4)), ..base.clone() },
    ];
    for c in cases {
        assert!(c.validate().is_err(), "{c:?}");
    }
}

#[test]
fn identical_config_gives_identical_csv() {
    for id in [ExperimentId::Intl1, ExperimentId::Abscon, ExperimentId::Zeroset] {
        let cfg = small(id);
        assert_eq!(csv_bytes(&cfg), csv_bytes(&cfg), "{id:?}");
    }
}

#[test]
fn worker_count_does_not_change_results() {
    let one = ExperimentConfig {
        workers: 1,
        ..small(ExperimentId::Intl4)
    };
    let three = ExperimentConfig { workers: 3, ..one.clone() };
    assert_eq!(csv_bytes(&one), csv_bytes(&three));
}

#[test]
fn seed_changes_results() {
    let a = small(ExperimentId::Intl1);
    let b = ExperimentConfig { seed: 8, ..a.clone() };
    assert_ne!(csv_bytes(&a), csv_bytes(&b));
}

#[test]
fn boundary_surrogate_skips_simulation() {
    let cfg = ExperimentConfig {
        analytic_surrogate: true,
        replicas: 0,
        ..ExperimentConfig::preset(ExperimentId::Intl3)
    };
    let results = run_experiment(&cfg).unwrap();
    let limit = (2.0 / PI).sqrt();
    assert!(results.iter().all(|r| r.pass), "{results:?}");
    let rows: Vec<_> = results.iter().filter(|r| r.param.starts_with("surrogate,eps=")).collect();
    assert_eq!(rows.len(), 4);
    for r in &rows {
        assert!((r.target - limit).abs() < 1e-15);
        assert_eq!(r.provenance, Provenance::Paper);
        assert!(r.estimate < limit);
    }
    let smallest = rows.last().unwrap();
    assert!((smallest.estimate / limit - 1.0).abs() < 0.02);
}

#[test]
fn config_json_round_trip() {
    let cfg = ExperimentConfig {
        a_list: vec![0.25, 0.125],
        interval: None,
        ..small(ExperimentId::Intl4)
    };
    let text = serde_json::to_string(&cfg).unwrap();
    assert_eq!(ExperimentConfig::from_json(&text).unwrap(), cfg);

    let partial = ExperimentConfig::from_json(r#"{"experiment":"otfr","n_sites":31}"#).unwrap();
    assert_eq!(partial.experiment, ExperimentId::Otfr);
    assert_eq!(partial.n_sites, 31);
    assert!(ExperimentConfig::from_json(r#"{"experiment":"intl1","bogus":1}"#).is_err());
}

#[test]
fn strict_resolution_escalates() {
    let cfg = ExperimentConfig {
        eps_list: vec![0.05],
        dt: 1e-3,
        ..small(ExperimentId::Intl1)
    };
    assert!(cfg.validate().is_ok());
    let strict = ExperimentConfig {
        strict_resolution: true,
        ..cfg
    };
    assert!(strict.validate().is_err());
}

#[test]
fn output_files_written() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("intl1.csv");
    let cfg = ExperimentConfig {
        output: Some(path.clone()),
        ..small(ExperimentId::Intl1)
    };
    let results = run_experiment(&cfg).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "experiment,param,value,stderr,n,target,target_provenance"
    );
    assert_eq!(lines.count(), results.len());
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(path.with_extension("json")).unwrap()).unwrap();
    assert_eq!(json["results"].as_array().unwrap().len(), results.len());
}

#[test]
fn ensemble_rows_in_replica_order() {
    let cfg = small(ExperimentId::Intl1);
    let spec = EnsembleSpec::from_config(&cfg).unwrap();
    let a = run_ensemble(&spec, |tr| Ok(tr.ledger.total_mass(&tr.grid))).unwrap();
    let spec3 = EnsembleSpec { workers: 3, ..spec };
    let b = run_ensemble(&spec3, |tr| Ok(tr.ledger.total_mass(&tr.grid))).unwrap();
    assert_eq!(a.len(), cfg.replicas);
    assert_eq!(a, b);
}

#[test]
fn batched_statistic_of_mean_matches_batch_means() {
    let rows: Vec<Vec<f64>> = (0..40).map(|i| vec![i as f64]).collect();
    let (est, se, nb) = batched_statistic(&rows, |r| Some(r[0]));
    assert_eq!(nb, 10);
    assert!((est - 19.5).abs() < 1e-12);
    assert!(se > 0.0);
}

#[test]
fn tolerance_semantics() {
    let t = Tolerance::stat(3.0, 0.1);
    assert!(t.accepts(1.05, 0.0, 1.0));
    assert!(t.accepts(1.25, 0.1, 1.0));
    assert!(!t.accepts(1.5, 0.1, 1.0));
    assert!(Tolerance::AtMost(1.0).accepts(0.5, 0.0, 0.0));
    assert!(!Tolerance::AtLeast(1.9).accepts(1.8, 0.0, 0.0));
}

#[test]
fn experiment_names_parse() {
    for id in ExperimentId::ALL {
        assert_eq!(ExperimentId::parse(id.as_str()).unwrap(), id);
    }
    assert!(ExperimentId::parse("nope").is_err());
}
