use std::fs;

use misreml::harness::{
    run_replication, run_sweep, summarize, write_replications_csv, ExperimentConfig, RunOptions,
};

fn config(text: &str) -> ExperimentConfig {
    ExperimentConfig::from_json(text).unwrap()
}

#[test]
fn sweep_is_deterministic_and_matches_single_replications() {
    let cfg = config(
        r#"{"n": 80, "p": 400, "m": [20, 400], "sigma_eps_sq": 0.5, "h2_target": 0.5,
            "replications": 6, "master_seed": 7}"#,
    );
    let a = run_sweep(&cfg, &RunOptions::default()).unwrap();
    let b = run_sweep(&cfg, &RunOptions { full_scale: false, threads: Some(1) }).unwrap();
    let (mut ca, mut cb) = (Vec::new(), Vec::new());
    write_replications_csv(&mut ca, &a).unwrap();
    write_replications_csv(&mut cb, &b).unwrap();
    assert_eq!(ca, cb);

    let cells = cfg.cells().unwrap();
    for (cell, result) in cells.iter().zip(&a.cells) {
        let direct: Vec<_> = (0..6).map(|i| run_replication(&cfg, cell, i).map_err(|e| e.to_string())).collect();
        let swept: Vec<_> = result.replications.iter().map(|r| r.result.clone()).collect();
        for (s, d) in swept.iter().zip(&direct) {
            match (s, d) {
                (Ok(a), Ok(b)) => assert_eq!(a, b),
                (Err(a), Err(b)) => assert!(b.ends_with(a.as_str()), "{b} vs {a}"),
                _ => panic!("sweep and direct replication disagree: {s:?} vs {d:?}"),
            }
        }
        let fits: Vec<_> = direct.into_iter().filter_map(Result::ok).collect();
        let s = summarize(cell, &fits, &result.model).unwrap();
        assert_eq!(result.summary.as_ref(), Some(&s));
    }
}

#[test]
fn different_seeds_give_different_fits() {
    let text = |seed: u64| format!(r#"{{"n": 60, "p": 300, "m": 300, "sigma_eps_sq": 1.0, "h2_target": 0.5, "replications": 2, "master_seed": {seed}}}"#);
    let a = run_sweep(&config(&text(1)), &RunOptions::default()).unwrap();
    let b = run_sweep(&config(&text(2)), &RunOptions::default()).unwrap();
    assert_ne!(a.cells[0].fits(), b.cells[0].fits());
}

#[test]
fn null_truth_mostly_lands_on_the_boundary() {
    let cfg = config(
        r#"{"n": 100, "p": 1000, "m": 1000, "sigma_eps_sq": 1.0, "gamma0": 0.0,
            "replications": 40, "master_seed": 11}"#,
    );
    let r = run_sweep(&cfg, &RunOptions::default()).unwrap();
    let fits = r.cells[0].fits();
    let boundary = fits.iter().filter(|f| f.boundary).count();
    // under the null the root sits at zero for about half the draws;
    // interior fits should still be small
    assert!(boundary >= 10, "{boundary} of {} on the boundary", fits.len());
    let h2: Vec<f64> = fits.iter().map(|f| f.h2_hat).collect();
    let mean = h2.iter().sum::<f64>() / h2.len() as f64;
    assert!(mean < 0.3, "mean h2 {mean}");
}

#[test]
fn smoke_run_recovers_interior_heritability() {
    let cfg = config(
        r#"{"n": 200, "p": 2000, "m": 2000, "sigma_eps_sq": 0.4, "h2_target": 0.6,
            "replications": 1, "master_seed": 12345}"#,
    );
    let r = run_sweep(&cfg, &RunOptions::default()).unwrap();
    let f = &r.cells[0].fits()[0];
    assert!(!f.boundary);
    assert!(f.h2_hat > 0.0 && f.h2_hat < 1.0);
    assert_eq!(f.adjusted_gamma, Some(f.gamma_hat));
}

#[test]
fn residual_spread_shrinks_with_n() {
    let cfg = config(
        r#"{"n": [100, 400], "p": [1000, 4000], "m": [10, 40], "sweep": "zip",
            "sigma_eps_sq": 0.4, "h2_target": 0.6, "replications": 60, "master_seed": 5}"#,
    );
    let r = run_sweep(&cfg, &RunOptions::default()).unwrap();
    let sd: Vec<f64> = r.cells.iter().map(|c| c.summary.as_ref().unwrap().sigma_eps_sq.sd.unwrap()).collect();
    assert!(sd[1] < sd[0], "{sd:?}");
}

#[test]
fn oversized_cells_need_full_scale() {
    let cfg = config(
        r#"{"n": 5000, "p": 50000, "m": 500, "sigma_eps_sq": 0.4, "h2_target": 0.6,
            "replications": 1, "master_seed": 1}"#,
    );
    assert!(run_sweep(&cfg, &RunOptions::default()).is_err());
}

#[test]
fn outputs_are_written() {
    let cfg = config(
        r#"{"n": 50, "p": 200, "m": [10, 200], "sigma_eps_sq": 0.4, "h2_target": 0.6,
            "replications": 3, "master_seed": 3}"#,
    );
    let r = run_sweep(&cfg, &RunOptions::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    r.write_outputs(dir.path(), true).unwrap();
    let reps = fs::read_to_string(dir.path().join("replications.csv")).unwrap();
    assert_eq!(reps.lines().count(), 1 + 6);
    assert!(reps.starts_with("config_hash,cell,index,gamma_hat"));
    let summary = fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 3);
    let limits = fs::read_to_string(dir.path().join("limits.csv")).unwrap();
    assert_eq!(limits.lines().count(), 3);
    assert!(reps.lines().nth(1).unwrap().starts_with(&cfg.hash().unwrap()));
}
