use std::path::Path;
use std::process::Command;

use vortex_core::config::RunConfig;
use vortex_core::error::Error;
use vortex_core::pipeline::{
    dynamics, kernels, run_dynamics, run_kernels, run_solve, solve, sweep, KERNELS_FILE, PAIR_FIELD_FILE,
};
use vortex_core::report::MANIFEST_FILE;

fn small(n: usize) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.lattice.nx = n;
    cfg.lattice.ny = n;
    cfg.numerics.state_transverse = false;
    cfg
}

fn exit_code(r: vortex_core::Result<impl Sized>) -> i32 {
    match r {
        Ok(_) => 0,
        Err(e) => e.exit_code(),
    }
}

#[test]
fn vortex_free_field_has_no_kernels() {
    let mut cfg = small(12);
    cfg.vortex.q = 0;
    let s = solve(&cfg, 1).unwrap();
    assert!(s.summary.converged);
    let k = kernels(&cfg, &s).unwrap();
    assert_eq!(k.summary.b_virtual, 0.0);
    assert_eq!(k.summary.total_weight, 0.0);
    assert_eq!(k.summary.eta, 0.0);
    assert!(k.set.f_parallel.iter().all(|&f| f == 0.0));
    assert!(k.summary.k_spring.abs() < 1e-12);
}

#[test]
fn zero_coupling_gives_zero_gap_and_no_transverse_force() {
    let mut cfg = small(12);
    cfg.pairing.g = 0.0;
    cfg.numerics.mixing = 1.0;
    let s = solve(&cfg, 1).unwrap();
    assert!(s.pair.delta.iter().all(|d| d.norm() == 0.0));
    assert!(s.summary.degenerate);
    let k = kernels(&cfg, &s).unwrap();
    assert_eq!(k.summary.b_virtual, 0.0);
    assert_eq!(k.summary.k_spring, 0.0);
}

#[test]
fn later_stages_report_missing_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(12);
    match run_kernels(&cfg, dir.path(), 1) {
        Err(e @ Error::MissingArtifact { .. }) => {
            assert_eq!(e.exit_code(), 4);
            assert!(e.to_string().contains("solve"), "{e}");
        }
        other => panic!("expected a missing artifact, got {:?}", other.map(|_| ())),
    }
    match dynamics(&cfg, dir.path()) {
        Err(Error::MissingArtifact { artifact, .. }) => assert_eq!(artifact, KERNELS_FILE),
        other => panic!("expected a missing artifact, got {:?}", other.map(|_| ())),
    }
}

#[test]
fn dynamics_runs_from_overrides_alone() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(12);
    cfg.dynamics.b = Some(0.7);
    cfg.dynamics.eta = Some(0.1);
    cfg.dynamics.k_spring = Some(0.3);
    cfg.dynamics.t_final = 20.0;
    let (d, manifest) = run_dynamics(&cfg, dir.path(), 1).unwrap();
    assert!(d.trajectory.positions.len() > 100);
    assert!(manifest.checksums().keys().any(|k| k.starts_with("dynamics/")));
}

#[test]
fn changed_physics_invalidates_stored_solve() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(12);
    run_solve(&cfg, dir.path(), 1).unwrap();
    assert!(dir.path().join(PAIR_FIELD_FILE).exists());
    assert!(dir.path().join(MANIFEST_FILE).exists());

    // Dynamics-only edits keep the solve usable.
    cfg.dynamics.t_final = 10.0;
    run_kernels(&cfg, dir.path(), 1).unwrap();

    cfg.lattice.mu = -2.5;
    assert!(matches!(run_kernels(&cfg, dir.path(), 1), Err(Error::MissingArtifact { .. })));
}

#[test]
fn sweep_rows_do_not_depend_on_thread_count() {
    let mut cfg = small(12);
    cfg.disorder.strength = 0.3;
    cfg.disorder.ensemble_size = 2;
    cfg.numerics.phase_lock = true;
    let (one, _) = sweep(&cfg, 1).unwrap();
    let (two, _) = sweep(&cfg, 2).unwrap();
    assert_eq!(one.rows, two.rows);
    assert_eq!(one.summary, two.summary);
    assert_eq!(one.rows.iter().map(|r| r.seed).collect::<Vec<_>>(), vec![1, 2]);
}

#[test]
fn single_member_sweep_is_a_configuration_error() {
    let cfg = small(12);
    let err = sweep(&cfg, 1).err().unwrap();
    assert_eq!(err.exit_code(), 2);
    assert!(err.to_string().contains("disorder.ensemble_size"));
}

fn cli(args: &[&str], dir: &Path) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_vortexlab"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap()
}

#[test]
fn cli_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let ok = cli(&["validate-config"], dir.path());
    assert_eq!(ok.status.code(), Some(0));
    let printed = RunConfig::from_json(&String::from_utf8(ok.stdout).unwrap()).unwrap();
    assert_eq!(printed, RunConfig::default());

    let mut bad = RunConfig::default();
    bad.numerics.mixing = 1.5;
    std::fs::write(dir.path().join("bad.json"), bad.to_json()).unwrap();
    let out = cli(&["validate-config", "--config", "bad.json"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("numerics.mixing"));

    std::fs::write(dir.path().join("typo.json"), r#"{"lattice": {"nx": 8}}"#).unwrap();
    let out = cli(&["validate-config", "--config", "typo.json"], dir.path());
    assert_eq!(out.status.code(), Some(2));

    let out = cli(&["kernels", "--out", "empty"], dir.path());
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).contains("run `solve` first"));

    assert_eq!(exit_code(RunConfig::load(&dir.path().join("absent.json"))), 4);
}
