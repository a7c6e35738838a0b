use std::fs;
use std::path::Path;

use bfq_core::driver::*;
use bfq_core::model::Species;

fn tiny(dir: &Path) -> RunConfig {
    let text = format!(
        "n_bosons = 2\nn_fermions = 1\ngrid_points = 41\nwells = 3\nM = 2\nm_f = 2\nm_b = 2\n\
         omega_f = 0.05\nt_final = 3\ndt_out = 0.5\ncheckpoint_interval = 0\nseed = 7\n\
         snapshot_times = 0, 1.2\noutput_dir = {}\n",
        dir.display()
    );
    parse_config(&text).unwrap()
}

#[test]
fn same_seed_gives_identical_trajectory() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tiny(&tmp.path().join("a"));
    let b = tiny(&tmp.path().join("b"));
    let ra = run_single(&a, &RunControl::default()).unwrap();
    run_single(&b, &RunControl::default()).unwrap();
    let ta = fs::read(RunPaths::new(&a.output_dir).trajectory()).unwrap();
    let tb = fs::read(RunPaths::new(&b.output_dir).trajectory()).unwrap();
    assert_eq!(ta, tb);
    assert!(ra.completed);
    assert_eq!(ra.times.len(), 7);
    let text = String::from_utf8(ta).unwrap();
    assert_eq!(
        text.lines().next().unwrap(),
        "t,energy,norm_error,ortho_error,var_b,var_f,lambda_1,lambda_2,nat_pop_b_1,nat_pop_b_2,nat_pop_f_1,nat_pop_f_2"
    );
    let paths = RunPaths::new(&a.output_dir);
    let map = Heatmap::read(&paths.density_heatmap(Species::Boson)).unwrap();
    assert_eq!((map.times.len(), map.x.len()), (7, 41));
    assert!(paths.snapshot(0.0).exists() && paths.snapshot(1.5).exists());
    assert!(paths.final_state().exists() && paths.summary().exists());
}

#[test]
fn resume_continues_the_uninterrupted_run() {
    let tmp = tempfile::tempdir().unwrap();
    let full = tiny(&tmp.path().join("full"));
    let split = tiny(&tmp.path().join("split"));
    let reference = run_single(&full, &RunControl::default()).unwrap();
    let first = run_single(
        &split,
        &RunControl {
            resume: None,
            stop_after: Some(1.0),
        },
    )
    .unwrap();
    assert!(!first.completed);
    assert_eq!(first.times.len(), 3);
    let paths = RunPaths::new(&split.output_dir);
    // Rows written after the checkpoint must be discarded on resume.
    let traj = paths.trajectory();
    let mut text = fs::read_to_string(&traj).unwrap();
    text.push_str("9.9,1,1,1,1,1,1,1,1,1,1,1\n");
    fs::write(&traj, text).unwrap();
    let resumed = run_single(
        &split,
        &RunControl {
            resume: Some(paths.checkpoint()),
            stop_after: None,
        },
    )
    .unwrap();
    assert!(resumed.completed);
    assert_eq!(resumed.times, reference.times);
    let a = fs::read_to_string(RunPaths::new(&full.output_dir).trajectory()).unwrap();
    let b = fs::read_to_string(&traj).unwrap();
    for (la, lb) in a.lines().skip(1).zip(b.lines().skip(1)) {
        for (x, y) in la.split(',').zip(lb.split(',')) {
            let (x, y): (f64, f64) = (x.parse().unwrap(), y.parse().unwrap());
            assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0), "{la}\n{lb}");
        }
    }
    assert_eq!(a.lines().count(), b.lines().count());
    let ha = Heatmap::read(&RunPaths::new(&full.output_dir).density_heatmap(Species::Fermion)).unwrap();
    let hb = Heatmap::read(&paths.density_heatmap(Species::Fermion)).unwrap();
    assert_eq!(ha.values.len(), hb.values.len());
}

#[test]
fn null_quench_keeps_variance_flat() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = tiny(tmp.path());
    cfg.omega_f = Some(cfg.omega_i);
    cfg.relax_energy_tol = 1e-13;
    let run = run_single(&cfg, &RunControl::default()).unwrap();
    for s in Species::BOTH {
        let v = run.variances(s);
        for x in v {
            assert!((x - v[0]).abs() < 1e-6 * v[0], "{s:?}: {x} vs {}", v[0]);
        }
    }
    assert!(run.max_norm_error < 1e-10);
}

#[test]
fn scan_rows_match_single_runs_and_permute() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = tiny(&tmp.path().join("scan"));
    cfg.omega_f_list = vec![0.0, 0.05];
    let scan = run_scan(&cfg).unwrap();
    assert_eq!(scan.rows.len(), 2);
    assert!(scan.rows.iter().all(|r| r.failure.is_none()));

    let mut rev = tiny(&tmp.path().join("rev"));
    rev.omega_f_list = vec![0.05, 0.0];
    rev.workers = 2;
    let scan_rev = run_scan(&rev).unwrap();
    assert_eq!(scan_rev.rows[0].mean_var_b, scan.rows[1].mean_var_b);
    assert_eq!(scan_rev.rows[1].mean_var_f, scan.rows[0].mean_var_f);

    let single_cfg = tiny(&tmp.path().join("single"));
    let single = run_single(&single_cfg, &RunControl::default()).unwrap();
    let t = single_cfg.t_average();
    assert_eq!(single.mean_variance(Species::Boson, t).unwrap(), scan.rows[1].mean_var_b);
    assert_eq!(single.mean_variance(Species::Fermion, t).unwrap(), scan.rows[1].mean_var_f);

    let report = tmp.path().join("report");
    let files = emit_report(&cfg.output_dir, &report).unwrap();
    assert!(files.iter().any(|p| p.ends_with("mean_variance.svg")));
    let again = emit_report(&cfg.output_dir, &tmp.path().join("report2")).unwrap();
    assert_eq!(
        fs::read(&files[0]).unwrap(),
        fs::read(&again[0]).unwrap()
    );
}

#[test]
fn report_of_a_run_has_variance_and_heatmaps() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny(&tmp.path().join("run"));
    run_single(&cfg, &RunControl::default()).unwrap();
    let files = emit_report(&cfg.output_dir, &tmp.path().join("r")).unwrap();
    let names: Vec<String> = files.iter().map(|p| p.file_name().unwrap().to_string_lossy().into_owned()).collect();
    assert_eq!(names, ["variance.svg", "density_b.svg", "density_f.svg", "summary.txt"]);
}

#[test]
fn ladder_of_identical_rungs_has_no_deviation() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = tiny(tmp.path());
    cfg.ladder = vec![Rung { m: 2, m_f: 2, m_b: 2 }, Rung { m: 2, m_f: 2, m_b: 2 }];
    let ladder = run_ladder(&cfg).unwrap();
    assert_eq!(ladder.deviations.len(), 1);
    assert_eq!(ladder.deviations[0].max_b, 0.0);
    assert_eq!(ladder.deviations[0].max_f, 0.0);
}

#[test]
fn propagation_failure_names_the_checkpoint() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = tiny(tmp.path());
    cfg.max_step = 1e-14;
    cfg.initial_step = 1e-14;
    match run_single(&cfg, &RunControl::default()) {
        Err(bfq_core::error::Error::RunFailed { checkpoint, .. }) => assert_eq!(checkpoint, "none"),
        other => panic!("expected a run failure, got {other:?}"),
    }
}
