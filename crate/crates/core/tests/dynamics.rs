use std::f64::consts::PI;

use spinpump::config::ExperimentConfig;
use spinpump::drive::sample_disorder;
use spinpump::evolution::{evolve, propagate};
use spinpump::experiment;
use spinpump::hamiltonian::DrivenArray;
use spinpump::lattice::{fig1c_topology, single_chain, RegionSpec};
use spinpump::{DisorderRealization, DriveParams, IntegratorConfig, Method, StateVector};

fn fig2_parts() -> (spinpump::ArrayTopology, DriveParams, DisorderRealization) {
    let topo = fig1c_topology();
    let drive = DriveParams::new(45.0, 0.015).unwrap();
    let disorder = sample_disorder(&topo, 20.0, 1).unwrap();
    (topo, drive, disorder)
}

#[test]
fn consecutive_intervals_compose() {
    let (topo, drive, disorder) = fig2_parts();
    let array = DrivenArray::new(&topo, &drive, &disorder).unwrap();
    let cfg = IntegratorConfig::default();
    let psi0 = StateVector::basis(topo.n_sites(), 0);
    let t1 = 0.5 * drive.cycle();
    let t2 = drive.cycle();
    let split = evolve(
        &array,
        &evolve(&array, &psi0, 0.0, t1, &cfg).unwrap(),
        t1,
        t2,
        &cfg,
    )
    .unwrap();
    let whole = evolve(&array, &psi0, 0.0, t2, &cfg).unwrap();
    // different grids, so agreement is at the discretization level
    assert!(
        split.max_distance(&whole) < 1e-5,
        "{}",
        split.max_distance(&whole)
    );
}

#[test]
fn forward_then_backward_returns_initial_state() {
    let (topo, drive, disorder) = fig2_parts();
    let array = DrivenArray::new(&topo, &drive, &disorder).unwrap();
    let cfg = IntegratorConfig::default();
    let psi0 = StateVector::basis(topo.n_sites(), 0);
    let t = drive.cycle();
    let there = evolve(&array, &psi0, 0.0, t, &cfg).unwrap();
    let back = evolve(&array, &there, t, 0.0, &cfg).unwrap();
    assert!(
        back.max_distance(&psi0) < 1e-8,
        "{}",
        back.max_distance(&psi0)
    );
}

#[test]
fn reference_method_agrees_with_midpoint() {
    let topo = single_chain(12, PI / 3.0).unwrap();
    let drive = DriveParams::new(45.0, 0.015).unwrap();
    let disorder = DisorderRealization::clean(12);
    let array = DrivenArray::new(&topo, &drive, &disorder).unwrap();
    let psi0 = StateVector::basis(12, 0);
    let t = 0.25 * drive.cycle();
    let mid = evolve(&array, &psi0, 0.0, t, &IntegratorConfig::default()).unwrap();
    let reference = IntegratorConfig {
        dt: 0.02,
        method: Method::Reference,
        ..IntegratorConfig::default()
    };
    let rf = evolve(&array, &psi0, 0.0, t, &reference).unwrap();
    let p: Vec<f64> = mid.populations();
    let q: Vec<f64> = rf.populations();
    let worst = p
        .iter()
        .zip(&q)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(worst < 1e-6, "{worst}");
}

#[test]
fn zero_hamiltonian_keeps_everything_constant() {
    let topo = fig1c_topology().with_hopping(0.0).unwrap();
    let zero_k = {
        let (chains, mut couplings) = topo.parts();
        for c in &mut couplings {
            c.strength = 0.0;
        }
        spinpump::ArrayTopology::new(chains, couplings, 0.0).unwrap()
    };
    let drive = DriveParams::new(0.0, 0.015).unwrap();
    let n = zero_k.n_sites();
    let psi0 = StateVector::basis(n, 5);
    let regions = [RegionSpec::new("all", 0..n)];
    let traj = propagate(
        &zero_k,
        &drive,
        &DisorderRealization::clean(n),
        &psi0,
        0.0,
        50.0,
        &IntegratorConfig::default(),
        &regions,
    )
    .unwrap();
    for (pops, reg) in traj.site_populations.iter().zip(&traj.region_populations) {
        assert_eq!(pops, &psi0.populations());
        assert_eq!(reg[0], 1.0);
    }
}

#[test]
fn zero_duration_records_only_the_initial_sample() {
    let mut cfg = ExperimentConfig::preset("fig2").unwrap();
    cfg.duration_periods = 0.0;
    let exp = cfg.resolve().unwrap();
    let d = &exp.realizations().unwrap()[0];
    let traj = experiment::run_trajectory(&exp, d).unwrap();
    assert_eq!(traj.len(), 1);
    assert_eq!(traj.times, vec![0.0]);
    assert_eq!(traj.region_populations[0], vec![1.0, 0.0, 0.0]);
}

#[test]
fn clean_tree_is_mirror_symmetric_early_on() {
    let mut cfg = ExperimentConfig::preset("fig2").unwrap();
    cfg.disorder.strength = 0.0;
    cfg.duration_periods = 1.5;
    let exp = cfg.resolve().unwrap();
    let traj = experiment::run_trajectory(&exp, &exp.realizations().unwrap()[0]).unwrap();
    let c2 = traj.chain_population(&exp.topology, 2);
    let c3 = traj.chain_population(&exp.topology, 3);
    let worst = c2
        .iter()
        .zip(&c3)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(worst < 1e-10, "{worst}");
    assert!(c2.iter().copied().fold(0.0, f64::max) > 0.1);
}

#[test]
fn sweep_rows_do_not_depend_on_thread_count() {
    let mut cfg = ExperimentConfig::preset("fig2").unwrap();
    cfg.duration_periods = 0.3;
    cfg.disorder.seeds = vec![4, 9, 2, 4];
    let exp = cfg.resolve().unwrap();
    let dir = tempfile::tempdir().unwrap();
    let one = experiment::sweep(&exp, &dir.path().join("a"), 1).unwrap();
    let three = experiment::sweep(&exp, &dir.path().join("b"), 3).unwrap();
    assert_eq!(one.rows, three.rows);
    assert_eq!(one.rows.len(), 3);
    let read = |p: &std::path::Path| std::fs::read(p).unwrap();
    assert_eq!(read(&one.files[0]), read(&three.files[0]));
    assert_eq!(read(&one.files[1]), read(&three.files[1]));
}

#[test]
fn single_seed_summary_equals_row() {
    let mut cfg = ExperimentConfig::preset("fig2").unwrap();
    cfg.duration_periods = 0.2;
    cfg.disorder.seeds = vec![11];
    let exp = cfg.resolve().unwrap();
    let dir = tempfile::tempdir().unwrap();
    let out = experiment::sweep(&exp, dir.path(), 1).unwrap();
    let row = &out.rows[0];
    for (k, s) in out.summary.iter().take(exp.regions.len()).enumerate() {
        let v = row.final_regions[k];
        assert_eq!((s.mean, s.min, s.max), (Some(v), Some(v), Some(v)));
    }
}

#[test]
fn step_convergence_on_a_short_window() {
    let (topo, drive, disorder) = fig2_parts();
    let psi0 = StateVector::basis(topo.n_sites(), 0);
    let t1 = 0.5 * drive.cycle();
    let coarse = IntegratorConfig::default();
    let fine = IntegratorConfig {
        dt: coarse.dt / 2.0,
        stride: coarse.stride * 2,
        ..coarse
    };
    let a = propagate(&topo, &drive, &disorder, &psi0, 0.0, t1, &coarse, &[]).unwrap();
    let b = propagate(&topo, &drive, &disorder, &psi0, 0.0, t1, &fine, &[]).unwrap();
    assert_eq!(a.len(), b.len());
    for (x, y) in a.site_populations.iter().zip(&b.site_populations) {
        for (p, q) in x.iter().zip(y) {
            assert!((p - q).abs() < 1e-6);
        }
    }
}
