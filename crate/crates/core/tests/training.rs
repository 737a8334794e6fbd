use std::fs;
use std::path::Path;

use neurcross::angle::AngleMode;
use neurcross::checkpoint::Checkpoint;
use neurcross::losses::tau;
use neurcross::shapes;
use neurcross::train::{train, Stage, TrainConfig};

fn small(iterations: usize) -> TrainConfig {
    TrainConfig {
        iterations,
        log_every: 1,
        checkpoint_every: 2,
        seed: 7,
        ..Default::default()
    }
}

fn read(dir: &Path, name: &str) -> Vec<u8> {
    fs::read(dir.join(name)).unwrap()
}

#[test]
fn repeated_runs_are_bit_identical() {
    let m = shapes::icosphere(1, 0.4);
    let cfg = small(4);
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ra = train(&m, &cfg, None, Some(a.path())).unwrap();
    let rb = train(&m, &cfg, None, Some(b.path())).unwrap();
    assert_eq!(ra.history, rb.history);
    assert_eq!(read(a.path(), "history.csv"), read(b.path(), "history.csv"));
    for name in ["iter_000002.ckpt", "iter_000004.ckpt", "final.ckpt"] {
        let p = Path::new("checkpoints").join(name);
        assert_eq!(read(a.path(), p.to_str().unwrap()), read(b.path(), p.to_str().unwrap()), "{name}");
    }
    let other = TrainConfig { seed: 8, ..cfg };
    let rc = train(&m, &other, None, None).unwrap();
    assert_ne!(ra.sdf.net.params(), rc.sdf.net.params());
}

#[test]
fn logged_tau_follows_the_schedule() {
    let m = shapes::icosphere(0, 0.4);
    let cfg = TrainConfig {
        iterations: 20,
        log_every: 3,
        angle_mode: AngleMode::Direct,
        ..small(20)
    };
    let r = train(&m, &cfg, None, None).unwrap();
    let iters: Vec<usize> = r.history.iter().map(|h| h.iter).collect();
    assert_eq!(iters, vec![0, 3, 6, 9, 12, 15, 18, 19]);
    for h in &r.history {
        assert_eq!(h.tau, tau(h.iter, 20), "iter {}", h.iter);
        assert_eq!(h.stage, Stage::Joint);
    }
    assert_eq!(r.history[0].tau, 1.0);
    assert_eq!(r.history.last().unwrap().tau, 0.0);
}

#[test]
fn two_step_runs_both_stages() {
    let m = shapes::icosphere(0, 0.4);
    let cfg = TrainConfig {
        two_step: true,
        angle_mode: AngleMode::Direct,
        ..small(3)
    };
    let dir = tempfile::tempdir().unwrap();
    let r = train(&m, &cfg, None, Some(dir.path())).unwrap();
    let stages: Vec<Stage> = r.history.iter().map(|h| h.stage).collect();
    assert_eq!(stages, [[Stage::Sdf; 3], [Stage::Field; 3]].concat());
    assert_eq!(r.history.iter().map(|h| h.iter).collect::<Vec<_>>(), (0..6).collect::<Vec<_>>());
    assert!(r.history[3..].iter().all(|h| h.tau == 0.0));
    // The surface network is frozen in the second stage.
    let mid = Checkpoint::load(dir.path().join("checkpoints/iter_000002.ckpt")).unwrap();
    let last = Checkpoint::load(dir.path().join("checkpoints/final.ckpt")).unwrap();
    let four = Checkpoint::load(dir.path().join("checkpoints/iter_000004.ckpt")).unwrap();
    assert_eq!(last.stage, "field");
    assert_eq!(last.iteration, 6);
    assert_eq!(four.sdf.net.params(), last.sdf.net.params());
    assert_ne!(mid.sdf.net.params(), four.sdf.net.params());
    let hist = String::from_utf8(read(dir.path(), "history.csv")).unwrap();
    assert_eq!(hist.lines().count(), 7);
}

#[test]
fn single_iteration_run() {
    let m = shapes::icosphere(0, 0.4);
    let dir = tempfile::tempdir().unwrap();
    let r = train(&m, &small(1), None, Some(dir.path())).unwrap();
    assert_eq!(r.history.len(), 1);
    assert!(r.history[0].total.is_finite());
    assert!(dir.path().join("checkpoints/final.ckpt").exists());
    let timing = String::from_utf8(read(dir.path(), "timing.csv")).unwrap();
    assert_eq!(timing.lines().count(), 2);
}

#[test]
fn zero_iterations_rejected() {
    let m = shapes::icosphere(0, 0.4);
    assert!(train(&m, &small(0), None, None).is_err());
}
