use nalgebra::Vector2;
use proptest::prelude::*;

use super::experiments::*;
use super::*;
use crate::data::synth_letters;

fn tiny_cfg() -> TrainConfig {
    TrainConfig {
        n: 12,
        iterations: 300,
        motor_iterations: 200,
        ..TrainConfig::default()
    }
}

fn tiny_run(seed: u64) -> SeedRun {
    let cfg = TrainConfig { seed, ..tiny_cfg() };
    SeedRun::train(synth_letters(2, 6, seed).unwrap(), &cfg).unwrap()
}

fn pt(x: f64, y: f64) -> Vector2<f64> {
    Vector2::new(x, y)
}

#[test]
fn path_error_examples() {
    let a = vec![pt(0.0, 0.0), pt(1.0, 2.0), pt(-1.0, 0.5)];
    assert_eq!(path_error(&a, &a), 0.0);
    let shifted: Vec<_> = a.iter().map(|p| p + pt(1.0, 0.0)).collect();
    assert!((path_error(&a, &shifted) - 1.0).abs() < 1e-15);
    // Distances 0 and 5 average to 2.5.
    assert_eq!(path_error(&[pt(0.0, 0.0), pt(0.0, 0.0)], &[pt(0.0, 0.0), pt(3.0, 4.0)]), 2.5);
    assert_eq!(path_error(&[], &[]), 0.0);
}

proptest! {
    #[test]
    fn path_error_is_symmetric_and_translation_invariant(
        pts in proptest::collection::vec((-5.0..5.0f64, -5.0..5.0f64, -5.0..5.0f64, -5.0..5.0f64), 1..30),
        dx in -3.0..3.0f64,
        dy in -3.0..3.0f64,
    ) {
        let a: Vec<_> = pts.iter().map(|p| pt(p.0, p.1)).collect();
        let b: Vec<_> = pts.iter().map(|p| pt(p.2, p.3)).collect();
        let e = path_error(&a, &b);
        prop_assert!(e >= 0.0);
        prop_assert!((e - path_error(&b, &a)).abs() < 1e-12);
        let shift = |v: &[Vector2<f64>]| v.iter().map(|p| p + pt(dx, dy)).collect::<Vec<_>>();
        prop_assert!((e - path_error(&shift(&a), &shift(&b))).abs() < 1e-9);
    }
}

#[test]
fn reconstruction_rejects_bad_inputs() {
    let ds = synth_letters(2, 6, 1).unwrap();
    let steps = ds.test[0].len();
    assert!(eval_reconstruction(&[vec![pt(0.0, 0.0); steps]], &ds.test).is_err());
    let produced = vec![vec![pt(0.0, 0.0); steps - 1]; 2];
    assert!(eval_reconstruction(&produced, &ds.test).is_err());
    assert!(eval_reconstruction(&produced, &[]).is_err());
    let exact: Vec<_> = (0..2).map(|l| ds.test_of_class(l)[0].points.clone()).collect();
    assert!(eval_reconstruction(&exact, &ds.test).unwrap() >= 0.0);
}

#[test]
fn zero_iterations_leave_networks_at_init() {
    let ds = synth_letters(2, 6, 3).unwrap();
    let cfg = TrainConfig { iterations: 0, motor_iterations: 0, ..tiny_cfg() };
    let (agent, vc, mc) = train_agent(&ds, &cfg).unwrap();
    assert!(vc.is_empty() && mc.is_empty());
    let fresh_v = Generator::init(2, 2, cfg.tau_visual, &cfg, stream::VISUAL_INIT, stream::VISUAL_H0).unwrap();
    let fresh_m = Generator::init(3, 2, cfg.tau_motor, &cfg, stream::MOTOR_INIT, stream::MOTOR_H0).unwrap();
    assert_eq!(agent.visual, fresh_v);
    assert_eq!(agent.motor, fresh_m);
}

#[test]
fn visual_training_fits_a_single_trajectory() {
    let mut ds = synth_letters(1, 2, 5).unwrap();
    ds.train.truncate(1);
    let cfg = TrainConfig { iterations: 5000, ..tiny_cfg() };
    let (_, curve) = train_visual(&ds, &cfg).unwrap();
    let head = mean(&curve[..50]);
    let tail = mean(&curve[curve.len() - 50..]);
    assert!(tail < 0.2 * head, "error {head} -> {tail}");
}

#[test]
fn training_is_reproducible() {
    assert_eq!(tiny_run(4).agent, tiny_run(4).agent);
    assert_ne!(tiny_run(4).agent.visual, tiny_run(5).agent.visual);
}

#[test]
fn agent_directory_round_trip() {
    let run = tiny_run(2);
    let dir = tempfile::tempdir().unwrap();
    run.agent.save(dir.path()).unwrap();
    let back = Agent::load(dir.path()).unwrap();
    assert_eq!(back, run.agent);
    std::fs::remove_file(dir.path().join("agent.toml")).unwrap();
    assert!(Agent::load(dir.path()).is_err());
}

#[test]
fn unit_impairment_is_identity_and_seeded() {
    let run = tiny_run(1);
    let params = &run.agent.visual.params;
    assert_eq!(&impair_params(params, 0.0, 9).unwrap(), params);
    assert_eq!(impair_params(params, 0.05, 9).unwrap(), impair_params(params, 0.05, 9).unwrap());
    assert_ne!(impair_params(params, 0.05, 9).unwrap(), impair_params(params, 0.05, 10).unwrap());
    assert!(impair_params(params, -0.1, 9).is_err());
}

#[test]
fn impairment_noise_has_the_requested_variance() {
    let params = crate::pcrnn::PcrnnParams::new(60, 3, 2, 5.0, &mut rng(1, 0)).unwrap();
    let sigma2 = 0.04;
    let hit = impair_params(&params, sigma2, 3).unwrap();
    let ratios: Vec<f64> = hit
        .w_p
        .iter()
        .zip(params.w_p.iter())
        .chain(hit.w_f.iter().zip(params.w_f.iter()))
        .filter(|(_, w)| w.abs() > 1e-9)
        .map(|(h, w)| h / w - 1.0)
        .collect();
    let m = mean(&ratios);
    let var = ratios.iter().map(|r| (r - m).powi(2)).sum::<f64>() / (ratios.len() - 1) as f64;
    assert!(m.abs() < 0.01, "mean {m}");
    assert!((var - sigma2).abs() < 0.1 * sigma2, "variance {var}");
}

#[test]
fn zero_perturbation_matches_the_unperturbed_run() {
    let run = tiny_run(3);
    let goals = run.goals().unwrap();
    let clean = run.agent.motor_runs(0, &goals[0], &run.cfg, None).unwrap();
    let dir = nalgebra::Vector3::new(0.3, -1.0, 2.0);
    let zero = perturbation_schedule(&dir, 0.0, goals[0].len());
    let same = run.agent.motor_runs(0, &goals[0], &run.cfg, Some(&zero)).unwrap();
    assert_eq!(clean, same);
    let kicked = perturbation_schedule(&dir, 0.5, goals[0].len());
    assert!(kicked[..PERTURBATION_ONSET].iter().all(|k| k.norm() == 0.0));
    assert!((kicked[PERTURBATION_ONSET].norm() - dir.norm() * 0.5f64.sqrt()).abs() < 1e-12);
}

#[test]
fn experiment_reports_are_complete() {
    let runs = vec![tiny_run(1), tiny_run(2)];
    let report = run_perturbation(&runs, &[0.0, 0.5]).unwrap();
    assert_eq!(report.seeds, vec![1, 2]);
    assert_eq!(report.values.len(), 2);
    assert!(report.values.iter().all(|c| c.len() == 2 && c.iter().all(|s| s.len() == 2)));
    assert!(report.values.iter().flatten().flatten().all(|v| v.is_finite() && *v >= 0.0));
    assert_eq!(report.condition_index(0.5), Some(1));
    assert!(report.column("nope").is_err());
    let summary = report.summary_csv();
    assert!(summary.starts_with("sigma2,controlled_mean,controlled_se,uncontrolled_mean,uncontrolled_se\n"));
    assert_eq!(summary.lines().count(), 3);
    assert_eq!(report.seeds_csv().lines().count(), 5);
    let dir = tempfile::tempdir().unwrap();
    let files = report.write(dir.path()).unwrap();
    assert_eq!(files.len(), 3);
    assert_eq!(std::fs::read_to_string(&files[0]).unwrap(), summary);
    // Parallel evaluation still produces the same bytes.
    assert_eq!(run_perturbation(&runs, &[0.0, 0.5]).unwrap(), report);
}

#[test]
fn mean_and_standard_error() {
    assert_eq!(mean(&[1.0, 2.0, 3.0]), 2.0);
    assert!(mean(&[]).is_nan());
    assert_eq!(std_error(&[4.0]), 0.0);
    // Sample sd 1, three samples.
    assert!((std_error(&[1.0, 2.0, 3.0]) - 1.0 / 3f64.sqrt()).abs() < 1e-15);
}

#[test]
fn pregate_count_is_monotone_in_threshold() {
    let run = tiny_run(1);
    let goals = run.goals().unwrap();
    let trace = run.agent.motor_runs(1, &goals[1], &run.cfg, None).unwrap().uncontrolled;
    let counts: Vec<usize> = THRESHOLD_GRID.iter().map(|&t| pregate_activations(&trace, t)).collect();
    assert!(counts.windows(2).all(|w| w[0] >= w[1]));
    assert_eq!(pregate_activations(&trace, 0.0), trace.len());
}

#[test]
fn sandbox_without_inference_follows_the_natural_path() {
    let cfg = SandboxConfig { n: 10, steps: 30, perturb_step: 10, ..SandboxConfig::default() };
    let sb = Sandbox::new(&cfg, 1).unwrap();
    let natural = sb.net.natural_2d(0, cfg.steps).unwrap();
    assert_eq!(sb.rollout(0.0, false).unwrap(), natural);
    let kicked = sb.rollout(0.0, true).unwrap();
    assert_eq!(kicked[..10], natural[..10]);
    assert_ne!(kicked[10], natural[10]);
    assert!(Sandbox::new(&SandboxConfig { perturb_step: 30, ..cfg }, 1).is_err());
}

#[test]
fn sandbox_training_reduces_the_final_distance() {
    let cfg = SandboxConfig { n: 20, ..SandboxConfig::default() };
    let fresh = Sandbox::new(&cfg, 2).unwrap();
    let mut trained = fresh.clone();
    let curve = trained.train().unwrap();
    assert!(curve.last().unwrap() < &curve[0]);
    let before = fresh.final_distance(&fresh.rollout(0.0, false).unwrap());
    let after = trained.final_distance(&trained.rollout(0.0, false).unwrap());
    assert!(after < before, "{before} -> {after}");
}
