use nalgebra::{DMatrix, DVector, Vector2};

use super::leaky::{masked_squared_error, Adam, LeakyRnn};
use super::mtrnn::{MtrnnParams, JOINT_DIM};
use super::*;
use crate::arm::{ArmConfig, MotorCommand};
use crate::error::Error;
use crate::seeding::{normal_vector, rng};

fn small_mtrnn(seed: u64) -> MtrnnParams {
    let mut p = MtrnnParams::new(3, 3, 2.0, 4.0, &ArmConfig::default(), &MotorCommand::new(0.1, 0.2, 0.3), &mut rng(seed, 0)).unwrap();
    // Non-zero biases so their gradients are exercised.
    p.net.b = normal_vector(&mut rng(seed, 1), 6, 0.3);
    p
}

fn loss_of(net: &LeakyRnn, u0: &DVector<f64>, input: &DVector<f64>, targets: &[DVector<f64>]) -> f64 {
    let tape = net.forward(u0, input, targets.len()).unwrap();
    let mask = DVector::from_element(net.outputs(), 1.0);
    masked_squared_error(tape.outputs(), targets, &mask).unwrap().0
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt().max(1e-12);
    diff / scale
}

/// Central differences of the loss over one parameter block.
fn numeric_block<F>(net: &LeakyRnn, len: usize, mut poke: F, loss: &dyn Fn(&LeakyRnn) -> f64) -> Vec<f64>
where
    F: FnMut(&mut LeakyRnn, usize, f64),
{
    let h = 1e-6;
    (0..len)
        .map(|k| {
            let mut plus = net.clone();
            poke(&mut plus, k, h);
            let mut minus = net.clone();
            poke(&mut minus, k, -h);
            (loss(&plus) - loss(&minus)) / (2.0 * h)
        })
        .collect()
}

#[test]
fn bptt_matches_finite_differences_with_feedback() {
    let params = small_mtrnn(4);
    let net = &params.net;
    let u0 = normal_vector(&mut rng(5, 0), 6, 0.5);
    let input = DVector::zeros(0);
    let targets: Vec<DVector<f64>> = (0..5).map(|t| normal_vector(&mut rng(6, t), JOINT_DIM, 1.0)).collect();
    let tape = net.forward(&u0, &input, 5).unwrap();
    let (_, dy) = masked_squared_error(tape.outputs(), &targets, &DVector::from_element(JOINT_DIM, 1.0)).unwrap();
    let g = net.backward(&tape, &dy).unwrap();
    let loss = |n: &LeakyRnn| loss_of(n, &u0, &input, &targets);

    let w = numeric_block(net, net.w.len(), |n, k, h| n.w.as_mut_slice()[k] += h, &loss);
    assert!(rel_err(g.w.as_slice(), &w) < 1e-4, "W: {}", rel_err(g.w.as_slice(), &w));
    let fb = numeric_block(
        net,
        net.w_fb.len(),
        |n, k, h| {
            // Only fed rows are parameters; masked rows must stay zero.
            let row = k % n.w_fb.nrows();
            if n.fb_mask[row] != 0.0 {
                n.w_fb.as_mut_slice()[k] += h;
            }
        },
        &loss,
    );
    assert!(rel_err(g.w_fb.as_slice(), &fb) < 1e-4);
    let b = numeric_block(net, net.b.len(), |n, k, h| n.b[k] += h, &loss);
    assert!(rel_err(g.b.as_slice(), &b) < 1e-4);
    let wo = numeric_block(net, net.w_out.len(), |n, k, h| n.w_out.as_mut_slice()[k] += h, &loss);
    assert!(rel_err(g.w_out.as_slice(), &wo) < 1e-4);
    let bo = numeric_block(net, net.b_out.len(), |n, k, h| n.b_out[k] += h, &loss);
    assert!(rel_err(g.b_out.as_slice(), &bo) < 1e-4);

    let h = 1e-6;
    let du0: Vec<f64> = (0..6)
        .map(|k| {
            let mut up = u0.clone();
            up[k] += h;
            let mut down = u0.clone();
            down[k] -= h;
            (loss_of(net, &up, &input, &targets) - loss_of(net, &down, &input, &targets)) / (2.0 * h)
        })
        .collect();
    assert!(rel_err(g.u0.as_slice(), &du0) < 1e-4);
}

#[test]
fn bptt_matches_finite_differences_with_input() {
    let net = LeakyRnn::new(&[2.0, 3.0, 5.0, 1.5], 2, 3, &[false; 4], &mut rng(8, 0)).unwrap();
    let u0 = normal_vector(&mut rng(8, 1), 4, 0.5);
    let input = DVector::from_column_slice(&[0.0, 1.0]);
    let targets: Vec<DVector<f64>> = (0..5).map(|t| normal_vector(&mut rng(9, t), 3, 1.0)).collect();
    let tape = net.forward(&u0, &input, 5).unwrap();
    let (_, dy) = masked_squared_error(tape.outputs(), &targets, &DVector::from_element(3, 1.0)).unwrap();
    let g = net.backward(&tape, &dy).unwrap();
    let loss = |n: &LeakyRnn| loss_of(n, &u0, &input, &targets);
    let win = numeric_block(&net, net.w_in.len(), |n, k, h| n.w_in.as_mut_slice()[k] += h, &loss);
    assert!(rel_err(g.w_in.as_slice(), &win) < 1e-4);
    let w = numeric_block(&net, net.w.len(), |n, k, h| n.w.as_mut_slice()[k] += h, &loss);
    assert!(rel_err(g.w.as_slice(), &w) < 1e-4);
}

#[test]
fn rnnfm_gradient_through_arm_matches_finite_differences() {
    let arm = ArmConfig::default();
    let fm = RnnFm::new(6, 2, 3.0, &arm, 2).unwrap();
    let target: Vec<Vector2<f64>> = (0..5).map(|t| Vector2::new(0.1 * t as f64, -0.05 * t as f64)).collect();
    let (_, g) = fm.loss_and_grads(1, &target).unwrap();
    let loss = |net: &LeakyRnn| {
        let probe = RnnFm { net: net.clone(), ..fm.clone() };
        probe.loss_and_grads(1, &target).unwrap().0
    };
    let w = numeric_block(&fm.net, fm.net.w.len(), |n, k, h| n.w.as_mut_slice()[k] += h, &loss);
    assert!(rel_err(g.w.as_slice(), &w) < 1e-4);
    let wo = numeric_block(&fm.net, fm.net.w_out.len(), |n, k, h| n.w_out.as_mut_slice()[k] += h, &loss);
    assert!(rel_err(g.w_out.as_slice(), &wo) < 1e-4);
    let win = numeric_block(&fm.net, fm.net.w_in.len(), |n, k, h| n.w_in.as_mut_slice()[k] += h, &loss);
    assert!(rel_err(g.w_in.as_slice(), &win) < 1e-4);
}

#[test]
fn zero_state_and_weights_give_zero_output() {
    let mut p = small_mtrnn(1);
    p.net.w.fill(0.0);
    p.net.w_fb.fill(0.0);
    p.net.b.fill(0.0);
    p.net.b_out.fill(0.0);
    let out = p.rollout(&DVector::zeros(6), 4).unwrap();
    assert!(out.iter().all(|y| y.iter().all(|v| *v == 0.0)));
}

#[test]
fn equal_timescales_match_single_leaky_rnn() {
    let p = MtrnnParams::new(2, 3, 4.0, 4.0, &ArmConfig::default(), &MotorCommand::zero(), &mut rng(3, 0)).unwrap();
    let net = &p.net;
    let u0 = normal_vector(&mut rng(3, 1), 5, 1.0);
    let got = p.rollout(&u0, 6).unwrap();
    // Written out directly: one timescale, feedback into the first block.
    let mut u = u0.clone();
    let mut y = &net.w_out * u.map(f64::tanh) + &net.b_out;
    let mut fb = DMatrix::zeros(5, JOINT_DIM);
    fb.rows_mut(0, 2).copy_from(&net.w_fb.rows(0, 2));
    for out in &got {
        u = &u * 0.75 + (&net.w * u.map(f64::tanh) + &fb * &y + &net.b) * 0.25;
        y = &net.w_out * u.map(f64::tanh) + &net.b_out;
        assert!((out - &y).amax() < 1e-12);
    }
}

#[test]
fn feedback_only_reaches_fast_units() {
    let p = small_mtrnn(2);
    assert!(p.net.w_fb.rows(3, 3).iter().all(|v| *v == 0.0));
    let mut trained = p.clone();
    let arm = ArmConfig::default();
    let budget = BaselineBudget { babbling_iterations: 5, ..BaselineBudget::default() };
    babbling_phase(&mut trained, &arm, &budget, 8, 1).unwrap();
    assert!(trained.net.w_fb.rows(3, 3).iter().all(|v| *v == 0.0));
    assert_ne!(trained.net.w_fb.rows(0, 3), p.net.w_fb.rows(0, 3));
}

#[test]
fn rejects_inverted_timescales() {
    let r = MtrnnParams::new(2, 2, 10.0, 5.0, &ArmConfig::default(), &MotorCommand::zero(), &mut rng(0, 0));
    assert!(matches!(r, Err(Error::Config(_))));
}

#[test]
fn small_learning_rate_decreases_loss_on_toy_problem() {
    let mut p = small_mtrnn(7);
    let h0 = normal_vector(&mut rng(7, 9), 6, 0.5);
    let targets: Vec<DVector<f64>> = (0..8).map(|t| DVector::from_element(JOINT_DIM, 0.1 * t as f64)).collect();
    let mut opt = Adam::new(1e-3, 0.0, p.net.parameter_count());
    let mut last = f64::INFINITY;
    for _ in 0..10 {
        let loss = p.train_step(&mut opt, &h0, &targets).unwrap();
        assert!(loss < last);
        last = loss;
    }
}

#[test]
fn zero_budgets_leave_weights_unchanged() {
    let arm = ArmConfig::default();
    let budget = BaselineBudget {
        babbling_iterations: 0,
        imitation_iterations: 0,
        rnnfm_iterations: 0,
        infer_steps: 3,
        ..BaselineBudget::default()
    };
    let fresh = init_mtrnn(6, &arm, 1).unwrap();
    let mut p = fresh.clone();
    assert!(babbling_phase(&mut p, &arm, &budget, 10, 1).unwrap().is_empty());
    let targets = vec![vec![Vector2::new(0.0, 0.0); 10], vec![Vector2::new(0.5, 0.5); 10]];
    let h0s = imitation_phase(&mut p, &arm, &targets, &budget, 1).unwrap();
    assert_eq!(p, fresh);
    assert_eq!(h0s.len(), 2);
    assert!((&h0s[0] - &h0s[1]).norm() > 0.0);

    let mut fm = RnnFm::new(6, 2, 5.0, &arm, 1).unwrap();
    let before = fm.clone();
    assert!(fm.train(&targets, &budget).unwrap().is_empty());
    assert_eq!(fm, before);
}

#[test]
fn babbling_improves_visuomotor_consistency() {
    let arm = ArmConfig::default();
    let budget = BaselineBudget { babbling_iterations: 3000, ..BaselineBudget::default() };
    let mut p = init_mtrnn(10, &arm, 2).unwrap();
    let held_out: Vec<DVector<f64>> = (0..10).map(|k| normal_vector(&mut rng(77, k), 10, 1.0)).collect();
    let score = |p: &MtrnnParams| held_out.iter().map(|h| p.joint_consistency(h, 20, &arm).unwrap()).sum::<f64>();
    let before = score(&p);
    babbling_phase(&mut p, &arm, &budget, 20, 2).unwrap();
    let after = score(&p);
    assert!(after < before);
}

#[test]
fn baseline_training_is_reproducible() {
    let arm = ArmConfig::default();
    let budget = BaselineBudget {
        babbling_iterations: 20,
        imitation_iterations: 2,
        infer_steps: 3,
        rnnfm_iterations: 10,
        ..BaselineBudget::default()
    };
    let targets = vec![vec![Vector2::new(0.1, 0.2); 12]];
    let a = train_mtrnn(8, &arm, &targets, &budget, 3).unwrap();
    let b = train_mtrnn(8, &arm, &targets, &budget, 3).unwrap();
    assert_eq!(a, b);
    let mut f1 = RnnFm::new(8, 1, 5.0, &arm, 3).unwrap();
    let mut f2 = f1.clone();
    assert_eq!(f1.train(&targets, &budget).unwrap(), f2.train(&targets, &budget).unwrap());
}

#[test]
fn home_posture_reaches_scene_origin() {
    let arm = ArmConfig::default();
    assert!(arm.forward_kinematics(&home_posture(&arm)).norm() < 1e-6);
}

#[test]
fn mtrnn_checkpoint_round_trip() {
    let p = small_mtrnn(9);
    let bytes = p.encode().unwrap();
    assert_eq!(&bytes[..6], b"MTRNN1");
    let q = MtrnnParams::decode(&bytes).unwrap();
    assert_eq!(p, q);
    for (a, b) in p.net.w.iter().zip(q.net.w.iter()) {
        assert_eq!(a.to_bits(), b.to_bits());
    }
    let mut bad = bytes.clone();
    bad[0] = b'P';
    assert!(matches!(MtrnnParams::decode(&bad), Err(Error::Checkpoint(_))));
    assert!(matches!(MtrnnParams::decode(&bytes[..bytes.len() - 8]), Err(Error::Checkpoint(_))));
    // A PC-RNN file is not an MTRNN file.
    let pc = crate::checkpoint::encode_pcrnn(&crate::pcrnn::PcrnnParams::new(4, 1, 2, 5.0, &mut rng(0, 0)).unwrap()).unwrap();
    assert!(MtrnnParams::decode(&pc).is_err());
}

#[test]
fn capacity_csv_has_the_documented_columns() {
    let report = CapacityReport {
        rows: vec![
            CapacityRow { model: "mtrnn".into(), n: 50, p: 1, seed: 1, test_error: 0.5 },
            CapacityRow { model: "mtrnn".into(), n: 50, p: 1, seed: 2, test_error: 0.7 },
        ],
    };
    assert_eq!(report.to_csv(), "model,n,p,seed,test_error\nmtrnn,50,1,1,0.5\nmtrnn,50,1,2,0.7\n");
    assert!((report.mean("mtrnn", 50, 1) - 0.6).abs() < 1e-12);
    assert!(report.summary_csv().starts_with("model,n,p,test_error_mean,test_error_se\nmtrnn,50,1,0.6"));
}
