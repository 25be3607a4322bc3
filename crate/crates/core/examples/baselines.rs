//! The comparison models on the class-mean trajectories: a two-timescale
//! RNN trained by motor babbling then imitation, and a plain RNN trained
//! through the arm's forward model.
//!
//!     cargo run --release --example baselines -- [n]

use visuomotor::arm::ArmConfig;
use visuomotor::baselines::{babbling_phase, class_targets, imitation_phase, init_mtrnn, BaselineBudget, RnnFm, TrainedMtrnn};
use visuomotor::data::synth_letters;
use visuomotor::pipeline::eval_reconstruction;
use visuomotor::pipeline::experiments::mean;

fn main() {
    let n = std::env::args().nth(1).map_or(50, |a| a.parse().expect("hidden size"));
    let arm = ArmConfig::default();
    let ds = synth_letters(3, 40, 1).unwrap();
    let targets = class_targets(&ds).unwrap();
    let steps = targets[0].len();
    let budget = BaselineBudget::desk();

    let mut params = init_mtrnn(n, &arm, 1).unwrap();
    let t = std::time::Instant::now();
    let babble = babbling_phase(&mut params, &arm, &budget, steps, 1).unwrap();
    println!("babbling: loss {:.3} -> {:.3} in {:.1}s", mean(&babble[..100]), mean(&babble[babble.len() - 100..]), t.elapsed().as_secs_f64());
    let h0s = imitation_phase(&mut params, &arm, &targets, &budget, 1).unwrap();
    let mtrnn = TrainedMtrnn { params, h0s };
    let paths: Vec<_> = (0..ds.p()).map(|l| mtrnn.executed(l, steps, &arm).unwrap()).collect();
    println!("mtrnn n={n}: test error {:.4}", eval_reconstruction(&paths, &ds.test).unwrap());

    let mut fm = RnnFm::new(n, ds.p(), 5.0, &arm, 1).unwrap();
    let curve = fm.train(&targets, &budget).unwrap();
    let paths: Vec<_> = (0..ds.p()).map(|l| fm.executed(l, steps).unwrap()).collect();
    println!(
        "rnn+fm n={n}: loss {:.3} -> {:.3}, test error {:.4}",
        curve[0],
        curve.last().unwrap(),
        eval_reconstruction(&paths, &ds.test).unwrap()
    );
}
