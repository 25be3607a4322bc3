//! Damaged visual weights repaired online by the motor outcome: the
//! executed arm position flows back as the visual network's target.
//!
//!     cargo run --release --example impairment -- [visual_iters] [motor_iters]

use visuomotor::data::synth_letters;
use visuomotor::pipeline::experiments::{impair_params, run_impairment, SeedRun, IMPAIRMENT_GRID};
use visuomotor::pipeline::TrainConfig;

fn main() {
    let mut args = std::env::args().skip(1).map(|a| a.parse::<usize>().expect("integer argument"));
    let cfg = TrainConfig {
        iterations: args.next().unwrap_or(10_000),
        motor_iterations: args.next().unwrap_or(10_000),
        ..TrainConfig::default()
    };
    let run = SeedRun::train(synth_letters(3, 40, cfg.seed).unwrap(), &cfg).unwrap();

    let w = &run.agent.visual.params.w_out;
    let hit = impair_params(&run.agent.visual.params, 0.1, cfg.seed).unwrap();
    println!("readout change at sigma2 0.1: {:.3} of its norm", (&hit.w_out - w).norm() / w.norm());

    let report = run_impairment(&[run], &IMPAIRMENT_GRID).unwrap();
    print!("{}", report.summary_csv());
}
