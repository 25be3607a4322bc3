//! Gated control: the correction only runs when the squared visual error
//! exceeds a threshold. Plots the gated path with a plus at every step
//! where the gate opened.
//!
//!     cargo run --release --example intermittent_control -- [visual_iters] [motor_iters]

use visuomotor::aif::AifOptions;
use visuomotor::data::synth_letters;
use visuomotor::pipeline::experiments::{pregate_activations, SeedRun, THRESHOLD_GRID};
use visuomotor::pipeline::{path_error, TrainConfig};
use visuomotor::plot::{self, Series};

fn main() {
    let mut args = std::env::args().skip(1).map(|a| a.parse::<usize>().expect("integer argument"));
    let cfg = TrainConfig {
        iterations: args.next().unwrap_or(10_000),
        motor_iterations: args.next().unwrap_or(10_000),
        ..TrainConfig::default()
    };
    let run = SeedRun::train(synth_letters(3, 40, cfg.seed).unwrap(), &cfg).unwrap();
    let goal = &run.goals().unwrap()[0];

    println!("threshold  open-loop-would-fire  fired  error");
    let mut series = vec![Series::new("goal", goal.clone(), 0).dashed()];
    for (k, &threshold) in THRESHOLD_GRID.iter().enumerate() {
        let gated = TrainConfig {
            aif: AifOptions { gate_threshold: Some(threshold), ..cfg.aif },
            ..cfg.clone()
        };
        let out = run.agent.motor_runs(0, goal, &gated, None).unwrap();
        println!(
            "{threshold:>9.0e}  {:>20}  {:>5}  {:.4}",
            pregate_activations(&out.uncontrolled, threshold),
            out.controlled.activations(),
            path_error(&out.controlled.executed(), goal)
        );
        if k == 2 {
            let markers = out.controlled.steps.iter().map(|s| s.gate_active).collect();
            series.push(Series::new(&format!("gated {threshold:.0e}"), out.controlled.executed(), 1).with_markers(markers));
        }
    }
    let path = std::env::temp_dir().join("intermittent_control.svg");
    std::fs::write(&path, plot::plot_trajectories(&series, "gate activations")).unwrap();
    println!("wrote {}", path.display());
}
