//! The full agent: the visual generator sets goals, the motor generator
//! learns to reach them through the arm with no motor supervision.
//! Compares controlled and natural (open-loop) execution.
//!
//!     cargo run --release --example motor_control -- [visual_iters] [motor_iters]

use visuomotor::data::synth_letters;
use visuomotor::pipeline::experiments::SeedRun;
use visuomotor::pipeline::{path_error, TrainConfig};
use visuomotor::plot::{self, Series};

fn main() {
    let mut args = std::env::args().skip(1).map(|a| a.parse::<usize>().expect("integer argument"));
    let cfg = TrainConfig {
        iterations: args.next().unwrap_or(10_000),
        motor_iterations: args.next().unwrap_or(10_000),
        ..TrainConfig::default()
    };
    let t = std::time::Instant::now();
    let run = SeedRun::train(synth_letters(3, 40, cfg.seed).unwrap(), &cfg).unwrap();
    println!("trained in {:.1}s; motor goal distance {:.3} -> {:.3}", t.elapsed().as_secs_f64(), run.motor_curve[0], run.motor_curve.last().unwrap());

    let mut series = Vec::new();
    for (label, goal) in run.goals().unwrap().iter().enumerate() {
        let out = run.agent.motor_runs(label, goal, &cfg, None).unwrap();
        let name = &run.agent.class_names[label];
        println!(
            "class {name}: controlled {:.4}, natural {:.4}",
            path_error(&out.controlled.executed(), goal),
            path_error(&out.uncontrolled.executed(), goal)
        );
        series.push(Series::new(&format!("goal {name}"), goal.clone(), 3 * label).dashed());
        series.push(Series::new(&format!("controlled {name}"), out.controlled.executed(), 3 * label + 1));
        series.push(Series::new(&format!("natural {name}"), out.uncontrolled.executed(), 3 * label + 2));
    }
    let path = std::env::temp_dir().join("motor_control.svg");
    std::fs::write(&path, plot::plot_trajectories(&series, "goal, controlled and natural")).unwrap();
    println!("wrote {}", path.display());
}
