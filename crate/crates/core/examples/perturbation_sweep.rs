//! Constant motor perturbations of growing variance, with and without the
//! active-inference correction. Writes the report CSVs and figures.
//!
//!     cargo run --release --example perturbation_sweep -- [visual_iters] [motor_iters]

use visuomotor::data::synth_letters;
use visuomotor::pipeline::experiments::{run_perturbation, SeedRun, PERTURBATION_GRID};
use visuomotor::pipeline::TrainConfig;
use visuomotor::plot;

fn main() {
    let mut args = std::env::args().skip(1).map(|a| a.parse::<usize>().expect("integer argument"));
    let cfg = TrainConfig {
        iterations: args.next().unwrap_or(10_000),
        motor_iterations: args.next().unwrap_or(10_000),
        ..TrainConfig::default()
    };
    let run = SeedRun::train(synth_letters(3, 40, cfg.seed).unwrap(), &cfg).unwrap();
    let report = run_perturbation(&[run], &PERTURBATION_GRID).unwrap();
    print!("{}", report.summary_csv());

    let dir = std::env::temp_dir().join("perturbation_sweep");
    let mut files = report.write(&dir).unwrap();
    files.extend(plot::write_report_figures(&report, &dir).unwrap());
    println!("{} files in {}", files.len(), dir.display());
}
