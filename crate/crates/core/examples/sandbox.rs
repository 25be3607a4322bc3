//! A single network whose output is the controlled 2-D position, steered
//! to a constant target by hidden-state inference alone.
//!
//!     cargo run --release --example sandbox

use visuomotor::pipeline::experiments::{Sandbox, SandboxConfig, SANDBOX_ALPHA_GRID};
use visuomotor::plot::{self, Series};

fn main() {
    let cfg = SandboxConfig::default();
    let fresh = Sandbox::new(&cfg, 1).unwrap();
    let mut trained = fresh.clone();
    let curve = trained.train().unwrap();
    println!("training error {:.4} -> {:.4}", curve[0], curve.last().unwrap());

    let mut series = Vec::new();
    for (k, &alpha) in SANDBOX_ALPHA_GRID.iter().enumerate() {
        let path = fresh.rollout(alpha, false).unwrap();
        let kicked = trained.rollout(alpha, true).unwrap();
        println!(
            "alpha_h {alpha:<5}: untrained final distance {:.4}, trained+kick {:.4}",
            fresh.final_distance(&path),
            trained.final_distance(&kicked)
        );
        series.push(Series::new(&format!("alpha_h {alpha}"), path, k));
    }
    let out = std::env::temp_dir().join("sandbox.svg");
    std::fs::write(&out, plot::plot_trajectories(&series, "towards (1, 1)")).unwrap();
    println!("wrote {}", out.display());
}
