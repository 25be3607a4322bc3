//! Trains the visual generator and compares per-class rollouts with the
//! test set before and after training.
//!
//!     cargo run --release --example visual_generation -- [iterations]

use visuomotor::data::synth_letters;
use visuomotor::pipeline::experiments::mean;
use visuomotor::pipeline::{path_error, train_visual, Generator, TrainConfig};
use visuomotor::plot;
use visuomotor::seeding::stream;

fn main() {
    let iterations = std::env::args().nth(1).map_or(10_000, |a| a.parse().expect("iterations"));
    let cfg = TrainConfig { iterations, ..TrainConfig::default() };
    let ds = synth_letters(3, 40, cfg.seed).unwrap();
    let steps = ds.train[0].len();

    let fresh = Generator::init(2, ds.p(), cfg.tau_visual, &cfg, stream::VISUAL_INIT, stream::VISUAL_H0).unwrap();
    let t = std::time::Instant::now();
    let (visual, curve) = train_visual(&ds, &cfg).unwrap();
    let window = curve.len().min(100);
    println!(
        "{iterations} iterations in {:.1}s; training error {:.4} -> {:.4}",
        t.elapsed().as_secs_f64(),
        mean(&curve[..window]),
        mean(&curve[curve.len() - window..])
    );

    let dir = std::env::temp_dir().join("visual_generation");
    std::fs::create_dir_all(&dir).unwrap();
    for (label, name) in ds.class_names.iter().enumerate() {
        let err = |g: &Generator| {
            let out = g.natural_2d(label, steps).unwrap();
            mean(&ds.test_of_class(label).iter().map(|t| path_error(&out, &t.points)).collect::<Vec<_>>())
        };
        println!("class {name}: untrained {:.4}, trained {:.4}", err(&fresh), err(&visual));
        let svg = plot::plot_heatmap(&visual.natural_2d(label, steps).unwrap(), None, plot::HEATMAP_GRID, name).unwrap();
        std::fs::write(dir.join(format!("{name}.svg")), svg).unwrap();
    }
    println!("heatmaps in {}", dir.display());
}
