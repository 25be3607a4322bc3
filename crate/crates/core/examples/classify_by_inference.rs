//! Classification without a classifier: present a test trajectory a few
//! times and let the hidden causes settle on a class.
//!
//!     cargo run --release --example classify_by_inference -- [iterations]

use nalgebra::DVector;
use visuomotor::data::synth_letters;
use visuomotor::pcrnn::LearningRates;
use visuomotor::pipeline::{train_visual, TrainConfig};

fn main() {
    let iterations = std::env::args().nth(1).map_or(10_000, |a| a.parse().expect("iterations"));
    let cfg = TrainConfig { iterations, ..TrainConfig::default() };
    let ds = synth_letters(3, 40, cfg.seed).unwrap();
    let (visual, _) = train_visual(&ds, &cfg).unwrap();
    let rates = LearningRates::prediction().with_inference(cfg.infer_alpha_h, cfg.infer_alpha_c);

    let mut correct = vec![0usize; cfg.presentations];
    for (k, traj) in ds.test.iter().enumerate() {
        let targets: Vec<DVector<f64>> = traj.points.iter().map(|p| DVector::from_column_slice(p.as_slice())).collect();
        let inf = visual.params.infer_causes(&visual.h0, &targets, cfg.presentations, &rates).unwrap();
        for (i, c) in inf.history.iter().enumerate() {
            correct[i] += (c.argmax().0 == traj.label) as usize;
        }
        if k % 20 == 0 {
            let last = inf.history.last().unwrap();
            println!("test {k:>2} ({}): causes {:.3?}", ds.class_names[traj.label], last.as_slice());
        }
    }
    for (i, c) in correct.iter().enumerate() {
        println!("after {} presentation(s): accuracy {:.3}", i + 1, *c as f64 / ds.test.len() as f64);
    }
}
