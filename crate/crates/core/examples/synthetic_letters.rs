//! The synthetic letter corpus: generation, the per-class split, saving to
//! CSV, and a Gaussian heatmap of each class mean.
//!
//!     cargo run --release --example synthetic_letters -- [classes] [per_class]

use visuomotor::data::synth_letters;
use visuomotor::plot;

fn main() {
    let mut args = std::env::args().skip(1).map(|a| a.parse::<usize>().expect("integer argument"));
    let classes = args.next().unwrap_or(3);
    let per_class = args.next().unwrap_or(40);

    let ds = synth_letters(classes, per_class, 1).unwrap();
    println!("{}", ds.manifest());

    let dir = std::env::temp_dir().join("synthetic_letters");
    let files = ds.save_dir(&dir).unwrap();
    println!("{} trajectory files under {}", files.len(), dir.display());

    for (label, name) in ds.class_names.iter().enumerate() {
        let mean = ds.class_mean(label).unwrap();
        let extent = mean.iter().fold(0.0f64, |m, p| m.max(p.norm()));
        println!("class {name}: {} train, {} test, max radius {extent:.3}", ds.train_of_class(label).len(), ds.test_of_class(label).len());
        let svg = plot::plot_heatmap(&mean, None, plot::HEATMAP_GRID, &format!("class {name} mean")).unwrap();
        std::fs::write(dir.join(format!("heatmap_{name}.svg")), svg).unwrap();
    }
}
