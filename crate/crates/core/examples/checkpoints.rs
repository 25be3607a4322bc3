//! Saving and reloading: a trained agent as a directory, and a single
//! network as a versioned binary file.
//!
//!     cargo run --release --example checkpoints

use visuomotor::checkpoint::{decode_pcrnn, encode_pcrnn};
use visuomotor::data::synth_letters;
use visuomotor::pipeline::{train_agent, Agent, TrainConfig};

fn main() {
    let cfg = TrainConfig { iterations: 500, motor_iterations: 500, ..TrainConfig::default() };
    let (agent, _, _) = train_agent(&synth_letters(3, 10, 1).unwrap(), &cfg).unwrap();

    let bytes = encode_pcrnn(&agent.visual.params).unwrap();
    println!("visual network: {} bytes, magic {:?}", bytes.len(), std::str::from_utf8(&bytes[..6]).unwrap());
    assert_eq!(decode_pcrnn(&bytes).unwrap(), agent.visual.params);

    let dir = std::env::temp_dir().join("checkpoints_agent");
    agent.save(&dir).unwrap();
    let back = Agent::load(&dir).unwrap();
    assert_eq!(back, agent);
    for entry in std::fs::read_dir(&dir).unwrap() {
        let entry = entry.unwrap();
        println!("{:>8} bytes  {}", entry.metadata().unwrap().len(), entry.path().display());
    }

    let mut corrupt = bytes.clone();
    corrupt[0] = b'X';
    println!("corrupted header: {}", decode_pcrnn(&corrupt).unwrap_err());
}
