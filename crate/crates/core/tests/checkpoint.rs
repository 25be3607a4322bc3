use visuomotor::baselines::{init_mtrnn, MtrnnParams};
use visuomotor::checkpoint::{decode_pcrnn, encode_pcrnn};
use visuomotor::data::synth_letters;
use visuomotor::pipeline::{train_agent, Agent, TrainConfig};

fn small_agent() -> Agent {
    let cfg = TrainConfig { n: 16, iterations: 200, motor_iterations: 200, ..TrainConfig::default() };
    train_agent(&synth_letters(2, 6, 7).unwrap(), &cfg).unwrap().0
}

#[test]
fn agent_round_trips_through_a_directory() {
    let agent = small_agent();
    let dir = tempfile::tempdir().unwrap();
    agent.save(dir.path()).unwrap();
    let back = Agent::load(dir.path()).unwrap();
    assert_eq!(back, agent);

    // Reloaded and original produce identical motor runs.
    let goal = agent.visual.natural_2d(0, 60).unwrap();
    let cfg = TrainConfig { n: 16, ..TrainConfig::default() };
    assert_eq!(back.motor_runs(0, &goal, &cfg, None).unwrap(), agent.motor_runs(0, &goal, &cfg, None).unwrap());
}

#[test]
fn network_files_reject_damage() {
    let agent = small_agent();
    let bytes = encode_pcrnn(&agent.motor.params).unwrap();
    assert_eq!(decode_pcrnn(&bytes).unwrap(), agent.motor.params);
    assert!(decode_pcrnn(&bytes[..bytes.len() - 1]).is_err());
    assert!(decode_pcrnn(&bytes[..4]).is_err());
    let mut bad = bytes.clone();
    bad[2] ^= 0xff;
    assert!(decode_pcrnn(&bad).is_err());

    let mtrnn = init_mtrnn(8, &agent.arm, 1).unwrap();
    let m = mtrnn.encode().unwrap();
    assert_eq!(MtrnnParams::decode(&m).unwrap(), mtrnn);
    assert!(MtrnnParams::decode(&bytes).is_err());
    assert!(decode_pcrnn(&m).is_err());
}
