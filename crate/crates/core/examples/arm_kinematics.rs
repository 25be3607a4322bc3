//! Forward kinematics, the Jacobian, and reaching a point by gradient
//! descent on the joint angles. Writes `arm_kinematics.svg`.
//!
//!     cargo run --release --example arm_kinematics

use nalgebra::Vector2;
use visuomotor::arm::{ArmConfig, MotorCommand};
use visuomotor::plot;

fn main() {
    let arm = ArmConfig::default();
    println!("shoulder {:?}, links {:?}, reach {:.3}", arm.shoulder, arm.lengths, arm.reach());

    let m = MotorCommand::new(0.4, -0.3, 0.8);
    let tip = arm.forward_kinematics(&m);
    println!("f({:?}) = ({:.4}, {:.4})", m.0.as_slice(), tip.x, tip.y);
    println!("J =\n{:.4}", arm.jacobian(&m));

    let target = Vector2::new(0.5, 0.25);
    let mut poses = vec![m];
    for it in [10, 50, 200, 2000] {
        let reached = arm.inverse_kinematics(&target, m, it);
        println!("{it:>5} descent steps: distance {:.2e}", (arm.forward_kinematics(&reached) - target).norm());
        poses.push(reached);
    }
    let path: Vec<_> = poses.iter().map(|p| arm.forward_kinematics(p)).collect();
    let out = std::env::temp_dir().join("arm_kinematics.svg");
    std::fs::write(&out, plot::plot_arm(&arm, &poses, Some(&path), "reaching (0.5, 0.25)")).unwrap();
    println!("wrote {}", out.display());
}
