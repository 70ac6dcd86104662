//! Empirical frame transitions against the model's kernel for one state.

use std::collections::HashMap;

use ran_slicing::mac::{FrameConfig, RewardSpec};
use ran_slicing::mdp::{FixedDegree, MdpState, TransitionModel};
use ran_slicing::sim::{self, FrameTransition, ProtocolSetup, SimConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (p, p_a, degree) = (0.6, 0.1, 3);
    let frame = FrameConfig::new(10, 1e-3)?;
    let spec = RewardSpec::new(vec![20, 40], vec![10.0, 3.0])?;
    let model = TransitionModel::build(p, p_a, frame, &spec)?;

    let mut counts: HashMap<(MdpState, MdpState), u64> = HashMap::new();
    let mut visits: HashMap<MdpState, u64> = HashMap::new();
    let mut record = |t: &FrameTransition| {
        *visits.entry(t.from).or_default() += 1;
        *counts.entry((t.from, t.to)).or_default() += 1;
    };
    let setup = ProtocolSetup::intermittent_only(frame, spec, p_a);
    let cfg = SimConfig {
        frames: 500_000,
        seed: 11,
        warmup_frames: 0,
    };
    sim::run_bernoulli(p, &setup, &cfg, &FixedDegree(degree), Some(&mut record))?;

    let from = MdpState::new(5, 0, false);
    let n = visits[&from];
    println!("state {from}, degree {degree}, {n} visits");
    let i = model.index_of(&from).expect("reachable");
    for &(j, q) in model.row(i, degree) {
        let to = model.states()[j];
        let seen = counts.get(&(from, to)).copied().unwrap_or(0) as f64 / n as f64;
        println!("  -> {to:<14} kernel {q:.4}  simulated {seen:.4}");
    }
    Ok(())
}
