//! Solve for the repetition policy and show the decision for fresh packets.
//!
//! `cargo run --example solve_policy -- 0.6` fixes p instead of estimating it.

use ran_slicing::experiment;
use ran_slicing::mdp::{ActionSource, MdpState};
use ran_slicing::scenario::{Scenario, ScenarioConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut cfg = ScenarioConfig::reference();
    if let Some(p) = std::env::args().nth(1) {
        cfg.mdp.success_prob = Some(p.parse()?);
    }
    let scenario = Scenario::resolve(&cfg)?;
    let (source, model, policy) = experiment::solve_policy(&scenario)?;
    println!(
        "p={:.6}  {} states  {} sweeps  residual {:.2e}",
        source.probability(),
        model.states().len(),
        policy.meta.iterations,
        policy.meta.residual
    );

    println!("\nlatency  degree  value");
    for l in 1..=cfg.frame.frame_len_slots {
        let s = MdpState::new(l, 0, false);
        println!("{l:>7}  {:>6}  {:.4}", policy.action(&s).unwrap_or(0), policy.value(&s).unwrap_or(0.0));
    }
    let retries: Vec<_> = policy
        .states()
        .iter()
        .zip(policy.actions())
        .filter(|(s, _)| s.is_pending(&cfg.rewards) && s.latency > cfg.frame.frame_len_slots)
        .take(8)
        .collect();
    println!("\nafter a failed frame:");
    for (s, a) in retries {
        println!("  {s} -> {a}");
    }
    Ok(())
}
