//! Optimal policy against fixed repetition degrees on the NOMA scenario.

use ran_slicing::experiment;
use ran_slicing::mac::Scheme;
use ran_slicing::mdp::FixedDegree;
use ran_slicing::scenario::{Scenario, ScenarioConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut cfg = ScenarioConfig::reference();
    cfg.slicing.scheme = Scheme::Noma;
    cfg.intermittent.distance_m = 1500.0;
    let scenario = Scenario::resolve(&cfg)?;
    let (source, _, policy) = experiment::solve_policy(&scenario)?;
    println!("p={:.4}", source.probability());

    let report = experiment::simulate(&scenario, &policy)?;
    println!("optimal  {}  reps/pkt {:.3}", report.summary(), report.mean_repetitions);
    for a in 1..=4 {
        let report = experiment::simulate(&scenario, &FixedDegree(a))?;
        println!("fixed {a}  {}  reps/pkt {:.3}", report.summary(), report.mean_repetitions);
    }
    Ok(())
}
