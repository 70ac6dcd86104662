//! Latency CDF under the reference targets and with an extra 10-slot target.

use ran_slicing::experiment;
use ran_slicing::mac::{RewardSpec, Scheme};
use ran_slicing::scenario::{Scenario, ScenarioConfig};
use ran_slicing::sim;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let specs = [
        RewardSpec::new(vec![20, 40], vec![10.0, 3.0])?,
        RewardSpec::new(vec![10, 20, 40], vec![20.0, 10.0, 3.0])?,
    ];
    for (scheme, b1) in [(Scheme::Fdma, 0.5e6), (Scheme::Fdma, 0.0), (Scheme::Noma, 0.0)] {
        println!("== {scheme} b1={b1}");
        for spec in &specs {
            let mut cfg = ScenarioConfig::reference();
            cfg.slicing.scheme = scheme;
            cfg.slicing.b1_hz = b1;
            cfg.rewards = spec.clone();
            let scenario = Scenario::resolve(&cfg)?;
            let (_, _, policy) = experiment::solve_policy(&scenario)?;
            let report = experiment::simulate(&scenario, &policy)?;
            let cdf = sim::latency_cdf(&report);
            let at = |l: u32| cdf.get(l as usize - 1).map_or(0.0, |c| c.1);
            println!(
                "  targets {:?}: CDF(5)={:.3} CDF(10)={:.3} CDF(20)={:.3} CDF(40)={:.3}",
                spec.targets(),
                at(5),
                at(10),
                at(20),
                at(40)
            );
        }
    }
    Ok(())
}
