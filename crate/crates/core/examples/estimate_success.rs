//! Monte-Carlo decoding probabilities with 95% intervals, FDMA and NOMA.

use ran_slicing::experiment;
use ran_slicing::mac::Scheme;
use ran_slicing::scenario::{Scenario, ScenarioConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for scheme in [Scheme::Fdma, Scheme::Noma] {
        let mut cfg = ScenarioConfig::reference();
        cfg.slicing.scheme = scheme;
        let scenario = Scenario::resolve(&cfg)?;
        let rows = experiment::estimate_probabilities(&scenario, 1_000_000, 3);
        println!("== {scheme}");
        print!("{}", experiment::format_probability_report(&rows));
    }
    Ok(())
}
