//! Broadband throughput against intermittent reward as the FDMA split moves.

use ran_slicing::experiment::{self, ExperimentSpec, SweepAxis};
use ran_slicing::scenario::ScenarioConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut cfg = ScenarioConfig::reference();
    cfg.sim.frames = 20_000;
    let jobs = std::thread::available_parallelism().map_or(1, |n| n.get());
    let spec = ExperimentSpec::new(cfg, SweepAxis::B1Fraction, "0,0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1", jobs)?;
    let rows = experiment::sweep(&spec)?;
    print!("{}", experiment::csv_string(&rows)?);
    Ok(())
}
