//! Noise floor, mean gains and the broadband rate/power choice for the
//! reference scenario.

use ran_slicing::phy::{self, LinkBudget, TxConfig};
use ran_slicing::scenario::ScenarioConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = ScenarioConfig::reference();
    let p_max = cfg.phy.p_max_w;

    for bw in [0.5e6, 1e6] {
        println!("noise power over {:>4} kHz: {:.5e} W", bw / 1e3, phy::noise_power(bw, &cfg.channel(1.0))?);
    }

    let link = LinkBudget::new(&cfg.channel(cfg.broadband.distance_m), 1e6)?;
    let eps = cfg.broadband.target_erasure;
    let rate = phy::broadband_rate_selection(&link, cfg.broadband.max_rate_bps, eps, p_max)?;
    let power = phy::broadband_power(&link, rate, eps, p_max);
    println!(
        "broadband at {} m: g={:.5e}, rate {:.3} Mbps, power {:.5e} W",
        cfg.broadband.distance_m,
        link.mean_channel_gain,
        rate / 1e6,
        power
    );

    let rate2 = cfg.intermittent_rate_bps();
    println!("\nintermittent, {} kbps on 0.5 MHz at {} W", rate2 / 1e3, p_max);
    for d in [100.0, 200.0, 400.0, 1000.0, 3000.0] {
        let link = LinkBudget::new(&cfg.channel(d), 0.5e6)?;
        let tx = TxConfig {
            rate_bps: rate2,
            power_w: p_max,
            p_max_w: p_max,
        };
        println!(
            "  d={d:>6} m  mean SNR {:>10.1}  erasure {:.3e}",
            link.mean_snr(p_max),
            phy::erasure_probability(&link, &tx)
        );
    }
    Ok(())
}
