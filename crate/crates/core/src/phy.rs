//! Link budget: noise, path loss, Rayleigh fading, SINR and decoding thresholds.
//!
//! Everything here works in linear units (W, linear gains). The only dB
//! quantity is the receiver noise figure, converted on entry.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use thiserror::Error;

use crate::receiver::{self, SlotObservation, SubBand, UserSignal};
use crate::scenario::Scenario;

pub const BOLTZMANN: f64 = 1.380_649e-23;
pub const LIGHT_SPEED: f64 = 299_792_458.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PhyError {
    #[error("bandwidth must be positive, got {0} Hz")]
    NonPositiveBandwidth(f64),
    #[error("distance must be positive, got {0} m")]
    NonPositiveDistance(f64),
    #[error("invalid channel parameter `{name}`: {value}")]
    InvalidParameter { name: &'static str, value: f64 },
    #[error("no feasible rate: even vanishing rates need more than {p_max_w} W")]
    Infeasible { p_max_w: f64 },
}

/// Physical constants and geometry of one user's link.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelParams {
    pub carrier_frequency_hz: f64,
    pub tx_gain: f64,
    pub rx_gain: f64,
    pub distance_m: f64,
    pub pathloss_exponent: f64,
    pub noise_temperature_k: f64,
    pub noise_figure_db: f64,
    pub boltzmann: f64,
    pub light_speed: f64,
}

impl ChannelParams {
    pub fn with_distance(mut self, distance_m: f64) -> Self {
        self.distance_m = distance_m;
        self
    }

    pub fn validate(&self) -> Result<(), PhyError> {
        let positive = [
            ("carrier_frequency_hz", self.carrier_frequency_hz),
            ("tx_gain", self.tx_gain),
            ("rx_gain", self.rx_gain),
            ("noise_temperature_k", self.noise_temperature_k),
            ("boltzmann", self.boltzmann),
            ("light_speed", self.light_speed),
        ];
        for (name, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                return Err(PhyError::InvalidParameter { name, value });
            }
        }
        if !(self.distance_m > 0.0) {
            return Err(PhyError::NonPositiveDistance(self.distance_m));
        }
        if !(self.pathloss_exponent >= 2.0) {
            return Err(PhyError::InvalidParameter {
                name: "pathloss_exponent",
                value: self.pathloss_exponent,
            });
        }
        if !self.noise_figure_db.is_finite() {
            return Err(PhyError::InvalidParameter {
                name: "noise_figure_db",
                value: self.noise_figure_db,
            });
        }
        Ok(())
    }
}

/// Average channel statistics of one user on one sub-band.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkBudget {
    pub mean_channel_gain: f64,
    pub noise_power_w: f64,
    pub sub_band_bw_hz: f64,
}

impl LinkBudget {
    pub fn new(params: &ChannelParams, bw_hz: f64) -> Result<Self, PhyError> {
        Ok(Self {
            mean_channel_gain: mean_channel_gain(params)?,
            noise_power_w: noise_power(bw_hz, params)?,
            sub_band_bw_hz: bw_hz,
        })
    }

    /// Average receive SNR at transmit power `power_w`.
    pub fn mean_snr(&self, power_w: f64) -> f64 {
        self.mean_channel_gain * power_w / self.noise_power_w
    }
}

/// One realisation of `|h|^2` for one user in one slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FadingDraw {
    pub gain: f64,
    pub slot_index: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TxConfig {
    pub rate_bps: f64,
    pub power_w: f64,
    pub p_max_w: f64,
}

/// Thermal noise power `B * k * T * 10^(NF/10)`.
pub fn noise_power(bw_hz: f64, params: &ChannelParams) -> Result<f64, PhyError> {
    if !(bw_hz > 0.0) {
        return Err(PhyError::NonPositiveBandwidth(bw_hz));
    }
    Ok(bw_hz
        * params.boltzmann
        * params.noise_temperature_k
        * 10f64.powf(params.noise_figure_db / 10.0))
}

/// Expected `|h|^2` from the free-space term and a power-law distance decay.
pub fn mean_channel_gain(params: &ChannelParams) -> Result<f64, PhyError> {
    if !(params.distance_m > 0.0) {
        return Err(PhyError::NonPositiveDistance(params.distance_m));
    }
    let c = params.light_speed;
    let denom = (4.0 * PI * params.carrier_frequency_hz).powi(2)
        * params.distance_m.powf(params.pathloss_exponent);
    Ok(params.tx_gain * params.rx_gain * c * c / denom)
}

/// Rayleigh block fading: `|h|^2` is exponential with the link's mean gain.
pub fn draw_fading<R: Rng + ?Sized>(rng: &mut R, link: &LinkBudget, slot_index: u64) -> FadingDraw {
    let unit: f64 = Exp1.sample(rng);
    FadingDraw {
        gain: unit * link.mean_channel_gain,
        slot_index,
    }
}

/// SINR of a received signal power against noise plus one interferer.
///
/// Both powers are at the receiver (`|h|^2 * P`). Pass `0.0` for an absent
/// interferer.
pub fn sinr(signal_w: f64, interference_w: f64, noise_w: f64) -> f64 {
    signal_w / (noise_w + interference_w)
}

/// Minimum SINR for rate `rate_bps` on `bw_hz` of spectrum, `2^(r/B) - 1`.
///
/// Zero bandwidth carries nothing, so the threshold is infinite.
pub fn decode_threshold(rate_bps: f64, bw_hz: f64) -> f64 {
    if bw_hz <= 0.0 {
        return f64::INFINITY;
    }
    (rate_bps / bw_hz).exp2() - 1.0
}

/// Interference-free outage probability under Rayleigh fading.
pub fn erasure_probability(link: &LinkBudget, tx: &TxConfig) -> f64 {
    let threshold = decode_threshold(tx.rate_bps, link.sub_band_bw_hz);
    if threshold <= 0.0 {
        return 0.0;
    }
    if !(tx.power_w > 0.0) || !threshold.is_finite() {
        return 1.0;
    }
    let scaled = threshold / link.mean_snr(tx.power_w);
    -(-scaled).exp_m1()
}

/// Transmit power that makes the interference-free outage equal `target_erasure`.
///
/// No clamp to `P_max`; see [`broadband_power`].
pub fn required_power(link: &LinkBudget, rate_bps: f64, target_erasure: f64) -> f64 {
    let threshold = decode_threshold(rate_bps, link.sub_band_bw_hz);
    threshold * link.noise_power_w / (link.mean_channel_gain * -(-target_erasure).ln_1p())
}

/// Broadband transmit power for rate `rate_bps` and outage target, clamped to `p_max_w`.
pub fn broadband_power(link: &LinkBudget, rate_bps: f64, target_erasure: f64, p_max_w: f64) -> f64 {
    required_power(link, rate_bps, target_erasure).min(p_max_w)
}

/// Largest rate up to `r_max` whose outage target is reachable within `p_max_w`.
///
/// Bisection on the (monotone) required power, relative tolerance 1e-9.
pub fn broadband_rate_selection(
    link: &LinkBudget,
    r_max: f64,
    target_erasure: f64,
    p_max_w: f64,
) -> Result<f64, PhyError> {
    if !(link.sub_band_bw_hz > 0.0) {
        return Err(PhyError::NonPositiveBandwidth(link.sub_band_bw_hz));
    }
    let feasible = |r: f64| required_power(link, r, target_erasure) <= p_max_w;
    if feasible(r_max) {
        return Ok(r_max);
    }
    let mut lo = 0.0;
    let mut hi = r_max;
    while (hi - lo) > 1e-9 * hi {
        let mid = 0.5 * (lo + hi);
        if feasible(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if lo <= 0.0 {
        return Err(PhyError::Infeasible { p_max_w });
    }
    Ok(lo)
}

pub fn tx_energy(power_w: f64, slot_s: f64) -> f64 {
    slot_s * power_w
}

/// Which user a success-probability estimate refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UserId {
    Broadband,
    Intermittent,
}

impl UserId {
    pub fn index(self) -> usize {
        match self {
            UserId::Broadband => 0,
            UserId::Intermittent => 1,
        }
    }

    pub fn other(self) -> Self {
        match self {
            UserId::Broadband => UserId::Intermittent,
            UserId::Intermittent => UserId::Broadband,
        }
    }
}

/// Monte-Carlo estimate of a per-slot decoding probability.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuccessEstimate {
    pub successes: u64,
    pub samples: u64,
}

impl SuccessEstimate {
    pub fn probability(&self) -> f64 {
        if self.samples == 0 {
            return 0.0;
        }
        self.successes as f64 / self.samples as f64
    }

    pub fn std_error(&self) -> f64 {
        let p = self.probability();
        (p * (1.0 - p) / self.samples as f64).sqrt()
    }

    /// Normal-approximation 95% interval, clipped to [0, 1].
    pub fn confidence_95(&self) -> (f64, f64) {
        let p = self.probability();
        let half = 1.959_963_984_540_054 * self.std_error();
        ((p - half).max(0.0), (p + half).min(1.0))
    }
}

/// Estimate `p_{m,i}` by drawing both users' fading and running the SIC decoder.
///
/// `user` transmits on `sub_band`; the other user transmits on its own
/// configured sub-band when `other_active` is set. Under FDMA the other
/// user never shares a sub-band, so the estimate matches `1 - erasure`.
/// Returns `None` when `user` has no spectrum in `sub_band`.
pub fn estimate_success_prob<R: Rng + ?Sized>(
    scenario: &Scenario,
    user: UserId,
    sub_band: SubBand,
    other_active: bool,
    samples: u64,
    rng: &mut R,
) -> Option<SuccessEstimate> {
    let target = scenario.link(user)?;
    if target.sub_band != sub_band || !(scenario.slicing.bandwidth(sub_band) > 0.0) {
        return None;
    }
    let other = scenario.link(user.other()).filter(|_| other_active);

    let mut successes = 0u64;
    for slot in 0..samples {
        let target_fading = draw_fading(rng, &target.link, slot);
        let other_fading = other.map(|o| draw_fading(rng, &o.link, slot));

        let mut users = [UserSignal::idle(), UserSignal::idle()];
        users[user.index()] = UserSignal {
            active: true,
            gain: target_fading.gain,
            power_w: target.tx.power_w,
            threshold: target.threshold,
        };
        if let (Some(o), Some(f)) = (other, other_fading) {
            users[user.other().index()] = UserSignal {
                active: true,
                gain: f.gain,
                power_w: o.tx.power_w,
                threshold: o.threshold,
            };
        }
        let obs = SlotObservation {
            users,
            alpha: scenario.slicing.alpha,
            noise_w: scenario.noise_w,
        };
        let outcome = receiver::decode_slot(&obs).expect("scenario alpha is validated");
        if outcome.decoded[user.index()] {
            successes += 1;
        }
    }
    Some(SuccessEstimate { successes, samples })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn table_params(distance_m: f64) -> ChannelParams {
        ChannelParams {
            carrier_frequency_hz: 2e9,
            tx_gain: 10.0,
            rx_gain: 1.0,
            distance_m,
            pathloss_exponent: 2.6,
            noise_temperature_k: 190.0,
            noise_figure_db: 5.0,
            boltzmann: BOLTZMANN,
            light_speed: LIGHT_SPEED,
        }
    }

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn noise_power_matches_hand_evaluation() {
        let p = table_params(100.0);
        // 1e6 * 1.380649e-23 * 190 * 10^0.5
        assert!(rel(noise_power(1e6, &p).unwrap(), 8.295_391_429_5e-15) < 1e-9);
        let half = noise_power(0.5e6, &p).unwrap();
        assert_eq!(half, noise_power(1e6, &p).unwrap() / 2.0);
        let flat = ChannelParams { noise_figure_db: 0.0, ..p };
        assert_eq!(noise_power(1e6, &flat).unwrap(), 1e6 * BOLTZMANN * 190.0);
        assert_eq!(
            noise_power(0.0, &p),
            Err(PhyError::NonPositiveBandwidth(0.0))
        );
    }

    #[test]
    fn mean_gain_matches_hand_evaluation() {
        assert!(rel(mean_channel_gain(&table_params(100.0)).unwrap(), 8.977_63e-9) < 1e-5);
        assert!(rel(mean_channel_gain(&table_params(50.0)).unwrap(), 5.443_02e-8) < 1e-5);
        let g1 = mean_channel_gain(&table_params(100.0)).unwrap();
        let g2 = mean_channel_gain(&table_params(200.0)).unwrap();
        assert!(rel(g2, g1 * 2f64.powf(-2.6)) < 1e-12);
        assert!(mean_channel_gain(&table_params(0.0)).is_err());
    }

    #[test]
    fn fading_draws_are_exponential() {
        let link = LinkBudget {
            mean_channel_gain: 3e-9,
            noise_power_w: 1e-15,
            sub_band_bw_hz: 1e6,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 1_000_000;
        let mut sum = 0.0;
        let mut above_median = 0u64;
        for t in 0..n {
            let d = draw_fading(&mut rng, &link, t);
            assert!(d.gain >= 0.0);
            sum += d.gain;
            if d.gain > link.mean_channel_gain * std::f64::consts::LN_2 {
                above_median += 1;
            }
        }
        assert!(rel(sum / n as f64, link.mean_channel_gain) < 0.01);
        assert!((above_median as f64 / n as f64 - 0.5).abs() < 0.003);
    }

    #[test]
    fn sinr_cases() {
        let noise = 2e-15;
        assert!((sinr(100.0 * noise, 10.0 * noise, noise) - 100.0 / 11.0).abs() < 1e-12);
        assert!((sinr(100.0 * noise, 0.0, noise) - 100.0).abs() < 1e-12);
        assert_eq!(sinr(0.0, 0.0, noise), 0.0);
    }

    #[test]
    fn thresholds() {
        assert_eq!(decode_threshold(5e6, 1e6), 31.0);
        assert_eq!(decode_threshold(1e6, 1e6), 1.0);
        assert_eq!(decode_threshold(0.0, 1e6), 0.0);
        assert!(decode_threshold(1e6, 0.0).is_infinite());
    }

    #[test]
    fn erasure_at_mean_snr_294() {
        let link = LinkBudget {
            mean_channel_gain: 1.0,
            noise_power_w: 1.0,
            sub_band_bw_hz: 1e6,
        };
        let tx = TxConfig {
            rate_bps: 5e6,
            power_w: 294.2,
            p_max_w: 1e9,
        };
        let eps = erasure_probability(&link, &tx);
        assert!((eps - 0.1).abs() < 1e-4, "{eps}");

        let huge = TxConfig { power_w: 1e30, ..tx };
        assert!(erasure_probability(&link, &huge) < 1e-20);
        let free = TxConfig { rate_bps: 0.0, ..tx };
        assert_eq!(erasure_probability(&link, &free), 0.0);
    }

    #[test]
    fn erasure_monotone_in_power_and_rate() {
        let link = LinkBudget::new(&table_params(400.0), 0.5e6).unwrap();
        let mut last = 1.0;
        for i in 1..200 {
            let tx = TxConfig {
                rate_bps: 1.024e6,
                power_w: 1e-9 * 1.2f64.powi(i),
                p_max_w: 1.0,
            };
            let e = erasure_probability(&link, &tx);
            assert!(e < last || e == 1.0);
            last = e;
        }
        let mut last = 0.0;
        for i in 1..200 {
            let tx = TxConfig {
                rate_bps: 1e4 * i as f64,
                power_w: 1e-6,
                p_max_w: 1.0,
            };
            let e = erasure_probability(&link, &tx);
            assert!(e > last || e == 1.0);
            last = e;
        }
    }

    #[test]
    fn broadband_power_inverts_erasure() {
        let params = table_params(50.0);
        let link = LinkBudget::new(&params, 1e6).unwrap();
        let p = broadband_power(&link, 5e6, 0.1, 0.2);
        assert!(rel(p, 4.484_16e-5) < 1e-5, "{p}");
        let tx = TxConfig {
            rate_bps: 5e6,
            power_w: p,
            p_max_w: 0.2,
        };
        assert!((erasure_probability(&link, &tx) - 0.1).abs() < 1e-9);

        assert_eq!(broadband_power(&link, 5e6, 0.1, 1e-6), 1e-6);
        let loose = broadband_power(&link, 5e6, 0.5, 0.2);
        assert!(rel(loose, p * 0.9f64.ln() / 0.5f64.ln()) < 1e-12);
    }

    #[test]
    fn rate_selection_against_closed_form() {
        let params = table_params(50.0);
        let link = LinkBudget::new(&params, 1e6).unwrap();
        assert_eq!(broadband_rate_selection(&link, 5e6, 0.1, 0.2).unwrap(), 5e6);
        assert_eq!(broadband_rate_selection(&link, 5e6, 0.1, f64::INFINITY).unwrap(), 5e6);

        // Closed-form inverse: r = B log2(1 + Pmax * g * (-ln(1-eps)) / sigma^2).
        let mut previous = f64::INFINITY;
        for bw in [1e5, 5e4, 2e4, 1e4, 5e3] {
            let link = LinkBudget::new(&params, bw).unwrap();
            let r = broadband_rate_selection(&link, 5e6, 0.1, 0.2).unwrap();
            let snr = 0.2 * link.mean_channel_gain * -(0.9f64.ln()) / link.noise_power_w;
            let exact = (bw * (1.0 + snr).log2()).min(5e6);
            assert!(rel(r, exact) < 1e-8, "bw={bw} r={r} exact={exact}");
            assert!(r <= previous);
            previous = r;
        }
        let empty = LinkBudget {
            sub_band_bw_hz: 0.0,
            ..link
        };
        assert!(broadband_rate_selection(&empty, 5e6, 0.1, 0.2).is_err());
    }

    #[test]
    fn energy_is_linear() {
        assert!((tx_energy(0.2, 1e-3) - 2e-4).abs() < 1e-18);
        assert_eq!(tx_energy(0.0, 1e-3), 0.0);
        assert_eq!(2.0 * tx_energy(0.2, 1e-3), tx_energy(0.2, 2e-3));
        assert_eq!(tx_energy(0.4, 1e-3), 2.0 * tx_energy(0.2, 1e-3));
    }
}
