//! Scenario configuration and its resolution into concrete link budgets.
//!
//! The on-disk format is flat `section.key=value` text, one parameter per
//! line, `#` comments, lists comma-separated. Every key has a default (the
//! reference scenario), so a config file only needs the keys it changes.

use std::fmt::Write as _;

use thiserror::Error;

use crate::mac::{FrameConfig, MacError, RewardSpec, Scheme, SlicingConfig};
use crate::mdp::SolverConfig;
use crate::phy::{self, ChannelParams, LinkBudget, PhyError, TxConfig, UserId};
use crate::receiver::SubBand;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: field `{key}`: {msg}")]
    Value { line: usize, key: String, msg: String },
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error(transparent)]
    Phy(#[from] PhyError),
    #[error(transparent)]
    Mac(#[from] MacError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhyParams {
    pub carrier_frequency_hz: f64,
    /// Product of transmit and receive antenna gains (linear).
    pub antenna_gain: f64,
    pub pathloss_exponent: f64,
    pub noise_temperature_k: f64,
    pub noise_figure_db: f64,
    pub boltzmann: f64,
    pub light_speed: f64,
    pub p_max_w: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlicingParams {
    pub scheme: Scheme,
    pub total_bw_hz: f64,
    /// Broadband share under FDMA; the intermittent user gets the rest.
    pub b1_hz: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BroadbandParams {
    pub distance_m: f64,
    pub target_erasure: f64,
    pub max_rate_bps: f64,
    pub block_len: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntermittentParams {
    pub distance_m: f64,
    pub packet_bytes: u32,
    /// Per-slot packet generation probability.
    pub arrival_prob: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MdpParams {
    pub solver: SolverConfig,
    /// Skip estimation and use this per-slot success probability.
    pub success_prob: Option<f64>,
    pub estimate_samples: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimParams {
    pub frames: u64,
    pub seed: u64,
    pub warmup_frames: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub phy: PhyParams,
    pub slicing: SlicingParams,
    pub frame: FrameConfig,
    pub broadband: BroadbandParams,
    pub intermittent: IntermittentParams,
    pub rewards: RewardSpec,
    pub mdp: MdpParams,
    pub sim: SimParams,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self::reference()
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str, line: usize) -> Result<T, ConfigError> {
    value.trim().parse().map_err(|_| ConfigError::Value {
        line,
        key: key.to_string(),
        msg: format!("cannot parse `{}`", value.trim()),
    })
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str, line: usize) -> Result<Vec<T>, ConfigError> {
    value.split(',').map(|v| parse_num(key, v, line)).collect()
}

fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

impl ScenarioConfig {
    /// Reference scenario: FDMA with an even split, intermittent user at 400 m,
    /// targets (20, 40) slots with rewards (10, 3).
    pub fn reference() -> Self {
        Self {
            phy: PhyParams {
                carrier_frequency_hz: 2e9,
                antenna_gain: 10.0,
                pathloss_exponent: 2.6,
                noise_temperature_k: 190.0,
                noise_figure_db: 5.0,
                boltzmann: phy::BOLTZMANN,
                light_speed: phy::LIGHT_SPEED,
                p_max_w: 0.2,
            },
            slicing: SlicingParams {
                scheme: Scheme::Fdma,
                total_bw_hz: 1e6,
                b1_hz: 0.5e6,
            },
            frame: FrameConfig {
                frame_len_slots: 10,
                slot_s: 1e-3,
            },
            broadband: BroadbandParams {
                distance_m: 50.0,
                target_erasure: 0.1,
                max_rate_bps: 5e6,
                block_len: 32,
            },
            intermittent: IntermittentParams {
                distance_m: 400.0,
                packet_bytes: 128,
                arrival_prob: 0.01,
            },
            rewards: RewardSpec::new(vec![20, 40], vec![10.0, 3.0]).expect("valid reference rewards"),
            mdp: MdpParams {
                solver: SolverConfig::default(),
                success_prob: None,
                estimate_samples: 1_000_000,
            },
            sim: SimParams {
                frames: 100_000,
                seed: 1,
                warmup_frames: 1000,
            },
        }
    }

    /// Apply one `key=value` assignment. `line` is only used in errors.
    pub fn set(&mut self, key: &str, value: &str, line: usize) -> Result<(), ConfigError> {
        let v = value.trim();
        match key.trim() {
            "phy.carrier_frequency_hz" => self.phy.carrier_frequency_hz = parse_num(key, v, line)?,
            "phy.antenna_gain" => self.phy.antenna_gain = parse_num(key, v, line)?,
            "phy.pathloss_exponent" => self.phy.pathloss_exponent = parse_num(key, v, line)?,
            "phy.noise_temperature_k" => self.phy.noise_temperature_k = parse_num(key, v, line)?,
            "phy.noise_figure_db" => self.phy.noise_figure_db = parse_num(key, v, line)?,
            "phy.boltzmann" => self.phy.boltzmann = parse_num(key, v, line)?,
            "phy.light_speed" => self.phy.light_speed = parse_num(key, v, line)?,
            "phy.p_max_w" => self.phy.p_max_w = parse_num(key, v, line)?,
            "slicing.scheme" => {
                self.slicing.scheme = v.parse().map_err(|e: MacError| ConfigError::Value {
                    line,
                    key: key.to_string(),
                    msg: e.to_string(),
                })?
            }
            "slicing.total_bw_hz" => self.slicing.total_bw_hz = parse_num(key, v, line)?,
            "slicing.b1_hz" => self.slicing.b1_hz = parse_num(key, v, line)?,
            "frame.len_slots" => self.frame.frame_len_slots = parse_num(key, v, line)?,
            "frame.slot_s" => self.frame.slot_s = parse_num(key, v, line)?,
            "broadband.distance_m" => self.broadband.distance_m = parse_num(key, v, line)?,
            "broadband.target_erasure" => self.broadband.target_erasure = parse_num(key, v, line)?,
            "broadband.max_rate_bps" => self.broadband.max_rate_bps = parse_num(key, v, line)?,
            "broadband.block_len" => self.broadband.block_len = parse_num(key, v, line)?,
            "intermittent.distance_m" => self.intermittent.distance_m = parse_num(key, v, line)?,
            "intermittent.packet_bytes" => self.intermittent.packet_bytes = parse_num(key, v, line)?,
            "intermittent.arrival_prob" => self.intermittent.arrival_prob = parse_num(key, v, line)?,
            "rewards.targets" => {
                let targets = parse_list(key, v, line)?;
                self.rewards = RewardSpec::new(targets, self.rewards.rewards().to_vec())
                    .map_err(|e| ConfigError::Value { line, key: key.to_string(), msg: e.to_string() })?;
            }
            "rewards.values" => {
                let values = parse_list(key, v, line)?;
                self.rewards = RewardSpec::new(self.rewards.targets().to_vec(), values)
                    .map_err(|e| ConfigError::Value { line, key: key.to_string(), msg: e.to_string() })?;
            }
            "mdp.discount" => self.mdp.solver.discount = parse_num(key, v, line)?,
            "mdp.tolerance" => self.mdp.solver.tolerance = parse_num(key, v, line)?,
            "mdp.max_iterations" => self.mdp.solver.max_iterations = parse_num(key, v, line)?,
            "mdp.success_prob" => {
                self.mdp.success_prob = if v.is_empty() || v == "auto" {
                    None
                } else {
                    Some(parse_num(key, v, line)?)
                }
            }
            "mdp.estimate_samples" => self.mdp.estimate_samples = parse_num(key, v, line)?,
            "sim.frames" => self.sim.frames = parse_num(key, v, line)?,
            "sim.seed" => self.sim.seed = parse_num(key, v, line)?,
            "sim.warmup_frames" => self.sim.warmup_frames = parse_num(key, v, line)?,
            other => {
                return Err(ConfigError::UnknownKey {
                    line,
                    key: other.to_string(),
                })
            }
        }
        Ok(())
    }
}

impl ScenarioConfig {
    /// Parse a config file on top of the reference defaults.
    ///
    /// `rewards.targets` and `rewards.values` are combined after all lines
    /// are read, so their lengths may change together.
    pub fn from_text(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::reference();
        let mut targets: Option<(usize, Vec<u32>)> = None;
        let mut values: Option<(usize, Vec<f64>)> = None;
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line,
                msg: format!("expected `key=value`, got `{content}`"),
            })?;
            match key.trim() {
                "rewards.targets" => targets = Some((line, parse_list(key.trim(), value, line)?)),
                "rewards.values" => values = Some((line, parse_list(key.trim(), value, line)?)),
                k => cfg.set(k, value, line)?,
            }
        }
        if targets.is_some() || values.is_some() {
            let line = targets.as_ref().map_or(0, |t| t.0).max(values.as_ref().map_or(0, |v| v.0));
            let t = targets.map_or_else(|| cfg.rewards.targets().to_vec(), |t| t.1);
            let v = values.map_or_else(|| cfg.rewards.rewards().to_vec(), |v| v.1);
            cfg.rewards = RewardSpec::new(t, v).map_err(|e| ConfigError::Value {
                line,
                key: "rewards".into(),
                msg: e.to_string(),
            })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k}={v}");
        };
        kv("phy.carrier_frequency_hz", self.phy.carrier_frequency_hz.to_string());
        kv("phy.antenna_gain", self.phy.antenna_gain.to_string());
        kv("phy.pathloss_exponent", self.phy.pathloss_exponent.to_string());
        kv("phy.noise_temperature_k", self.phy.noise_temperature_k.to_string());
        kv("phy.noise_figure_db", self.phy.noise_figure_db.to_string());
        kv("phy.boltzmann", self.phy.boltzmann.to_string());
        kv("phy.light_speed", self.phy.light_speed.to_string());
        kv("phy.p_max_w", self.phy.p_max_w.to_string());
        kv("slicing.scheme", self.slicing.scheme.to_string());
        kv("slicing.total_bw_hz", self.slicing.total_bw_hz.to_string());
        kv("slicing.b1_hz", self.slicing.b1_hz.to_string());
        kv("frame.len_slots", self.frame.frame_len_slots.to_string());
        kv("frame.slot_s", self.frame.slot_s.to_string());
        kv("broadband.distance_m", self.broadband.distance_m.to_string());
        kv("broadband.target_erasure", self.broadband.target_erasure.to_string());
        kv("broadband.max_rate_bps", self.broadband.max_rate_bps.to_string());
        kv("broadband.block_len", self.broadband.block_len.to_string());
        kv("intermittent.distance_m", self.intermittent.distance_m.to_string());
        kv("intermittent.packet_bytes", self.intermittent.packet_bytes.to_string());
        kv("intermittent.arrival_prob", self.intermittent.arrival_prob.to_string());
        kv("rewards.targets", join(self.rewards.targets()));
        kv("rewards.values", join(self.rewards.rewards()));
        kv("mdp.discount", self.mdp.solver.discount.to_string());
        kv("mdp.tolerance", self.mdp.solver.tolerance.to_string());
        kv("mdp.max_iterations", self.mdp.solver.max_iterations.to_string());
        kv(
            "mdp.success_prob",
            self.mdp.success_prob.map_or_else(|| "auto".to_string(), |p| p.to_string()),
        );
        kv("mdp.estimate_samples", self.mdp.estimate_samples.to_string());
        kv("sim.frames", self.sim.frames.to_string());
        kv("sim.seed", self.sim.seed.to_string());
        kv("sim.warmup_frames", self.sim.warmup_frames.to_string());
        out
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |msg: String| Err(ConfigError::Invalid(msg));
        FrameConfig::new(self.frame.frame_len_slots, self.frame.slot_s)?;
        self.slicing_config()?;
        self.mdp.solver.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.channel(self.broadband.distance_m).validate()?;
        self.channel(self.intermittent.distance_m).validate()?;
        if !(self.phy.p_max_w > 0.0) {
            return invalid(format!("phy.p_max_w {} must be positive", self.phy.p_max_w));
        }
        if !(self.broadband.target_erasure > 0.0 && self.broadband.target_erasure < 1.0) {
            return invalid(format!(
                "broadband.target_erasure {} outside (0, 1)",
                self.broadband.target_erasure
            ));
        }
        if !(self.broadband.max_rate_bps > 0.0) {
            return invalid("broadband.max_rate_bps must be positive".into());
        }
        if self.broadband.block_len == 0 {
            return invalid("broadband.block_len must be positive".into());
        }
        if self.intermittent.packet_bytes == 0 {
            return invalid("intermittent.packet_bytes must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.intermittent.arrival_prob) {
            return invalid(format!(
                "intermittent.arrival_prob {} outside [0, 1]",
                self.intermittent.arrival_prob
            ));
        }
        if let Some(p) = self.mdp.success_prob {
            if !(0.0..=1.0).contains(&p) {
                return invalid(format!("mdp.success_prob {p} outside [0, 1]"));
            }
        }
        Ok(())
    }

    pub fn channel(&self, distance_m: f64) -> ChannelParams {
        ChannelParams {
            carrier_frequency_hz: self.phy.carrier_frequency_hz,
            tx_gain: self.phy.antenna_gain,
            rx_gain: 1.0,
            distance_m,
            pathloss_exponent: self.phy.pathloss_exponent,
            noise_temperature_k: self.phy.noise_temperature_k,
            noise_figure_db: self.phy.noise_figure_db,
            boltzmann: self.phy.boltzmann,
            light_speed: self.phy.light_speed,
        }
    }

    pub fn slicing_config(&self) -> Result<SlicingConfig, MacError> {
        match self.slicing.scheme {
            Scheme::Fdma => SlicingConfig::fdma(self.slicing.total_bw_hz, self.slicing.b1_hz),
            Scheme::Noma => SlicingConfig::noma(self.slicing.total_bw_hz),
        }
    }

    /// Intermittent rate: one packet of `L` bytes per slot.
    pub fn intermittent_rate_bps(&self) -> f64 {
        8.0 * self.intermittent.packet_bytes as f64 / self.frame.slot_s
    }
}

/// A user's resolved radio link on its sub-band.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UserLink {
    pub sub_band: SubBand,
    pub link: LinkBudget,
    pub tx: TxConfig,
    pub threshold: f64,
}

/// A config with all derived radio quantities computed.
///
/// A user whose sub-band has no bandwidth has no link (`None`).
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub slicing: SlicingConfig,
    pub frame: FrameConfig,
    pub noise_w: [f64; 3],
    pub broadband: Option<UserLink>,
    pub intermittent: Option<UserLink>,
}

impl Scenario {
    pub fn resolve(config: &ScenarioConfig) -> Result<Self, ConfigError> {
        config.validate()?;
        let slicing = config.slicing_config()?;
        let frame = FrameConfig::new(config.frame.frame_len_slots, config.frame.slot_s)?;
        let base = config.channel(1.0);
        let mut noise_w = [0.0; 3];
        for band in SubBand::ALL {
            let bw = slicing.bandwidth(band);
            if bw > 0.0 {
                noise_w[band.index()] = phy::noise_power(bw, &base)?;
            }
        }
        let p_max = config.phy.p_max_w;

        let band = slicing.band_of(UserId::Broadband);
        let bw = slicing.bandwidth(band);
        let broadband = if bw > 0.0 {
            let link = LinkBudget::new(&config.channel(config.broadband.distance_m), bw)?;
            let eps = config.broadband.target_erasure;
            let rate = phy::broadband_rate_selection(&link, config.broadband.max_rate_bps, eps, p_max)?;
            let power = phy::broadband_power(&link, rate, eps, p_max);
            Some(UserLink {
                sub_band: band,
                link,
                tx: TxConfig {
                    rate_bps: rate,
                    power_w: power,
                    p_max_w: p_max,
                },
                threshold: phy::decode_threshold(rate, bw),
            })
        } else {
            None
        };

        let band = slicing.band_of(UserId::Intermittent);
        let bw = slicing.bandwidth(band);
        let intermittent = if bw > 0.0 {
            let link = LinkBudget::new(&config.channel(config.intermittent.distance_m), bw)?;
            let rate = config.intermittent_rate_bps();
            Some(UserLink {
                sub_band: band,
                link,
                tx: TxConfig {
                    rate_bps: rate,
                    power_w: p_max,
                    p_max_w: p_max,
                },
                threshold: phy::decode_threshold(rate, bw),
            })
        } else {
            None
        };

        Ok(Self {
            config: config.clone(),
            slicing,
            frame,
            noise_w,
            broadband,
            intermittent,
        })
    }

    pub fn link(&self, user: UserId) -> Option<&UserLink> {
        match user {
            UserId::Broadband => self.broadband.as_ref(),
            UserId::Intermittent => self.intermittent.as_ref(),
        }
    }

    /// Interference-free per-slot success probability of `user`.
    pub fn isolated_success_prob(&self, user: UserId) -> f64 {
        self.link(user)
            .map_or(0.0, |l| 1.0 - phy::erasure_probability(&l.link, &l.tx))
    }
}
