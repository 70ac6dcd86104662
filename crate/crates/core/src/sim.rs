//! Slot-level simulation of one broadband user and one intermittent device.
//!
//! Every stochastic process draws from its own ChaCha stream derived from
//! the run seed, so switching one process off (e.g. no arrivals) leaves the
//! others' draws untouched. A run is single-threaded and bit-reproducible.

use std::fmt::Write as _;

use log::warn;
use rand::SeedableRng;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::mac::{
    self, ArrivalEvent, BroadbandUserState, FrameConfig, IntermittentUserState, MacError, PacketOutcome,
    RewardSpec, Scheme,
};
use crate::mdp::{self, ActionSource, MdpState};
use crate::phy::{self, UserId};
use crate::receiver::{self, DecodeError, SlotObservation, UserSignal};
use crate::scenario::Scenario;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("frames must be at least 1")]
    NoFrames,
    #[error("policy has no action for state {0}")]
    UnreachableState(MdpState),
    #[error(transparent)]
    Mac(#[from] MacError),
    #[error(transparent)]
    Decode(#[from] DecodeError),
}

/// Independent random stream of one stochastic process.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngStream {
    pub seed: u64,
    pub stream_id: u64,
}

impl RngStream {
    pub const ARRIVALS: u64 = 0;
    pub const FADING_BROADBAND: u64 = 1;
    pub const FADING_INTERMITTENT: u64 = 2;
    pub const ESTIMATION: u64 = 3;
    pub const BERNOULLI: u64 = 4;

    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self { seed, stream_id }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        rng
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimConfig {
    pub frames: u64,
    pub seed: u64,
    /// Leading frames excluded from every metric.
    pub warmup_frames: u64,
}

/// What the intermittent device saw across one frame boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameTransition {
    pub frame: u64,
    pub from: MdpState,
    pub action: u32,
    pub to: MdpState,
}

/// Per-slot decoding of whoever transmits.
pub trait SlotChannel {
    fn decode(&mut self, slot: u64, broadband_tx: bool, intermittent_tx: bool) -> Result<[bool; 2], SimError>;
}

/// Rayleigh fading on both links, decoded by the SIC receiver.
pub struct PhysicalChannel<'a> {
    scenario: &'a Scenario,
    fading_broadband: ChaCha8Rng,
    fading_intermittent: ChaCha8Rng,
}

impl<'a> PhysicalChannel<'a> {
    pub fn new(scenario: &'a Scenario, seed: u64) -> Self {
        Self {
            scenario,
            fading_broadband: RngStream::new(seed, RngStream::FADING_BROADBAND).rng(),
            fading_intermittent: RngStream::new(seed, RngStream::FADING_INTERMITTENT).rng(),
        }
    }
}

fn unit_exponential(rng: &mut ChaCha8Rng) -> f64 {
    rand_distr::Distribution::sample(&rand_distr::Exp1, rng)
}

impl SlotChannel for PhysicalChannel<'_> {
    fn decode(&mut self, _slot: u64, broadband_tx: bool, intermittent_tx: bool) -> Result<[bool; 2], SimError> {
        // Both fading processes advance every slot, transmitting or not.
        let fades = [
            unit_exponential(&mut self.fading_broadband),
            unit_exponential(&mut self.fading_intermittent),
        ];
        let mut users = [UserSignal::idle(), UserSignal::idle()];
        for (user, tx) in [(UserId::Broadband, broadband_tx), (UserId::Intermittent, intermittent_tx)] {
            if let (true, Some(l)) = (tx, self.scenario.link(user)) {
                users[user.index()] = UserSignal {
                    active: true,
                    gain: fades[user.index()] * l.link.mean_channel_gain,
                    power_w: l.tx.power_w,
                    threshold: l.threshold,
                };
            }
        }
        let obs = SlotObservation {
            users,
            alpha: self.scenario.slicing.alpha,
            noise_w: self.scenario.noise_w,
        };
        Ok(receiver::decode_slot(&obs)?.decoded)
    }
}

/// Intermittent repetitions succeed independently with probability `p`;
/// no broadband user. Used to check the MDP kernel against the protocol.
pub struct BernoulliChannel {
    p: f64,
    rng: ChaCha8Rng,
}

impl BernoulliChannel {
    pub fn new(p: f64, seed: u64) -> Self {
        Self {
            p,
            rng: RngStream::new(seed, RngStream::BERNOULLI).rng(),
        }
    }
}

impl SlotChannel for BernoulliChannel {
    fn decode(&mut self, _slot: u64, _broadband_tx: bool, intermittent_tx: bool) -> Result<[bool; 2], SimError> {
        let u: f64 = self.rng.gen();
        Ok([false, intermittent_tx && u < self.p])
    }
}

/// Everything the frame loop needs besides the channel and the policy.
#[derive(Debug, Clone)]
pub struct ProtocolSetup {
    pub frame: FrameConfig,
    pub spec: RewardSpec,
    pub arrival_prob: f64,
    pub scheme: Option<Scheme>,
    /// Block length, rate and power of the broadband user, if it has spectrum.
    pub broadband: Option<(u32, f64, f64)>,
    pub intermittent_power_w: f64,
}

impl ProtocolSetup {
    pub fn from_scenario(scenario: &Scenario) -> Self {
        let c = &scenario.config;
        Self {
            frame: scenario.frame,
            spec: c.rewards.clone(),
            arrival_prob: c.intermittent.arrival_prob,
            scheme: Some(scenario.slicing.scheme),
            broadband: scenario
                .broadband
                .map(|l| (c.broadband.block_len, l.tx.rate_bps, l.tx.power_w)),
            intermittent_power_w: c.phy.p_max_w,
        }
    }

    /// Intermittent device alone, for kernel checks.
    pub fn intermittent_only(frame: FrameConfig, spec: RewardSpec, arrival_prob: f64) -> Self {
        Self {
            frame,
            spec,
            arrival_prob,
            scheme: None,
            broadband: None,
            intermittent_power_w: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub seed: u64,
    pub frames: u64,
    pub warmup_frames: u64,
    pub scheme: Option<Scheme>,
    pub frame_len_slots: u32,

    pub broadband_rate_bps: f64,
    pub broadband_power_w: f64,
    pub throughput_bps: f64,
    pub energy_efficiency_bits_per_j: f64,
    pub mean_frames_per_block: f64,
    pub blocks_started: u64,
    pub blocks_acked: u64,
    pub blocks_in_progress: u64,
    pub longest_block_frames: u32,

    pub arrivals: u64,
    pub discards: u64,
    pub successes: u64,
    pub expirations: u64,
    pub in_flight: u64,
    pub total_reward: f64,
    pub avg_reward_per_packet: f64,
    pub total_repetitions: u64,
    pub mean_repetitions: f64,
    pub energy_per_packet_j: f64,
    pub targets: Vec<u32>,
    pub reliability: Vec<f64>,
    /// Delivered packets by latency in slots (index = latency).
    pub latency_histogram: Vec<u64>,

    pub broadband_tx_slots: u64,
    pub broadband_tx_decoded: u64,
    pub intermittent_tx_slots: u64,
    pub intermittent_tx_decoded: u64,
}

impl RunReport {
    pub fn resolved_packets(&self) -> u64 {
        self.successes + self.expirations
    }

    /// Fraction of accepted packets delivered within `latency` slots.
    pub fn cdf_at(&self, latency: u32) -> f64 {
        if self.arrivals == 0 {
            return 0.0;
        }
        let upto = (latency as usize).min(self.latency_histogram.len().saturating_sub(1));
        let delivered: u64 = self.latency_histogram.iter().take(upto + 1).sum();
        delivered as f64 / self.arrivals as f64
    }

    pub fn reliability_at(&self, target: u32) -> Option<f64> {
        self.targets
            .iter()
            .position(|&t| t == target)
            .map(|i| self.reliability[i])
    }

    pub fn summary(&self) -> String {
        let rel: Vec<String> = self
            .targets
            .iter()
            .zip(&self.reliability)
            .map(|(t, r)| format!("R({t})={r:.4}"))
            .collect();
        format!(
            "S={:.1} bps EE={:.4e} bit/J avg_reward={:.4} {}",
            self.throughput_bps,
            self.energy_efficiency_bits_per_j,
            self.avg_reward_per_packet,
            rel.join(" ")
        )
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k}={v}");
        };
        kv("seed", self.seed.to_string());
        kv("frames", self.frames.to_string());
        kv("warmup_frames", self.warmup_frames.to_string());
        kv("scheme", self.scheme.map_or_else(|| "none".into(), |s| s.to_string()));
        kv("frame_len_slots", self.frame_len_slots.to_string());
        kv("broadband.rate_bps", self.broadband_rate_bps.to_string());
        kv("broadband.power_w", self.broadband_power_w.to_string());
        kv("broadband.throughput_bps", self.throughput_bps.to_string());
        kv("broadband.energy_efficiency_bits_per_j", self.energy_efficiency_bits_per_j.to_string());
        kv("broadband.mean_frames_per_block", self.mean_frames_per_block.to_string());
        kv("broadband.blocks_started", self.blocks_started.to_string());
        kv("broadband.blocks_acked", self.blocks_acked.to_string());
        kv("broadband.blocks_in_progress", self.blocks_in_progress.to_string());
        kv("broadband.longest_block_frames", self.longest_block_frames.to_string());
        kv("broadband.tx_slots", self.broadband_tx_slots.to_string());
        kv("broadband.tx_decoded", self.broadband_tx_decoded.to_string());
        kv("intermittent.arrivals", self.arrivals.to_string());
        kv("intermittent.discards", self.discards.to_string());
        kv("intermittent.successes", self.successes.to_string());
        kv("intermittent.expirations", self.expirations.to_string());
        kv("intermittent.in_flight", self.in_flight.to_string());
        kv("intermittent.total_reward", self.total_reward.to_string());
        kv("intermittent.avg_reward_per_packet", self.avg_reward_per_packet.to_string());
        kv("intermittent.total_repetitions", self.total_repetitions.to_string());
        kv("intermittent.mean_repetitions", self.mean_repetitions.to_string());
        kv("intermittent.energy_per_packet_j", self.energy_per_packet_j.to_string());
        kv("intermittent.tx_slots", self.intermittent_tx_slots.to_string());
        kv("intermittent.tx_decoded", self.intermittent_tx_decoded.to_string());
        for (t, r) in self.targets.iter().zip(&self.reliability) {
            kv(&format!("intermittent.reliability_at_{t}"), r.to_string());
        }
        let _ = writeln!(out, "[histogram]");
        let _ = writeln!(out, "latency_slots,count,cdf");
        for latency in 1..self.latency_histogram.len() {
            let _ = writeln!(
                out,
                "{},{},{}",
                latency,
                self.latency_histogram[latency],
                self.cdf_at(latency as u32)
            );
        }
        out
    }
}

/// Latency-reliability function at every slot up to the last target.
pub fn latency_cdf(report: &RunReport) -> Vec<(u32, f64)> {
    if report.arrivals == 0 {
        warn!("no packets generated; latency CDF is empty");
        return Vec::new();
    }
    let last = report.targets.last().copied().unwrap_or(0);
    (1..=last).map(|l| (l, report.cdf_at(l))).collect()
}

#[derive(Default)]
struct Counters {
    blocks_started: u64,
    blocks_acked: u64,
    block_frames_total: u64,
    longest_block: u32,
    arrivals: u64,
    discards: u64,
    successes: u64,
    expirations: u64,
    total_reward: f64,
    total_repetitions: u64,
    histogram: Vec<u64>,
    bb_tx: u64,
    bb_ok: u64,
    im_tx: u64,
    im_ok: u64,
}

/// Run the frame loop over an arbitrary channel model.
///
/// `observer` sees every frame-boundary transition of the intermittent
/// device, warm-up included.
pub fn simulate<C: SlotChannel>(
    setup: &ProtocolSetup,
    cfg: &SimConfig,
    channel: &mut C,
    policy: &dyn ActionSource,
    mut observer: Option<&mut dyn FnMut(&FrameTransition)>,
) -> Result<RunReport, SimError> {
    if cfg.frames == 0 {
        return Err(SimError::NoFrames);
    }
    let frame = setup.frame;
    let f_len = frame.frame_len_slots as u64;
    let max_latency = setup.spec.max_latency() as usize;
    let warmup_slot = cfg.warmup_frames * f_len;

    let mut arrivals_rng = RngStream::new(cfg.seed, RngStream::ARRIVALS).rng();
    let mut broadband = setup
        .broadband
        .map(|(k, rate, power)| BroadbandUserState::new(k, rate, power));
    let mut block_start_frame = 0u64;
    let mut device = IntermittentUserState::default();
    let mut c = Counters {
        histogram: vec![0; max_latency + frame.frame_len_slots as usize + 1],
        ..Default::default()
    };
    if broadband.is_some() && cfg.warmup_frames == 0 {
        c.blocks_started = 1;
    }

    let mut state = MdpState::IDLE;
    let mut action = policy.action(&state).ok_or(SimError::UnreachableState(state))?;

    for f in 0..cfg.frames {
        let measuring = f >= cfg.warmup_frames;
        let transmitting = device.queue_occupied;
        let degree = if transmitting { action } else { 0 };
        let reps = mac::place_repetitions(degree, &frame)?;
        device.repetitions += degree;

        for s in 0..frame.frame_len_slots {
            let t = f * f_len + s as u64;
            match device.arrival_step(&mut arrivals_rng, setup.arrival_prob, t) {
                ArrivalEvent::Accepted if t >= warmup_slot => c.arrivals += 1,
                ArrivalEvent::Discarded if measuring => c.discards += 1,
                _ => {}
            }

            if !frame.is_feedback_slot(s) {
                let im_tx = transmitting && reps.contains(&s);
                let bb_tx = broadband.is_some();
                let [bb_ok, im_ok] = channel.decode(t, bb_tx, im_tx)?;
                if let Some(bb) = broadband.as_mut() {
                    bb.block_progress(bb_ok);
                }
                device.end_of_slot(im_ok, t);
                if measuring {
                    c.bb_tx += bb_tx as u64;
                    c.bb_ok += bb_ok as u64;
                    c.im_tx += im_tx as u64;
                    c.im_ok += im_ok as u64;
                }
                continue;
            }

            device.end_of_slot(false, t);
            let (record, result) = mac::feedback_step(&mut device, broadband.as_mut(), &setup.spec);
            if let Some(w) = record.block_frames {
                if block_start_frame >= cfg.warmup_frames {
                    c.blocks_acked += 1;
                    c.block_frames_total += w as u64;
                    c.longest_block = c.longest_block.max(w);
                }
                block_start_frame = f + 1;
                if block_start_frame >= cfg.warmup_frames && f + 1 < cfg.frames {
                    c.blocks_started += 1;
                }
            }

            if let Some(r) = result {
                if r.generation_slot >= warmup_slot {
                    let reward = mdp::state_reward(&r.terminal_state(), &setup.spec);
                    c.total_reward += reward;
                    c.total_repetitions += r.repetitions as u64;
                    match r.outcome {
                        PacketOutcome::Delivered => {
                            c.successes += 1;
                            c.histogram[r.latency_slots as usize] += 1;
                        }
                        PacketOutcome::Expired => c.expirations += 1,
                    }
                }
            }

            let next = record.observed;
            if let Some(obs) = observer.as_mut() {
                obs(&FrameTransition {
                    frame: f,
                    from: state,
                    action,
                    to: next,
                });
            }
            state = next;
            action = policy.action(&state).ok_or(SimError::UnreachableState(state))?;
        }
    }

    let in_flight = (device.queue_occupied && device.generation_slot >= warmup_slot) as u64;
    let (rate, power, k) = setup.broadband.map_or((0.0, 0.0, 0), |(k, r, p)| (r, p, k));
    let mean_w = if c.blocks_acked > 0 {
        c.block_frames_total as f64 / c.blocks_acked as f64
    } else {
        0.0
    };
    let throughput = if c.blocks_acked > 0 {
        rate * k as f64 / (mean_w * f_len as f64)
    } else {
        0.0
    };
    let resolved = c.successes + c.expirations;
    let per_packet = |x: f64| if resolved > 0 { x / resolved as f64 } else { 0.0 };
    let slot_energy = phy::tx_energy(setup.intermittent_power_w, frame.slot_s);

    let mut report = RunReport {
        seed: cfg.seed,
        frames: cfg.frames,
        warmup_frames: cfg.warmup_frames,
        scheme: setup.scheme,
        frame_len_slots: frame.frame_len_slots,
        broadband_rate_bps: rate,
        broadband_power_w: power,
        throughput_bps: throughput,
        energy_efficiency_bits_per_j: if power > 0.0 { throughput / power } else { 0.0 },
        mean_frames_per_block: mean_w,
        blocks_started: c.blocks_started,
        blocks_acked: c.blocks_acked,
        blocks_in_progress: c.blocks_started.saturating_sub(c.blocks_acked),
        longest_block_frames: c.longest_block,
        arrivals: c.arrivals,
        discards: c.discards,
        successes: c.successes,
        expirations: c.expirations,
        in_flight,
        total_reward: c.total_reward,
        avg_reward_per_packet: per_packet(c.total_reward),
        total_repetitions: c.total_repetitions,
        mean_repetitions: per_packet(c.total_repetitions as f64),
        energy_per_packet_j: per_packet(c.total_repetitions as f64) * slot_energy,
        targets: setup.spec.targets().to_vec(),
        reliability: Vec::new(),
        latency_histogram: c.histogram,
        broadband_tx_slots: c.bb_tx,
        broadband_tx_decoded: c.bb_ok,
        intermittent_tx_slots: c.im_tx,
        intermittent_tx_decoded: c.im_ok,
    };
    report.reliability = report.targets.iter().map(|&t| report.cdf_at(t)).collect();
    Ok(report)
}

/// Simulate a resolved scenario with physical fading and SIC decoding.
pub fn run(scenario: &Scenario, cfg: &SimConfig, policy: &dyn ActionSource) -> Result<RunReport, SimError> {
    let setup = ProtocolSetup::from_scenario(scenario);
    let mut channel = PhysicalChannel::new(scenario, cfg.seed);
    simulate(&setup, cfg, &mut channel, policy, None)
}

/// Intermittent device alone with i.i.d. per-repetition success `p`.
pub fn run_bernoulli(
    p: f64,
    setup: &ProtocolSetup,
    cfg: &SimConfig,
    policy: &dyn ActionSource,
    observer: Option<&mut dyn FnMut(&FrameTransition)>,
) -> Result<RunReport, SimError> {
    let mut channel = BernoulliChannel::new(p, cfg.seed);
    simulate(setup, cfg, &mut channel, policy, observer)
}
