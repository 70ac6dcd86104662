//! Frame layout, spectrum slicing, and the two users' protocol state machines.

use std::fmt;

use rand::Rng;
use thiserror::Error;

use crate::mdp::MdpState;
use crate::phy::UserId;
use crate::receiver::SubBand;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MacError {
    #[error("repetition degree {degree} exceeds the {uplink} uplink slots of the frame")]
    InvalidAction { degree: u32, uplink: u32 },
    #[error("invalid slicing: {0}")]
    Slicing(String),
    #[error("invalid frame: {0}")]
    Frame(String),
    #[error("invalid reward spec: {0}")]
    Rewards(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    Fdma,
    Noma,
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Fdma => "fdma",
            Scheme::Noma => "noma",
        })
    }
}

impl std::str::FromStr for Scheme {
    type Err = MacError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "fdma" => Ok(Scheme::Fdma),
            "noma" => Ok(Scheme::Noma),
            other => Err(MacError::Slicing(format!("unknown scheme `{other}`"))),
        }
    }
}

/// How the total bandwidth is split between the two users.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlicingConfig {
    pub scheme: Scheme,
    pub total_bw_hz: f64,
    /// Bandwidth of sub-bands 1, 2 and 3.
    pub bw_hz: [f64; 3],
    /// `alpha[m][i]`: user `m` (0 broadband, 1 intermittent) uses sub-band `i`.
    pub alpha: [[bool; 3]; 2],
}

impl SlicingConfig {
    /// Orthogonal split: `b1_hz` for broadband, the remainder for the intermittent user.
    pub fn fdma(total_bw_hz: f64, b1_hz: f64) -> Result<Self, MacError> {
        let cfg = Self {
            scheme: Scheme::Fdma,
            total_bw_hz,
            bw_hz: [b1_hz, total_bw_hz - b1_hz, 0.0],
            alpha: [[true, false, false], [false, true, false]],
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Both users superimposed on the whole band.
    pub fn noma(total_bw_hz: f64) -> Result<Self, MacError> {
        let cfg = Self {
            scheme: Scheme::Noma,
            total_bw_hz,
            bw_hz: [0.0, 0.0, total_bw_hz],
            alpha: [[false, false, true], [false, false, true]],
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), MacError> {
        let err = |msg: String| Err(MacError::Slicing(msg));
        if !(self.total_bw_hz > 0.0) {
            return err(format!("total bandwidth {} must be positive", self.total_bw_hz));
        }
        if self.bw_hz.iter().any(|&b| !(b >= 0.0)) {
            return err(format!("negative sub-band bandwidth in {:?}", self.bw_hz));
        }
        let sum: f64 = self.bw_hz.iter().sum();
        if (sum - self.total_bw_hz).abs() > 1e-9 * self.total_bw_hz {
            return err(format!("sub-bands sum to {sum}, expected {}", self.total_bw_hz));
        }
        let expected = match self.scheme {
            Scheme::Fdma => {
                if self.bw_hz[2] != 0.0 {
                    return err("FDMA requires an empty shared sub-band".into());
                }
                [[true, false, false], [false, true, false]]
            }
            Scheme::Noma => {
                if self.bw_hz[0] != 0.0 || self.bw_hz[1] != 0.0 {
                    return err("NOMA requires all bandwidth in the shared sub-band".into());
                }
                [[false, false, true], [false, false, true]]
            }
        };
        if self.alpha != expected {
            return err(format!("allocation {:?} does not match {}", self.alpha, self.scheme));
        }
        Ok(())
    }

    pub fn bandwidth(&self, band: SubBand) -> f64 {
        self.bw_hz[band.index()]
    }

    pub fn band_of(&self, user: UserId) -> SubBand {
        let row = &self.alpha[user.index()];
        SubBand::ALL
            .into_iter()
            .find(|b| row[b.index()])
            .expect("validated allocation has one sub-band per user")
    }

    pub fn b1_fraction(&self) -> f64 {
        self.bw_hz[0] / self.total_bw_hz
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameConfig {
    pub frame_len_slots: u32,
    pub slot_s: f64,
}

impl FrameConfig {
    pub fn new(frame_len_slots: u32, slot_s: f64) -> Result<Self, MacError> {
        if frame_len_slots < 2 {
            return Err(MacError::Frame(format!(
                "frame needs at least 2 slots, got {frame_len_slots}"
            )));
        }
        if !(slot_s > 0.0) {
            return Err(MacError::Frame(format!("slot duration {slot_s} must be positive")));
        }
        Ok(Self {
            frame_len_slots,
            slot_s,
        })
    }

    /// The last slot carries downlink feedback.
    pub fn uplink_slots(&self) -> u32 {
        self.frame_len_slots - 1
    }

    pub fn is_feedback_slot(&self, slot_in_frame: u32) -> bool {
        slot_in_frame == self.frame_len_slots - 1
    }
}

/// Latency targets (slots) and the reward for meeting each.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardSpec {
    targets: Vec<u32>,
    rewards: Vec<f64>,
}

impl RewardSpec {
    pub fn new(targets: Vec<u32>, rewards: Vec<f64>) -> Result<Self, MacError> {
        if targets.is_empty() {
            return Err(MacError::Rewards("at least one latency target is required".into()));
        }
        if targets.len() != rewards.len() {
            return Err(MacError::Rewards(format!(
                "{} targets but {} rewards",
                targets.len(),
                rewards.len()
            )));
        }
        if targets.windows(2).any(|w| w[0] >= w[1]) {
            return Err(MacError::Rewards(format!("targets {targets:?} must strictly increase")));
        }
        if rewards.windows(2).any(|w| !(w[0] > w[1])) {
            return Err(MacError::Rewards(format!("rewards {rewards:?} must strictly decrease")));
        }
        if rewards.iter().any(|r| !r.is_finite()) {
            return Err(MacError::Rewards("rewards must be finite".into()));
        }
        Ok(Self { targets, rewards })
    }

    pub fn targets(&self) -> &[u32] {
        &self.targets
    }

    pub fn rewards(&self) -> &[f64] {
        &self.rewards
    }

    /// The last (largest) target; packets older than this expire.
    pub fn max_latency(&self) -> u32 {
        *self.targets.last().expect("non-empty")
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            targets: self.targets.clone(),
            rewards: self.rewards.iter().map(|r| r * factor).collect(),
        }
    }
}

/// Slots (within the frame) holding the `degree` repetitions.
pub fn place_repetitions(degree: u32, frame: &FrameConfig) -> Result<Vec<u32>, MacError> {
    if degree > frame.uplink_slots() {
        return Err(MacError::InvalidAction {
            degree,
            uplink: frame.uplink_slots(),
        });
    }
    Ok((0..degree).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArrivalEvent {
    None,
    Accepted,
    Discarded,
}

/// Single-slot queue of the intermittent device.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IntermittentUserState {
    pub queue_occupied: bool,
    pub latency_slots: u32,
    pub repetitions: u32,
    pub decoded: bool,
    pub generation_slot: u64,
    pub decode_slot: Option<u64>,
    pub arrivals: u64,
    pub discards: u64,
}

impl IntermittentUserState {
    /// Bernoulli(`p_a`) packet generation for one slot. One uniform is drawn
    /// every call so the stream stays aligned regardless of queue state.
    pub fn arrival_step<R: Rng + ?Sized>(&mut self, rng: &mut R, p_a: f64, slot: u64) -> ArrivalEvent {
        let u: f64 = rng.gen();
        if u >= p_a {
            return ArrivalEvent::None;
        }
        if self.queue_occupied {
            self.discards += 1;
            return ArrivalEvent::Discarded;
        }
        self.arrivals += 1;
        self.queue_occupied = true;
        self.latency_slots = 0;
        self.repetitions = 0;
        self.decoded = false;
        self.generation_slot = slot;
        self.decode_slot = None;
        ArrivalEvent::Accepted
    }

    /// Close a slot: the latency of an undecoded packet grows by one, and
    /// freezes once a repetition decodes.
    pub fn end_of_slot(&mut self, decoded_now: bool, slot: u64) {
        if !self.queue_occupied || self.decoded {
            return;
        }
        self.latency_slots += 1;
        if decoded_now {
            self.decoded = true;
            self.decode_slot = Some(slot);
        }
    }

    pub fn observe(&self) -> MdpState {
        if self.queue_occupied {
            MdpState::new(self.latency_slots, self.repetitions, self.decoded)
        } else {
            MdpState::IDLE
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PacketOutcome {
    Delivered,
    Expired,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PacketResult {
    pub outcome: PacketOutcome,
    pub latency_slots: u32,
    pub repetitions: u32,
    pub generation_slot: u64,
}

impl PacketResult {
    /// The frame-boundary state in which this result is observed.
    pub fn terminal_state(&self) -> MdpState {
        MdpState::new(
            self.latency_slots,
            self.repetitions,
            self.outcome == PacketOutcome::Delivered,
        )
    }
}

/// Rateless block transmission of the broadband user.
#[derive(Debug, Clone, PartialEq)]
pub struct BroadbandUserState {
    pub block_len: u32,
    pub block_index: u64,
    pub packets_received: u32,
    pub rate_bps: f64,
    pub power_w: f64,
    pub frames_elapsed_current_block: u32,
}

impl BroadbandUserState {
    pub fn new(block_len: u32, rate_bps: f64, power_w: f64) -> Self {
        Self {
            block_len,
            block_index: 0,
            packets_received: 0,
            rate_bps,
            power_w,
            frames_elapsed_current_block: 0,
        }
    }

    /// Count one received coded packet. Packets past `K` are kept in the
    /// counter until feedback resets it; they carry no new information.
    pub fn block_progress(&mut self, decoded_this_slot: bool) {
        if decoded_this_slot {
            self.packets_received += 1;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeedbackRecord {
    pub broadband_ack: bool,
    /// Frames the acknowledged block took, `W(K)`.
    pub block_frames: Option<u32>,
    /// State the intermittent device observes, before its queue is cleared.
    pub observed: MdpState,
}

/// End-of-frame feedback: acknowledge a complete broadband block and
/// resolve the intermittent packet (delivered, expired, or kept).
pub fn feedback_step(
    intermittent: &mut IntermittentUserState,
    broadband: Option<&mut BroadbandUserState>,
    spec: &RewardSpec,
) -> (FeedbackRecord, Option<PacketResult>) {
    let mut broadband_ack = false;
    let mut block_frames = None;
    if let Some(bb) = broadband {
        bb.frames_elapsed_current_block += 1;
        if bb.packets_received >= bb.block_len {
            broadband_ack = true;
            block_frames = Some(bb.frames_elapsed_current_block);
            bb.block_index += 1;
            bb.packets_received = 0;
            bb.frames_elapsed_current_block = 0;
        }
    }

    let observed = intermittent.observe();
    let result = if !intermittent.queue_occupied {
        None
    } else if intermittent.decoded {
        Some(PacketOutcome::Delivered)
    } else if intermittent.latency_slots > spec.max_latency() {
        Some(PacketOutcome::Expired)
    } else {
        None
    }
    .map(|outcome| {
        let r = PacketResult {
            outcome,
            latency_slots: intermittent.latency_slots,
            repetitions: intermittent.repetitions,
            generation_slot: intermittent.generation_slot,
        };
        intermittent.queue_occupied = false;
        r
    });

    (
        FeedbackRecord {
            broadband_ack,
            block_frames,
            observed,
        },
        result,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn baseline_spec() -> RewardSpec {
        RewardSpec::new(vec![20, 40], vec![10.0, 3.0]).unwrap()
    }

    fn occupied(latency: u32, repetitions: u32, decoded: bool) -> IntermittentUserState {
        IntermittentUserState {
            queue_occupied: true,
            latency_slots: latency,
            repetitions,
            decoded,
            ..Default::default()
        }
    }

    #[test]
    fn repetitions_fill_a_prefix() {
        let frame = FrameConfig::new(10, 1e-3).unwrap();
        assert_eq!(place_repetitions(3, &frame).unwrap(), vec![0, 1, 2]);
        assert!(place_repetitions(0, &frame).unwrap().is_empty());
        assert_eq!(place_repetitions(9, &frame).unwrap(), (0..9).collect::<Vec<_>>());
        assert_eq!(
            place_repetitions(10, &frame),
            Err(MacError::InvalidAction { degree: 10, uplink: 9 })
        );
    }

    #[test]
    fn slicing_invariants() {
        let f = SlicingConfig::fdma(1e6, 0.3e6).unwrap();
        assert_eq!(f.bw_hz, [0.3e6, 0.7e6, 0.0]);
        assert_eq!(f.band_of(UserId::Intermittent), SubBand::Intermittent);
        let n = SlicingConfig::noma(1e6).unwrap();
        assert_eq!(n.band_of(UserId::Broadband), SubBand::Shared);
        assert!(SlicingConfig::fdma(1e6, 1.2e6).is_err());
        let mut bad = n;
        bad.alpha[0] = [true, false, false];
        assert!(bad.validate().is_err());
    }

    #[test]
    fn reward_spec_validation() {
        assert!(RewardSpec::new(vec![20, 40], vec![10.0, 3.0]).is_ok());
        assert!(RewardSpec::new(vec![40, 20], vec![10.0, 3.0]).is_err());
        assert!(RewardSpec::new(vec![20, 40], vec![3.0, 10.0]).is_err());
        assert!(RewardSpec::new(vec![20], vec![10.0, 3.0]).is_err());
        assert!(RewardSpec::new(vec![], vec![]).is_err());
    }

    #[test]
    fn arrivals_respect_queue_of_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut s = IntermittentUserState::default();
        assert_eq!(s.arrival_step(&mut rng, 1.0, 5), ArrivalEvent::Accepted);
        assert_eq!(s.generation_slot, 5);
        let before = s.clone();
        assert_eq!(s.arrival_step(&mut rng, 1.0, 6), ArrivalEvent::Discarded);
        assert_eq!(s.discards, 1);
        assert_eq!(
            IntermittentUserState { discards: 0, ..s },
            IntermittentUserState { discards: 0, ..before }
        );
    }

    #[test]
    fn arrival_rate_matches_bernoulli() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 1_000_000u64;
        let mut hits = 0u64;
        for slot in 0..n {
            let mut s = IntermittentUserState::default();
            if s.arrival_step(&mut rng, 0.01, slot) == ArrivalEvent::Accepted {
                hits += 1;
            }
        }
        let sigma = (0.01 * 0.99 / n as f64).sqrt();
        assert!((hits as f64 / n as f64 - 0.01).abs() < 3.0 * sigma);
    }

    #[test]
    fn latency_freezes_on_decode() {
        let mut s = occupied(4, 2, false);
        s.end_of_slot(false, 10);
        assert_eq!(s.latency_slots, 5);
        s.end_of_slot(true, 11);
        assert_eq!((s.latency_slots, s.decoded, s.decode_slot), (6, true, Some(11)));
        s.end_of_slot(false, 12);
        assert_eq!(s.latency_slots, 6);
    }

    #[test]
    fn feedback_resolves_packets() {
        let spec = baseline_spec();

        let mut s = occupied(18, 3, true);
        let (rec, res) = feedback_step(&mut s, None, &spec);
        let res = res.unwrap();
        assert_eq!(res.outcome, PacketOutcome::Delivered);
        assert_eq!((res.latency_slots, res.repetitions), (18, 3));
        assert_eq!(rec.observed, MdpState::new(18, 3, true));
        assert!(!s.queue_occupied);

        let mut s = occupied(45, 6, false);
        let (_, res) = feedback_step(&mut s, None, &spec);
        assert_eq!(res.unwrap().outcome, PacketOutcome::Expired);
        assert!(!s.queue_occupied);

        let mut s = occupied(30, 2, false);
        let (rec, res) = feedback_step(&mut s, None, &spec);
        assert!(res.is_none());
        assert!(s.queue_occupied);
        assert_eq!(rec.observed, MdpState::new(30, 2, false));
    }

    #[test]
    fn broadband_block_acknowledgement() {
        let spec = baseline_spec();
        let mut idle = IntermittentUserState::default();
        let mut bb = BroadbandUserState::new(32, 5e6, 1e-5);
        bb.packets_received = 31;
        bb.block_progress(false);
        assert_eq!(bb.packets_received, 31);
        bb.block_progress(true);
        assert_eq!(bb.packets_received, 32);
        bb.frames_elapsed_current_block = 3;
        let (rec, _) = feedback_step(&mut idle, Some(&mut bb), &spec);
        assert!(rec.broadband_ack);
        assert_eq!(rec.block_frames, Some(4));
        assert_eq!((bb.block_index, bb.packets_received), (1, 0));

        bb.packets_received = 10;
        let (rec, _) = feedback_step(&mut idle, Some(&mut bb), &spec);
        assert!(!rec.broadband_ack);
        assert_eq!(bb.frames_elapsed_current_block, 1);
    }
}
