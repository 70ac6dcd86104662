//! Per-slot successive interference cancellation at the base station.

use thiserror::Error;

use crate::phy::sinr;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DecodeError {
    #[error("user {user} is active but allocated to {count} sub-bands (need exactly one)")]
    MalformedAllocation { user: usize, count: usize },
}

/// Sub-band index: 1 is reserved for broadband, 2 for intermittent, 3 is shared.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SubBand {
    Broadband,
    Intermittent,
    Shared,
}

impl SubBand {
    pub const ALL: [SubBand; 3] = [SubBand::Broadband, SubBand::Intermittent, SubBand::Shared];

    pub fn index(self) -> usize {
        match self {
            SubBand::Broadband => 0,
            SubBand::Intermittent => 1,
            SubBand::Shared => 2,
        }
    }

    pub fn number(self) -> usize {
        self.index() + 1
    }
}

/// One user's contribution to a slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UserSignal {
    pub active: bool,
    pub gain: f64,
    pub power_w: f64,
    /// `gamma_min` for this user's rate on its allocated sub-band.
    pub threshold: f64,
}

impl UserSignal {
    pub fn idle() -> Self {
        Self {
            active: false,
            gain: 0.0,
            power_w: 0.0,
            threshold: f64::INFINITY,
        }
    }

    fn received_w(&self) -> f64 {
        if self.active {
            self.gain * self.power_w
        } else {
            0.0
        }
    }
}

/// Everything the decoder sees in one slot. Index 0 is the broadband user.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlotObservation {
    pub users: [UserSignal; 2],
    /// `alpha[m][i]` is set when user `m` is allocated to sub-band `i`.
    pub alpha: [[bool; 3]; 2],
    pub noise_w: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DecodeOrder {
    None,
    FirstThenSecond,
    SecondThenFirst,
    BothDirect,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SlotOutcome {
    pub decoded: [bool; 2],
    pub order_used: DecodeOrder,
}

impl SlotOutcome {
    pub fn decoded_broadband(&self) -> bool {
        self.decoded[0]
    }

    pub fn decoded_intermittent(&self) -> bool {
        self.decoded[1]
    }
}

fn allocated_band(alpha: &[bool; 3]) -> Result<Option<usize>, usize> {
    let count = alpha.iter().filter(|&&a| a).count();
    match count {
        0 => Ok(None),
        1 => Ok(alpha.iter().position(|&a| a)),
        n => Err(n),
    }
}

fn clears(user: &UserSignal, value: f64) -> bool {
    user.threshold.is_finite() && value >= user.threshold
}

/// Decode both users of one slot.
///
/// Each active user is first tested against the other's interference. Any
/// user decoded that way has its signal removed and the other user is
/// re-tested interference-free. Both decoding orders are attempted so the
/// result does not depend on which user happens to be stronger.
pub fn decode_slot(obs: &SlotObservation) -> Result<SlotOutcome, DecodeError> {
    let mut band = [None; 2];
    for m in 0..2 {
        match allocated_band(&obs.alpha[m]) {
            Ok(b) => band[m] = b,
            Err(count) => return Err(DecodeError::MalformedAllocation { user: m, count }),
        }
        if obs.users[m].active && band[m].is_none() {
            return Err(DecodeError::MalformedAllocation { user: m, count: 0 });
        }
    }

    let mut direct = [false; 2];
    let mut clean = [false; 2];
    for m in 0..2 {
        let user = &obs.users[m];
        let Some(i) = band[m] else { continue };
        if !user.active {
            continue;
        }
        let n = 1 - m;
        let interference = if obs.alpha[n][i] {
            obs.users[n].received_w()
        } else {
            0.0
        };
        direct[m] = clears(user, sinr(user.received_w(), interference, obs.noise_w[i]));
        clean[m] = clears(user, sinr(user.received_w(), 0.0, obs.noise_w[i]));
    }

    let decoded = [
        direct[0] || (direct[1] && clean[0]),
        direct[1] || (direct[0] && clean[1]),
    ];
    let order_used = match direct {
        [true, true] => DecodeOrder::BothDirect,
        [true, false] => DecodeOrder::FirstThenSecond,
        [false, true] => DecodeOrder::SecondThenFirst,
        [false, false] => DecodeOrder::None,
    };
    Ok(SlotOutcome {
        decoded,
        order_used,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const NOISE: f64 = 1e-15;
    const NOMA: [[bool; 3]; 2] = [[false, false, true], [false, false, true]];
    const FDMA: [[bool; 3]; 2] = [[true, false, false], [false, true, false]];

    fn user(snr: f64, threshold: f64) -> UserSignal {
        UserSignal {
            active: true,
            gain: snr * NOISE,
            power_w: 1.0,
            threshold,
        }
    }

    fn obs(users: [UserSignal; 2], alpha: [[bool; 3]; 2]) -> SlotObservation {
        SlotObservation {
            users,
            alpha,
            noise_w: [NOISE; 3],
        }
    }

    #[test]
    fn single_user_capture() {
        let o = obs([UserSignal::idle(), user(10.0, 5.0)], NOMA);
        let out = decode_slot(&o).unwrap();
        assert_eq!(out.decoded, [false, true]);
        assert_eq!(out.order_used, DecodeOrder::SecondThenFirst);
    }

    #[test]
    fn strong_user_then_cancellation() {
        let o = obs([user(100.0, 3.0), user(10.0, 5.0)], NOMA);
        let out = decode_slot(&o).unwrap();
        assert_eq!(out.decoded, [true, true]);
        assert_eq!(out.order_used, DecodeOrder::FirstThenSecond);
    }

    #[test]
    fn nobody_clears_with_interference() {
        let o = obs([user(100.0, 20.0), user(10.0, 5.0)], NOMA);
        let out = decode_slot(&o).unwrap();
        assert_eq!(out.decoded, [false, false]);
        assert_eq!(out.order_used, DecodeOrder::None);
    }

    #[test]
    fn fdma_users_do_not_interfere() {
        let o = obs([user(100.0, 20.0), user(10.0, 5.0)], FDMA);
        assert_eq!(decode_slot(&o).unwrap().order_used, DecodeOrder::BothDirect);
    }

    #[test]
    fn infinite_threshold_never_decodes() {
        let o = obs([UserSignal::idle(), user(1e9, f64::INFINITY)], FDMA);
        assert_eq!(decode_slot(&o).unwrap().decoded, [false, false]);
    }

    #[test]
    fn malformed_alpha_is_rejected() {
        let alpha = [[true, false, true], [false, true, false]];
        let o = obs([user(1.0, 1.0), user(1.0, 1.0)], alpha);
        assert_eq!(
            decode_slot(&o),
            Err(DecodeError::MalformedAllocation { user: 0, count: 2 })
        );
        let alpha = [[false; 3], [false, true, false]];
        let o = obs([user(1.0, 1.0), user(1.0, 1.0)], alpha);
        assert!(decode_slot(&o).is_err());
    }
}
