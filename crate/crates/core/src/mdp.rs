//! Frame-level Markov decision process of the intermittent device.
//!
//! States are observed right after the downlink feedback. A state is the
//! tuple (latency, repetitions so far, decoded flag). Delivered and expired
//! packets are terminal: their reward is collected on entry and the next
//! frame behaves like the idle state (the queue has just been emptied).

use std::collections::{HashMap, VecDeque};
use std::fmt::{self, Write as _};

use thiserror::Error;

use crate::mac::{FrameConfig, MacError, RewardSpec};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MdpError {
    #[error("invalid probability `{name}` = {value}")]
    InvalidProbability { name: &'static str, value: f64 },
    #[error("invalid solver config: {0}")]
    Solver(String),
    #[error("value iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NotConverged { iterations: u32, residual: f64 },
    #[error("policy file line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Mac(#[from] MacError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MdpState {
    pub latency: u32,
    pub repetitions: u32,
    pub decoded: bool,
}

impl MdpState {
    pub const IDLE: MdpState = MdpState {
        latency: 0,
        repetitions: 0,
        decoded: false,
    };

    pub fn new(latency: u32, repetitions: u32, decoded: bool) -> Self {
        Self {
            latency,
            repetitions,
            decoded,
        }
    }

    pub fn is_idle(&self) -> bool {
        self.latency == 0 && !self.decoded
    }

    /// Delivered, or past the last latency target.
    pub fn is_terminal(&self, spec: &RewardSpec) -> bool {
        self.decoded || self.latency > spec.max_latency()
    }

    /// A packet is queued and still waiting for a decoded repetition.
    pub fn is_pending(&self, spec: &RewardSpec) -> bool {
        !self.is_idle() && !self.is_terminal(spec)
    }
}

impl fmt::Display for MdpState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.latency, self.repetitions, self.decoded as u8)
    }
}

/// Step reward for delivering a packet with latency `latency`: the reward of
/// the tightest target still met, or 0 once every target is missed.
pub fn immediate_reward(latency: u32, spec: &RewardSpec) -> f64 {
    spec.targets()
        .iter()
        .zip(spec.rewards())
        .filter(|(&target, _)| latency <= target)
        .map(|(_, &r)| r)
        .fold(None, |best: Option<f64>, r| Some(best.map_or(r, |b| b.max(r))))
        .unwrap_or(0.0)
}

/// Reward collected on entering `s`; each repetition costs one unit.
pub fn state_reward(s: &MdpState, spec: &RewardSpec) -> f64 {
    if s.is_terminal(spec) {
        immediate_reward(s.latency, spec) - s.repetitions as f64
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub discount: f64,
    pub tolerance: f64,
    pub max_iterations: u32,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            discount: 0.99,
            tolerance: 1e-6,
            max_iterations: 100_000,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), MdpError> {
        if !(self.discount >= 0.0 && self.discount < 1.0) {
            return Err(MdpError::Solver(format!("discount {} outside [0, 1)", self.discount)));
        }
        if !(self.tolerance > 0.0) {
            return Err(MdpError::Solver(format!("tolerance {} must be positive", self.tolerance)));
        }
        if self.max_iterations == 0 {
            return Err(MdpError::Solver("max_iterations must be positive".into()));
        }
        Ok(())
    }
}

/// Exact frame-to-frame kernel over the states reachable from idle.
#[derive(Debug, Clone)]
pub struct TransitionModel {
    states: Vec<MdpState>,
    index: HashMap<MdpState, usize>,
    /// `rows[s][a]` lists `(next state index, probability)`.
    rows: Vec<Vec<Vec<(usize, f64)>>>,
    rewards: Vec<f64>,
    success_prob: f64,
    arrival_prob: f64,
    frame: FrameConfig,
    spec: RewardSpec,
}

fn arrival_row(p_a: f64, frame_len: u32) -> Vec<(MdpState, f64)> {
    let mut row = Vec::with_capacity(frame_len as usize + 1);
    let mut none_yet = 1.0;
    for slot in 0..frame_len {
        row.push((MdpState::new(frame_len - slot, 0, false), none_yet * p_a));
        none_yet *= 1.0 - p_a;
    }
    row.push((MdpState::IDLE, none_yet));
    row
}

fn pending_row(s: MdpState, degree: u32, p: f64, frame_len: u32) -> Vec<(MdpState, f64)> {
    let k = s.repetitions + degree;
    let mut row = Vec::with_capacity(degree as usize + 1);
    let mut all_failed = 1.0;
    for offset in 0..degree {
        row.push((MdpState::new(s.latency + offset + 1, k, true), all_failed * p));
        all_failed *= 1.0 - p;
    }
    row.push((MdpState::new(s.latency + frame_len, k, false), all_failed));
    row
}

impl TransitionModel {
    /// Build the kernel for per-slot success probability `p` and per-slot
    /// arrival probability `p_a`.
    ///
    /// The state set is the structural closure from idle, independent of
    /// the probability values, so a policy solved for one `p` covers any
    /// trajectory the simulator can produce.
    pub fn build(p: f64, p_a: f64, frame: FrameConfig, spec: &RewardSpec) -> Result<Self, MdpError> {
        if !(0.0..=1.0).contains(&p) {
            return Err(MdpError::InvalidProbability { name: "success_prob", value: p });
        }
        if !(0.0..=1.0).contains(&p_a) {
            return Err(MdpError::InvalidProbability { name: "arrival_prob", value: p_a });
        }
        let f = frame.frame_len_slots;
        let actions = frame.uplink_slots() + 1;

        let mut states = vec![MdpState::IDLE];
        let mut index = HashMap::from([(MdpState::IDLE, 0usize)]);
        let mut symbolic: Vec<Vec<Vec<(MdpState, f64)>>> = Vec::new();
        let mut queue = VecDeque::from([MdpState::IDLE]);
        while let Some(s) = queue.pop_front() {
            let rows: Vec<Vec<(MdpState, f64)>> = if s.is_pending(spec) {
                (0..actions).map(|a| pending_row(s, a, p, f)).collect()
            } else {
                let row = arrival_row(p_a, f);
                vec![row; actions as usize]
            };
            for row in &rows {
                for (next, _) in row {
                    if !index.contains_key(next) {
                        index.insert(*next, states.len());
                        states.push(*next);
                        queue.push_back(*next);
                    }
                }
            }
            symbolic.push(rows);
        }

        let rows = symbolic
            .into_iter()
            .map(|per_action| {
                per_action
                    .into_iter()
                    .map(|row| row.into_iter().map(|(s, q)| (index[&s], q)).collect())
                    .collect()
            })
            .collect();
        let rewards = states.iter().map(|s| state_reward(s, spec)).collect();
        Ok(Self {
            states,
            index,
            rows,
            rewards,
            success_prob: p,
            arrival_prob: p_a,
            frame,
            spec: spec.clone(),
        })
    }

    pub fn states(&self) -> &[MdpState] {
        &self.states
    }

    pub fn index_of(&self, s: &MdpState) -> Option<usize> {
        self.index.get(s).copied()
    }

    pub fn num_actions(&self) -> u32 {
        self.frame.uplink_slots() + 1
    }

    pub fn row(&self, state: usize, action: u32) -> &[(usize, f64)] {
        &self.rows[state][action as usize]
    }

    /// Probability of `to` from `from` under `action`; 0 outside the support.
    pub fn probability(&self, from: &MdpState, action: u32, to: &MdpState) -> f64 {
        match (self.index_of(from), self.index_of(to)) {
            (Some(i), Some(j)) => self
                .row(i, action)
                .iter()
                .filter(|(n, _)| *n == j)
                .map(|(_, q)| q)
                .sum(),
            _ => 0.0,
        }
    }

    pub fn reward(&self, state: usize) -> f64 {
        self.rewards[state]
    }

    pub fn success_prob(&self) -> f64 {
        self.success_prob
    }

    pub fn arrival_prob(&self) -> f64 {
        self.arrival_prob
    }

    pub fn frame(&self) -> &FrameConfig {
        &self.frame
    }

    pub fn spec(&self) -> &RewardSpec {
        &self.spec
    }

    /// Only pending states have a choice; elsewhere every action is equivalent.
    pub fn has_choice(&self, state: usize) -> bool {
        self.states[state].is_pending(&self.spec)
    }

    /// Expected one-step return `sum p(s'|s,a) (R(s') + beta V(s'))`.
    pub fn q_value(&self, state: usize, action: u32, values: &[f64], discount: f64) -> f64 {
        self.row(state, action)
            .iter()
            .map(|&(n, q)| q * (self.rewards[n] + discount * values[n]))
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValueTable {
    pub values: Vec<f64>,
    pub iterations: u32,
    pub residual: f64,
    /// Sup-norm change of every sweep, in order.
    pub residuals: Vec<f64>,
}

fn bellman_sweep(model: &TransitionModel, values: &[f64], discount: f64) -> Vec<f64> {
    (0..values.len())
        .map(|s| {
            (0..model.num_actions())
                .map(|a| model.q_value(s, a, values, discount))
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect()
}

/// Synchronous value iteration from `V = 0` until the sup-norm change is
/// at most `cfg.tolerance`.
pub fn value_iteration(model: &TransitionModel, cfg: &SolverConfig) -> Result<ValueTable, MdpError> {
    cfg.validate()?;
    let mut values = vec![0.0; model.states().len()];
    let mut residuals = Vec::new();
    for iteration in 1..=cfg.max_iterations {
        let next = bellman_sweep(model, &values, cfg.discount);
        let residual = next
            .iter()
            .zip(&values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        residuals.push(residual);
        values = next;
        if residual <= cfg.tolerance {
            return Ok(ValueTable {
                values,
                iterations: iteration,
                residual,
                residuals,
            });
        }
    }
    Err(MdpError::NotConverged {
        iterations: cfg.max_iterations,
        residual: *residuals.last().unwrap_or(&f64::INFINITY),
    })
}

/// Greedy action w.r.t. `values`; ties go to the fewest repetitions.
pub fn greedy_action(model: &TransitionModel, state: usize, values: &[f64], discount: f64) -> u32 {
    let mut best_action = 0;
    let mut best = model.q_value(state, 0, values, discount);
    for a in 1..model.num_actions() {
        let q = model.q_value(state, a, values, discount);
        if q > best + 1e-12 * (1.0 + best.abs()) {
            best = q;
            best_action = a;
        }
    }
    best_action
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyMeta {
    pub spec: RewardSpec,
    pub frame_len_slots: u32,
    pub success_prob: f64,
    pub arrival_prob: f64,
    pub discount: f64,
    pub tolerance: f64,
    pub residual: f64,
    pub iterations: u32,
}

/// Deterministic state-to-repetition-degree map with its state values.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    pub meta: PolicyMeta,
    states: Vec<MdpState>,
    actions: Vec<u32>,
    values: Vec<f64>,
    index: HashMap<MdpState, usize>,
}

pub fn extract_policy(values: &ValueTable, model: &TransitionModel, cfg: &SolverConfig) -> Policy {
    let actions = (0..model.states().len())
        .map(|s| greedy_action(model, s, &values.values, cfg.discount))
        .collect();
    Policy::new(
        PolicyMeta {
            spec: model.spec().clone(),
            frame_len_slots: model.frame().frame_len_slots,
            success_prob: model.success_prob(),
            arrival_prob: model.arrival_prob(),
            discount: cfg.discount,
            tolerance: cfg.tolerance,
            residual: values.residual,
            iterations: values.iterations,
        },
        model.states().to_vec(),
        actions,
        values.values.clone(),
    )
}

/// Build the kernel, run value iteration and extract the policy.
pub fn solve(
    p: f64,
    p_a: f64,
    frame: FrameConfig,
    spec: &RewardSpec,
    cfg: &SolverConfig,
) -> Result<(TransitionModel, Policy), MdpError> {
    let model = TransitionModel::build(p, p_a, frame, spec)?;
    let values = value_iteration(&model, cfg)?;
    let policy = extract_policy(&values, &model, cfg);
    Ok((model, policy))
}

/// Where the simulator gets its per-frame repetition degree from.
pub trait ActionSource {
    /// `None` when the source has no entry for `state`.
    fn action(&self, state: &MdpState) -> Option<u32>;
}

impl ActionSource for Policy {
    fn action(&self, state: &MdpState) -> Option<u32> {
        self.index.get(state).map(|&i| self.actions[i])
    }
}

/// Always transmit the same number of repetitions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FixedDegree(pub u32);

impl ActionSource for FixedDegree {
    fn action(&self, _state: &MdpState) -> Option<u32> {
        Some(self.0)
    }
}

impl Policy {
    pub fn new(meta: PolicyMeta, states: Vec<MdpState>, actions: Vec<u32>, values: Vec<f64>) -> Self {
        let index = states.iter().enumerate().map(|(i, s)| (*s, i)).collect();
        Self {
            meta,
            states,
            actions,
            values,
            index,
        }
    }

    pub fn states(&self) -> &[MdpState] {
        &self.states
    }

    pub fn actions(&self) -> &[u32] {
        &self.actions
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, state: &MdpState) -> Option<f64> {
        self.index.get(state).map(|&i| self.values[i])
    }

    /// Actions aligned with `model`'s state order.
    pub fn actions_for(&self, model: &TransitionModel) -> Option<Vec<u32>> {
        model.states().iter().map(|s| self.action(s)).collect()
    }

    pub fn to_text(&self) -> String {
        let m = &self.meta;
        let mut out = String::new();
        let join = |v: Vec<String>| v.join(",");
        let _ = writeln!(out, "# repetition policy");
        let _ = writeln!(out, "targets={}", join(m.spec.targets().iter().map(|t| t.to_string()).collect()));
        let _ = writeln!(out, "rewards={}", join(m.spec.rewards().iter().map(|r| r.to_string()).collect()));
        let _ = writeln!(out, "frame_len_slots={}", m.frame_len_slots);
        let _ = writeln!(out, "success_prob={}", m.success_prob);
        let _ = writeln!(out, "arrival_prob={}", m.arrival_prob);
        let _ = writeln!(out, "discount={}", m.discount);
        let _ = writeln!(out, "tolerance={}", m.tolerance);
        let _ = writeln!(out, "residual={}", m.residual);
        let _ = writeln!(out, "iterations={}", m.iterations);
        let _ = writeln!(out, "[states]");
        let _ = writeln!(out, "latency,repetitions,decoded,action,value");
        for ((s, a), v) in self.states.iter().zip(&self.actions).zip(&self.values) {
            let _ = writeln!(out, "{},{},{},{},{}", s.latency, s.repetitions, s.decoded as u8, a, v);
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, MdpError> {
        let perr = |line: usize, msg: String| MdpError::Parse { line, msg };
        let mut meta: HashMap<&str, (usize, &str)> = HashMap::new();
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
        let mut in_rows = false;
        for (n, line) in lines.by_ref() {
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if line == "[states]" {
                in_rows = true;
                break;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| perr(n, format!("expected key=value, got `{line}`")))?;
            meta.insert(k.trim(), (n, v.trim()));
        }
        if !in_rows {
            return Err(perr(text.lines().count(), "missing [states] section".into()));
        }
        fn field<'a>(meta: &HashMap<&str, (usize, &'a str)>, key: &str) -> Result<(usize, &'a str), MdpError> {
            meta.get(key).copied().ok_or_else(|| MdpError::Parse {
                line: 0,
                msg: format!("missing field `{key}`"),
            })
        }
        fn num<T: std::str::FromStr>(meta: &HashMap<&str, (usize, &str)>, key: &str) -> Result<T, MdpError> {
            let (line, v) = field(meta, key)?;
            v.parse().map_err(|_| MdpError::Parse {
                line,
                msg: format!("field `{key}`: cannot parse `{v}`"),
            })
        }
        fn list<T: std::str::FromStr>(meta: &HashMap<&str, (usize, &str)>, key: &str) -> Result<Vec<T>, MdpError> {
            let (line, v) = field(meta, key)?;
            v.split(',')
                .map(|x| {
                    x.trim().parse().map_err(|_| MdpError::Parse {
                        line,
                        msg: format!("field `{key}`: cannot parse `{x}`"),
                    })
                })
                .collect()
        }

        let spec = RewardSpec::new(list(&meta, "targets")?, list(&meta, "rewards")?)?;
        let meta = PolicyMeta {
            spec,
            frame_len_slots: num(&meta, "frame_len_slots")?,
            success_prob: num(&meta, "success_prob")?,
            arrival_prob: num(&meta, "arrival_prob")?,
            discount: num(&meta, "discount")?,
            tolerance: num(&meta, "tolerance")?,
            residual: num(&meta, "residual")?,
            iterations: num(&meta, "iterations")?,
        };

        let mut states = Vec::new();
        let mut actions = Vec::new();
        let mut values = Vec::new();
        let mut header_seen = false;
        for (n, line) in lines {
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if !header_seen {
                header_seen = true;
                if line.starts_with("latency") {
                    continue;
                }
            }
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            if cols.len() != 5 {
                return Err(perr(n, format!("expected 5 columns, got {}", cols.len())));
            }
            let int = |c: &str| c.parse::<u32>().map_err(|_| perr(n, format!("bad integer `{c}`")));
            let decoded = match cols[2] {
                "0" => false,
                "1" => true,
                other => return Err(perr(n, format!("decoded flag must be 0 or 1, got `{other}`"))),
            };
            let action = int(cols[3])?;
            if action >= meta.frame_len_slots {
                return Err(perr(n, format!("action {action} exceeds the uplink slots")));
            }
            states.push(MdpState::new(int(cols[0])?, int(cols[1])?, decoded));
            actions.push(action);
            values.push(cols[4].parse::<f64>().map_err(|_| perr(n, format!("bad value `{}`", cols[4])))?);
        }
        Ok(Policy::new(meta, states, actions, values))
    }
}

/// Expected discounted return of a fixed action assignment, by iterative
/// policy evaluation down to `tol`.
pub fn evaluate_policy(model: &TransitionModel, actions: &[u32], discount: f64, tol: f64) -> Vec<f64> {
    let n = model.states().len();
    let mut values = vec![0.0; n];
    loop {
        let next: Vec<f64> = (0..n).map(|s| model.q_value(s, actions[s], &values, discount)).collect();
        let delta = next.iter().zip(&values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        values = next;
        if delta <= tol {
            return values;
        }
    }
}

/// Long-run fraction of frames spent in each state under `actions`.
///
/// Power iteration on the lazy chain `(I + P) / 2`, which shares the
/// stationary law of `P` but is aperiodic.
pub fn stationary_distribution(model: &TransitionModel, actions: &[u32]) -> Vec<f64> {
    let n = model.states().len();
    let mut mu = vec![0.0; n];
    mu[0] = 1.0;
    for _ in 0..1_000_000 {
        let mut next: Vec<f64> = mu.iter().map(|m| 0.5 * m).collect();
        for (s, &m) in mu.iter().enumerate() {
            if m == 0.0 {
                continue;
            }
            for &(t, q) in model.row(s, actions[s]) {
                next[t] += 0.5 * m * q;
            }
        }
        let delta: f64 = next.iter().zip(&mu).map(|(a, b)| (a - b).abs()).sum();
        mu = next;
        if delta < 1e-14 {
            break;
        }
    }
    mu
}

/// Mean reward per resolved packet under `actions`, from the stationary law.
pub fn average_reward_per_packet(model: &TransitionModel, actions: &[u32]) -> f64 {
    let mu = stationary_distribution(model, actions);
    let mut reward = 0.0;
    let mut packets = 0.0;
    for (s, state) in model.states().iter().enumerate() {
        if state.is_terminal(model.spec()) {
            reward += mu[s] * model.reward(s);
            packets += mu[s];
        }
    }
    if packets > 0.0 {
        reward / packets
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn baseline_spec() -> RewardSpec {
        RewardSpec::new(vec![20, 40], vec![10.0, 3.0]).unwrap()
    }

    fn frame(f: u32) -> FrameConfig {
        FrameConfig::new(f, 1e-3).unwrap()
    }

    #[test]
    fn step_reward_boundaries() {
        let spec = baseline_spec();
        assert_eq!(immediate_reward(15, &spec), 10.0);
        assert_eq!(immediate_reward(20, &spec), 10.0);
        assert_eq!(immediate_reward(21, &spec), 3.0);
        assert_eq!(immediate_reward(40, &spec), 3.0);
        assert_eq!(immediate_reward(41, &spec), 0.0);
    }

    #[test]
    fn state_rewards() {
        let spec = baseline_spec();
        assert_eq!(state_reward(&MdpState::new(18, 3, true), &spec), 7.0);
        assert_eq!(state_reward(&MdpState::new(45, 6, false), &spec), -6.0);
        assert_eq!(state_reward(&MdpState::new(12, 2, false), &spec), 0.0);
        assert_eq!(state_reward(&MdpState::IDLE, &spec), 0.0);
    }

    #[test]
    fn certain_outcomes() {
        let spec = baseline_spec();
        let m = TransitionModel::build(1.0, 0.01, frame(10), &spec).unwrap();
        let s = MdpState::new(5, 0, false);
        assert_eq!(m.probability(&s, 1, &MdpState::new(6, 1, true)), 1.0);

        let m = TransitionModel::build(0.0, 0.01, frame(10), &spec).unwrap();
        for a in 0..10 {
            assert_eq!(m.probability(&s, a, &MdpState::new(15, a, false)), 1.0);
        }
    }

    #[test]
    fn offset_distribution() {
        let spec = baseline_spec();
        let m = TransitionModel::build(0.6, 0.01, frame(10), &spec).unwrap();
        let s = MdpState::new(3, 0, false);
        let expected = [0.6, 0.24, 0.096];
        for (j, e) in expected.iter().enumerate() {
            let q = m.probability(&s, 3, &MdpState::new(4 + j as u32, 3, true));
            assert!((q - e).abs() < 1e-15);
        }
        assert!((m.probability(&s, 3, &MdpState::new(13, 3, false)) - 0.064).abs() < 1e-15);
    }

    #[test]
    fn state_space_bounds() {
        let spec = baseline_spec();
        let m = TransitionModel::build(0.5, 0.01, frame(10), &spec).unwrap();
        let k_max = 40u32.div_ceil(10) * 9;
        for s in m.states() {
            assert!(s.latency <= 40 + 10);
            assert!(s.repetitions <= k_max);
        }
        assert!(m.states().iter().any(|s| s.repetitions == k_max));
    }

    #[test]
    fn rows_sum_to_one() {
        let spec = baseline_spec();
        for &p in &[0.0, 0.3, 1.0] {
            let m = TransitionModel::build(p, 0.05, frame(10), &spec).unwrap();
            for s in 0..m.states().len() {
                for a in 0..m.num_actions() {
                    let sum: f64 = m.row(s, a).iter().map(|(_, q)| q).sum();
                    assert!((sum - 1.0).abs() < 1e-12);
                    assert!(m.row(s, a).iter().all(|(_, q)| *q >= 0.0));
                }
            }
        }
    }

    #[test]
    fn zero_success_gives_zero_policy_and_values() {
        let spec = baseline_spec();
        let (_, policy) = solve(0.0, 0.01, frame(10), &spec, &SolverConfig::default()).unwrap();
        assert!(policy.actions().iter().all(|&a| a == 0));
        for (s, &v) in policy.states().iter().zip(policy.values()) {
            assert!(v <= 0.0);
            if s.repetitions == 0 {
                assert_eq!(v, 0.0, "{s}");
            }
        }
        assert_eq!(policy.meta.residual, 0.0);
    }

    #[test]
    fn zero_discount_is_one_step_lookahead() {
        let spec = baseline_spec();
        let m = TransitionModel::build(0.7, 0.02, frame(6), &spec).unwrap();
        let cfg = SolverConfig {
            discount: 0.0,
            ..Default::default()
        };
        let v = value_iteration(&m, &cfg).unwrap();
        for s in 0..m.states().len() {
            let best = (0..m.num_actions())
                .map(|a| m.row(s, a).iter().map(|&(n, q)| q * m.reward(n)).sum::<f64>())
                .fold(f64::NEG_INFINITY, f64::max);
            assert!((v.values[s] - best).abs() < 1e-12);
        }
    }

    #[test]
    fn residuals_contract() {
        let spec = baseline_spec();
        let m = TransitionModel::build(0.8, 0.05, frame(10), &spec).unwrap();
        let cfg = SolverConfig::default();
        let v = value_iteration(&m, &cfg).unwrap();
        assert!(v.residual <= cfg.tolerance);
        let r0 = v.residuals[0];
        for (i, r) in v.residuals.iter().enumerate() {
            assert!(*r <= cfg.discount.powi(i as i32) * r0 * (1.0 + 1e-9) + 1e-12);
        }
        for w in v.residuals.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-9) + 1e-12);
        }
        let again = bellman_sweep(&m, &v.values, cfg.discount);
        let change = again.iter().zip(&v.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(change <= cfg.tolerance);
    }

    #[test]
    fn not_converged_is_reported() {
        let spec = baseline_spec();
        let m = TransitionModel::build(0.8, 0.05, frame(10), &spec).unwrap();
        let cfg = SolverConfig {
            max_iterations: 3,
            ..Default::default()
        };
        match value_iteration(&m, &cfg) {
            Err(MdpError::NotConverged { iterations: 3, residual }) => assert!(residual > 0.0),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn certain_success_sends_one_repetition() {
        let spec = RewardSpec::new(vec![20], vec![10.0]).unwrap();
        let (_, policy) = solve(1.0, 0.05, frame(10), &spec, &SolverConfig::default()).unwrap();
        for l in 1..=10 {
            assert_eq!(policy.action(&MdpState::new(l, 0, false)), Some(1));
        }
    }

    #[test]
    fn larger_rewards_buy_more_repetitions() {
        let spec = baseline_spec();
        let cfg = SolverConfig::default();
        let (_, a) = solve(0.6, 0.02, frame(10), &spec, &cfg).unwrap();
        let (_, b) = solve(0.6, 0.02, frame(10), &spec.scaled(3.5), &cfg).unwrap();
        for l in 1..=10 {
            let fresh = MdpState::new(l, 0, false);
            assert!(b.action(&fresh) >= a.action(&fresh), "{fresh}");
        }
    }

    #[test]
    fn policy_text_round_trip() {
        let spec = baseline_spec();
        let (_, policy) = solve(0.6, 0.02, frame(10), &spec, &SolverConfig::default()).unwrap();
        let parsed = Policy::from_text(&policy.to_text()).unwrap();
        assert_eq!(parsed, policy);
    }

    #[test]
    fn policy_parse_errors_name_the_line() {
        let text = "targets=20,40\nrewards=10,3\nframe_len_slots=10\nsuccess_prob=0.5\narrival_prob=0.01\n\
                    discount=0.99\ntolerance=1e-6\nresidual=0\niterations=1\n[states]\n\
                    latency,repetitions,decoded,action,value\n0,0,0,0,0\n1,0,2,0,0\n";
        match Policy::from_text(text) {
            Err(MdpError::Parse { line: 13, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }
}
