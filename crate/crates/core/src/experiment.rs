//! The solve / simulate / sweep / estimate workflows, independent of the
//! command line so they can be driven from examples and tests.

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use log::{info, warn};
use rayon::prelude::*;
use thiserror::Error;

use crate::mac::{RewardSpec, Scheme};
use crate::mdp::{self, ActionSource, MdpError, Policy, TransitionModel};
use crate::phy::{self, SuccessEstimate, UserId};
use crate::receiver::SubBand;
use crate::scenario::{ConfigError, Scenario, ScenarioConfig};
use crate::sim::{self, RngStream, RunReport, SimConfig, SimError};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("policy file: {0}")]
    PolicyFile(MdpError),
    #[error("policy does not match the scenario:\n{}", .0.join("\n"))]
    Incompatible(Vec<String>),
    #[error("invalid experiment: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Solver(MdpError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl ExperimentError {
    /// Process exit status for this failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            ExperimentError::Config(_)
            | ExperimentError::PolicyFile(_)
            | ExperimentError::Incompatible(_)
            | ExperimentError::InvalidSpec(_) => 1,
            ExperimentError::Io { .. } => 1,
            ExperimentError::Solver(MdpError::NotConverged { .. }) => 2,
            ExperimentError::Solver(_) | ExperimentError::Sim(_) | ExperimentError::Csv(_) => 3,
        }
    }
}

impl From<MdpError> for ExperimentError {
    fn from(e: MdpError) -> Self {
        ExperimentError::Solver(e)
    }
}

fn read_file(path: &Path) -> Result<String, ExperimentError> {
    std::fs::read_to_string(path).map_err(|source| ExperimentError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_file(path: &Path, contents: &str) -> Result<(), ExperimentError> {
    std::fs::write(path, contents).map_err(|source| ExperimentError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_config(path: &Path) -> Result<ScenarioConfig, ExperimentError> {
    Ok(ScenarioConfig::from_text(&read_file(path)?)?)
}

pub fn load_policy(path: &Path) -> Result<Policy, ExperimentError> {
    Policy::from_text(&read_file(path)?).map_err(ExperimentError::PolicyFile)
}

/// Where the per-slot success probability used by the solver came from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SuccessSource {
    Configured(f64),
    Estimated(SuccessEstimate),
    /// The intermittent user has no spectrum.
    NoLink,
}

impl SuccessSource {
    pub fn probability(&self) -> f64 {
        match self {
            SuccessSource::Configured(p) => *p,
            SuccessSource::Estimated(e) => e.probability(),
            SuccessSource::NoLink => 0.0,
        }
    }
}

/// Per-slot success probability of the intermittent device with the
/// broadband user transmitting, as the device experiences it in operation.
pub fn intermittent_success(scenario: &Scenario) -> SuccessSource {
    let cfg = &scenario.config;
    if let Some(p) = cfg.mdp.success_prob {
        return SuccessSource::Configured(p);
    }
    let Some(link) = scenario.intermittent else {
        return SuccessSource::NoLink;
    };
    let mut rng = RngStream::new(cfg.sim.seed, RngStream::ESTIMATION).rng();
    let est = phy::estimate_success_prob(
        scenario,
        UserId::Intermittent,
        link.sub_band,
        scenario.broadband.is_some(),
        cfg.mdp.estimate_samples,
        &mut rng,
    );
    est.map_or(SuccessSource::NoLink, SuccessSource::Estimated)
}

/// Estimate `p`, build the kernel and solve for the repetition policy.
pub fn solve_policy(scenario: &Scenario) -> Result<(SuccessSource, TransitionModel, Policy), ExperimentError> {
    let cfg = &scenario.config;
    let source = intermittent_success(scenario);
    let p = source.probability();
    info!("solving with p={p} p_a={}", cfg.intermittent.arrival_prob);
    let (model, policy) = mdp::solve(
        p,
        cfg.intermittent.arrival_prob,
        scenario.frame,
        &cfg.rewards,
        &cfg.mdp.solver,
    )?;
    info!(
        "value iteration: {} states, {} iterations, residual {:.3e}",
        model.states().len(),
        policy.meta.iterations,
        policy.meta.residual
    );
    Ok((source, model, policy))
}

/// Fields on which a stored policy disagrees with the scenario.
pub fn policy_mismatches(policy: &Policy, cfg: &ScenarioConfig) -> Vec<String> {
    let m = &policy.meta;
    let mut diff = Vec::new();
    if m.spec.targets() != cfg.rewards.targets() {
        diff.push(format!(
            "targets: policy {:?}, config {:?}",
            m.spec.targets(),
            cfg.rewards.targets()
        ));
    }
    if m.spec.rewards() != cfg.rewards.rewards() {
        diff.push(format!(
            "rewards: policy {:?}, config {:?}",
            m.spec.rewards(),
            cfg.rewards.rewards()
        ));
    }
    if m.frame_len_slots != cfg.frame.frame_len_slots {
        diff.push(format!(
            "frame_len_slots: policy {}, config {}",
            m.frame_len_slots, cfg.frame.frame_len_slots
        ));
    }
    diff
}

pub fn check_compatible(policy: &Policy, cfg: &ScenarioConfig) -> Result<(), ExperimentError> {
    let diff = policy_mismatches(policy, cfg);
    if !diff.is_empty() {
        return Err(ExperimentError::Incompatible(diff));
    }
    if (policy.meta.arrival_prob - cfg.intermittent.arrival_prob).abs() > 1e-12 {
        warn!(
            "policy was solved for p_a={}, scenario uses {}",
            policy.meta.arrival_prob, cfg.intermittent.arrival_prob
        );
    }
    Ok(())
}

/// Simulate with the frame count, seed and warm-up from the config.
pub fn simulate(scenario: &Scenario, policy: &dyn ActionSource) -> Result<RunReport, ExperimentError> {
    let s = &scenario.config.sim;
    let cfg = SimConfig {
        frames: s.frames,
        seed: s.seed,
        warmup_frames: s.warmup_frames,
    };
    Ok(sim::run(scenario, &cfg, policy)?)
}

/// One line of the success-probability report.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityRow {
    pub user: UserId,
    pub sub_band: SubBand,
    pub other_active: bool,
    /// `None` when the sub-band has no spectrum.
    pub estimate: Option<SuccessEstimate>,
    /// Interference-free closed form, where it applies.
    pub analytic: Option<f64>,
}

/// Estimate every (user, sub-band, interference) success probability.
pub fn estimate_probabilities(scenario: &Scenario, samples: u64, seed: u64) -> Vec<ProbabilityRow> {
    let mut rng = RngStream::new(seed, RngStream::ESTIMATION).rng();
    let mut rows = Vec::new();
    for user in [UserId::Broadband, UserId::Intermittent] {
        let band = scenario.slicing.band_of(user);
        if scenario.link(user).is_none() {
            rows.push(ProbabilityRow {
                user,
                sub_band: band,
                other_active: false,
                estimate: None,
                analytic: None,
            });
            continue;
        }
        let conditions: &[bool] = if scenario.link(user.other()).is_some() {
            &[false, true]
        } else {
            &[false]
        };
        for &other_active in conditions {
            let estimate = phy::estimate_success_prob(scenario, user, band, other_active, samples, &mut rng);
            let shares = scenario.slicing.band_of(user.other()) == band;
            let analytic = (!other_active || !shares).then(|| scenario.isolated_success_prob(user));
            rows.push(ProbabilityRow {
                user,
                sub_band: band,
                other_active,
                estimate,
                analytic,
            });
        }
    }
    rows
}

pub fn format_probability_report(rows: &[ProbabilityRow]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "user,sub_band,other_active,samples,p_hat,ci95_low,ci95_high,analytic");
    for r in rows {
        let user = match r.user {
            UserId::Broadband => "broadband",
            UserId::Intermittent => "intermittent",
        };
        match r.estimate {
            Some(e) => {
                let (lo, hi) = e.confidence_95();
                let analytic = r.analytic.map_or_else(String::new, |a| a.to_string());
                let _ = writeln!(
                    out,
                    "{user},{},{},{},{},{lo},{hi},{analytic}",
                    r.sub_band.number(),
                    r.other_active,
                    e.samples,
                    e.probability()
                );
            }
            None => {
                let _ = writeln!(out, "# {user}: sub-band {} has no bandwidth, skipped", r.sub_band.number());
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    B1Fraction,
    Distance,
    RewardSpec,
}

impl FromStr for SweepAxis {
    type Err = ExperimentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "b1_fraction" => Ok(SweepAxis::B1Fraction),
            "distance" | "distance_m" => Ok(SweepAxis::Distance),
            "reward_spec" => Ok(SweepAxis::RewardSpec),
            other => Err(ExperimentError::InvalidSpec(format!(
                "unknown sweep parameter `{other}` (expected b1_fraction, distance or reward_spec)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SweepValue {
    Number(f64),
    Rewards(RewardSpec),
}

impl SweepValue {
    fn label(&self) -> String {
        match self {
            SweepValue::Number(x) => x.to_string(),
            SweepValue::Rewards(spec) => reward_spec_label(spec),
        }
    }
}

/// `20,40=10,3` form of a reward spec.
pub fn reward_spec_label(spec: &RewardSpec) -> String {
    let t: Vec<String> = spec.targets().iter().map(ToString::to_string).collect();
    let r: Vec<String> = spec.rewards().iter().map(ToString::to_string).collect();
    format!("{}={}", t.join(","), r.join(","))
}

fn parse_reward_spec(item: &str) -> Result<RewardSpec, ExperimentError> {
    let bad = |msg: String| ExperimentError::InvalidSpec(format!("reward spec `{item}`: {msg}"));
    let (t, r) = item
        .split_once('=')
        .ok_or_else(|| bad("expected `targets=rewards`".into()))?;
    let targets = t
        .split(',')
        .map(|x| x.trim().parse::<u32>().map_err(|e| bad(e.to_string())))
        .collect::<Result<Vec<_>, _>>()?;
    let rewards = r
        .split(',')
        .map(|x| x.trim().parse::<f64>().map_err(|e| bad(e.to_string())))
        .collect::<Result<Vec<_>, _>>()?;
    RewardSpec::new(targets, rewards).map_err(|e| bad(e.to_string()))
}

/// Parse a `--values` list: comma-separated numbers, or `;`-separated
/// reward specs for the reward axis.
pub fn parse_values(axis: SweepAxis, raw: &str) -> Result<Vec<SweepValue>, ExperimentError> {
    let raw = raw.trim();
    if raw.is_empty() {
        return Err(ExperimentError::InvalidSpec("empty value list".into()));
    }
    let values = match axis {
        SweepAxis::RewardSpec => raw
            .split(';')
            .map(|item| parse_reward_spec(item.trim()).map(SweepValue::Rewards))
            .collect::<Result<Vec<_>, _>>()?,
        _ => raw
            .split(',')
            .map(|x| {
                x.trim()
                    .parse::<f64>()
                    .map(SweepValue::Number)
                    .map_err(|_| ExperimentError::InvalidSpec(format!("cannot parse sweep value `{}`", x.trim())))
            })
            .collect::<Result<Vec<_>, _>>()?,
    };
    for v in &values {
        match (axis, v) {
            (SweepAxis::B1Fraction, SweepValue::Number(x)) if !(0.0..=1.0).contains(x) => {
                return Err(ExperimentError::InvalidSpec(format!("b1_fraction {x} outside [0, 1]")));
            }
            (SweepAxis::Distance, SweepValue::Number(x)) if !(*x > 0.0) => {
                return Err(ExperimentError::InvalidSpec(format!("distance {x} must be positive")));
            }
            _ => {}
        }
    }
    Ok(values)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub base: ScenarioConfig,
    pub axis: SweepAxis,
    pub values: Vec<SweepValue>,
    pub out: Option<PathBuf>,
    pub jobs: usize,
}

impl ExperimentSpec {
    pub fn new(base: ScenarioConfig, axis: SweepAxis, raw_values: &str, jobs: usize) -> Result<Self, ExperimentError> {
        let values = parse_values(axis, raw_values)?;
        Ok(Self {
            base,
            axis,
            values,
            out: None,
            jobs: jobs.max(1),
        })
    }

    /// Scenario config of one sweep point.
    pub fn point(&self, value: &SweepValue) -> ScenarioConfig {
        let mut cfg = self.base.clone();
        match (self.axis, value) {
            (SweepAxis::B1Fraction, SweepValue::Number(x)) => cfg.slicing.b1_hz = x * cfg.slicing.total_bw_hz,
            (SweepAxis::Distance, SweepValue::Number(x)) => cfg.intermittent.distance_m = *x,
            (SweepAxis::RewardSpec, SweepValue::Rewards(spec)) => cfg.rewards = spec.clone(),
            _ => unreachable!("values are parsed per axis"),
        }
        cfg
    }
}

/// One sweep point's results.
#[derive(Debug, Clone, PartialEq)]
pub struct TradeoffRow {
    pub sweep_value: String,
    pub scheme: Scheme,
    pub b1_fraction: f64,
    pub distance_m: f64,
    pub reward_spec: String,
    pub result: Result<PointMetrics, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointMetrics {
    pub success_prob: f64,
    pub throughput_bps: f64,
    pub energy_efficiency: f64,
    pub avg_reward_per_packet: f64,
    pub reliability: Vec<(u32, f64)>,
    pub mean_repetitions: f64,
}

impl TradeoffRow {
    pub const HEADER: [&'static str; 12] = [
        "sweep_value",
        "scheme",
        "b1_fraction",
        "distance_m",
        "reward_spec",
        "success_prob",
        "throughput_bps",
        "energy_efficiency",
        "avg_reward_per_packet",
        "reliability",
        "mean_repetitions",
        "error",
    ];

    pub fn metrics(&self) -> Option<&PointMetrics> {
        self.result.as_ref().ok()
    }

    fn record(&self) -> Vec<String> {
        let mut rec = vec![
            self.sweep_value.clone(),
            self.scheme.to_string(),
            self.b1_fraction.to_string(),
            self.distance_m.to_string(),
            self.reward_spec.clone(),
        ];
        match &self.result {
            Ok(m) => {
                let rel: Vec<String> = m.reliability.iter().map(|(t, r)| format!("{t}:{r}")).collect();
                rec.extend([
                    m.success_prob.to_string(),
                    m.throughput_bps.to_string(),
                    m.energy_efficiency.to_string(),
                    m.avg_reward_per_packet.to_string(),
                    rel.join(";"),
                    m.mean_repetitions.to_string(),
                    String::new(),
                ]);
            }
            Err(e) => {
                rec.extend(std::iter::repeat_n(String::new(), 6));
                rec.push(e.clone());
            }
        }
        rec
    }
}

/// Resolve, solve and simulate one scenario.
pub fn run_point(cfg: &ScenarioConfig) -> Result<(PointMetrics, RunReport), ExperimentError> {
    let scenario = Scenario::resolve(cfg)?;
    let (source, _, policy) = solve_policy(&scenario)?;
    let report = simulate(&scenario, &policy)?;
    let metrics = PointMetrics {
        success_prob: source.probability(),
        throughput_bps: report.throughput_bps,
        energy_efficiency: report.energy_efficiency_bits_per_j,
        avg_reward_per_packet: report.avg_reward_per_packet,
        reliability: report.targets.iter().copied().zip(report.reliability.iter().copied()).collect(),
        mean_repetitions: report.mean_repetitions,
    };
    Ok((metrics, report))
}

/// Run every sweep point on a pool of `spec.jobs` threads. Rows come back in
/// sweep order; a failing point is reported in its row.
pub fn sweep(spec: &ExperimentSpec) -> Result<Vec<TradeoffRow>, ExperimentError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.jobs)
        .build()
        .map_err(|e| ExperimentError::InvalidSpec(e.to_string()))?;
    let rows = pool.install(|| {
        spec.values
            .par_iter()
            .map(|value| {
                let cfg = spec.point(value);
                let result = run_point(&cfg).map(|(m, _)| m).map_err(|e| {
                    warn!("sweep point {} failed: {e}", value.label());
                    e.to_string().replace('\n', " ")
                });
                TradeoffRow {
                    sweep_value: value.label(),
                    scheme: cfg.slicing.scheme,
                    b1_fraction: if cfg.slicing.scheme == Scheme::Fdma {
                        cfg.slicing.b1_hz / cfg.slicing.total_bw_hz
                    } else {
                        1.0
                    },
                    distance_m: cfg.intermittent.distance_m,
                    reward_spec: reward_spec_label(&cfg.rewards),
                    result,
                }
            })
            .collect()
    });
    Ok(rows)
}

pub fn write_csv<W: Write>(rows: &[TradeoffRow], out: W) -> Result<(), ExperimentError> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(TradeoffRow::HEADER)?;
    for row in rows {
        w.write_record(row.record())?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn csv_string(rows: &[TradeoffRow]) -> Result<String, ExperimentError> {
    let mut buf = Vec::new();
    write_csv(rows, &mut buf)?;
    Ok(String::from_utf8(buf).expect("csv output is utf-8"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn value_lists() {
        let v = parse_values(SweepAxis::B1Fraction, "0, 0.5,1").unwrap();
        assert_eq!(v.len(), 3);
        assert!(parse_values(SweepAxis::B1Fraction, "").is_err());
        assert!(parse_values(SweepAxis::B1Fraction, "1.5").is_err());
        assert!(parse_values(SweepAxis::Distance, "100,-1").is_err());
        let v = parse_values(SweepAxis::RewardSpec, "20,40=10,3;10,20,40=20,10,3").unwrap();
        assert_eq!(v.len(), 2);
        assert_eq!(v[1].label(), "10,20,40=20,10,3");
        assert!(parse_values(SweepAxis::RewardSpec, "20,40=3,10").is_err());
    }

    #[test]
    fn point_configs() {
        let spec = ExperimentSpec::new(ScenarioConfig::reference(), SweepAxis::B1Fraction, "0.3", 1).unwrap();
        let cfg = spec.point(&spec.values[0]);
        assert!((cfg.slicing.b1_hz - 0.3e6).abs() < 1e-6);
        let spec = ExperimentSpec::new(ScenarioConfig::reference(), SweepAxis::Distance, "200", 1).unwrap();
        assert_eq!(spec.point(&spec.values[0]).intermittent.distance_m, 200.0);
    }

    #[test]
    fn mismatch_lists_fields() {
        let mut cfg = ScenarioConfig::reference();
        cfg.mdp.success_prob = Some(0.5);
        cfg.sim.frames = 10;
        let scenario = Scenario::resolve(&cfg).unwrap();
        let (_, _, policy) = solve_policy(&scenario).unwrap();
        assert!(check_compatible(&policy, &cfg).is_ok());
        cfg.rewards = RewardSpec::new(vec![10, 20, 40], vec![20.0, 10.0, 3.0]).unwrap();
        cfg.frame.frame_len_slots = 8;
        let diff = policy_mismatches(&policy, &cfg);
        assert_eq!(diff.len(), 3);
        assert!(matches!(check_compatible(&policy, &cfg), Err(ExperimentError::Incompatible(_))));
    }

    #[test]
    fn failed_point_keeps_columns() {
        let row = TradeoffRow {
            sweep_value: "1".into(),
            scheme: Scheme::Fdma,
            b1_fraction: 1.0,
            distance_m: 400.0,
            reward_spec: "20,40=10,3".into(),
            result: Err("boom".into()),
        };
        assert_eq!(row.record().len(), TradeoffRow::HEADER.len());
        let text = csv_string(&[row]).unwrap();
        assert!(text.lines().nth(1).unwrap().ends_with(",boom"));
    }
}
