//! Uplink slicing between a broadband user and an intermittent device.
//!
//! The broadband user streams rateless-coded blocks; the intermittent device
//! sends single packets with a number of back-to-back repetitions chosen
//! each frame. Spectrum is shared either orthogonally (FDMA) or by
//! superposition with successive interference cancellation (NOMA). The
//! repetition policy is the solution of a frame-level MDP whose rewards
//! depend on which latency target a packet meets.
//!
//! Module map:
//! - [`phy`]: link budget, fading, SINR and outage.
//! - [`receiver`]: per-slot SIC decoder.
//! - [`mac`]: frame layout, slicing and user state machines.
//! - [`mdp`]: transition kernel, value iteration and policies.
//! - [`sim`]: slot-level simulator and run reports.
//! - [`scenario`]: configuration file and derived link quantities.
//! - [`experiment`]: solve / simulate / sweep / estimate workflows.
//! - [`cli`]: command-line front end.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod experiment;
pub mod mac;
pub mod mdp;
pub mod phy;
pub mod receiver;
pub mod scenario;
pub mod sim;
