//! Slot-level simulation and scheduling for downlink cellular systems that
//! serve unicast and multicast flows with physical-layer rateless codes under
//! imperfect channel state information.
//!
//! The crate is organised bottom-up:
//!
//! * [`channel`]: fading draws, imperfect CSI, mutual information and its
//!   conditional expectation given the CSI report.
//! * [`rateless`]: decoding by mutual-information accumulation.
//! * [`queueing`]: data queues, the virtual power queue and arrivals.
//! * [`scheduler`]: the NC-RC max-weight policy and the baselines.
//! * [`repair`]: multicast with unicast file repair for stragglers.
//! * [`region`]: throughput-region linear programs and exact code-length oracles.
//! * [`sim`]: the slot engine, run metrics and stability classification.
//! * [`scenario`]: experiment presets, sweeps and CSV/JSON output.

pub mod channel;
pub mod error;
pub mod queueing;
pub mod rateless;
pub mod region;
pub mod repair;
pub mod scenario;
pub mod scheduler;
pub mod sim;

pub use error::{Error, Result};
