//! Grant-free NOMA uplink simulator for bursty low-latency traffic, with
//! deep Q-learning and analytical resource configurators.

pub mod access;
pub mod agents;
pub mod baselines;
pub mod config;
pub mod env;
pub mod harness;
pub mod phy;
pub mod rng;
pub mod scalar;
pub mod sic;
pub mod traffic;
pub mod valuefn;
pub mod verify;

pub use config::{load_config, Profile, Scheme, SimConfig};
pub use scalar::Scalar;

/// Network precision used for training.
pub type QNet = valuefn::ValueNet<f32>;
/// Double-precision network, used for gradient checks.
pub type QNet64 = valuefn::ValueNet<f64>;
pub type LinkBudget64 = phy::LinkBudget<f64>;
pub type UePhy64 = phy::UePhy<f64>;
pub type RbRound64 = sic::RbRound<f64>;
