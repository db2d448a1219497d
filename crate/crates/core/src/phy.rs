//! UE geometry, path loss, Rayleigh block fading and the SINR kernel.

use rand::Rng;

use crate::config::{db_to_linear, dbm_to_watt, SimConfig};
use crate::scalar::Scalar;

/// UEs are never placed closer than this to the base station.
pub const MIN_DISTANCE_M: f64 = 1.0;

pub type UeId = usize;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UePhy<T> {
    pub ue_id: UeId,
    pub distance_m: T,
    /// `distance_m^(-eta)`
    pub pathgain: T,
}

impl<T: Scalar> UePhy<T> {
    pub fn new(ue_id: UeId, distance_m: T, pathloss_exp: T) -> Self {
        Self {
            ue_id,
            distance_m,
            pathgain: distance_m.powf(-pathloss_exp),
        }
    }
}

/// Linear-scale link constants shared by every UE in the cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkBudget<T> {
    pub tx_power_w: T,
    pub noise_w: T,
    pub sinr_threshold: T,
}

impl<T: Scalar> LinkBudget<T> {
    pub fn from_config(cfg: &SimConfig) -> Self {
        Self {
            tx_power_w: dbm_to_watt(T::of(cfg.tx_power_dbm)),
            noise_w: dbm_to_watt(T::of(cfg.noise_dbm)),
            sinr_threshold: db_to_linear(T::of(cfg.sinr_threshold_db)),
        }
    }

    pub fn received_power(&self, ue: &UePhy<T>, h: T) -> T {
        self.tx_power_w * h * ue.pathgain
    }
}

/// Uniform placement over the disk: `r = radius * sqrt(u)`, floored at 1 m.
pub fn place_ues<T: Scalar, R: Rng + ?Sized>(cfg: &SimConfig, rng: &mut R) -> Vec<UePhy<T>> {
    (0..cfg.n_ues)
        .map(|id| {
            let u: f64 = rng.gen();
            let r = (cfg.cell_radius_m * u.sqrt()).max(MIN_DISTANCE_M);
            UePhy::new(id, T::of(r), T::of(cfg.pathloss_exp))
        })
        .collect()
}

/// One unit-mean exponential power gain.
pub fn draw_fading<T: Scalar, R: Rng + ?Sized>(rng: &mut R) -> T {
    let u: f64 = rng.gen();
    // 1 - u lies in (0, 1]
    T::of(-(1.0 - u).ln())
}

/// `P * h * r^(-eta)` with `P` taken from the config.
pub fn received_power<T: Scalar>(cfg: &SimConfig, ue: &UePhy<T>, h: T) -> T {
    dbm_to_watt(T::of(cfg.tx_power_dbm)) * h * ue.pathgain
}

pub fn sinr<T: Scalar>(signal_w: T, interferers_w: &[T], noise_w: T) -> T {
    let interference: T = interferers_w.iter().copied().sum();
    signal_w / (interference + noise_w)
}
