//! Bursty activation traffic: the time-limited Beta profile and window queries.

use std::io::Write;
use std::ops::Range;

use rand::Rng;
use statrs::function::beta::{beta_reg, ln_beta};
use thiserror::Error;

use crate::config::SimConfig;

/// Grid size of the tabulated CDF used for inverse sampling.
pub const CDF_POINTS: usize = 512;

#[derive(Debug, Error, PartialEq)]
pub enum TrafficError {
    #[error("activation time {tau} s outside [0, {horizon}] s")]
    OutOfRange { tau: f64, horizon: f64 },
}

/// Sorted activation instants. UE ids are positions in this list.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationSchedule {
    pub times: Vec<f64>,
    pub horizon_s: f64,
}

impl ActivationSchedule {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Two-column CSV (`ue_id,activation_s`).
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "ue_id,activation_s")?;
        for (id, t) in self.times.iter().enumerate() {
            writeln!(out, "{id},{t:.9}")?;
        }
        Ok(())
    }
}

/// Time-limited Beta density on `[0, T]`, in activations per second per UE.
pub fn beta_pdf(tau: f64, cfg: &SimConfig) -> Result<f64, TrafficError> {
    beta_pdf_raw(tau, cfg.traffic_total_s, cfg.beta_alpha, cfg.beta_beta)
}

pub fn beta_pdf_raw(tau: f64, horizon: f64, alpha: f64, beta: f64) -> Result<f64, TrafficError> {
    if !(0.0..=horizon).contains(&tau) {
        return Err(TrafficError::OutOfRange { tau, horizon });
    }
    let x = tau / horizon;
    let num = x.powf(alpha - 1.0) * (1.0 - x).powf(beta - 1.0);
    Ok(num / (horizon * ln_beta(alpha, beta).exp()))
}

/// Inverse-CDF sampler over a tabulated 512-point CDF with linear interpolation.
#[derive(Debug, Clone)]
pub struct BetaSampler {
    horizon: f64,
    cdf: Vec<f64>,
}

impl BetaSampler {
    pub fn new(horizon: f64, alpha: f64, beta: f64) -> Self {
        let last = (CDF_POINTS - 1) as f64;
        let mut cdf: Vec<f64> = (0..CDF_POINTS)
            .map(|i| beta_reg(alpha, beta, (i as f64 / last).clamp(0.0, 1.0)))
            .collect();
        cdf[0] = 0.0;
        cdf[CDF_POINTS - 1] = 1.0;
        for i in 1..CDF_POINTS {
            cdf[i] = cdf[i].max(cdf[i - 1]);
        }
        Self { horizon, cdf }
    }

    pub fn for_config(cfg: &SimConfig) -> Self {
        Self::new(cfg.traffic_total_s, cfg.beta_alpha, cfg.beta_beta)
    }

    /// Maps a uniform `u` in (0, 1) to an activation time in (0, T].
    pub fn quantile(&self, u: f64) -> f64 {
        let hi = self
            .cdf
            .partition_point(|&c| c < u)
            .clamp(1, CDF_POINTS - 1);
        let (c0, c1) = (self.cdf[hi - 1], self.cdf[hi]);
        let frac = if c1 > c0 { (u - c0) / (c1 - c0) } else { 1.0 };
        let x = ((hi - 1) as f64 + frac.clamp(0.0, 1.0)) / (CDF_POINTS - 1) as f64;
        (x * self.horizon).min(self.horizon)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u = loop {
            let u: f64 = rng.gen();
            if u > 0.0 {
                break u;
            }
        };
        self.quantile(u)
    }
}

/// Draws one activation instant per UE from the Beta profile, sorted ascending.
pub fn sample_activations<R: Rng + ?Sized>(cfg: &SimConfig, rng: &mut R) -> ActivationSchedule {
    let sampler = BetaSampler::for_config(cfg);
    let mut times: Vec<f64> = (0..cfg.n_ues).map(|_| sampler.sample(rng)).collect();
    times.sort_by(|a, b| a.total_cmp(b));
    ActivationSchedule {
        times,
        horizon_s: cfg.traffic_total_s,
    }
}

/// UE ids whose activation falls in `(from_tti * tti, to_tti * tti]`.
///
/// Ids are contiguous because the schedule is sorted.
pub fn arrivals_in_window(
    schedule: &ActivationSchedule,
    from_tti: u64,
    to_tti: u64,
    tti_s: f64,
) -> Range<usize> {
    debug_assert!(from_tti < to_tti);
    let lo = from_tti as f64 * tti_s;
    let hi = to_tti as f64 * tti_s;
    let start = schedule.times.partition_point(|&t| t <= lo);
    let end = schedule.times.partition_point(|&t| t <= hi);
    start..end.max(start)
}
