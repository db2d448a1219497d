//! Per-RB successive interference cancellation over the repetitions of one RTT.
//!
//! Within a repetition the singleton UEs are decoded strongest first. A stage
//! succeeds when its SINR reaches the threshold, counting as interference the
//! weaker not-yet-decoded singletons, every collision UE on the RB and the
//! noise; decoded signals are removed exactly and the pass stops at the first
//! failing stage. Collision UEs are never decoded.
//!
//! K-repetition: every UE transmits in all K repetitions, decoding succeeds
//! if any repetition does. Proactive: ACKs arrive three TTIs late, so from
//! repetition 4 on, UEs decoded at repetition `k - 4` or earlier are silent,
//! and collision UEs (which get no feedback) have stopped as well.

use std::collections::BTreeMap;

use crate::config::Scheme;
use crate::phy::{LinkBudget, UeId, UePhy};
use crate::rng::fading_gain;
use crate::scalar::Scalar;

/// Number of repetitions an ACK needs to reach the UE.
pub const FEEDBACK_LAG: u32 = 3;

/// Source of per-(UE, repetition) fading gains within one RTT.
pub trait FadingSource<T> {
    fn gain(&mut self, ue: UeId, repetition: u32) -> T;
}

impl<T, F: FnMut(UeId, u32) -> T> FadingSource<T> for F {
    fn gain(&mut self, ue: UeId, repetition: u32) -> T {
        self(ue, repetition)
    }
}

/// Fading indexed by `(seed, rtt, ue, repetition)`, independent of draw order.
#[derive(Debug, Clone, Copy)]
pub struct CounterFading {
    pub seed: u64,
    pub rtt: u64,
}

impl<T: Scalar> FadingSource<T> for CounterFading {
    fn gain(&mut self, ue: UeId, repetition: u32) -> T {
        T::of(fading_gain(self.seed, self.rtt, ue as u64, repetition as u64))
    }
}

/// Singleton and collision UEs of one RB in one RTT.
#[derive(Debug, Clone, PartialEq)]
pub struct RbRound<T> {
    pub rb: u32,
    pub singleton_ues: Vec<UePhy<T>>,
    pub collision_ues: Vec<UePhy<T>>,
    pub k_max: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DecodeResult {
    /// Decoded singleton UEs, ascending id.
    pub decoded: Vec<UeId>,
    /// First repetition (1-based) at which each decoded UE succeeded.
    pub decoded_at: BTreeMap<UeId, u32>,
    /// Singletons never decoded, ascending id.
    pub failed: Vec<UeId>,
    /// `per_repetition[k - 1]`: UEs first decoded at repetition `k`.
    pub per_repetition: Vec<Vec<UeId>>,
    /// Transmission slots spent by collision UEs (UEs x repetitions).
    pub collision_slots: u64,
}

/// One SIC pass: returns the decoded UEs in decoding order.
pub type PassFn<T> = fn(&[(UeId, T)], &[T], T, T) -> Vec<UeId>;

/// Strongest-first SIC over one repetition. Equal powers decode lower id first.
pub fn sic_pass<T: Scalar>(
    singletons: &[(UeId, T)],
    collisions: &[T],
    noise_w: T,
    sinr_threshold: T,
) -> Vec<UeId> {
    let mut order: Vec<(UeId, T)> = singletons.to_vec();
    order.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Equal).then(a.0.cmp(&b.0)));
    let collision_w: T = collisions.iter().copied().sum();

    // weaker[s] = sum of powers after position s
    let mut weaker = vec![T::zero(); order.len()];
    let mut acc = T::zero();
    for s in (0..order.len()).rev() {
        weaker[s] = acc;
        acc += order[s].1;
    }

    let mut decoded = Vec::with_capacity(order.len());
    for (s, &(ue, p)) in order.iter().enumerate() {
        let sinr = p / (weaker[s] + collision_w + noise_w);
        if sinr >= sinr_threshold {
            decoded.push(ue);
        } else {
            break;
        }
    }
    decoded
}

pub fn decode<T: Scalar, F: FadingSource<T>>(
    scheme: Scheme,
    round: &RbRound<T>,
    link: &LinkBudget<T>,
    fading: &mut F,
) -> DecodeResult {
    match scheme {
        Scheme::KRepetition => decode_k_repetition(round, link, fading),
        Scheme::Proactive => decode_proactive(round, link, fading),
    }
}

pub fn decode_k_repetition<T: Scalar, F: FadingSource<T>>(
    round: &RbRound<T>,
    link: &LinkBudget<T>,
    fading: &mut F,
) -> DecodeResult {
    decode_k_repetition_with(round, link, fading, sic_pass::<T>)
}

pub fn decode_proactive<T: Scalar, F: FadingSource<T>>(
    round: &RbRound<T>,
    link: &LinkBudget<T>,
    fading: &mut F,
) -> DecodeResult {
    decode_proactive_with(round, link, fading, sic_pass::<T>)
}

/// K-repetition decoding with a caller-supplied SIC pass.
pub fn decode_k_repetition_with<T: Scalar, F: FadingSource<T>>(
    round: &RbRound<T>,
    link: &LinkBudget<T>,
    fading: &mut F,
    pass: PassFn<T>,
) -> DecodeResult {
    run_repetitions(round, link, fading, pass, |_, _| true, |_| true)
}

/// Proactive decoding with a caller-supplied SIC pass.
pub fn decode_proactive_with<T: Scalar, F: FadingSource<T>>(
    round: &RbRound<T>,
    link: &LinkBudget<T>,
    fading: &mut F,
    pass: PassFn<T>,
) -> DecodeResult {
    run_repetitions(
        round,
        link,
        fading,
        pass,
        // still transmitting unless ACKed at k - 4 or earlier
        |k, first| match first {
            Some(at) => k <= FEEDBACK_LAG || at + FEEDBACK_LAG + 1 > k,
            None => true,
        },
        |k| k <= FEEDBACK_LAG,
    )
}

fn run_repetitions<T: Scalar, F: FadingSource<T>>(
    round: &RbRound<T>,
    link: &LinkBudget<T>,
    fading: &mut F,
    pass: PassFn<T>,
    singleton_active: impl Fn(u32, Option<u32>) -> bool,
    collisions_active: impl Fn(u32) -> bool,
) -> DecodeResult {
    let mut result = DecodeResult {
        per_repetition: vec![Vec::new(); round.k_max as usize],
        ..DecodeResult::default()
    };
    if round.singleton_ues.is_empty() {
        // nothing decodable; collision UEs still occupy their slots
        for k in 1..=round.k_max {
            if collisions_active(k) {
                result.collision_slots += round.collision_ues.len() as u64;
            }
        }
        return result;
    }

    let mut singles: Vec<(UeId, T)> = Vec::with_capacity(round.singleton_ues.len());
    let mut coll: Vec<T> = Vec::with_capacity(round.collision_ues.len());
    for k in 1..=round.k_max {
        singles.clear();
        for ue in &round.singleton_ues {
            if singleton_active(k, result.decoded_at.get(&ue.ue_id).copied()) {
                singles.push((ue.ue_id, link.received_power(ue, fading.gain(ue.ue_id, k))));
            }
        }
        coll.clear();
        if collisions_active(k) {
            for ue in &round.collision_ues {
                coll.push(link.received_power(ue, fading.gain(ue.ue_id, k)));
            }
            result.collision_slots += round.collision_ues.len() as u64;
        }
        if singles.is_empty() {
            continue;
        }
        for ue in pass(&singles, &coll, link.noise_w, link.sinr_threshold) {
            if let std::collections::btree_map::Entry::Vacant(e) = result.decoded_at.entry(ue) {
                e.insert(k);
                result.per_repetition[(k - 1) as usize].push(ue);
            }
        }
    }

    result.decoded = result.decoded_at.keys().copied().collect();
    let mut failed: Vec<UeId> = round
        .singleton_ues
        .iter()
        .map(|u| u.ue_id)
        .filter(|id| !result.decoded_at.contains_key(id))
        .collect();
    failed.sort_unstable();
    result.failed = failed;
    result
}
