//! Independent oracles for the simulator's kernels. Each suite recomputes
//! results by a deliberately naive route and counts disagreements.

use std::fmt;

use rand::Rng;

use crate::access::{build_pool, classify, CtuAssignment};
use crate::baselines::{le_choose_c, le_expected_idle, le_expected_success, le_invert};
use crate::config::{db_to_linear, dbm_to_watt, rtt_duration_ttis, Scheme, SimConfig};
use crate::phy::{LinkBudget, UeId, UePhy};
use crate::rng::{indexed_substream, Stream};
use crate::sic::{decode_k_repetition_with, decode_proactive_with, sic_pass, CounterFading, FadingSource, PassFn, RbRound};
use crate::traffic::beta_pdf_raw;
use crate::valuefn::{net_init, td_gradient_with_targets, td_targets, Transition, ValueNet};

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub name: &'static str,
    pub cases: usize,
    pub failures: usize,
    pub detail: String,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.failures == 0 && self.cases > 0
    }
}

impl fmt::Display for SuiteReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {:<22} cases={:<9} failures={:<5} {}",
            if self.passed() { "PASS" } else { "FAIL" },
            self.name,
            self.cases,
            self.failures,
            self.detail
        )
    }
}

/// All suites at their default sizes.
pub fn run_all() -> Vec<SuiteReport> {
    vec![
        collision_bruteforce(8, 6),
        sic_step_oracle(10_000, 1),
        sic_mutation_detected(2_000, 2),
        gradient_check(100, 3),
        le_closed_forms(),
        traffic_normalization(),
    ]
}

/// `classify` against direct occupancy counting over every assignment of
/// up to `max_n` UEs to up to `max_c` CTUs, plus the seven-UE worked example.
pub fn collision_bruteforce(max_n: usize, max_c: u32) -> SuiteReport {
    let mut cases = 0;
    let mut failures = 0;
    let mut first_failure = String::new();
    for c in 1..=max_c {
        let pool = build_pool(c, 1).expect("one RB divides anything");
        for n in 0..=max_n {
            let mut digits = vec![0u32; n];
            loop {
                let choice: Vec<(UeId, u32)> = digits.iter().enumerate().map(|(u, &d)| (u, d + 1)).collect();
                let report = classify(&CtuAssignment::from_choices(&pool, choice).unwrap(), &pool);

                let mut occupants: Vec<Vec<UeId>> = vec![Vec::new(); c as usize];
                for (u, &d) in digits.iter().enumerate() {
                    occupants[d as usize].push(u);
                }
                let mut idle = Vec::new();
                let mut single = Vec::new();
                let mut multi = Vec::new();
                for (i, occ) in occupants.into_iter().enumerate() {
                    let ctu = i as u32 + 1;
                    if occ.is_empty() {
                        idle.push(ctu);
                    } else if occ.len() == 1 {
                        single.push((ctu, occ[0]));
                    } else {
                        multi.push((ctu, occ));
                    }
                }
                let ok = report.idle == idle
                    && report.singleton == single
                    && report.collision == multi
                    && report.v_ic as usize == idle.len()
                    && report.v_sc as usize == single.len()
                    && report.v_cc as usize == multi.len();
                cases += 1;
                if !ok {
                    failures += 1;
                    if first_failure.is_empty() {
                        first_failure = format!("first mismatch at C={c} assignment {digits:?}");
                    }
                }
                // odometer increment
                let mut pos = 0;
                while pos < n {
                    digits[pos] += 1;
                    if digits[pos] < c {
                        break;
                    }
                    digits[pos] = 0;
                    pos += 1;
                }
                if pos == n {
                    break;
                }
            }
        }
    }

    // six CTUs on two RBs, eight UEs
    let pool = build_pool(6, 2).unwrap();
    let a = CtuAssignment::from_choices(
        &pool,
        vec![(1, 6), (2, 2), (3, 2), (4, 1), (5, 5), (6, 4), (7, 1), (8, 4)],
    )
    .unwrap();
    let r = classify(&a, &pool);
    let example_ok = r.idle == [3]
        && r.singleton == [(5, 5), (6, 1)]
        && r.collision == [(1, vec![4, 7]), (2, vec![2, 3]), (4, vec![6, 8])];
    cases += 1;
    if !example_ok {
        failures += 1;
        first_failure.push_str(" worked example mismatch");
    }

    SuiteReport {
        name: "collision-bruteforce",
        cases,
        failures,
        detail: if failures == 0 {
            format!("N<={max_n} C<={max_c} exhaustive + worked example")
        } else {
            first_failure
        },
    }
}

/// Decoding per the written step list: each repetition, take the strongest
/// remaining singleton, compare its SINR against everything else still on
/// the air, cancel it on success, stop on the first failure.
pub fn step_list_replay(
    scheme: Scheme,
    round: &RbRound<f64>,
    link: &LinkBudget<f64>,
    fading: &mut dyn FnMut(UeId, u32) -> f64,
) -> (Vec<(UeId, u32)>, u64) {
    let mut decoded_at: Vec<(UeId, u32)> = Vec::new();
    let mut collision_slots = 0u64;
    for k in 1..=round.k_max {
        let mut airborne_singles: Vec<(UeId, f64)> = Vec::new();
        for ue in &round.singleton_ues {
            let acked_earlier = decoded_at.iter().any(|&(id, at)| id == ue.ue_id && at + 4 <= k);
            if scheme == Scheme::Proactive && k >= 4 && acked_earlier {
                continue;
            }
            let h = fading(ue.ue_id, k);
            airborne_singles.push((ue.ue_id, link.tx_power_w * h * ue.pathgain));
        }
        let mut airborne_coll: Vec<f64> = Vec::new();
        if scheme == Scheme::KRepetition || k <= 3 {
            for ue in &round.collision_ues {
                let h = fading(ue.ue_id, k);
                airborne_coll.push(link.tx_power_w * h * ue.pathgain);
            }
            collision_slots += round.collision_ues.len() as u64;
        }
        while let Some(pos) = (0..airborne_singles.len()).max_by(|&i, &j| {
            let (a, b) = (airborne_singles[i], airborne_singles[j]);
            a.1.partial_cmp(&b.1).unwrap().then(b.0.cmp(&a.0))
        }) {
            let (ue, p) = airborne_singles[pos];
            let mut others = link.noise_w;
            for (i, &(_, q)) in airborne_singles.iter().enumerate() {
                if i != pos {
                    others += q;
                }
            }
            for &q in &airborne_coll {
                others += q;
            }
            if p / others >= link.sinr_threshold {
                airborne_singles.remove(pos);
                if !decoded_at.iter().any(|&(id, _)| id == ue) {
                    decoded_at.push((ue, k));
                }
            } else {
                break;
            }
        }
    }
    decoded_at.sort_unstable();
    (decoded_at, collision_slots)
}

fn random_round<R: Rng>(rng: &mut R, cfg: &SimConfig) -> RbRound<f64> {
    let n_single = rng.gen_range(0..=4);
    let n_coll = rng.gen_range(0..=2);
    let mut ids: Vec<UeId> = (0..16).collect();
    for i in 0..ids.len() {
        let j = rng.gen_range(i..ids.len());
        ids.swap(i, j);
    }
    let make = |id: UeId, rng: &mut R| {
        let r = 1.0 + (cfg.cell_radius_m - 1.0) * rng.gen::<f64>();
        UePhy::new(id, r, cfg.pathloss_exp)
    };
    RbRound {
        rb: 1,
        singleton_ues: ids[..n_single].iter().map(|&id| make(id, rng)).collect(),
        collision_ues: ids[n_single..n_single + n_coll].iter().map(|&id| make(id, rng)).collect(),
        k_max: rng.gen_range(1..=8),
    }
}

/// Both decoders against [`step_list_replay`] on randomised small instances.
pub fn sic_step_oracle(instances: usize, seed: u64) -> SuiteReport {
    let (mismatches, decoded_total) = sic_compare(instances, seed, sic_pass::<f64>);
    SuiteReport {
        name: "sic-step-oracle",
        cases: 2 * instances,
        failures: mismatches,
        detail: format!("{decoded_total} UEs decoded across both schemes"),
    }
}

/// Passes when a pass with the interference sum's sign flipped is caught.
pub fn sic_mutation_detected(instances: usize, seed: u64) -> SuiteReport {
    let (mismatches, _) = sic_compare(instances, seed, mutant_sic_pass);
    SuiteReport {
        name: "sic-mutation",
        cases: 1,
        failures: usize::from(mismatches == 0),
        detail: format!("sign-flipped interference caught on {mismatches} of {} runs", 2 * instances),
    }
}

/// `sic_pass` with the interference terms subtracted instead of added.
pub fn mutant_sic_pass(singletons: &[(UeId, f64)], collisions: &[f64], noise_w: f64, gamma: f64) -> Vec<UeId> {
    let mut order = singletons.to_vec();
    order.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    let coll: f64 = collisions.iter().sum();
    let mut out = Vec::new();
    for s in 0..order.len() {
        let weaker: f64 = order[s + 1..].iter().map(|x| x.1).sum();
        if order[s].1 / (noise_w - weaker - coll) >= gamma {
            out.push(order[s].0);
        } else {
            break;
        }
    }
    out
}

fn sic_compare(instances: usize, seed: u64, pass: PassFn<f64>) -> (usize, usize) {
    let cfg = SimConfig::default();
    let link = LinkBudget::<f64>::from_config(&cfg);
    let mut rng = indexed_substream(seed, Stream::Placement, 0x51c);
    let mut mismatches = 0;
    let mut decoded_total = 0;
    for i in 0..instances {
        let round = random_round(&mut rng, &cfg);
        for scheme in [Scheme::KRepetition, Scheme::Proactive] {
            let fading = CounterFading { seed, rtt: i as u64 };
            let got = match scheme {
                Scheme::KRepetition => decode_k_repetition_with(&round, &link, &mut fading.clone(), pass),
                Scheme::Proactive => decode_proactive_with(&round, &link, &mut fading.clone(), pass),
            };
            let mut f = fading;
            let mut oracle_fading = |ue: UeId, k: u32| FadingSource::<f64>::gain(&mut f, ue, k);
            let (want, want_slots) = step_list_replay(scheme, &round, &link, &mut oracle_fading);
            let got_pairs: Vec<(UeId, u32)> = got.decoded_at.iter().map(|(&u, &k)| (u, k)).collect();
            let per_rep_ok = got
                .per_repetition
                .iter()
                .enumerate()
                .all(|(k, ues)| ues.iter().all(|u| got.decoded_at.get(u) == Some(&(k as u32 + 1))));
            let partition_ok = got.decoded.len() + got.failed.len() == round.singleton_ues.len();
            if got_pairs != want || got.collision_slots != want_slots || !per_rep_ok || !partition_ok {
                mismatches += 1;
            }
            decoded_total += want.len();
        }
    }
    (mismatches, decoded_total)
}

/// Double-double number `hi + lo`, enough to keep finite-difference
/// quotients clear of f64 roundoff.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Dd {
    hi: f64,
    lo: f64,
}

impl Dd {
    const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };

    fn from(x: f64) -> Self {
        Dd { hi: x, lo: 0.0 }
    }

    fn two_sum(a: f64, b: f64) -> Self {
        let s = a + b;
        let bb = s - a;
        Dd {
            hi: s,
            lo: (a - (s - bb)) + (b - bb),
        }
    }

    fn add(self, o: Dd) -> Dd {
        let s = Dd::two_sum(self.hi, o.hi);
        Dd::two_sum(s.hi, s.lo + self.lo + o.lo)
    }

    fn neg(self) -> Dd {
        Dd {
            hi: -self.hi,
            lo: -self.lo,
        }
    }

    fn mul(self, o: Dd) -> Dd {
        let p = self.hi * o.hi;
        let err = self.hi.mul_add(o.hi, -p);
        Dd::two_sum(p, err + self.hi * o.lo + self.lo * o.hi)
    }

    fn mul_f(self, w: f64) -> Dd {
        let p = self.hi * w;
        Dd::two_sum(p, self.hi.mul_add(w, -p) + self.lo * w)
    }

    fn value(self) -> f64 {
        self.hi + self.lo
    }
}

/// Forward pass by explicit loops over `Layer::weight`, in double-double;
/// also records every hidden pre-activation so kink crossings can be detected.
fn naive_forward(net: &ValueNet<f64>, s: &[f64], pre: &mut Vec<f64>) -> Vec<Dd> {
    let mut x: Vec<Dd> = s.iter().map(|&v| Dd::from(v)).collect();
    let last = net.layers().len() - 1;
    for (li, l) in net.layers().iter().enumerate() {
        let mut z = vec![Dd::ZERO; l.out_dim];
        for (j, zj) in z.iter_mut().enumerate() {
            let mut acc = Dd::from(l.biases[j]);
            for (i, xi) in x.iter().enumerate() {
                acc = acc.add(xi.mul_f(l.weight(i, j)));
            }
            *zj = acc;
        }
        if li != last {
            for v in &mut z {
                pre.push(v.hi);
                if v.hi < 0.0 {
                    *v = Dd::ZERO;
                }
            }
        }
        x = z;
    }
    x
}

/// Batch-summed (not averaged) loss `sum 0.5 (y - Q)^2`.
fn naive_loss_sum(net: &ValueNet<f64>, batch: &[Transition<f64>], targets: &[f64], pre: &mut Vec<f64>) -> Dd {
    pre.clear();
    let mut total = Dd::ZERO;
    for (t, &y) in batch.iter().zip(targets) {
        let q = naive_forward(net, &t.state, pre);
        let e = Dd::from(y).add(q[t.action].neg());
        total = total.add(e.mul(e).mul_f(0.5));
    }
    total
}

/// Central differences (h = 1e-5) against `td_gradient` on a (7,16,16,5)
/// network. Parameters whose perturbation flips any ReLU are skipped and counted.
/// Between kinks the loss is quadratic in any single parameter, so the central
/// difference is exact up to the rounding the double-double evaluation removes.
pub fn gradient_check(batches: usize, seed: u64) -> SuiteReport {
    const H: f64 = 1e-5;
    const TOL: f64 = 1e-4;
    let dims = [7, 16, 16, 5];
    let mut checked = 0;
    let mut skipped = 0;
    let mut failures = 0;
    let mut worst: f64 = 0.0;
    let mut pre_up = Vec::new();
    let mut pre_down = Vec::new();
    for b in 0..batches {
        let mut rng = indexed_substream(seed, Stream::ReplaySampling, b as u64);
        let online: ValueNet<f64> = net_init(&dims, &mut indexed_substream(seed, Stream::NetInit, 2 * b as u64)).unwrap();
        let target: ValueNet<f64> =
            net_init(&dims, &mut indexed_substream(seed, Stream::NetInit, 2 * b as u64 + 1)).unwrap();
        let data: Vec<Transition<f64>> = (0..32)
            .map(|_| Transition {
                state: (0..7).map(|_| rng.gen::<f64>()).collect(),
                action: rng.gen_range(0..5),
                reward: rng.gen_range(0.0..10.0),
                next_state: (0..7).map(|_| rng.gen::<f64>()).collect(),
                terminal: rng.gen_bool(0.1),
            })
            .collect();
        let batch: Vec<&Transition<f64>> = data.iter().collect();
        let targets = td_targets(&online, &target, &batch, 0.5, true);
        let analytic = td_gradient_with_targets(&online, &batch, &targets).0.to_flat();
        let flat = online.to_flat();
        let mut probe = online.clone();
        for (i, &a) in analytic.iter().enumerate() {
            let mut p = flat.clone();
            p[i] = flat[i] + H;
            probe.set_flat(&p);
            let up = naive_loss_sum(&probe, &data, &targets, &mut pre_up);
            let step_up = p[i];
            p[i] = flat[i] - H;
            probe.set_flat(&p);
            let down = naive_loss_sum(&probe, &data, &targets, &mut pre_down);
            if pre_up.iter().zip(&pre_down).any(|(u, d)| (*u > 0.0) != (*d > 0.0)) {
                skipped += 1;
                continue;
            }
            // the realised step, not the nominal 2h
            let width = Dd::two_sum(step_up, -p[i]).value();
            let n = up.add(down.neg()).value() / width / data.len() as f64;
            let scale = a.abs().max(n.abs());
            let rel = if scale < 1e-8 { 0.0 } else { (a - n).abs() / scale };
            worst = worst.max(rel);
            checked += 1;
            if rel > TOL {
                failures += 1;
            }
        }
    }
    SuiteReport {
        name: "gradient-check",
        cases: checked,
        failures,
        detail: format!("max rel err {worst:.2e} (tol {TOL:.0e}), {skipped} ReLU-kink crossings skipped"),
    }
}

/// Closed forms against direct arithmetic: RTT length, dB conversions and
/// the load-estimation formulas.
pub fn le_closed_forms() -> SuiteReport {
    const TOL: f64 = 1e-9;
    let mut cases = 0;
    let mut failures = 0;
    let mut check = |ok: bool| {
        cases += 1;
        if !ok {
            failures += 1;
        }
    };
    let close = |a: f64, b: f64| (a - b).abs() <= TOL * b.abs().max(1.0);

    for k in 1..=64 {
        check(rtt_duration_ttis(k) == k + 3);
    }
    for p in [-132.0, -30.0, 0.0, 23.0, 30.0] {
        check(close(dbm_to_watt(p), 10f64.powf(p / 10.0) / 1000.0));
        check(close(db_to_linear(p / 10.0), 10f64.powf(p / 100.0)));
    }
    check(close(dbm_to_watt(30.0f64), 1.0));
    check(close(db_to_linear(-10.0f64), 0.1));

    for c in [1u32, 2, 4, 12, 24, 36, 48] {
        let q = 1.0 - 1.0 / c as f64;
        let mut idle_by_product = c as f64;
        for n in 0..=128u32 {
            check(close(le_expected_idle(c, n as f64), idle_by_product));
            // singletons: c * P(exactly one of n picks a given CTU)
            let single = if n == 0 {
                0.0
            } else {
                c as f64 * n as f64 * (1.0 / c as f64) * q.powi(n as i32 - 1)
            };
            check(close(le_expected_success(c, n as f64), single));
            idle_by_product *= q;
        }
    }
    for c in [2u32, 4, 12, 24, 36, 48] {
        for v in 1..=c {
            let n = le_invert(v as f64, c);
            check(close(le_expected_idle(c, n), v as f64));
        }
    }
    check(close(le_invert(1.265625, 4), 4.0));
    let c_set = [12u32, 24, 36, 48];
    for tenth in 0..=1000 {
        let n = tenth as f64 / 10.0;
        let values: Vec<f64> = c_set.iter().map(|&c| n * (1.0 - 1.0 / c as f64).powf(n - 1.0)).collect();
        let top = values.iter().cloned().fold(f64::MIN, f64::max);
        let want = c_set[values.iter().position(|&v| v == top).unwrap()];
        let want = if n == 0.0 { 12 } else { want };
        check(le_choose_c(n, &c_set) == want);
    }

    SuiteReport {
        name: "closed-forms",
        cases,
        failures,
        detail: format!("tolerance {TOL:.0e}"),
    }
}

/// Composite Simpson integration of the activation density over its support.
pub fn traffic_normalization() -> SuiteReport {
    let mut cases = 0;
    let mut failures = 0;
    let mut worst: f64 = 0.0;
    for (horizon, a, b) in [(2.0, 2.0, 4.0), (0.5, 2.0, 4.0), (1.0, 1.0, 1.0), (3.0, 3.0, 2.0), (1.0, 2.5, 7.0)] {
        let intervals = 20_000;
        let h = horizon / intervals as f64;
        let mut sum = 0.0;
        for i in 0..=intervals {
            let w = if i == 0 || i == intervals {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            sum += w * beta_pdf_raw(i as f64 * h, horizon, a, b).unwrap();
        }
        let integral = sum * h / 3.0;
        worst = worst.max((integral - 1.0).abs());
        cases += 1;
        if (integral - 1.0).abs() > 1e-6 {
            failures += 1;
        }
    }
    SuiteReport {
        name: "traffic-normalization",
        cases,
        failures,
        detail: format!("max |integral - 1| = {worst:.1e}"),
    }
}
