//! Contention-transmission-unit pool, random CTU selection and collision classification.
//!
//! CTUs are numbered `1..=C` and resource blocks `1..=F`; CTU `c` lives on
//! RB `ceil(c / L)` with `L = C / F`, i.e. each RB owns a contiguous block.

use rand::Rng;
use thiserror::Error;

use crate::phy::UeId;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AccessError {
    #[error("C not divisible by F: {c} CTUs over {f} RBs")]
    Indivisible { c: u32, f: u32 },
    #[error("CTU {ctu} outside pool 1..={c}")]
    OutOfPool { ctu: u32, c: u32 },
    #[error("UE {0} assigned twice")]
    DuplicateUe(UeId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CtuPool {
    pub c_total: u32,
    pub n_rbs: u32,
    pub per_rb: u32,
}

impl CtuPool {
    /// RB index (1-based) of CTU `ctu` (1-based).
    pub fn rb_of(&self, ctu: u32) -> u32 {
        debug_assert!((1..=self.c_total).contains(&ctu));
        (ctu - 1) / self.per_rb + 1
    }

    pub fn ctus_of_rb(&self, rb: u32) -> std::ops::RangeInclusive<u32> {
        let first = (rb - 1) * self.per_rb + 1;
        first..=first + self.per_rb - 1
    }
}

pub fn build_pool(c: u32, f: u32) -> Result<CtuPool, AccessError> {
    if f == 0 || c == 0 || !c.is_multiple_of(f) {
        return Err(AccessError::Indivisible { c, f });
    }
    Ok(CtuPool {
        c_total: c,
        n_rbs: f,
        per_rb: c / f,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CtuAssignment {
    /// `(ue, ctu)` in selection order.
    pub choice: Vec<(UeId, u32)>,
    /// `by_ctu[c - 1]` lists the UEs on CTU `c`, in selection order.
    pub by_ctu: Vec<Vec<UeId>>,
}

impl CtuAssignment {
    pub fn from_choices(pool: &CtuPool, choice: Vec<(UeId, u32)>) -> Result<Self, AccessError> {
        let mut by_ctu = vec![Vec::new(); pool.c_total as usize];
        let mut seen = std::collections::HashSet::with_capacity(choice.len());
        for &(ue, ctu) in &choice {
            if !(1..=pool.c_total).contains(&ctu) {
                return Err(AccessError::OutOfPool {
                    ctu,
                    c: pool.c_total,
                });
            }
            if !seen.insert(ue) {
                return Err(AccessError::DuplicateUe(ue));
            }
            by_ctu[(ctu - 1) as usize].push(ue);
        }
        Ok(Self { choice, by_ctu })
    }
}

/// Each active UE picks a CTU uniformly from `1..=C`, independently.
pub fn select_ctus<R: Rng + ?Sized>(active: &[UeId], pool: &CtuPool, rng: &mut R) -> CtuAssignment {
    let mut by_ctu = vec![Vec::new(); pool.c_total as usize];
    let choice: Vec<(UeId, u32)> = active
        .iter()
        .map(|&ue| {
            let ctu = rng.gen_range(1..=pool.c_total);
            by_ctu[(ctu - 1) as usize].push(ue);
            (ue, ctu)
        })
        .collect();
    CtuAssignment { choice, by_ctu }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CollisionReport {
    pub idle: Vec<u32>,
    pub singleton: Vec<(u32, UeId)>,
    pub collision: Vec<(u32, Vec<UeId>)>,
    pub v_ic: u32,
    pub v_sc: u32,
    pub v_cc: u32,
}

impl CollisionReport {
    /// Number of UEs sitting on collision CTUs.
    pub fn collided_ues(&self) -> usize {
        self.collision.iter().map(|(_, ues)| ues.len()).sum()
    }
}

/// Partition CTUs by occupancy: 0 idle, 1 singleton, 2+ collision.
pub fn classify(assignment: &CtuAssignment, pool: &CtuPool) -> CollisionReport {
    let mut report = CollisionReport::default();
    for (idx, ues) in assignment.by_ctu.iter().enumerate() {
        let ctu = idx as u32 + 1;
        match ues.len() {
            0 => report.idle.push(ctu),
            1 => report.singleton.push((ctu, ues[0])),
            _ => report.collision.push((ctu, ues.clone())),
        }
    }
    report.v_ic = report.idle.len() as u32;
    report.v_sc = report.singleton.len() as u32;
    report.v_cc = report.collision.len() as u32;
    debug_assert_eq!(report.v_ic + report.v_sc + report.v_cc, pool.c_total);
    report
}
