//! Sparse hybrid vector clocks.
//!
//! A clock tracks, for one process, the current epoch (`floor(phy / interval)`)
//! plus per-peer offsets and counters. Peers whose last known epoch lags by
//! `epsilon` epochs or more are not stored at all. All operations are pure:
//! they take clocks by reference and return new values.
//!
//! Causality is decided on [`Knowledge`], the per-peer pair
//! `(max_epoch - offset, counter)` compared lexicographically. The additive
//! `max_epoch + offset + counter` form is kept as [`HybridVectorClock::display_value`]
//! for display only.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type ProcessId = u32;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ClockError {
    #[error("{name} must be at least 1, got {value}")]
    InvalidParameter { name: &'static str, value: u64 },
    #[error("clock parameters differ: interval {left_interval}/{right_interval}, epsilon {left_epsilon}/{right_epsilon}")]
    ParameterMismatch {
        left_interval: u64,
        right_interval: u64,
        left_epsilon: u64,
        right_epsilon: u64,
    },
    #[error("cannot merge a clock with a message from its own process {0}")]
    SameProcess(ProcessId),
    #[error("invalid clock state: {0}")]
    InvalidState(String),
}

/// Update rule used for advance and merge.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClockMode {
    /// Branch-for-branch send/receive rules, including the counter reset on
    /// epoch change and the wholesale copy when the message leads.
    Literal,
    /// Per-peer lexicographic knowledge maximum; every literal branch is a
    /// special case of it, and it is monotone in every component.
    #[default]
    Knowledge,
}

impl fmt::Display for ClockMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ClockMode::Literal => f.write_str("literal"),
            ClockMode::Knowledge => f.write_str("knowledge"),
        }
    }
}

impl std::str::FromStr for ClockMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "literal" => Ok(ClockMode::Literal),
            "knowledge" => Ok(ClockMode::Knowledge),
            other => Err(format!("unknown clock mode `{other}` (expected literal or knowledge)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CausalRelation {
    /// Identical knowledge in every component. Reported as concurrent events.
    Equal,
    Before,
    After,
    Concurrent,
}

impl CausalRelation {
    pub fn inverse(self) -> Self {
        match self {
            CausalRelation::Before => CausalRelation::After,
            CausalRelation::After => CausalRelation::Before,
            other => other,
        }
    }
}

/// What a clock knows about one process: the latest epoch it has heard of and
/// the event count within that epoch.
///
/// A `stale` entry stands for an untracked peer. Its `epoch` is
/// `max_epoch - epsilon` and its counter reads 0, but it orders above every
/// tracked entry of the same epoch: dropping an entry at the cap must never
/// lower what the clock claims to know.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct Knowledge {
    pub epoch: i64,
    pub counter: u64,
    pub stale: bool,
}

impl Knowledge {
    pub fn tracked(epoch: i64, counter: u64) -> Self {
        Knowledge { epoch, counter, stale: false }
    }

    pub fn untracked(epoch: i64) -> Self {
        Knowledge { epoch, counter: 0, stale: true }
    }
}

impl Ord for Knowledge {
    fn cmp(&self, other: &Self) -> Ordering {
        self.epoch
            .cmp(&other.epoch)
            .then(self.stale.cmp(&other.stale))
            .then(self.counter.cmp(&other.counter))
    }
}

impl PartialOrd for Knowledge {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActiveSize {
    pub offset_entries: usize,
    pub counter_entries: usize,
}

/// Epoch containing physical time `phy`.
pub fn epoch_of(phy: u64, interval: u64) -> u64 {
    debug_assert!(interval >= 1);
    phy / interval
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct HybridVectorClock {
    pid: ProcessId,
    #[serde(rename = "epoch_interval")]
    interval: u64,
    epsilon: u64,
    max_epoch: u64,
    offsets: BTreeMap<ProcessId, u64>,
    counters: BTreeMap<ProcessId, u64>,
}

impl HybridVectorClock {
    pub fn new(pid: ProcessId, interval: u64, epsilon: u64) -> Result<Self, ClockError> {
        check_params(interval, epsilon)?;
        Ok(HybridVectorClock {
            pid,
            interval,
            epsilon,
            max_epoch: 0,
            offsets: BTreeMap::new(),
            counters: BTreeMap::new(),
        })
    }

    /// Builds a clock from stored components, checking every representation
    /// invariant. Zero-valued counters are dropped since absence already means 0.
    pub fn from_parts(
        pid: ProcessId,
        interval: u64,
        epsilon: u64,
        max_epoch: u64,
        offsets: BTreeMap<ProcessId, u64>,
        mut counters: BTreeMap<ProcessId, u64>,
    ) -> Result<Self, ClockError> {
        check_params(interval, epsilon)?;
        if offsets.contains_key(&pid) {
            return Err(ClockError::InvalidState(format!(
                "own process {pid} must not appear in offsets"
            )));
        }
        if let Some((j, v)) = offsets.iter().find(|(_, v)| **v >= epsilon) {
            return Err(ClockError::InvalidState(format!(
                "offset {v} for process {j} is not below epsilon {epsilon}"
            )));
        }
        counters.retain(|_, v| *v > 0);
        if let Some(j) = counters.keys().find(|j| **j != pid && !offsets.contains_key(j)) {
            return Err(ClockError::InvalidState(format!(
                "counter for process {j} has no tracked offset"
            )));
        }
        Ok(HybridVectorClock { pid, interval, epsilon, max_epoch, offsets, counters })
    }

    pub fn pid(&self) -> ProcessId {
        self.pid
    }

    pub fn interval(&self) -> u64 {
        self.interval
    }

    pub fn epsilon(&self) -> u64 {
        self.epsilon
    }

    pub fn max_epoch(&self) -> u64 {
        self.max_epoch
    }

    pub fn offsets(&self) -> &BTreeMap<ProcessId, u64> {
        &self.offsets
    }

    pub fn counters(&self) -> &BTreeMap<ProcessId, u64> {
        &self.counters
    }

    /// Stored offset for `j`; the own process is always 0, untracked peers `None`.
    pub fn offset(&self, j: ProcessId) -> Option<u64> {
        if j == self.pid {
            Some(0)
        } else {
            self.offsets.get(&j).copied()
        }
    }

    pub fn counter(&self, j: ProcessId) -> u64 {
        self.counters.get(&j).copied().unwrap_or(0)
    }

    pub fn own_counter(&self) -> u64 {
        self.counter(self.pid)
    }

    pub fn knowledge(&self, j: ProcessId) -> Knowledge {
        match self.offset(j) {
            Some(off) => Knowledge::tracked(self.max_epoch as i64 - off as i64, self.counter(j)),
            None => Knowledge::untracked(self.max_epoch as i64 - self.epsilon as i64),
        }
    }

    /// `max_epoch + offset + counter` for process `j`, with an untracked offset
    /// read as `epsilon`. Not a causal quantity.
    pub fn display_value(&self, j: ProcessId) -> u64 {
        self.max_epoch + self.offset(j).unwrap_or(self.epsilon) + self.counter(j)
    }

    pub fn active_size(&self) -> ActiveSize {
        ActiveSize { offset_entries: self.offsets.len(), counter_entries: self.counters.len() }
    }

    /// Send or local event at physical time `phy`.
    pub fn advance(&self, phy: u64, mode: ClockMode) -> Self {
        let new_epoch = self.max_epoch.max(epoch_of(phy, self.interval));
        let mut next = self.clone();
        if new_epoch == self.max_epoch {
            *next.counters.entry(self.pid).or_insert(0) += 1;
            return next;
        }

        let delta = new_epoch - self.max_epoch;
        next.max_epoch = new_epoch;
        next.offsets.clear();
        for (&j, &off) in &self.offsets {
            let shifted = off.saturating_add(delta).min(self.epsilon);
            if shifted < self.epsilon {
                next.offsets.insert(j, shifted);
            }
        }
        match mode {
            ClockMode::Literal => next.counters.clear(),
            ClockMode::Knowledge => {
                next.counters.retain(|j, _| next.offsets.contains_key(j));
                next.counters.insert(self.pid, 1);
            }
        }
        next
    }

    /// Receive event: fold in the clock `msg` carried by a message, at physical time `phy`.
    pub fn merge(&self, msg: &Self, phy: u64, mode: ClockMode) -> Result<Self, ClockError> {
        self.check_compatible(msg)?;
        if msg.pid == self.pid {
            return Err(ClockError::SameProcess(self.pid));
        }
        Ok(match mode {
            ClockMode::Literal => self.merge_literal(msg, phy),
            ClockMode::Knowledge => self.merge_knowledge(msg, phy),
        })
    }

    fn merge_literal(&self, msg: &Self, phy: u64) -> Self {
        let new_epoch = self.max_epoch.max(msg.max_epoch).max(epoch_of(phy, self.interval));
        let own = self.pid;

        if new_epoch == self.max_epoch && new_epoch == msg.max_epoch {
            let mut next = self.clone();
            for (&j, &c) in &msg.counters {
                let slot = next.counters.entry(j).or_insert(0);
                *slot = (*slot).max(c);
            }
            let own_count = self.counter(own).max(msg.counter(own)) + 1;
            next.counters.insert(own, own_count);
            // The sender sits at the same epoch, so its implicit own offset is 0.
            // Peers whose counters came only from the message take its offsets.
            next.offsets.insert(msg.pid, 0);
            for (&j, &off) in &msg.offsets {
                if j != own {
                    next.offsets.entry(j).or_insert(off);
                }
            }
            next.counters.retain(|j, _| *j == own || next.offsets.contains_key(j));
            return next;
        }

        if new_epoch == self.max_epoch {
            let mut next = self.clone();
            *next.counters.entry(own).or_insert(0) += 1;
            let lag = (self.max_epoch - msg.max_epoch).min(self.epsilon);
            if lag < self.epsilon {
                next.offsets.insert(msg.pid, lag);
            } else {
                next.offsets.remove(&msg.pid);
                next.counters.remove(&msg.pid);
            }
            return next;
        }

        if new_epoch == msg.max_epoch {
            let mut offsets = msg.offsets.clone();
            offsets.insert(msg.pid, 0);
            offsets.remove(&own);
            let mut counters = msg.counters.clone();
            *counters.entry(own).or_insert(0) += 1;
            return HybridVectorClock {
                pid: own,
                interval: self.interval,
                epsilon: self.epsilon,
                max_epoch: msg.max_epoch,
                offsets,
                counters,
            };
        }

        self.advance(phy, ClockMode::Literal)
    }

    fn merge_knowledge(&self, msg: &Self, phy: u64) -> Self {
        let new_epoch = self.max_epoch.max(msg.max_epoch).max(epoch_of(phy, self.interval));
        let own = self.pid;
        let mut offsets = BTreeMap::new();
        let mut counters = BTreeMap::new();

        let peers = self
            .offsets
            .keys()
            .chain(msg.offsets.keys())
            .copied()
            .chain(std::iter::once(msg.pid))
            .filter(|j| *j != own);
        for j in peers {
            if offsets.contains_key(&j) {
                continue;
            }
            let best = self.knowledge(j).max(msg.knowledge(j));
            if best.stale {
                continue;
            }
            let off = new_epoch as i64 - best.epoch;
            debug_assert!(off >= 0, "knowledge epoch beyond every max_epoch");
            if off >= self.epsilon as i64 {
                continue;
            }
            offsets.insert(j, off as u64);
            if best.counter > 0 {
                counters.insert(j, best.counter);
            }
        }

        let carried = if self.max_epoch == new_epoch { self.counter(own) } else { 0 };
        counters.insert(own, carried + 1);

        HybridVectorClock {
            pid: own,
            interval: self.interval,
            epsilon: self.epsilon,
            max_epoch: new_epoch,
            offsets,
            counters,
        }
    }

    /// Causal relation between the events stamped `self` and `other`.
    pub fn compare(&self, other: &Self) -> Result<CausalRelation, ClockError> {
        self.check_compatible(other)?;
        let mut le = true;
        let mut ge = true;
        // Pids outside this set are untracked on both sides; their order
        // follows max_epoch, which the own components already constrain.
        let keys = self
            .offsets
            .keys()
            .chain(other.offsets.keys())
            .copied()
            .chain([self.pid, other.pid]);
        for j in keys {
            match self.knowledge(j).cmp(&other.knowledge(j)) {
                Ordering::Less => ge = false,
                Ordering::Greater => le = false,
                Ordering::Equal => {}
            }
            if !le && !ge {
                return Ok(CausalRelation::Concurrent);
            }
        }
        Ok(match (le, ge) {
            (true, true) => CausalRelation::Equal,
            (true, false) => CausalRelation::Before,
            (false, true) => CausalRelation::After,
            (false, false) => CausalRelation::Concurrent,
        })
    }

    fn check_compatible(&self, other: &Self) -> Result<(), ClockError> {
        if self.interval != other.interval || self.epsilon != other.epsilon {
            return Err(ClockError::ParameterMismatch {
                left_interval: self.interval,
                right_interval: other.interval,
                left_epsilon: self.epsilon,
                right_epsilon: other.epsilon,
            });
        }
        Ok(())
    }
}

fn check_params(interval: u64, epsilon: u64) -> Result<(), ClockError> {
    if interval == 0 {
        return Err(ClockError::InvalidParameter { name: "interval", value: 0 });
    }
    if epsilon == 0 {
        return Err(ClockError::InvalidParameter { name: "epsilon", value: 0 });
    }
    Ok(())
}

impl fmt::Display for HybridVectorClock {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "p{}{{E:{}, O:{:?}, C:{:?}}}", self.pid, self.max_epoch, self.offsets, self.counters)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn map(entries: &[(u32, u64)]) -> BTreeMap<u32, u64> {
        entries.iter().copied().collect()
    }

    fn clock(pid: u32, interval: u64, eps: u64, epoch: u64, o: &[(u32, u64)], c: &[(u32, u64)]) -> HybridVectorClock {
        HybridVectorClock::from_parts(pid, interval, eps, epoch, map(o), map(c)).unwrap()
    }

    fn parts(c: &HybridVectorClock) -> (u64, BTreeMap<u32, u64>, BTreeMap<u32, u64>) {
        (c.max_epoch(), c.offsets().clone(), c.counters().clone())
    }

    #[test]
    fn new_clock_is_empty() {
        let c = HybridVectorClock::new(0, 10, 5).unwrap();
        assert_eq!(parts(&c), (0, map(&[]), map(&[])));
        let c = HybridVectorClock::new(3, 1, 1).unwrap();
        assert_eq!(parts(&c), (0, map(&[]), map(&[])));
    }

    #[test]
    fn new_clock_rejects_zero_parameters() {
        assert_eq!(
            HybridVectorClock::new(0, 0, 5),
            Err(ClockError::InvalidParameter { name: "interval", value: 0 })
        );
        assert!(matches!(
            HybridVectorClock::new(0, 10, 0),
            Err(ClockError::InvalidParameter { name: "epsilon", .. })
        ));
    }

    #[test]
    fn from_parts_checks_invariants() {
        assert!(HybridVectorClock::from_parts(0, 10, 5, 3, map(&[(0, 1)]), map(&[])).is_err());
        assert!(HybridVectorClock::from_parts(0, 10, 5, 3, map(&[(1, 5)]), map(&[])).is_err());
        assert!(HybridVectorClock::from_parts(0, 10, 5, 3, map(&[]), map(&[(1, 2)])).is_err());
        let c = HybridVectorClock::from_parts(0, 10, 5, 3, map(&[]), map(&[(1, 0), (0, 2)])).unwrap();
        assert_eq!(c.counters(), &map(&[(0, 2)]));
    }

    #[test]
    fn epoch_of_floors() {
        assert_eq!(epoch_of(34, 10), 3);
        assert_eq!(epoch_of(0, 10), 0);
        assert_eq!(epoch_of(50, 10), 5);
    }

    #[test]
    fn literal_advance_same_epoch() {
        let e = clock(0, 10, 5, 3, &[], &[(0, 1)]);
        let f = e.advance(34, ClockMode::Literal);
        assert_eq!(parts(&f), (3, map(&[]), map(&[(0, 2)])));
    }

    #[test]
    fn literal_advance_epoch_change_caps_and_resets() {
        let e = clock(0, 10, 5, 3, &[(2, 4)], &[(0, 7)]);
        let f = e.advance(52, ClockMode::Literal);
        assert_eq!(parts(&f), (5, map(&[]), map(&[])));
    }

    #[test]
    fn knowledge_advance_epoch_change_keeps_peer_counters() {
        let e = clock(0, 10, 5, 3, &[(2, 1)], &[(0, 7), (2, 4)]);
        let f = e.advance(52, ClockMode::Knowledge);
        assert_eq!(parts(&f), (5, map(&[(2, 3)]), map(&[(0, 1), (2, 4)])));
    }

    #[test]
    fn advance_with_lagging_physical_clock_stays_in_epoch() {
        let e = clock(0, 10, 5, 7, &[], &[(0, 2)]);
        let f = e.advance(12, ClockMode::Knowledge);
        assert_eq!(parts(&f), (7, map(&[]), map(&[(0, 3)])));
    }

    #[test]
    fn literal_merge_equal_epochs() {
        let e = clock(1, 10, 5, 7, &[], &[(1, 2)]);
        let m = clock(0, 10, 5, 7, &[], &[(0, 5)]);
        let f = e.merge(&m, 70, ClockMode::Literal).unwrap();
        assert_eq!(parts(&f), (7, map(&[(0, 0)]), map(&[(0, 5), (1, 3)])));
    }

    #[test]
    fn literal_merge_message_lagging() {
        let e = clock(1, 10, 5, 9, &[], &[(1, 4)]);
        let m = clock(0, 10, 5, 7, &[], &[(0, 2)]);
        let f = e.merge(&m, 90, ClockMode::Literal).unwrap();
        assert_eq!(parts(&f), (9, map(&[(0, 2)]), map(&[(1, 5)])));
    }

    #[test]
    fn literal_merge_message_lagging_beyond_epsilon_drops_entry() {
        let e = clock(1, 10, 5, 9, &[(0, 1)], &[(1, 4), (0, 6)]);
        let m = clock(0, 10, 5, 2, &[], &[(0, 2)]);
        let f = e.merge(&m, 90, ClockMode::Literal).unwrap();
        assert_eq!(parts(&f), (9, map(&[]), map(&[(1, 5)])));
    }

    #[test]
    fn literal_merge_message_leading_copies_message() {
        // Hand-executed from the message-leading branch: offsets and counters
        // copied from m (with m's own implicit 0), own counter incremented.
        let e = clock(1, 10, 5, 5, &[], &[(1, 6)]);
        let m = clock(0, 10, 5, 8, &[(2, 1)], &[(0, 4), (2, 3)]);
        let f = e.merge(&m, 80, ClockMode::Literal).unwrap();
        assert_eq!(parts(&f), (8, map(&[(0, 0), (2, 1)]), map(&[(0, 4), (1, 1), (2, 3)])));
    }

    #[test]
    fn literal_merge_physical_clock_ahead_delegates_to_advance() {
        let e = clock(1, 10, 5, 5, &[(2, 1)], &[(1, 6), (2, 2)]);
        let m = clock(0, 10, 5, 6, &[], &[(0, 4)]);
        let f = e.merge(&m, 90, ClockMode::Literal).unwrap();
        assert_eq!(f, e.advance(90, ClockMode::Literal));
        assert_eq!(parts(&f), (9, map(&[]), map(&[])));
    }

    #[test]
    fn knowledge_merge_message_leading() {
        let e = clock(1, 10, 5, 5, &[], &[(1, 6)]);
        let m = clock(0, 10, 5, 8, &[], &[(0, 4)]);
        let f = e.merge(&m, 80, ClockMode::Knowledge).unwrap();
        assert_eq!(parts(&f), (8, map(&[(0, 0)]), map(&[(0, 4), (1, 1)])));
        assert_eq!(e.compare(&f).unwrap(), CausalRelation::Before);
        assert_eq!(m.compare(&f).unwrap(), CausalRelation::Before);
    }

    #[test]
    fn knowledge_merge_keeps_third_party_knowledge() {
        let e = clock(1, 10, 5, 5, &[(2, 0)], &[(1, 6), (2, 9)]);
        let m = clock(0, 10, 5, 8, &[], &[(0, 4)]);
        let f = e.merge(&m, 80, ClockMode::Knowledge).unwrap();
        assert_eq!(f.knowledge(2), Knowledge::tracked(5, 9));
        assert_eq!(parts(&f), (8, map(&[(0, 0), (2, 3)]), map(&[(0, 4), (1, 1), (2, 9)])));
    }

    #[test]
    fn knowledge_merge_equal_epoch_takes_fresher_offset() {
        let e = clock(1, 10, 5, 7, &[(2, 3)], &[(1, 2), (2, 8)]);
        let m = clock(0, 10, 5, 7, &[(2, 1)], &[(0, 5), (2, 1)]);
        let f = e.merge(&m, 70, ClockMode::Knowledge).unwrap();
        assert_eq!(parts(&f), (7, map(&[(0, 0), (2, 1)]), map(&[(0, 5), (1, 3), (2, 1)])));
    }

    #[test]
    fn merge_rejects_mismatch_and_self() {
        let e = clock(1, 10, 5, 7, &[], &[]);
        let other_eps = clock(0, 10, 6, 7, &[], &[]);
        assert!(matches!(
            e.merge(&other_eps, 0, ClockMode::Knowledge),
            Err(ClockError::ParameterMismatch { .. })
        ));
        assert_eq!(e.merge(&e, 0, ClockMode::Knowledge), Err(ClockError::SameProcess(1)));
        assert!(e.compare(&other_eps).is_err());
    }

    #[test]
    fn knowledge_view() {
        let c = clock(0, 10, 5, 9, &[], &[(0, 4)]);
        assert_eq!(c.knowledge(0), Knowledge::tracked(9, 4));
        let k = c.knowledge(7);
        assert_eq!((k.epoch, k.counter, k.stale), (4, 0, true));
        let c = clock(1, 10, 5, 9, &[(0, 2)], &[(0, 3)]);
        assert_eq!(c.knowledge(0), Knowledge::tracked(7, 3));
    }

    #[test]
    fn knowledge_early_in_run_is_negative() {
        let c = HybridVectorClock::new(0, 10, 5).unwrap();
        assert_eq!(c.knowledge(3).epoch, -5);
    }

    #[test]
    fn stale_orders_above_tracked_of_same_epoch() {
        assert!(Knowledge::untracked(4) > Knowledge::tracked(4, 1000));
        assert!(Knowledge::untracked(4) < Knowledge::tracked(5, 0));
    }

    #[test]
    fn display_values() {
        let c = clock(0, 10, 5, 9, &[], &[(0, 4)]);
        assert_eq!(c.display_value(0), 13);
        assert_eq!(c.display_value(7), 14);
        assert_eq!(HybridVectorClock::new(0, 10, 5).unwrap().display_value(0), 0);
    }

    #[test]
    fn active_sizes() {
        assert_eq!(
            HybridVectorClock::new(0, 10, 5).unwrap().active_size(),
            ActiveSize { offset_entries: 0, counter_entries: 0 }
        );
        let c = clock(0, 10, 5, 9, &[(1, 2), (3, 0)], &[(0, 4)]);
        assert_eq!(c.active_size(), ActiveSize { offset_entries: 2, counter_entries: 1 });
    }

    #[test]
    fn compare_basics() {
        let c = clock(0, 10, 5, 9, &[], &[(0, 4)]);
        assert_eq!(c.compare(&c).unwrap(), CausalRelation::Equal);
        let f = c.advance(95, ClockMode::Knowledge);
        assert_eq!(c.compare(&f).unwrap(), CausalRelation::Before);
        assert_eq!(f.compare(&c).unwrap(), CausalRelation::After);

        let a = HybridVectorClock::new(0, 10, 5).unwrap().advance(3, ClockMode::Knowledge);
        let b = HybridVectorClock::new(1, 10, 5).unwrap().advance(4, ClockMode::Knowledge);
        assert_eq!(a.compare(&b).unwrap(), CausalRelation::Concurrent);
    }

    #[test]
    fn capping_does_not_lose_causality() {
        // p1 learns p0's event at epoch 5 and then runs exactly epsilon epochs
        // ahead, so the entry is dropped; p0's event must still precede.
        let p0 = clock(0, 10, 5, 5, &[], &[(0, 3)]);
        let p1 = HybridVectorClock::new(1, 10, 5).unwrap();
        let received = p1.merge(&p0, 50, ClockMode::Knowledge).unwrap();
        let later = received.advance(100, ClockMode::Knowledge);
        assert_eq!(later.offset(0), None);
        assert_eq!(p0.compare(&later).unwrap(), CausalRelation::Before);
    }

    fn arb_clock(pid: u32, eps: u64) -> impl Strategy<Value = HybridVectorClock> {
        (
            0u64..40,
            proptest::collection::btree_map(0u32..6, (0..eps, 0u64..6), 0..5),
            0u64..6,
        )
            .prop_map(move |(epoch, peers, own)| {
                let mut offsets = BTreeMap::new();
                let mut counters = BTreeMap::new();
                for (j, (o, c)) in peers {
                    if j == pid || o > epoch {
                        continue;
                    }
                    offsets.insert(j, o);
                    counters.insert(j, c);
                }
                counters.insert(pid, own);
                HybridVectorClock::from_parts(pid, 10, eps, epoch, offsets, counters).unwrap()
            })
    }

    fn assert_well_formed(c: &HybridVectorClock) {
        assert!(!c.offsets().contains_key(&c.pid()));
        assert!(c.offsets().values().all(|v| *v < c.epsilon()));
        assert!(c.counters().iter().all(|(j, v)| *v > 0 && (*j == c.pid() || c.offsets().contains_key(j))));
    }

    proptest! {
        #[test]
        fn advance_is_monotone(e in arb_clock(0, 4), phy in 0u64..500) {
            let f = e.advance(phy, ClockMode::Knowledge);
            assert_well_formed(&f);
            prop_assert!(f.max_epoch() >= e.max_epoch());
            for j in 0..7 {
                prop_assert!(f.knowledge(j) >= e.knowledge(j), "component {j}: {e} -> {f}");
            }
            prop_assert!(f.knowledge(0) > e.knowledge(0));
            prop_assert_eq!(e.compare(&f).unwrap(), CausalRelation::Before);
            prop_assert_eq!(&f, &e.advance(phy, ClockMode::Knowledge));
        }

        #[test]
        fn merge_is_monotone(e in arb_clock(0, 4), m in arb_clock(1, 4), phy in 0u64..500) {
            let before = e.clone();
            let f = e.merge(&m, phy, ClockMode::Knowledge).unwrap();
            prop_assert_eq!(&e, &before);
            assert_well_formed(&f);
            for j in 0..7 {
                prop_assert!(f.knowledge(j) >= e.knowledge(j));
                if j != 0 {
                    prop_assert!(f.knowledge(j) >= m.knowledge(j), "component {j}: {e} + {m} -> {f}");
                }
            }
            prop_assert!(f.knowledge(0) > e.knowledge(0));
            prop_assert_eq!(e.compare(&f).unwrap(), CausalRelation::Before);
        }

        #[test]
        fn literal_mode_keeps_representation_valid(e in arb_clock(0, 4), m in arb_clock(1, 4), phy in 0u64..500) {
            assert_well_formed(&e.advance(phy, ClockMode::Literal));
            let f = e.merge(&m, phy, ClockMode::Literal).unwrap();
            assert_well_formed(&f);
            prop_assert!(f.max_epoch() >= e.max_epoch());
        }

        #[test]
        fn compare_is_antisymmetric(a in arb_clock(0, 4), b in arb_clock(1, 4)) {
            prop_assert_eq!(a.compare(&b).unwrap(), b.compare(&a).unwrap().inverse());
        }
    }
}
