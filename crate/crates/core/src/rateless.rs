//! Rateless-code reception modelled as mutual-information accumulation.
//!
//! A receiver decodes once the MI it has gathered for the in-flight message
//! reaches `M (1 + eps)`. MI above the threshold is discarded.

use serde::Serialize;

use crate::error::{Error, Result};

/// Decode state of one unicast message stream.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct UnicastReception {
    /// Accumulated MI for the in-flight message (bits).
    pub accumulated: f64,
    pub message_bits: f64,
    pub epsilon: f64,
    /// Messages decoded so far. The in-flight message has index `completed + 1`.
    pub completed: u64,
    /// Scheduled slots spent on the in-flight message.
    pub slots: u64,
    /// Code length of every decoded message.
    pub lengths: Vec<u64>,
}

impl UnicastReception {
    pub fn new(message_bits: f64, epsilon: f64) -> Self {
        UnicastReception {
            accumulated: 0.0,
            message_bits,
            epsilon,
            completed: 0,
            slots: 0,
            lengths: Vec::new(),
        }
    }

    pub fn threshold(&self) -> f64 {
        self.message_bits * (1.0 + self.epsilon)
    }

    pub fn code_index(&self) -> u64 {
        self.completed + 1
    }

    /// Advances one slot; returns whether the receiver ACKs.
    pub fn step(&mut self, scheduled: bool, mi_slot: f64) -> bool {
        if !scheduled {
            return false;
        }
        if self.accumulated + mi_slot < self.threshold() {
            self.accumulated += mi_slot;
            self.slots += 1;
            false
        } else {
            self.lengths.push(self.slots + 1);
            self.accumulated = 0.0;
            self.slots = 0;
            self.completed += 1;
            true
        }
    }
}

/// End of a multicast session.
#[derive(Clone, Debug, PartialEq)]
pub struct SessionEnd {
    /// `L_g(n)`: scheduled slots the session took.
    pub length: u64,
    /// Every member's register just before the reset (bits).
    pub accumulated: Vec<f64>,
}

/// Decode state of one multicast group.
///
/// Only tracked members gate the end of a session. Untracked members keep
/// listening until the session ends, so their registers can be settled.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MulticastReception {
    pub accumulated: Vec<f64>,
    pub message_bits: f64,
    pub epsilon: f64,
    pub completed: u64,
    pub slots: u64,
    pub decoded: Vec<bool>,
    pub tracked: Vec<bool>,
    /// `L_g(n)` of every completed session.
    pub lengths: Vec<u64>,
    /// `L_gj(n)` per member, for sessions in which the member decoded.
    pub member_lengths: Vec<Vec<u64>>,
    /// Sum of `lengths`.
    pub total_length: u64,
}

impl MulticastReception {
    pub fn new(members: usize, message_bits: f64, epsilon: f64) -> Self {
        MulticastReception {
            accumulated: vec![0.0; members],
            message_bits,
            epsilon,
            completed: 0,
            slots: 0,
            decoded: vec![false; members],
            tracked: vec![true; members],
            lengths: Vec::new(),
            member_lengths: vec![Vec::new(); members],
            total_length: 0,
        }
    }

    pub fn threshold(&self) -> f64 {
        self.message_bits * (1.0 + self.epsilon)
    }

    pub fn code_index(&self) -> u64 {
        self.completed + 1
    }

    /// Restricts session completion to `covered`; takes effect immediately.
    pub fn set_tracked(&mut self, covered: &[usize]) {
        self.tracked.iter_mut().for_each(|t| *t = false);
        for &j in covered {
            self.tracked[j] = true;
        }
    }

    /// Advances one slot with per-member MI; returns the session end if every
    /// tracked member has now decoded.
    pub fn step(&mut self, scheduled: bool, mi_slots: &[f64]) -> Option<SessionEnd> {
        if !scheduled {
            return None;
        }
        let threshold = self.threshold();
        let slot = self.slots + 1;
        for (j, &mi) in mi_slots.iter().enumerate() {
            if self.decoded[j] {
                continue;
            }
            self.accumulated[j] += mi;
            if self.accumulated[j] >= threshold {
                self.decoded[j] = true;
                self.member_lengths[j].push(slot);
            }
        }
        self.slots = slot;
        let done = self.tracked.iter().zip(&self.decoded).all(|(&t, &d)| !t || d);
        if !done {
            return None;
        }
        let end = SessionEnd {
            length: slot,
            accumulated: self.accumulated.clone(),
        };
        self.lengths.push(slot);
        self.total_length += slot;
        self.completed += 1;
        self.slots = 0;
        self.accumulated.iter_mut().for_each(|r| *r = 0.0);
        self.decoded.iter_mut().for_each(|d| *d = false);
        Some(end)
    }
}

/// Mean of a code-length history.
pub fn mean_code_length(lengths: &[u64]) -> Result<f64> {
    if lengths.is_empty() {
        return Err(Error::EmptyHistory("code-length history"));
    }
    Ok(lengths.iter().sum::<u64>() as f64 / lengths.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unicast_examples() {
        let mut r = UnicastReception::new(40.0, 0.0);
        r.accumulated = 30.0;
        assert!(!r.step(true, 5.0));
        assert_eq!(r.accumulated, 35.0);

        let mut r = UnicastReception::new(40.0, 0.0);
        r.accumulated = 36.0;
        assert!(r.step(true, 5.0));
        assert_eq!(r.accumulated, 0.0);
        assert_eq!(r.code_index(), 2);

        let before = r.clone();
        assert!(!r.step(false, 5.0));
        assert_eq!(r, before);
    }

    #[test]
    fn epsilon_raises_threshold() {
        let mut r = UnicastReception::new(40.0, 0.25);
        for _ in 0..9 {
            assert!(!r.step(true, 5.0));
        }
        assert!(r.step(true, 5.0));
        assert_eq!(r.lengths, vec![10]);
    }

    #[test]
    fn multicast_partial_decode() {
        let mut m = MulticastReception::new(2, 40.0, 0.0);
        m.accumulated = vec![38.0, 20.0];
        assert!(m.step(true, &[5.0, 5.0]).is_none());
        assert!(m.decoded[0]);
        assert_eq!(m.accumulated[1], 25.0);
    }

    #[test]
    fn multicast_deterministic_lengths() {
        let mut m = MulticastReception::new(3, 40.0, 0.0);
        for _ in 0..80 {
            m.step(true, &[5.0; 3]);
        }
        assert_eq!(m.lengths, vec![8; 10]);
        assert_eq!(mean_code_length(&m.lengths).unwrap(), 8.0);
    }

    #[test]
    fn single_member_matches_unicast() {
        let mut u = UnicastReception::new(40.0, 0.0);
        let mut m = MulticastReception::new(1, 40.0, 0.0);
        let seq = [3.0, 5.0, 0.0, 4.5, 2.0, 5.0, 5.0, 1.0, 5.0, 5.0, 5.0, 2.5, 4.0, 5.0];
        for _ in 0..20 {
            for &x in &seq {
                assert_eq!(u.step(true, x), m.step(true, &[x]).is_some());
            }
        }
        assert_eq!(u.lengths, m.lengths);
    }

    #[test]
    fn empty_history_errors() {
        assert!(mean_code_length(&[]).is_err());
    }
}
