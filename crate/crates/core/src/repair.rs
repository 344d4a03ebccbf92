//! Combined delivery: multicast to the strongest members of a group, then
//! unicast file repair for the rest.

use std::collections::VecDeque;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::queueing::DataQueue;

/// Members covered by the multicast session and those left to repair.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PartitionSpec {
    /// Member ids by descending average throughput; the first `covered` are
    /// served by multicast.
    pub order: Vec<usize>,
    pub covered: usize,
    /// `I_gj = count M_g / sum L_gj` per member id (bits/slot).
    pub throughput: Vec<f64>,
}

impl PartitionSpec {
    pub fn covered_set(&self) -> &[usize] {
        &self.order[..self.covered]
    }

    pub fn stragglers(&self) -> &[usize] {
        &self.order[self.covered..]
    }
}

/// Ranks members by average throughput over their code-length histories.
pub fn estimate_partition(member_lengths: &[Vec<u64>], message_bits: f64, covered: usize) -> Result<PartitionSpec> {
    if covered == 0 || covered > member_lengths.len() {
        return Err(Error::config(format!(
            "covered member count {covered} outside 1..={}",
            member_lengths.len()
        )));
    }
    let mut throughput = Vec::with_capacity(member_lengths.len());
    for h in member_lengths {
        if h.is_empty() {
            return Err(Error::EmptyHistory("member code-length history"));
        }
        throughput.push(h.len() as f64 * message_bits / h.iter().sum::<u64>() as f64);
    }
    Ok(partition_from_throughput(throughput, covered))
}

/// Sorts members by descending throughput (ties keep the lower id).
pub fn partition_from_throughput(throughput: Vec<f64>, covered: usize) -> PartitionSpec {
    let mut order: Vec<usize> = (0..throughput.len()).collect();
    order.sort_by(|&a, &b| throughput[b].total_cmp(&throughput[a]).then(a.cmp(&b)));
    PartitionSpec {
        order,
        covered,
        throughput,
    }
}

/// One line of the settlement log.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Settlement {
    pub group: usize,
    pub session: u64,
    pub member: usize,
    /// `R*`: useful bits gathered during the session, at most `M_g`.
    pub collected: f64,
    /// `M_v = M_g - R*`.
    pub residual: f64,
}

/// Unicast repair flow of one straggler.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RepairFlow {
    pub group: usize,
    pub member: usize,
    pub message_bits: f64,
    pub epsilon: f64,
    pub queue: DataQueue,
    /// Residual messages waiting for repair, head in flight.
    pub pending: VecDeque<f64>,
    pub accumulated: f64,
    pub completed: u64,
    pub slots: u64,
    pub collected_total: f64,
    pub sessions: u64,
}

impl RepairFlow {
    pub fn new(group: usize, member: usize, message_bits: f64, epsilon: f64, backlog: f64) -> Self {
        RepairFlow {
            group,
            member,
            message_bits,
            epsilon,
            queue: DataQueue::new(backlog),
            pending: VecDeque::new(),
            accumulated: 0.0,
            completed: 0,
            slots: 0,
            collected_total: 0.0,
            sessions: 0,
        }
    }

    /// Residual of the in-flight repair message, if any.
    pub fn head(&self) -> Option<f64> {
        self.pending.front().copied()
    }

    pub fn pending_bits(&self) -> f64 {
        self.pending.iter().sum()
    }

    /// Settles a finished multicast session for this straggler.
    ///
    /// The queue is credited with what the straggler gathered and the
    /// remainder is queued for repair. Both are capped by the bits the queue
    /// still holds beyond pending residuals, so `Q_v` always covers them.
    pub fn settle(&mut self, session: u64, register: f64) -> Settlement {
        let collected = (register / (1.0 + self.epsilon)).min(self.message_bits);
        let residual = self.message_bits - collected;
        let room = (self.queue.backlog - self.pending_bits()).max(0.0);
        self.queue.serve(collected.min(room));
        let room = (self.queue.backlog - self.pending_bits()).max(0.0);
        let queued = residual.min(room);
        if queued > 0.0 {
            self.pending.push_back(queued);
        }
        self.collected_total += collected;
        self.sessions += 1;
        Settlement {
            group: self.group,
            session,
            member: self.member,
            collected,
            residual,
        }
    }

    /// Rateless accumulation against the head residual, then arrivals.
    /// Returns the bits delivered this slot.
    pub fn step(&mut self, scheduled: bool, mi_slot: f64, arrivals: f64) -> f64 {
        let mut served = 0.0;
        if scheduled {
            if let Some(m) = self.head() {
                if self.accumulated + mi_slot >= m * (1.0 + self.epsilon) {
                    self.pending.pop_front();
                    self.accumulated = 0.0;
                    self.slots = 0;
                    self.completed += 1;
                    served = m;
                } else {
                    self.accumulated += mi_slot;
                    self.slots += 1;
                }
            }
        }
        self.queue.step(served, arrivals)
    }

    /// `eta = sum R* / (n M_g)`, or `None` before the first settlement.
    pub fn eta(&self) -> Option<f64> {
        (self.sessions > 0).then(|| self.collected_total / (self.sessions as f64 * self.message_bits))
    }

    /// `Q_v` never drops below the residuals still owed.
    pub fn backlog_covers_pending(&self) -> bool {
        self.queue.backlog + 1e-9 * (1.0 + self.queue.arrived) >= self.pending_bits()
    }
}
