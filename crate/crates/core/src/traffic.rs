//! Deadline-driven FIFO queues.
//!
//! Within a slot the order is: decide, transmit, resolve success or expiry of
//! the head-of-line packet, age the remaining packets by one slot, then append
//! the slot's arrival with a fresh deadline. A packet that arrives in slot `t`
//! is therefore first transmittable in slot `t + 1` with `d = d_max`.

use std::collections::VecDeque;

use crate::error::QueueError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Packet {
    /// Slots left including the current one, in `1..=d_max`.
    pub remaining_deadline: u32,
    pub birth_slot: u64,
}

/// Per-slot outcome for one user.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SlotOutcome {
    pub success: bool,
    pub drop: bool,
}

impl SlotOutcome {
    /// Departure indicator `b = mu + D`.
    pub fn departure(&self) -> u32 {
        self.success as u32 + self.drop as u32
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct UserQueueState {
    fifo: VecDeque<Packet>,
    pub cum_arrivals: u64,
    pub cum_drops: u64,
    pub cum_successes: u64,
}

impl UserQueueState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn q_len(&self) -> usize {
        self.fifo.len()
    }

    pub fn is_backlogged(&self) -> bool {
        !self.fifo.is_empty()
    }

    pub fn head(&self) -> Option<&Packet> {
        self.fifo.front()
    }

    /// Head-of-line deadline, 0 for an idle user.
    pub fn head_deadline(&self) -> u32 {
        self.fifo.front().map_or(0, |p| p.remaining_deadline)
    }

    pub fn packets(&self) -> impl Iterator<Item = &Packet> {
        self.fifo.iter()
    }

    /// Advances the queue by one slot.
    pub fn step(
        &mut self,
        user: usize,
        success: bool,
        arrival: bool,
        d_max: u32,
        slot: u64,
    ) -> Result<SlotOutcome, QueueError> {
        let mut outcome = SlotOutcome::default();
        if success {
            if self.fifo.pop_front().is_none() {
                return Err(QueueError::SuccessOnEmptyQueue { user });
            }
            self.cum_successes += 1;
            outcome.success = true;
        } else if self.head_deadline() == 1 {
            self.fifo.pop_front();
            self.cum_drops += 1;
            outcome.drop = true;
        }
        for p in self.fifo.iter_mut() {
            p.remaining_deadline -= 1;
        }
        if arrival {
            self.fifo.push_back(Packet {
                remaining_deadline: d_max,
                birth_slot: slot,
            });
            self.cum_arrivals += 1;
        }
        Ok(outcome)
    }
}

/// `mu_i`: user transmitted alone on its pilot and met its rate threshold.
/// `rate` is only consulted for non-collided users.
pub fn success_indicator(
    assignment: &[usize],
    multiplicity: &[usize],
    rate: Option<f64>,
    rate_threshold: f64,
    user: usize,
) -> bool {
    let a = assignment[user];
    if a == 0 || multiplicity[a - 1] != 1 {
        return false;
    }
    rate.is_some_and(|r| r >= rate_threshold)
}

/// Urgency `1 - (d - 1) / d_max` of a head-of-line packet; 0 for idle users.
pub fn urgency(d: u32, d_max: u32) -> f64 {
    if d == 0 {
        return 0.0;
    }
    1.0 - (d as f64 - 1.0) / d_max as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn success_indicator_cases() {
        assert!(!success_indicator(&[1, 1], &[2], Some(10.0), 1.0, 0));
        assert!(success_indicator(&[1, 0], &[1], Some(1.0), 1.0, 0));
        assert!(!success_indicator(&[0, 1], &[1], Some(10.0), 1.0, 0));
        assert!(!success_indicator(&[1, 0], &[1], Some(0.99), 1.0, 0));
    }

    #[test]
    fn arrival_into_empty_queue() {
        let mut q = UserQueueState::new();
        let out = q.step(0, false, true, 5, 0).unwrap();
        assert_eq!(out, SlotOutcome::default());
        assert_eq!(q.q_len(), 1);
        assert_eq!(q.head_deadline(), 5);
    }

    #[test]
    fn forced_expiry() {
        let mut q = UserQueueState::new();
        q.step(0, false, true, 1, 0).unwrap();
        assert_eq!(q.head_deadline(), 1);
        let out = q.step(0, false, false, 1, 1).unwrap();
        assert!(out.drop && !out.success);
        assert_eq!(q.q_len(), 0);
        assert_eq!(q.cum_drops, 1);
    }

    #[test]
    fn success_on_empty_queue_is_an_error() {
        let mut q = UserQueueState::new();
        assert_eq!(
            q.step(3, true, false, 2, 0),
            Err(QueueError::SuccessOnEmptyQueue { user: 3 })
        );
    }

    #[test]
    fn urgency_examples() {
        assert_eq!(urgency(1, 5), 1.0);
        assert!((urgency(5, 5) - 0.2).abs() < 1e-15);
        assert!((urgency(3, 5) - 0.6).abs() < 1e-15);
        assert_eq!(urgency(0, 5), 0.0);
    }

    #[test]
    fn saturated_queue_without_service_drops_every_slot() {
        let mut q = UserQueueState::new();
        let d_max = 4;
        let mut drops = 0;
        for t in 0..100u64 {
            drops += q.step(0, false, true, d_max, t).unwrap().drop as u32;
            assert!(q.q_len() <= d_max as usize);
        }
        // The pipeline fills after d_max slots; afterwards one drop per slot.
        assert_eq!(drops, 100 - d_max);
    }

    proptest! {
        #[test]
        fn queue_recurrence_and_conservation(
            d_max in 1u32..6,
            events in prop::collection::vec((any::<bool>(), any::<bool>()), 1..400),
        ) {
            let mut q = UserQueueState::new();
            for (t, &(want_success, arrival)) in events.iter().enumerate() {
                let before = q.q_len() as i64;
                let success = want_success && q.is_backlogged();
                let out = q.step(0, success, arrival, d_max, t as u64).unwrap();
                prop_assert!(out.departure() <= 1);
                prop_assert!(!out.drop || !out.success);
                let expect = (before - out.departure() as i64).max(0) + arrival as i64;
                prop_assert_eq!(q.q_len() as i64, expect);
                // Deadlines strictly increase from head to tail and stay in range.
                let ds: Vec<u32> = q.packets().map(|p| p.remaining_deadline).collect();
                prop_assert!(ds.iter().all(|&d| d >= 1 && d <= d_max));
                prop_assert!(ds.windows(2).all(|w| w[0] < w[1]));
                for p in q.packets() {
                    prop_assert!(t as u64 - p.birth_slot < d_max as u64);
                }
            }
            prop_assert_eq!(
                q.cum_arrivals,
                q.cum_successes + q.cum_drops + q.q_len() as u64
            );
        }
    }
}
