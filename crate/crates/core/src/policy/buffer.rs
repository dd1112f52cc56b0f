//! FIFO replay buffer of whole episodes.

use std::collections::VecDeque;

use rand::seq::index;
use rand::Rng;

#[derive(Debug, Clone)]
pub struct ReplayBuffer<T> {
    capacity: usize,
    items: VecDeque<T>,
}

impl<T> ReplayBuffer<T> {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay buffer capacity must be positive");
        ReplayBuffer {
            capacity,
            items: VecDeque::with_capacity(capacity.min(1 << 16)),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Appends, evicting the oldest entry when full.
    pub fn push(&mut self, item: T) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(item);
    }

    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.items.iter()
    }

    /// Uniform sample of `min(batch, len)` distinct entries.
    pub fn sample<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Vec<&T> {
        let k = batch.min(self.items.len());
        index::sample(rng, self.items.len(), k)
            .into_iter()
            .map(|i| &self.items[i])
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn eviction_is_fifo() {
        let mut b = ReplayBuffer::new(3);
        for i in 0..5 {
            b.push(i);
        }
        assert_eq!(b.iter().copied().collect::<Vec<_>>(), vec![2, 3, 4]);
    }

    proptest! {
        #[test]
        fn never_exceeds_capacity_and_samples_are_distinct(
            cap in 1usize..50, pushes in 0usize..200, batch in 1usize..40, seed in any::<u64>()
        ) {
            let mut b = ReplayBuffer::new(cap);
            for i in 0..pushes {
                b.push(i);
                prop_assert!(b.len() <= cap);
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut s: Vec<usize> = b.sample(batch, &mut rng).into_iter().copied().collect();
            prop_assert_eq!(s.len(), batch.min(b.len()));
            s.sort_unstable();
            s.dedup();
            prop_assert_eq!(s.len(), batch.min(b.len()));
            let oldest = pushes.saturating_sub(cap);
            prop_assert!(s.iter().all(|&x| x >= oldest && x < pushes));
        }
    }
}
