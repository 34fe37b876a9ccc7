use crate::rng::Stream;

/// One environment interaction under the behavior policy.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub done: bool,
}

/// Fixed-capacity ring with FIFO eviction and uniform sampling.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Transition>,
    write: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        ReplayBuffer { capacity, items: Vec::with_capacity(capacity.min(4096)), write: 0 }
    }

    pub fn push(&mut self, t: Transition) {
        debug_assert!(t.reward.is_finite(), "non-finite reward");
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.write] = t;
        }
        self.write = (self.write + 1) % self.capacity;
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn get(&self, i: usize) -> &Transition {
        &self.items[i]
    }

    /// Uniform indices with replacement.
    pub fn sample_indices(&self, batch: usize, stream: &mut Stream) -> Vec<usize> {
        assert!(!self.items.is_empty(), "sampling from empty buffer");
        (0..batch).map(|_| stream.next_index(self.items.len())).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(tag: f64) -> Transition {
        Transition {
            state: vec![tag],
            action: vec![0.0],
            reward: tag,
            next_state: vec![tag],
            done: false,
        }
    }

    #[test]
    fn fifo_eviction_at_capacity() {
        let mut buf = ReplayBuffer::new(3);
        for i in 0..5 {
            buf.push(t(i as f64));
        }
        assert_eq!(buf.len(), 3);
        let rewards: Vec<f64> = (0..3).map(|i| buf.get(i).reward).collect();
        // slots hold 3, 4, 2 after wrapping; the oldest (0, 1) are gone
        assert!(rewards.contains(&2.0) && rewards.contains(&3.0) && rewards.contains(&4.0));
    }

    #[test]
    fn sampling_is_uniform_ish() {
        let mut buf = ReplayBuffer::new(10);
        for i in 0..10 {
            buf.push(t(i as f64));
        }
        let mut stream = Stream::new(5);
        let mut counts = [0usize; 10];
        for _ in 0..100 {
            for i in buf.sample_indices(100, &mut stream) {
                counts[i] += 1;
            }
        }
        // 10_000 draws over 10 slots: each should be near 1000
        for (i, &c) in counts.iter().enumerate() {
            assert!((700..1300).contains(&c), "slot {i} drawn {c} times");
        }
    }
}
