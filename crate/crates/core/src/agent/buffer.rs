use std::collections::VecDeque;

use rand::seq::index::sample;
use rand::Rng;

use crate::env::Measurement;

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    /// Explored action in normalized coordinates `[-1, 1]`.
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub measurement: Measurement,
}

/// Bounded FIFO experience store; the oldest transition is dropped on overflow.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: VecDeque<Transition>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            items: VecDeque::with_capacity(capacity),
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

    pub fn push(&mut self, t: Transition) {
        if self.capacity == 0 {
            return;
        }
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(t);
    }

    pub fn get(&self, i: usize) -> Option<&Transition> {
        self.items.get(i)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.items.iter()
    }

    /// Uniform minibatch without replacement; `None` while the buffer is too small.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, batch: usize) -> Option<Vec<&Transition>> {
        if batch == 0 || self.items.len() < batch {
            return None;
        }
        Some(
            sample(rng, self.items.len(), batch)
                .into_iter()
                .map(|i| &self.items[i])
                .collect(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tr(r: f64) -> Transition {
        Transition {
            state: vec![0.0, 0.0],
            action: vec![0.0],
            reward: r,
            next_state: vec![0.0, 0.0],
            measurement: Measurement::default(),
        }
    }

    #[test]
    fn fifo_eviction() {
        let mut b = ReplayBuffer::new(3);
        for k in 0..5 {
            b.push(tr(k as f64));
            assert!(b.len() <= 3);
        }
        let kept: Vec<f64> = b.iter().map(|t| t.reward).collect();
        assert_eq!(kept, vec![2.0, 3.0, 4.0]);
    }

    #[test]
    fn sampling_rules() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut b = ReplayBuffer::new(10);
        b.push(tr(0.0));
        assert!(b.sample(&mut rng, 2).is_none());
        for k in 1..10 {
            b.push(tr(k as f64));
        }
        let batch = b.sample(&mut rng, 10).unwrap();
        let mut seen: Vec<f64> = batch.iter().map(|t| t.reward).collect();
        seen.sort_by(f64::total_cmp);
        assert_eq!(seen, (0..10).map(f64::from).collect::<Vec<_>>());
    }

    #[test]
    fn sampling_is_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut b = ReplayBuffer::new(5);
        for k in 0..5 {
            b.push(tr(k as f64));
        }
        let mut counts = [0usize; 5];
        for _ in 0..20_000 {
            for t in b.sample(&mut rng, 2).unwrap() {
                counts[t.reward as usize] += 1;
            }
        }
        for c in counts {
            assert!((c as f64 / 8000.0 - 1.0).abs() < 0.05);
        }
    }
}
