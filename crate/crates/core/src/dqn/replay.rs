//! Compact transitions and the FIFO replay ring.

use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::canvas::Canvas;
use crate::env::{EnvState, PenState};
use crate::error::{Error, Result};

/// A state without its derived streams: packed generated canvas, reference
/// id, pen and step counter.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateDescriptor {
    pub canvas: Vec<u8>,
    pub reference: u32,
    pub pen: PenState,
    pub k: u16,
}

impl StateDescriptor {
    pub fn capture(state: &EnvState, reference: u32) -> Self {
        Self {
            canvas: state.generated.pack_bits(),
            reference,
            pen: state.pen,
            k: state.k as u16,
        }
    }

    pub fn restore(&self, size: usize, references: &[Arc<Canvas>]) -> Result<EnvState> {
        let reference = references
            .get(self.reference as usize)
            .ok_or_else(|| Error::Contract(format!("unknown reference id {}", self.reference)))?;
        Ok(EnvState {
            generated: Canvas::unpack_bits(size, &self.canvas)?,
            reference: reference.clone(),
            pen: self.pen,
            k: usize::from(self.k),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: StateDescriptor,
    pub action: usize,
    pub reward: f64,
    pub next: StateDescriptor,
    pub terminal: bool,
}

#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Transition>,
    /// Slot the next push overwrites once full.
    head: usize,
    pushed: u64,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Config("replay capacity must be positive".into()));
        }
        Ok(Self {
            capacity,
            items: Vec::with_capacity(capacity.min(1 << 16)),
            head: 0,
            pushed: 0,
        })
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

    pub fn pushed(&self) -> u64 {
        self.pushed
    }

    /// Inserts `t`, evicting the oldest entry when full.
    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.head] = t;
            self.head = (self.head + 1) % self.capacity;
        }
        self.pushed += 1;
    }

    pub fn oldest(&self) -> Option<&Transition> {
        self.items.get(self.head).or(self.items.first())
    }

    /// Entries from oldest to newest.
    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.items[self.head..].iter().chain(&self.items[..self.head])
    }

    /// `n` entries drawn uniformly with replacement.
    pub fn sample(&self, rng: &mut ChaCha8Rng, n: usize) -> Result<Vec<&Transition>> {
        if self.items.is_empty() {
            return Err(Error::Contract("sampling from an empty replay buffer".into()));
        }
        let len = self.items.len() as u32;
        Ok((0..n).map(|_| &self.items[rng.gen_range(0..len) as usize]).collect())
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand::SeedableRng;

    use super::*;
    use crate::env::SketchEnv;

    fn transition(tag: usize) -> Transition {
        let d = StateDescriptor {
            canvas: vec![0; 2],
            reference: 0,
            pen: PenState { x: 0, y: 0, down: false },
            k: 0,
        };
        Transition {
            state: d.clone(),
            action: tag,
            reward: tag as f64,
            next: d,
            terminal: false,
        }
    }

    #[test]
    fn descriptors_reproduce_streams_exactly() {
        let env = SketchEnv::new(84, 150).unwrap();
        let mut reference = Canvas::new(84);
        reference.draw_segment(crate::canvas::Cell::new(3, 3), crate::canvas::Cell::new(70, 20)).unwrap();
        let refs = vec![Arc::new(reference)];
        let mut state = env.reset(refs[0].clone()).unwrap();
        for a in [200, 130, 7, 241, 181, 150] {
            env.step(&mut state, a).unwrap();
            let d = StateDescriptor::capture(&state, 0);
            let back = d.restore(84, &refs).unwrap();
            assert_eq!(back, state);
            assert_eq!(
                crate::env::Observation::of(&back),
                crate::env::Observation::of(&state)
            );
        }
        assert!(StateDescriptor::capture(&state, 3).restore(84, &refs).is_err());
    }

    #[test]
    fn sampling_is_seeded() {
        let mut buf = ReplayBuffer::new(50).unwrap();
        for i in 0..30 {
            buf.push(transition(i));
        }
        let a: Vec<usize> = buf
            .sample(&mut ChaCha8Rng::seed_from_u64(4), 64)
            .unwrap()
            .iter()
            .map(|t| t.action)
            .collect();
        let b: Vec<usize> = buf
            .sample(&mut ChaCha8Rng::seed_from_u64(4), 64)
            .unwrap()
            .iter()
            .map(|t| t.action)
            .collect();
        assert_eq!(a, b);
        assert!(a.iter().all(|&x| x < 30));
        assert!(ReplayBuffer::new(3).unwrap().sample(&mut ChaCha8Rng::seed_from_u64(0), 1).is_err());
    }

    proptest! {
        #[test]
        fn fifo_eviction(capacity in 1usize..40, n in 0usize..120) {
            let mut buf = ReplayBuffer::new(capacity).unwrap();
            for i in 0..n {
                buf.push(transition(i));
            }
            prop_assert_eq!(buf.len(), n.min(capacity));
            let kept: Vec<usize> = buf.iter().map(|t| t.action).collect();
            let expected: Vec<usize> = (n.saturating_sub(capacity)..n).collect();
            prop_assert_eq!(&kept, &expected);
            if n > 0 {
                prop_assert_eq!(buf.oldest().unwrap().action, expected[0]);
            }
        }
    }
}
