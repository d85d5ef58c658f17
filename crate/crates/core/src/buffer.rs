//! FIFO experience buffer with zero/non-zero reward indices.

use std::collections::VecDeque;

use rand::Rng;

pub const DEFAULT_CAPACITY: usize = 3000;
/// Frames per reward-prediction window.
pub const RP_WINDOW: usize = 3;
/// Frames per pixel-change window: a 20-step unroll plus its final frame.
pub const PC_WINDOW: usize = 21;

#[derive(Debug, Clone, PartialEq)]
pub struct BufferTuple {
    pub obs: Vec<f32>,
    pub action: usize,
    /// Reward received after taking `action` at `obs`.
    pub reward: f64,
    /// Episode the tuple belongs to; windows never straddle episodes.
    pub episode: u64,
}

/// Tuples are addressed by a monotonically increasing id; the oldest
/// occupied id is `first_id()`.
#[derive(Debug, Clone)]
pub struct ExperienceBuffer {
    capacity: usize,
    items: VecDeque<BufferTuple>,
    first_id: u64,
    zero: VecDeque<u64>,
    nonzero: VecDeque<u64>,
}

impl ExperienceBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0);
        ExperienceBuffer {
            capacity,
            items: VecDeque::with_capacity(capacity),
            first_id: 0,
            zero: VecDeque::new(),
            nonzero: VecDeque::new(),
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

    pub fn first_id(&self) -> u64 {
        self.first_id
    }

    /// One past the newest id.
    pub fn end_id(&self) -> u64 {
        self.first_id + self.items.len() as u64
    }

    pub fn get(&self, id: u64) -> Option<&BufferTuple> {
        id.checked_sub(self.first_id).and_then(|i| self.items.get(i as usize))
    }

    pub fn zero_ids(&self) -> &VecDeque<u64> {
        &self.zero
    }

    pub fn nonzero_ids(&self) -> &VecDeque<u64> {
        &self.nonzero
    }

    pub fn push(&mut self, t: BufferTuple) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
            let old = self.first_id;
            // the evicted id is the smallest, so it heads whichever index holds it
            if self.zero.front() == Some(&old) {
                self.zero.pop_front();
            } else {
                debug_assert_eq!(self.nonzero.front(), Some(&old));
                self.nonzero.pop_front();
            }
            self.first_id += 1;
        }
        let id = self.end_id();
        if t.reward == 0.0 {
            self.zero.push_back(id);
        } else {
            self.nonzero.push_back(id);
        }
        self.items.push_back(t);
    }

    /// True when the two index sets are disjoint, sorted, cover every
    /// occupied id, and agree with the stored rewards.
    pub fn check_partition(&self) -> bool {
        if self.zero.len() + self.nonzero.len() != self.items.len() {
            return false;
        }
        let sorted = |d: &VecDeque<u64>| d.iter().zip(d.iter().skip(1)).all(|(a, b)| a < b);
        if !sorted(&self.zero) || !sorted(&self.nonzero) {
            return false;
        }
        let ok = |ids: &VecDeque<u64>, nonzero: bool| {
            ids.iter()
                .all(|&id| self.get(id).is_some_and(|t| (t.reward != 0.0) == nonzero))
        };
        ok(&self.zero, false) && ok(&self.nonzero, true)
    }

    fn same_episode(&self, start: u64, len: usize) -> bool {
        if start < self.first_id || start + len as u64 > self.end_id() {
            return false;
        }
        let ep = self.get(start).map(|t| t.episode);
        (start..start + len as u64).all(|id| self.get(id).map(|t| t.episode) == ep)
    }

    /// Start id of a reward-prediction window `start..start+3`.
    ///
    /// The last tuple's reward is the prediction target. With probability
    /// 0.5 a window ending on a non-zero reward is drawn, when one exists;
    /// otherwise the window ends on a zero reward. With no non-zero rewards
    /// the draw is uniform. `None` when no valid window exists.
    pub fn sample_reward_window<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<u64> {
        if self.items.len() < RP_WINDOW {
            return None;
        }
        let want_nonzero = !self.nonzero.is_empty() && rng.random_bool(0.5);
        let pool = if want_nonzero { &self.nonzero } else { &self.zero };
        let lowest = self.first_id + (RP_WINDOW as u64 - 1);
        const ATTEMPTS: usize = 32;
        if !pool.is_empty() {
            for _ in 0..ATTEMPTS {
                let end = pool[rng.random_range(0..pool.len())];
                if end >= lowest && self.same_episode(end + 1 - RP_WINDOW as u64, RP_WINDOW) {
                    return Some(end + 1 - RP_WINDOW as u64);
                }
            }
        }
        // rare: no valid window in the chosen class; fall back to any window
        for _ in 0..ATTEMPTS {
            let start = rng.random_range(self.first_id..=self.end_id() - RP_WINDOW as u64);
            if self.same_episode(start, RP_WINDOW) {
                return Some(start);
            }
        }
        None
    }

    /// A run of 2..=`max_len` consecutive same-episode tuples, as `(start, len)`.
    pub fn sample_sequence<R: Rng + ?Sized>(&self, rng: &mut R, max_len: usize) -> Option<(u64, usize)> {
        if self.items.len() < 2 {
            return None;
        }
        for _ in 0..32 {
            let start = rng.random_range(self.first_id..self.end_id() - 1);
            let ep = self.get(start).expect("in range").episode;
            let mut len = 1;
            while len < max_len && self.get(start + len as u64).is_some_and(|t| t.episode == ep) {
                len += 1;
            }
            if len >= 2 {
                return Some((start, len));
            }
        }
        None
    }
}

impl Default for ExperienceBuffer {
    fn default() -> Self {
        Self::new(DEFAULT_CAPACITY)
    }
}

/// Class index of a reward: 0 negative, 1 zero, 2 positive.
pub fn reward_class(r: f64) -> usize {
    if r < 0.0 {
        0
    } else if r == 0.0 {
        1
    } else {
        2
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tuple(reward: f64, episode: u64) -> BufferTuple {
        BufferTuple {
            obs: vec![reward as f32],
            action: 0,
            reward,
            episode,
        }
    }

    #[test]
    fn overflow_evicts_oldest() {
        let mut b = ExperienceBuffer::new(3000);
        for i in 0..3001 {
            b.push(BufferTuple {
                obs: vec![i as f32],
                action: 0,
                reward: 0.0,
                episode: 0,
            });
        }
        assert_eq!(b.len(), 3000);
        assert_eq!(b.first_id(), 1);
        assert!(b.get(0).is_none());
        assert_eq!(b.get(1).unwrap().obs, vec![1.0]);
        assert!(b.check_partition());
    }

    #[test]
    fn nonzero_bookkeeping() {
        let mut b = ExperienceBuffer::new(3);
        b.push(tuple(1.0, 0));
        assert_eq!(b.nonzero_ids().iter().copied().collect::<Vec<_>>(), vec![0]);
        b.push(tuple(0.0, 0));
        b.push(tuple(0.0, 0));
        b.push(tuple(0.0, 0));
        assert!(b.nonzero_ids().is_empty());
        assert_eq!(b.zero_ids().len(), 3);
        assert!(b.check_partition());
    }

    #[test]
    fn zero_only_buffer_targets_zero() {
        let mut b = ExperienceBuffer::new(50);
        for _ in 0..20 {
            b.push(tuple(0.0, 0));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let s = b.sample_reward_window(&mut rng).unwrap();
            assert_eq!(reward_class(b.get(s + 2).unwrap().reward), 1);
        }
    }

    #[test]
    fn windows_stay_inside_one_episode() {
        let mut b = ExperienceBuffer::new(100);
        for ep in 0..20 {
            for k in 0..4 {
                b.push(tuple(if k == 3 { 1.0 } else { 0.0 }, ep));
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..500 {
            let s = b.sample_reward_window(&mut rng).unwrap();
            let ep = b.get(s).unwrap().episode;
            assert!((s..s + 3).all(|i| b.get(i).unwrap().episode == ep));
            let (start, len) = b.sample_sequence(&mut rng, PC_WINDOW).unwrap();
            assert!((2..=4).contains(&len));
            let ep = b.get(start).unwrap().episode;
            assert!((start..start + len as u64).all(|i| b.get(i).unwrap().episode == ep));
        }
    }
}
