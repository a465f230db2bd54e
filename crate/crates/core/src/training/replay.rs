use std::collections::VecDeque;

use rand::Rng;

use crate::envs::Frame;

use super::TrainError;

/// One `(s_t, a_t, r_t, terminal_t)` record.
#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub frame: Frame,
    pub action: usize,
    pub reward: f64,
    pub terminal: bool,
}

/// `unroll` consecutive transitions from one episode.
///
/// `bootstrap` is the frame following the last transition; it is `None`
/// exactly when that transition was terminal.
#[derive(Clone, Debug, PartialEq)]
pub struct Segment {
    pub frames: Vec<Frame>,
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
    pub terminals: Vec<bool>,
    pub bootstrap: Option<Frame>,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

/// Identifies a sampled start: episode serial number and offset in that episode.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SegmentStart {
    pub episode: u64,
    pub offset: usize,
}

#[derive(Clone, Debug)]
struct Episode {
    serial: u64,
    transitions: Vec<Transition>,
}

impl Episode {
    fn closed(&self) -> bool {
        self.transitions.last().is_some_and(|t| t.terminal)
    }

    /// Starts `j` with `j + unroll <= n` that also have a successor frame or end on a terminal.
    fn eligible(&self, unroll: usize) -> usize {
        let n = self.transitions.len();
        if n < unroll {
            return 0;
        }
        n - unroll + usize::from(self.closed())
    }
}

/// Episode-structured experience replay with whole-episode eviction.
#[derive(Clone, Debug)]
pub struct ReplayMemory {
    capacity: usize,
    episodes: VecDeque<Episode>,
    len: usize,
    next_serial: u64,
}

impl ReplayMemory {
    pub fn new(capacity: usize) -> Self {
        ReplayMemory {
            capacity: capacity.max(1),
            episodes: VecDeque::new(),
            len: 0,
            next_serial: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Stored transitions.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn episode_count(&self) -> usize {
        self.episodes.len()
    }

    /// Appends a transition; a terminal transition closes its episode.
    ///
    /// When over capacity, the oldest whole episodes are dropped first. An
    /// episode that alone exceeds capacity loses its oldest transitions.
    pub fn append(&mut self, transition: Transition) {
        let needs_new = self.episodes.back().is_none_or(Episode::closed);
        if needs_new {
            self.episodes.push_back(Episode {
                serial: self.next_serial,
                transitions: Vec::new(),
            });
            self.next_serial += 1;
        }
        self.episodes
            .back_mut()
            .expect("an open episode exists")
            .transitions
            .push(transition);
        self.len += 1;

        while self.len > self.capacity && self.episodes.len() > 1 {
            let evicted = self.episodes.pop_front().expect("non-empty");
            self.len -= evicted.transitions.len();
        }
        if self.len > self.capacity {
            let ep = self.episodes.front_mut().expect("non-empty");
            let excess = self.len - self.capacity;
            ep.transitions.drain(..excess);
            self.len -= excess;
        }
    }

    /// Number of valid segment starts for `unroll`.
    pub fn eligible(&self, unroll: usize) -> usize {
        self.episodes.iter().map(|e| e.eligible(unroll)).sum()
    }

    /// Every valid start, in storage order.
    pub fn all_starts(&self, unroll: usize) -> Vec<SegmentStart> {
        self.episodes
            .iter()
            .flat_map(|e| {
                (0..e.eligible(unroll)).map(|offset| SegmentStart {
                    episode: e.serial,
                    offset,
                })
            })
            .collect()
    }

    /// Draws `batch` starts uniformly (with replacement) over all valid starts.
    pub fn sample_starts<R: Rng + ?Sized>(
        &self,
        batch: usize,
        unroll: usize,
        rng: &mut R,
    ) -> Result<Vec<SegmentStart>, TrainError> {
        if unroll == 0 {
            return Err(TrainError::InvalidConfig(
                "unroll must be at least 1".into(),
            ));
        }
        let counts: Vec<usize> = self.episodes.iter().map(|e| e.eligible(unroll)).collect();
        let total: usize = counts.iter().sum();
        if total < batch || total == 0 {
            return Err(TrainError::InsufficientReplay {
                eligible: total,
                needed: batch.max(1),
            });
        }
        let mut prefix = Vec::with_capacity(counts.len());
        let mut acc = 0;
        for c in &counts {
            acc += c;
            prefix.push(acc);
        }
        Ok((0..batch)
            .map(|_| {
                let k = rng.gen_range(0..total);
                let e = prefix.partition_point(|&p| p <= k);
                let before = if e == 0 { 0 } else { prefix[e - 1] };
                SegmentStart {
                    episode: self.episodes[e].serial,
                    offset: k - before,
                }
            })
            .collect())
    }

    /// Materializes the segment at `start`.
    pub fn segment(&self, start: SegmentStart, unroll: usize) -> Result<Segment, TrainError> {
        let first = self.episodes.front().map_or(0, |e| e.serial);
        let ep = start
            .episode
            .checked_sub(first)
            .and_then(|i| self.episodes.get(i as usize))
            .filter(|e| e.serial == start.episode)
            .ok_or(TrainError::InsufficientReplay {
                eligible: 0,
                needed: 1,
            })?;
        if start.offset >= ep.eligible(unroll) {
            return Err(TrainError::InsufficientReplay {
                eligible: ep.eligible(unroll),
                needed: start.offset + 1,
            });
        }
        let slice = &ep.transitions[start.offset..start.offset + unroll];
        let end = start.offset + unroll;
        let bootstrap = if slice[unroll - 1].terminal {
            None
        } else {
            Some(ep.transitions[end].frame.clone())
        };
        Ok(Segment {
            frames: slice.iter().map(|t| t.frame.clone()).collect(),
            actions: slice.iter().map(|t| t.action).collect(),
            rewards: slice.iter().map(|t| t.reward).collect(),
            terminals: slice.iter().map(|t| t.terminal).collect(),
            bootstrap,
        })
    }

    pub fn sample<R: Rng + ?Sized>(
        &self,
        batch: usize,
        unroll: usize,
        rng: &mut R,
    ) -> Result<Vec<Segment>, TrainError> {
        self.sample_starts(batch, unroll, rng)?
            .into_iter()
            .map(|s| self.segment(s, unroll))
            .collect()
    }
}
