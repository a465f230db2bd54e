use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{EnvError, EnvSpec, Environment, Frame, StepResult};

pub const EPISODE_CAP: usize = 100;

const AGENT: f64 = 1.0;
const GOAL: f64 = 0.7;
const HAZARD: f64 = 0.4;

/// Grid navigation with one rewarding goal (+1) and one hazard (-1).
///
/// The goal is drawn only during the first `reveal_steps` frames of an
/// episode, so acting well afterwards requires remembering where it was.
/// Episodes end on reaching either cell or after 100 steps.
#[derive(Clone, Debug)]
pub struct SeekAvoid {
    cells: usize,
    scale: usize,
    reveal_steps: usize,
    seed: u64,
    agent: (usize, usize),
    goal: (usize, usize),
    hazard: (usize, usize),
    steps: usize,
    terminal: bool,
    started: bool,
}

impl SeekAvoid {
    pub const UP: usize = 0;
    pub const DOWN: usize = 1;
    pub const LEFT: usize = 2;
    pub const RIGHT: usize = 3;

    pub fn new(cells: usize, scale: usize, reveal_steps: usize) -> Result<Self, EnvError> {
        if cells < 2 || scale == 0 {
            return Err(EnvError::InvalidConfig(format!(
                "seek-avoid grid {cells} at scale {scale}"
            )));
        }
        Ok(SeekAvoid {
            cells,
            scale,
            reveal_steps,
            seed: 0,
            agent: (0, 0),
            goal: (0, 0),
            hazard: (0, 0),
            steps: 0,
            terminal: true,
            started: false,
        })
    }

    /// Agent, goal and hazard cells.
    pub fn layout(&self) -> [(usize, usize); 3] {
        [self.agent, self.goal, self.hazard]
    }

    fn render(&self) -> Frame {
        let side = self.cells * self.scale;
        let mut frame = Frame::blank(side, side);
        frame.fill_cell(self.hazard.0, self.hazard.1, self.scale, HAZARD);
        if self.steps < self.reveal_steps {
            frame.fill_cell(self.goal.0, self.goal.1, self.scale, GOAL);
        }
        frame.fill_cell(self.agent.0, self.agent.1, self.scale, AGENT);
        frame
    }
}

impl Environment for SeekAvoid {
    fn spec(&self) -> EnvSpec {
        let side = self.cells * self.scale;
        EnvSpec {
            action_count: 4,
            height: side,
            width: side,
            seed: self.seed,
        }
    }

    fn reset(&mut self, seed: u64) -> Frame {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = self.cells * self.cells;
        let a = rng.gen_range(0..n);
        let mut g = rng.gen_range(0..n - 1);
        if g >= a {
            g += 1;
        }
        let mut h = rng.gen_range(0..n - 2);
        for taken in {
            let mut t = [a, g];
            t.sort_unstable();
            t
        } {
            if h >= taken {
                h += 1;
            }
        }
        let cell = |i: usize| (i / self.cells, i % self.cells);
        self.seed = seed;
        self.agent = cell(a);
        self.goal = cell(g);
        self.hazard = cell(h);
        self.steps = 0;
        self.terminal = false;
        self.started = true;
        self.render()
    }

    fn step(&mut self, action: usize) -> Result<StepResult, EnvError> {
        if !self.started {
            return Err(EnvError::NotReset);
        }
        if self.terminal {
            return Err(EnvError::Terminal);
        }
        let (r, c) = self.agent;
        self.agent = match action {
            Self::UP => (r.saturating_sub(1), c),
            Self::DOWN => ((r + 1).min(self.cells - 1), c),
            Self::LEFT => (r, c.saturating_sub(1)),
            Self::RIGHT => (r, (c + 1).min(self.cells - 1)),
            _ => return Err(EnvError::ActionOutOfRange { action, count: 4 }),
        };
        self.steps += 1;
        let reward = if self.agent == self.goal {
            1.0
        } else if self.agent == self.hazard {
            -1.0
        } else {
            0.0
        };
        self.terminal = reward != 0.0 || self.steps >= EPISODE_CAP;
        Ok(StepResult {
            frame: self.render(),
            reward,
            terminal: self.terminal,
        })
    }

    fn state_digest(&self) -> u64 {
        let mut h = self.seed;
        for v in [
            self.agent.0,
            self.agent.1,
            self.goal.0,
            self.goal.1,
            self.hazard.0,
            self.hazard.1,
            self.steps,
            usize::from(self.terminal),
        ] {
            h = h.wrapping_mul(0x100_0000_01b3).wrapping_add(v as u64);
        }
        h
    }

    fn box_clone(&self) -> Box<dyn Environment> {
        Box::new(self.clone())
    }
}
