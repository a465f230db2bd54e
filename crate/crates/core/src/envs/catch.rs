use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{EnvError, EnvSpec, Environment, Frame, StepResult};

pub const PADDLE_WIDTH: usize = 3;

/// Falling-ball catching game.
///
/// The ball starts in a random column of the top row and falls one row per
/// step. A 3-cell paddle on the bottom row moves left, stays, or moves right.
/// When the ball reaches the bottom row the episode ends with +1 if the
/// paddle is under it and -1 otherwise, so every episode lasts `rows - 1`
/// steps.
#[derive(Clone, Debug)]
pub struct Catch {
    rows: usize,
    cols: usize,
    scale: usize,
    seed: u64,
    ball: (usize, usize),
    paddle: usize,
    terminal: bool,
    started: bool,
}

impl Catch {
    pub const LEFT: usize = 0;
    pub const STAY: usize = 1;
    pub const RIGHT: usize = 2;

    /// Board of `rows`×`cols` cells, each rendered as `scale`×`scale` pixels.
    pub fn new(rows: usize, cols: usize, scale: usize) -> Result<Self, EnvError> {
        if rows < 2 || cols < PADDLE_WIDTH || scale == 0 {
            return Err(EnvError::InvalidConfig(format!(
                "catch board {rows}x{cols} at scale {scale}"
            )));
        }
        Ok(Catch {
            rows,
            cols,
            scale,
            seed: 0,
            ball: (0, 0),
            paddle: 1,
            terminal: true,
            started: false,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Column of the ball and of the paddle centre.
    pub fn positions(&self) -> (usize, usize, usize) {
        (self.ball.0, self.ball.1, self.paddle)
    }

    fn render(&self) -> Frame {
        let mut frame = Frame::blank(self.rows * self.scale, self.cols * self.scale);
        for c in self.paddle - 1..=self.paddle + 1 {
            frame.fill_cell(self.rows - 1, c, self.scale, 1.0);
        }
        frame.fill_cell(self.ball.0, self.ball.1, self.scale, 1.0);
        frame
    }
}

impl Environment for Catch {
    fn spec(&self) -> EnvSpec {
        EnvSpec {
            action_count: 3,
            height: self.rows * self.scale,
            width: self.cols * self.scale,
            seed: self.seed,
        }
    }

    fn reset(&mut self, seed: u64) -> Frame {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.seed = seed;
        self.ball = (0, rng.gen_range(0..self.cols));
        self.paddle = rng.gen_range(1..self.cols - 1);
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
        if action >= 3 {
            return Err(EnvError::ActionOutOfRange { action, count: 3 });
        }
        match action {
            Self::LEFT => self.paddle = self.paddle.saturating_sub(1).max(1),
            Self::RIGHT => self.paddle = (self.paddle + 1).min(self.cols - 2),
            _ => {}
        }
        self.ball.0 += 1;
        let mut reward = 0.0;
        if self.ball.0 == self.rows - 1 {
            self.terminal = true;
            reward = if self.ball.1.abs_diff(self.paddle) <= 1 {
                1.0
            } else {
                -1.0
            };
        }
        Ok(StepResult {
            frame: self.render(),
            reward,
            terminal: self.terminal,
        })
    }

    fn state_digest(&self) -> u64 {
        let mut h = self.seed;
        for v in [
            self.ball.0,
            self.ball.1,
            self.paddle,
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

/// Action that moves the paddle centre toward the ball column; catches every ball.
pub fn scripted_action(frame: &Frame, scale: usize) -> usize {
    let rows = frame.height() / scale;
    let cols = frame.width() / scale;
    let bottom = (rows - 1) * scale;
    let paddle_cells: Vec<usize> = (0..cols)
        .filter(|&c| frame.get(bottom, c * scale) > 0.5)
        .collect();
    let ball_col = (0..rows.saturating_sub(1))
        .flat_map(|r| (0..cols).map(move |c| (r, c)))
        .find(|&(r, c)| frame.get(r * scale, c * scale) > 0.5)
        .map(|(_, c)| c);
    let (Some(ball), Some(&first)) = (ball_col, paddle_cells.first()) else {
        return Catch::STAY;
    };
    let centre = first + 1;
    match ball.cmp(&centre) {
        std::cmp::Ordering::Less => Catch::LEFT,
        std::cmp::Ordering::Greater => Catch::RIGHT,
        std::cmp::Ordering::Equal => Catch::STAY,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reset_layout() {
        let mut env = Catch::new(24, 24, 1).unwrap();
        let f = env.reset(9);
        let top: Vec<f64> = (0..24).map(|x| f.get(0, x)).collect();
        assert_eq!(top.iter().filter(|&&v| v > 0.0).count(), 1);
        let bottom: Vec<usize> = (0..24).filter(|&x| f.get(23, x) > 0.0).collect();
        assert_eq!(bottom.len(), 3);
        assert_eq!(bottom[2] - bottom[0], 2);
        let lit = f.values().iter().filter(|&&v| v > 0.0).count();
        assert_eq!(lit, 4);
    }

    #[test]
    fn same_seed_same_frame() {
        let mut a = Catch::new(24, 24, 1).unwrap();
        let mut b = Catch::new(24, 24, 1).unwrap();
        assert_eq!(a.reset(42), b.reset(42));
    }

    #[test]
    fn episode_length_is_rows_minus_one() {
        let mut env = Catch::new(10, 8, 1).unwrap();
        env.reset(1);
        let mut steps = 0;
        loop {
            steps += 1;
            let r = env.step(Catch::STAY).unwrap();
            if r.terminal {
                assert!(r.reward == 1.0 || r.reward == -1.0);
                break;
            }
            assert_eq!(r.reward, 0.0);
        }
        assert_eq!(steps, 9);
        assert_eq!(env.step(Catch::STAY), Err(EnvError::Terminal));
    }

    #[test]
    fn catch_and_miss_rewards() {
        // find seeds where the ball is under / away from the paddle and hold still
        let mut env = Catch::new(6, 12, 1).unwrap();
        let mut saw_hit = false;
        let mut saw_miss = false;
        for seed in 0..200 {
            env.reset(seed);
            let (_, ball, paddle) = env.positions();
            let mut last = None;
            for _ in 0..5 {
                last = Some(env.step(Catch::STAY).unwrap());
            }
            let last = last.unwrap();
            assert!(last.terminal);
            if ball.abs_diff(paddle) <= 1 {
                assert_eq!(last.reward, 1.0);
                saw_hit = true;
            } else {
                assert_eq!(last.reward, -1.0);
                saw_miss = true;
            }
        }
        assert!(saw_hit && saw_miss);
    }

    #[test]
    fn rejects_bad_actions_and_unreset_steps() {
        let mut env = Catch::new(6, 6, 1).unwrap();
        assert_eq!(env.step(0), Err(EnvError::NotReset));
        env.reset(0);
        assert!(matches!(
            env.step(3),
            Err(EnvError::ActionOutOfRange { .. })
        ));
    }

    #[test]
    fn scripted_policy_always_catches() {
        let mut env = Catch::new(24, 24, 1).unwrap();
        for seed in 0..100 {
            let mut frame = env.reset(seed);
            loop {
                let r = env.step(scripted_action(&frame, 1)).unwrap();
                frame = r.frame;
                if r.terminal {
                    assert_eq!(r.reward, 1.0, "seed {seed}");
                    break;
                }
            }
        }
    }

    #[test]
    fn scaled_rendering() {
        let mut env = Catch::new(21, 21, 4).unwrap();
        let f = env.reset(3);
        assert_eq!((f.height(), f.width()), (84, 84));
        assert_eq!(f.values().iter().filter(|&&v| v > 0.0).count(), 4 * 16);
    }
}
