//! Deterministic pixel environments and frame preprocessing.

mod catch;
mod frame;
mod seek_avoid;

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

pub use catch::{scripted_action as catch_scripted_action, Catch, PADDLE_WIDTH};
pub use frame::{preprocess, Frame};
pub use seek_avoid::{SeekAvoid, EPISODE_CAP as SEEK_AVOID_EPISODE_CAP};

pub(crate) use frame::to_byte;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("environment is terminal; reset before stepping")]
    Terminal,
    #[error("environment has not been reset")]
    NotReset,
    #[error("action {action} out of range for {count} actions")]
    ActionOutOfRange { action: usize, count: usize },
    #[error("invalid environment configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid frame {height}x{width} with {len} values")]
    InvalidFrame {
        height: usize,
        width: usize,
        len: usize,
    },
    #[error("cannot resize extent {extent} to {target}")]
    InvalidTarget { extent: usize, target: usize },
    #[error("bad image: {0}")]
    BadImage(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EnvSpec {
    pub action_count: usize,
    pub height: usize,
    pub width: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepResult {
    pub frame: Frame,
    pub reward: f64,
    pub terminal: bool,
}

/// A resettable, seeded environment producing grayscale frames.
pub trait Environment: Send + Sync {
    fn spec(&self) -> EnvSpec;

    /// Starts a new episode whose initial state is a pure function of `seed`.
    fn reset(&mut self, seed: u64) -> Frame;

    fn step(&mut self, action: usize) -> Result<StepResult, EnvError>;

    /// Hash of the full internal state.
    fn state_digest(&self) -> u64;

    fn box_clone(&self) -> Box<dyn Environment>;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EnvKind {
    Catch,
    SeekAvoid,
}

impl EnvKind {
    pub fn action_count(self) -> usize {
        match self {
            EnvKind::Catch => 3,
            EnvKind::SeekAvoid => 4,
        }
    }

    /// Builds the environment rendered at `side`×`side` pixels.
    ///
    /// 24 px gives a 24-row Catch board and a 6×6 Seek-Avoid grid; 84 px
    /// gives a 21-row Catch board at 4 px per cell and a 7×7 grid at 12 px.
    pub fn make(self, side: usize) -> Result<Box<dyn Environment>, EnvError> {
        match (self, side) {
            (EnvKind::Catch, 84) => Ok(Box::new(Catch::new(21, 21, 4)?)),
            (EnvKind::Catch, s) => Ok(Box::new(Catch::new(s, s, 1)?)),
            (EnvKind::SeekAvoid, 84) => Ok(Box::new(SeekAvoid::new(7, 12, 3)?)),
            (EnvKind::SeekAvoid, s) if s % 4 == 0 => Ok(Box::new(SeekAvoid::new(s / 4, 4, 3)?)),
            (EnvKind::SeekAvoid, s) => Err(EnvError::InvalidConfig(format!(
                "seek-avoid needs a side divisible by 4, got {s}"
            ))),
        }
    }
}

impl fmt::Display for EnvKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EnvKind::Catch => "catch",
            EnvKind::SeekAvoid => "seek_avoid",
        })
    }
}

impl FromStr for EnvKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "catch" => Ok(EnvKind::Catch),
            "seek_avoid" => Ok(EnvKind::SeekAvoid),
            other => Err(format!("unknown env `{other}` (expected catch|seek_avoid)")),
        }
    }
}

/// Reward clipping to `[-1, 1]`, as in DQN practice.
pub fn clip_reward(reward: f64) -> f64 {
    reward.clamp(-1.0, 1.0)
}
