use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::envs::{to_byte, Environment, Frame};

use super::{render_attention, run_episode, write_ppm, EvalError, Policy};

pub const INDEX_HEADER: &str = "step,action,reward,max_q,att_index";

#[derive(Clone, Debug, PartialEq)]
pub struct CaptureSummary {
    pub steps: u64,
    pub episodes: usize,
    pub files: Vec<PathBuf>,
    pub rewards: Vec<f64>,
}

fn io_error(path: &Path, e: std::io::Error) -> EvalError {
    EvalError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

fn gray_rgb(frame: &Frame) -> Vec<u8> {
    frame
        .values()
        .iter()
        .flat_map(|&v| [to_byte(v); 3])
        .collect()
}

/// Runs `steps` steps of `policy` (same episode seeding as step-budget
/// evaluation) and writes one PPM per step plus `index.csv` into `out_dir`.
pub fn capture_trajectory(
    policy: Policy<'_>,
    env: &dyn Environment,
    steps: u64,
    seed: u64,
    out_dir: &Path,
) -> Result<CaptureSummary, EvalError> {
    fs::create_dir_all(out_dir).map_err(|e| io_error(out_dir, e))?;
    let geometry = match policy {
        Policy::Agent { model, .. } => Some(model.spec().geometry.clone()),
        _ => None,
    };
    let mut index = String::from(INDEX_HEADER);
    index.push('\n');
    let mut files = Vec::new();
    let mut rewards = Vec::new();
    let mut episodes = 0;
    let mut local = env.box_clone();
    while (rewards.len() as u64) < steps {
        let remaining = steps - rewards.len() as u64;
        run_episode(
            policy,
            local.as_mut(),
            seed,
            episodes as u64,
            remaining,
            |rec| {
                let step = rewards.len();
                let base = rec.decision.input.as_ref().unwrap_or(rec.observed);
                let rgb = match (&rec.decision.attention, &geometry) {
                    (Some(att), Some(g)) => render_attention(base, &att.weights, g)?.rgb(),
                    _ => gray_rgb(base),
                };
                let path = out_dir.join(format!("step_{step:06}.ppm"));
                let mut bytes = Vec::with_capacity(rgb.len() + 20);
                write_ppm(&mut bytes, base.width(), base.height(), &rgb)
                    .map_err(|e| io_error(&path, e))?;
                fs::write(&path, bytes).map_err(|e| io_error(&path, e))?;
                files.push(path);

                let max_q = rec
                    .decision
                    .q_values
                    .as_ref()
                    .map(|q| {
                        q.iter()
                            .copied()
                            .fold(f64::NEG_INFINITY, f64::max)
                            .to_string()
                    })
                    .unwrap_or_default();
                let att = rec
                    .decision
                    .attention
                    .as_ref()
                    .and_then(|a| a.sampled_index)
                    .map(|i| i.to_string())
                    .unwrap_or_default();
                writeln!(
                    index,
                    "{step},{},{},{max_q},{att}",
                    rec.decision.action, rec.reward
                )
                .expect("writing to a String");
                rewards.push(rec.reward);
                Ok(())
            },
        )?;
        episodes += 1;
    }
    let index_path = out_dir.join("index.csv");
    fs::write(&index_path, index).map_err(|e| io_error(&index_path, e))?;
    Ok(CaptureSummary {
        steps,
        episodes,
        files,
        rewards,
    })
}
