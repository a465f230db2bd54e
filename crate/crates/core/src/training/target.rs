use std::path::Path;

use crate::agent::{AgentError, Model};

use super::{load_checkpoint, TrainError};

/// Frozen parameter copy used for bootstrap targets.
#[derive(Clone, Debug)]
pub struct TargetNetwork {
    model: Model,
    last_sync: u64,
}

impl TargetNetwork {
    pub fn new(online: &Model) -> Self {
        TargetNetwork {
            model: online.clone(),
            last_sync: 0,
        }
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn last_sync(&self) -> u64 {
        self.last_sync
    }

    /// Replaces the frozen copy with the current online parameters.
    pub fn sync(&mut self, online: &Model, step: u64) {
        self.model = online.clone();
        self.last_sync = step;
    }
}

pub fn sync_target(online: &Model, target: &mut TargetNetwork, step: u64) {
    target.sync(online, step);
}

/// Copies every conv kernel and bias from `source` into `dest`, leaving all
/// other parameters of `dest` untouched.
pub fn transfer_cnn(source: &Model, dest: &mut Model) -> Result<(), TrainError> {
    let src = &source.spec().geometry;
    let dst = &dest.spec().geometry;
    if !source.arch().has_conv() || !dest.arch().has_conv() {
        return Err(AgentError::NoConvStack.into());
    }
    if src.convs != dst.convs
        || src.input_height != dst.input_height
        || src.input_width != dst.input_width
    {
        return Err(AgentError::GeometryMismatch(format!(
            "conv stacks differ: {:?} vs {:?}",
            src.convs, dst.convs
        ))
        .into());
    }
    for i in 1..=src.convs.len() {
        for part in ["kernel", "bias"] {
            let name = format!("conv{i}.{part}");
            let t = source.params().by_name(&name)?.clone();
            dest.params_mut().assign(&name, t)?;
        }
    }
    Ok(())
}

/// [`transfer_cnn`] from a checkpoint file of any conv-bearing architecture.
pub fn transfer_cnn_from_file(path: &Path, dest: &mut Model) -> Result<(), TrainError> {
    let ckpt = load_checkpoint(path)?;
    if !ckpt.arch.has_conv() || !dest.arch().has_conv() {
        return Err(AgentError::NoConvStack.into());
    }
    let layers = dest.spec().geometry.convs.len();
    for i in 1..=layers {
        for part in ["kernel", "bias"] {
            let name = format!("conv{i}.{part}");
            let t = ckpt
                .params
                .by_name(&name)
                .map_err(|_| AgentError::GeometryMismatch(format!("checkpoint has no `{name}`")))?;
            if t.shape() != dest.params().by_name(&name)?.shape() {
                return Err(AgentError::GeometryMismatch(format!(
                    "`{name}` has shape {:?} in the checkpoint",
                    t.shape()
                ))
                .into());
            }
        }
    }
    for i in 1..=layers {
        for part in ["kernel", "bias"] {
            let name = format!("conv{i}.{part}");
            dest.params_mut()
                .assign(&name, ckpt.params.by_name(&name)?.clone())?;
        }
    }
    Ok(())
}
