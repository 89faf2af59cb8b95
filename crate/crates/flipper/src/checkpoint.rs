//! On-disk forms of trained networks.

use flipper_core::cgan::{CganArch, CycleGan, Discriminator, Generator};
use flipper_core::nnkit::{AdamState, Checkpoint, NnError};
use flipper_core::policy::{PolicyArch, PolicyNet};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyFile {
    pub arch: PolicyArch,
    pub checkpoint: Checkpoint,
}

impl PolicyFile {
    pub fn capture(policy: &PolicyNet, optimizer: Option<&AdamState>, seed: u64) -> Self {
        Self {
            arch: policy.arch,
            checkpoint: Checkpoint::capture(&policy.net, optimizer, seed),
        }
    }

    pub fn restore(&self) -> Result<PolicyNet, NnError> {
        Ok(PolicyNet {
            arch: self.arch,
            net: self.checkpoint.restore()?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CganFile {
    pub arch: CganArch,
    pub g: Checkpoint,
    pub g_s: Checkpoint,
    pub d: Checkpoint,
    pub d_s: Checkpoint,
}

impl CganFile {
    pub fn capture(model: &CycleGan, arch: CganArch, seed: u64) -> Self {
        Self {
            arch,
            g: Checkpoint::capture(&model.g.net, None, seed),
            g_s: Checkpoint::capture(&model.g_s.net, None, seed),
            d: Checkpoint::capture(&model.d.net, None, seed),
            d_s: Checkpoint::capture(&model.d_s.net, None, seed),
        }
    }

    pub fn restore(&self) -> Result<CycleGan, NnError> {
        Ok(CycleGan {
            g: Generator { net: self.g.restore()? },
            g_s: Generator { net: self.g_s.restore()? },
            d: Discriminator { net: self.d.restore()? },
            d_s: Discriminator { net: self.d_s.restore()? },
        })
    }
}
