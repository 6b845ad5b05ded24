use crate::error::Result;
use crate::net::{polyak_update, AdamConfig, AdamState, NetConfig, NetParams};

/// `K` online utility networks, their lagged targets and optimiser states.
#[derive(Debug, Clone)]
pub struct EnsembleCritic {
    pub online: Vec<NetParams<f32>>,
    pub target: Vec<NetParams<f32>>,
    pub adam: Vec<AdamState<f32>>,
}

/// Seed of critic `k`, derived so that critic 0 of any ensemble built from
/// the same base seed is identical.
pub(crate) fn critic_seed(base: u64, k: usize) -> u64 {
    base.wrapping_add((k as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

impl EnsembleCritic {
    /// Targets start as exact copies of their online networks.
    pub fn new(net: &NetConfig, k: usize, adam: AdamConfig) -> Result<Self> {
        let online = (0..k)
            .map(|i| NetParams::init(&NetConfig { seed: critic_seed(net.seed, i), ..net.clone() }))
            .collect::<Result<Vec<_>>>()?;
        let target = online.clone();
        let adam = online.iter().map(|p| AdamState::new(p, adam)).collect();
        Ok(Self { online, target, adam })
    }

    pub fn len(&self) -> usize {
        self.online.len()
    }

    pub fn is_empty(&self) -> bool {
        self.online.is_empty()
    }

    pub fn polyak(&mut self, c: f32) -> Result<()> {
        for (t, o) in self.target.iter_mut().zip(&self.online) {
            polyak_update(t, o, c)?;
        }
        Ok(())
    }
}
