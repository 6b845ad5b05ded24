//! n-step transition assembly and proportional prioritized replay.

mod nstep;
mod prioritized;
mod sum_tree;

pub use nstep::{NStepAssembler, RawStep};
pub use prioritized::{PrioritizedBuffer, ReplayConfig, SampledBatch};
pub use sum_tree::SumTree;
