//! Deterministic replication schedules for class-imbalance oversampling.
//!
//! A group of `current` items reaching `target` gets every item
//! `target / current` times, and a seeded choice of `target % current`
//! items one extra time. The realized total is the target exactly.

use std::collections::BTreeSet;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::taxonomy::{CellClass, ClassCounts};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum OversampleError {
    #[error("group `{name}`: target {target} is below the current {current}")]
    InfeasibleTarget { name: String, current: u64, target: u64 },
    #[error("group `{name}` is empty but has target {target}")]
    EmptyGroup { name: String, target: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupPlan {
    pub name: String,
    pub current: u64,
    pub target: u64,
    /// Copies of every item, the original included.
    pub base_factor: u64,
    /// Items (by index) that get one copy beyond `base_factor`.
    pub extra: Vec<u64>,
}

impl GroupPlan {
    pub fn copies(&self, item: u64) -> u64 {
        self.base_factor + u64::from(self.extra.binary_search(&item).is_ok())
    }

    pub fn realized(&self) -> u64 {
        self.base_factor * self.current + self.extra.len() as u64
    }

    /// New copies to generate.
    pub fn additional(&self) -> u64 {
        self.realized() - self.current
    }

    pub fn is_identity(&self) -> bool {
        self.additional() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OversamplePlan {
    pub seed: u64,
    pub groups: Vec<GroupPlan>,
}

impl OversamplePlan {
    pub fn group(&self, name: &str) -> Option<&GroupPlan> {
        self.groups.iter().find(|g| g.name == name)
    }

    pub fn is_identity(&self) -> bool {
        self.groups.iter().all(GroupPlan::is_identity)
    }
}

pub fn oversample_plan(groups: &[(String, u64, u64)], seed: u64) -> Result<OversamplePlan, OversampleError> {
    let mut out = Vec::with_capacity(groups.len());
    for (i, (name, current, target)) in groups.iter().cloned().enumerate() {
        if target < current {
            return Err(OversampleError::InfeasibleTarget { name, current, target });
        }
        if current == 0 {
            if target > 0 {
                return Err(OversampleError::EmptyGroup { name, target });
            }
            out.push(GroupPlan { name, current, target, base_factor: 1, extra: Vec::new() });
            continue;
        }
        let base_factor = target / current;
        let remainder = target % current;
        let extra = if remainder == 0 {
            Vec::new()
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            let chosen: BTreeSet<u64> = sample(&mut rng, current as usize, remainder as usize).iter().map(|x| x as u64).collect();
            chosen.into_iter().collect()
        };
        out.push(GroupPlan { name, current, target, base_factor, extra });
    }
    Ok(OversamplePlan { seed, groups: out })
}

/// One group per class, named after the class.
pub fn oversample_classes(current: &ClassCounts, target: &ClassCounts, seed: u64) -> Result<OversamplePlan, OversampleError> {
    let groups: Vec<(String, u64, u64)> =
        CellClass::ALL.iter().map(|&c| (c.name().to_string(), current.get(c), target.get(c))).collect();
    oversample_plan(&groups, seed)
}
