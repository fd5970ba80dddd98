//! Epoch schedules of ground-set instances.
//!
//! Sequential mode tiles each user's chronological train history with
//! disjoint windows of k targets (the final short window backs up to
//! the last k items); random mode shuffles the history before tiling.
//! Either way every train item of a scheduled user lands in at least
//! one target set, the instance count never exceeds the interaction
//! count, and negatives are drawn fresh from the user's unobserved
//! items.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{DataError, InteractionDataset};
use crate::dpp::{DppError, GroundSetInstance, ItemId};
use crate::rng::{derive_rng, salt};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerMode {
    Random,
    Sequential,
}

impl std::str::FromStr for SamplerMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "r" | "random" => Ok(Self::Random),
            "s" | "sequential" => Ok(Self::Sequential),
            other => Err(format!("unknown sampler `{other}` (expected s or r)")),
        }
    }
}

#[derive(Debug, Error)]
pub enum SamplingError {
    #[error("k must be at least 2, got {0}")]
    KTooSmall(usize),
    #[error("user {user} has only {available} unobserved items, need {needed}")]
    NegativePoolExhausted {
        user: u32,
        available: usize,
        needed: usize,
    },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Dpp(#[from] DppError),
}

#[derive(Debug, Clone)]
pub struct EpochSchedule {
    pub instances: Vec<GroundSetInstance>,
    pub mode: SamplerMode,
    pub k: usize,
    pub n: usize,
    pub seed: u64,
    /// Users skipped because their train split holds fewer than k
    /// distinct items; a duplicate-free k-target window cannot be
    /// formed for them.
    pub skipped_users: usize,
}

/// Sequential (sliding-window) schedule over chronological train items.
pub fn schedule_sequential(
    data: &InteractionDataset,
    k: usize,
    n: usize,
    seed: u64,
) -> Result<EpochSchedule, SamplingError> {
    build(data, k, n, seed, SamplerMode::Sequential)
}

/// Random-grouping schedule: each user's train items are shuffled
/// before tiling, so target groupings change with the seed.
pub fn schedule_random(
    data: &InteractionDataset,
    k: usize,
    n: usize,
    seed: u64,
) -> Result<EpochSchedule, SamplingError> {
    build(data, k, n, seed, SamplerMode::Random)
}

fn build(
    data: &InteractionDataset,
    k: usize,
    n: usize,
    seed: u64,
    mode: SamplerMode,
) -> Result<EpochSchedule, SamplingError> {
    if k < 2 {
        return Err(SamplingError::KTooSmall(k));
    }
    let mut instances = Vec::new();
    let mut skipped_users = 0usize;
    for user in 0..data.num_users as u32 {
        let train = data.train_items(user)?;
        if train.is_empty() {
            continue;
        }
        if train.len() < k {
            skipped_users += 1;
            continue;
        }
        let mut history: Vec<ItemId> = train.to_vec();
        let mut rng = derive_rng(seed, &[salt::SCHEDULE, user as u64]);
        if mode == SamplerMode::Random {
            history.shuffle(&mut rng);
        }
        let observed: HashSet<ItemId> = data.positives(user).iter().copied().collect();
        let available = data.num_items - observed.len();
        if available < n {
            return Err(SamplingError::NegativePoolExhausted {
                user,
                available,
                needed: n,
            });
        }
        let mut neg_rng = derive_rng(seed, &[salt::NEGATIVES, user as u64]);
        for start in window_starts(history.len(), k) {
            let targets = history[start..start + k].to_vec();
            let negatives = sample_negatives(&mut neg_rng, n, data.num_items, &observed);
            instances.push(GroundSetInstance::new(user, targets, negatives)?);
        }
    }
    Ok(EpochSchedule {
        instances,
        mode,
        k,
        n,
        seed,
        skipped_users,
    })
}

/// A seeded sample of sequential-schedule instances for the
/// probability-trend diagnostic, with negatives redrawn so they span
/// exactly as many distinct categories as the instance's targets.
/// Instances where no such draw exists keep their uniform negatives.
pub fn trend_instances(
    data: &InteractionDataset,
    k: usize,
    n: usize,
    count: usize,
    seed: u64,
) -> Result<Vec<GroundSetInstance>, SamplingError> {
    let schedule = schedule_sequential(data, k, n, seed)?;
    let mut instances = schedule.instances;
    let mut rng = derive_rng(seed, &[salt::TREND]);
    instances.shuffle(&mut rng);
    instances.truncate(count);

    let mut by_category: Vec<Vec<ItemId>> = vec![Vec::new(); data.num_categories];
    for item in 0..data.num_items as ItemId {
        by_category[data.category(item) as usize].push(item);
    }

    let matched: Vec<GroundSetInstance> = instances
        .into_iter()
        .map(|inst| {
            let mut cats: Vec<u32> = inst.targets().iter().map(|&i| data.category(i)).collect();
            cats.sort_unstable();
            cats.dedup();
            let wanted = cats.len();
            let observed: HashSet<ItemId> =
                data.positives(inst.user()).iter().copied().collect();
            for _ in 0..50 {
                if let Some(negatives) =
                    draw_matched_negatives(&mut rng, &by_category, &observed, wanted, n)
                {
                    if negatives.iter().all(|i| !inst.targets().contains(i)) {
                        return GroundSetInstance::new(
                            inst.user(),
                            inst.targets().to_vec(),
                            negatives,
                        )
                        .expect("matched negatives are distinct and unobserved");
                    }
                }
            }
            inst
        })
        .collect();
    Ok(matched)
}

/// One covered item per chosen category, remainder from the pooled
/// categories, so the draw spans exactly `wanted` categories.
fn draw_matched_negatives(
    rng: &mut impl Rng,
    by_category: &[Vec<ItemId>],
    observed: &HashSet<ItemId>,
    wanted: usize,
    n: usize,
) -> Option<Vec<ItemId>> {
    if wanted > n {
        return None;
    }
    let mut categories: Vec<usize> = (0..by_category.len()).collect();
    categories.shuffle(rng);
    categories.truncate(wanted);
    let mut negatives: Vec<ItemId> = Vec::with_capacity(n);
    let mut pool: Vec<ItemId> = Vec::new();
    for &cat in &categories {
        let unobserved: Vec<ItemId> = by_category[cat]
            .iter()
            .copied()
            .filter(|i| !observed.contains(i))
            .collect();
        if unobserved.is_empty() {
            return None;
        }
        negatives.push(unobserved[rng.gen_range(0..unobserved.len())]);
        pool.extend(unobserved);
    }
    pool.retain(|i| !negatives.contains(i));
    if pool.len() < n - wanted {
        return None;
    }
    pool.shuffle(rng);
    negatives.extend(pool.into_iter().take(n - wanted));
    Some(negatives)
}

/// Disjoint window starts at stride k; a ragged tail backs up to
/// `len - k` so the last items are still covered. Requires `len >= k`.
fn window_starts(len: usize, k: usize) -> Vec<usize> {
    let mut starts: Vec<usize> = (0..=(len - k)).step_by(k).collect();
    if len % k != 0 {
        starts.push(len - k);
    }
    starts
}

fn sample_negatives(
    rng: &mut impl Rng,
    n: usize,
    num_items: usize,
    observed: &HashSet<ItemId>,
) -> Vec<ItemId> {
    let mut drawn = HashSet::with_capacity(n);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let cand = rng.gen_range(0..num_items) as ItemId;
        if !observed.contains(&cand) && drawn.insert(cand) {
            out.push(cand);
        }
    }
    out
}
