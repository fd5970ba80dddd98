//! Top-N recommendation, the four ranking metrics, and the
//! subset-probability trend diagnostic.

use std::collections::HashSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{DataError, InteractionDataset};
use crate::diversity::DiversityKernel;
use crate::dpp::{
    build_personalized_kernel, enumerate_k_subsets, kdpp_log_probability, DppError,
    GroundSetInstance, ItemId, UserId,
};
use crate::model::EmbeddingTable;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("cutoff {n} exceeds the recommendation list length {len}")]
    CutoffTooLarge { n: usize, len: usize },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Dpp(#[from] DppError),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricRow {
    pub n: usize,
    pub recall: f64,
    pub ndcg: f64,
    pub cc: f64,
    pub f: f64,
}

/// Macro-averaged metrics at each cutoff, over users with at least one
/// target item.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub cutoffs: Vec<MetricRow>,
    pub num_users_evaluated: usize,
}

/// Items not in `exclude`, sorted by dot-product score descending with
/// ties broken by ascending item id, truncated to `n`.
pub fn recommend_top_n(
    embeddings: &EmbeddingTable,
    user: UserId,
    n: usize,
    exclude: &HashSet<ItemId>,
) -> Vec<ItemId> {
    let mut scored: Vec<(f64, ItemId)> = (0..embeddings.num_items() as ItemId)
        .filter(|item| !exclude.contains(item))
        .map(|item| (embeddings.score(user, item), item))
        .collect();
    scored.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    scored.truncate(n);
    scored.into_iter().map(|(_, item)| item).collect()
}

/// Harmonic mean of the quality score `(recall + ndcg) / 2` and the
/// category coverage; zero when both vanish.
pub fn f_score(recall: f64, ndcg: f64, cc: f64) -> f64 {
    let quality = 0.5 * (recall + ndcg);
    if quality + cc == 0.0 {
        return 0.0;
    }
    2.0 * quality * cc / (quality + cc)
}

/// Recall, NDCG (binary gains), category coverage, and the combined
/// F score for one recommendation list at cutoff `n`.
///
/// Recall divides by the full target count; the ideal DCG truncates at
/// `min(n, targets)`; coverage divides by the dataset-wide category
/// count.
pub fn compute_metrics(
    recommendations: &[ItemId],
    test_positives: &[ItemId],
    categories: &[u32],
    total_categories: usize,
    n: usize,
) -> Result<(f64, f64, f64, f64), EvalError> {
    if n > recommendations.len() {
        return Err(EvalError::CutoffTooLarge {
            n,
            len: recommendations.len(),
        });
    }
    let top = &recommendations[..n];
    let targets: HashSet<ItemId> = test_positives.iter().copied().collect();

    let mut hits = 0usize;
    let mut dcg = 0.0;
    for (rank, item) in top.iter().enumerate() {
        if targets.contains(item) {
            hits += 1;
            dcg += 1.0 / ((rank + 2) as f64).log2();
        }
    }
    let ideal = n.min(targets.len());
    let idcg: f64 = (0..ideal).map(|r| 1.0 / ((r + 2) as f64).log2()).sum();
    let recall = hits as f64 / targets.len() as f64;
    let ndcg = if idcg > 0.0 { dcg / idcg } else { 0.0 };

    let covered: HashSet<u32> = top.iter().map(|&i| categories[i as usize]).collect();
    let cc = covered.len() as f64 / total_categories as f64;

    Ok((recall, ndcg, cc, f_score(recall, ndcg, cc)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetSplit {
    Validation,
    Test,
}

/// Evaluate a model against one held-out split. Validation excludes
/// train items from the candidate pool; test excludes train and
/// validation.
pub fn evaluate_split(
    embeddings: &EmbeddingTable,
    data: &InteractionDataset,
    split: TargetSplit,
    cutoffs: &[usize],
) -> Result<EvalReport, EvalError> {
    let max_n = cutoffs.iter().copied().max().unwrap_or(0);
    let per_user: Vec<Option<Vec<(f64, f64, f64)>>> = (0..data.num_users as UserId)
        .into_par_iter()
        .map(|user| {
            let (targets, exclude): (&[ItemId], HashSet<ItemId>) = match split {
                TargetSplit::Validation => (
                    data.validation_items(user).ok()?,
                    data.train_items(user).ok()?.iter().copied().collect(),
                ),
                TargetSplit::Test => (
                    data.test_items(user).ok()?,
                    data.train_items(user)
                        .ok()?
                        .iter()
                        .chain(data.validation_items(user).ok()?)
                        .copied()
                        .collect(),
                ),
            };
            if targets.is_empty() {
                return None;
            }
            let recs = recommend_top_n(embeddings, user, max_n, &exclude);
            if recs.len() < max_n {
                return None;
            }
            let rows: Vec<(f64, f64, f64)> = cutoffs
                .iter()
                .map(|&n| {
                    let (recall, ndcg, cc, _) =
                        compute_metrics(&recs, targets, data.categories(), data.num_categories, n)
                            .expect("cutoffs bounded by max_n");
                    (recall, ndcg, cc)
                })
                .collect();
            Some(rows)
        })
        .collect();

    let mut sums = vec![(0.0, 0.0, 0.0); cutoffs.len()];
    let mut evaluated = 0usize;
    for rows in per_user.into_iter().flatten() {
        evaluated += 1;
        for (sum, row) in sums.iter_mut().zip(rows) {
            sum.0 += row.0;
            sum.1 += row.1;
            sum.2 += row.2;
        }
    }
    let denom = evaluated.max(1) as f64;
    // The combined score comes from the averaged metrics, so the report
    // satisfies f == harmonic((recall + ndcg)/2, cc) exactly.
    let cutoff_rows = cutoffs
        .iter()
        .zip(sums)
        .map(|(&n, (r, nd, cc))| MetricRow {
            n,
            recall: r / denom,
            ndcg: nd / denom,
            cc: cc / denom,
            f: f_score(r / denom, nd / denom, cc / denom),
        })
        .collect();
    Ok(EvalReport {
        cutoffs: cutoff_rows,
        num_users_evaluated: evaluated,
    })
}

/// Mean per-subset probability for each target count, averaged over a
/// sample of training instances.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrendReport {
    pub epoch: usize,
    pub k: usize,
    /// Index g holds the mean probability of k-subsets containing
    /// exactly g target items.
    pub group_means: Vec<f64>,
    pub num_instances: usize,
}

impl TrendReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,target_count,mean_prob\n");
        for (g, p) in self.group_means.iter().enumerate() {
            out.push_str(&format!("{},{},{:.10}\n", self.epoch, g, p));
        }
        out
    }
}

/// Group all size-k subsets of each instance's ground set by how many
/// targets they contain and average the normalized probabilities per
/// group, then across instances.
pub fn probability_trend(
    embeddings: &EmbeddingTable,
    kernel: &DiversityKernel,
    instances: &[GroundSetInstance],
    k: usize,
    epoch: usize,
) -> Result<TrendReport, EvalError> {
    let mut group_sums = vec![0.0; k + 1];
    let mut counted = 0usize;
    for instance in instances {
        if instance.k() != k {
            continue;
        }
        let pk = build_personalized_kernel(instance, embeddings, kernel)?;
        let gs = instance.ground_size();
        let mut sums = vec![0.0; k + 1];
        let mut counts = vec![0usize; k + 1];
        for subset in enumerate_k_subsets(gs, k)? {
            let g = subset.iter().filter(|&&i| i < k).count();
            let p = kdpp_log_probability(&pk, &subset)?.exp();
            sums[g] += p;
            counts[g] += 1;
        }
        for g in 0..=k {
            if counts[g] > 0 {
                group_sums[g] += sums[g] / counts[g] as f64;
            }
        }
        counted += 1;
    }
    let denom = counted.max(1) as f64;
    Ok(TrendReport {
        epoch,
        k,
        group_means: group_sums.into_iter().map(|s| s / denom).collect(),
        num_instances: counted,
    })
}
