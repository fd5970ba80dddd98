//! Item diversity kernels.
//!
//! The default kernel is a low-rank factor `V` (one row per item) with
//! `K[i][j] = <V_i, V_j>`, trained so that category-diverse item sets
//! get larger determinants than sets containing unobserved items. It is
//! trained once and stays frozen afterwards. The alternative kernel
//! scores pairs with a Gaussian similarity of the live item embeddings
//! and keeps gradients flowing through them.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use thiserror::Error;

use crate::data::{DataError, InteractionDataset};
use crate::dpp::ItemId;
use crate::linalg::{self, LinalgError};
use crate::model::EmbeddingTable;
use crate::rng::{derive_rng, salt};

/// Jitter added inside every determinant during kernel training.
pub const DIVERSITY_JITTER: f64 = 1e-6;

/// Per-row gradient norm cap during kernel training. The negative-set
/// term grows without bound as its minors collapse toward the jitter
/// floor, where the raw gradient scales like 1/jitter.
const GRAD_ROW_CLIP: f64 = 1.0;

/// Default low-rank factor width, matching the embedding size.
pub const DEFAULT_RANK: usize = 64;

#[derive(Debug, Error)]
pub enum DiversityError {
    #[error("item id {0} not resolvable in the diversity kernel")]
    UnknownItem(ItemId),
    #[error("rank {rank} must be at least the training set size {set_size}")]
    RankTooSmall { rank: usize, set_size: usize },
    #[error("set size must be at least 2, got {0}")]
    SetSizeTooSmall(usize),
    #[error("min_categories {min_categories} cannot exceed set size {set_size}")]
    MinCategoriesTooLarge {
        min_categories: usize,
        set_size: usize,
    },
    #[error("objective became non-finite at epoch {epoch}, pair {pair}")]
    NonFiniteObjective { epoch: usize, pair: usize },
    #[error("sigma must be positive, got {0}")]
    BadSigma(f64),
    #[error("negative pool exhausted for user {0}")]
    NegativePoolExhausted(u32),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("bad kernel checkpoint {path}: {message}")]
    BadCheckpoint { path: String, message: String },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Data(#[from] DataError),
}

/// Low-rank factor defining `K = V^T V`. Frozen once trained.
#[derive(Debug, Clone, PartialEq)]
pub struct PretrainedKernel {
    num_items: usize,
    rank: usize,
    v: Vec<f64>, // num_items x rank, row-major
}

impl PretrainedKernel {
    pub fn num_items(&self) -> usize {
        self.num_items
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn row(&self, item: ItemId) -> &[f64] {
        let i = item as usize;
        &self.v[i * self.rank..(i + 1) * self.rank]
    }

    pub fn entry(&self, i: ItemId, j: ItemId) -> Result<f64, DiversityError> {
        if i as usize >= self.num_items {
            return Err(DiversityError::UnknownItem(i));
        }
        if j as usize >= self.num_items {
            return Err(DiversityError::UnknownItem(j));
        }
        Ok(self
            .row(i)
            .iter()
            .zip(self.row(j))
            .map(|(a, b)| a * b)
            .sum())
    }

    fn factor(&self) -> &[f64] {
        &self.v
    }

    /// Rescale every factor row to unit length so self-similarity is 1
    /// and entries become pure angular similarities in [-1, 1].
    ///
    /// Raw ascent on the set-pair objective inflates the row norms of
    /// frequently observed items and shrinks sampled negatives, which
    /// would leak a popularity signal into the diversity kernel.
    pub fn normalize_rows(&mut self) {
        for row in self.v.chunks_exact_mut(self.rank) {
            let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-12 {
                row.iter_mut().for_each(|x| *x /= norm);
            }
        }
    }
}

/// The diversity kernel in either mode. Pretrained kernels contribute
/// no gradients during ranking optimization; the Gaussian kernel is
/// live and does.
#[derive(Debug, Clone)]
pub enum DiversityKernel {
    Pretrained(PretrainedKernel),
    Gaussian { sigma: f64 },
}

impl DiversityKernel {
    /// Kernel entry for a pair of items. Gaussian mode reads the live
    /// item embeddings; pretrained mode ignores them.
    pub fn entry(
        &self,
        i: ItemId,
        j: ItemId,
        embeddings: &EmbeddingTable,
    ) -> Result<f64, DiversityError> {
        match self {
            DiversityKernel::Pretrained(k) => k.entry(i, j),
            DiversityKernel::Gaussian { sigma } => {
                if i as usize >= embeddings.num_items() {
                    return Err(DiversityError::UnknownItem(i));
                }
                if j as usize >= embeddings.num_items() {
                    return Err(DiversityError::UnknownItem(j));
                }
                Ok(gaussian_entry(
                    embeddings.item_vec(i),
                    embeddings.item_vec(j),
                    *sigma,
                ))
            }
        }
    }

    pub fn is_frozen(&self) -> bool {
        matches!(self, DiversityKernel::Pretrained(_))
    }

    /// Identity kernel (V = I). Mostly useful in tests and as the
    /// degenerate no-diversity baseline.
    pub fn identity(num_items: usize) -> Self {
        let mut v = vec![0.0; num_items * num_items];
        for i in 0..num_items {
            v[i * num_items + i] = 1.0;
        }
        DiversityKernel::Pretrained(PretrainedKernel {
            num_items,
            rank: num_items,
            v,
        })
    }
}

/// `exp(-|vi - vj|^2 / (2 sigma^2))`: symmetric, unit diagonal, in
/// (0, 1] for distinct vectors.
pub fn gaussian_entry(vi: &[f64], vj: &[f64], sigma: f64) -> f64 {
    let sq: f64 = vi.iter().zip(vj).map(|(a, b)| (a - b) * (a - b)).sum();
    (-sq / (2.0 * sigma * sigma)).exp()
}

/// Median pairwise distance over a 1000-pair sample of item embeddings,
/// used as the Gaussian bandwidth. Falls back to 1 when the sample
/// collapses to zero distance.
pub fn median_pairwise_sigma(embeddings: &EmbeddingTable, seed: u64) -> f64 {
    let m = embeddings.num_items();
    if m < 2 {
        return 1.0;
    }
    let mut rng = derive_rng(seed, &[salt::SIGMA_SAMPLE]);
    let mut dists: Vec<f64> = (0..1000)
        .map(|_| {
            let i = rng.gen_range(0..m) as ItemId;
            let j = rng.gen_range(0..m) as ItemId;
            embeddings
                .item_vec(i)
                .iter()
                .zip(embeddings.item_vec(j))
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    dists.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = dists[dists.len() / 2];
    if median > 0.0 {
        median
    } else {
        1.0
    }
}

/// Paired diverse/negative training sets for the kernel objective.
#[derive(Debug, Clone)]
pub struct DiversePairSet {
    pub pairs: Vec<(Vec<ItemId>, Vec<ItemId>)>,
    pub set_size: usize,
}

/// Default diversity requirement: a window must span strictly more than
/// half its length in distinct categories.
pub fn default_min_categories(set_size: usize) -> usize {
    set_size.div_ceil(2) + 1
}

/// Slide a window of `set_size` over each user's chronological train
/// history; windows spanning at least `min_categories` distinct
/// categories become observed diverse sets, each paired with an
/// equal-sized uniform sample of the user's unobserved items.
///
/// Users with histories shorter than the window are skipped silently.
pub fn build_diverse_training_pairs(
    data: &InteractionDataset,
    set_size: usize,
    min_categories: usize,
    seed: u64,
) -> Result<DiversePairSet, DiversityError> {
    if set_size < 2 {
        return Err(DiversityError::SetSizeTooSmall(set_size));
    }
    if min_categories > set_size {
        return Err(DiversityError::MinCategoriesTooLarge {
            min_categories,
            set_size,
        });
    }
    let mut pairs = Vec::new();
    for user in 0..data.num_users as u32 {
        let history: &[ItemId] = match data.splits() {
            Some(_) => data.train_items(user)?,
            None => data.positives(user),
        };
        if history.len() < set_size {
            continue;
        }
        let exclude: std::collections::HashSet<ItemId> =
            data.positives(user).iter().copied().collect();
        if data.num_items - exclude.len() < set_size {
            return Err(DiversityError::NegativePoolExhausted(user));
        }
        let mut rng = derive_rng(seed, &[salt::DIVERSITY_PAIRS, user as u64]);
        for window in history.windows(set_size) {
            let mut cats: Vec<u32> = window.iter().map(|&i| data.category(i)).collect();
            cats.sort_unstable();
            cats.dedup();
            if cats.len() < min_categories {
                continue;
            }
            let mut negative = Vec::with_capacity(set_size);
            let mut drawn = std::collections::HashSet::new();
            while negative.len() < set_size {
                let cand = rng.gen_range(0..data.num_items) as ItemId;
                if !exclude.contains(&cand) && drawn.insert(cand) {
                    negative.push(cand);
                }
            }
            pairs.push((window.to_vec(), negative));
        }
    }
    Ok(DiversePairSet { pairs, set_size })
}

/// `log det(V_T V_T^T + jitter I)` for the rows of `v` named by `items`.
fn logdet_gram(v: &[f64], rank: usize, items: &[ItemId]) -> f64 {
    let t = items.len();
    let mut gram = vec![0.0; t * t];
    for (a, &ia) in items.iter().enumerate() {
        for (b, &ib) in items.iter().enumerate().skip(a) {
            let dot: f64 = (0..rank)
                .map(|r| v[ia as usize * rank + r] * v[ib as usize * rank + r])
                .sum();
            let val = if a == b { dot + DIVERSITY_JITTER } else { dot };
            gram[a * t + b] = val;
            gram[b * t + a] = val;
        }
    }
    match linalg::invert_with_logdet(&gram, t) {
        Ok((sign, log_abs, _)) if sign > 0.0 => log_abs,
        _ => f64::NEG_INFINITY,
    }
}

/// Objective value of one diverse/negative pair.
pub fn pair_objective(v: &[f64], rank: usize, pair: &(Vec<ItemId>, Vec<ItemId>)) -> f64 {
    logdet_gram(v, rank, &pair.0) - logdet_gram(v, rank, &pair.1)
}

/// Gradient of `log det(V_T V_T^T + jitter I)` with respect to the rows
/// of V named by `items`: `2 (K_T)^{-1} V_T`, row by row.
pub fn logdet_gram_gradient(
    v: &[f64],
    rank: usize,
    items: &[ItemId],
) -> Result<Vec<Vec<f64>>, DiversityError> {
    let t = items.len();
    let mut gram = vec![0.0; t * t];
    for (a, &ia) in items.iter().enumerate() {
        for (b, &ib) in items.iter().enumerate().skip(a) {
            let dot: f64 = (0..rank)
                .map(|r| v[ia as usize * rank + r] * v[ib as usize * rank + r])
                .sum();
            let val = if a == b { dot + DIVERSITY_JITTER } else { dot };
            gram[a * t + b] = val;
            gram[b * t + a] = val;
        }
    }
    let (_, _, inv) = linalg::invert_with_logdet(&gram, t)?;
    let mut grads = vec![vec![0.0; rank]; t];
    for a in 0..t {
        for b in 0..t {
            let w = 2.0 * inv[a * t + b];
            let row_b = items[b] as usize * rank;
            for r in 0..rank {
                grads[a][r] += w * v[row_b + r];
            }
        }
    }
    Ok(grads)
}

/// Train the low-rank diversity factor by stochastic ascent on
/// `log det(K_{T+}) - log det(K_{T-})` over the pair set. Returns the
/// frozen kernel.
pub fn train_diversity_kernel(
    pairs: &DiversePairSet,
    num_items: usize,
    rank: usize,
    epochs: usize,
    learning_rate: f64,
    seed: u64,
) -> Result<PretrainedKernel, DiversityError> {
    if rank < pairs.set_size {
        return Err(DiversityError::RankTooSmall {
            rank,
            set_size: pairs.set_size,
        });
    }
    // Uniform init on [-0.5/sqrt(r), 0.5/sqrt(r)] keeps the initial
    // minors well conditioned.
    let mut rng = derive_rng(seed, &[salt::DIVERSITY_INIT]);
    let half = 0.5 / (rank as f64).sqrt();
    let mut v: Vec<f64> = (0..num_items * rank)
        .map(|_| rng.gen_range(-half..half))
        .collect();

    let mut order: Vec<usize> = (0..pairs.pairs.len()).collect();
    for epoch in 0..epochs {
        let mut epoch_rng = derive_rng(seed, &[salt::DIVERSITY_EPOCH, epoch as u64]);
        order.shuffle(&mut epoch_rng);
        for (step, &pair_idx) in order.iter().enumerate() {
            let (plus, minus) = &pairs.pairs[pair_idx];
            let objective = pair_objective(&v, rank, &(plus.clone(), minus.clone()));
            if !objective.is_finite() {
                return Err(DiversityError::NonFiniteObjective {
                    epoch,
                    pair: step,
                });
            }
            let plus_grads = logdet_gram_gradient(&v, rank, plus)?;
            let minus_grads = logdet_gram_gradient(&v, rank, minus)?;
            for (a, &item) in plus.iter().enumerate() {
                let row = item as usize * rank;
                let clip = row_clip(&plus_grads[a]);
                for r in 0..rank {
                    v[row + r] += learning_rate * clip * plus_grads[a][r];
                }
            }
            for (a, &item) in minus.iter().enumerate() {
                let row = item as usize * rank;
                let clip = row_clip(&minus_grads[a]);
                for r in 0..rank {
                    v[row + r] -= learning_rate * clip * minus_grads[a][r];
                }
            }
        }
    }
    Ok(PretrainedKernel {
        num_items,
        rank,
        v,
    })
}

fn row_clip(grad: &[f64]) -> f64 {
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > GRAD_ROW_CLIP {
        GRAD_ROW_CLIP / norm
    } else {
        1.0
    }
}

/// Total objective over a pair set, for monotonicity checks.
pub fn diversity_objective(kernel: &PretrainedKernel, pairs: &DiversePairSet) -> f64 {
    pairs
        .pairs
        .iter()
        .map(|p| pair_objective(kernel.factor(), kernel.rank, p))
        .sum()
}

const KERNEL_MAGIC: &str = "lkp-divkernel v1";

/// Checkpoint layout: `lkp-divkernel v1 <num_items> <rank>\n` followed
/// by the row-major factor as little-endian f64.
pub fn save_kernel(path: &Path, kernel: &PretrainedKernel) -> Result<(), DiversityError> {
    let io_err = |source: std::io::Error| DiversityError::Io {
        path: path.display().to_string(),
        source,
    };
    let file = File::create(path).map_err(io_err)?;
    let mut w = BufWriter::new(file);
    writeln!(w, "{KERNEL_MAGIC} {} {}", kernel.num_items, kernel.rank).map_err(io_err)?;
    for value in kernel.factor() {
        w.write_all(&value.to_le_bytes()).map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

pub fn load_kernel(path: &Path) -> Result<PretrainedKernel, DiversityError> {
    let io_err = |source: std::io::Error| DiversityError::Io {
        path: path.display().to_string(),
        source,
    };
    let bad = |message: &str| DiversityError::BadCheckpoint {
        path: path.display().to_string(),
        message: message.to_string(),
    };
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(io_err)?;
    let newline = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| bad("missing header line"))?;
    let header = std::str::from_utf8(&bytes[..newline]).map_err(|_| bad("non-utf8 header"))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 4 || fields[0] != "lkp-divkernel" || fields[1] != "v1" {
        return Err(bad("unrecognized header"));
    }
    let num_items: usize = fields[2].parse().map_err(|_| bad("bad item count"))?;
    let rank: usize = fields[3].parse().map_err(|_| bad("bad rank"))?;
    let body = &bytes[newline + 1..];
    if body.len() != num_items * rank * 8 {
        return Err(bad("payload size mismatch"));
    }
    let v: Vec<f64> = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(PretrainedKernel {
        num_items,
        rank,
        v,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::make_synthetic;
    use crate::data::DEFAULT_SPLIT;
    use crate::linalg::{eigenvalues_sym, SmallSymMatrix};

    fn training_pairs() -> (InteractionDataset, DiversePairSet) {
        let data = make_synthetic(120, 450, 8, 17)
            .split(DEFAULT_SPLIT, 1)
            .unwrap();
        let pairs = build_diverse_training_pairs(&data, 4, 3, 5).unwrap();
        (data, pairs)
    }

    #[test]
    fn gaussian_entry_basics() {
        assert_eq!(gaussian_entry(&[1.0, 2.0], &[1.0, 2.0], 0.7), 1.0);
        let sigma = 1.3f64;
        let v = sigma * std::f64::consts::SQRT_2;
        let e = gaussian_entry(&[0.0], &[v], sigma);
        assert!((e - (-1.0f64).exp()).abs() < 1e-12);
        let a = [0.3, -0.2, 1.0];
        let b = [-0.5, 0.9, 0.1];
        assert_eq!(gaussian_entry(&a, &b, 0.9), gaussian_entry(&b, &a, 0.9));
    }

    #[test]
    fn one_category_histories_yield_no_pairs() {
        // All items in one category: the coverage filter removes every
        // window.
        let data = make_synthetic(100, 400, 1, 3);
        let pairs = build_diverse_training_pairs(&data, 3, 3, 1).unwrap();
        assert!(pairs.pairs.is_empty());
    }

    #[test]
    fn qualifying_windows_are_counted_exactly() {
        let (data, pairs) = training_pairs();
        // Independent recount of qualifying windows.
        let mut expected = 0;
        for user in 0..data.num_users as u32 {
            let history = data.train_items(user).unwrap();
            if history.len() < 4 {
                continue;
            }
            for w in history.windows(4) {
                let mut cats: Vec<u32> = w.iter().map(|&i| data.category(i)).collect();
                cats.sort_unstable();
                cats.dedup();
                if cats.len() >= 3 {
                    expected += 1;
                }
            }
        }
        assert_eq!(pairs.pairs.len(), expected);
        assert!(expected > 0);
        for (plus, minus) in &pairs.pairs {
            assert_eq!(plus.len(), 4);
            assert_eq!(minus.len(), 4);
        }
    }

    #[test]
    fn negatives_avoid_observed_items() {
        let (data, pairs) = training_pairs();
        // Rebuild per-user positives to check the T- side. Pairs are
        // generated user by user in order, so walk them the same way.
        let mut idx = 0;
        for user in 0..data.num_users as u32 {
            let history = data.train_items(user).unwrap();
            if history.len() < 4 {
                continue;
            }
            let qualifying = history
                .windows(4)
                .filter(|w| {
                    let mut cats: Vec<u32> = w.iter().map(|&i| data.category(i)).collect();
                    cats.sort_unstable();
                    cats.dedup();
                    cats.len() >= 3
                })
                .count();
            let observed: std::collections::HashSet<ItemId> =
                data.positives(user).iter().copied().collect();
            for _ in 0..qualifying {
                let (_, minus) = &pairs.pairs[idx];
                assert!(minus.iter().all(|i| !observed.contains(i)));
                idx += 1;
            }
        }
        assert_eq!(idx, pairs.pairs.len());
    }

    #[test]
    fn zero_pairs_leave_init_unchanged() {
        let empty = DiversePairSet {
            pairs: vec![],
            set_size: 4,
        };
        let a = train_diversity_kernel(&empty, 20, 8, 3, 1e-2, 9).unwrap();
        let b = train_diversity_kernel(&empty, 20, 8, 0, 1e-2, 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rank_below_set_size_is_rejected() {
        let empty = DiversePairSet {
            pairs: vec![],
            set_size: 6,
        };
        assert!(matches!(
            train_diversity_kernel(&empty, 20, 4, 1, 1e-2, 9),
            Err(DiversityError::RankTooSmall { .. })
        ));
    }

    #[test]
    fn single_pair_objective_increases() {
        let pair = (vec![0 as ItemId, 1, 2, 3], vec![4 as ItemId, 5, 6, 7]);
        let pairs = DiversePairSet {
            pairs: vec![pair.clone()],
            set_size: 4,
        };
        let mut objectives = Vec::new();
        for steps in 1..=10 {
            let kernel = train_diversity_kernel(&pairs, 10, 6, steps, 1e-2, 4).unwrap();
            objectives.push(pair_objective(kernel.factor(), 6, &pair));
        }
        for w in objectives.windows(2) {
            assert!(w[1] > w[0], "objective not increasing: {objectives:?}");
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let pair = (vec![0 as ItemId, 2, 5], vec![1 as ItemId, 3, 7]);
        let rank = 5;
        let num_items = 9;
        let mut rng = derive_rng(3, &[0xD1]);
        let v: Vec<f64> = (0..num_items * rank)
            .map(|_| rng.gen_range(-0.4..0.4))
            .collect();
        let grads_plus = logdet_gram_gradient(&v, rank, &pair.0).unwrap();
        let grads_minus = logdet_gram_gradient(&v, rank, &pair.1).unwrap();
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        for (side, grads) in [(&pair.0, grads_plus), (&pair.1, grads_minus)] {
            let sign = if std::ptr::eq(side, &pair.0) { 1.0 } else { -1.0 };
            for (a, &item) in side.iter().enumerate() {
                for r in 0..rank {
                    let mut vp = v.clone();
                    vp[item as usize * rank + r] += h;
                    let mut vm = v.clone();
                    vm[item as usize * rank + r] -= h;
                    let fd = (pair_objective(&vp, rank, &pair) - pair_objective(&vm, rank, &pair))
                        / (2.0 * h);
                    let analytic = sign * grads[a][r];
                    let rel = (analytic - fd).abs() / analytic.abs().max(fd.abs()).max(1e-4);
                    worst = worst.max(rel);
                }
            }
        }
        assert!(worst < 1e-4, "worst relative error {worst}");
    }

    #[test]
    fn normalize_rows_gives_unit_self_similarity() {
        let pairs = DiversePairSet {
            pairs: vec![(vec![0, 1, 2], vec![3, 4, 5])],
            set_size: 3,
        };
        let mut kernel = train_diversity_kernel(&pairs, 8, 4, 3, 1e-2, 6).unwrap();
        kernel.normalize_rows();
        for i in 0..8u32 {
            assert!((kernel.entry(i, i).unwrap() - 1.0).abs() < 1e-12);
            for j in 0..8u32 {
                assert!(kernel.entry(i, j).unwrap().abs() <= 1.0 + 1e-12);
            }
        }
    }

    #[test]
    fn trained_kernel_prefers_diverse_sets() {
        let (data, pairs) = training_pairs();
        let mut kernel =
            train_diversity_kernel(&pairs, data.num_items, 16, 2, 1e-2, 21).unwrap();
        kernel.normalize_rows();
        // Held-out style check: category-diverse windows score higher
        // mean log det than single-category sets of the same size.
        let mut diverse = Vec::new();
        let mut monotone = Vec::new();
        for user in 0..data.num_users as u32 {
            let history = data.positives(user);
            for w in history.windows(4) {
                let mut cats: Vec<u32> = w.iter().map(|&i| data.category(i)).collect();
                cats.sort_unstable();
                cats.dedup();
                let score = logdet_gram(kernel.factor(), kernel.rank(), w);
                if cats.len() >= 3 {
                    diverse.push(score);
                } else if cats.len() == 1 {
                    monotone.push(score);
                }
            }
        }
        assert!(diverse.len() > 10 && monotone.len() > 10);
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        assert!(
            mean(&diverse) > mean(&monotone),
            "diverse {} vs monotone {}",
            mean(&diverse),
            mean(&monotone)
        );
    }

    #[test]
    fn pretrained_kernel_is_psd_on_submatrices() {
        let (data, pairs) = training_pairs();
        let kernel = train_diversity_kernel(&pairs, data.num_items, 12, 1, 1e-2, 8).unwrap();
        let mut rng = derive_rng(5, &[0xF00]);
        for _ in 0..20 {
            let mut items: Vec<ItemId> = (0..data.num_items as ItemId).collect();
            items.shuffle(&mut rng);
            items.truncate(6);
            let sub = SmallSymMatrix::from_fn(6, |a, b| {
                kernel.entry(items[a], items[b]).unwrap()
            })
            .unwrap();
            let eigs = eigenvalues_sym(&sub).unwrap();
            assert!(eigs.iter().all(|&l| l >= -1e-9), "eigs {eigs:?}");
        }
    }

    #[test]
    fn kernel_checkpoint_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let pairs = DiversePairSet {
            pairs: vec![(vec![0, 1, 2], vec![3, 4, 5])],
            set_size: 3,
        };
        let kernel = train_diversity_kernel(&pairs, 8, 4, 2, 1e-2, 6).unwrap();
        let path = dir.path().join("kernel.bin");
        save_kernel(&path, &kernel).unwrap();
        let loaded = load_kernel(&path).unwrap();
        assert_eq!(kernel, loaded);
    }

    #[test]
    fn median_sigma_is_positive() {
        let emb = EmbeddingTable::init(3, 50, 8, 11);
        let sigma = median_pairwise_sigma(&emb, 2);
        assert!(sigma > 0.0);
        let zero = EmbeddingTable::zeros(3, 50, 8);
        assert_eq!(median_pairwise_sigma(&zero, 2), 1.0);
    }
}
