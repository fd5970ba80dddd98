//! Losses and analytic gradients: the two set-probability objectives
//! plus the pairwise and pointwise baselines.
//!
//! The set objectives differentiate `log P^k(S) = log det(L_S) - log Z_k`
//! through the kernel entries. The target term contributes
//! `tr(L_S^{-1} dL_S)` and the normalizer contributes the
//! probability-weighted sum of the same trace over every k-subset of
//! the ground set, enumerated explicitly. Folding the subset inverses
//! into one adjoint matrix first keeps the per-parameter work linear.

use thiserror::Error;

use crate::diversity::DiversityKernel;
use crate::dpp::{self, DppError, GroundSetInstance, ItemId, PersonalizedKernel, UserId};
use crate::linalg::{spd_inverse_logdet_into, LinalgError};
use crate::model::EmbeddingTable;

/// Enumerated gradients are exact but cost C(k+n, k) subset solves, so
/// the ground set is capped.
pub const MAX_GRADIENT_GROUND: usize = 14;

/// Negative-subset probabilities are clamped below 1 by this margin
/// before entering `log(1 - p)`.
const NEG_PROB_CLAMP: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum ObjectiveError {
    #[error("ground set of {0} items exceeds the gradient enumeration cap {MAX_GRADIENT_GROUND}")]
    GroundSetTooLarge(usize),
    #[error("negative-subset objective requires n == k, got k={k} n={n}")]
    NegativeCountMismatch { k: usize, n: usize },
    #[error("subset determinant vanished after jitter")]
    SingularSubset,
    #[error("positive and negative item must differ")]
    IdenticalPair,
    #[error(transparent)]
    Dpp(#[from] DppError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Loss plus sparse gradients for one training instance. The loss is
/// the negative log-objective, so the optimizer minimizes it; gradients
/// are gradients of that loss.
#[derive(Debug, Clone)]
pub struct GradientBundle {
    pub loss: f64,
    pub user_grads: Vec<(UserId, Vec<f64>)>,
    pub item_grads: Vec<(ItemId, Vec<f64>)>,
}

/// Everything the set objectives share: the normalizer, the
/// probability-weighted sum of scattered subset inverses, and the
/// scattered inverse plus log-determinant of the target (and, on
/// request, all-negative) subset.
struct SubsetMachinery {
    log_z: f64,
    weighted_inv: Vec<f64>,
    target_logdet: f64,
    target_inv: Vec<f64>,
    negative_logdet: f64,
    negative_inv: Vec<f64>,
}

fn subset_machinery(
    kernel: &PersonalizedKernel,
    want_negative: bool,
) -> Result<SubsetMachinery, ObjectiveError> {
    let gs = kernel.order();
    if gs > MAX_GRADIENT_GROUND {
        return Err(ObjectiveError::GroundSetTooLarge(gs));
    }
    let k = kernel.k();
    let log_z = dpp::log_normalizer_of(kernel).map_err(objective_from_dpp)?;

    let mut weighted_inv = vec![0.0; gs * gs];
    let mut target_logdet = f64::NEG_INFINITY;
    let mut target_inv = Vec::new();
    let mut negative_logdet = f64::NEG_INFINITY;
    let mut negative_inv = Vec::new();

    // The target subset is the lexicographically first combination and
    // the all-negative subset (when n == k) is the last; both are
    // recognized by position in the iteration.
    let entries = kernel.matrix().entries();
    let mut subset: Vec<usize> = (0..k).collect();
    let mut work = vec![0.0; k * k];
    let mut inv = vec![0.0; k * k];
    let mut first = true;
    loop {
        // Cholesky only reads the lower triangle.
        for (a, &i) in subset.iter().enumerate() {
            let row = i * gs;
            for (b, &j) in subset.iter().enumerate().take(a + 1) {
                work[a * k + b] = entries[row + j];
            }
        }
        let Some(logdet) = spd_inverse_logdet_into(&mut work, &mut inv, k) else {
            return Err(ObjectiveError::SingularSubset);
        };
        let weight = (logdet - log_z).exp();
        // Accumulate the upper triangle; mirrored once after the loop.
        for (a, &i) in subset.iter().enumerate() {
            let row = i * gs;
            for (b, &j) in subset.iter().enumerate().skip(a) {
                weighted_inv[row + j] += weight * inv[a * k + b];
            }
        }
        if first {
            first = false;
            target_logdet = logdet;
            target_inv = scatter(&inv, &subset, gs);
        }
        if !dpp::advance_combination(&mut subset, gs) {
            if want_negative {
                negative_logdet = logdet;
                negative_inv = scatter(&inv, &subset, gs);
            }
            break;
        }
    }
    for i in 0..gs {
        for j in (i + 1)..gs {
            weighted_inv[j * gs + i] = weighted_inv[i * gs + j];
        }
    }
    Ok(SubsetMachinery {
        log_z,
        weighted_inv,
        target_logdet,
        target_inv,
        negative_logdet,
        negative_inv,
    })
}

fn objective_from_dpp(e: DppError) -> ObjectiveError {
    match e {
        DppError::NonPositiveNormalizer(_) => ObjectiveError::SingularSubset,
        other => ObjectiveError::Dpp(other),
    }
}

fn scatter(inv: &[f64], subset: &[usize], gs: usize) -> Vec<f64> {
    let k = subset.len();
    let mut out = vec![0.0; gs * gs];
    for (a, &i) in subset.iter().enumerate() {
        for (b, &j) in subset.iter().enumerate() {
            out[i * gs + j] = inv[a * k + b];
        }
    }
    out
}

/// Turn an adjoint matrix `A` (the derivative of the loss with respect
/// to kernel entries, `dLoss/dL_ab`) into user and item gradients.
///
/// The quality route uses `dL_ab/d e_u = L_ab (e_a + e_b)` and
/// `dL_ab/d e_i = L_ab e_u [a==i or b==i]` (entries where the dot
/// product clamped contribute nothing). The Gaussian kernel adds its
/// own route through the item embeddings.
fn assemble_gradients(
    kernel: &PersonalizedKernel,
    embeddings: &EmbeddingTable,
    diversity: &DiversityKernel,
    adjoint: &[f64],
) -> GradientBundle {
    let gs = kernel.order();
    let dim = embeddings.dim();
    let instance = kernel.instance();
    let items: Vec<ItemId> = instance.ground_items().collect();
    let user = instance.user();

    // W_ab = A_ab * L_ab (jitter excluded), row sums s_a.
    let mut w = vec![0.0; gs * gs];
    let mut row_sum = vec![0.0; gs];
    for a in 0..gs {
        for b in 0..gs {
            let v = adjoint[a * gs + b] * kernel.unjittered(a, b);
            w[a * gs + b] = v;
            row_sum[a] += v;
        }
    }

    let mut user_grad = vec![0.0; dim];
    for a in 0..gs {
        if kernel.clamp_active()[a] {
            continue;
        }
        let coeff = 2.0 * row_sum[a];
        let item_vec = embeddings.item_vec(items[a]);
        for d in 0..dim {
            user_grad[d] += coeff * item_vec[d];
        }
    }

    let user_vec = embeddings.user_vec(user);
    let mut item_grads: Vec<(ItemId, Vec<f64>)> = Vec::with_capacity(gs);
    for a in 0..gs {
        let mut grad = vec![0.0; dim];
        if !kernel.clamp_active()[a] {
            let coeff = 2.0 * row_sum[a];
            for d in 0..dim {
                grad[d] = coeff * user_vec[d];
            }
        }
        if let DiversityKernel::Gaussian { sigma } = diversity {
            // d K_ab / d v_a = -K_ab (v_a - v_b) / sigma^2, summed with
            // the W weights: -(2/sigma^2) (s_a v_a - sum_b W_ab v_b).
            let inv_sq = 1.0 / (sigma * sigma);
            let va = embeddings.item_vec(items[a]);
            let mut t = vec![0.0; dim];
            for b in 0..gs {
                let wab = w[a * gs + b];
                if wab == 0.0 {
                    continue;
                }
                let vb = embeddings.item_vec(items[b]);
                for d in 0..dim {
                    t[d] += wab * vb[d];
                }
            }
            for d in 0..dim {
                grad[d] -= 2.0 * inv_sq * (row_sum[a] * va[d] - t[d]);
            }
        }
        item_grads.push((items[a], grad));
    }

    GradientBundle {
        loss: 0.0,
        user_grads: vec![(user, user_grad)],
        item_grads,
    }
}

/// Loss `-log P^k(target subset)` with gradients through both the
/// target determinant and the normalizer.
pub fn lkp_ps(
    instance: &GroundSetInstance,
    embeddings: &EmbeddingTable,
    kernel: &DiversityKernel,
) -> Result<GradientBundle, ObjectiveError> {
    let pk = dpp::build_personalized_kernel(instance, embeddings, kernel)?;
    let parts = subset_machinery(&pk, false)?;
    if !parts.target_logdet.is_finite() {
        return Err(ObjectiveError::SingularSubset);
    }
    let gs = pk.order();
    let loss = -(parts.target_logdet - parts.log_z);
    // dLoss/dL = -(target_inv - weighted_inv).
    let adjoint: Vec<f64> = (0..gs * gs)
        .map(|i| parts.weighted_inv[i] - parts.target_inv[i])
        .collect();
    let mut bundle = assemble_gradients(&pk, embeddings, kernel, &adjoint);
    bundle.loss = loss;
    Ok(bundle)
}

/// Loss `-[log P^k(target) + log(1 - P^k(all-negative))]`. Requires
/// n == k so the all-negative subset is unique.
pub fn lkp_nps(
    instance: &GroundSetInstance,
    embeddings: &EmbeddingTable,
    kernel: &DiversityKernel,
) -> Result<GradientBundle, ObjectiveError> {
    if instance.n() != instance.k() {
        return Err(ObjectiveError::NegativeCountMismatch {
            k: instance.k(),
            n: instance.n(),
        });
    }
    let pk = dpp::build_personalized_kernel(instance, embeddings, kernel)?;
    let parts = subset_machinery(&pk, true)?;
    if !parts.target_logdet.is_finite() || !parts.negative_logdet.is_finite() {
        return Err(ObjectiveError::SingularSubset);
    }
    let gs = pk.order();
    let log_p_neg = parts.negative_logdet - parts.log_z;
    let p_neg = log_p_neg.exp().min(1.0 - NEG_PROB_CLAMP);
    let loss = -(parts.target_logdet - parts.log_z) - (1.0 - p_neg).ln();
    // dLoss/dL = -(target_inv - weighted_inv)
    //          + p/(1-p) * (negative_inv - weighted_inv).
    let chain = p_neg / (1.0 - p_neg);
    let adjoint: Vec<f64> = (0..gs * gs)
        .map(|i| {
            (parts.weighted_inv[i] - parts.target_inv[i])
                + chain * (parts.negative_inv[i] - parts.weighted_inv[i])
        })
        .collect();
    let mut bundle = assemble_gradients(&pk, embeddings, kernel, &adjoint);
    bundle.loss = loss;
    Ok(bundle)
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `ln(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Pairwise ranking loss `-log sigmoid(score_pos - score_neg)`.
pub fn bpr(
    user: UserId,
    pos: ItemId,
    neg: ItemId,
    embeddings: &EmbeddingTable,
) -> Result<GradientBundle, ObjectiveError> {
    if pos == neg {
        return Err(ObjectiveError::IdenticalPair);
    }
    let dim = embeddings.dim();
    let x = embeddings.score(user, pos) - embeddings.score(user, neg);
    let loss = softplus(-x);
    let coeff = sigmoid(x) - 1.0; // dLoss/dx
    let user_vec = embeddings.user_vec(user);
    let pos_vec = embeddings.item_vec(pos);
    let neg_vec = embeddings.item_vec(neg);
    let mut user_grad = vec![0.0; dim];
    let mut pos_grad = vec![0.0; dim];
    let mut neg_grad = vec![0.0; dim];
    for d in 0..dim {
        user_grad[d] = coeff * (pos_vec[d] - neg_vec[d]);
        pos_grad[d] = coeff * user_vec[d];
        neg_grad[d] = -coeff * user_vec[d];
    }
    Ok(GradientBundle {
        loss,
        user_grads: vec![(user, user_grad)],
        item_grads: vec![(pos, pos_grad), (neg, neg_grad)],
    })
}

/// Pointwise binary cross-entropy on the sigmoid of the dot product.
pub fn bce(
    user: UserId,
    item: ItemId,
    label: bool,
    embeddings: &EmbeddingTable,
) -> Result<GradientBundle, ObjectiveError> {
    let dim = embeddings.dim();
    let score = embeddings.score(user, item);
    let y = if label { 1.0 } else { 0.0 };
    let loss = softplus(score) - y * score;
    let coeff = sigmoid(score) - y; // dLoss/dscore
    let user_vec = embeddings.user_vec(user);
    let item_vec = embeddings.item_vec(item);
    let mut user_grad = vec![0.0; dim];
    let mut item_grad = vec![0.0; dim];
    for d in 0..dim {
        user_grad[d] = coeff * item_vec[d];
        item_grad[d] = coeff * user_vec[d];
    }
    Ok(GradientBundle {
        loss,
        user_grads: vec![(user, user_grad)],
        item_grads: vec![(item, item_grad)],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diversity::{train_diversity_kernel, DiversePairSet};
    use crate::model::{adam_step, AdamHyper, AdamState, GradAccumulator};
    use crate::rng::{derive_rng, standard_normal};

    fn instance(k: usize, n: usize) -> GroundSetInstance {
        let targets: Vec<ItemId> = (0..k as ItemId).collect();
        let negatives: Vec<ItemId> = (k as ItemId..(k + n) as ItemId).collect();
        GroundSetInstance::new(0, targets, negatives).unwrap()
    }

    fn random_embeddings(num_items: usize, dim: usize, seed: u64, scale: f64) -> EmbeddingTable {
        let mut table = EmbeddingTable::zeros(2, num_items, dim);
        let mut rng = derive_rng(seed, &[0xEE]);
        for u in 0..2 {
            for d in 0..dim {
                table.user_vec_mut(u)[d] = scale * standard_normal(&mut rng);
            }
        }
        for it in 0..num_items as ItemId {
            for d in 0..dim {
                table.item_vec_mut(it)[d] = scale * standard_normal(&mut rng);
            }
        }
        table
    }

    fn pretrained_kernel(num_items: usize, rank: usize, seed: u64) -> DiversityKernel {
        let pairs = DiversePairSet {
            pairs: vec![],
            set_size: 2,
        };
        DiversityKernel::Pretrained(
            train_diversity_kernel(&pairs, num_items, rank, 0, 1e-2, seed).unwrap(),
        )
    }

    /// Max relative error between analytic and central-difference
    /// gradients over every user coordinate and every ground item
    /// coordinate.
    fn finite_difference_check<F>(
        loss_fn: F,
        bundle: &GradientBundle,
        embeddings: &EmbeddingTable,
        instance_items: &[ItemId],
        user: UserId,
    ) -> f64
    where
        F: Fn(&EmbeddingTable) -> f64,
    {
        let h = 1e-5;
        let dim = embeddings.dim();
        let rel = |analytic: f64, fd: f64| -> f64 {
            (analytic - fd).abs() / analytic.abs().max(fd.abs()).max(1e-4)
        };
        let mut worst: f64 = 0.0;
        let user_grad = &bundle.user_grads[0].1;
        for d in 0..dim {
            let mut plus = embeddings.clone();
            plus.user_vec_mut(user)[d] += h;
            let mut minus = embeddings.clone();
            minus.user_vec_mut(user)[d] -= h;
            let fd = (loss_fn(&plus) - loss_fn(&minus)) / (2.0 * h);
            worst = worst.max(rel(user_grad[d], fd));
        }
        for &item in instance_items {
            let analytic: Vec<f64> = {
                // An item may appear once in item_grads per instance.
                let mut sum = vec![0.0; dim];
                for (it, g) in &bundle.item_grads {
                    if *it == item {
                        for d in 0..dim {
                            sum[d] += g[d];
                        }
                    }
                }
                sum
            };
            for d in 0..dim {
                let mut plus = embeddings.clone();
                plus.item_vec_mut(item)[d] += h;
                let mut minus = embeddings.clone();
                minus.item_vec_mut(item)[d] -= h;
                let fd = (loss_fn(&plus) - loss_fn(&minus)) / (2.0 * h);
                worst = worst.max(rel(analytic[d], fd));
            }
        }
        worst
    }

    #[test]
    fn ps_uniform_loss_is_log_252() {
        let inst = instance(5, 5);
        let emb = EmbeddingTable::zeros(1, 10, 4);
        let kernel = DiversityKernel::identity(10);
        let bundle = lkp_ps(&inst, &emb, &kernel).unwrap();
        assert!(
            (bundle.loss - 252.0f64.ln()).abs() < 1e-6,
            "loss {}",
            bundle.loss
        );
    }

    #[test]
    fn nps_uniform_loss_matches_arithmetic() {
        let inst = instance(5, 5);
        let emb = EmbeddingTable::zeros(1, 10, 4);
        let kernel = DiversityKernel::identity(10);
        let bundle = lkp_nps(&inst, &emb, &kernel).unwrap();
        let expect = 252.0f64.ln() - (251.0f64 / 252.0).ln();
        assert!((bundle.loss - expect).abs() < 1e-6, "loss {}", bundle.loss);
        assert!((expect - 5.5334).abs() < 1e-3);
    }

    #[test]
    fn nps_rejects_mismatched_n() {
        let inst = instance(3, 2);
        let emb = EmbeddingTable::zeros(1, 5, 4);
        let kernel = DiversityKernel::identity(5);
        assert!(matches!(
            lkp_nps(&inst, &emb, &kernel),
            Err(ObjectiveError::NegativeCountMismatch { k: 3, n: 2 })
        ));
    }

    #[test]
    fn ps_gradients_match_finite_differences_pretrained() {
        for seed in 0..4 {
            let inst = instance(3, 4);
            let emb = random_embeddings(7, 6, seed, 0.3);
            let kernel = pretrained_kernel(7, 5, seed + 50);
            let bundle = lkp_ps(&inst, &emb, &kernel).unwrap();
            let items: Vec<ItemId> = inst.ground_items().collect();
            let worst = finite_difference_check(
                |table| lkp_ps(&inst, table, &kernel).unwrap().loss,
                &bundle,
                &emb,
                &items,
                0,
            );
            assert!(worst < 1e-4, "seed {seed}: max relative error {worst}");
        }
    }

    #[test]
    fn nps_gradients_match_finite_differences_pretrained() {
        for seed in 0..4 {
            let inst = instance(3, 3);
            let emb = random_embeddings(6, 6, seed + 10, 0.3);
            let kernel = pretrained_kernel(6, 5, seed + 60);
            let bundle = lkp_nps(&inst, &emb, &kernel).unwrap();
            let items: Vec<ItemId> = inst.ground_items().collect();
            let worst = finite_difference_check(
                |table| lkp_nps(&inst, table, &kernel).unwrap().loss,
                &bundle,
                &emb,
                &items,
                0,
            );
            assert!(worst < 1e-4, "seed {seed}: max relative error {worst}");
        }
    }

    #[test]
    fn ps_gradients_match_finite_differences_gaussian() {
        for seed in 0..4 {
            let inst = instance(3, 4);
            let emb = random_embeddings(7, 6, seed + 20, 0.3);
            let kernel = DiversityKernel::Gaussian { sigma: 0.8 };
            let bundle = lkp_ps(&inst, &emb, &kernel).unwrap();
            let items: Vec<ItemId> = inst.ground_items().collect();
            let worst = finite_difference_check(
                |table| lkp_ps(&inst, table, &kernel).unwrap().loss,
                &bundle,
                &emb,
                &items,
                0,
            );
            assert!(worst < 1e-4, "seed {seed}: max relative error {worst}");
        }
    }

    #[test]
    fn nps_gradients_match_finite_differences_gaussian() {
        for seed in 0..4 {
            let inst = instance(3, 3);
            let emb = random_embeddings(6, 6, seed + 30, 0.3);
            let kernel = DiversityKernel::Gaussian { sigma: 0.8 };
            let bundle = lkp_nps(&inst, &emb, &kernel).unwrap();
            let items: Vec<ItemId> = inst.ground_items().collect();
            let worst = finite_difference_check(
                |table| lkp_nps(&inst, table, &kernel).unwrap().loss,
                &bundle,
                &emb,
                &items,
                0,
            );
            assert!(worst < 1e-4, "seed {seed}: max relative error {worst}");
        }
    }

    #[test]
    fn bpr_known_values_and_gradients() {
        let emb = EmbeddingTable::zeros(1, 2, 3);
        let bundle = bpr(0, 0, 1, &emb).unwrap();
        assert!((bundle.loss - 2.0f64.ln()).abs() < 1e-12);

        let mut emb = EmbeddingTable::zeros(1, 2, 1);
        emb.user_vec_mut(0)[0] = 1.0;
        emb.item_vec_mut(0)[0] = 10.0;
        emb.item_vec_mut(1)[0] = 0.0;
        let bundle = bpr(0, 0, 1, &emb).unwrap();
        assert!((bundle.loss - 4.5398e-5).abs() < 1e-8, "loss {}", bundle.loss);

        let emb = random_embeddings(4, 5, 3, 0.5);
        let bundle = bpr(1, 0, 3, &emb).unwrap();
        let worst = finite_difference_check(
            |table| bpr(1, 0, 3, table).unwrap().loss,
            &bundle,
            &emb,
            &[0, 3],
            1,
        );
        assert!(worst < 1e-6, "max relative error {worst}");
    }

    #[test]
    fn bpr_rejects_identical_pair() {
        let emb = EmbeddingTable::zeros(1, 2, 2);
        assert!(matches!(bpr(0, 1, 1, &emb), Err(ObjectiveError::IdenticalPair)));
    }

    #[test]
    fn bce_known_values_and_gradients() {
        let emb = EmbeddingTable::zeros(1, 2, 3);
        assert!((bce(0, 0, true, &emb).unwrap().loss - 2.0f64.ln()).abs() < 1e-12);
        assert!((bce(0, 0, false, &emb).unwrap().loss - 2.0f64.ln()).abs() < 1e-12);

        let emb = random_embeddings(4, 5, 9, 0.5);
        for label in [true, false] {
            let bundle = bce(1, 2, label, &emb).unwrap();
            let worst = finite_difference_check(
                |table| bce(1, 2, label, table).unwrap().loss,
                &bundle,
                &emb,
                &[2],
                1,
            );
            assert!(worst < 1e-6, "label {label}: max relative error {worst}");
        }
    }

    #[test]
    fn ps_loss_invariant_under_negative_relabeling() {
        // Two negatives with identical embeddings are interchangeable.
        let mut emb = random_embeddings(8, 5, 77, 0.3);
        let v: Vec<f64> = emb.item_vec(5).to_vec();
        emb.item_vec_mut(6).copy_from_slice(&v);
        let kernel = DiversityKernel::Gaussian { sigma: 1.0 };
        let a = GroundSetInstance::new(0, vec![0, 1, 2], vec![5, 6, 7]).unwrap();
        let b = GroundSetInstance::new(0, vec![0, 1, 2], vec![6, 5, 7]).unwrap();
        let la = lkp_ps(&a, &emb, &kernel).unwrap().loss;
        let lb = lkp_ps(&b, &emb, &kernel).unwrap().loss;
        assert!((la - lb).abs() < 1e-10);
    }

    #[test]
    fn normalizer_gradient_consistent_with_esp_route() {
        // The enumeration gradient of log Z equals the finite difference
        // of log esp(k, eigenvalues) along any parameter direction. Use
        // the PS loss with the target term subtracted off.
        let inst = instance(3, 3);
        let emb = random_embeddings(6, 4, 5, 0.4);
        let kernel = pretrained_kernel(6, 4, 8);
        let log_z = |table: &EmbeddingTable| -> f64 {
            let pk = dpp::build_personalized_kernel(&inst, table, &kernel).unwrap();
            dpp::log_normalizer_of(&pk).unwrap()
        };
        // Analytic d log Z / d e_u = assemble(weighted_inv).
        let pk = dpp::build_personalized_kernel(&inst, &emb, &kernel).unwrap();
        let parts = subset_machinery(&pk, false).unwrap();
        let bundle = assemble_gradients(&pk, &emb, &kernel, &parts.weighted_inv);
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        for d in 0..emb.dim() {
            let mut plus = emb.clone();
            plus.user_vec_mut(0)[d] += h;
            let mut minus = emb.clone();
            minus.user_vec_mut(0)[d] -= h;
            let fd = (log_z(&plus) - log_z(&minus)) / (2.0 * h);
            let analytic = bundle.user_grads[0].1[d];
            let rel = (analytic - fd).abs() / analytic.abs().max(fd.abs()).max(1e-4);
            worst = worst.max(rel);
        }
        assert!(worst < 1e-4, "max relative error {worst}");
    }

    #[test]
    fn ps_ascent_increases_target_probability() {
        let inst = instance(3, 3);
        let mut emb = random_embeddings(6, 5, 11, 0.2);
        let kernel = pretrained_kernel(6, 4, 12);
        let prob = |table: &EmbeddingTable| -> f64 {
            let pk = dpp::build_personalized_kernel(&inst, table, &kernel).unwrap();
            dpp::kdpp_log_probability(&pk, &[0, 1, 2]).unwrap().exp()
        };
        let before = prob(&emb);
        let mut adam = AdamState::new(&emb);
        let hyper = AdamHyper {
            learning_rate: 1e-2,
            l2: 0.0,
            ..AdamHyper::default()
        };
        let mut last = before;
        for _ in 0..50 {
            let bundle = lkp_ps(&inst, &emb, &kernel).unwrap();
            let mut acc = GradAccumulator::new(emb.dim());
            acc.add(&bundle);
            adam_step(&mut emb, &mut adam, &hyper, &acc);
            let now = prob(&emb);
            assert!(now > last, "probability fell from {last} to {now}");
            last = now;
        }
        assert!(last > before);
    }

    #[test]
    fn nps_training_widens_target_negative_gap() {
        let inst = instance(3, 3);
        let mut emb = random_embeddings(6, 5, 13, 0.2);
        let kernel = pretrained_kernel(6, 4, 14);
        let probs = |table: &EmbeddingTable| -> (f64, f64) {
            let pk = dpp::build_personalized_kernel(&inst, table, &kernel).unwrap();
            (
                dpp::kdpp_log_probability(&pk, &[0, 1, 2]).unwrap().exp(),
                dpp::kdpp_log_probability(&pk, &[3, 4, 5]).unwrap().exp(),
            )
        };
        let mut adam = AdamState::new(&emb);
        let hyper = AdamHyper {
            learning_rate: 1e-2,
            l2: 0.0,
            ..AdamHyper::default()
        };
        for _ in 0..60 {
            let bundle = lkp_nps(&inst, &emb, &kernel).unwrap();
            let mut acc = GradAccumulator::new(emb.dim());
            acc.add(&bundle);
            adam_step(&mut emb, &mut adam, &hyper, &acc);
        }
        let (p_target, p_negative) = probs(&emb);
        assert!(
            p_target > p_negative,
            "target {p_target} not above negative {p_negative}"
        );
    }

    #[test]
    fn losses_are_finite_on_scheduled_instances() {
        use crate::data::{make_synthetic, DEFAULT_SPLIT};
        use crate::sampling::schedule_sequential;
        let data = make_synthetic(120, 450, 8, 5).split(DEFAULT_SPLIT, 1).unwrap();
        let emb = EmbeddingTable::init(data.num_users, data.num_items, 8, 3);
        let kernel = DiversityKernel::Gaussian { sigma: 1.0 };
        let schedule = schedule_sequential(&data, 4, 4, 9).unwrap();
        for inst in schedule.instances.iter().take(200) {
            let ps = lkp_ps(inst, &emb, &kernel).unwrap();
            let nps = lkp_nps(inst, &emb, &kernel).unwrap();
            assert!(ps.loss.is_finite() && nps.loss.is_finite());
            assert!(ps
                .user_grads
                .iter()
                .chain(&nps.user_grads)
                .all(|(_, g)| g.iter().all(|x| x.is_finite())));
        }
    }

    #[test]
    fn oversized_ground_set_is_rejected() {
        let inst = instance(8, 8);
        let emb = EmbeddingTable::zeros(1, 16, 2);
        let kernel = DiversityKernel::identity(16);
        assert!(matches!(
            lkp_ps(&inst, &emb, &kernel),
            Err(ObjectiveError::GroundSetTooLarge(16))
        ));
    }
}
