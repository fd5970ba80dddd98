//! Self-check oracle suite: the normalizer identity, distribution
//! normalization, and finite-difference gradient checks, bundled so the
//! CLI can run them on demand.

use rand::Rng;

use crate::diversity::{self, DiversityKernel};
use crate::dpp::{
    build_personalized_kernel, enumerate_k_subsets, kdpp_log_probability, GroundSetInstance,
    ItemId, PersonalizedKernel,
};
use crate::linalg::{det_principal_submatrix, eigenvalues_sym, esp};
use crate::model::EmbeddingTable;
use crate::objectives::{self, GradientBundle};
use crate::rng::{derive_rng, salt, standard_normal};

#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone)]
pub struct VerifyReport {
    pub checks: Vec<CheckResult>,
}

impl VerifyReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

fn random_embeddings(num_items: usize, dim: usize, seed: u64, scale: f64) -> EmbeddingTable {
    let mut table = EmbeddingTable::zeros(1, num_items, dim);
    let mut rng = derive_rng(seed, &[salt::VERIFY, 1]);
    for d in 0..dim {
        table.user_vec_mut(0)[d] = scale * standard_normal(&mut rng);
    }
    for item in 0..num_items as ItemId {
        for d in 0..dim {
            table.item_vec_mut(item)[d] = scale * standard_normal(&mut rng);
        }
    }
    table
}

fn random_kernel(k: usize, n: usize, seed: u64) -> PersonalizedKernel {
    let targets: Vec<ItemId> = (0..k as ItemId).collect();
    let negatives: Vec<ItemId> = (k as ItemId..(k + n) as ItemId).collect();
    let instance = GroundSetInstance::new(0, targets, negatives).unwrap();
    let embeddings = random_embeddings(k + n, 6, seed, 0.4);
    let kernel = DiversityKernel::Gaussian { sigma: 1.0 };
    build_personalized_kernel(&instance, &embeddings, &kernel).unwrap()
}

/// Normalizer identity: esp over eigenvalues equals the enumerated sum
/// of size-k principal minors, over `kernels` random kernels with
/// ground sizes 4..=12.
pub fn check_normalizer_oracle(kernels: usize, seed: u64) -> CheckResult {
    let mut rng = derive_rng(seed, &[salt::VERIFY, 2]);
    let mut worst: f64 = 0.0;
    for trial in 0..kernels {
        let ground = rng.gen_range(4..=12usize);
        let k = rng.gen_range(2..=(ground - 2).max(2)).min(ground - 1);
        let pk = random_kernel(k, ground - k, seed ^ (trial as u64) << 4);
        let eigs = eigenvalues_sym(pk.matrix()).unwrap();
        let via_esp = esp(k, &eigs).unwrap();
        let via_enum: f64 = enumerate_k_subsets(ground, k)
            .unwrap()
            .iter()
            .map(|s| det_principal_submatrix(pk.matrix(), s).unwrap())
            .sum();
        let rel = (via_esp - via_enum).abs() / via_enum.abs().max(1e-12);
        worst = worst.max(rel);
    }
    CheckResult {
        name: format!("normalizer oracle ({kernels} kernels)"),
        passed: worst < 1e-8,
        detail: format!("max relative error {worst:.3e}"),
    }
}

/// Subset probabilities over each random kernel sum to one, and the
/// uniform kernel yields exactly 1/252 per subset at k = n = 5.
pub fn check_normalization(kernels: usize, seed: u64) -> CheckResult {
    let mut worst: f64 = 0.0;
    for trial in 0..kernels {
        let pk = random_kernel(5, 5, seed ^ 0xAB00 ^ (trial as u64) << 3);
        let total: f64 = enumerate_k_subsets(10, 5)
            .unwrap()
            .iter()
            .map(|s| kdpp_log_probability(&pk, s).unwrap().exp())
            .sum();
        worst = worst.max((total - 1.0).abs());
    }
    // Uniform case.
    let targets: Vec<ItemId> = (0..5).collect();
    let negatives: Vec<ItemId> = (5..10).collect();
    let instance = GroundSetInstance::new(0, targets, negatives).unwrap();
    let embeddings = EmbeddingTable::zeros(1, 10, 4);
    let kernel = DiversityKernel::identity(10);
    let pk = build_personalized_kernel(&instance, &embeddings, &kernel).unwrap();
    let uniform_err = enumerate_k_subsets(10, 5)
        .unwrap()
        .iter()
        .map(|s| {
            let p = kdpp_log_probability(&pk, s).unwrap().exp();
            (p - 1.0 / 252.0).abs()
        })
        .fold(0.0f64, f64::max);
    let passed = worst < 1e-8 && uniform_err < 1e-9;
    CheckResult {
        name: format!("distribution normalization ({kernels} kernels)"),
        passed,
        detail: format!("max |sum - 1| {worst:.3e}, uniform deviation {uniform_err:.3e}"),
    }
}

fn fd_gradient_error<L>(
    loss: L,
    bundle: &GradientBundle,
    embeddings: &EmbeddingTable,
    items: &[ItemId],
) -> f64
where
    L: Fn(&EmbeddingTable) -> f64,
{
    let h = 1e-5;
    let dim = embeddings.dim();
    let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(1e-4);
    let mut worst: f64 = 0.0;
    for d in 0..dim {
        let mut plus = embeddings.clone();
        plus.user_vec_mut(0)[d] += h;
        let mut minus = embeddings.clone();
        minus.user_vec_mut(0)[d] -= h;
        let fd = (loss(&plus) - loss(&minus)) / (2.0 * h);
        worst = worst.max(rel(bundle.user_grads[0].1[d], fd));
    }
    for &item in items {
        let mut analytic = vec![0.0; dim];
        for (it, g) in &bundle.item_grads {
            if *it == item {
                for d in 0..dim {
                    analytic[d] += g[d];
                }
            }
        }
        for d in 0..dim {
            let mut plus = embeddings.clone();
            plus.item_vec_mut(item)[d] += h;
            let mut minus = embeddings.clone();
            minus.item_vec_mut(item)[d] -= h;
            let fd = (loss(&plus) - loss(&minus)) / (2.0 * h);
            worst = worst.max(rel(analytic[d], fd));
        }
    }
    worst
}

/// Finite-difference check of every objective over `instances` random
/// instances each: the set objectives in both kernel modes, the two
/// baselines, and the diversity-kernel objective.
pub fn check_gradients(instances: usize, seed: u64) -> CheckResult {
    let mut worst: f64 = 0.0;
    let mut detail = String::new();

    let pretrained = |num_items: usize, s: u64| -> DiversityKernel {
        let pairs = diversity::DiversePairSet {
            pairs: vec![],
            set_size: 2,
        };
        DiversityKernel::Pretrained(
            diversity::train_diversity_kernel(&pairs, num_items, 5, 0, 1e-2, s).unwrap(),
        )
    };

    for (name, gaussian, nps) in [
        ("lkp_ps/pretrained", false, false),
        ("lkp_ps/gaussian", true, false),
        ("lkp_nps/pretrained", false, true),
        ("lkp_nps/gaussian", true, true),
    ] {
        let mut objective_worst: f64 = 0.0;
        for trial in 0..instances {
            let s = seed ^ 0x90 ^ ((trial as u64) << 5);
            let (k, n) = if nps { (3, 3) } else { (3, 4) };
            let targets: Vec<ItemId> = (0..k as ItemId).collect();
            let negatives: Vec<ItemId> = (k as ItemId..(k + n) as ItemId).collect();
            let inst = GroundSetInstance::new(0, targets, negatives).unwrap();
            let emb = random_embeddings(k + n, 6, s, 0.3);
            let kernel = if gaussian {
                DiversityKernel::Gaussian { sigma: 0.9 }
            } else {
                pretrained(k + n, s)
            };
            let eval = |table: &EmbeddingTable| -> f64 {
                if nps {
                    objectives::lkp_nps(&inst, table, &kernel).unwrap().loss
                } else {
                    objectives::lkp_ps(&inst, table, &kernel).unwrap().loss
                }
            };
            let bundle = if nps {
                objectives::lkp_nps(&inst, &emb, &kernel).unwrap()
            } else {
                objectives::lkp_ps(&inst, &emb, &kernel).unwrap()
            };
            let items: Vec<ItemId> = inst.ground_items().collect();
            objective_worst = objective_worst.max(fd_gradient_error(eval, &bundle, &emb, &items));
        }
        detail.push_str(&format!("{name} {objective_worst:.2e}; "));
        worst = worst.max(objective_worst);
    }

    for (name, pairwise) in [("bpr", true), ("bce", false)] {
        let mut objective_worst: f64 = 0.0;
        for trial in 0..instances {
            let s = seed ^ 0xB0 ^ ((trial as u64) << 5);
            let emb = random_embeddings(4, 6, s, 0.4);
            if pairwise {
                let bundle = objectives::bpr(0, 0, 2, &emb).unwrap();
                objective_worst = objective_worst.max(fd_gradient_error(
                    |t| objectives::bpr(0, 0, 2, t).unwrap().loss,
                    &bundle,
                    &emb,
                    &[0, 2],
                ));
            } else {
                let label = trial % 2 == 0;
                let bundle = objectives::bce(0, 1, label, &emb).unwrap();
                objective_worst = objective_worst.max(fd_gradient_error(
                    |t| objectives::bce(0, 1, label, t).unwrap().loss,
                    &bundle,
                    &emb,
                    &[1],
                ));
            }
        }
        detail.push_str(&format!("{name} {objective_worst:.2e}; "));
        worst = worst.max(objective_worst);
    }

    // Diversity-kernel objective.
    let mut kernel_worst: f64 = 0.0;
    for trial in 0..instances {
        let mut rng = derive_rng(seed, &[salt::VERIFY, 3, trial as u64]);
        let rank = 5;
        let num_items = 9;
        let v: Vec<f64> = (0..num_items * rank)
            .map(|_| rng.gen_range(-0.4..0.4))
            .collect();
        let pair = (vec![0 as ItemId, 2, 5], vec![1 as ItemId, 3, 7]);
        let h = 1e-5;
        for (side, sign) in [(&pair.0, 1.0), (&pair.1, -1.0)] {
            let grads = diversity::logdet_gram_gradient(&v, rank, side).unwrap();
            for (a, &item) in side.iter().enumerate() {
                for r in 0..rank {
                    let mut vp = v.clone();
                    vp[item as usize * rank + r] += h;
                    let mut vm = v.clone();
                    vm[item as usize * rank + r] -= h;
                    let fd = (diversity::pair_objective(&vp, rank, &pair)
                        - diversity::pair_objective(&vm, rank, &pair))
                        / (2.0 * h);
                    let analytic = sign * grads[a][r];
                    let rel = (analytic - fd).abs() / analytic.abs().max(fd.abs()).max(1e-4);
                    kernel_worst = kernel_worst.max(rel);
                }
            }
        }
    }
    detail.push_str(&format!("diversity {kernel_worst:.2e}"));
    worst = worst.max(kernel_worst);

    CheckResult {
        name: format!("gradient oracle ({instances} instances per objective)"),
        passed: worst < 1e-4,
        detail,
    }
}

/// Log-det decomposition: with jitter disabled, the subset log
/// determinant splits into quality and diversity terms.
pub fn check_logdet_decomposition(subsets: usize, seed: u64) -> CheckResult {
    let mut rng = derive_rng(seed, &[salt::VERIFY, 4]);
    let mut worst: f64 = 0.0;
    for trial in 0..subsets {
        let num_items = 8;
        let emb = random_embeddings(num_items, 5, seed ^ 0xDD ^ ((trial as u64) << 6), 0.3);
        // A full-rank random factor keeps diversity submatrices
        // nonsingular.
        let pairs = diversity::DiversePairSet {
            pairs: vec![],
            set_size: 2,
        };
        let factor = diversity::train_diversity_kernel(
            &pairs,
            num_items,
            num_items,
            0,
            1e-2,
            seed ^ (trial as u64),
        )
        .unwrap();
        let kernel = DiversityKernel::Pretrained(factor);
        let k = rng.gen_range(2..=4usize);
        let targets: Vec<ItemId> = (0..k as ItemId).collect();
        let negatives: Vec<ItemId> = (k as ItemId..8).collect();
        let inst = GroundSetInstance::new(0, targets.clone(), negatives).unwrap();
        let pk =
            crate::dpp::build_personalized_kernel_with_jitter(&inst, &emb, &kernel, 0.0).unwrap();
        let subset: Vec<usize> = (0..k).collect();
        let lhs = det_principal_submatrix(pk.matrix(), &subset).unwrap().ln();
        let quality_term: f64 = targets
            .iter()
            .map(|&item| {
                2.0 * emb
                    .user_vec(0)
                    .iter()
                    .zip(emb.item_vec(item))
                    .map(|(a, b)| a * b)
                    .sum::<f64>()
            })
            .sum();
        let k_sub = crate::linalg::SmallSymMatrix::from_fn(k, |a, b| {
            kernel.entry(targets[a], targets[b], &emb).unwrap()
        })
        .unwrap();
        let diversity_term = det_principal_submatrix(&k_sub, &subset).unwrap().ln();
        let err = (lhs - quality_term - diversity_term).abs();
        worst = worst.max(err);
    }
    CheckResult {
        name: format!("log-det decomposition ({subsets} subsets)"),
        passed: worst < 1e-6,
        detail: format!("max absolute error {worst:.3e}"),
    }
}

/// Run the full oracle suite.
pub fn run_verification(seed: u64) -> VerifyReport {
    let checks = vec![
        check_normalizer_oracle(200, seed),
        check_normalization(100, seed),
        check_gradients(20, seed),
        check_logdet_decomposition(100, seed),
    ];
    VerifyReport { checks }
}
