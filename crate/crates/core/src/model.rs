//! Matrix-factorization parameters, the Adam optimizer, and the
//! training loop wiring schedules, kernels, and objectives together.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{DataError, InteractionDataset};
use crate::diversity::{median_pairwise_sigma, DiversityKernel};
use crate::dpp::{GroundSetInstance, ItemId, UserId};
use crate::eval;
use crate::objectives::{self, GradientBundle, ObjectiveError};
use crate::rng::{derive_rng, salt, standard_normal};
use crate::sampling::{self, SamplerMode, SamplingError};

/// Embedding-entry standard deviation at initialization.
const INIT_STDDEV: f64 = 0.01;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("config: {0}")]
    BadConfig(String),
    #[error("training diverged: loss non-finite in epochs {0} and {1}")]
    Diverged(usize, usize),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("bad model checkpoint {path}: {message}")]
    BadCheckpoint { path: String, message: String },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Sampling(#[from] SamplingError),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error(transparent)]
    Diversity(#[from] crate::diversity::DiversityError),
}

/// User and item latent vectors, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    num_users: usize,
    num_items: usize,
    dim: usize,
    users: Vec<f64>,
    items: Vec<f64>,
}

impl EmbeddingTable {
    /// Seeded normal(0, 0.01) initialization.
    pub fn init(num_users: usize, num_items: usize, dim: usize, seed: u64) -> Self {
        let mut rng = derive_rng(seed, &[salt::EMBED_INIT]);
        let users = (0..num_users * dim)
            .map(|_| INIT_STDDEV * standard_normal(&mut rng))
            .collect();
        let items = (0..num_items * dim)
            .map(|_| INIT_STDDEV * standard_normal(&mut rng))
            .collect();
        Self {
            num_users,
            num_items,
            dim,
            users,
            items,
        }
    }

    pub fn zeros(num_users: usize, num_items: usize, dim: usize) -> Self {
        Self {
            num_users,
            num_items,
            dim,
            users: vec![0.0; num_users * dim],
            items: vec![0.0; num_items * dim],
        }
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn user_vec(&self, user: UserId) -> &[f64] {
        let u = user as usize;
        &self.users[u * self.dim..(u + 1) * self.dim]
    }

    pub fn item_vec(&self, item: ItemId) -> &[f64] {
        let i = item as usize;
        &self.items[i * self.dim..(i + 1) * self.dim]
    }

    pub fn user_vec_mut(&mut self, user: UserId) -> &mut [f64] {
        let u = user as usize;
        &mut self.users[u * self.dim..(u + 1) * self.dim]
    }

    pub fn item_vec_mut(&mut self, item: ItemId) -> &mut [f64] {
        let i = item as usize;
        &mut self.items[i * self.dim..(i + 1) * self.dim]
    }

    pub fn score(&self, user: UserId, item: ItemId) -> f64 {
        self.user_vec(user)
            .iter()
            .zip(self.item_vec(item))
            .map(|(a, b)| a * b)
            .sum()
    }

    pub fn all_finite(&self) -> bool {
        self.users.iter().chain(self.items.iter()).all(|x| x.is_finite())
    }

    /// Checkpoint layout: `lkp-model v1 <num_users> <num_items> <d>\n`
    /// then user rows then item rows as little-endian f64.
    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        let io_err = |source: std::io::Error| ModelError::Io {
            path: path.display().to_string(),
            source,
        };
        let file = File::create(path).map_err(io_err)?;
        let mut w = BufWriter::new(file);
        writeln!(
            w,
            "lkp-model v1 {} {} {}",
            self.num_users, self.num_items, self.dim
        )
        .map_err(io_err)?;
        for value in self.users.iter().chain(self.items.iter()) {
            w.write_all(&value.to_le_bytes()).map_err(io_err)?;
        }
        w.flush().map_err(io_err)
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let io_err = |source: std::io::Error| ModelError::Io {
            path: path.display().to_string(),
            source,
        };
        let bad = |message: &str| ModelError::BadCheckpoint {
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
        if fields.len() != 5 || fields[0] != "lkp-model" || fields[1] != "v1" {
            return Err(bad("unrecognized header"));
        }
        let num_users: usize = fields[2].parse().map_err(|_| bad("bad user count"))?;
        let num_items: usize = fields[3].parse().map_err(|_| bad("bad item count"))?;
        let dim: usize = fields[4].parse().map_err(|_| bad("bad dimension"))?;
        let body = &bytes[newline + 1..];
        if body.len() != (num_users + num_items) * dim * 8 {
            return Err(bad("payload size mismatch"));
        }
        let mut values = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
        let users: Vec<f64> = values.by_ref().take(num_users * dim).collect();
        let items: Vec<f64> = values.collect();
        Ok(Self {
            num_users,
            num_items,
            dim,
            users,
            items,
        })
    }
}

#[derive(Debug, Clone, Copy)]
pub struct AdamHyper {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub l2: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        Self {
            learning_rate: 3e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            l2: 1e-4,
        }
    }
}

/// First and second moment estimates for every parameter, plus the
/// global step counter used for bias correction.
#[derive(Debug, Clone)]
pub struct AdamState {
    m_users: Vec<f64>,
    v_users: Vec<f64>,
    m_items: Vec<f64>,
    v_items: Vec<f64>,
    t: u64,
    pub skipped_steps: u64,
}

impl AdamState {
    pub fn new(table: &EmbeddingTable) -> Self {
        Self {
            m_users: vec![0.0; table.num_users * table.dim],
            v_users: vec![0.0; table.num_users * table.dim],
            m_items: vec![0.0; table.num_items * table.dim],
            v_items: vec![0.0; table.num_items * table.dim],
            t: 0,
            skipped_steps: 0,
        }
    }
}

/// Deterministically ordered sparse gradient accumulator for one batch.
#[derive(Debug, Default)]
pub struct GradAccumulator {
    user_rows: BTreeMap<UserId, Vec<f64>>,
    item_rows: BTreeMap<ItemId, Vec<f64>>,
    pub total_loss: f64,
    pub count: usize,
    dim: usize,
}

impl GradAccumulator {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            ..Default::default()
        }
    }

    pub fn add(&mut self, bundle: &GradientBundle) {
        self.total_loss += bundle.loss;
        self.count += 1;
        for (user, grad) in &bundle.user_grads {
            let row = self
                .user_rows
                .entry(*user)
                .or_insert_with(|| vec![0.0; self.dim]);
            for (acc, g) in row.iter_mut().zip(grad) {
                *acc += g;
            }
        }
        for (item, grad) in &bundle.item_grads {
            let row = self
                .item_rows
                .entry(*item)
                .or_insert_with(|| vec![0.0; self.dim]);
            for (acc, g) in row.iter_mut().zip(grad) {
                *acc += g;
            }
        }
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }
}

/// One Adam update from an accumulated batch. Gradients are averaged
/// over the batch, the L2 term `l2 * param` is added per touched row,
/// and the whole step is skipped (with a counter bump) if any gradient
/// is non-finite.
pub fn adam_step(
    table: &mut EmbeddingTable,
    state: &mut AdamState,
    hyper: &AdamHyper,
    grads: &GradAccumulator,
) {
    if grads.is_empty() {
        return;
    }
    let finite = grads
        .user_rows
        .values()
        .chain(grads.item_rows.values())
        .flatten()
        .all(|g| g.is_finite());
    if !finite {
        state.skipped_steps += 1;
        return;
    }
    state.t += 1;
    let scale = 1.0 / grads.count as f64;
    let bc1 = 1.0 - hyper.beta1.powi(state.t as i32);
    let bc2 = 1.0 - hyper.beta2.powi(state.t as i32);
    let dim = table.dim;

    let update_row = |params: &mut [f64], m: &mut [f64], v: &mut [f64], grad: &[f64]| {
        for d in 0..dim {
            let g = grad[d] * scale + hyper.l2 * params[d];
            m[d] = hyper.beta1 * m[d] + (1.0 - hyper.beta1) * g;
            v[d] = hyper.beta2 * v[d] + (1.0 - hyper.beta2) * g * g;
            let m_hat = m[d] / bc1;
            let v_hat = v[d] / bc2;
            params[d] -= hyper.learning_rate * m_hat / (v_hat.sqrt() + hyper.eps);
        }
    };

    for (&user, grad) in &grads.user_rows {
        let off = user as usize * dim;
        update_row(
            &mut table.users[off..off + dim],
            &mut state.m_users[off..off + dim],
            &mut state.v_users[off..off + dim],
            grad,
        );
    }
    for (&item, grad) in &grads.item_rows {
        let off = item as usize * dim;
        update_row(
            &mut table.items[off..off + dim],
            &mut state.m_items[off..off + dim],
            &mut state.v_items[off..off + dim],
            grad,
        );
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    LkpPs,
    LkpNps,
    Bpr,
    Bce,
}

impl std::str::FromStr for Objective {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "lkp_ps" | "ps" => Ok(Self::LkpPs),
            "lkp_nps" | "nps" => Ok(Self::LkpNps),
            "bpr" => Ok(Self::Bpr),
            "bce" => Ok(Self::Bce),
            other => Err(format!(
                "unknown objective `{other}` (expected lkp_ps, lkp_nps, bpr, or bce)"
            )),
        }
    }
}

impl std::fmt::Display for Objective {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Self::LkpPs => "lkp_ps",
            Self::LkpNps => "lkp_nps",
            Self::Bpr => "bpr",
            Self::Bce => "bce",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelMode {
    Pretrained,
    Gaussian,
}

impl std::str::FromStr for KernelMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "pretrained" => Ok(Self::Pretrained),
            "gaussian" => Ok(Self::Gaussian),
            other => Err(format!(
                "unknown kernel mode `{other}` (expected pretrained or gaussian)"
            )),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub objective: Objective,
    pub sampler: SamplerMode,
    pub kernel_mode: KernelMode,
    pub k: usize,
    pub n: usize,
    pub embedding_dim: usize,
    pub learning_rate: f64,
    pub l2: f64,
    pub epochs: usize,
    pub seed: u64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub batch_size: usize,
    pub eval_interval: usize,
    pub patience: Option<usize>,
    #[serde(default)]
    pub snapshot_epochs: Vec<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            objective: Objective::LkpNps,
            sampler: SamplerMode::Sequential,
            kernel_mode: KernelMode::Pretrained,
            k: 5,
            n: 5,
            embedding_dim: 64,
            learning_rate: 3e-3,
            l2: 1e-4,
            epochs: 100,
            seed: 42,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            batch_size: 64,
            eval_interval: 5,
            patience: Some(20),
            snapshot_epochs: Vec::new(),
        }
    }
}

impl TrainConfig {
    /// The named training variants: objective x sampler x kernel mode.
    /// PR/PS/NPR/NPS use the frozen pretrained kernel; PSE/NPSE score
    /// diversity from live embeddings.
    pub fn variant(name: &str) -> Option<(Objective, SamplerMode, KernelMode)> {
        match name.to_ascii_uppercase().as_str() {
            "PR" => Some((Objective::LkpPs, SamplerMode::Random, KernelMode::Pretrained)),
            "PS" => Some((
                Objective::LkpPs,
                SamplerMode::Sequential,
                KernelMode::Pretrained,
            )),
            "NPR" => Some((
                Objective::LkpNps,
                SamplerMode::Random,
                KernelMode::Pretrained,
            )),
            "NPS" => Some((
                Objective::LkpNps,
                SamplerMode::Sequential,
                KernelMode::Pretrained,
            )),
            "PSE" => Some((
                Objective::LkpPs,
                SamplerMode::Sequential,
                KernelMode::Gaussian,
            )),
            "NPSE" => Some((
                Objective::LkpNps,
                SamplerMode::Sequential,
                KernelMode::Gaussian,
            )),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.k < 2 {
            return Err(ModelError::BadConfig(format!(
                "k must be at least 2, got {}",
                self.k
            )));
        }
        if self.n == 0 {
            return Err(ModelError::BadConfig("n must be at least 1".into()));
        }
        if self.objective == Objective::LkpNps && self.n != self.k {
            return Err(ModelError::BadConfig(format!(
                "lkp_nps requires n == k, got k={} n={}",
                self.k, self.n
            )));
        }
        if self.embedding_dim == 0 || self.batch_size == 0 || self.eval_interval == 0 {
            return Err(ModelError::BadConfig(
                "embedding_dim, batch_size, and eval_interval must be positive".into(),
            ));
        }
        Ok(())
    }

    fn hyper(&self) -> AdamHyper {
        AdamHyper {
            learning_rate: self.learning_rate,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            eps: self.adam_eps,
            l2: self.l2,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub val_ndcg5: Option<f64>,
    pub wall_ms: u64,
}

#[derive(Debug)]
pub struct TrainOutcome {
    /// Parameters from the best validation epoch.
    pub best: EmbeddingTable,
    /// Parameters at the end of the last epoch run.
    pub final_table: EmbeddingTable,
    pub best_epoch: usize,
    pub best_val_ndcg5: f64,
    pub log: Vec<EpochRecord>,
    pub snapshots: Vec<(usize, EmbeddingTable)>,
    pub skipped_instances: u64,
}

enum Workload {
    Sets(Vec<GroundSetInstance>),
    Pairs(Vec<(UserId, ItemId, ItemId)>),
    Points(Vec<(UserId, ItemId, bool)>),
}

/// Train embeddings under the configured objective.
///
/// Each epoch rebuilds the schedule (fresh negatives, regrouped targets
/// in random mode), evaluates the objective per instance in parallel
/// over a read-only snapshot, accumulates gradients in deterministic
/// order, and applies one Adam step per batch. Validation NDCG@5 runs
/// every `eval_interval` epochs and the best-epoch parameters are
/// returned alongside the final ones.
pub fn train(
    config: &TrainConfig,
    data: &InteractionDataset,
    kernel: &DiversityKernel,
) -> Result<TrainOutcome, ModelError> {
    config.validate()?;
    if data.splits().is_none() {
        return Err(ModelError::Data(DataError::Unsplit));
    }
    match (config.kernel_mode, kernel) {
        (KernelMode::Pretrained, DiversityKernel::Pretrained(_)) => {}
        (KernelMode::Gaussian, DiversityKernel::Gaussian { .. }) => {}
        _ => {
            return Err(ModelError::BadConfig(
                "kernel mode does not match the supplied kernel".into(),
            ))
        }
    }

    let mut table = EmbeddingTable::init(
        data.num_users,
        data.num_items,
        config.embedding_dim,
        config.seed,
    );
    let mut adam = AdamState::new(&table);
    let hyper = config.hyper();

    let mut best = table.clone();
    let mut best_metric = validation_ndcg5(&table, data);
    let mut best_epoch = 0usize;
    let mut evals_since_best = 0usize;
    let mut skipped_instances = 0u64;
    let mut log = Vec::with_capacity(config.epochs);
    let mut snapshots = Vec::new();
    if config.snapshot_epochs.contains(&0) {
        snapshots.push((0, table.clone()));
    }
    let mut prev_loss_bad = false;

    for epoch in 1..=config.epochs {
        let start = Instant::now();
        let epoch_seed = config.seed ^ (epoch as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);

        // The Gaussian bandwidth tracks the embedding scale, re-estimated
        // from the current parameters each epoch.
        let gaussian;
        let epoch_kernel: &DiversityKernel = match config.kernel_mode {
            KernelMode::Pretrained => kernel,
            KernelMode::Gaussian => {
                gaussian = DiversityKernel::Gaussian {
                    sigma: median_pairwise_sigma(&table, epoch_seed),
                };
                &gaussian
            }
        };

        let workload = build_workload(config, data, epoch_seed)?;
        let (epoch_loss, instances, skipped) =
            run_epoch(config, &mut table, &mut adam, &hyper, epoch_kernel, &workload)?;
        skipped_instances += skipped;
        let mean_loss = if instances > 0 {
            epoch_loss / instances as f64
        } else {
            f64::NAN
        };

        if !mean_loss.is_finite() {
            if prev_loss_bad {
                return Err(ModelError::Diverged(epoch - 1, epoch));
            }
            prev_loss_bad = true;
        } else {
            prev_loss_bad = false;
        }

        let mut val = None;
        if epoch % config.eval_interval == 0 || epoch == config.epochs {
            let metric = validation_ndcg5(&table, data);
            val = Some(metric);
            if metric > best_metric {
                best_metric = metric;
                best = table.clone();
                best_epoch = epoch;
                evals_since_best = 0;
            } else {
                evals_since_best += 1;
            }
        }
        log.push(EpochRecord {
            epoch,
            loss: mean_loss,
            val_ndcg5: val,
            wall_ms: start.elapsed().as_millis() as u64,
        });
        if config.snapshot_epochs.contains(&epoch) {
            snapshots.push((epoch, table.clone()));
        }
        if let Some(patience) = config.patience {
            if evals_since_best > patience {
                break;
            }
        }
    }

    Ok(TrainOutcome {
        best,
        final_table: table,
        best_epoch,
        best_val_ndcg5: best_metric,
        log,
        snapshots,
        skipped_instances,
    })
}

fn build_workload(
    config: &TrainConfig,
    data: &InteractionDataset,
    epoch_seed: u64,
) -> Result<Workload, ModelError> {
    match config.objective {
        Objective::LkpPs | Objective::LkpNps => {
            let schedule = match config.sampler {
                SamplerMode::Sequential => {
                    sampling::schedule_sequential(data, config.k, config.n, epoch_seed)?
                }
                SamplerMode::Random => {
                    sampling::schedule_random(data, config.k, config.n, epoch_seed)?
                }
            };
            Ok(Workload::Sets(schedule.instances))
        }
        Objective::Bpr => {
            let mut triples = Vec::new();
            for user in 0..data.num_users as UserId {
                let train = data.train_items(user)?;
                if train.is_empty() {
                    continue;
                }
                let mut rng = derive_rng(epoch_seed, &[salt::BASELINE, user as u64]);
                let observed: std::collections::HashSet<ItemId> =
                    data.positives(user).iter().copied().collect();
                for &pos in train {
                    let neg = sample_one_negative(&mut rng, data.num_items, &observed);
                    triples.push((user, pos, neg));
                }
            }
            Ok(Workload::Pairs(triples))
        }
        Objective::Bce => {
            // One observed point plus one sampled unobserved point per
            // train interaction.
            let mut points = Vec::new();
            for user in 0..data.num_users as UserId {
                let train = data.train_items(user)?;
                if train.is_empty() {
                    continue;
                }
                let mut rng = derive_rng(epoch_seed, &[salt::BASELINE, user as u64]);
                let observed: std::collections::HashSet<ItemId> =
                    data.positives(user).iter().copied().collect();
                for &pos in train {
                    points.push((user, pos, true));
                    let neg = sample_one_negative(&mut rng, data.num_items, &observed);
                    points.push((user, neg, false));
                }
            }
            Ok(Workload::Points(points))
        }
    }
}

fn sample_one_negative(
    rng: &mut impl rand::Rng,
    num_items: usize,
    observed: &std::collections::HashSet<ItemId>,
) -> ItemId {
    loop {
        let cand = rng.gen_range(0..num_items) as ItemId;
        if !observed.contains(&cand) {
            return cand;
        }
    }
}

fn run_epoch(
    config: &TrainConfig,
    table: &mut EmbeddingTable,
    adam: &mut AdamState,
    hyper: &AdamHyper,
    kernel: &DiversityKernel,
    workload: &Workload,
) -> Result<(f64, usize, u64), ModelError> {
    let mut epoch_loss = 0.0;
    let mut instances = 0usize;
    let mut skipped = 0u64;

    macro_rules! batched {
        ($items:expr, $eval:expr) => {{
            for chunk in $items.chunks(config.batch_size) {
                let snapshot: &EmbeddingTable = table;
                let bundles: Vec<Result<GradientBundle, ObjectiveError>> =
                    chunk.par_iter().map(|x| $eval(x, snapshot)).collect();
                let mut acc = GradAccumulator::new(config.embedding_dim);
                for bundle in bundles {
                    match bundle {
                        Ok(b) => acc.add(&b),
                        Err(ObjectiveError::SingularSubset) => skipped += 1,
                        Err(e) => return Err(e.into()),
                    }
                }
                epoch_loss += acc.total_loss;
                instances += acc.count;
                adam_step(table, adam, hyper, &acc);
            }
        }};
    }

    match workload {
        Workload::Sets(list) => match config.objective {
            Objective::LkpPs => {
                batched!(list, |inst: &GroundSetInstance, snap: &EmbeddingTable| {
                    objectives::lkp_ps(inst, snap, kernel)
                })
            }
            Objective::LkpNps => {
                batched!(list, |inst: &GroundSetInstance, snap: &EmbeddingTable| {
                    objectives::lkp_nps(inst, snap, kernel)
                })
            }
            _ => unreachable!(),
        },
        Workload::Pairs(list) => {
            batched!(list, |t: &(UserId, ItemId, ItemId), snap: &EmbeddingTable| {
                objectives::bpr(t.0, t.1, t.2, snap)
            })
        }
        Workload::Points(list) => {
            batched!(list, |t: &(UserId, ItemId, bool), snap: &EmbeddingTable| {
                objectives::bce(t.0, t.1, t.2, snap)
            })
        }
    }
    Ok((epoch_loss, instances, skipped))
}

/// NDCG@5 on the validation split, excluding only train items from the
/// candidate pool.
fn validation_ndcg5(table: &EmbeddingTable, data: &InteractionDataset) -> f64 {
    eval::evaluate_split(table, data, eval::TargetSplit::Validation, &[5])
        .map(|r| r.cutoffs[0].ndcg)
        .unwrap_or(0.0)
}
