//! Interaction data: ingestion, implicit-feedback conversion, filtering,
//! splitting, and the bundled synthetic generator.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dpp::ItemId;
use crate::rng::{derive_rng, salt};

/// Users and items below this interaction count are dropped during
/// ingestion, iterating to a fixpoint.
pub const MIN_INTERACTIONS: usize = 10;

/// Default positive-feedback threshold: keep ratings >= 5.
pub const DEFAULT_THRESHOLD: f64 = 5.0;

pub const DEFAULT_SPLIT: (f64, f64, f64) = (0.7, 0.1, 0.2);

#[derive(Debug, Error)]
pub enum DataError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: malformed record: {message}")]
    Malformed {
        path: String,
        line: usize,
        message: String,
    },
    #[error("no interactions survive the rating threshold and degree filter")]
    EmptyAfterFilter,
    #[error("item {0} has no category entry")]
    MissingCategory(String),
    #[error("split ratios must be nonnegative and sum to 1, got {0:?}")]
    BadSplitRatios((f64, f64, f64)),
    #[error("dataset has no train/validation/test splits yet")]
    Unsplit,
    #[error("unrecognized dataset container: {0}")]
    BadContainer(String),
}

/// Per-user train/validation/test item lists, each kept in the user's
/// chronological interaction order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSets {
    pub train: Vec<Vec<ItemId>>,
    pub validation: Vec<Vec<ItemId>>,
    pub test: Vec<Vec<ItemId>>,
}

/// Sparse binary user-item feedback with per-item categories and
/// per-user chronological order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionDataset {
    pub num_users: usize,
    pub num_items: usize,
    pub num_categories: usize,
    positives: Vec<Vec<ItemId>>,
    categories: Vec<u32>,
    splits: Option<SplitSets>,
}

#[derive(Serialize, Deserialize)]
struct DatasetContainer {
    format: String,
    version: u32,
    #[serde(flatten)]
    data: InteractionDataset,
}

const CONTAINER_FORMAT: &str = "lkp-dataset";

impl InteractionDataset {
    fn new(positives: Vec<Vec<ItemId>>, categories: Vec<u32>, num_categories: usize) -> Self {
        let num_users = positives.len();
        let num_items = categories.len();
        Self {
            num_users,
            num_items,
            num_categories,
            positives,
            categories,
            splits: None,
        }
    }

    /// The user's positive items in chronological order.
    pub fn positives(&self, user: u32) -> &[ItemId] {
        &self.positives[user as usize]
    }

    pub fn category(&self, item: ItemId) -> u32 {
        self.categories[item as usize]
    }

    pub fn categories(&self) -> &[u32] {
        &self.categories
    }

    pub fn total_interactions(&self) -> usize {
        self.positives.iter().map(Vec::len).sum()
    }

    pub fn splits(&self) -> Option<&SplitSets> {
        self.splits.as_ref()
    }

    pub fn train_items(&self, user: u32) -> Result<&[ItemId], DataError> {
        Ok(&self.splits.as_ref().ok_or(DataError::Unsplit)?.train[user as usize])
    }

    pub fn validation_items(&self, user: u32) -> Result<&[ItemId], DataError> {
        Ok(&self.splits.as_ref().ok_or(DataError::Unsplit)?.validation[user as usize])
    }

    pub fn test_items(&self, user: u32) -> Result<&[ItemId], DataError> {
        Ok(&self.splits.as_ref().ok_or(DataError::Unsplit)?.test[user as usize])
    }

    /// Uniform per-user random partition of the positives into
    /// train/validation/test. Rounding remainders go to train; every
    /// user keeps at least one test item when they have two or more
    /// positives. Validation may come up empty for very short
    /// histories.
    pub fn split(&self, ratios: (f64, f64, f64), seed: u64) -> Result<Self, DataError> {
        let (tr, va, te) = ratios;
        if tr < 0.0 || va < 0.0 || te < 0.0 || (tr + va + te - 1.0).abs() > 1e-9 {
            return Err(DataError::BadSplitRatios(ratios));
        }
        let mut train = Vec::with_capacity(self.num_users);
        let mut validation = Vec::with_capacity(self.num_users);
        let mut test = Vec::with_capacity(self.num_users);
        for user in 0..self.num_users {
            let items = &self.positives[user];
            let n = items.len();
            let mut n_val = (va * n as f64).floor() as usize;
            let n_test = (te * n as f64).floor() as usize;
            let mut n_train = (tr * n as f64).floor() as usize;
            n_train += n - n_train - n_val - n_test;
            // Guarantee a test item by shrinking the front splits; the
            // tail of the assignment ranking becomes test implicitly.
            if n_test == 0 && te > 0.0 && n >= 2 {
                if n_train > n_val {
                    n_train -= 1;
                } else {
                    n_val -= 1;
                }
            }
            let mut order: Vec<usize> = (0..n).collect();
            let mut rng = derive_rng(seed, &[salt::SPLIT, user as u64]);
            order.shuffle(&mut rng);
            let mut assign = vec![0u8; n];
            for (rank, &pos) in order.iter().enumerate() {
                assign[pos] = if rank < n_train {
                    0
                } else if rank < n_train + n_val {
                    1
                } else {
                    2
                };
            }
            // Chronological order within each split.
            let pick = |which: u8| -> Vec<ItemId> {
                items
                    .iter()
                    .zip(assign.iter())
                    .filter(|(_, &a)| a == which)
                    .map(|(&it, _)| it)
                    .collect()
            };
            train.push(pick(0));
            validation.push(pick(1));
            test.push(pick(2));
        }
        let mut out = self.clone();
        out.splits = Some(SplitSets {
            train,
            validation,
            test,
        });
        Ok(out)
    }

    pub fn save(&self, path: &Path) -> Result<(), DataError> {
        let file = File::create(path).map_err(|source| DataError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let container = DatasetContainer {
            format: CONTAINER_FORMAT.to_string(),
            version: 1,
            data: self.clone(),
        };
        serde_json::to_writer(BufWriter::new(file), &container).map_err(|e| DataError::Io {
            path: path.display().to_string(),
            source: e.into(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, DataError> {
        let file = File::open(path).map_err(|source| DataError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let container: DatasetContainer = serde_json::from_reader(BufReader::new(file))
            .map_err(|e| DataError::BadContainer(e.to_string()))?;
        if container.format != CONTAINER_FORMAT || container.version != 1 {
            return Err(DataError::BadContainer(format!(
                "{} v{}",
                container.format, container.version
            )));
        }
        Ok(container.data)
    }
}

struct RawRecord {
    user: String,
    item: String,
    timestamp: i64,
    line: usize,
}

/// Ingest a ratings CSV plus a category CSV into an implicit-feedback
/// dataset.
///
/// Ratings below `threshold` are discarded, then users and items with
/// fewer than [`MIN_INTERACTIONS`] positives are dropped iteratively
/// until both degree bounds hold. Surviving ids are reindexed densely
/// in order of first appearance, and each user's items are ordered by
/// timestamp (file order on ties or when timestamps are absent).
pub fn ingest(
    ratings_path: &Path,
    categories_path: &Path,
    threshold: f64,
) -> Result<InteractionDataset, DataError> {
    let ratings_text = read_file(ratings_path)?;
    let path_str = ratings_path.display().to_string();

    let mut kept: Vec<RawRecord> = Vec::new();
    let mut seen: HashMap<(String, String), usize> = HashMap::new();
    for (idx, line) in ratings_text.lines().enumerate() {
        let line_no = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').map(str::trim).collect();
        if fields.len() < 3 {
            return Err(DataError::Malformed {
                path: path_str.clone(),
                line: line_no,
                message: "expected user_id,item_id,rating[,timestamp]".into(),
            });
        }
        let rating: f64 = match fields[2].parse() {
            Ok(r) => r,
            Err(_) if idx == 0 => continue, // header row
            Err(_) => {
                return Err(DataError::Malformed {
                    path: path_str.clone(),
                    line: line_no,
                    message: format!("rating `{}` is not a number", fields[2]),
                })
            }
        };
        if rating < threshold {
            continue;
        }
        let timestamp: i64 = if fields.len() > 3 && !fields[3].is_empty() {
            fields[3].parse().map_err(|_| DataError::Malformed {
                path: path_str.clone(),
                line: line_no,
                message: format!("timestamp `{}` is not an integer", fields[3]),
            })?
        } else {
            line_no as i64
        };
        let key = (fields[0].to_string(), fields[1].to_string());
        match seen.get(&key) {
            Some(&at) if (kept[at].timestamp, kept[at].line) <= (timestamp, line_no) => {}
            Some(&at) => {
                kept[at].timestamp = timestamp;
                kept[at].line = line_no;
            }
            None => {
                seen.insert(key.clone(), kept.len());
                kept.push(RawRecord {
                    user: key.0,
                    item: key.1,
                    timestamp,
                    line: line_no,
                });
            }
        }
    }

    // Degree filter to a fixpoint.
    loop {
        let mut user_deg: HashMap<String, usize> = HashMap::new();
        let mut item_deg: HashMap<String, usize> = HashMap::new();
        for r in &kept {
            *user_deg.entry(r.user.clone()).or_default() += 1;
            *item_deg.entry(r.item.clone()).or_default() += 1;
        }
        let before = kept.len();
        kept.retain(|r| {
            user_deg[&r.user] >= MIN_INTERACTIONS && item_deg[&r.item] >= MIN_INTERACTIONS
        });
        if kept.len() == before {
            break;
        }
    }
    if kept.is_empty() {
        return Err(DataError::EmptyAfterFilter);
    }

    // Dense reindex in order of first appearance.
    let mut user_ids: HashMap<String, u32> = HashMap::new();
    let mut item_ids: HashMap<String, ItemId> = HashMap::new();
    let mut item_names: Vec<String> = Vec::new();
    for r in &kept {
        let next = user_ids.len() as u32;
        user_ids.entry(r.user.clone()).or_insert(next);
        if !item_ids.contains_key(&r.item) {
            item_ids.insert(r.item.clone(), item_names.len() as ItemId);
            item_names.push(r.item.clone());
        }
    }

    let mut positives: Vec<Vec<(i64, usize, ItemId)>> = vec![Vec::new(); user_ids.len()];
    for r in &kept {
        let u = user_ids[&r.user] as usize;
        positives[u].push((r.timestamp, r.line, item_ids[&r.item]));
    }
    let positives: Vec<Vec<ItemId>> = positives
        .into_iter()
        .map(|mut v| {
            v.sort();
            v.into_iter().map(|(_, _, it)| it).collect()
        })
        .collect();

    let categories = load_categories(categories_path, &item_names)?;
    let num_categories = categories.iter().copied().max().map_or(0, |m| m as usize + 1);
    Ok(InteractionDataset::new(positives, categories, num_categories))
}

/// Parse the `item_id,category` file and resolve categories for the
/// surviving items, densified in item-id order. Multi-valued category
/// fields (split on `|` or `;`) take the first listed.
fn load_categories(path: &Path, item_names: &[String]) -> Result<Vec<u32>, DataError> {
    let text = read_file(path)?;
    let path_str = path.display().to_string();
    let mut raw: HashMap<&str, &str> = HashMap::new();
    for (idx, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let Some((item, cat)) = trimmed.split_once(',') else {
            if idx == 0 {
                continue;
            }
            return Err(DataError::Malformed {
                path: path_str.clone(),
                line: idx + 1,
                message: "expected item_id,category".into(),
            });
        };
        let cat = cat.split(['|', ';']).next().unwrap_or(cat).trim();
        raw.entry(item.trim()).or_insert(cat);
    }
    let mut dense: HashMap<&str, u32> = HashMap::new();
    let mut out = Vec::with_capacity(item_names.len());
    for name in item_names {
        let cat = raw
            .get(name.as_str())
            .ok_or_else(|| DataError::MissingCategory(name.clone()))?;
        let next = dense.len() as u32;
        out.push(*dense.entry(cat).or_insert(next));
    }
    Ok(out)
}

fn read_file(path: &Path) -> Result<String, DataError> {
    let mut buf = String::new();
    File::open(path)
        .and_then(|mut f| f.read_to_string(&mut buf))
        .map_err(|source| DataError::Io {
            path: path.display().to_string(),
            source,
        })?;
    Ok(buf)
}

/// In-group and cross-group interaction probabilities for the synthetic
/// generator.
pub const SYNTH_IN_GROUP_RATE: f64 = 0.3;
pub const SYNTH_CROSS_GROUP_RATE: f64 = 0.02;

pub(crate) struct SyntheticRaw {
    #[cfg_attr(not(test), allow(dead_code))]
    pub user_groups: Vec<usize>,
    #[cfg_attr(not(test), allow(dead_code))]
    pub item_groups: Vec<usize>,
    pub categories: Vec<u32>,
    pub interactions: Vec<Vec<ItemId>>, // chronological per user
}

pub(crate) fn synthetic_raw(
    num_users: usize,
    num_items: usize,
    num_categories: usize,
    seed: u64,
) -> SyntheticRaw {
    let groups = (num_items / 200).clamp(2, 16);
    let mut rng = derive_rng(seed, &[salt::SYNTHETIC]);
    let user_groups: Vec<usize> = (0..num_users).map(|_| rng.gen_range(0..groups)).collect();
    // Items sit in contiguous group blocks; each block cycles through
    // its own slice of the category range so all categories are used.
    let item_groups: Vec<usize> = (0..num_items).map(|i| i * groups / num_items).collect();
    let cats_per_group = num_categories.div_ceil(groups);
    let mut block_offset = vec![0usize; groups];
    let categories: Vec<u32> = item_groups
        .iter()
        .map(|&g| {
            let local = block_offset[g];
            block_offset[g] += 1;
            ((g * cats_per_group + local % cats_per_group) % num_categories) as u32
        })
        .collect();

    let mut interactions = Vec::with_capacity(num_users);
    for u in 0..num_users {
        let mut items: Vec<ItemId> = Vec::new();
        for i in 0..num_items {
            let p = if item_groups[i] == user_groups[u] {
                SYNTH_IN_GROUP_RATE
            } else {
                SYNTH_CROSS_GROUP_RATE
            };
            if rng.gen::<f64>() < p {
                items.push(i as ItemId);
            }
        }
        items.shuffle(&mut rng); // random chronological order
        interactions.push(items);
    }
    SyntheticRaw {
        user_groups,
        item_groups,
        categories,
        interactions,
    }
}

/// Deterministic block-structured synthetic dataset. Users and items
/// are assigned to latent groups; in-group pairs interact with
/// probability 0.3 and cross-group pairs with 0.02. The degree filter
/// is then applied exactly as in [`ingest`], so all dataset invariants
/// hold.
pub fn make_synthetic(
    num_users: usize,
    num_items: usize,
    num_categories: usize,
    seed: u64,
) -> InteractionDataset {
    let raw = synthetic_raw(num_users, num_items, num_categories, seed);
    let mut interactions = raw.interactions;
    let mut alive_user: Vec<bool> = interactions.iter().map(|v| !v.is_empty()).collect();
    let mut item_deg = vec![0usize; num_items];

    loop {
        item_deg.iter_mut().for_each(|d| *d = 0);
        for (u, items) in interactions.iter().enumerate() {
            if alive_user[u] {
                for &i in items {
                    item_deg[i as usize] += 1;
                }
            }
        }
        let mut changed = false;
        for (u, items) in interactions.iter_mut().enumerate() {
            if !alive_user[u] {
                continue;
            }
            let before = items.len();
            items.retain(|&i| item_deg[i as usize] >= MIN_INTERACTIONS);
            if items.len() != before {
                changed = true;
            }
            if items.len() < MIN_INTERACTIONS {
                alive_user[u] = false;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }

    // Dense reindex of surviving users/items, preserving order.
    let mut item_map: Vec<Option<ItemId>> = vec![None; num_items];
    let mut next_item: ItemId = 0;
    let mut positives = Vec::new();
    for (u, items) in interactions.iter().enumerate() {
        if !alive_user[u] {
            continue;
        }
        let mapped: Vec<ItemId> = items
            .iter()
            .map(|&i| {
                *item_map[i as usize].get_or_insert_with(|| {
                    let id = next_item;
                    next_item += 1;
                    id
                })
            })
            .collect();
        positives.push(mapped);
    }
    let mut categories = vec![0u32; next_item as usize];
    for (old, mapped) in item_map.iter().enumerate() {
        if let Some(new) = mapped {
            categories[*new as usize] = raw.categories[old];
        }
    }
    // Densify categories over survivors.
    let mut cat_map: HashMap<u32, u32> = HashMap::new();
    for c in categories.iter_mut() {
        let next = cat_map.len() as u32;
        *c = *cat_map.entry(*c).or_insert(next);
    }
    InteractionDataset::new(positives, categories, cat_map.len())
}
