//! C ABI for the lkp library.
//!
//! Conventions: opaque handles created and freed by this layer, integer
//! status codes (`LKP_OK` is zero), and a thread-local message
//! retrievable through [`lkp_last_error`] after any nonzero return.
//! The matching declarations live in `include/lkp.h`; keep the two in
//! sync when the surface changes.

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use lkp::data::{self, InteractionDataset, DEFAULT_SPLIT};
use lkp::diversity::{self, DiversityKernel};
use lkp::eval::{self, TargetSplit};
use lkp::model::{self, EmbeddingTable, KernelMode, Objective, TrainConfig};
use lkp::sampling::SamplerMode;

pub const LKP_OK: c_int = 0;
pub const LKP_ERR_NULL_ARGUMENT: c_int = 1;
pub const LKP_ERR_INVALID_ARGUMENT: c_int = 2;
pub const LKP_ERR_UTF8: c_int = 3;
pub const LKP_ERR_IO: c_int = 4;
pub const LKP_ERR_TRAIN: c_int = 5;
pub const LKP_ERR_PANIC: c_int = 6;

/// Opaque dataset handle.
pub struct LkpDataset(InteractionDataset);
/// Opaque diversity-kernel handle (always the frozen low-rank form).
pub struct LkpKernel(diversity::PretrainedKernel);
/// Opaque model handle holding trained embeddings.
pub struct LkpModel(EmbeddingTable);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn fail(code: c_int, message: impl Into<String>) -> c_int {
    let message = message.into();
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(message).unwrap_or_default();
    });
    code
}

fn guarded(body: impl FnOnce() -> c_int) -> c_int {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(code) => code,
        Err(_) => fail(LKP_ERR_PANIC, "internal panic"),
    }
}

/// # Safety
/// `ptr` must be a valid NUL-terminated string.
unsafe fn path_arg<'a>(ptr: *const c_char) -> Result<&'a Path, c_int> {
    if ptr.is_null() {
        return Err(fail(LKP_ERR_NULL_ARGUMENT, "path is null"));
    }
    CStr::from_ptr(ptr)
        .to_str()
        .map(Path::new)
        .map_err(|_| fail(LKP_ERR_UTF8, "path is not valid UTF-8"))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn lkp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Message for the most recent error on this thread. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn lkp_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Frees a string returned by this library.
///
/// # Safety
/// `s` must have been returned by an `lkp_*` function and not freed yet.
#[no_mangle]
pub unsafe extern "C" fn lkp_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Builds the seeded block-structured synthetic dataset, already split
/// into train/validation/test.
///
/// # Safety
/// `out` must point to writable storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn lkp_dataset_synthetic(
    users: u32,
    items: u32,
    categories: u32,
    seed: u64,
    out: *mut *mut LkpDataset,
) -> c_int {
    guarded(|| {
        if out.is_null() {
            return fail(LKP_ERR_NULL_ARGUMENT, "out is null");
        }
        let dataset =
            data::make_synthetic(users as usize, items as usize, categories as usize, seed);
        if dataset.num_users == 0 {
            return fail(
                LKP_ERR_INVALID_ARGUMENT,
                "synthetic dataset is empty after the degree filter",
            );
        }
        match dataset.split(DEFAULT_SPLIT, seed) {
            Ok(split) => {
                *out = Box::into_raw(Box::new(LkpDataset(split)));
                LKP_OK
            }
            Err(e) => fail(LKP_ERR_INVALID_ARGUMENT, e.to_string()),
        }
    })
}

/// # Safety
/// `path` must be a valid NUL-terminated string; `out` must point to
/// writable storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn lkp_dataset_load(
    path: *const c_char,
    out: *mut *mut LkpDataset,
) -> c_int {
    guarded(|| {
        if out.is_null() {
            return fail(LKP_ERR_NULL_ARGUMENT, "out is null");
        }
        let path = match path_arg(path) {
            Ok(p) => p,
            Err(code) => return code,
        };
        match InteractionDataset::load(path) {
            Ok(ds) => {
                *out = Box::into_raw(Box::new(LkpDataset(ds)));
                LKP_OK
            }
            Err(e) => fail(LKP_ERR_IO, e.to_string()),
        }
    })
}

/// # Safety
/// `dataset` must be a live handle; `path` a valid string.
#[no_mangle]
pub unsafe extern "C" fn lkp_dataset_save(
    dataset: *const LkpDataset,
    path: *const c_char,
) -> c_int {
    guarded(|| {
        let Some(ds) = dataset.as_ref() else {
            return fail(LKP_ERR_NULL_ARGUMENT, "dataset is null");
        };
        let path = match path_arg(path) {
            Ok(p) => p,
            Err(code) => return code,
        };
        match ds.0.save(path) {
            Ok(()) => LKP_OK,
            Err(e) => fail(LKP_ERR_IO, e.to_string()),
        }
    })
}

/// # Safety
/// `dataset` must be a live handle; out parameters may be null to skip.
#[no_mangle]
pub unsafe extern "C" fn lkp_dataset_stats(
    dataset: *const LkpDataset,
    users: *mut u32,
    items: *mut u32,
    categories: *mut u32,
    interactions: *mut u64,
) -> c_int {
    guarded(|| {
        let Some(ds) = dataset.as_ref() else {
            return fail(LKP_ERR_NULL_ARGUMENT, "dataset is null");
        };
        if !users.is_null() {
            *users = ds.0.num_users as u32;
        }
        if !items.is_null() {
            *items = ds.0.num_items as u32;
        }
        if !categories.is_null() {
            *categories = ds.0.num_categories as u32;
        }
        if !interactions.is_null() {
            *interactions = ds.0.total_interactions() as u64;
        }
        LKP_OK
    })
}

/// # Safety
/// `dataset` must be a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn lkp_dataset_free(dataset: *mut LkpDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// Pre-trains the diversity kernel from the dataset's diverse set
/// pairs and freezes it with unit self-similarity.
///
/// # Safety
/// `dataset` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn lkp_kernel_train(
    dataset: *const LkpDataset,
    rank: u32,
    set_size: u32,
    epochs: u32,
    learning_rate: f64,
    seed: u64,
    out: *mut *mut LkpKernel,
) -> c_int {
    guarded(|| {
        let Some(ds) = dataset.as_ref() else {
            return fail(LKP_ERR_NULL_ARGUMENT, "dataset is null");
        };
        if out.is_null() {
            return fail(LKP_ERR_NULL_ARGUMENT, "out is null");
        }
        let set_size = set_size as usize;
        let min_categories = diversity::default_min_categories(set_size);
        let pairs =
            match diversity::build_diverse_training_pairs(&ds.0, set_size, min_categories, seed) {
                Ok(p) => p,
                Err(e) => return fail(LKP_ERR_INVALID_ARGUMENT, e.to_string()),
            };
        match diversity::train_diversity_kernel(
            &pairs,
            ds.0.num_items,
            rank as usize,
            epochs as usize,
            learning_rate,
            seed,
        ) {
            Ok(mut kernel) => {
                kernel.normalize_rows();
                *out = Box::into_raw(Box::new(LkpKernel(kernel)));
                LKP_OK
            }
            Err(e) => fail(LKP_ERR_TRAIN, e.to_string()),
        }
    })
}

/// # Safety
/// `path` must be a valid string; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn lkp_kernel_load(path: *const c_char, out: *mut *mut LkpKernel) -> c_int {
    guarded(|| {
        if out.is_null() {
            return fail(LKP_ERR_NULL_ARGUMENT, "out is null");
        }
        let path = match path_arg(path) {
            Ok(p) => p,
            Err(code) => return code,
        };
        match diversity::load_kernel(path) {
            Ok(kernel) => {
                *out = Box::into_raw(Box::new(LkpKernel(kernel)));
                LKP_OK
            }
            Err(e) => fail(LKP_ERR_IO, e.to_string()),
        }
    })
}

/// # Safety
/// `kernel` must be a live handle; `path` a valid string.
#[no_mangle]
pub unsafe extern "C" fn lkp_kernel_save(kernel: *const LkpKernel, path: *const c_char) -> c_int {
    guarded(|| {
        let Some(k) = kernel.as_ref() else {
            return fail(LKP_ERR_NULL_ARGUMENT, "kernel is null");
        };
        let path = match path_arg(path) {
            Ok(p) => p,
            Err(code) => return code,
        };
        match diversity::save_kernel(path, &k.0) {
            Ok(()) => LKP_OK,
            Err(e) => fail(LKP_ERR_IO, e.to_string()),
        }
    })
}

/// Similarity entry K[i][j] of a frozen kernel.
///
/// # Safety
/// `kernel` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn lkp_kernel_entry(
    kernel: *const LkpKernel,
    item_i: u32,
    item_j: u32,
    out: *mut f64,
) -> c_int {
    guarded(|| {
        let Some(k) = kernel.as_ref() else {
            return fail(LKP_ERR_NULL_ARGUMENT, "kernel is null");
        };
        if out.is_null() {
            return fail(LKP_ERR_NULL_ARGUMENT, "out is null");
        }
        match k.0.entry(item_i, item_j) {
            Ok(v) => {
                *out = v;
                LKP_OK
            }
            Err(e) => fail(LKP_ERR_INVALID_ARGUMENT, e.to_string()),
        }
    })
}

/// # Safety
/// `kernel` must be a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn lkp_kernel_free(kernel: *mut LkpKernel) {
    if !kernel.is_null() {
        drop(Box::from_raw(kernel));
    }
}

/// Trains a ranking model. `objective` is one of `lkp_ps`, `lkp_nps`,
/// `bpr`, `bce`; `sampler` is `s` or `r`. A null `kernel` selects the
/// live Gaussian diversity mode; otherwise the frozen kernel is used.
///
/// # Safety
/// Handles must be live; strings valid; `out` writable.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn lkp_model_train(
    dataset: *const LkpDataset,
    kernel: *const LkpKernel,
    objective: *const c_char,
    sampler: *const c_char,
    k: u32,
    n: u32,
    embedding_dim: u32,
    epochs: u32,
    learning_rate: f64,
    seed: u64,
    out: *mut *mut LkpModel,
) -> c_int {
    guarded(|| {
        let Some(ds) = dataset.as_ref() else {
            return fail(LKP_ERR_NULL_ARGUMENT, "dataset is null");
        };
        if out.is_null() {
            return fail(LKP_ERR_NULL_ARGUMENT, "out is null");
        }
        let parse_str = |ptr: *const c_char, what: &str| -> Result<String, c_int> {
            if ptr.is_null() {
                return Err(fail(LKP_ERR_NULL_ARGUMENT, format!("{what} is null")));
            }
            CStr::from_ptr(ptr)
                .to_str()
                .map(str::to_owned)
                .map_err(|_| fail(LKP_ERR_UTF8, format!("{what} is not valid UTF-8")))
        };
        let objective = match parse_str(objective, "objective") {
            Ok(s) => s,
            Err(code) => return code,
        };
        let sampler = match parse_str(sampler, "sampler") {
            Ok(s) => s,
            Err(code) => return code,
        };
        let objective: Objective = match objective.parse() {
            Ok(o) => o,
            Err(e) => return fail(LKP_ERR_INVALID_ARGUMENT, e),
        };
        let sampler: SamplerMode = match sampler.parse() {
            Ok(s) => s,
            Err(e) => return fail(LKP_ERR_INVALID_ARGUMENT, e),
        };
        let (kernel_mode, div_kernel) = match kernel.as_ref() {
            Some(handle) => (
                KernelMode::Pretrained,
                DiversityKernel::Pretrained(handle.0.clone()),
            ),
            None => (KernelMode::Gaussian, DiversityKernel::Gaussian { sigma: 1.0 }),
        };
        let config = TrainConfig {
            objective,
            sampler,
            kernel_mode,
            k: k as usize,
            n: n as usize,
            embedding_dim: embedding_dim as usize,
            epochs: epochs as usize,
            learning_rate,
            seed,
            ..TrainConfig::default()
        };
        if let Err(e) = config.validate() {
            return fail(LKP_ERR_INVALID_ARGUMENT, e.to_string());
        }
        match model::train(&config, &ds.0, &div_kernel) {
            Ok(outcome) => {
                *out = Box::into_raw(Box::new(LkpModel(outcome.best)));
                LKP_OK
            }
            Err(e) => fail(LKP_ERR_TRAIN, e.to_string()),
        }
    })
}

/// # Safety
/// `path` must be a valid string; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn lkp_model_load(path: *const c_char, out: *mut *mut LkpModel) -> c_int {
    guarded(|| {
        if out.is_null() {
            return fail(LKP_ERR_NULL_ARGUMENT, "out is null");
        }
        let path = match path_arg(path) {
            Ok(p) => p,
            Err(code) => return code,
        };
        match EmbeddingTable::load(path) {
            Ok(table) => {
                *out = Box::into_raw(Box::new(LkpModel(table)));
                LKP_OK
            }
            Err(e) => fail(LKP_ERR_IO, e.to_string()),
        }
    })
}

/// # Safety
/// `model` must be a live handle; `path` a valid string.
#[no_mangle]
pub unsafe extern "C" fn lkp_model_save(model: *const LkpModel, path: *const c_char) -> c_int {
    guarded(|| {
        let Some(m) = model.as_ref() else {
            return fail(LKP_ERR_NULL_ARGUMENT, "model is null");
        };
        let path = match path_arg(path) {
            Ok(p) => p,
            Err(code) => return code,
        };
        match m.0.save(path) {
            Ok(()) => LKP_OK,
            Err(e) => fail(LKP_ERR_IO, e.to_string()),
        }
    })
}

/// Top-N recommendations for one user, excluding the user's train and
/// validation items. `io_len` carries the buffer capacity in and the
/// number of items written out.
///
/// # Safety
/// `items` must point to at least `*io_len` writable u32 slots.
#[no_mangle]
pub unsafe extern "C" fn lkp_model_recommend(
    model: *const LkpModel,
    dataset: *const LkpDataset,
    user: u32,
    items: *mut u32,
    io_len: *mut usize,
) -> c_int {
    guarded(|| {
        let Some(m) = model.as_ref() else {
            return fail(LKP_ERR_NULL_ARGUMENT, "model is null");
        };
        let Some(ds) = dataset.as_ref() else {
            return fail(LKP_ERR_NULL_ARGUMENT, "dataset is null");
        };
        if items.is_null() || io_len.is_null() {
            return fail(LKP_ERR_NULL_ARGUMENT, "items/io_len is null");
        }
        if user as usize >= ds.0.num_users {
            return fail(LKP_ERR_INVALID_ARGUMENT, format!("unknown user {user}"));
        }
        let capacity = *io_len;
        let exclude: std::collections::HashSet<u32> = match (
            ds.0.train_items(user),
            ds.0.validation_items(user),
        ) {
            (Ok(train), Ok(val)) => train.iter().chain(val).copied().collect(),
            _ => return fail(LKP_ERR_INVALID_ARGUMENT, "dataset has no splits"),
        };
        let recs = eval::recommend_top_n(&m.0, user, capacity, &exclude);
        for (slot, item) in recs.iter().enumerate() {
            *items.add(slot) = *item;
        }
        *io_len = recs.len();
        LKP_OK
    })
}

/// Test-split evaluation at cutoffs 5, 10, 20, returned as a JSON
/// string to free with [`lkp_string_free`].
///
/// # Safety
/// Handles must be live; `out_json` writable.
#[no_mangle]
pub unsafe extern "C" fn lkp_model_evaluate_json(
    model: *const LkpModel,
    dataset: *const LkpDataset,
    out_json: *mut *mut c_char,
) -> c_int {
    guarded(|| {
        let Some(m) = model.as_ref() else {
            return fail(LKP_ERR_NULL_ARGUMENT, "model is null");
        };
        let Some(ds) = dataset.as_ref() else {
            return fail(LKP_ERR_NULL_ARGUMENT, "dataset is null");
        };
        if out_json.is_null() {
            return fail(LKP_ERR_NULL_ARGUMENT, "out_json is null");
        }
        match eval::evaluate_split(&m.0, &ds.0, TargetSplit::Test, &[5, 10, 20]) {
            Ok(report) => {
                let json = serde_json::to_string(&report).unwrap_or_default();
                match CString::new(json) {
                    Ok(s) => {
                        *out_json = s.into_raw();
                        LKP_OK
                    }
                    Err(_) => fail(LKP_ERR_PANIC, "report contained an interior NUL"),
                }
            }
            Err(e) => fail(LKP_ERR_INVALID_ARGUMENT, e.to_string()),
        }
    })
}

/// # Safety
/// `model` must be a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn lkp_model_free(model: *mut LkpModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}
