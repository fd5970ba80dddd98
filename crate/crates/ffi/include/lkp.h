/* C interface for the lkp ranking library.
 *
 * Conventions:
 *   - Every fallible call returns an int status; LKP_OK (0) is success.
 *   - After a nonzero status, lkp_last_error() returns a thread-local
 *     message valid until the next failing call on the same thread.
 *   - Handles are opaque; free them with the matching *_free function.
 *   - Strings returned by the library are freed with lkp_string_free.
 *
 * Keep these declarations in sync with src/lib.rs.
 */

#ifndef LKP_H
#define LKP_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

enum LkpStatus {
    LKP_OK = 0,
    LKP_ERR_NULL_ARGUMENT = 1,
    LKP_ERR_INVALID_ARGUMENT = 2,
    LKP_ERR_UTF8 = 3,
    LKP_ERR_IO = 4,
    LKP_ERR_TRAIN = 5,
    LKP_ERR_PANIC = 6,
};

typedef struct LkpDataset LkpDataset;
typedef struct LkpKernel LkpKernel;
typedef struct LkpModel LkpModel;

const char *lkp_version(void);
const char *lkp_last_error(void);
void lkp_string_free(char *s);

/* Datasets ---------------------------------------------------------- */

/* Seeded block-structured synthetic dataset, split 70/10/20. */
int lkp_dataset_synthetic(uint32_t users, uint32_t items, uint32_t categories,
                          uint64_t seed, LkpDataset **out);
int lkp_dataset_load(const char *path, LkpDataset **out);
int lkp_dataset_save(const LkpDataset *dataset, const char *path);
/* Any out-pointer may be NULL to skip that statistic. */
int lkp_dataset_stats(const LkpDataset *dataset, uint32_t *users,
                      uint32_t *items, uint32_t *categories,
                      uint64_t *interactions);
void lkp_dataset_free(LkpDataset *dataset);

/* Diversity kernels -------------------------------------------------- */

/* Pre-train the low-rank diversity kernel from diverse set pairs and
 * freeze it with unit self-similarity. */
int lkp_kernel_train(const LkpDataset *dataset, uint32_t rank,
                     uint32_t set_size, uint32_t epochs,
                     double learning_rate, uint64_t seed, LkpKernel **out);
int lkp_kernel_load(const char *path, LkpKernel **out);
int lkp_kernel_save(const LkpKernel *kernel, const char *path);
int lkp_kernel_entry(const LkpKernel *kernel, uint32_t item_i,
                     uint32_t item_j, double *out);
void lkp_kernel_free(LkpKernel *kernel);

/* Models ------------------------------------------------------------- */

/* objective: "lkp_ps", "lkp_nps", "bpr", or "bce"; sampler: "s" or "r".
 * A NULL kernel selects the live Gaussian diversity mode. */
int lkp_model_train(const LkpDataset *dataset, const LkpKernel *kernel,
                    const char *objective, const char *sampler, uint32_t k,
                    uint32_t n, uint32_t embedding_dim, uint32_t epochs,
                    double learning_rate, uint64_t seed, LkpModel **out);
int lkp_model_load(const char *path, LkpModel **out);
int lkp_model_save(const LkpModel *model, const char *path);
/* items must hold *io_len slots; on return *io_len is the count
 * written. Train and validation items of the user are excluded. */
int lkp_model_recommend(const LkpModel *model, const LkpDataset *dataset,
                        uint32_t user, uint32_t *items, size_t *io_len);
/* Test-split metrics at cutoffs 5/10/20 as a JSON string; free it with
 * lkp_string_free. */
int lkp_model_evaluate_json(const LkpModel *model, const LkpDataset *dataset,
                            char **out_json);
void lkp_model_free(LkpModel *model);

#ifdef __cplusplus
}
#endif

#endif /* LKP_H */
