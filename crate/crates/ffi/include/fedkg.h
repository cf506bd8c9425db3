#ifndef FEDKG_H
#define FEDKG_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum FedkgPreset {
  /**
   * Sparse graph with few relations and hub tails.
   */
  FEDKG_PRESET_SPARSE = 0,
  /**
   * Dense graph with heavy entity overlap between clients.
   */
  FEDKG_PRESET_DENSE = 1,
} FedkgPreset;

typedef enum FedkgStatus {
  FEDKG_STATUS_OK = 0,
  FEDKG_STATUS_NULL_POINTER = 1,
  FEDKG_STATUS_INVALID_UTF8 = 2,
  FEDKG_STATUS_VALIDATION = 3,
  FEDKG_STATUS_IO = 4,
  FEDKG_STATUS_OUT_OF_RANGE = 5,
  FEDKG_STATUS_RUNTIME = 6,
  FEDKG_STATUS_PANIC = 7,
} FedkgStatus;

/**
 * A loaded knowledge graph.
 */
typedef struct FedkgGraph FedkgGraph;

/**
 * Client partitions of a graph.
 */
typedef struct FedkgSplit FedkgSplit;

/**
 * One client's trained embeddings.
 */
typedef struct FedkgTable FedkgTable;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the most recent failure on this thread. Valid until the next
 * failing call on the same thread; never null.
 */
const char *fedkg_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *fedkg_version(void);

/**
 * Loads a tab-separated triple file.
 */
enum FedkgStatus fedkg_graph_load(const char *path, struct FedkgGraph **out);

/**
 * Generates a seeded synthetic graph.
 */
enum FedkgStatus fedkg_graph_synthetic(enum FedkgPreset preset,
                                       uint64_t seed,
                                       struct FedkgGraph **out);

size_t fedkg_graph_num_triples(const struct FedkgGraph *graph);

size_t fedkg_graph_num_entities(const struct FedkgGraph *graph);

size_t fedkg_graph_num_relations(const struct FedkgGraph *graph);

/**
 * Writes the graph as named tab-separated triples.
 */
enum FedkgStatus fedkg_graph_write(const struct FedkgGraph *graph, const char *path);

void fedkg_graph_free(struct FedkgGraph *graph);

/**
 * Splits a graph over `num_clients` clients with 80/10/10 local ratios.
 */
enum FedkgStatus fedkg_split(const struct FedkgGraph *graph,
                             size_t num_clients,
                             uint64_t seed,
                             struct FedkgSplit **out);

size_t fedkg_split_num_clients(const struct FedkgSplit *split);

/**
 * Train/valid/test sizes and local entity count of one client.
 */
enum FedkgStatus fedkg_split_client_sizes(const struct FedkgSplit *split,
                                          size_t client,
                                          size_t *train,
                                          size_t *valid,
                                          size_t *test,
                                          size_t *entities);

/**
 * Writes client directories, dictionaries and stats under `dir`.
 */
enum FedkgStatus fedkg_split_write(const struct FedkgSplit *split,
                                   const struct FedkgGraph *graph,
                                   const char *dir);

void fedkg_split_free(struct FedkgSplit *split);

/**
 * Loads a client checkpoint written by the `train` command.
 */
enum FedkgStatus fedkg_table_load(const char *path, struct FedkgTable **out);

size_t fedkg_table_num_entities(const struct FedkgTable *table);

size_t fedkg_table_num_relations(const struct FedkgTable *table);

size_t fedkg_table_entity_width(const struct FedkgTable *table);

/**
 * Copies entity `id`'s vector into `out`, which must hold `len` values
 * where `len` equals the entity width.
 */
enum FedkgStatus fedkg_table_entity(const struct FedkgTable *table,
                                    size_t id,
                                    double *out,
                                    size_t len);

/**
 * Plausibility score of `(head, relation, tail)` under the L2 norm.
 */
enum FedkgStatus fedkg_table_score(const struct FedkgTable *table,
                                   uint32_t head,
                                   uint32_t relation,
                                   uint32_t tail,
                                   double *out);

void fedkg_table_free(struct FedkgTable *table);

/**
 * Runs `split`, `train`, `attack` or `report` from a manifest file,
 * exactly as the command-line tool does.
 */
enum FedkgStatus fedkg_run_command(const char *command, const char *manifest);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FEDKG_H */
