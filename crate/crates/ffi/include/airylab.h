#ifndef AIRYLAB_H
#define AIRYLAB_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Beam-training methods that need no network.
#define ABL_METHOD_AIRY_BS 0

#define ABL_METHOD_FOCUS_BS 1

#define ABL_METHOD_AIRY_HIER 2

// Result code of every fallible call.
typedef enum {
  ABL_STATUS_OK = 0,
  ABL_STATUS_NULL_POINTER = 1,
  ABL_STATUS_INVALID_UTF8 = 2,
  ABL_STATUS_SAMPLING = 3,
  ABL_STATUS_GEOMETRY = 4,
  ABL_STATUS_PARAMETER = 5,
  ABL_STATUS_UNSUPPORTED_ORACLE = 6,
  ABL_STATUS_INPUT = 7,
  ABL_STATUS_SIZE = 8,
  ABL_STATUS_FORMAT = 9,
  ABL_STATUS_WEIGHTS = 10,
  ABL_STATUS_CONFIG = 11,
  ABL_STATUS_IO = 12,
  ABL_STATUS_BUFFER_TOO_SMALL = 13,
  ABL_STATUS_PANIC = 14,
} AblStatus;

typedef struct AblCodebook AblCodebook;

typedef struct AblNetwork AblNetwork;

// Scenario with its grid and propagator.
typedef struct AblScenario AblScenario;

// Outcome of one beam search.
typedef struct {
  uint32_t l1;
  uint32_t l2;
  uint32_t l3;
  double theta;
  double r;
  double c;
  double gain;
  uint64_t overhead;
} AblSearchResult;

// Caustic point generated by one aperture position.
typedef struct {
  double x;
  double y;
  // Nonzero when the point lies in front of the aperture.
  int32_t valid;
} AblCausticPoint;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *abl_version(void);

// Copies the calling thread's last error message into `buf`. Returns the
// buffer size the full message needs, including the NUL, or 0 when no
// error has been recorded. A short buffer receives a truncated message.
//
// # Safety
// `buf` must be null or valid for `len` bytes.
size_t abl_last_error(char *buf, size_t len);

// Builds a scenario from scenario JSON. `padding_factor` 0 selects the
// default row padding.
//
// # Safety
// `json` must be a NUL-terminated string; `out` must be valid for writes.
AblStatus abl_scenario_new(const char *json, uint32_t padding_factor, AblScenario **out_);

// # Safety
// `scenario` must be null or a handle from [`abl_scenario_new`] not yet freed.
void abl_scenario_free(AblScenario *scenario);

// Writes the scenario hash (16 hex digits and a NUL) into `buf`.
//
// # Safety
// `scenario` must be a live handle; `buf` must be valid for `len` bytes.
AblStatus abl_scenario_hash(const AblScenario *scenario, char *buf, size_t len);

// Grid dimensions of the scenario.
//
// # Safety
// `scenario` must be a live handle; `cols` and `rows` valid for writes.
AblStatus abl_scenario_grid(const AblScenario *scenario, size_t *cols, size_t *rows);

// Fraction of array elements whose line of sight to `(x, y)` is blocked.
//
// # Safety
// `scenario` must be a live handle; `ratio` valid for writes.
AblStatus abl_blockage_ratio(const AblScenario *scenario, double x, double y, double *ratio);

// Propagates the codeword `(theta, r, c)` and samples the field at `n`
// points given as interleaved `x, y` pairs. Writes interleaved `re, im`
// pairs to `field`. Pass `r = INFINITY` for a steering beam.
//
// # Safety
// `points` must hold `2n` doubles and `field` room for `2n` doubles.
AblStatus abl_field_at(const AblScenario *scenario,
                       double theta,
                       double r,
                       double c,
                       const double *points,
                       size_t n,
                       double *field);

// Builds an Airy codebook from codebook-spec JSON for the scenario's array.
//
// # Safety
// `scenario` must be a live handle, `json` NUL-terminated and `out` valid.
AblStatus abl_codebook_new(const AblScenario *scenario, const char *json, AblCodebook **out_);

// # Safety
// `codebook` must be null or a live handle.
void abl_codebook_free(AblCodebook *codebook);

// Number of codewords, or 0 for a null handle.
//
// # Safety
// `codebook` must be null or a live handle.
size_t abl_codebook_len(const AblCodebook *codebook);

// Runs a network-free search (`ABL_METHOD_*`) at receiver `(x, y)`.
//
// # Safety
// Handles must be live; `result` valid for writes.
AblStatus abl_search(const AblScenario *scenario,
                     const AblCodebook *codebook,
                     int32_t method,
                     double x,
                     double y,
                     AblSearchResult *result);

// Loads an `AMPW0001` weights file.
//
// # Safety
// `path` must be NUL-terminated; `out` valid for writes.
AblStatus abl_network_load(const char *path, AblNetwork **out_);

// Parses `AMPW0001` bytes held in memory.
//
// # Safety
// `bytes` must be valid for `len` bytes; `out` valid for writes.
AblStatus abl_network_from_bytes(const uint8_t *bytes, size_t len, AblNetwork **out_);

// # Safety
// `network` must be null or a live handle.
void abl_network_free(AblNetwork *network);

// Writes the class count of each task into `counts` and the task count
// into `tasks`. Call with `len = 0` to query the task count.
//
// # Safety
// `counts` must have room for `len` values; `tasks` valid for writes.
AblStatus abl_network_classes(const AblNetwork *network, size_t *counts, size_t len, size_t *tasks);

// Class probabilities for one complex beam pattern of length `n`, all
// tasks concatenated in task order.
//
// # Safety
// `re` and `im` must hold `n` doubles; `probs` room for `len` doubles.
AblStatus abl_network_forward(const AblNetwork *network,
                              const double *re,
                              const double *im,
                              size_t n,
                              double *probs,
                              size_t len);

// DFT sweep, inference and candidate sweep at `(x, y)` with `k[i]`
// candidates for task `i`.
//
// # Safety
// Handles must be live; `k` must hold `k_len` values; `result` valid.
AblStatus abl_dl_search(const AblScenario *scenario,
                        const AblCodebook *codebook,
                        const AblNetwork *network,
                        double x,
                        double y,
                        const size_t *k,
                        size_t k_len,
                        AblSearchResult *result);

// Caustic point of the ray family leaving aperture position `y0`.
//
// # Safety
// `point` must be valid for writes.
AblStatus abl_caustic_point(double theta,
                            double r,
                            double c,
                            double kappa,
                            double y0,
                            AblCausticPoint *point);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* AIRYLAB_H */
