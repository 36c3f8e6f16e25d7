#ifndef ACCELVIP_H
#define ACCELVIP_H

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

/**
 * Bytes in a packed register transaction: 105 bits, MSB first, low pad
 * bits zero.
 */
#define AV_REG_PACKED_BYTES 14

typedef enum AvStatus {
  AvOk = 0,
  /**
   * A required pointer argument was null.
   */
  AvErrNull = 1,
  /**
   * Bad key, value, or topology.
   */
  AvErrConfig = 2,
  AvErrUnknownTest = 3,
  AvErrLink = 4,
  /**
   * A field or packed vector is out of range.
   */
  AvErrCodec = 5,
  /**
   * The run aborted; functional failures are reported on the outcome.
   */
  AvErrRun = 6,
  AvErrPanic = 7,
} AvStatus;

/**
 * Result of one run.
 */
typedef struct AvOutcome AvOutcome;

/**
 * Run configuration handle.
 */
typedef struct AvRunConfig AvRunConfig;

/**
 * Register transaction in record form. Booleans are 0 or 1.
 */
typedef struct AvRegPacket {
  uint8_t req;
  uint8_t eop;
  uint32_t addr;
  uint32_t data;
  /**
   * 4 bits; 0 marks a read.
   */
  uint8_t be;
  uint8_t r_req;
  uint32_t r_data;
  /**
   * 2 bits.
   */
  uint8_t r_opc;
} AvRegPacket;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version, static storage.
 */
const char *av_version(void);

/**
 * Copies this thread's last error message into `buf`. Returns its full
 * length; 0 means no error has been recorded.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
uintptr_t av_last_error(char *buf, uintptr_t len);

/**
 * Creates a configuration for a built-in test with its default topology.
 *
 * # Safety
 * `test` must be a valid string and `out` a valid pointer.
 */
enum AvStatus av_run_config_new(const char *test, struct AvRunConfig **out);

/**
 * Sets one key with the same names and syntax as a flat config file.
 *
 * # Safety
 * `cfg` must come from [`av_run_config_new`]; `key` and `value` must be
 * valid strings.
 */
enum AvStatus av_run_config_set(struct AvRunConfig *cfg, const char *key, const char *value);

/**
 * # Safety
 * `cfg` must be null or come from [`av_run_config_new`], freed once.
 */
void av_run_config_free(struct AvRunConfig *cfg);

/**
 * Runs the configured test to completion. A functional failure still
 * returns `AvOk`; inspect the outcome.
 *
 * # Safety
 * `cfg` must come from [`av_run_config_new`] and `out` be a valid pointer.
 */
enum AvStatus av_run(const struct AvRunConfig *cfg, struct AvOutcome **out);

/**
 * # Safety
 * `o` must be null or a live outcome.
 */
bool av_outcome_passed(const struct AvOutcome *o);

/**
 * 0 clean, 1 mismatch; 2 for a null handle.
 *
 * # Safety
 * `o` must be null or a live outcome.
 */
int32_t av_outcome_exit_code(const struct AvOutcome *o);

/**
 * # Safety
 * `o` must be null or a live outcome.
 */
uint64_t av_outcome_cycles(const struct AvOutcome *o);

/**
 * # Safety
 * `o` must be null or a live outcome.
 */
uint64_t av_outcome_transactions(const struct AvOutcome *o);

/**
 * Percentage of coverage bins hit, 0 to 100.
 *
 * # Safety
 * `o` must be null or a live outcome.
 */
double av_outcome_coverage_percent(const struct AvOutcome *o);

/**
 * Copies the verdict line into `buf`; returns its full length.
 *
 * # Safety
 * `o` must be null or a live outcome; `buf` must be null or point to `len`
 * writable bytes.
 */
uintptr_t av_outcome_verdict(const struct AvOutcome *o, char *buf, uintptr_t len);

/**
 * # Safety
 * `o` must be null or a live outcome, freed once.
 */
void av_outcome_free(struct AvOutcome *o);

/**
 * Packs a record into [`AV_REG_PACKED_BYTES`] bytes.
 *
 * # Safety
 * `p` must be valid and `out` must point to `AV_REG_PACKED_BYTES` bytes.
 */
enum AvStatus av_reg_pack(const struct AvRegPacket *p, uint8_t *out);

/**
 * Unpacks [`AV_REG_PACKED_BYTES`] bytes. Nonzero pad bits are an error.
 *
 * # Safety
 * `bytes` must point to `AV_REG_PACKED_BYTES` bytes and `out` be valid.
 */
enum AvStatus av_reg_unpack(const uint8_t *bytes, struct AvRegPacket *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ACCELVIP_H */
