#ifndef ANISOTILT_H
#define ANISOTILT_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum AnisotiltStatus {
  ANISOTILT_STATUS_OK = 0,
  /**
   * A required pointer argument was NULL.
   */
  ANISOTILT_STATUS_NULL_POINTER = 1,
  /**
   * Invalid parameter or configuration.
   */
  ANISOTILT_STATUS_USAGE = 2,
  /**
   * Unreadable, malformed or insufficient input data.
   */
  ANISOTILT_STATUS_DATA = 3,
  /**
   * A numerical procedure failed.
   */
  ANISOTILT_STATUS_NUMERICAL = 4,
  /**
   * A caller-supplied buffer is too small.
   */
  ANISOTILT_STATUS_BUFFER_TOO_SMALL = 5,
  /**
   * Internal panic; the library state is unchanged.
   */
  ANISOTILT_STATUS_PANIC = 6,
} AnisotiltStatus;

/**
 * Registration applied before fusion or estimation.
 */
typedef enum AnisotiltRegistration {
  ANISOTILT_REGISTRATION_NONE = 0,
  ANISOTILT_REGISTRATION_GLOBAL = 1,
  ANISOTILT_REGISTRATION_BMA = 2,
} AnisotiltRegistration;

/**
 * Opaque optical configuration.
 */
typedef struct AnisotiltOptics AnisotiltOptics;

/**
 * Opaque frame sequence under construction or ready for processing.
 */
typedef struct AnisotiltSequence AnisotiltSequence;

typedef struct AnisotiltStats {
  double r0_m;
  double d_over_r0;
  double isoplanatic_angle_px;
  double tilt_variance_px2;
  double rms_tilt_px;
} AnisotiltStats;

typedef struct AnisotiltBudget {
  double tilt_variance_px2;
  double patch_variance_px2;
  double residual_variance_px2;
  double alpha;
} AnisotiltBudget;

typedef struct AnisotiltEstimate {
  double r0_m;
  /**
   * Gaussian tilt-OTF width, cycles/m.
   */
  double sigma_g;
  double alpha;
  double fit_rms;
} AnisotiltEstimate;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *anisotilt_version(void);

/**
 * Copies the calling thread's last error message into `buf` (truncated, always
 * NUL-terminated when `len > 0`) and returns the full message length excluding the NUL.
 * Returns 0 if no error has occurred.
 *
 * # Safety
 * `buf` must be NULL or valid for `len` bytes.
 */
size_t anisotilt_last_error(char *buf, size_t len);

/**
 * Creates an optical configuration (all lengths in metres).
 *
 * # Safety
 * `out` must be NULL or valid for writes.
 */
enum AnisotiltStatus anisotilt_optics_new(double aperture_diameter,
                                          double focal_length,
                                          double wavelength,
                                          double path_length,
                                          double pixel_pitch,
                                          struct AnisotiltOptics **out);

/**
 * The built-in reference camera.
 *
 * # Safety
 * `out` must be NULL or valid for writes.
 */
enum AnisotiltStatus anisotilt_optics_reference(struct AnisotiltOptics **out);

/**
 * # Safety
 * `optics` must be NULL or a handle from `anisotilt_optics_*` not yet freed.
 */
void anisotilt_optics_free(struct AnisotiltOptics *optics);

/**
 * Turbulence statistics for a constant Cn² (m^(-2/3)) path.
 *
 * # Safety
 * `optics` must be a live handle; `out` must be valid for writes.
 */
enum AnisotiltStatus anisotilt_stats(const struct AnisotiltOptics *optics,
                                     double cn2,
                                     struct AnisotiltStats *out);

/**
 * Tilt budget for `(2M+1)²` patch registration with error-to-signal ratio `epsilon`.
 *
 * # Safety
 * `optics` must be a live handle; `out` must be valid for writes.
 */
enum AnisotiltStatus anisotilt_patch_budget(const struct AnisotiltOptics *optics,
                                            double cn2,
                                            size_t half_width,
                                            double epsilon,
                                            struct AnisotiltBudget *out);

/**
 * Creates an empty sequence whose frames are `rows × cols`.
 *
 * # Safety
 * `out` must be valid for writes.
 */
enum AnisotiltStatus anisotilt_sequence_new(size_t rows,
                                            size_t cols,
                                            struct AnisotiltSequence **out);

/**
 * Appends a copy of one row-major frame of `len` doubles (which must equal `rows * cols`).
 *
 * # Safety
 * `seq` must be a live handle; `data` must be valid for `len` reads.
 */
enum AnisotiltStatus anisotilt_sequence_push(struct AnisotiltSequence *seq,
                                             const double *data,
                                             size_t len);

/**
 * Number of frames pushed so far; 0 for NULL.
 *
 * # Safety
 * `seq` must be NULL or a live handle.
 */
size_t anisotilt_sequence_len(const struct AnisotiltSequence *seq);

/**
 * # Safety
 * `seq` must be NULL or a handle from `anisotilt_sequence_new` not yet freed.
 */
void anisotilt_sequence_free(struct AnisotiltSequence *seq);

/**
 * Spectral-ratio Fried parameter estimate with default estimator options.
 * `half_width` is only used for BMA registration.
 *
 * # Safety
 * `seq` and `optics` must be live handles; `out` must be valid for writes.
 */
enum AnisotiltStatus anisotilt_estimate_r0(const struct AnisotiltSequence *seq,
                                           const struct AnisotiltOptics *optics,
                                           enum AnisotiltRegistration registration,
                                           size_t half_width,
                                           struct AnisotiltEstimate *out);

/**
 * Registers, fuses and Wiener-restores the sequence into `out` (`rows * cols` doubles).
 * `half_width` and `search_radius` only apply to BMA; `gamma` is the Wiener noise term.
 * `alpha_out` may be NULL.
 *
 * # Safety
 * `seq` and `optics` must be live handles; `out` must be valid for `out_len` writes;
 * `alpha_out` must be NULL or valid for a write.
 */
enum AnisotiltStatus anisotilt_mitigate(const struct AnisotiltSequence *seq,
                                        const struct AnisotiltOptics *optics,
                                        enum AnisotiltRegistration registration,
                                        size_t half_width,
                                        size_t search_radius,
                                        double gamma,
                                        double r0,
                                        double *out,
                                        size_t out_len,
                                        double *alpha_out);

/**
 * ABI revision; bumped on any incompatible change to this header.
 */
uint32_t anisotilt_abi_version(void);

/**
 * Validates a NUL-terminated TOML configuration string.
 *
 * # Safety
 * `text` must be NULL or a valid NUL-terminated string.
 */
enum AnisotiltStatus anisotilt_config_validate(const char *text);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ANISOTILT_H */
