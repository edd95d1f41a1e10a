#ifndef GHOSTCOLOR_H
#define GHOSTCOLOR_H

/* Generated with cbindgen:0.29.4 */

/* Generated by cbindgen from crates/ffi. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call.
typedef enum GcStatus {
  GC_STATUS_OK = 0,
  GC_STATUS_NULL_POINTER = 1,
  GC_STATUS_INVALID_ARGUMENT = 2,
  GC_STATUS_DIMENSION_MISMATCH = 3,
  GC_STATUS_TOO_FEW_FRAMES = 4,
  GC_STATUS_DEGENERATE = 5,
  GC_STATUS_OUT_OF_RANGE = 6,
  GC_STATUS_IO = 7,
  GC_STATUS_FORMAT = 8,
  GC_STATUS_INCOMPATIBLE = 9,
  GC_STATUS_PANIC = 10,
} GcStatus;

// Normalization applied by [`gc_normalize`].
typedef enum GcNormalize {
  GC_NORMALIZE_MINMAX = 0,
  GC_NORMALIZE_ZSCORE_CLIP = 1,
} GcNormalize;

// Opaque covariance accumulator.
typedef struct GcAccumulator GcAccumulator;

// Opaque single-channel simulation: scene, mask statistics, noise and PSF.
typedef struct GcSimulation GcSimulation;

// Mask statistics. `width`/`height` are ignored where the scene fixes them.
typedef struct GcMaskParams {
  uint32_t width;
  uint32_t height;
  double correlation_length_px;
  uint64_t seed;
  double amplitude_low;
  double amplitude_high;
} GcMaskParams;

// Additive Gaussian detector noise; zero disables a term.
typedef struct GcNoise {
  double bucket_noise_sigma;
  double reference_noise_sigma;
} GcNoise;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message describing the last failure on this thread, or an empty string.
// Valid until the next call into this library from the same thread.
const char *gc_last_error_message(void);

// Static description of a status code.
const char *gc_status_description(enum GcStatus status);

// Library version as a static NUL-terminated string.
const char *gc_version(void);

// Writes mask `frame_index` (`width * height` amplitudes) into `out`.
enum GcStatus gc_generate_mask(const struct GcMaskParams *params,
                               uint64_t frame_index,
                               double *out,
                               size_t out_len);

// Creates an empty accumulator without channel information.
enum GcStatus gc_accumulator_new(uint32_t width, uint32_t height, struct GcAccumulator **out);

// Creates an empty accumulator tagged with a probe/display wavelength pair.
enum GcStatus gc_accumulator_new_for_channel(uint32_t width,
                                             uint32_t height,
                                             double probe_wavelength_nm,
                                             double display_wavelength_nm,
                                             struct GcAccumulator **out);

// Releases an accumulator. Null is ignored.
void gc_accumulator_free(struct GcAccumulator *acc);

// Adds one frame: a `width * height` reference image and its bucket value.
enum GcStatus gc_accumulator_push(struct GcAccumulator *acc,
                                  const double *reference,
                                  size_t len,
                                  double bucket);

// Adds the sums of `src` into `dst`.
enum GcStatus gc_accumulator_merge(struct GcAccumulator *dst, const struct GcAccumulator *src);

// Number of frames accumulated so far.
enum GcStatus gc_accumulator_frames(const struct GcAccumulator *acc, uint64_t *out_n);

// Writes the covariance image (`width * height` values) into `out`.
// Requires at least two frames.
enum GcStatus gc_accumulator_finalize(const struct GcAccumulator *acc, double *out, size_t out_len);

// Writes the accumulator as a binary checkpoint file.
enum GcStatus gc_accumulator_save(const struct GcAccumulator *acc, const char *path);

// Loads a checkpoint file into a new accumulator.
enum GcStatus gc_accumulator_load(const char *path, struct GcAccumulator **out);

// Creates a single-channel simulation over a `width * height` reflectance
// map with values in `[0, 1]`. `psf_sigma` of 0 disables blur; a positive
// value selects a Gaussian PSF. `noise` may be null for noiseless detectors.
enum GcStatus gc_simulation_new(const double *reflectance,
                                uint32_t width,
                                uint32_t height,
                                double probe_wavelength_nm,
                                double display_wavelength_nm,
                                const struct GcMaskParams *mask,
                                const struct GcNoise *noise,
                                double psf_sigma,
                                struct GcSimulation **out);

// Releases a simulation. Null is ignored.
void gc_simulation_free(struct GcSimulation *sim);

// Simulates frames `[frame_start, frame_end)` into a new accumulator.
enum GcStatus gc_simulation_accumulate(const struct GcSimulation *sim,
                                       uint64_t frame_start,
                                       uint64_t frame_end,
                                       struct GcAccumulator **out);

// Maps a `width * height` covariance image into `[0, 1]`.
enum GcStatus gc_normalize(const double *g,
                           uint32_t width,
                           uint32_t height,
                           enum GcNormalize mode,
                           double *out);

// Writes the RGB primary of a wavelength in `[380, 780]` nm to `out_rgb[0..3]`.
enum GcStatus gc_wavelength_to_rgb(double wavelength_nm, double *out_rgb);

// Composes `n_channels` normalized maps, each tinted by its display
// wavelength, into an interleaved RGB image of `3 * width * height` values.
enum GcStatus gc_compose(const double *const *maps,
                         const double *wavelengths_nm,
                         size_t n_channels,
                         uint32_t width,
                         uint32_t height,
                         double *out_rgb);

// PSNR in dB of `len` samples in `[0, 1]`; identical inputs give +infinity.
enum GcStatus gc_psnr(const double *reference, const double *test, size_t len, double *out_db);

// Mean SSIM of two `width * height` maps (both sides at least 11).
enum GcStatus gc_ssim(const double *reference,
                      const double *test,
                      uint32_t width,
                      uint32_t height,
                      double *out);

// Colorfulness index of an interleaved RGB image of `n_pixels` pixels.
enum GcStatus gc_cci(const double *rgb, size_t n_pixels, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GHOSTCOLOR_H */
