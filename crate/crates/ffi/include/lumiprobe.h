#ifndef LUMIPROBE_H
#define LUMIPROBE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * How pixel values of a panorama are interpreted.
 */
typedef enum LpRange {
  /**
   * Display values in `[0, 1]`.
   */
  LP_RANGE_LDR = 0,
  /**
   * Nonnegative linear radiance.
   */
  LP_RANGE_HDR = 1,
} LpRange;

/**
 * Result codes. Zero is success.
 */
typedef enum LpStatus {
  LP_STATUS_OK = 0,
  LP_STATUS_NULL_POINTER = 1,
  LP_STATUS_DOMAIN = 2,
  LP_STATUS_DIMENSION = 3,
  LP_STATUS_STATE = 4,
  LP_STATUS_NUMERIC = 5,
  LP_STATUS_UNSUPPORTED = 6,
  LP_STATUS_PARSE = 7,
  LP_STATUS_CODEC = 8,
  LP_STATUS_IO = 9,
  LP_STATUS_JSON = 10,
  LP_STATUS_INVALID_UTF8 = 11,
  LP_STATUS_PANIC = 12,
} LpStatus;

/**
 * Trained light detector.
 */
typedef struct LpDetector LpDetector;

/**
 * Interleaved `f64` image, row-major.
 */
typedef struct LpImage LpImage;

/**
 * Trained network restored from a checkpoint.
 */
typedef struct LpNetwork LpNetwork;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *lp_version(void);

/**
 * Message for the last failure on this thread, or NULL if none. The
 * pointer stays valid until the next failing call on the same thread.
 */
const char *lp_last_error(void);

void lp_clear_error(void);

/**
 * Zero-filled image.
 */
enum LpStatus lp_image_new(size_t width, size_t height, size_t channels, struct LpImage **out);

/**
 * Copies `len` interleaved values, which must equal
 * `width * height * channels`.
 */
enum LpStatus lp_image_from_data(size_t width,
                                 size_t height,
                                 size_t channels,
                                 const double *data,
                                 size_t len,
                                 struct LpImage **out);

void lp_image_free(struct LpImage *img);

size_t lp_image_width(const struct LpImage *img);

size_t lp_image_height(const struct LpImage *img);

size_t lp_image_channels(const struct LpImage *img);

/**
 * Borrowed pixel buffer, valid while the handle lives. Writes the value
 * count to `len` when it is not NULL.
 */
const double *lp_image_data(const struct LpImage *img, size_t *len);

/**
 * Reads `.hdr`, `.pfm` or `.png` by extension.
 */
enum LpStatus lp_image_read(const char *path, struct LpImage **out);

/**
 * Writes `.hdr`, `.pfm` or `.png` by extension.
 */
enum LpStatus lp_image_write(const struct LpImage *img, const char *path);

/**
 * Recentering warp of an equirectangular map. `beta` and `axis_azimuth`
 * are in radians.
 */
enum LpStatus lp_warp(const struct LpImage *map,
                      double beta,
                      double axis_azimuth,
                      struct LpImage **out);

/**
 * Pinhole crop from a 2:1 panorama. Angles are in radians.
 */
enum LpStatus lp_extract_crop(const struct LpImage *pano,
                              enum LpRange range,
                              double azimuth,
                              double elevation,
                              double hfov,
                              size_t width,
                              size_t height,
                              struct LpImage **out);

/**
 * Cosine-power filter of a panorama map with the given exponent, applied
 * to each channel.
 */
enum LpStatus lp_cosine_filter(const struct LpImage *map, double exponent, struct LpImage **out);

/**
 * LDR environment map from a light probability map and an rgb panorama.
 */
enum LpStatus lp_compose_ldr(const struct LpImage *mask,
                             const struct LpImage *rgb,
                             double lambda_mask,
                             double lambda_rgb,
                             double mask_threshold,
                             struct LpImage **out);

/**
 * HDR environment map from log10 intensity, rgb and the input crop.
 */
enum LpStatus lp_compose_hdr(const struct LpImage *log_intensity,
                             const struct LpImage *rgb,
                             const struct LpImage *crop,
                             double light_threshold,
                             bool zero_ambient,
                             struct LpImage **out);

/**
 * Display-ready diffuse sphere lit by an environment map.
 */
enum LpStatus lp_render_sphere(const struct LpImage *env, size_t size, struct LpImage **out);

enum LpStatus lp_network_load(const char *path, struct LpNetwork **out);

void lp_network_free(struct LpNetwork *net);

/**
 * Expected input photo size.
 */
enum LpStatus lp_network_input_size(const struct LpNetwork *net, size_t *width, size_t *height);

/**
 * Runs the network on one photo. `aux` receives the one-channel mask or
 * log intensity and `rgb` the three-channel panorama.
 */
enum LpStatus lp_network_predict(const struct LpNetwork *net,
                                 const struct LpImage *photo,
                                 struct LpImage **aux,
                                 struct LpImage **rgb);

enum LpStatus lp_detector_load(const char *path, struct LpDetector **out);

void lp_detector_free(struct LpDetector *det);

/**
 * Light mask of an LDR panorama as a one-channel 0/1 image at the
 * panorama's resolution.
 */
enum LpStatus lp_detector_detect(const struct LpDetector *det,
                                 const struct LpImage *pano,
                                 struct LpImage **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LUMIPROBE_H */
