#ifndef DADA_H
#define DADA_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes.
 */
typedef enum DadaStatus {
  DADA_STATUS_OK = 0,
  DADA_STATUS_NULL_POINTER = 1,
  DADA_STATUS_INVALID_ARGUMENT = 2,
  DADA_STATUS_SHAPE = 3,
  DADA_STATUS_IO = 4,
  DADA_STATUS_CONFIG = 5,
  DADA_STATUS_NON_FINITE = 6,
  DADA_STATUS_CHECKPOINT = 7,
  DADA_STATUS_DATASET = 8,
  DADA_STATUS_PANIC = 9,
  DADA_STATUS_OTHER = 10,
} DadaStatus;

/**
 * An RGB or single-channel image with values in `[0, 1]`.
 */
typedef struct DadaImage DadaImage;

/**
 * A square blur kernel with unit sum.
 */
typedef struct DadaKernel DadaKernel;

/**
 * A trained upsampler.
 */
typedef struct DadaModel DadaModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message of this thread into `buf` (NUL-terminated,
 * truncated to `len - 1` bytes) and returns the full message length. With a
 * null `buf` only the length is returned.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t dada_last_error_message(char *buf, size_t len);

/**
 * Library version as a static NUL-terminated string.
 */
const char *dada_version(void);

/**
 * Creates an image from `width * height * channels` interleaved values
 * (row-major, channels last). `channels` is 1 or 3.
 *
 * # Safety
 * `data` must point to that many readable doubles; `out` must be writable.
 */
enum DadaStatus dada_image_new(size_t width,
                               size_t height,
                               size_t channels,
                               const double *data,
                               struct DadaImage **out);

/**
 * Loads an 8-bit PNG as an RGB image.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum DadaStatus dada_image_load_png(const char *path, struct DadaImage **out);

/**
 * Writes the image as an 8-bit PNG.
 *
 * # Safety
 * `img` must be a live handle; `path` a NUL-terminated string.
 */
enum DadaStatus dada_image_save_png(const struct DadaImage *img, const char *path);

/**
 * Writes width, height and channel count. Any output pointer may be null.
 *
 * # Safety
 * `img` must be a live handle; non-null outputs must be writable.
 */
enum DadaStatus dada_image_dims(const struct DadaImage *img,
                                size_t *width,
                                size_t *height,
                                size_t *channels);

/**
 * Copies the interleaved values into `out`, which must hold exactly
 * `width * height * channels` doubles.
 *
 * # Safety
 * `img` must be a live handle; `out` must point to `len` writable doubles.
 */
enum DadaStatus dada_image_copy_data(const struct DadaImage *img, double *out, size_t len);

/**
 * # Safety
 * `img` must be null or a handle not yet freed.
 */
void dada_image_free(struct DadaImage *img);

/**
 * PSNR on luma after cropping `border` pixels per side, capped at 99 dB.
 *
 * # Safety
 * `sr` and `hr` must be live handles; `out` must be writable.
 */
enum DadaStatus dada_psnr_y(const struct DadaImage *sr,
                            const struct DadaImage *hr,
                            size_t border,
                            double *out);

/**
 * Mean SSIM over channels after cropping `border` pixels per side.
 *
 * # Safety
 * `sr` and `hr` must be live handles; `out` must be writable.
 */
enum DadaStatus dada_ssim(const struct DadaImage *sr,
                          const struct DadaImage *hr,
                          size_t border,
                          double *out);

/**
 * Least-squares blur kernel linking `hr` to `lr` at `scale`, by at most
 * `iters` conjugate-gradient steps. `relative_residual` may be null.
 *
 * # Safety
 * `hr` and `lr` must be live handles; `out` must be writable.
 */
enum DadaStatus dada_estimate_kernel(const struct DadaImage *hr,
                                     const struct DadaImage *lr,
                                     size_t kernel_size,
                                     size_t scale,
                                     size_t iters,
                                     double tol,
                                     struct DadaKernel **out,
                                     double *relative_residual);

/**
 * Side length of the kernel.
 *
 * # Safety
 * `k` must be a live handle; `out` must be writable.
 */
enum DadaStatus dada_kernel_size(const struct DadaKernel *k, size_t *out);

/**
 * Copies the row-major weights into `out`, which must hold `size * size`
 * doubles.
 *
 * # Safety
 * `k` must be a live handle; `out` must point to `len` writable doubles.
 */
enum DadaStatus dada_kernel_copy_weights(const struct DadaKernel *k, double *out, size_t len);

/**
 * L2 distance between two kernels of equal size.
 *
 * # Safety
 * `a` and `b` must be live handles; `out` must be writable.
 */
enum DadaStatus dada_kernel_distance(const struct DadaKernel *a,
                                     const struct DadaKernel *b,
                                     double *out);

/**
 * # Safety
 * `k` must be null or a handle not yet freed.
 */
void dada_kernel_free(struct DadaKernel *k);

/**
 * Loads a model checkpoint written by training (`model.ckpt`,
 * `pretrained.ckpt` or a baseline).
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum DadaStatus dada_model_load(const char *path, struct DadaModel **out);

/**
 * Upscales an RGB image by the model's scale.
 *
 * # Safety
 * `model` and `lr` must be live handles; `out` must be writable.
 */
enum DadaStatus dada_model_super_resolve(const struct DadaModel *model,
                                         const struct DadaImage *lr,
                                         struct DadaImage **out);

/**
 * Upscaling factor of the model.
 *
 * # Safety
 * `model` must be a live handle; `out` must be writable.
 */
enum DadaStatus dada_model_scale(const struct DadaModel *model, size_t *out);

/**
 * # Safety
 * `model` must be null or a handle not yet freed.
 */
void dada_model_free(struct DadaModel *model);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DADA_H */
