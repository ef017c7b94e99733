#ifndef QGCN_H
#define QGCN_H

/* Generated by cbindgen from the qgcn-ffi crate; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Status code of every fallible FFI call.
typedef enum QgcnStatus {
  QGCN_STATUS_OK = 0,
  QGCN_STATUS_NULL_ARGUMENT = 1,
  QGCN_STATUS_INVALID_ARGUMENT = 2,
  QGCN_STATUS_IO_ERROR = 3,
  QGCN_STATUS_PARSE_ERROR = 4,
  QGCN_STATUS_SHAPE_MISMATCH = 5,
  QGCN_STATUS_INTERNAL = 6,
  QGCN_STATUS_PANIC = 7,
} QgcnStatus;

// Opaque handle to a loaded model.
typedef struct QgcnModel QgcnModel;

// Quality metrics for one image pair.
typedef struct QgcnQuality {
  double psnr;
  double ssim;
  double psnr_b;
} QgcnQuality;

// Marker-level metadata of a JPEG byte stream.
typedef struct QgcnJpegInfo {
  uint32_t width;
  uint32_t height;
  uint32_t num_components;
  int progressive;
  // Quantization table id per component; -1 beyond num_components.
  int32_t component_table_ids[4];
  // Bit k set when table id k was present in the stream.
  uint32_t tables_present;
  // De-zigzagged tables in natural row-major order, by table id.
  uint16_t tables[4][64];
} QgcnJpegInfo;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the most recent failure on this thread, or NULL if the
// last call succeeded. The pointer stays valid until the next failing
// call on the same thread.
const char *qgcn_last_error(void);

// Library version as a static C string.
const char *qgcn_version(void);

// Loads a checkpoint (with its JSON config sidecar) from `path`.
//
// # Safety
// `path` must be a valid NUL-terminated string and `out` a valid
// pointer. On success `*out` owns the model; release it with
// [`qgcn_model_free`].
enum QgcnStatus qgcn_model_load(const char *path, struct QgcnModel **out);

// Releases a model obtained from [`qgcn_model_load`]. NULL is a no-op.
//
// # Safety
// `model` must be a pointer returned by [`qgcn_model_load`] that has
// not been freed yet.
void qgcn_model_free(struct QgcnModel *model);

// Reports the channel mode (1 or 3) and parameter count of a model.
//
// # Safety
// All pointers must be valid; `model` must come from
// [`qgcn_model_load`].
enum QgcnStatus qgcn_model_info(const struct QgcnModel *model,
                                uint32_t *image_channels,
                                uint64_t *param_count);

// Writes the standard tables scaled to `qf` into `luma[64]` and
// `chroma[64]`, natural row-major order.
//
// # Safety
// `luma` and `chroma` must each point to 64 writable `uint16_t`.
enum QgcnStatus qgcn_quant_tables(int qf, uint16_t *luma, uint16_t *chroma);

// Runs the JPEG degradation simulator. `out_pixels` receives
// width*height*channels bytes; `subsample_420` nonzero selects 4:2:0
// chroma.
//
// # Safety
// `pixels` and `out_pixels` must point to width*height*channels
// readable/writable bytes respectively.
enum QgcnStatus qgcn_simulate(const uint8_t *pixels,
                              uint32_t width,
                              uint32_t height,
                              uint32_t channels,
                              int qf,
                              int subsample_420,
                              uint8_t *out_pixels);

// Restores a degraded image with explicit quantization tables (64
// entries each, natural order; `chroma` may be NULL for grayscale).
//
// # Safety
// Buffer contracts follow [`qgcn_simulate`]; `luma`/`chroma` must
// point to 64 `uint16_t` when non-NULL.
enum QgcnStatus qgcn_restore(const struct QgcnModel *model,
                             const uint8_t *pixels,
                             uint32_t width,
                             uint32_t height,
                             uint32_t channels,
                             const uint16_t *luma,
                             const uint16_t *chroma,
                             uint8_t *out_pixels);

// Restores assuming the image came from the standard tables at `qf`.
//
// # Safety
// Buffer contracts follow [`qgcn_simulate`].
enum QgcnStatus qgcn_restore_qf(const struct QgcnModel *model,
                                const uint8_t *pixels,
                                uint32_t width,
                                uint32_t height,
                                uint32_t channels,
                                int qf,
                                uint8_t *out_pixels);

// Computes PSNR/SSIM/PSNR-B of `test` against `reference`. Exact
// matches report the 99.99 dB sentinel.
//
// # Safety
// Both pixel buffers must hold width*height*channels bytes; `out`
// must be a valid pointer.
enum QgcnStatus qgcn_metrics(const uint8_t *reference,
                             const uint8_t *test,
                             uint32_t width,
                             uint32_t height,
                             uint32_t channels,
                             struct QgcnQuality *out);

// Parses DQT/SOF metadata from a JPEG byte stream; never touches
// entropy-coded data.
//
// # Safety
// `data` must point to `len` readable bytes and `out` must be valid.
enum QgcnStatus qgcn_parse_jpeg(const uint8_t *data, size_t len, struct QgcnJpegInfo *out);

// Scales a caller-supplied base table (64 entries, natural order) by
// quality factor, in place semantics via `out`.
//
// # Safety
// `base` and `out` must each point to 64 `uint16_t`.
enum QgcnStatus qgcn_scale_qtable(const uint16_t *base, int qf, uint16_t *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* QGCN_H */
