#ifndef STREAMSOLVE_H
#define STREAMSOLVE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SsStatus {
  SS_STATUS_OK = 0,
  SS_STATUS_NULL_ARGUMENT = 1,
  SS_STATUS_INVALID_ARGUMENT = 2,
  SS_STATUS_CONTEXT_DESTROYED = 3,
  SS_STATUS_SELF_SYNCHRONIZE = 4,
  SS_STATUS_UNKNOWN_OBJECT = 5,
  SS_STATUS_BRACKET_MISMATCH = 6,
  SS_STATUS_SHAPE_MISMATCH = 7,
  SS_STATUS_DIMENSION_MISMATCH = 8,
  SS_STATUS_VIEW_CONFLICT = 9,
  SS_STATUS_RUNTIME_MISMATCH = 10,
  SS_STATUS_BREAKDOWN = 11,
  SS_STATUS_FINGERPRINT_MISMATCH = 12,
  SS_STATUS_IO = 13,
  SS_STATUS_PANIC = 14,
} SsStatus;

typedef enum SsStreamType {
  SS_STREAM_TYPE_DEFAULT_BLOCKING = 0,
  SS_STREAM_TYPE_GLOBALLY_BLOCKING = 1,
} SsStreamType;

typedef enum SsUnaryOp {
  SS_UNARY_OP_NEG = 0,
  SS_UNARY_OP_ABS = 1,
  SS_UNARY_OP_SQRT = 2,
  SS_UNARY_OP_SIN = 3,
  SS_UNARY_OP_COS = 4,
  SS_UNARY_OP_EXP = 5,
} SsUnaryOp;

typedef enum SsBinaryOp {
  SS_BINARY_OP_ADD = 0,
  SS_BINARY_OP_SUB = 1,
  SS_BINARY_OP_MUL = 2,
  SS_BINARY_OP_DIV = 3,
  SS_BINARY_OP_MIN = 4,
  SS_BINARY_OP_MAX = 5,
} SsBinaryOp;

typedef enum SsMethod {
  SS_METHOD_CG = 0,
  SS_METHOD_TFQMR = 1,
} SsMethod;

typedef enum SsMode {
  SS_MODE_ASYNC = 0,
  SS_MODE_SYNC = 1,
} SsMode;

typedef enum SsPc {
  SS_PC_JACOBI = 0,
  SS_PC_NONE = 1,
} SsPc;

typedef struct SsContext SsContext;

typedef struct SsExecutable SsExecutable;

typedef struct SsExpr SsExpr;

typedef struct SsManaged SsManaged;

typedef struct SsMatrix SsMatrix;

typedef struct SsReport SsReport;

typedef struct SsRuntime SsRuntime;

typedef struct SsVector SsVector;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread, empty after success.
// Valid until the next call on this thread.
const char *ss_last_error_message(void);

// Creates a runtime. `latency_us` is added to every task; `host_kernels`
// selects host memory for kernels instead of the simulated device.
//
// # Safety
// `out` must be a valid pointer.
enum SsStatus ss_runtime_create(uint64_t latency_us,
                                uint64_t seed,
                                bool host_kernels,
                                struct SsRuntime **out);

// # Safety
// `rt` must come from [`ss_runtime_create`] or be null.
void ss_runtime_destroy(struct SsRuntime *rt);

// Waits for all work on every context of the runtime.
//
// # Safety
// `rt` must be a live handle.
enum SsStatus ss_runtime_synchronize_all(const struct SsRuntime *rt);

// # Safety
// `rt` must be a live handle and `out` a valid pointer.
enum SsStatus ss_context_create(const struct SsRuntime *rt,
                                enum SsStreamType stream_type,
                                struct SsContext **out);

// Synchronizes the context and releases the handle.
//
// # Safety
// `ctx` must come from [`ss_context_create`] or be null.
enum SsStatus ss_context_destroy(struct SsContext *ctx);

// # Safety
// Both handles must be live.
enum SsStatus ss_context_wait_for_context(const struct SsContext *waiter,
                                          const struct SsContext *waitee);

// # Safety
// `ctx` must be live and `idle` a valid pointer.
enum SsStatus ss_context_query_idle(const struct SsContext *ctx, bool *idle);

// # Safety
// `ctx` must be live.
enum SsStatus ss_context_synchronize(const struct SsContext *ctx);

// # Safety
// `rt` must be live and `out` a valid pointer.
enum SsStatus ss_managed_create(const struct SsRuntime *rt, double value, struct SsManaged **out);

// # Safety
// `v` must come from [`ss_managed_create`] or be null.
void ss_managed_destroy(struct SsManaged *v);

// Host value of a managed scalar, waiting for a pending write.
//
// # Safety
// `v` must be live and `out` a valid pointer.
enum SsStatus ss_managed_front(const struct SsManaged *v, double *out);

// # Safety
// `rt` must be live, `values` must point to `n` doubles (or be null when
// `n` is 0) and `out` must be valid.
enum SsStatus ss_vector_create(const struct SsRuntime *rt,
                               const double *values,
                               size_t n,
                               struct SsVector **out);

// # Safety
// `v` must come from [`ss_vector_create`] or be null.
void ss_vector_destroy(struct SsVector *v);

// # Safety
// `v` must be live and `n` a valid pointer.
enum SsStatus ss_vector_len(const struct SsVector *v, size_t *n);

// Copies the values to `out`, which holds `n` doubles; `n` must equal the
// vector length. Waits for pending writes.
//
// # Safety
// `v` must be live and `out` must point to `n` writable doubles.
enum SsStatus ss_vector_get_values(const struct SsVector *v, double *out, size_t n);

// # Safety
// All handles must be live.
enum SsStatus ss_vec_norm_async(const struct SsVector *v,
                                struct SsManaged *out,
                                const struct SsContext *ctx);

// v <- alpha v
//
// # Safety
// All handles must be live.
enum SsStatus ss_vec_scale_async(const struct SsVector *v,
                                 const struct SsManaged *alpha,
                                 const struct SsContext *ctx);

// # Safety
// All handles must be live.
enum SsStatus ss_vec_dot_async(const struct SsVector *x,
                               const struct SsVector *y,
                               struct SsManaged *out,
                               const struct SsContext *ctx);

// y <- y + alpha x
//
// # Safety
// All handles must be live.
enum SsStatus ss_vec_axpy_async(const struct SsVector *y,
                                const struct SsManaged *alpha,
                                const struct SsVector *x,
                                const struct SsContext *ctx);

// # Safety
// `v` must be live and `out` valid.
enum SsStatus ss_expr_leaf(const struct SsManaged *v, struct SsExpr **out);

// # Safety
// `out` must be valid.
enum SsStatus ss_expr_constant(double value, struct SsExpr **out);

// # Safety
// `a` must be live and `out` valid. `a` stays owned by the caller.
enum SsStatus ss_expr_unary(enum SsUnaryOp op, const struct SsExpr *a, struct SsExpr **out);

// # Safety
// `a` and `b` must be live and `out` valid. Operands stay owned by the
// caller.
enum SsStatus ss_expr_binary(enum SsBinaryOp op,
                             const struct SsExpr *a,
                             const struct SsExpr *b,
                             struct SsExpr **out);

// # Safety
// `e` must come from an `ss_expr_*` constructor or be null.
void ss_expr_destroy(struct SsExpr *e);

// Freezes an expression. A null context binds the globally blocking
// context, making execution synchronous.
//
// # Safety
// `e` must be live, `ctx` live or null, `out` valid.
enum SsStatus ss_eval(const struct SsExpr *e,
                      const struct SsContext *ctx,
                      struct SsExecutable **out);

// # Safety
// Both handles must be live.
enum SsStatus ss_executable_execute(const struct SsExecutable *ee, struct SsManaged *target);

// # Safety
// `ee` must be live and `out` valid.
enum SsStatus ss_executable_op_count(const struct SsExecutable *ee, size_t *out);

// # Safety
// `ee` must come from [`ss_eval`] or be null.
void ss_executable_destroy(struct SsExecutable *ee);

// Builds a Laplacian: `dim` 2 with 5 or 9 points, or `dim` 3 with 7 or 27
// points; `grid` holds `dim` extents.
//
// # Safety
// `grid` must point to `dim` values and `out` must be valid.
enum SsStatus ss_stencil_laplacian(size_t dim,
                                   size_t points,
                                   const size_t *grid,
                                   struct SsMatrix **out);

// # Safety
// `a` must come from a matrix constructor or be null.
void ss_matrix_destroy(struct SsMatrix *a);

// # Safety
// `a` must be live and the outputs valid.
enum SsStatus ss_matrix_size(const struct SsMatrix *a, size_t *n_rows, size_t *nnz);

// y <- A x, synchronous when `ctx` is null.
//
// # Safety
// Handles must be live; `ctx` may be null.
enum SsStatus ss_mat_mult(const struct SsMatrix *a,
                          const struct SsVector *x,
                          const struct SsVector *y,
                          const struct SsContext *ctx);

// Solves A x = b from a zero initial guess for `max_it` iterations.
//
// # Safety
// Handles must be live and `out` valid.
enum SsStatus ss_solve(const struct SsMatrix *a,
                       const struct SsVector *b,
                       const struct SsVector *x,
                       enum SsMethod method,
                       enum SsMode mode,
                       enum SsPc pc,
                       size_t max_it,
                       struct SsReport **out);

// # Safety
// `rep` must be live and `out` valid.
enum SsStatus ss_report_iterations(const struct SsReport *rep, size_t *out);

// Copies up to `cap` residual norms into `buf` and stores the full
// history length in `len`.
//
// # Safety
// `rep` must be live, `len` valid and `buf` writable for `cap` doubles
// (or null when `cap` is 0).
enum SsStatus ss_report_history(const struct SsReport *rep, double *buf, size_t cap, size_t *len);

// # Safety
// `rep` must come from [`ss_solve`] or be null.
void ss_report_destroy(struct SsReport *rep);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* STREAMSOLVE_H */
