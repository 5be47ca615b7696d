#include "fhvae/kernels.hpp"

#include <atomic>
#include <cmath>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace fhvae::kernels {

namespace {

std::atomic<bool> g_parallel{true};

// Work below these sizes is not worth a parallel region.
constexpr std::size_t kElemwiseGrain = 16384;
constexpr std::size_t kMatmulGrain = 32768;

inline bool use_parallel(std::size_t work) {
#ifdef _OPENMP
  return g_parallel.load(std::memory_order_relaxed) && work >= kElemwiseGrain;
#else
  (void)work;
  return false;
#endif
}

inline bool use_parallel_mm(std::size_t flops) {
#ifdef _OPENMP
  return g_parallel.load(std::memory_order_relaxed) && flops >= kMatmulGrain;
#else
  (void)flops;
  return false;
#endif
}

inline double sigmoid_of(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

void set_parallel(bool enabled) { g_parallel.store(enabled, std::memory_order_relaxed); }

bool parallel_enabled() {
#ifdef _OPENMP
  return g_parallel.load(std::memory_order_relaxed);
#else
  return false;
#endif
}

namespace serial {

void matmul(const double* a, const double* b, double* c,
            std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* ci = c + i * n;
    for (std::size_t j = 0; j < n; ++j) ci[j] = 0.0;
    const double* ai = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ai[p];
      const double* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

void matmul_acc_grad_lhs(const double* g, const double* b, double* da,
                         std::size_t m, std::size_t k, std::size_t n) {
  // da[i,p] += sum_j g[i,j] * b[p,j]
  for (std::size_t i = 0; i < m; ++i) {
    const double* gi = g + i * n;
    double* dai = da + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double* bp = b + p * n;
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += gi[j] * bp[j];
      dai[p] += s;
    }
  }
}

void matmul_acc_grad_rhs(const double* a, const double* g, double* db,
                         std::size_t m, std::size_t k, std::size_t n) {
  // db[p,j] += sum_i a[i,p] * g[i,j]; i ascending for a fixed summation order.
  for (std::size_t p = 0; p < k; ++p) {
    double* dbp = db + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const double av = a[i * k + p];
      const double* gi = g + i * n;
      for (std::size_t j = 0; j < n; ++j) dbp[j] += av * gi[j];
    }
  }
}

void ew_add(const double* a, const double* b, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}
void ew_sub(const double* a, const double* b, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] - b[i];
}
void ew_mul(const double* a, const double* b, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}
void ew_div(const double* a, const double* b, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] / b[i];
}
void ew_exp(const double* a, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = std::exp(a[i]);
}
void ew_log(const double* a, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = std::log(a[i]);
}
void ew_tanh(const double* a, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = std::tanh(a[i]);
}
void ew_sigmoid(const double* a, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = sigmoid_of(a[i]);
}
void ew_scale(const double* a, double c, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = c * a[i];
}
void ew_shift(const double* a, double c, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + c;
}

void acc(double* dst, const double* src, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) dst[i] += src[i];
}
void acc_scaled(double* dst, double c, const double* src, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) dst[i] += c * src[i];
}
void acc_mul(double* dst, const double* a, const double* b, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) dst[i] += a[i] * b[i];
}
void acc_tanh_bw(double* dst, const double* g, const double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) dst[i] += g[i] * (1.0 - y[i] * y[i]);
}
void acc_sigmoid_bw(double* dst, const double* g, const double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) dst[i] += g[i] * y[i] * (1.0 - y[i]);
}

void row_sum(const double* a, double* out, std::size_t m, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = a + i * n;
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += ai[j];
    out[i] = s;
  }
}

void col_sum(const double* a, double* out, std::size_t m, std::size_t n) {
  for (std::size_t j = 0; j < n; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < m; ++i) s += a[i * n + j];
    out[j] = s;
  }
}

double total_sum(const double* a, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i];
  return s;
}

void bcast_rows_acc(double* dst, double c, const double* src,
                    std::size_t m, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* di = dst + i * n;
    for (std::size_t j = 0; j < n; ++j) di[j] += c * src[j];
  }
}

void bcast_cols_acc(double* dst, double c, const double* src,
                    std::size_t m, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* di = dst + i * n;
    const double cs = c * src[i];
    for (std::size_t j = 0; j < n; ++j) di[j] += cs;
  }
}

}  // namespace serial

// The parallel variants split by output row/element; each output value is
// produced by exactly one thread with the serial summation order, so they are
// bit-identical to the reference above.

void matmul(const double* a, const double* b, double* c,
            std::size_t m, std::size_t k, std::size_t n) {
#ifdef _OPENMP
  if (use_parallel_mm(m * k * n)) {
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(m); ++i) {
      double* ci = c + i * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] = 0.0;
      const double* ai = a + i * k;
      for (std::size_t p = 0; p < k; ++p) {
        const double av = ai[p];
        const double* bp = b + p * n;
        for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
      }
    }
    return;
  }
#endif
  serial::matmul(a, b, c, m, k, n);
}

void matmul_acc_grad_lhs(const double* g, const double* b, double* da,
                         std::size_t m, std::size_t k, std::size_t n) {
#ifdef _OPENMP
  if (use_parallel_mm(m * k * n)) {
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(m); ++i) {
      const double* gi = g + i * n;
      double* dai = da + i * k;
      for (std::size_t p = 0; p < k; ++p) {
        const double* bp = b + p * n;
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) s += gi[j] * bp[j];
        dai[p] += s;
      }
    }
    return;
  }
#endif
  serial::matmul_acc_grad_lhs(g, b, da, m, k, n);
}

void matmul_acc_grad_rhs(const double* a, const double* g, double* db,
                         std::size_t m, std::size_t k, std::size_t n) {
#ifdef _OPENMP
  if (use_parallel_mm(m * k * n)) {
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t p = 0; p < static_cast<std::ptrdiff_t>(k); ++p) {
      double* dbp = db + p * n;
      for (std::size_t i = 0; i < m; ++i) {
        const double av = a[i * k + p];
        const double* gi = g + i * n;
        for (std::size_t j = 0; j < n; ++j) dbp[j] += av * gi[j];
      }
    }
    return;
  }
#endif
  serial::matmul_acc_grad_rhs(a, g, db, m, k, n);
}

#ifdef _OPENMP
#define FHVAE_EW_LOOP(expr)                                             \
  if (use_parallel(n)) {                                                \
    _Pragma("omp parallel for schedule(static)")                        \
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) \
      expr;                                                             \
    return;                                                             \
  }
#else
#define FHVAE_EW_LOOP(expr)
#endif

void ew_add(const double* a, const double* b, double* out, std::size_t n) {
  FHVAE_EW_LOOP(out[i] = a[i] + b[i])
  serial::ew_add(a, b, out, n);
}
void ew_sub(const double* a, const double* b, double* out, std::size_t n) {
  FHVAE_EW_LOOP(out[i] = a[i] - b[i])
  serial::ew_sub(a, b, out, n);
}
void ew_mul(const double* a, const double* b, double* out, std::size_t n) {
  FHVAE_EW_LOOP(out[i] = a[i] * b[i])
  serial::ew_mul(a, b, out, n);
}
void ew_div(const double* a, const double* b, double* out, std::size_t n) {
  FHVAE_EW_LOOP(out[i] = a[i] / b[i])
  serial::ew_div(a, b, out, n);
}
void ew_exp(const double* a, double* out, std::size_t n) {
  FHVAE_EW_LOOP(out[i] = std::exp(a[i]))
  serial::ew_exp(a, out, n);
}
void ew_log(const double* a, double* out, std::size_t n) {
  FHVAE_EW_LOOP(out[i] = std::log(a[i]))
  serial::ew_log(a, out, n);
}
void ew_tanh(const double* a, double* out, std::size_t n) {
  FHVAE_EW_LOOP(out[i] = std::tanh(a[i]))
  serial::ew_tanh(a, out, n);
}
void ew_sigmoid(const double* a, double* out, std::size_t n) {
  FHVAE_EW_LOOP(out[i] = sigmoid_of(a[i]))
  serial::ew_sigmoid(a, out, n);
}
void ew_scale(const double* a, double c, double* out, std::size_t n) {
  FHVAE_EW_LOOP(out[i] = c * a[i])
  serial::ew_scale(a, c, out, n);
}
void ew_shift(const double* a, double c, double* out, std::size_t n) {
  FHVAE_EW_LOOP(out[i] = a[i] + c)
  serial::ew_shift(a, c, out, n);
}

void acc(double* dst, const double* src, std::size_t n) {
  FHVAE_EW_LOOP(dst[i] += src[i])
  serial::acc(dst, src, n);
}
void acc_scaled(double* dst, double c, const double* src, std::size_t n) {
  FHVAE_EW_LOOP(dst[i] += c * src[i])
  serial::acc_scaled(dst, c, src, n);
}
void acc_mul(double* dst, const double* a, const double* b, std::size_t n) {
  FHVAE_EW_LOOP(dst[i] += a[i] * b[i])
  serial::acc_mul(dst, a, b, n);
}
void acc_tanh_bw(double* dst, const double* g, const double* y, std::size_t n) {
  FHVAE_EW_LOOP(dst[i] += g[i] * (1.0 - y[i] * y[i]))
  serial::acc_tanh_bw(dst, g, y, n);
}
void acc_sigmoid_bw(double* dst, const double* g, const double* y, std::size_t n) {
  FHVAE_EW_LOOP(dst[i] += g[i] * y[i] * (1.0 - y[i]))
  serial::acc_sigmoid_bw(dst, g, y, n);
}

#undef FHVAE_EW_LOOP

void row_sum(const double* a, double* out, std::size_t m, std::size_t n) {
#ifdef _OPENMP
  if (use_parallel(m * n)) {
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(m); ++i) {
      const double* ai = a + i * n;
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += ai[j];
      out[i] = s;
    }
    return;
  }
#endif
  serial::row_sum(a, out, m, n);
}

void col_sum(const double* a, double* out, std::size_t m, std::size_t n) {
#ifdef _OPENMP
  if (use_parallel(m * n)) {
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t j = 0; j < static_cast<std::ptrdiff_t>(n); ++j) {
      double s = 0.0;
      for (std::size_t i = 0; i < m; ++i) s += a[i * n + j];
      out[j] = s;
    }
    return;
  }
#endif
  serial::col_sum(a, out, m, n);
}

double total_sum(const double* a, std::size_t n) {
  // Kept serial: a single fixed summation order for any thread count.
  return serial::total_sum(a, n);
}

void bcast_rows_acc(double* dst, double c, const double* src,
                    std::size_t m, std::size_t n) {
#ifdef _OPENMP
  if (use_parallel(m * n)) {
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(m); ++i) {
      double* di = dst + i * n;
      for (std::size_t j = 0; j < n; ++j) di[j] += c * src[j];
    }
    return;
  }
#endif
  serial::bcast_rows_acc(dst, c, src, m, n);
}

void bcast_cols_acc(double* dst, double c, const double* src,
                    std::size_t m, std::size_t n) {
#ifdef _OPENMP
  if (use_parallel(m * n)) {
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(m); ++i) {
      double* di = dst + i * n;
      const double cs = c * src[i];
      for (std::size_t j = 0; j < n; ++j) di[j] += cs;
    }
    return;
  }
#endif
  serial::bcast_cols_acc(dst, c, src, m, n);
}

}  // namespace fhvae::kernels
