#pragma once

#include <cstddef>

namespace fhvae::kernels {

// Runtime switch for the OpenMP paths. The parallel kernels partition work by
// output element, so results are bit-identical to the serial reference for
// any thread count; the switch exists for measurement and debugging.
void set_parallel(bool enabled);
bool parallel_enabled();

// Serial reference implementations. Kept as the comparison baseline for the
// parallel kernels; tests assert bit-equality between the two.
namespace serial {

void matmul(const double* a, const double* b, double* c,
            std::size_t m, std::size_t k, std::size_t n);
// da[m*k] += g[m*n] * b[k*n]^T
void matmul_acc_grad_lhs(const double* g, const double* b, double* da,
                         std::size_t m, std::size_t k, std::size_t n);
// db[k*n] += a[m*k]^T * g[m*n]
void matmul_acc_grad_rhs(const double* a, const double* g, double* db,
                         std::size_t m, std::size_t k, std::size_t n);

void ew_add(const double* a, const double* b, double* out, std::size_t n);
void ew_sub(const double* a, const double* b, double* out, std::size_t n);
void ew_mul(const double* a, const double* b, double* out, std::size_t n);
void ew_div(const double* a, const double* b, double* out, std::size_t n);
void ew_exp(const double* a, double* out, std::size_t n);
void ew_log(const double* a, double* out, std::size_t n);
void ew_tanh(const double* a, double* out, std::size_t n);
void ew_sigmoid(const double* a, double* out, std::size_t n);
void ew_scale(const double* a, double c, double* out, std::size_t n);
void ew_shift(const double* a, double c, double* out, std::size_t n);

// dst += src, dst += c*src, dst += a.*b
void acc(double* dst, const double* src, std::size_t n);
void acc_scaled(double* dst, double c, const double* src, std::size_t n);
void acc_mul(double* dst, const double* a, const double* b, std::size_t n);
// dst += g .* (1 - y.^2)   (tanh backward, y = tanh(x))
void acc_tanh_bw(double* dst, const double* g, const double* y, std::size_t n);
// dst += g .* y .* (1 - y) (sigmoid backward, y = sigmoid(x))
void acc_sigmoid_bw(double* dst, const double* g, const double* y, std::size_t n);

// out[i] = sum_j a[i,j]
void row_sum(const double* a, double* out, std::size_t m, std::size_t n);
// out[j] = sum_i a[i,j]
void col_sum(const double* a, double* out, std::size_t m, std::size_t n);
double total_sum(const double* a, std::size_t n);

// dst[i,j] += c * src[j]
void bcast_rows_acc(double* dst, double c, const double* src,
                    std::size_t m, std::size_t n);
// dst[i,j] += c * src[i]
void bcast_cols_acc(double* dst, double c, const double* src,
                    std::size_t m, std::size_t n);

}  // namespace serial

// Dispatching entry points: OpenMP when enabled and the problem is large
// enough to amortize the fork, serial otherwise.
void matmul(const double* a, const double* b, double* c,
            std::size_t m, std::size_t k, std::size_t n);
void matmul_acc_grad_lhs(const double* g, const double* b, double* da,
                         std::size_t m, std::size_t k, std::size_t n);
void matmul_acc_grad_rhs(const double* a, const double* g, double* db,
                         std::size_t m, std::size_t k, std::size_t n);

void ew_add(const double* a, const double* b, double* out, std::size_t n);
void ew_sub(const double* a, const double* b, double* out, std::size_t n);
void ew_mul(const double* a, const double* b, double* out, std::size_t n);
void ew_div(const double* a, const double* b, double* out, std::size_t n);
void ew_exp(const double* a, double* out, std::size_t n);
void ew_log(const double* a, double* out, std::size_t n);
void ew_tanh(const double* a, double* out, std::size_t n);
void ew_sigmoid(const double* a, double* out, std::size_t n);
void ew_scale(const double* a, double c, double* out, std::size_t n);
void ew_shift(const double* a, double c, double* out, std::size_t n);

void acc(double* dst, const double* src, std::size_t n);
void acc_scaled(double* dst, double c, const double* src, std::size_t n);
void acc_mul(double* dst, const double* a, const double* b, std::size_t n);
void acc_tanh_bw(double* dst, const double* g, const double* y, std::size_t n);
void acc_sigmoid_bw(double* dst, const double* g, const double* y, std::size_t n);

void row_sum(const double* a, double* out, std::size_t m, std::size_t n);
void col_sum(const double* a, double* out, std::size_t m, std::size_t n);
double total_sum(const double* a, std::size_t n);

void bcast_rows_acc(double* dst, double c, const double* src,
                    std::size_t m, std::size_t n);
void bcast_cols_acc(double* dst, double c, const double* src,
                    std::size_t m, std::size_t n);

}  // namespace fhvae::kernels
