// Compares the serial reference kernels against the OpenMP dispatch on the
// shapes the model actually produces, and verifies the two paths agree bit
// for bit while timing them.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstring>
#include <functional>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "fhvae/kernels.hpp"
#include "fhvae/rng.hpp"
#include "fhvae/tensor.hpp"

using namespace fhvae;
using Clock = std::chrono::steady_clock;

namespace {

double time_median(const std::function<void()>& fn, int reps) {
  std::vector<double> times;
  times.reserve(reps);
  fn();  // warm up
  for (int r = 0; r < reps; ++r) {
    auto t0 = Clock::now();
    fn();
    auto t1 = Clock::now();
    times.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  std::sort(times.begin(), times.end());
  return times[times.size() / 2];
}

bool bits_equal(const Tensor& a, const Tensor& b) {
  return a.numel() == b.numel() &&
         std::memcmp(a.data.data(), b.data.data(), a.numel() * sizeof(double)) == 0;
}

void report(const char* name, double serial_ms, double parallel_ms, bool exact) {
  std::printf("%-28s serial %9.3f ms   parallel %9.3f ms   speedup %5.2fx   %s\n",
              name, serial_ms, parallel_ms, serial_ms / parallel_ms,
              exact ? "bit-exact" : "MISMATCH");
}

}  // namespace

int main() {
#ifdef _OPENMP
  std::printf("OpenMP enabled, max threads %d\n\n", omp_get_max_threads());
#else
  std::printf("built without OpenMP; both columns run the serial path\n\n");
#endif

  RandomStream rng(7);
  const int reps = 9;

  struct MatShape {
    std::size_t m, k, n;
    const char* label;
  };
  const MatShape shapes[] = {
      {256, 144, 128, "matmul 256x144x128"},
      {512, 512, 512, "matmul 512x512x512"},
      {64, 336, 256, "matmul 64x336x256"},
  };

  for (const MatShape& s : shapes) {
    Tensor a = rng.normal_tensor({s.m, s.k});
    Tensor b = rng.normal_tensor({s.k, s.n});
    Tensor c_serial({s.m, s.n}), c_parallel({s.m, s.n});

    kernels::set_parallel(false);
    double t_serial = time_median(
        [&] {
          kernels::matmul(a.data.data(), b.data.data(), c_serial.data.data(), s.m,
                          s.k, s.n);
        },
        reps);
    kernels::set_parallel(true);
    double t_parallel = time_median(
        [&] {
          kernels::matmul(a.data.data(), b.data.data(), c_parallel.data.data(),
                          s.m, s.k, s.n);
        },
        reps);
    report(s.label, t_serial, t_parallel, bits_equal(c_serial, c_parallel));
  }

  {
    const std::size_t m = 512, k = 512, n = 512;
    Tensor a = rng.normal_tensor({m, k});
    Tensor g = rng.normal_tensor({m, n});
    Tensor da_s({m, k}), da_p({m, k}), db_s({k, n}), db_p({k, n});
    kernels::set_parallel(false);
    double t1s = time_median(
        [&] {
          std::fill(da_s.data.begin(), da_s.data.end(), 0.0);
          kernels::matmul_acc_grad_lhs(g.data.data(), a.data.data(),
                                       da_s.data.data(), m, k, n);
        },
        reps);
    kernels::set_parallel(true);
    double t1p = time_median(
        [&] {
          std::fill(da_p.data.begin(), da_p.data.end(), 0.0);
          kernels::matmul_acc_grad_lhs(g.data.data(), a.data.data(),
                                       da_p.data.data(), m, k, n);
        },
        reps);
    report("matmul grad lhs 512^3", t1s, t1p, bits_equal(da_s, da_p));

    kernels::set_parallel(false);
    double t2s = time_median(
        [&] {
          std::fill(db_s.data.begin(), db_s.data.end(), 0.0);
          kernels::matmul_acc_grad_rhs(a.data.data(), g.data.data(),
                                       db_s.data.data(), m, k, n);
        },
        reps);
    kernels::set_parallel(true);
    double t2p = time_median(
        [&] {
          std::fill(db_p.data.begin(), db_p.data.end(), 0.0);
          kernels::matmul_acc_grad_rhs(a.data.data(), g.data.data(),
                                       db_p.data.data(), m, k, n);
        },
        reps);
    report("matmul grad rhs 512^3", t2s, t2p, bits_equal(db_s, db_p));
  }

  {
    const std::size_t n = 4 * 1024 * 1024;
    Tensor x = rng.normal_tensor({n});
    Tensor out_s({n}), out_p({n});
    kernels::set_parallel(false);
    double ts = time_median(
        [&] { kernels::ew_tanh(x.data.data(), out_s.data.data(), n); }, reps);
    kernels::set_parallel(true);
    double tp = time_median(
        [&] { kernels::ew_tanh(x.data.data(), out_p.data.data(), n); }, reps);
    report("tanh 4M", ts, tp, bits_equal(out_s, out_p));

    kernels::set_parallel(false);
    double es = time_median(
        [&] { kernels::ew_exp(x.data.data(), out_s.data.data(), n); }, reps);
    kernels::set_parallel(true);
    double ep = time_median(
        [&] { kernels::ew_exp(x.data.data(), out_p.data.data(), n); }, reps);
    report("exp 4M", es, ep, bits_equal(out_s, out_p));
  }

  {
    const std::size_t m = 2048, n = 2048;
    Tensor x = rng.normal_tensor({m, n});
    Tensor rs_s({m}), rs_p({m}), cs_s({n}), cs_p({n});
    kernels::set_parallel(false);
    double ts = time_median(
        [&] { kernels::row_sum(x.data.data(), rs_s.data.data(), m, n); }, reps);
    kernels::set_parallel(true);
    double tp = time_median(
        [&] { kernels::row_sum(x.data.data(), rs_p.data.data(), m, n); }, reps);
    report("row_sum 2048x2048", ts, tp, bits_equal(rs_s, rs_p));

    kernels::set_parallel(false);
    double cs = time_median(
        [&] { kernels::col_sum(x.data.data(), cs_s.data.data(), m, n); }, reps);
    kernels::set_parallel(true);
    double cp = time_median(
        [&] { kernels::col_sum(x.data.data(), cs_p.data.data(), m, n); }, reps);
    report("col_sum 2048x2048", cs, cp, bits_equal(cs_s, cs_p));
  }

  kernels::set_parallel(true);
  return 0;
}
