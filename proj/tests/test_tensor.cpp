#include <cmath>
#include <cstring>
#include <vector>

#include "doctest.h"
#include "fhvae/kernels.hpp"
#include "fhvae/rng.hpp"
#include "fhvae/tensor.hpp"

using namespace fhvae;

TEST_CASE("tensor shape bookkeeping") {
  Tensor t({2, 3});
  CHECK(t.numel() == 6);
  CHECK(t.rank() == 2);
  CHECK(t.rows() == 2);
  CHECK(t.cols() == 3);
  t.at2(1, 2) = 5.0;
  CHECK(t.data[5] == 5.0);

  Tensor s = Tensor::scalar(3.5);
  CHECK(s.rank() == 0);
  CHECK(s.item() == 3.5);

  CHECK_THROWS_AS(Tensor({2, 2}, {1.0, 2.0, 3.0}), ShapeError);
  CHECK_THROWS_AS(t.item(), ContractError);
  CHECK(shape_to_string({2, 3}) == "(2,3)");
}

TEST_CASE("tensor all_finite") {
  Tensor t({3});
  CHECK(t.all_finite());
  t[1] = std::nan("");
  CHECK_FALSE(t.all_finite());
}

TEST_CASE("random stream determinism and fork independence") {
  RandomStream a(42), b(42);
  for (int i = 0; i < 100; ++i) {
    CHECK(a.normal() == b.normal());
    CHECK(a.uniform() == b.uniform());
  }

  RandomStream base(7);
  RandomStream f1 = base.fork(1);
  base.normal();  // consuming the parent must not change later forks
  RandomStream f1_again = RandomStream(7).fork(1);
  for (int i = 0; i < 16; ++i) CHECK(f1.normal() == f1_again.normal());

  RandomStream f2 = base.fork(2);
  bool all_equal = true;
  RandomStream f1b = RandomStream(7).fork(1);
  for (int i = 0; i < 16; ++i) all_equal = all_equal && (f1b.normal() == f2.normal());
  CHECK_FALSE(all_equal);
}

TEST_CASE("random stream moments are sane") {
  RandomStream rng(123);
  const int n = 200000;
  double sum = 0.0, sumsq = 0.0;
  for (int i = 0; i < n; ++i) {
    double v = rng.normal();
    sum += v;
    sumsq += v * v;
  }
  double mean = sum / n;
  double var = sumsq / n - mean * mean;
  CHECK(std::abs(mean) < 0.01);
  CHECK(std::abs(var - 1.0) < 0.02);
}

TEST_CASE("permutation covers all indices") {
  RandomStream rng(5);
  auto p = rng.permutation(50);
  std::vector<char> seen(50, 0);
  for (auto i : p) seen[i] = 1;
  for (char c : seen) CHECK(c == 1);
}

namespace {

// Bitwise comparison between the serial reference and the dispatching entry
// points with the parallel path forced on.
bool bits_equal(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() &&
         std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

}  // namespace

TEST_CASE("parallel kernels match the serial reference bit for bit") {
  RandomStream rng(99);
  const std::size_t m = 173, k = 141, n = 157;  // above the parallel grain
  Tensor a = rng.normal_tensor({m, k});
  Tensor b = rng.normal_tensor({k, n});

  kernels::set_parallel(true);
  Tensor c_par({m, n});
  kernels::matmul(a.data.data(), b.data.data(), c_par.data.data(), m, k, n);
  Tensor c_ser({m, n});
  kernels::serial::matmul(a.data.data(), b.data.data(), c_ser.data.data(), m, k, n);
  CHECK(bits_equal(c_par.data, c_ser.data));

  Tensor g = rng.normal_tensor({m, n});
  Tensor da_par({m, k}), da_ser({m, k});
  kernels::matmul_acc_grad_lhs(g.data.data(), b.data.data(), da_par.data.data(), m, k, n);
  kernels::serial::matmul_acc_grad_lhs(g.data.data(), b.data.data(), da_ser.data.data(), m, k, n);
  CHECK(bits_equal(da_par.data, da_ser.data));

  Tensor db_par({k, n}), db_ser({k, n});
  kernels::matmul_acc_grad_rhs(a.data.data(), g.data.data(), db_par.data.data(), m, k, n);
  kernels::serial::matmul_acc_grad_rhs(a.data.data(), g.data.data(), db_ser.data.data(), m, k, n);
  CHECK(bits_equal(db_par.data, db_ser.data));

  const std::size_t big = 50000;
  Tensor x = rng.normal_tensor({big});
  Tensor y = rng.uniform_tensor({big}, 0.5, 2.0);
  Tensor out_par({big}), out_ser({big});

  kernels::ew_mul(x.data.data(), y.data.data(), out_par.data.data(), big);
  kernels::serial::ew_mul(x.data.data(), y.data.data(), out_ser.data.data(), big);
  CHECK(bits_equal(out_par.data, out_ser.data));

  kernels::ew_tanh(x.data.data(), out_par.data.data(), big);
  kernels::serial::ew_tanh(x.data.data(), out_ser.data.data(), big);
  CHECK(bits_equal(out_par.data, out_ser.data));

  kernels::ew_div(x.data.data(), y.data.data(), out_par.data.data(), big);
  kernels::serial::ew_div(x.data.data(), y.data.data(), out_ser.data.data(), big);
  CHECK(bits_equal(out_par.data, out_ser.data));

  Tensor mat = rng.normal_tensor({300, 200});
  Tensor rs_par({300}), rs_ser({300}), cs_par({200}), cs_ser({200});
  kernels::row_sum(mat.data.data(), rs_par.data.data(), 300, 200);
  kernels::serial::row_sum(mat.data.data(), rs_ser.data.data(), 300, 200);
  CHECK(bits_equal(rs_par.data, rs_ser.data));
  kernels::col_sum(mat.data.data(), cs_par.data.data(), 300, 200);
  kernels::serial::col_sum(mat.data.data(), cs_ser.data.data(), 300, 200);
  CHECK(bits_equal(cs_par.data, cs_ser.data));

  Tensor acc_par = rng.normal_tensor({300, 200});
  Tensor acc_ser = acc_par;
  Tensor vec = rng.normal_tensor({200});
  kernels::bcast_rows_acc(acc_par.data.data(), 0.5, vec.data.data(), 300, 200);
  kernels::serial::bcast_rows_acc(acc_ser.data.data(), 0.5, vec.data.data(), 300, 200);
  CHECK(bits_equal(acc_par.data, acc_ser.data));

  Tensor vec_m = rng.normal_tensor({300});
  kernels::bcast_cols_acc(acc_par.data.data(), -1.5, vec_m.data.data(), 300, 200);
  kernels::serial::bcast_cols_acc(acc_ser.data.data(), -1.5, vec_m.data.data(), 300, 200);
  CHECK(bits_equal(acc_par.data, acc_ser.data));
}

TEST_CASE("kernel switch reports state") {
  kernels::set_parallel(false);
  CHECK_FALSE(kernels::parallel_enabled());
  kernels::set_parallel(true);
#ifdef _OPENMP
  CHECK(kernels::parallel_enabled());
#endif
}
