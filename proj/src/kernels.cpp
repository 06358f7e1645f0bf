#include "zmt/kernels.hpp"

#include <algorithm>

namespace zmt::kernels {

namespace {

// Below this many flops the OpenMP fork/join overhead dominates.
constexpr std::int64_t kParallelFlopCutoff = 1 << 15;

inline void matmul_row(const double* ai, const double* b, double* ci,
                       std::int64_t k, std::int64_t n) {
  std::fill(ci, ci + n, 0.0);
  for (std::int64_t p = 0; p < k; ++p) {
    const double aip = ai[p];
    const double* bp = b + p * n;
#pragma omp simd
    for (std::int64_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
  }
}

} // namespace

namespace serial {

void matmul(const double* a, const double* b, double* c, std::int64_t m,
            std::int64_t k, std::int64_t n) {
  for (std::int64_t i = 0; i < m; ++i) matmul_row(a + i * k, b, c + i * n, k, n);
}

void permute_copy(const double* in, double* out,
                  const std::vector<std::int64_t>& out_shape,
                  const std::vector<std::int64_t>& in_strides) {
  const int rank = static_cast<int>(out_shape.size());
  std::int64_t total = 1;
  for (auto s : out_shape) total *= s;
  for (std::int64_t o = 0; o < total; ++o) {
    std::int64_t rem = o, src = 0;
    for (int ax = rank - 1; ax >= 0; --ax) {
      const std::int64_t idx = rem % out_shape[ax];
      rem /= out_shape[ax];
      src += idx * in_strides[ax];
    }
    out[o] = in[src];
  }
}

} // namespace serial

void matmul(const double* a, const double* b, double* c, std::int64_t m,
            std::int64_t k, std::int64_t n) {
  if (m * k * n < kParallelFlopCutoff || m == 1) {
    serial::matmul(a, b, c, m, k, n);
    return;
  }
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < m; ++i) matmul_row(a + i * k, b, c + i * n, k, n);
}

void permute_copy(const double* in, double* out,
                  const std::vector<std::int64_t>& out_shape,
                  const std::vector<std::int64_t>& in_strides) {
  const int rank = static_cast<int>(out_shape.size());
  std::int64_t total = 1;
  for (auto s : out_shape) total *= s;
  if (total < kParallelFlopCutoff) {
    serial::permute_copy(in, out, out_shape, in_strides);
    return;
  }
#pragma omp parallel for schedule(static)
  for (std::int64_t o = 0; o < total; ++o) {
    std::int64_t rem = o, src = 0;
    for (int ax = rank - 1; ax >= 0; --ax) {
      const std::int64_t idx = rem % out_shape[ax];
      rem /= out_shape[ax];
      src += idx * in_strides[ax];
    }
    out[o] = in[src];
  }
}

} // namespace zmt::kernels
