// Compares the OpenMP kernels against the serial reference implementations
// and times a representative metric construction.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <vector>

#include "zmt/engine.hpp"
#include "zmt/kernels.hpp"
#include "zmt/rng.hpp"
#include "zmt/toynets.hpp"

using namespace zmt;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

template <typename F>
double time_best_of(int reps, F&& fn) {
  double best = 1e300;
  for (int r = 0; r < reps; ++r) {
    const auto t0 = Clock::now();
    fn();
    best = std::min(best, seconds_since(t0));
  }
  return best;
}

void bench_matmul(std::int64_t n) {
  Rng rng(1);
  std::vector<double> a(n * n), b(n * n), c1(n * n), c2(n * n);
  for (auto& v : a) v = rng.uniform(-1, 1);
  for (auto& v : b) v = rng.uniform(-1, 1);
  const double ts = time_best_of(3, [&] {
    kernels::serial::matmul(a.data(), b.data(), c1.data(), n, n, n);
  });
  const double tp = time_best_of(3, [&] {
    kernels::matmul(a.data(), b.data(), c2.data(), n, n, n);
  });
  double worst = 0;
  for (std::int64_t e = 0; e < n * n; ++e)
    worst = std::max(worst, std::abs(c1[e] - c2[e]));
  const double flops = 2.0 * n * n * n;
  std::printf("matmul %4lld^3   serial %8.3f ms (%6.2f GF)   omp %8.3f ms (%6.2f GF)   x%.2f   max|d|=%.1e\n",
              static_cast<long long>(n), ts * 1e3, flops / ts * 1e-9, tp * 1e3,
              flops / tp * 1e-9, ts / tp, worst);
}

void bench_permute(std::int64_t n) {
  Rng rng(2);
  std::vector<double> in(n * n * n), o1(in.size()), o2(in.size());
  for (auto& v : in) v = rng.uniform(-1, 1);
  const std::vector<std::int64_t> shape = {n, n, n};
  const std::vector<std::int64_t> strides = {1, n * n, n}; // (k, i, j) gather
  const double ts = time_best_of(3, [&] {
    kernels::serial::permute_copy(in.data(), o1.data(), shape, strides);
  });
  const double tp = time_best_of(3, [&] {
    kernels::permute_copy(in.data(), o2.data(), shape, strides);
  });
  std::printf("permute %4lld^3  serial %8.3f ms                omp %8.3f ms                x%.2f   %s\n",
              static_cast<long long>(n), ts * 1e3, tp * 1e3, ts / tp,
              o1 == o2 ? "bitwise equal" : "MISMATCH");
}

void bench_metric() {
  const auto p = toy::make_virtual_loop(4, 2, 2, 1e-3, 3);
  const double t = time_best_of(3, [&] { (void)build_metric(p.tensors, "b1"); });
  std::printf("bond metric (fused bond 8): %8.3f ms\n", t * 1e3);
}

} // namespace

int main() {
  std::printf("kernel benchmark: OpenMP vs serial reference\n\n");
  for (const std::int64_t n : {64, 128, 256, 512}) bench_matmul(n);
  std::printf("\n");
  for (const std::int64_t n : {32, 64, 96}) bench_permute(n);
  std::printf("\n");
  bench_metric();
  return 0;
}
