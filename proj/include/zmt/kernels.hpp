#pragma once

#include <cstdint>
#include <vector>

namespace zmt::kernels {

// Dense row-major kernels. Each output element is produced by exactly one
// thread and accumulates in a fixed k-order, so results do not depend on the
// number of OpenMP threads.

/// c (m x n) = a (m x k) * b (k x n), row-major.
void matmul(const double* a, const double* b, double* c, std::int64_t m,
            std::int64_t k, std::int64_t n);

/// Gather-permutation of a dense array. `out_shape` describes the output
/// axes; `in_strides` gives, for each output axis, the stride of the
/// corresponding input axis.
void permute_copy(const double* in, double* out,
                  const std::vector<std::int64_t>& out_shape,
                  const std::vector<std::int64_t>& in_strides);

// Serial reference implementations, kept as oracles for the parallel kernels
// and for the kernel benchmark.
namespace serial {

void matmul(const double* a, const double* b, double* c, std::int64_t m,
            std::int64_t k, std::int64_t n);

void permute_copy(const double* in, double* out,
                  const std::vector<std::int64_t>& out_shape,
                  const std::vector<std::int64_t>& in_strides);

} // namespace serial

} // namespace zmt::kernels
