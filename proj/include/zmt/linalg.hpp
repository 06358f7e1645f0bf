#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "zmt/tensor.hpp"

namespace zmt::linalg {

/// A tensor flattened to a row-major matrix over an ordered bipartition of
/// its axes. rows/cols are the products of the grouped extents.
struct Matricized {
  std::vector<double> data;
  std::int64_t rows = 0, cols = 0;
  Axes row_axes, col_axes;
  Shape row_shape, col_shape;
};

Matricized matricize(const Tensor& t, const Axes& row_axes, const Axes& col_axes);

/// Rebuild a tensor with `pattern`'s axes from a rows x cols matrix.
Tensor from_matrix(const std::vector<double>& m, const Matricized& pattern);

struct MatSvd {
  std::vector<double> u;  // rows x k
  std::vector<double> s;  // k, non-negative descending
  std::vector<double> vt; // k x cols
  std::int64_t rows = 0, cols = 0, k = 0;
};

/// Thin SVD, a = u diag(s) vt. Throws std::runtime_error on non-convergence.
MatSvd svd(const double* a, std::int64_t m, std::int64_t n);
MatSvd svd(const Matricized& m);

struct SymEig {
  std::vector<double> values;  // ascending
  std::vector<double> vectors; // column k at vectors[i*n + k], orthonormal
  std::int64_t n = 0;
};

/// Symmetric eigendecomposition; the input is symmetrized as (m + m^T)/2
/// before solving, Gram matrices carry harmless rounding asymmetry.
SymEig eig_sym(const std::vector<double>& m, std::int64_t n);

/// One eigenvalue of a general real matrix with its right/left eigenvectors,
/// stored as (re, im) parts. For a simple eigenvalue the left vector is
/// rescaled so that sum_j L_j R_j = 1 (unconjugated); `defective` marks pairs
/// whose raw overlap had magnitude below 1e-10 and were left unscaled.
/// Real eigenvalues are stored with exactly zero imaginary parts.
struct EigenPairGeneral {
  double value_re = 0.0;
  double value_im = 0.0;
  std::vector<double> right_re, right_im;
  std::vector<double> left_re, left_im;
  bool defective = false;

  bool is_real() const { return value_im == 0.0; }
};

/// Full spectrum of a real n x n matrix; complex values come in conjugate
/// pairs (positive-imaginary member first).
std::vector<EigenPairGeneral> eig_general(const std::vector<double>& m,
                                          std::int64_t n);

/// Minimum-norm least-squares solution of a x = b (b may carry several
/// right-hand sides as an m x nrhs block); singular values below
/// cutoff * s_max are discarded. Returns the n x nrhs solution; if
/// `effective_rank` is given it receives the rank used.
std::vector<double> lstsq(const std::vector<double>& a, std::int64_t m,
                          std::int64_t n, const std::vector<double>& b,
                          std::int64_t nrhs, double cutoff,
                          std::int64_t* effective_rank = nullptr);

struct QrFactors {
  std::vector<double> q; // m x k, orthonormal columns
  std::vector<double> r; // k x n, upper trapezoidal
  std::int64_t m = 0, n = 0, k = 0;
};

QrFactors qr(const std::vector<double>& a, std::int64_t m, std::int64_t n);

std::vector<double> inverse(std::vector<double> a, std::int64_t n);

/// 2-norm condition number (s_max / s_min).
double cond(const std::vector<double>& a, std::int64_t m, std::int64_t n);

/// Row-major helper product c = a (m x k) * b (k x n).
std::vector<double> matmul(const std::vector<double>& a, std::int64_t m,
                           std::int64_t k, const std::vector<double>& b,
                           std::int64_t n);

} // namespace zmt::linalg
