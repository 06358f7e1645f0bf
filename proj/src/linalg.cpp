#include "zmt/linalg.hpp"

#include <dlfcn.h>
#include <lapacke.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdlib>
#include <limits>
#include <stdexcept>

#include "zmt/kernels.hpp"

namespace zmt::linalg {

namespace {

constexpr double kBiorthTol = 1e-10;

// The distro BLAS behind LAPACK is often openblas-pthread; its threaded GEMM
// sums in a thread-count-dependent order, which breaks bit-reproducibility
// of whole trajectories. All our LAPACK calls are on small matrices, so pin
// it to one thread (an explicit OPENBLAS_NUM_THREADS setting wins).
const int kPinBlasThreads = [] {
  if (std::getenv("OPENBLAS_NUM_THREADS") == nullptr) {
    setenv("OPENBLAS_NUM_THREADS", "1", /*overwrite=*/0);
    using SetThreadsFn = void (*)(int);
    if (auto* fn = reinterpret_cast<SetThreadsFn>(
            dlsym(RTLD_DEFAULT, "openblas_set_num_threads")))
      fn(1);
  }
  return 0;
}();

[[noreturn]] void fail(const std::string& msg) { throw std::runtime_error(msg); }

} // namespace

Matricized matricize(const Tensor& t, const Axes& row_axes, const Axes& col_axes) {
  Axes order = row_axes;
  order.insert(order.end(), col_axes.begin(), col_axes.end());
  const Tensor p = permuted(t, order); // validates the bipartition covers all axes
  Matricized m;
  m.row_axes = row_axes;
  m.col_axes = col_axes;
  m.rows = 1;
  m.cols = 1;
  for (const auto& ax : row_axes) {
    m.row_shape.push_back(t.dim(ax));
    m.rows *= t.dim(ax);
  }
  for (const auto& ax : col_axes) {
    m.col_shape.push_back(t.dim(ax));
    m.cols *= t.dim(ax);
  }
  m.data = p.storage();
  return m;
}

Tensor from_matrix(const std::vector<double>& m, const Matricized& pattern) {
  Axes axes = pattern.row_axes;
  axes.insert(axes.end(), pattern.col_axes.begin(), pattern.col_axes.end());
  Shape shape = pattern.row_shape;
  shape.insert(shape.end(), pattern.col_shape.begin(), pattern.col_shape.end());
  return Tensor(axes, shape, m);
}

MatSvd svd(const double* a, std::int64_t m, std::int64_t n) {
  const lapack_int lm = static_cast<lapack_int>(m);
  const lapack_int ln = static_cast<lapack_int>(n);
  const lapack_int k = std::min(lm, ln);
  MatSvd out;
  out.rows = m;
  out.cols = n;
  out.k = k;
  out.u.resize(static_cast<std::size_t>(m * k));
  out.s.resize(static_cast<std::size_t>(k));
  out.vt.resize(static_cast<std::size_t>(k * n));
  std::vector<double> work(a, a + m * n);
  lapack_int info = LAPACKE_dgesdd(LAPACK_ROW_MAJOR, 'S', lm, ln, work.data(), ln,
                                   out.s.data(), out.u.data(), k, out.vt.data(), ln);
  if (info != 0) {
    // dgesdd occasionally fails to converge; dgesvd is slower but sturdier
    std::copy(a, a + m * n, work.begin());
    std::vector<double> superb(static_cast<std::size_t>(std::max<lapack_int>(1, k - 1)));
    info = LAPACKE_dgesvd(LAPACK_ROW_MAJOR, 'S', 'S', lm, ln, work.data(), ln,
                          out.s.data(), out.u.data(), k, out.vt.data(), ln,
                          superb.data());
  }
  if (info != 0) fail("svd: did not converge (info=" + std::to_string(info) + ")");
  return out;
}

MatSvd svd(const Matricized& m) { return svd(m.data.data(), m.rows, m.cols); }

SymEig eig_sym(const std::vector<double>& m, std::int64_t n) {
  SymEig out;
  out.n = n;
  out.values.resize(static_cast<std::size_t>(n));
  out.vectors.resize(static_cast<std::size_t>(n * n));
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t j = 0; j < n; ++j)
      out.vectors[i * n + j] = 0.5 * (m[i * n + j] + m[j * n + i]);
  const lapack_int info =
      LAPACKE_dsyev(LAPACK_ROW_MAJOR, 'V', 'U', static_cast<lapack_int>(n),
                    out.vectors.data(), static_cast<lapack_int>(n), out.values.data());
  if (info != 0) fail("eig_sym: did not converge (info=" + std::to_string(info) + ")");
  return out;
}

std::vector<EigenPairGeneral> eig_general(const std::vector<double>& m,
                                          std::int64_t n) {
  const lapack_int ln = static_cast<lapack_int>(n);
  std::vector<double> a = m;
  std::vector<double> wr(n), wi(n), vl(n * n), vr(n * n);
  const lapack_int info =
      LAPACKE_dgeev(LAPACK_ROW_MAJOR, 'V', 'V', ln, a.data(), ln, wr.data(),
                    wi.data(), vl.data(), ln, vr.data(), ln);
  if (info != 0)
    fail("eig_general: did not converge (info=" + std::to_string(info) + ")");

  auto column = [n](const std::vector<double>& mat, std::int64_t j) {
    std::vector<double> col(n);
    for (std::int64_t i = 0; i < n; ++i) col[i] = mat[i * n + j];
    return col;
  };

  std::vector<EigenPairGeneral> pairs(n);
  for (std::int64_t j = 0; j < n; ++j) {
    EigenPairGeneral& p = pairs[j];
    p.value_re = wr[j];
    p.value_im = wi[j];
    if (wi[j] == 0.0) {
      p.right_re = column(vr, j);
      p.right_im.assign(n, 0.0);
      p.left_re = column(vl, j);
      p.left_im.assign(n, 0.0);
      double s = 0;
      for (std::int64_t i = 0; i < n; ++i) s += p.left_re[i] * p.right_re[i];
      if (std::abs(s) < kBiorthTol) {
        p.defective = true;
      } else {
        for (auto& v : p.left_re) v /= s;
      }
    } else if (wi[j] > 0.0) {
      // conjugate pair encoded in columns j, j+1; dgeev's left vectors u
      // satisfy u^H A = w u^H, while we store L with L^T A = w L^T = conj(u)
      p.right_re = column(vr, j);
      p.right_im = column(vr, j + 1);
      p.left_re = column(vl, j);
      p.left_im = column(vl, j + 1);
      for (auto& v : p.left_im) v = -v;
      std::complex<double> s = 0;
      for (std::int64_t i = 0; i < n; ++i)
        s += std::complex<double>(p.left_re[i], p.left_im[i]) *
             std::complex<double>(p.right_re[i], p.right_im[i]);
      if (std::abs(s) < kBiorthTol) {
        p.defective = true;
      } else {
        for (std::int64_t i = 0; i < n; ++i) {
          const std::complex<double> l =
              std::complex<double>(p.left_re[i], p.left_im[i]) / s;
          p.left_re[i] = l.real();
          p.left_im[i] = l.imag();
        }
      }
    } else {
      // conjugate of the previous entry
      const EigenPairGeneral& q = pairs[j - 1];
      p = q;
      p.value_im = -q.value_im;
      for (std::int64_t i = 0; i < n; ++i) {
        p.right_im[i] = -q.right_im[i];
        p.left_im[i] = -q.left_im[i];
      }
    }
  }
  return pairs;
}

std::vector<double> lstsq(const std::vector<double>& a, std::int64_t m,
                          std::int64_t n, const std::vector<double>& b,
                          std::int64_t nrhs, double cutoff,
                          std::int64_t* effective_rank) {
  const std::int64_t ldb_rows = std::max(m, n);
  std::vector<double> aw = a;
  std::vector<double> bw(static_cast<std::size_t>(ldb_rows * nrhs), 0.0);
  for (std::int64_t i = 0; i < m; ++i)
    for (std::int64_t j = 0; j < nrhs; ++j) bw[i * nrhs + j] = b[i * nrhs + j];
  std::vector<double> s(static_cast<std::size_t>(std::min(m, n)));
  lapack_int rank = 0;
  const lapack_int info = LAPACKE_dgelsd(
      LAPACK_ROW_MAJOR, static_cast<lapack_int>(m), static_cast<lapack_int>(n),
      static_cast<lapack_int>(nrhs), aw.data(), static_cast<lapack_int>(n),
      bw.data(), static_cast<lapack_int>(nrhs), s.data(), cutoff, &rank);
  if (info != 0) fail("lstsq: dgelsd failed (info=" + std::to_string(info) + ")");
  if (effective_rank) *effective_rank = rank;
  std::vector<double> x(static_cast<std::size_t>(n * nrhs));
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t j = 0; j < nrhs; ++j) x[i * nrhs + j] = bw[i * nrhs + j];
  return x;
}

QrFactors qr(const std::vector<double>& a, std::int64_t m, std::int64_t n) {
  QrFactors f;
  f.m = m;
  f.n = n;
  f.k = std::min(m, n);
  std::vector<double> work = a;
  std::vector<double> tau(static_cast<std::size_t>(f.k));
  lapack_int info =
      LAPACKE_dgeqrf(LAPACK_ROW_MAJOR, static_cast<lapack_int>(m),
                     static_cast<lapack_int>(n), work.data(),
                     static_cast<lapack_int>(n), tau.data());
  if (info != 0) fail("qr: dgeqrf failed");
  f.r.assign(static_cast<std::size_t>(f.k * n), 0.0);
  for (std::int64_t i = 0; i < f.k; ++i)
    for (std::int64_t j = i; j < n; ++j) f.r[i * n + j] = work[i * n + j];
  info = LAPACKE_dorgqr(LAPACK_ROW_MAJOR, static_cast<lapack_int>(m),
                        static_cast<lapack_int>(f.k), static_cast<lapack_int>(f.k),
                        work.data(), static_cast<lapack_int>(n), tau.data());
  if (info != 0) fail("qr: dorgqr failed");
  f.q.resize(static_cast<std::size_t>(m * f.k));
  for (std::int64_t i = 0; i < m; ++i)
    for (std::int64_t j = 0; j < f.k; ++j) f.q[i * f.k + j] = work[i * n + j];
  return f;
}

std::vector<double> inverse(std::vector<double> a, std::int64_t n) {
  std::vector<lapack_int> ipiv(static_cast<std::size_t>(n));
  lapack_int info = LAPACKE_dgetrf(LAPACK_ROW_MAJOR, static_cast<lapack_int>(n),
                                   static_cast<lapack_int>(n), a.data(),
                                   static_cast<lapack_int>(n), ipiv.data());
  if (info != 0) fail("inverse: matrix is singular");
  info = LAPACKE_dgetri(LAPACK_ROW_MAJOR, static_cast<lapack_int>(n), a.data(),
                        static_cast<lapack_int>(n), ipiv.data());
  if (info != 0) fail("inverse: dgetri failed");
  return a;
}

double cond(const std::vector<double>& a, std::int64_t m, std::int64_t n) {
  const MatSvd f = svd(a.data(), m, n);
  const double smin = f.s.back();
  if (smin == 0.0) return std::numeric_limits<double>::infinity();
  return f.s.front() / smin;
}

std::vector<double> matmul(const std::vector<double>& a, std::int64_t m,
                           std::int64_t k, const std::vector<double>& b,
                           std::int64_t n) {
  std::vector<double> c(static_cast<std::size_t>(m * n));
  kernels::matmul(a.data(), b.data(), c.data(), m, k, n);
  return c;
}

} // namespace zmt::linalg
