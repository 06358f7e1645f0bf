#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "zmt/linalg.hpp"
#include "zmt/tensor.hpp"

namespace zmt {

/// How to close the open (external) axes of the neighborhood when building
/// the bond metric. Identity closure traces each open axis directly against
/// its conjugate, which makes the metric an exact Gram matrix.
enum class Closure { identity };

/// Running PSD diagnostic over every metric built through it.
struct PsdMonitor {
  double worst_ratio = 1.0; // min over metrics of min_eig / norm_scale
  std::int64_t metrics = 0;

  void record(double min_eig, double norm_scale) {
    ++metrics;
    if (norm_scale > 0) worst_ratio = std::min(worst_ratio, min_eig / norm_scale);
  }
};

/// Gram matrix g of the cut states at a bond. half_overlap carries the four
/// bond axes (i, j, ip, jp), each of length D; rows (i,j) against columns
/// (ip,jp) give the D^2 x D^2 matrix. norm_scale is the trace sum_ij g_{ij,ij}.
struct BondEnvironment {
  Tensor half_overlap;
  std::int64_t D = 0;
  double norm_scale = 0.0;
  double min_eigenvalue = 0.0; // of the matricized g, PSD diagnostic

  std::vector<double> matrix() const; // D^2 x D^2 row-major, row index i*D+j
};

/// The kappa lowest eigenmodes of the regularized metric, reshaped to D x D.
struct ModeBasis {
  std::vector<std::vector<double>> modes; // each D*D, orthonormal entrywise
  std::vector<double> eigenvalues;        // of g + regularization, ascending
  double regularization = 0.0;            // absolute shift that was added
  std::int64_t D = 0;

  std::int64_t kappa() const { return static_cast<std::int64_t>(modes.size()); }
};

/// A candidate insertion matrix Z = sum_m alpha_m Z^m with its dominant real
/// eigen-triple and truncation cost.
struct ZCandidate {
  std::vector<double> alpha;
  std::vector<double> Z; // D x D, unit Frobenius norm after optimization
  std::int64_t D = 0;
  linalg::EigenPairGeneral emax;
  double f = 0.0; // truncation error N / emax^2
  double N = 0.0; // quadratic form Z g Z
  int cg_iterations = 0;
};

/// Absorbable factors from the SVD of I - Z/E_max.
struct TruncationFactors {
  std::vector<double> left;  // D x (D-1), U diag(sqrt(lambda))
  std::vector<double> right; // (D-1) x D, diag(sqrt(lambda)) V^T
  std::vector<double> lambdas; // D-1 retained singular values, descending
  std::vector<std::pair<double, double>> mus; // D-1 nonzero eigenvalues of I - Z/E
  double f_initial = 0.0;
  bool discard_ambiguous = false; // smallest two singular values nearly tied
};

struct ZmtOptions {
  int kappa = 5;        // rounded up to odd, clamped to D^2
  double reg = 1e-12;   // relative metric regularization
  int cg_max_iterations = 200;
  double cg_tolerance = 1e-10; // on the subspace gradient norm
  double armijo_c = 1e-4;
  double backtrack = 0.5;
  // Newton polish after CG: drives the stationarity residual to machine
  // precision using the analytic subspace Hessian. First-order steps level
  // off around 1e-6 relative in f, which is too coarse for the
  // gauge-invariance diagnostics of the truncated spectrum.
  bool polish = true;
  int polish_max_iterations = 60;
  PsdMonitor* monitor = nullptr;
};

/// Per-truncation diagnostic record, emitted upward to the CLI.
struct TruncationReport {
  std::string bond;
  std::int64_t D_before = 0;
  std::int64_t D_after = 0;
  double f_initial_mode = 0.0;
  double f_optimized = 0.0;
  int cg_iterations = 0;
  bool fallback_used = false;
  std::vector<std::pair<double, double>> mus;
};

/// Cut `bond` in `network` and contract the neighborhood against its
/// conjugate with the given closure. The bond must join exactly two tensors
/// that stay connected through the environment, otherwise the cut is invalid.
/// Row indices (i, j) of the metric belong to the tensor that appears first
/// in `network`; truncation factors follow the same convention.
BondEnvironment build_metric(const std::vector<Tensor>& network,
                             const std::string& bond,
                             Closure closure = Closure::identity);

/// kappa lowest eigenmodes of g + reg*(norm_scale/D^2)*I.
ModeBasis lowest_modes(const BondEnvironment& env, std::int64_t kappa, double reg);

struct ErrorEval {
  double f = 0.0;
  double N = 0.0;
  linalg::EigenPairGeneral emax;
};

/// f = N / E_max^2 for the given D x D matrix Z; E_max is the real eigenvalue
/// of largest magnitude. Empty when Z has no usable real eigenvalue.
std::optional<ErrorEval> truncation_error(const std::vector<double>& Z,
                                          const BondEnvironment& env);

enum class GradStatus { ok, no_real_eigenvalue, degenerate };

struct GradResult {
  GradStatus status = GradStatus::ok;
  std::vector<double> G; // D x D, derivative of f w.r.t. the entries of Z
  ErrorEval eval;
};

/// Gradient of f at Z: G = 2 (g Z - f E L R^T) / E^2 in the real case.
GradResult gradient_full(const std::vector<double>& Z, const BondEnvironment& env);

/// Subspace gradient G_m = sum_ij Z^m_ij G_ij.
GradResult gradient_subspace(const ZCandidate& candidate, const ModeBasis& basis,
                             const BondEnvironment& env,
                             std::vector<double>* out_Gm);

/// Initialize at the best single mode (falling back to pairwise mode
/// combinations when no single mode has a usable real eigenvalue) and run
/// Polak-Ribiere+ conjugate gradient on f(alpha). Empty result means no
/// usable candidate exists and the caller should fall back to SVD.
std::optional<ZCandidate> optimize_candidate(const ModeBasis& basis,
                                             const BondEnvironment& env,
                                             const ZmtOptions& opts);

/// SVD of I - Z/E_max with the smallest singular value discarded.
TruncationFactors truncate_bond(const ZCandidate& candidate);

/// Apply truncation factors on `bond`: the first-listed bond tensor absorbs
/// `left`, the second absorbs `right`; the bond shrinks from D to D-1.
std::vector<Tensor> absorb_bond_factors(const std::vector<Tensor>& network,
                                        const std::string& bond,
                                        const TruncationFactors& factors);

/// Environment-free SVD truncation of `bond` to `new_dim`: QR-split both
/// bond tensors, SVD the bond matrix R_A R_B^T, keep the new_dim largest
/// values and absorb sqrt factors symmetrically.
std::vector<Tensor> svd_cut_bond(const std::vector<Tensor>& network,
                                 const std::string& bond, std::int64_t new_dim);

/// One zero-mode cut D -> D-1 (with SVD fallback when no candidate usable).
std::pair<std::vector<Tensor>, TruncationReport> zmt_cut_bond(
    const std::vector<Tensor>& network, const std::string& bond,
    const ZmtOptions& opts);

struct ReduceResult {
  std::vector<Tensor> network;
  std::vector<TruncationReport> reports;
};

/// Iterate metric -> modes -> optimize -> truncate while the optimized f
/// stays within f_tol and D > 1.
ReduceResult reduce_iteratively(std::vector<Tensor> network, const std::string& bond,
                                double f_tol, const ZmtOptions& opts);

struct GaugeProbeResult {
  std::vector<std::pair<double, double>> mus_original;
  std::vector<std::pair<double, double>> mus_gauged;
  double f_original = 0.0;
  double f_gauged = 0.0;
  double gauge_cond = 0.0;
};

/// Insert gauge^-1 gauge on the bond and rerun the optimization in both
/// gauges; the sorted nonzero spectra of I - Z/E_max are gauge invariant up
/// to optimizer trapping.
GaugeProbeResult gauge_probe(const std::vector<Tensor>& network,
                             const std::string& bond,
                             const std::vector<double>& gauge,
                             const ZmtOptions& opts);

/// Odd-kappa convention: round up to odd, then clamp to D^2 (rounding down
/// to odd again if the clamp hits an even D^2).
std::int64_t normalize_kappa(std::int64_t kappa, std::int64_t D);

/// Sort complex values lexicographically by (re, im).
void sort_complex(std::vector<std::pair<double, double>>& values);

} // namespace zmt
