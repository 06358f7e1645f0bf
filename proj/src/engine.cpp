#include "zmt/engine.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <queue>
#include <set>
#include <stdexcept>

namespace zmt {

namespace {

constexpr const char* kCutI = "__cut_i";
constexpr const char* kCutJ = "__cut_j";
constexpr const char* kTmp = "__tmp";
constexpr double kRealEigTol = 1e-10;   // |Im| below this x spectral radius is real
constexpr double kTinyEigTol = 1e-12;   // |Re| below this x spectral radius is unusable

[[noreturn]] void fail(const std::string& msg) { throw std::invalid_argument(msg); }

std::pair<std::size_t, std::size_t> bond_tensors(const std::vector<Tensor>& network,
                                                 const std::string& bond) {
  std::vector<std::size_t> owners;
  for (std::size_t k = 0; k < network.size(); ++k)
    if (network[k].has_axis(bond)) owners.push_back(k);
  if (owners.size() != 2)
    fail("bond '" + bond + "' must connect exactly two tensors");
  return {owners[0], owners[1]};
}

void check_cut_connected(const std::vector<Tensor>& network, const std::string& bond,
                         std::size_t ia, std::size_t ib) {
  const std::size_t n = network.size();
  std::vector<char> seen(n, 0);
  std::queue<std::size_t> todo;
  todo.push(ia);
  seen[ia] = 1;
  while (!todo.empty()) {
    const std::size_t cur = todo.front();
    todo.pop();
    for (std::size_t other = 0; other < n; ++other) {
      if (seen[other]) continue;
      bool joined = false;
      for (const auto& ax : network[cur].axes())
        if (ax != bond && network[other].has_axis(ax)) joined = true;
      if (joined) {
        seen[other] = 1;
        todo.push(other);
      }
    }
  }
  if (!seen[ib])
    fail("invalid-cut: bond '" + bond + "' stumps are not joined by the environment");
}

/// Largest-magnitude usable real eigenvalue, or nullopt. Nearly-real complex
/// pairs (|Im| <= 1e-10 x spectral radius) are projected onto real parts and
/// re-binormalized.
std::optional<linalg::EigenPairGeneral> pick_emax(
    std::vector<linalg::EigenPairGeneral> spectrum) {
  double radius = 0;
  for (const auto& p : spectrum)
    radius = std::max(radius, std::hypot(p.value_re, p.value_im));
  if (radius == 0) return std::nullopt;
  int best = -1;
  double best_mag = 0;
  for (int k = 0; k < static_cast<int>(spectrum.size()); ++k) {
    const auto& p = spectrum[k];
    if (std::abs(p.value_im) > kRealEigTol * radius) continue;
    const double mag = std::abs(p.value_re);
    if (mag <= kTinyEigTol * radius) continue;
    if (best < 0 || mag > best_mag) {
      best = k;
      best_mag = mag;
    }
  }
  if (best < 0) return std::nullopt;
  linalg::EigenPairGeneral p = std::move(spectrum[best]);
  if (p.value_im != 0.0) {
    p.value_im = 0.0;
    std::fill(p.right_im.begin(), p.right_im.end(), 0.0);
    std::fill(p.left_im.begin(), p.left_im.end(), 0.0);
    double s = 0;
    for (std::size_t i = 0; i < p.left_re.size(); ++i) s += p.left_re[i] * p.right_re[i];
    if (std::abs(s) < 1e-10) {
      p.defective = true;
    } else {
      p.defective = false;
      for (auto& v : p.left_re) v /= s;
    }
  }
  return p;
}

std::vector<double> metric_times(const BondEnvironment& env,
                                 const std::vector<double>& z) {
  return linalg::matmul(env.matrix(), env.D * env.D, env.D * env.D, z, 1);
}

std::vector<double> combine_modes(const ModeBasis& basis,
                                  const std::vector<double>& alpha) {
  std::vector<double> z(static_cast<std::size_t>(basis.D * basis.D), 0.0);
  for (std::size_t m = 0; m < alpha.size(); ++m)
    for (std::size_t e = 0; e < z.size(); ++e) z[e] += alpha[m] * basis.modes[m][e];
  return z;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm2(const std::vector<double>& a) { return std::sqrt(dot(a, a)); }

} // namespace

std::vector<double> BondEnvironment::matrix() const {
  return permuted(half_overlap, {"i", "j", "ip", "jp"}).storage();
}

std::int64_t normalize_kappa(std::int64_t kappa, std::int64_t D) {
  std::int64_t k = std::max<std::int64_t>(1, kappa);
  if (k % 2 == 0) ++k;
  const std::int64_t cap = D * D;
  if (k > cap) k = (cap % 2 == 0) ? cap - 1 : cap;
  return std::max<std::int64_t>(1, k);
}

void sort_complex(std::vector<std::pair<double, double>>& values) {
  std::sort(values.begin(), values.end());
}

BondEnvironment build_metric(const std::vector<Tensor>& network,
                             const std::string& bond, Closure closure) {
  (void)closure; // identity closure is the only rule; open axes trace directly
  const auto [ia, ib] = bond_tensors(network, bond);
  check_cut_connected(network, bond, ia, ib);

  std::vector<Tensor> ket = network;
  ket[ia] = ket[ia].renamed(bond, kCutI);
  ket[ib] = ket[ib].renamed(bond, kCutJ);
  std::vector<Tensor> all = ket;
  const auto bra = bra_copy(ket, "~", {kCutI, kCutJ});
  all.insert(all.end(), bra.begin(), bra.end());

  Tensor g4 = contract_network(std::move(all));
  g4 = permuted(g4, {kCutI, kCutJ, std::string(kCutI) + "~", std::string(kCutJ) + "~"});
  g4 = g4.renamed({{kCutI, "i"},
                   {kCutJ, "j"},
                   {std::string(kCutI) + "~", "ip"},
                   {std::string(kCutJ) + "~", "jp"}});

  BondEnvironment env;
  env.D = g4.dim("i");
  env.half_overlap = std::move(g4);
  const std::int64_t D = env.D;
  const std::vector<double> g = env.half_overlap.storage();
  const std::int64_t n = D * D;
  double trace = 0;
  for (std::int64_t r = 0; r < n; ++r) trace += g[r * n + r];
  env.norm_scale = trace;
  env.min_eigenvalue = linalg::eig_sym(g, n).values.front();
  return env;
}

ModeBasis lowest_modes(const BondEnvironment& env, std::int64_t kappa, double reg) {
  const std::int64_t D = env.D;
  const std::int64_t n = D * D;
  if (kappa < 1 || kappa > n)
    fail("lowest_modes: kappa must lie in [1, D^2], got " + std::to_string(kappa));
  if (reg < 0) fail("lowest_modes: regularization must be non-negative");

  ModeBasis basis;
  basis.D = D;
  basis.regularization = reg * env.norm_scale / static_cast<double>(n);
  std::vector<double> gm = env.half_overlap.storage();
  for (std::int64_t r = 0; r < n; ++r) gm[r * n + r] += basis.regularization;
  const linalg::SymEig eig = linalg::eig_sym(gm, n);
  for (std::int64_t m = 0; m < kappa; ++m) {
    std::vector<double> mode(static_cast<std::size_t>(n));
    for (std::int64_t e = 0; e < n; ++e) mode[e] = eig.vectors[e * n + m];
    basis.modes.push_back(std::move(mode));
    basis.eigenvalues.push_back(eig.values[m]);
  }
  return basis;
}

std::optional<ErrorEval> truncation_error(const std::vector<double>& Z,
                                          const BondEnvironment& env) {
  auto emax = pick_emax(linalg::eig_general(Z, env.D));
  if (!emax) return std::nullopt;
  ErrorEval eval;
  eval.emax = std::move(*emax);
  // g is a Gram matrix; a negative quadratic form is eigensolver noise and
  // would let the optimizer chase f < 0 by shrinking E_max
  eval.N = std::max(0.0, dot(Z, metric_times(env, Z)));
  eval.f = eval.N / (eval.emax.value_re * eval.emax.value_re);
  return eval;
}

GradResult gradient_full(const std::vector<double>& Z, const BondEnvironment& env) {
  GradResult out;
  auto eval = truncation_error(Z, env);
  if (!eval) {
    out.status = GradStatus::no_real_eigenvalue;
    return out;
  }
  out.eval = std::move(*eval);
  if (out.eval.emax.defective) {
    out.status = GradStatus::degenerate;
    return out;
  }
  const std::int64_t D = env.D;
  const double E = out.eval.emax.value_re;
  const std::vector<double>& L = out.eval.emax.left_re;
  const std::vector<double>& R = out.eval.emax.right_re;
  std::vector<double> gz = metric_times(env, Z);
  out.G.resize(static_cast<std::size_t>(D * D));
  const double c = 2.0 / (E * E);
  for (std::int64_t i = 0; i < D; ++i)
    for (std::int64_t j = 0; j < D; ++j)
      out.G[i * D + j] = c * (gz[i * D + j] - out.eval.f * E * L[i] * R[j]);
  return out;
}

GradResult gradient_subspace(const ZCandidate& candidate, const ModeBasis& basis,
                             const BondEnvironment& env,
                             std::vector<double>* out_Gm) {
  GradResult full = gradient_full(candidate.Z, env);
  if (full.status != GradStatus::ok) return full;
  out_Gm->resize(basis.modes.size());
  for (std::size_t m = 0; m < basis.modes.size(); ++m)
    (*out_Gm)[m] = dot(basis.modes[m], full.G);
  return full;
}

namespace {

// kappa x kappa quadratic form of the metric in the mode basis.
std::vector<double> subspace_quadratic(const ModeBasis& basis,
                                       const BondEnvironment& env) {
  const std::int64_t kappa = basis.kappa();
  std::vector<double> nmat(static_cast<std::size_t>(kappa * kappa));
  for (std::int64_t n = 0; n < kappa; ++n) {
    const std::vector<double> gz = metric_times(env, basis.modes[n]);
    for (std::int64_t m = 0; m < kappa; ++m)
      nmat[m * kappa + n] = dot(basis.modes[m], gz);
  }
  return nmat;
}

// Analytic gradient and Hessian of f(alpha) = (alpha^T Nmat alpha) / E(alpha)^2
// at a simple real E. The eigenvalue curvature comes from the second-order
// perturbation sum over the remaining (bi-normalized) eigenpairs.
struct SubspaceModel {
  bool valid = false;
  double f = 0, N = 0, E = 0;
  std::vector<double> grad, hess; // kappa, kappa x kappa
};

SubspaceModel subspace_model(const std::vector<double>& alpha,
                             const ModeBasis& basis,
                             const std::vector<double>& nmat) {
  using cplx = std::complex<double>;
  const std::int64_t kappa = basis.kappa();
  const std::int64_t D = basis.D;
  SubspaceModel model;

  const std::vector<double> Z = combine_modes(basis, alpha);
  auto spectrum = linalg::eig_general(Z, D);
  double radius = 0;
  for (const auto& p : spectrum)
    radius = std::max(radius, std::hypot(p.value_re, p.value_im));
  if (radius == 0) return model;
  int sel = -1;
  double sel_mag = 0;
  for (int k = 0; k < static_cast<int>(spectrum.size()); ++k) {
    const auto& p = spectrum[k];
    if (p.value_im != 0.0 || p.defective) continue;
    if (std::abs(p.value_re) <= kTinyEigTol * radius) continue;
    if (sel < 0 || std::abs(p.value_re) > sel_mag) {
      sel = k;
      sel_mag = std::abs(p.value_re);
    }
  }
  if (sel < 0) return model;
  const auto& ps = spectrum[sel];
  const double E = ps.value_re;
  for (int k = 0; k < static_cast<int>(spectrum.size()); ++k) {
    if (k == sel) continue;
    if (spectrum[k].defective) return model;
    if (std::hypot(E - spectrum[k].value_re, spectrum[k].value_im) <
        1e-9 * radius)
      return model; // near-degenerate: curvature formula breaks down
  }

  // e_m = L Z^m R and the cross terms of the eigenvalue perturbation series
  std::vector<double> e(static_cast<std::size_t>(kappa));
  std::vector<std::vector<cplx>> lzr(kappa), rzl(kappa); // L Z^m R_k, L_k Z^m R
  for (std::int64_t m = 0; m < kappa; ++m) {
    const auto& Zm = basis.modes[m];
    double em = 0;
    for (std::int64_t i = 0; i < D; ++i)
      for (std::int64_t j = 0; j < D; ++j)
        em += ps.left_re[i] * Zm[i * D + j] * ps.right_re[j];
    e[m] = em;
    lzr[m].resize(spectrum.size());
    rzl[m].resize(spectrum.size());
    for (std::size_t k = 0; k < spectrum.size(); ++k) {
      if (static_cast<int>(k) == sel) continue;
      const auto& pk = spectrum[k];
      cplx a = 0, b = 0;
      for (std::int64_t i = 0; i < D; ++i)
        for (std::int64_t j = 0; j < D; ++j) {
          a += cplx(ps.left_re[i], 0) * Zm[i * D + j] *
               cplx(pk.right_re[j], pk.right_im[j]);
          b += cplx(pk.left_re[i], pk.left_im[i]) * Zm[i * D + j] *
               cplx(ps.right_re[j], 0);
        }
      lzr[m][k] = a;
      rzl[m][k] = b;
    }
  }

  const std::vector<double> na = linalg::matmul(nmat, kappa, kappa, alpha, 1);
  double N = 0;
  for (std::int64_t m = 0; m < kappa; ++m) N += alpha[m] * na[m];
  N = std::max(N, 0.0);
  const double E2 = E * E;

  model.valid = true;
  model.E = E;
  model.N = N;
  model.f = N / E2;
  model.grad.resize(static_cast<std::size_t>(kappa));
  for (std::int64_t m = 0; m < kappa; ++m)
    model.grad[m] = 2.0 * na[m] / E2 - 2.0 * N * e[m] / (E2 * E);
  model.hess.resize(static_cast<std::size_t>(kappa * kappa));
  for (std::int64_t m = 0; m < kappa; ++m)
    for (std::int64_t n = 0; n < kappa; ++n) {
      cplx epp = 0;
      for (std::size_t k = 0; k < spectrum.size(); ++k) {
        if (static_cast<int>(k) == sel) continue;
        epp += (lzr[m][k] * rzl[n][k] + lzr[n][k] * rzl[m][k]) /
               cplx(E - spectrum[k].value_re, -spectrum[k].value_im);
      }
      model.hess[m * kappa + n] =
          2.0 * nmat[m * kappa + n] / E2 -
          4.0 * (na[m] * e[n] + na[n] * e[m]) / (E2 * E) +
          6.0 * N * e[m] * e[n] / (E2 * E2) - 2.0 * N * epp.real() / (E2 * E);
    }
  return model;
}

// Damped projected Newton on the unit sphere of alpha (f is scale invariant,
// so the radial direction is immaterial).
void newton_polish(ZCandidate& cand, const ModeBasis& basis,
                   const BondEnvironment& env, const std::vector<double>& nmat,
                   const ZmtOptions& opts) {
  const std::int64_t kappa = basis.kappa();
  if (kappa < 2) return;
  double damping = 0.0;
  for (int it = 0; it < opts.polish_max_iterations; ++it) {
    const SubspaceModel model = subspace_model(cand.alpha, basis, nmat);
    if (!model.valid) return;
    // tangent projection: P g and P H P + c alpha alpha^T
    std::vector<double> pg = model.grad;
    const double ga = dot(model.grad, cand.alpha);
    for (std::int64_t m = 0; m < kappa; ++m) pg[m] -= ga * cand.alpha[m];
    double hscale = 0;
    for (std::int64_t m = 0; m < kappa; ++m)
      hscale = std::max(hscale, std::abs(model.hess[m * kappa + m]));
    if (hscale == 0) return;
    if (norm2(pg) <= 1e-15 * hscale) return;

    std::vector<double> ph = model.hess;
    // symmetrize and project both sides
    for (std::int64_t m = 0; m < kappa; ++m)
      for (std::int64_t n = m + 1; n < kappa; ++n) {
        const double s = 0.5 * (ph[m * kappa + n] + ph[n * kappa + m]);
        ph[m * kappa + n] = s;
        ph[n * kappa + m] = s;
      }
    std::vector<double> ha = linalg::matmul(ph, kappa, kappa, cand.alpha, 1);
    const double aha = dot(cand.alpha, ha);
    for (std::int64_t m = 0; m < kappa; ++m)
      for (std::int64_t n = 0; n < kappa; ++n)
        ph[m * kappa + n] += -ha[m] * cand.alpha[n] - cand.alpha[m] * ha[n] +
                             aha * cand.alpha[m] * cand.alpha[n] +
                             hscale * cand.alpha[m] * cand.alpha[n];

    bool accepted = false;
    for (int tries = 0; tries < 25 && !accepted; ++tries) {
      std::vector<double> lhs = ph;
      for (std::int64_t m = 0; m < kappa; ++m) lhs[m * kappa + m] += damping;
      std::vector<double> rhs(static_cast<std::size_t>(kappa));
      for (std::int64_t m = 0; m < kappa; ++m) rhs[m] = -pg[m];
      const linalg::SymEig eig = linalg::eig_sym(lhs, kappa);
      // positive-definite solve; indefinite directions get damped harder
      if (eig.values.front() <= 1e-14 * hscale) {
        damping = std::max(damping * 10.0, 1e-8 * hscale);
        continue;
      }
      std::vector<double> step(static_cast<std::size_t>(kappa), 0.0);
      for (std::int64_t k = 0; k < kappa; ++k) {
        double proj = 0;
        for (std::int64_t m = 0; m < kappa; ++m)
          proj += eig.vectors[m * kappa + k] * rhs[m];
        proj /= eig.values[k];
        for (std::int64_t m = 0; m < kappa; ++m)
          step[m] += eig.vectors[m * kappa + k] * proj;
      }
      std::vector<double> a_try = cand.alpha;
      for (std::int64_t m = 0; m < kappa; ++m) a_try[m] += step[m];
      const double an = norm2(a_try);
      if (an == 0) return;
      for (auto& v : a_try) v /= an;
      auto eval = truncation_error(combine_modes(basis, a_try), env);
      if (eval && eval->f <= cand.f * (1.0 + 1e-14)) {
        cand.alpha = std::move(a_try);
        cand.Z = combine_modes(basis, cand.alpha);
        cand.emax = eval->emax;
        cand.f = eval->f;
        cand.N = eval->N;
        damping *= 0.25;
        accepted = true;
      } else {
        damping = std::max(damping * 10.0, 1e-8 * hscale);
      }
    }
    if (!accepted) return;
  }
}

} // namespace

std::optional<ZCandidate> optimize_candidate(const ModeBasis& basis,
                                             const BondEnvironment& env,
                                             const ZmtOptions& opts) {
  const std::int64_t kappa = basis.kappa();
  if (kappa == 0) fail("optimize_candidate: empty mode basis");

  // The quadratic form N is only measurable down to the rounding noise of
  // the metric. Ranking candidates by raw f = N/E^2 below that floor rewards
  // arbitrarily small E_max (the floor-level N gets amplified by 1/E^2 into
  // a real truncation error), so candidates are scored with N floored at
  // eta; in the floor regime this maximizes |E_max|.
  const double eta = 1e-14 * std::abs(env.norm_scale);
  auto score = [eta](const ErrorEval& e) {
    return std::max(e.N, eta) / (e.emax.value_re * e.emax.value_re);
  };

  // initialization ladder: best single mode, then pairwise sums/differences
  auto better = [&](const ErrorEval& cand, const std::optional<ErrorEval>& best) {
    if (!best) return true;
    return score(cand) < score(*best);
  };
  std::vector<double> alpha;
  std::optional<ErrorEval> init;
  for (std::int64_t m = 0; m < kappa; ++m) {
    auto eval = truncation_error(basis.modes[m], env);
    if (eval && better(*eval, init)) {
      init = eval;
      alpha.assign(static_cast<std::size_t>(kappa), 0.0);
      alpha[m] = 1.0;
    }
  }
  if (!init) {
    const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
    for (std::int64_t m1 = 0; m1 < kappa; ++m1)
      for (std::int64_t m2 = m1 + 1; m2 < kappa; ++m2)
        for (const double sign : {1.0, -1.0}) {
          std::vector<double> a(static_cast<std::size_t>(kappa), 0.0);
          a[m1] = inv_sqrt2;
          a[m2] = sign * inv_sqrt2;
          auto eval = truncation_error(combine_modes(basis, a), env);
          if (eval && better(*eval, init)) {
            init = eval;
            alpha = a;
          }
        }
  }
  if (!init) return std::nullopt; // caller falls back to plain SVD

  ZCandidate cand;
  cand.D = basis.D;
  cand.alpha = alpha;
  cand.Z = combine_modes(basis, alpha);
  cand.emax = init->emax;
  cand.f = init->f;
  cand.N = init->N;
  const double f_initial = init->f;

  std::vector<double> gm_prev, dir;
  double cur_score = score(*init);
  int since_restart = 0;
  for (int it = 0; it < opts.cg_max_iterations; ++it) {
    std::vector<double> g_now;
    const GradResult grad = gradient_subspace(cand, basis, env, &g_now);
    if (grad.status != GradStatus::ok) break; // degenerate E_max: freeze and accept
    // scale-aware stationarity: a live gradient is of order norm_scale/(D^2 E^2),
    // which for small-norm diagrams sits far below max(1, f)
    const double e2 = cand.emax.value_re * cand.emax.value_re;
    const double gradient_scale =
        std::max(cand.f, std::abs(env.norm_scale) /
                             (static_cast<double>(basis.D * basis.D) * e2));
    if (norm2(g_now) <= opts.cg_tolerance * gradient_scale) break;

    if (dir.empty() || since_restart >= kappa) {
      dir = g_now;
      for (auto& v : dir) v = -v;
      since_restart = 0;
    } else {
      double num = 0;
      const double den = dot(gm_prev, gm_prev);
      for (std::size_t m = 0; m < g_now.size(); ++m)
        num += g_now[m] * (g_now[m] - gm_prev[m]);
      const double beta = den > 0 ? std::max(0.0, num / den) : 0.0;
      for (std::size_t m = 0; m < dir.size(); ++m) dir[m] = -g_now[m] + beta * dir[m];
    }
    double slope = dot(dir, g_now);
    if (slope >= 0) { // not a descent direction: restart on steepest descent
      dir = g_now;
      for (auto& v : dir) v = -v;
      slope = dot(dir, g_now);
      since_restart = 0;
    }

    // backtracking line search; when the Armijo decrement sits below the
    // evaluation noise of f, fall back to the best strict improvement seen
    double t = 1.0;
    std::vector<double> best_alpha;
    std::optional<ErrorEval> best_eval;
    double best_score = cur_score;
    bool armijo = false;
    for (int bt = 0; bt < 40 && !armijo; ++bt) {
      std::vector<double> a_try = cand.alpha;
      for (std::size_t m = 0; m < a_try.size(); ++m) a_try[m] += t * dir[m];
      const double an = norm2(a_try);
      if (an > 0) {
        for (auto& v : a_try) v /= an; // f is scale invariant
        auto eval = truncation_error(combine_modes(basis, a_try), env);
        if (eval) {
          const double s = score(*eval);
          if (s <= cur_score + opts.armijo_c * t * slope) armijo = true;
          if (s < best_score * (1.0 - 1e-12)) {
            best_score = s;
            best_alpha = std::move(a_try);
            best_eval = std::move(eval);
            if (armijo) break;
          } else if (armijo) {
            armijo = false; // decrement below noise: keep searching
          }
        }
      }
      t *= opts.backtrack;
    }
    ++cand.cg_iterations;
    gm_prev = std::move(g_now);
    ++since_restart;
    if (!best_eval) break;
    cand.alpha = std::move(best_alpha);
    cand.Z = combine_modes(basis, cand.alpha);
    cand.emax = best_eval->emax;
    cand.f = best_eval->f;
    cand.N = best_eval->N;
    cur_score = best_score;
  }

  // second-order refinement: CG levels off well above machine stationarity,
  // which leaves the truncated spectrum visibly gauge dependent
  if (opts.polish && cand.N > 10.0 * eta) {
    const std::vector<double> nmat = subspace_quadratic(basis, env);
    newton_polish(cand, basis, env, nmat, opts);
  }

  // alpha stays unit-norm and the modes are orthonormal, so Z already has
  // unit Frobenius norm; guard against drift anyway
  const double zn = norm2(cand.Z);
  if (zn > 0 && std::abs(zn - 1.0) > 1e-13) {
    for (auto& v : cand.Z) v /= zn;
    for (auto& v : cand.alpha) v /= zn;
    if (auto eval = truncation_error(cand.Z, env)) {
      cand.emax = eval->emax;
      cand.f = eval->f;
      cand.N = eval->N;
    }
  }
  (void)f_initial; // line search only ever accepts f <= current, so f <= f_initial
  return cand;
}

TruncationFactors truncate_bond(const ZCandidate& candidate) {
  const std::int64_t D = candidate.D;
  if (D < 2) fail("truncate_bond: bond dimension must exceed 1");
  if (!candidate.emax.is_real() || candidate.emax.value_re == 0.0)
    fail("truncate_bond: candidate must carry a nonzero real E_max");
  const double E = candidate.emax.value_re;

  std::vector<double> M(static_cast<std::size_t>(D * D));
  for (std::int64_t e = 0; e < D * D; ++e) M[e] = -candidate.Z[e] / E;
  for (std::int64_t i = 0; i < D; ++i) M[i * D + i] += 1.0;

  const linalg::MatSvd f = linalg::svd(M.data(), D, D);
  TruncationFactors out;
  out.f_initial = candidate.f;
  const double s_last = f.s[D - 1];
  const double s_prev = f.s[D - 2];
  out.discard_ambiguous = s_last > 0 && s_prev / s_last < 1.0 + 1e-8;
  out.lambdas.assign(f.s.begin(), f.s.end() - 1);
  out.left.resize(static_cast<std::size_t>(D * (D - 1)));
  out.right.resize(static_cast<std::size_t>((D - 1) * D));
  for (std::int64_t k = 0; k < D - 1; ++k) {
    const double sq = std::sqrt(f.s[k]);
    for (std::int64_t i = 0; i < D; ++i) out.left[i * (D - 1) + k] = f.u[i * D + k] * sq;
    for (std::int64_t j = 0; j < D; ++j) out.right[k * D + j] = sq * f.vt[k * D + j];
  }

  // nonzero spectrum of I - Z/E: drop the single eigenvalue closest to zero
  std::vector<std::pair<double, double>> mus;
  for (const auto& p : linalg::eig_general(M, D)) mus.push_back({p.value_re, p.value_im});
  std::size_t drop = 0;
  double drop_mag = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < mus.size(); ++k) {
    const double mag = std::hypot(mus[k].first, mus[k].second);
    if (mag < drop_mag) {
      drop_mag = mag;
      drop = k;
    }
  }
  mus.erase(mus.begin() + static_cast<std::ptrdiff_t>(drop));
  sort_complex(mus);
  out.mus = std::move(mus);
  return out;
}

std::vector<Tensor> absorb_bond_factors(const std::vector<Tensor>& network,
                                        const std::string& bond,
                                        const TruncationFactors& factors) {
  const auto [ia, ib] = bond_tensors(network, bond);
  const std::int64_t D = network[ia].dim(bond);
  const std::int64_t Dn = D - 1;
  std::vector<Tensor> out = network;
  const Tensor left({bond, kTmp}, {D, Dn}, factors.left);
  const Tensor right({kTmp, bond}, {Dn, D}, factors.right);
  out[ia] = contract(out[ia], left, {{bond, bond}}).renamed(kTmp, bond);
  out[ib] = contract(right, out[ib], {{bond, bond}}).renamed(kTmp, bond);
  return out;
}

std::vector<Tensor> svd_cut_bond(const std::vector<Tensor>& network,
                                 const std::string& bond, std::int64_t new_dim) {
  const auto [ia, ib] = bond_tensors(network, bond);
  const std::int64_t D = network[ia].dim(bond);
  if (new_dim > D) return network;

  Axes rest_a, rest_b;
  for (const auto& ax : network[ia].axes())
    if (ax != bond) rest_a.push_back(ax);
  for (const auto& ax : network[ib].axes())
    if (ax != bond) rest_b.push_back(ax);

  const linalg::Matricized ma = linalg::matricize(network[ia], rest_a, {bond});
  const linalg::Matricized mb = linalg::matricize(network[ib], {bond}, rest_b);
  const linalg::QrFactors qa = linalg::qr(ma.data, ma.rows, ma.cols);
  // LQ of B via QR of B^T
  std::vector<double> mbt(static_cast<std::size_t>(mb.rows * mb.cols));
  for (std::int64_t i = 0; i < mb.rows; ++i)
    for (std::int64_t j = 0; j < mb.cols; ++j) mbt[j * mb.rows + i] = mb.data[i * mb.cols + j];
  const linalg::QrFactors qb = linalg::qr(mbt, mb.cols, mb.rows);

  if (new_dim > std::min(qa.k, qb.k))
    fail("svd_cut_bond: target dimension exceeds the split rank");

  // bond matrix R_A R_B^T, weighted only by the two tensors themselves
  std::vector<double> rb_t(static_cast<std::size_t>(D * qb.k));
  for (std::int64_t i = 0; i < qb.k; ++i)
    for (std::int64_t j = 0; j < D; ++j) rb_t[j * qb.k + i] = qb.r[i * D + j];
  const std::vector<double> bondmat = linalg::matmul(qa.r, qa.k, D, rb_t, qb.k);
  const linalg::MatSvd sv = linalg::svd(bondmat.data(), qa.k, qb.k);

  // A' = Q_A U sqrt(s), B' = sqrt(s) V^T Q_B^T
  std::vector<double> usq(static_cast<std::size_t>(qa.k * new_dim));
  for (std::int64_t i = 0; i < qa.k; ++i)
    for (std::int64_t k = 0; k < new_dim; ++k)
      usq[i * new_dim + k] = sv.u[i * sv.k + k] * std::sqrt(sv.s[k]);
  const std::vector<double> a_new = linalg::matmul(qa.q, qa.m, qa.k, usq, new_dim);

  std::vector<double> qbt(static_cast<std::size_t>(qb.k * qb.m));
  for (std::int64_t i = 0; i < qb.m; ++i)
    for (std::int64_t k = 0; k < qb.k; ++k) qbt[k * qb.m + i] = qb.q[i * qb.k + k];
  std::vector<double> svt(static_cast<std::size_t>(new_dim * qb.k));
  for (std::int64_t k = 0; k < new_dim; ++k)
    for (std::int64_t j = 0; j < qb.k; ++j)
      svt[k * qb.k + j] = std::sqrt(sv.s[k]) * sv.vt[k * sv.cols + j];
  const std::vector<double> b_new = linalg::matmul(svt, new_dim, qb.k, qbt, qb.m);

  std::vector<Tensor> out = network;
  {
    Axes axes = rest_a;
    axes.push_back(bond);
    Shape shape = ma.row_shape;
    shape.push_back(new_dim);
    out[ia] = Tensor(axes, shape, a_new);
  }
  {
    Axes axes = {bond};
    axes.insert(axes.end(), rest_b.begin(), rest_b.end());
    Shape shape = {new_dim};
    shape.insert(shape.end(), mb.col_shape.begin(), mb.col_shape.end());
    out[ib] = Tensor(axes, shape, b_new);
  }
  return out;
}

namespace {

struct CandidateRun {
  BondEnvironment env;
  std::optional<ZCandidate> candidate;
  double f_initial_mode = std::numeric_limits<double>::quiet_NaN();
};

CandidateRun run_candidate(const std::vector<Tensor>& network, const std::string& bond,
                           const ZmtOptions& opts) {
  CandidateRun run;
  run.env = build_metric(network, bond);
  if (opts.monitor) opts.monitor->record(run.env.min_eigenvalue, run.env.norm_scale);
  const std::int64_t kappa = normalize_kappa(opts.kappa, run.env.D);
  const ModeBasis basis = lowest_modes(run.env, kappa, opts.reg);

  // initialization cost of the single best mode, for diagnostics
  for (const auto& mode : basis.modes) {
    auto eval = truncation_error(mode, run.env);
    if (eval && (std::isnan(run.f_initial_mode) || eval->f < run.f_initial_mode))
      run.f_initial_mode = eval->f;
  }
  run.candidate = optimize_candidate(basis, run.env, opts);
  return run;
}

} // namespace

std::pair<std::vector<Tensor>, TruncationReport> zmt_cut_bond(
    const std::vector<Tensor>& network, const std::string& bond,
    const ZmtOptions& opts) {
  const CandidateRun run = run_candidate(network, bond, opts);
  TruncationReport report;
  report.bond = bond;
  report.D_before = run.env.D;
  report.D_after = run.env.D - 1;
  report.f_initial_mode = run.f_initial_mode;
  if (!run.candidate) {
    report.fallback_used = true;
    report.f_optimized = std::numeric_limits<double>::quiet_NaN();
    return {svd_cut_bond(network, bond, run.env.D - 1), report};
  }
  report.f_optimized = run.candidate->f;
  report.cg_iterations = run.candidate->cg_iterations;
  const TruncationFactors factors = truncate_bond(*run.candidate);
  report.mus = factors.mus;
  return {absorb_bond_factors(network, bond, factors), report};
}

ReduceResult reduce_iteratively(std::vector<Tensor> network, const std::string& bond,
                                double f_tol, const ZmtOptions& opts) {
  ReduceResult result;
  while (true) {
    const auto [ia, ib] = bond_tensors(network, bond);
    if (network[ia].dim(bond) <= 1) break;
    const CandidateRun run = run_candidate(network, bond, opts);
    if (!run.candidate || run.candidate->f > f_tol) break;
    TruncationReport report;
    report.bond = bond;
    report.D_before = run.env.D;
    report.D_after = run.env.D - 1;
    report.f_initial_mode = run.f_initial_mode;
    report.f_optimized = run.candidate->f;
    report.cg_iterations = run.candidate->cg_iterations;
    const TruncationFactors factors = truncate_bond(*run.candidate);
    report.mus = factors.mus;
    network = absorb_bond_factors(network, bond, factors);
    result.reports.push_back(std::move(report));
  }
  result.network = std::move(network);
  return result;
}

GaugeProbeResult gauge_probe(const std::vector<Tensor>& network,
                             const std::string& bond,
                             const std::vector<double>& gauge,
                             const ZmtOptions& opts) {
  const auto [ia, ib] = bond_tensors(network, bond);
  const std::int64_t D = network[ia].dim(bond);
  GaugeProbeResult out;
  out.gauge_cond = linalg::cond(gauge, D, D);

  const std::vector<double> ginv = linalg::inverse(gauge, D);
  std::vector<Tensor> gauged = network;
  const Tensor inv_t({bond, kTmp}, {D, D}, ginv);
  const Tensor g_t({kTmp, bond}, {D, D}, gauge);
  gauged[ia] = contract(gauged[ia], inv_t, {{bond, bond}}).renamed(kTmp, bond);
  gauged[ib] = contract(g_t, gauged[ib], {{bond, bond}}).renamed(kTmp, bond);

  for (const bool use_gauge : {false, true}) {
    const CandidateRun run = run_candidate(use_gauge ? gauged : network, bond, opts);
    if (!run.candidate)
      throw std::runtime_error("gauge_probe: no usable candidate in " +
                               std::string(use_gauge ? "gauged" : "original") +
                               " gauge");
    const TruncationFactors factors = truncate_bond(*run.candidate);
    auto mus = factors.mus;
    sort_complex(mus);
    if (use_gauge) {
      out.mus_gauged = std::move(mus);
      out.f_gauged = run.candidate->f;
    } else {
      out.mus_original = std::move(mus);
      out.f_original = run.candidate->f;
    }
  }
  return out;
}

} // namespace zmt
