#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "zmt/z2.hpp"

using namespace zmt;
using namespace zmt::z2;

namespace {

// scaling-and-squaring Taylor exponential, the oracle for the pMPO
std::vector<double> dense_expm(std::vector<double> a, std::int64_t n) {
  double norm = 0;
  for (const auto v : a) norm = std::max(norm, std::abs(v));
  int squarings = 0;
  while (norm > 0.5) {
    norm /= 2;
    ++squarings;
    for (auto& v : a) v /= 2;
  }
  std::vector<double> result(n * n, 0.0), term(n * n, 0.0);
  for (std::int64_t i = 0; i < n; ++i) result[i * n + i] = term[i * n + i] = 1.0;
  for (int k = 1; k <= 24; ++k) {
    std::vector<double> next(n * n, 0.0);
    for (std::int64_t i = 0; i < n; ++i)
      for (std::int64_t p = 0; p < n; ++p)
        for (std::int64_t j = 0; j < n; ++j)
          next[i * n + j] += term[i * n + p] * a[p * n + j] / k;
    term = next;
    for (std::int64_t e = 0; e < n * n; ++e) result[e] += term[e];
  }
  for (int s = 0; s < squarings; ++s) {
    std::vector<double> sq(n * n, 0.0);
    for (std::int64_t i = 0; i < n; ++i)
      for (std::int64_t p = 0; p < n; ++p)
        for (std::int64_t j = 0; j < n; ++j)
          sq[i * n + j] += result[i * n + p] * result[p * n + j];
    result = sq;
  }
  return result;
}

double max_record_delta(const std::vector<ErrorRecord>& recs, bool final_delta) {
  double m = 0;
  for (const auto& r : recs) m = std::max(m, final_delta ? r.delta_final : r.delta_initial);
  return m;
}

} // namespace

TEST_CASE("initial_state: infinite-temperature purification") {
  const UnitCell cell = initial_state();
  const Tensor& t = cell.a;
  CHECK(t.dim("spin") == 2);
  CHECK(t.dim("anc") == 2);
  // tracing the ancilla of one site gives the maximally mixed state I/2
  for (std::int64_t s1 = 0; s1 < 2; ++s1)
    for (std::int64_t s2 = 0; s2 < 2; ++s2) {
      double rho = 0;
      for (std::int64_t a = 0; a < 2; ++a)
        rho += t.at({0, 0, 0, 0, s1, a}) * t.at({0, 0, 0, 0, s2, a});
      CHECK(rho == doctest::Approx(s1 == s2 ? 0.5 : 0.0).epsilon(1e-14));
    }
  // <sigma_x> vanishes at beta = 0
  double sx = 0;
  for (std::int64_t s1 = 0; s1 < 2; ++s1)
    for (std::int64_t s2 = 0; s2 < 2; ++s2)
      for (std::int64_t a = 0; a < 2; ++a)
        sx += t.at({0, 0, 0, 0, s1, a}) * (s1 != s2 ? 1.0 : 0.0) *
              t.at({0, 0, 0, 0, s2, a});
  CHECK(std::abs(sx) <= 1e-14);
  // per-site norm, and the two-site product norm
  CHECK(t.norm() == doctest::Approx(1.0).epsilon(1e-14));
  const Tensor two = contract(cell.a.renamed({{"right", "x"}}),
                              cell.b.renamed({{"left", "x"},
                                              {"spin", "spin2"},
                                              {"anc", "anc2"},
                                              {"up", "up2"},
                                              {"down", "down2"},
                                              {"right", "right2"}}),
                              {{"x", "x"}});
  CHECK(inner(two, two) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(cell.bond_dims().size() == 8);
}

TEST_CASE("electric_half_step: dbeta = 0 is the identity, bit for bit") {
  const UnitCell cell = initial_state();
  const UnitCell out = electric_half_step(cell, {3.0, 0.0, 0.0});
  for (int k = 0; k < 4; ++k)
    CHECK(out.site(k).storage() == cell.site(k).storage());
}

TEST_CASE("electric_half_step: matrix exponential against the series oracle") {
  const double dbeta = 0.28;
  const double t = dbeta / 4.0;
  const std::vector<double> sx = {0, t, t, 0};
  const auto want = dense_expm(sx, 2);
  CHECK(std::cosh(t) == doctest::Approx(want[0]).epsilon(1e-14));
  CHECK(std::sinh(t) == doctest::Approx(want[1]).epsilon(1e-14));
  // the step applies exactly this matrix to the spin axis
  UnitCell cell = initial_state();
  const UnitCell out = electric_half_step(cell, {1.0, dbeta, 1.0});
  for (std::int64_t s = 0; s < 2; ++s) {
    double got = out.a.at({0, 0, 0, 0, s, 0});
    const double w =
        want[s * 2 + 0] * cell.a.at({0, 0, 0, 0, 0, 0}) +
        want[s * 2 + 1] * cell.a.at({0, 0, 0, 0, 1, 0});
    CHECK(got == doctest::Approx(w).epsilon(1e-14));
  }
}

TEST_CASE("electric_half_step: two quarter steps equal one doubled step") {
  UnitCell cell = initial_state();
  // make the state less trivial first
  cell = electric_half_step(cell, {1.0, 0.44, 1.0});
  const UnitCell twice =
      electric_half_step(electric_half_step(cell, {1.0, 0.2, 1.0}), {1.0, 0.2, 1.0});
  const UnitCell once = electric_half_step(cell, {1.0, 0.4, 1.0});
  for (int k = 0; k < 4; ++k)
    CHECK(add(twice.site(k), once.site(k), -1.0).max_abs() <= 1e-13);
}

TEST_CASE("build_plaquette_mpo: dbeta = 0 collapses to the identity") {
  const PlaquetteMpo mpo = build_plaquette_mpo({3.04438, 0.0, 0.0});
  const auto u = mpo.contracted();
  for (std::int64_t i = 0; i < 16; ++i)
    for (std::int64_t j = 0; j < 16; ++j)
      CHECK(u[i * 16 + j] == (i == j ? 1.0 : 0.0));
}

TEST_CASE("build_plaquette_mpo: paper coupling gives eps = 0.0152219") {
  const ModelParams params{3.04438, 0.01, 0.5};
  CHECK(params.epsilon() == doctest::Approx(0.0152219).epsilon(1e-12));
}

TEST_CASE("build_plaquette_mpo: equals cosh + sinh closed form and the dense "
          "exponential") {
  const ModelOperators ops = model_operators();
  for (const double eps : {0.0, 0.0152219, 1.0, -0.3}) {
    const PlaquetteMpo mpo = build_plaquette_mpo({2.0 * eps, 1.0, 1.0});
    REQUIRE(mpo.ops.size() == 4);
    for (const auto& w : mpo.ops) {
      CHECK(w.dim("jl") == 2); // r = 2
      CHECK(w.dim("jr") == 2);
    }
    const auto u = mpo.contracted();
    std::vector<double> want(16 * 16, 0.0);
    for (std::int64_t e = 0; e < 16 * 16; ++e)
      want[e] = std::sinh(eps) * ops.B_p[e];
    for (std::int64_t i = 0; i < 16; ++i) want[i * 16 + i] += std::cosh(eps);
    double worst = 0;
    for (std::int64_t e = 0; e < 16 * 16; ++e)
      worst = std::max(worst, std::abs(u[e] - want[e]));
    CHECK(worst <= 1e-14 * std::cosh(eps));

    std::vector<double> gen(16 * 16);
    for (std::int64_t e = 0; e < 16 * 16; ++e) gen[e] = eps * ops.B_p[e];
    const auto expm = dense_expm(gen, 16);
    worst = 0;
    for (std::int64_t e = 0; e < 16 * 16; ++e)
      worst = std::max(worst, std::abs(u[e] - expm[e]));
    CHECK(worst <= 1e-13 * std::cosh(eps));
  }
}

TEST_CASE("apply_and_truncate_plaquette: unconstrained target is lossless") {
  const ModelParams params{3.04438, 0.01, 0.5};
  UnitCell cell = initial_state();
  EvolveOptions opts;
  opts.D_max = 64;
  // grow the state a little first
  for (int k = 0; k < 2; ++k) cell = trotter_step(cell, params, opts).first;
  const PlaquetteMpo mpo = build_plaquette_mpo(params);
  const auto [next, recs] =
      apply_and_truncate_plaquette(cell, mpo, PlaquetteClass::abcd, opts.method, opts);
  REQUIRE(recs.size() == 4);
  for (const auto& r : recs) {
    CHECK(r.delta_initial <= 1e-12);
    CHECK(r.delta_final <= 1e-12);
  }
  (void)next;
}

TEST_CASE("g = 0 evolves without error at any D") {
  const ModelParams params{0.0, 0.01, 0.05};
  EvolveOptions opts;
  opts.D_max = 2;
  const Trajectory traj = evolve(params, opts, 1);
  CHECK(max_record_delta(traj.records, false) <= 1e-10);
  CHECK(max_record_delta(traj.records, true) <= 1e-10);
}

TEST_CASE("trotter_step: dbeta = 0 leaves the state invariant") {
  EvolveOptions opts;
  opts.D_max = 4;
  const ModelParams grow{3.04438, 0.01, 0.5};
  UnitCell cell = initial_state();
  for (int k = 0; k < 2; ++k) cell = trotter_step(cell, grow, opts).first;
  const auto [out, recs] = trotter_step(cell, {3.04438, 0.0, 0.0}, opts);
  CHECK(out.beta == cell.beta);
  CHECK(cell_fidelity(out, cell) == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(max_record_delta(recs, true) <= 1e-12);
}

TEST_CASE("trotter_step: one step from beta = 0 is finite with 8 records") {
  const ModelParams params{3.04438, 0.01, 0.5};
  EvolveOptions opts;
  opts.D_max = 4;
  const auto [cell, recs] = trotter_step(initial_state(), params, opts);
  CHECK(recs.size() == 8);
  int abcd = 0, cdab = 0;
  for (const auto& r : recs) {
    if (r.plaquette == "abcd") ++abcd;
    if (r.plaquette == "cdab") ++cdab;
  }
  CHECK(abcd == 4);
  CHECK(cdab == 4);
  for (int k = 0; k < 4; ++k) {
    CHECK(cell.site(k).all_finite());
    CHECK(cell.site(k).norm() == doctest::Approx(1.0).epsilon(1e-13));
  }
  CHECK(cell.beta == doctest::Approx(0.01));
}

TEST_CASE("trotter_step: a tiny step followed by its formal inverse returns "
          "the state") {
  const ModelParams params{1.0, 0.002, 1.0};
  EvolveOptions opts;
  opts.method = Method::zmt;
  opts.D_max = 2;
  UnitCell cell = initial_state();
  const ModelParams grow{3.04438, 0.01, 0.5};
  for (int k = 0; k < 2; ++k) cell = trotter_step(cell, grow, opts).first;

  EvolveOptions fwd = opts;
  fwd.D_max = 8; // lossless forward application
  const UnitCell forward = trotter_step(cell, params, fwd).first;
  EvolveOptions bwd = opts;
  bwd.D_max = 2; // recompress to the original dimension
  const ModelParams inverse{params.g, -params.dbeta, params.beta_max};
  const UnitCell back = trotter_step(forward, inverse, bwd).first;
  CHECK(cell_fidelity(back, cell) == doctest::Approx(1.0).epsilon(1e-8));
}

TEST_CASE("evolve: a single step emits 8 bond records") {
  const ModelParams params{3.04438, 0.01, 0.01};
  EvolveOptions opts;
  opts.D_max = 4;
  const Trajectory traj = evolve(params, opts, 5);
  CHECK(traj.records.size() == 8);
  CHECK(traj.records.front().step == 1);
  CHECK(traj.records.front().beta == doctest::Approx(0.01));
  CHECK(traj.step_average(true).size() == 1);
}

TEST_CASE("evolve: beta_max must be a multiple of dbeta") {
  EvolveOptions opts;
  CHECK_THROWS(evolve({1.0, 0.01, 0.015}, opts, 1));
  CHECK_THROWS(evolve({1.0, 0.0, 0.0}, opts, 1));
}

TEST_CASE("evolve: short paired run keeps zmt at or below svd per step") {
  const ModelParams params{3.04438, 0.01, 0.06};
  Trajectory t[2];
  for (int i = 0; i < 2; ++i) {
    EvolveOptions opts;
    opts.D_max = 2;
    opts.method = i ? Method::svd : Method::zmt;
    t[i] = evolve(params, opts, 7);
  }
  const auto az = t[0].step_average(true), as = t[1].step_average(true);
  REQUIRE(az.size() == as.size());
  int wins = 0;
  for (std::size_t k = 0; k < az.size(); ++k)
    if (az[k] <= as[k] + 1e-15) ++wins;
  CHECK(wins >= static_cast<int>(az.size()) - 1);
}

TEST_CASE("monotone records: delta_final never exceeds delta_initial") {
  const ModelParams params{3.04438, 0.01, 0.05};
  for (const Method m : {Method::zmt, Method::svd}) {
    EvolveOptions opts;
    opts.D_max = 2;
    opts.method = m;
    const Trajectory traj = evolve(params, opts, 7);
    for (const auto& r : traj.records)
      CHECK(r.delta_final <= r.delta_initial + 1e-12);
  }
}

TEST_CASE("evolve: trajectories are deterministic") {
  const ModelParams params{3.04438, 0.01, 0.03};
  EvolveOptions opts;
  opts.D_max = 2;
  const Trajectory a = evolve(params, opts, 7);
  const Trajectory b = evolve(params, opts, 7);
  REQUIRE(a.records.size() == b.records.size());
  for (std::size_t k = 0; k < a.records.size(); ++k) {
    CHECK(a.records[k].delta_initial == b.records[k].delta_initial);
    CHECK(a.records[k].delta_final == b.records[k].delta_final);
    CHECK(a.records[k].cg_iterations == b.records[k].cg_iterations);
  }
  for (int k = 0; k < 4; ++k)
    CHECK(a.final_cell.site(k).storage() == b.final_cell.site(k).storage());
}

TEST_CASE("model_operators: projector and plaquette algebra") {
  const ModelOperators ops = model_operators();
  // idempotence of (1 + A_p)/2
  const auto& p = ops.gauss_projector_factor;
  for (std::int64_t i = 0; i < 16; ++i)
    for (std::int64_t j = 0; j < 16; ++j) {
      double pp = 0;
      for (std::int64_t k = 0; k < 16; ++k) pp += p[i * 16 + k] * p[k * 16 + j];
      CHECK(pp == doctest::Approx(p[i * 16 + j]).epsilon(1e-15));
    }
  // B_p has eigenvalues +-1 with multiplicity 8 each
  const auto eig = linalg::eig_sym(ops.B_p, 16);
  int minus = 0, plus = 0;
  for (const auto v : eig.values) {
    if (std::abs(v + 1.0) < 1e-12) ++minus;
    if (std::abs(v - 1.0) < 1e-12) ++plus;
  }
  CHECK(minus == 8);
  CHECK(plus == 8);
}

TEST_CASE("model_operators: plaquette terms commute on overlapping supports") {
  const ModelOperators ops = model_operators();
  // 4x4 periodic lattice; the white plaquette at (0,0) against every black
  // plaquette, restricted to the union of their supports (at most 8 sites)
  auto site_of = [](int r, int c) { return ((r % 4) + 4) % 4 * 4 + ((c % 4) + 4) % 4; };
  const int white[4] = {site_of(0, 0), site_of(0, 1), site_of(1, 0), site_of(1, 1)};
  for (int br = 0; br < 4; ++br)
    for (int bc = 0; bc < 4; ++bc) {
      if ((br + bc) % 2 == 0) continue; // black blocks start at odd parity
      const int black[4] = {site_of(br, bc), site_of(br, bc + 1),
                            site_of(br + 1, bc), site_of(br + 1, bc + 1)};
      // union support
      std::vector<int> support;
      for (const int s : white) support.push_back(s);
      for (const int s : black)
        if (std::find(support.begin(), support.end(), s) == support.end())
          support.push_back(s);
      const int ns = static_cast<int>(support.size());
      REQUIRE(ns <= 8);
      const std::int64_t dim = std::int64_t{1} << ns;
      auto index_of = [&](int site) {
        return static_cast<int>(std::find(support.begin(), support.end(), site) -
                                support.begin());
      };
      // dense sigma strings over the union support
      auto string_op = [&](const int sites[4], const std::vector<double>& sigma) {
        std::vector<double> op(dim * dim, 0.0);
        for (std::int64_t row = 0; row < dim; ++row) {
          // apply the four single-site factors to basis state `row`
          std::int64_t col = row;
          double amp = 1.0;
          for (int q = 0; q < 4; ++q) {
            const int bit = ns - 1 - index_of(sites[q]);
            const int s = static_cast<int>((col >> bit) & 1);
            // sigma acts on this bit: find the unique nonzero column
            int s2 = -1;
            for (int cnd = 0; cnd < 2; ++cnd)
              if (sigma[cnd * 2 + s] != 0.0) {
                s2 = cnd;
                amp *= sigma[cnd * 2 + s];
              }
            REQUIRE(s2 >= 0);
            if (s2 != s) col ^= (std::int64_t{1} << bit);
          }
          op[col * dim + row] += amp;
        }
        return op;
      };
      const auto bp = string_op(white, ops.sigma_z);
      const auto ap = string_op(black, ops.sigma_x);
      for (std::int64_t i = 0; i < dim; ++i)
        for (std::int64_t j = 0; j < dim; ++j) {
          double ab = 0, ba = 0;
          for (std::int64_t k = 0; k < dim; ++k) {
            ab += ap[i * dim + k] * bp[k * dim + j];
            ba += bp[i * dim + k] * ap[k * dim + j];
          }
          CHECK(ab == ba);
        }
    }
}
