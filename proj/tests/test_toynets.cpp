#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "zmt/engine.hpp"
#include "zmt/toynets.hpp"

using namespace zmt;
using namespace zmt::toy;

TEST_CASE("full_state: D=1 plaquette factorizes into site vectors") {
  const auto p = make_plain_plaquette(1, 2, 201);
  const Tensor full = full_state(p);
  REQUIRE(full.rank() == 4);
  for (std::int64_t i = 0; i < 2; ++i)
    for (std::int64_t j = 0; j < 2; ++j)
      for (std::int64_t k = 0; k < 2; ++k)
        for (std::int64_t l = 0; l < 2; ++l) {
          const double want = p.tensors[0].at({0, 0, i}) * p.tensors[1].at({0, 0, j}) *
                              p.tensors[2].at({0, 0, k}) * p.tensors[3].at({0, 0, l});
          CHECK(full.at({i, j, k, l}) == doctest::Approx(want).epsilon(1e-14));
        }
}

TEST_CASE("full_state: norm agrees with the closed-diagram contraction") {
  const auto p = make_virtual_loop(2, 2, 2, 1e-3, 202);
  const Tensor full = full_state(p);
  const double direct = inner(full, full);
  const double closed = network_norm2(p.tensors);
  CHECK(direct == doctest::Approx(closed).epsilon(1e-12));
}

TEST_CASE("full_state: size guard") {
  const auto p = make_plain_plaquette(1, 40, 203); // 40^4 > 2^20
  CHECK_THROWS(full_state(p));
}

TEST_CASE("make_virtual_loop: the fused bonds carry dimension D*d") {
  const auto p = make_virtual_loop(2, 3, 2, 0.0, 204);
  for (int k = 0; k < 4; ++k)
    CHECK(p.tensors[k].dim(LoopPlaquette::bond_label(k)) == 6);
}

TEST_CASE("make_virtual_loop: noise-free state is d times any loop component") {
  const auto p = make_virtual_loop(2, 2, 2, 0.0, 205);
  const Tensor full = full_state(p);
  for (std::int64_t j = 0; j < 2; ++j) {
    const Tensor comp = full_state(loop_component(p, j));
    const Tensor diff = add(full, comp, -2.0); // full = 2 * component
    CHECK(diff.max_abs() <= 1e-12 * full.max_abs());
  }
}

TEST_CASE("make_virtual_loop: noise breaks the degeneracy but stays close") {
  const auto clean = make_virtual_loop(2, 2, 2, 0.0, 206);
  const auto noisy = make_virtual_loop(2, 2, 2, 1e-3, 206);
  // same base tensors, so the states stay close
  CHECK(fidelity(full_state(clean), full_state(noisy)) > 0.99);
  // but the metric's lowest eigenvalue lifts well above the clean case
  const auto env_clean = build_metric(clean.tensors, "b1");
  const auto env_noisy = build_metric(noisy.tensors, "b1");
  CHECK(env_noisy.min_eigenvalue > 100.0 * std::abs(env_clean.min_eigenvalue));
}

TEST_CASE("d=1 gives no redundancy: zero truncations at tight tolerance") {
  const auto p = make_virtual_loop(2, 1, 2, 0.0, 207);
  ZmtOptions opts;
  const ReduceResult res = reduce_iteratively(p.tensors, "b1", 1e-10, opts);
  CHECK(res.reports.empty());
}

TEST_CASE("noise-free loops allow at least d-1 exact truncations with unit "
          "fidelity") {
  struct Case {
    std::int64_t D, d;
  };
  for (const Case c : {Case{2, 2}, Case{1, 3}}) {
    const auto p = make_virtual_loop(c.D, c.d, 2, 0.0, 208 + c.D * 10 + c.d);
    ZmtOptions opts;
    const ReduceResult res = reduce_iteratively(p.tensors, "b1", 1e-10, opts);
    CHECK(static_cast<std::int64_t>(res.reports.size()) >= c.d - 1);
    for (const auto& r : res.reports) CHECK(std::abs(r.f_optimized) < 1e-10);
    CHECK(fidelity(full_state(p.tensors), full_state(res.network)) ==
          doctest::Approx(1.0).epsilon(1e-8));
  }
}

TEST_CASE("noisy loop: optimized zero-mode cut beats the plain SVD cut") {
  const auto p = make_virtual_loop(2, 2, 2, 1e-3, 209);
  const std::string bond = "b1";
  const Tensor orig = full_state(p);
  const double norm2 = inner(orig, orig);

  ZmtOptions opts;
  const auto [zmt_net, report] = zmt_cut_bond(p.tensors, bond, opts);
  REQUIRE_FALSE(report.fallback_used);
  const Tensor zs = full_state(zmt_net);
  const Tensor zdiff = add(zs, orig, -1.0);
  const double err_zmt = inner(zdiff, zdiff) / norm2;

  const auto svd_net = svd_cut_bond(p.tensors, bond, 3);
  const Tensor ss = full_state(svd_net);
  const Tensor sdiff = add(ss, orig, -1.0);
  const double err_svd = inner(sdiff, sdiff) / norm2;

  CHECK(err_zmt < err_svd);
}

TEST_CASE("constructors validate their arguments") {
  CHECK_THROWS(make_virtual_loop(0, 2, 2, 0.0, 210));
  CHECK_THROWS(make_virtual_loop(2, 0, 2, 0.0, 211));
  CHECK_THROWS(loop_component(make_virtual_loop(1, 2, 2, 0.0, 212), 5));
}

TEST_CASE("fixtures are reproducible from the seed") {
  const auto a = make_virtual_loop(2, 2, 3, 1e-3, 213);
  const auto b = make_virtual_loop(2, 2, 3, 1e-3, 213);
  for (int k = 0; k < 4; ++k) CHECK(a.tensors[k].storage() == b.tensors[k].storage());
  const auto c = make_virtual_loop(2, 2, 3, 1e-3, 214);
  CHECK(a.tensors[0].storage() != c.tensors[0].storage());
}
