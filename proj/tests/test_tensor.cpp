#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "zmt/kernels.hpp"
#include "zmt/rng.hpp"
#include "zmt/tensor.hpp"

using namespace zmt;

namespace {

Tensor random_tensor(const Axes& axes, const Shape& shape, Rng& rng) {
  Tensor t(axes, shape);
  for (std::int64_t e = 0; e < t.size(); ++e) t.data()[e] = rng.uniform(-1.0, 1.0);
  return t;
}

// naive triple-loop product, the oracle for contract on matrices
std::vector<double> naive_matmul(const std::vector<double>& a,
                                 const std::vector<double>& b, int m, int k, int n) {
  std::vector<double> c(static_cast<std::size_t>(m) * n, 0.0);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      for (int p = 0; p < k; ++p) c[i * n + j] += a[i * k + p] * b[p * n + j];
  return c;
}

} // namespace

TEST_CASE("contract: identity composition") {
  const Tensor a = Tensor::identity("i", "j", 2);
  const Tensor b = Tensor::identity("j", "k", 2);
  const Tensor c = contract(a, b, {{"j", "j"}});
  CHECK(c.axes() == Axes{"i", "k"});
  for (std::int64_t i = 0; i < 2; ++i)
    for (std::int64_t k = 0; k < 2; ++k)
      CHECK(c.at({i, k}) == (i == k ? 1.0 : 0.0));
}

TEST_CASE("contract: vector norm squared") {
  const Tensor v({"x"}, {3}, {1, 2, 2});
  const Tensor s = contract(v, v.renamed("x", "x2"), {{"x", "x2"}});
  CHECK(s.rank() == 0);
  CHECK(s.data()[0] == doctest::Approx(9.0).epsilon(1e-15));
}

TEST_CASE("contract: random matrices match the naive loop oracle") {
  Rng rng(11);
  const Tensor a = random_tensor({"i", "j"}, {2, 3}, rng);
  const Tensor b = random_tensor({"j", "k"}, {3, 4}, rng);
  const Tensor c = contract(a, b, {{"j", "j"}});
  const auto want = naive_matmul(a.storage(), b.storage(), 2, 3, 4);
  for (std::int64_t e = 0; e < c.size(); ++e)
    CHECK(std::abs(c.data()[e] - want[e]) <= 1e-13);
}

TEST_CASE("contract: multi-axis pairing against an index-loop oracle") {
  Rng rng(12);
  const Tensor a = random_tensor({"p", "q", "r"}, {3, 4, 2}, rng);
  const Tensor b = random_tensor({"q", "s", "p"}, {4, 5, 3}, rng);
  const Tensor c = contract(a, b, {{"p", "p"}, {"q", "q"}});
  CHECK(c.axes() == Axes{"r", "s"});
  for (std::int64_t r = 0; r < 2; ++r)
    for (std::int64_t s = 0; s < 5; ++s) {
      double want = 0;
      for (std::int64_t p = 0; p < 3; ++p)
        for (std::int64_t q = 0; q < 4; ++q)
          want += a.at({p, q, r}) * b.at({q, s, p});
      CHECK(c.at({r, s}) == doctest::Approx(want).epsilon(1e-13));
    }
}

TEST_CASE("contract: errors") {
  const Tensor a = Tensor::identity("i", "j", 2);
  const Tensor b = Tensor::identity("j", "k", 3);
  CHECK_THROWS(contract(a, b, {{"j", "j"}})); // length mismatch
  const Tensor c = Tensor::identity("i", "k", 2);
  CHECK_THROWS(contract(a, c, {})); // duplicate result label 'i'
}

TEST_CASE("contract is bilinear") {
  Rng rng(13);
  const Tensor a = random_tensor({"i", "j"}, {3, 4}, rng);
  const Tensor b = random_tensor({"i", "j"}, {3, 4}, rng);
  const Tensor c = random_tensor({"j", "k"}, {4, 2}, rng);
  const double alpha = 1.7;
  const Tensor lhs = contract(add(b, a, alpha), c, {{"j", "j"}});
  const Tensor rhs =
      add(contract(b, c, {{"j", "j"}}), contract(a, c, {{"j", "j"}}), alpha);
  CHECK(add(lhs, rhs, -1.0).max_abs() <= 1e-12 * rhs.max_abs());
}

TEST_CASE("contraction order does not matter") {
  Rng rng(14);
  const Tensor a = random_tensor({"i", "j"}, {3, 5}, rng);
  const Tensor b = random_tensor({"j", "k"}, {5, 4}, rng);
  const Tensor c = random_tensor({"k", "l"}, {4, 6}, rng);
  const Tensor left = contract(contract(a, b, {{"j", "j"}}), c, {{"k", "k"}});
  const Tensor right = contract(a, contract(b, c, {{"k", "k"}}), {{"j", "j"}});
  CHECK(add(left, right, -1.0).max_abs() <= 1e-12 * left.max_abs());
}

TEST_CASE("fuse follows the row-major law") {
  Tensor t({"i", "j"}, {2, 3});
  for (std::int64_t i = 0; i < 2; ++i)
    for (std::int64_t j = 0; j < 3; ++j) t.at({i, j}) = 10.0 * i + j;
  const Tensor f = fuse(t, {{"k", {"i", "j"}}});
  CHECK(f.shape() == Shape{6});
  for (std::int64_t i = 0; i < 2; ++i)
    for (std::int64_t j = 0; j < 3; ++j) CHECK(f.at({3 * i + j}) == 10.0 * i + j);
}

TEST_CASE("fuse then split is the identity, bit for bit") {
  Rng rng(15);
  const Tensor t = random_tensor({"a", "b", "c"}, {2, 3, 4}, rng);
  const Tensor f = fuse(t, {{"ab", {"a", "b"}}, {"c", {"c"}}});
  CHECK(f.shape() == Shape{6, 4});
  const Tensor back = split(f, "ab", {"a", "b"}, {2, 3});
  REQUIRE(back.shape() == t.shape());
  for (std::int64_t e = 0; e < t.size(); ++e) CHECK(back.data()[e] == t.data()[e]);
}

TEST_CASE("fusing a D=2 bond with a d=2 loop index gives length 4") {
  Rng rng(16);
  const Tensor t = random_tensor({"bond", "loop", "p"}, {2, 2, 3}, rng);
  const Tensor f = fuse(t, {{"bond", {"bond", "loop"}}, {"p", {"p"}}});
  CHECK(f.dim("bond") == 4);
}

TEST_CASE("fuse/split errors") {
  Rng rng(17);
  const Tensor t = random_tensor({"a", "b"}, {2, 3}, rng);
  CHECK_THROWS(fuse(t, {{"x", {"a"}}})); // not a cover
  CHECK_THROWS(fuse(t, {{"x", {"a", "a"}}, {"b", {"b"}}}));
  const Tensor f = fuse(t, {{"ab", {"a", "b"}}});
  CHECK_THROWS(split(f, "ab", {"a", "b"}, {2, 4})); // shape mismatch
}

TEST_CASE("permute round trip and relabeling") {
  Rng rng(18);
  const Tensor t = random_tensor({"a", "b", "c"}, {2, 3, 4}, rng);
  const Tensor p = permuted(t, {"c", "a", "b"});
  CHECK(p.dim("a") == 2);
  CHECK(p.at({3, 1, 2}) == t.at({1, 2, 3}));
  const Tensor back = permuted(p, {"a", "b", "c"});
  for (std::int64_t e = 0; e < t.size(); ++e) CHECK(back.data()[e] == t.data()[e]);
  CHECK_THROWS(t.renamed("a", "b")); // duplicate label
}

TEST_CASE("network helpers: open/bond axes and overlap closure") {
  Rng rng(19);
  const Tensor a = random_tensor({"x", "b"}, {3, 2}, rng);
  const Tensor b = random_tensor({"b", "y"}, {2, 4}, rng);
  const std::vector<Tensor> net = {a, b};
  CHECK(bond_axes(net) == Axes{"b"});
  CHECK(open_axes(net) == Axes{"x", "y"});
  const Tensor full = contract_network(net);
  CHECK(overlap(net, net) == doctest::Approx(inner(full, full)).epsilon(1e-13));
}

TEST_CASE("parallel kernels agree with the serial reference") {
  Rng rng(20);
  const std::int64_t m = 67, k = 41, n = 53;
  std::vector<double> a(m * k), b(k * n), c1(m * n), c2(m * n);
  for (auto& v : a) v = rng.uniform(-1, 1);
  for (auto& v : b) v = rng.uniform(-1, 1);
  kernels::matmul(a.data(), b.data(), c1.data(), m, k, n);
  kernels::serial::matmul(a.data(), b.data(), c2.data(), m, k, n);
  for (std::int64_t e = 0; e < m * n; ++e)
    CHECK(std::abs(c1[e] - c2[e]) <= 1e-13 * static_cast<double>(k));

  const std::vector<std::int64_t> shape = {67, 31, 17};
  const std::vector<std::int64_t> strides = {1, 67 * 17, 67};
  std::vector<double> in(67 * 31 * 17), o1(in.size()), o2(in.size());
  for (auto& v : in) v = rng.uniform(-1, 1);
  kernels::permute_copy(in.data(), o1.data(), shape, strides);
  kernels::serial::permute_copy(in.data(), o2.data(), shape, strides);
  CHECK(o1 == o2);
}

TEST_CASE("rng: splits are independent and reproducible") {
  Rng a(42), b(42);
  CHECK(a.next_u64() == b.next_u64());
  Rng s1 = Rng(42).split(1), s2 = Rng(42).split(2);
  CHECK(s1.next_u64() != s2.next_u64());
  const double u = Rng(9).uniform(-0.5, 0.5);
  CHECK(u >= -0.5);
  CHECK(u < 0.5);
}
