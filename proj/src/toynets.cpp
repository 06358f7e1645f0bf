#include "zmt/toynets.hpp"

#include <cmath>
#include <stdexcept>

#include "zmt/rng.hpp"

namespace zmt::toy {

namespace {

Tensor random_site(std::int64_t D, std::int64_t phys, int k, Rng rng) {
  Tensor t({LoopPlaquette::bond_label(k), LoopPlaquette::bond_label(k + 1),
            LoopPlaquette::phys_label(k)},
           {D, D, phys});
  for (std::int64_t e = 0; e < t.size(); ++e) t.data()[e] = rng.uniform(-1.0, 1.0);
  return t;
}

} // namespace

LoopPlaquette make_virtual_loop(std::int64_t D, std::int64_t d, std::int64_t phys_dim,
                                double noise, std::uint64_t seed) {
  if (D < 1 || d < 1 || phys_dim < 1)
    throw std::invalid_argument("make_virtual_loop: dimensions must be >= 1");
  LoopPlaquette p;
  p.bond_dim = D;
  p.loop_dim = d;
  p.phys_dim = phys_dim;
  p.noise = noise;
  p.seed = seed;
  const Rng root(seed);
  for (int k = 0; k < 4; ++k) {
    Tensor site = random_site(D, phys_dim, k, root.split(static_cast<std::uint64_t>(k)));
    if (d > 1) {
      const std::string jin = "j_in", jout = "j_out";
      const Tensor loop = Tensor::identity(jin, jout, d);
      Tensor lifted = contract(site, loop, {}); // decoupled loop line
      lifted = fuse(lifted, {{LoopPlaquette::bond_label(k),
                              {LoopPlaquette::bond_label(k), jin}},
                             {LoopPlaquette::bond_label(k + 1),
                              {LoopPlaquette::bond_label(k + 1), jout}},
                             {LoopPlaquette::phys_label(k),
                              {LoopPlaquette::phys_label(k)}}});
      site = std::move(lifted);
    }
    site *= 1.0 / site.norm();
    if (noise != 0.0) {
      Rng nrng = root.split(100 + static_cast<std::uint64_t>(k));
      for (std::int64_t e = 0; e < site.size(); ++e)
        site.data()[e] += nrng.uniform(-noise, noise);
    }
    p.tensors.push_back(std::move(site));
  }
  return p;
}

LoopPlaquette make_plain_plaquette(std::int64_t D, std::int64_t phys_dim,
                                   std::uint64_t seed) {
  return make_virtual_loop(D, 1, phys_dim, 0.0, seed);
}

Tensor full_state(const std::vector<Tensor>& network) {
  std::int64_t phys_total = 1;
  for (const auto& ax : open_axes(network)) {
    for (const auto& t : network)
      if (t.has_axis(ax)) phys_total *= t.dim(ax);
  }
  if (phys_total > (std::int64_t{1} << 20))
    throw std::invalid_argument("full_state: total physical dimension exceeds 2^20");
  return contract_network(network);
}

Tensor full_state(const LoopPlaquette& p) { return full_state(p.tensors); }

double fidelity(const Tensor& a, const Tensor& b) {
  const double ab = inner(a, b);
  return ab * ab / (inner(a, a) * inner(b, b));
}

std::vector<Tensor> loop_component(const LoopPlaquette& p, std::int64_t j) {
  if (j < 0 || j >= p.loop_dim)
    throw std::invalid_argument("loop_component: index out of range");
  std::vector<Tensor> out;
  const std::int64_t D = p.bond_dim, d = p.loop_dim;
  for (int k = 0; k < 4; ++k) {
    const Tensor& t = p.tensors[k];
    // fused index runs row-major over (bond, loop): slice loop value j
    const std::string bin = LoopPlaquette::bond_label(k);
    const std::string bout = LoopPlaquette::bond_label(k + 1);
    Tensor s({bin, bout, LoopPlaquette::phys_label(k)}, {D, D, p.phys_dim});
    for (std::int64_t i1 = 0; i1 < D; ++i1)
      for (std::int64_t i2 = 0; i2 < D; ++i2)
        for (std::int64_t q = 0; q < p.phys_dim; ++q)
          s.at({i1, i2, q}) = t.at({i1 * d + j, i2 * d + j, q});
    out.push_back(std::move(s));
  }
  return out;
}

} // namespace zmt::toy
