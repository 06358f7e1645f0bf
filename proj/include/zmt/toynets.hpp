#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "zmt/tensor.hpp"

namespace zmt::toy {

/// Four-tensor ring with a decoupled virtual loop of dimension d threaded
/// around it and fused into each bond. Site k carries axes
/// (b{k}, b{k+1 mod 4}, p{k}); bonds are "b0".."b3" of length D*d, physical
/// axes "p0".."p3".
struct LoopPlaquette {
  std::vector<Tensor> tensors;
  std::int64_t bond_dim = 0;  // D, before loop inflation
  std::int64_t loop_dim = 0;  // d
  std::int64_t phys_dim = 0;
  double noise = 0.0;
  std::uint64_t seed = 0;

  static std::string bond_label(int k) { return "b" + std::to_string(k % 4); }
  static std::string phys_label(int k) { return "p" + std::to_string(k); }
};

/// Random plaquette whose fused bonds have dimension D*d while the state it
/// represents needs only D: the loop index is a pure delta chain decoupled
/// from the physical axes. Site tensors are unit-normalized before the
/// uniform [-noise, noise] perturbation is added.
LoopPlaquette make_virtual_loop(std::int64_t D, std::int64_t d, std::int64_t phys_dim,
                                double noise, std::uint64_t seed);

/// Plain random ring with bonds of dimension D (no loop, no redundancy).
LoopPlaquette make_plain_plaquette(std::int64_t D, std::int64_t phys_dim,
                                   std::uint64_t seed);

/// Exact contraction over the ring bonds; axes p0..p3. Guarded to a total
/// physical dimension of 2^20.
Tensor full_state(const LoopPlaquette& p);
Tensor full_state(const std::vector<Tensor>& network);

/// |<a|b>|^2 / (<a|a> <b|b>) computed from full states.
double fidelity(const Tensor& a, const Tensor& b);

/// Restrict every fused bond of a noise-free loop plaquette to one loop
/// component j; the result is a bond-D network (oracle for proportionality).
std::vector<Tensor> loop_component(const LoopPlaquette& p, std::int64_t j);

} // namespace zmt::toy
