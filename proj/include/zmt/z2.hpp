#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "zmt/engine.hpp"
#include "zmt/tensor.hpp"

namespace zmt::z2 {

/// 2x2 unit cell of the gauge-field purification iPEPS. Each sublattice
/// tensor carries axes (up, left, down, right, spin, anc); spin and ancilla
/// have length 2. Rows of the checkerboard tiling alternate [a b] / [d c],
/// so the two white-plaquette classes are (a,b,c,d) and (c,d,a,b) in
/// (TL, TR, BR, BL) order.
struct UnitCell {
  Tensor a, b, c, d;
  double beta = 0.0;
  double log_scale = 0.0; // accumulated per-step Frobenius renormalization

  const Tensor& site(int k) const; // 0:a 1:b 2:c 3:d
  Tensor& site(int k);

  /// The eight distinct bond dimensions, keyed by "<x><axis>" pairs; also
  /// verifies that neighbouring tensors agree on shared bond lengths.
  std::vector<std::pair<std::string, std::int64_t>> bond_dims() const;
};

struct ModelParams {
  double g = 0.0;      // magnetic coupling
  double dbeta = 0.0;  // Trotter step
  double beta_max = 0.0;

  double epsilon() const { return g * dbeta / 2.0; }
};

/// Two-channel periodic MPO for the plaquette factor exp(eps * zzzz):
/// channel 1 carries cosh(eps)^{1/4} * I per site, channel 2 carries
/// |sinh(eps)|^{1/4} * sigma_z (any sign of sinh rides on the first site).
/// ops[k] has axes (so, si, jl, jr) with loop dimension r = 2.
struct PlaquetteMpo {
  std::vector<Tensor> ops; // 4 site operators, (TL, TR, BR, BL)

  /// Dense 16 x 16 contraction of the loop (oracle surface for tests).
  std::vector<double> contracted() const;
};

enum class Method { zmt, svd };
std::string method_name(Method m);

enum class PlaquetteClass { abcd, cdab };
std::string plaquette_name(PlaquetteClass c);

/// Per-bond truncation record of one plaquette pass.
struct ErrorRecord {
  int step = 0;
  double beta = 0.0;
  std::string bond;      // a'b', b'c', c'd' or d'a'
  std::string plaquette; // abcd or cdab
  Method method = Method::zmt;
  double delta_initial = 0.0; // relative Frobenius error after truncation
  double delta_final = 0.0;   // after the variational optimization
  int cg_iterations = 0;
  bool fallback = false;
};

struct EvolveOptions {
  std::int64_t D_max = 4;
  Method method = Method::zmt;
  int kappa = 5;
  double reg = 1e-12;
  double als_cutoff = 1e-12;
  // Sweeps are capped here, with als_tol as the usual early stop. Two sweeps
  // leave both methods far from the sweep fixed point, and the comparison
  // then reflects which initialization happens to sit in the luckier basin
  // rather than which truncation is better.
  int als_sweeps = 8;
  double als_tol = 1e-8; // stop when the relative delta improvement drops below
  PsdMonitor* monitor = nullptr;
  std::int64_t* rank_deficit_counter = nullptr;
  std::int64_t snapshot_every = 0;
  std::string snapshot_prefix;
};

/// Infinite-temperature purification: bond dimensions 1, maximally entangled
/// spin-ancilla pair on every site, unit norm per site.
UnitCell initial_state();

/// Multiply every spin axis by exp(dbeta/4 * sigma_x).
UnitCell electric_half_step(const UnitCell& cell, const ModelParams& params);

PlaquetteMpo build_plaquette_mpo(const ModelParams& params);

/// Absorb the pMPO into one white-plaquette class (ring bonds double), then
/// truncate the four ring bonds in order TL-TR, TR-BR, BR-BL, BL-TL back to
/// D_max and variationally re-optimize the two tensors at each bond.
std::pair<UnitCell, std::vector<ErrorRecord>> apply_and_truncate_plaquette(
    const UnitCell& cell, const PlaquetteMpo& mpo, PlaquetteClass cls,
    Method method, const EvolveOptions& opts);

/// Second-order split step: electric quarter, both plaquette passes,
/// electric quarter; tensors are renormalized to unit Frobenius norm with
/// the scale logged.
std::pair<UnitCell, std::vector<ErrorRecord>> trotter_step(
    const UnitCell& cell, const ModelParams& params, const EvolveOptions& opts);

struct Trajectory {
  std::vector<ErrorRecord> records;
  UnitCell final_cell;

  /// Per-step averages over the 8 bond records.
  std::vector<double> step_average(bool final_delta) const;
};

Trajectory evolve(const ModelParams& params, const EvolveOptions& opts,
                  std::uint64_t seed);

/// Dense model operators on one plaquette (property-test surface):
/// sigma matrices, the sigma_x and sigma_z plaquette products and the
/// chargeless-sector projector factor (1 + A_p)/2, all row-major.
struct ModelOperators {
  std::vector<double> sigma_x; // 2 x 2
  std::vector<double> sigma_z; // 2 x 2
  std::vector<double> A_p;     // 16 x 16, sigma_x^{x4}
  std::vector<double> B_p;     // 16 x 16, sigma_z^{x4}
  std::vector<double> gauss_projector_factor; // (1 + A_p)/2
};

ModelOperators model_operators();

/// Plaquette-diagram fidelity between two unit cells with matching bond
/// dimensions (identity closure on the external axes).
double cell_fidelity(const UnitCell& x, const UnitCell& y);

} // namespace zmt::z2
