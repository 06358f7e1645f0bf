#include "zmt/z2.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "zmt/snapshot.hpp"

namespace zmt::z2 {

namespace {

constexpr const char* kSite[4] = {"tl", "tr", "br", "bl"};
constexpr const char* kRing[4] = {"t", "rgt", "btm", "lft"};
constexpr const char* kLoop[4] = {"jt", "jrgt", "jbtm", "jlft"};

const Axes kCellAxes = {"up", "left", "down", "right", "spin", "anc"};

// Ring-axis renames per plaquette role; everything else gets a role prefix.
// tl: right->t down->lft | tr: left->t down->rgt
// br: up->rgt left->btm | bl: up->lft right->btm
const std::vector<std::pair<std::string, std::string>> kRoleRing[4] = {
    {{"right", "t"}, {"down", "lft"}},
    {{"left", "t"}, {"down", "rgt"}},
    {{"up", "rgt"}, {"left", "btm"}},
    {{"up", "lft"}, {"right", "btm"}},
};

// (ring axis, loop axis) pairs touched by each role.
const std::pair<std::string, std::string> kRoleLoops[4][2] = {
    {{"t", "jt"}, {"lft", "jlft"}},
    {{"t", "jt"}, {"rgt", "jrgt"}},
    {{"rgt", "jrgt"}, {"btm", "jbtm"}},
    {{"btm", "jbtm"}, {"lft", "jlft"}},
};

// Bond labels per class, in processing order t, rgt, btm, lft.
const char* kBondName[2][4] = {
    {"a'b'", "b'c'", "c'd'", "d'a'"},
    {"c'd'", "d'a'", "a'b'", "b'c'"},
};

int role_site(PlaquetteClass cls, int role) {
  // abcd: (a,b,c,d) in (TL,TR,BR,BL); cdab: (c,d,a,b)
  static const int map_abcd[4] = {0, 1, 2, 3};
  static const int map_cdab[4] = {2, 3, 0, 1};
  return cls == PlaquetteClass::abcd ? map_abcd[role] : map_cdab[role];
}

std::vector<Tensor> assemble_plaquette(const UnitCell& cell, PlaquetteClass cls) {
  std::vector<Tensor> net;
  for (int role = 0; role < 4; ++role) {
    const Tensor& src = cell.site(role_site(cls, role));
    std::vector<std::pair<std::string, std::string>> map = kRoleRing[role];
    for (const auto& ax : kCellAxes) {
      bool is_ring = false;
      for (const auto& [from, to] : kRoleRing[role])
        if (from == ax) is_ring = true;
      if (!is_ring) map.push_back({ax, std::string(kSite[role]) + "." + ax});
    }
    net.push_back(src.renamed(map));
  }
  return net;
}

void disassemble_plaquette(const std::vector<Tensor>& net, PlaquetteClass cls,
                           UnitCell& cell) {
  for (int role = 0; role < 4; ++role) {
    std::vector<std::pair<std::string, std::string>> map;
    for (const auto& [from, to] : kRoleRing[role]) map.push_back({to, from});
    for (const auto& ax : kCellAxes) {
      bool is_ring = false;
      for (const auto& [from, to] : kRoleRing[role])
        if (from == ax) is_ring = true;
      if (!is_ring) map.push_back({std::string(kSite[role]) + "." + ax, ax});
    }
    cell.site(role_site(cls, role)) = permuted(net[role].renamed(map), kCellAxes);
  }
}

std::pair<std::size_t, std::size_t> owners(const std::vector<Tensor>& net,
                                           const std::string& bond) {
  std::vector<std::size_t> own;
  for (std::size_t k = 0; k < net.size(); ++k)
    if (net[k].has_axis(bond)) own.push_back(k);
  if (own.size() != 2) throw std::logic_error("plaquette bond must join two tensors");
  return {own[0], own[1]};
}

double rel_delta(const std::vector<Tensor>& target, const std::vector<Tensor>& var,
                 double tt) {
  const double tv = overlap(var, target);
  const double vv = overlap(var, var);
  const double num = std::max(0.0, tt - 2.0 * tv + vv);
  return std::sqrt(num / tt);
}

Tensor als_solve(const std::vector<Tensor>& var, std::size_t ix,
                 const std::vector<Tensor>& target, const EvolveOptions& opts) {
  const Tensor& X = var[ix];
  Axes xb, xo;
  for (const auto& ax : X.axes()) {
    bool shared = false;
    for (std::size_t k = 0; k < var.size(); ++k)
      if (k != ix && var[k].has_axis(ax)) shared = true;
    (shared ? xb : xo).push_back(ax);
  }

  // slot Gram matrix over X's bond axes; X's open axes pass through as an
  // implicit identity
  std::vector<Tensor> knet;
  const std::vector<Tensor> kbra = bra_copy(var, "~k");
  for (std::size_t k = 0; k < var.size(); ++k)
    if (k != ix) knet.push_back(var[k]);
  for (std::size_t k = 0; k < var.size(); ++k)
    if (k != ix) knet.push_back(kbra[k]);
  const Tensor k_t = contract_network(std::move(knet));
  Axes xb_bra;
  for (const auto& ax : xb) xb_bra.push_back(ax + "~k");
  const linalg::Matricized K = linalg::matricize(k_t, xb, xb_bra);

  // overlap of the target diagram with the open X slot
  std::vector<Tensor> rnet;
  for (std::size_t k = 0; k < var.size(); ++k)
    if (k != ix) rnet.push_back(var[k]);
  const std::vector<Tensor> tbra = bra_copy(target, "~t");
  rnet.insert(rnet.end(), tbra.begin(), tbra.end());
  const Tensor r_t = contract_network(std::move(rnet));
  const linalg::Matricized R = linalg::matricize(r_t, xb, xo);

  std::int64_t rank = 0;
  const std::vector<double> sol =
      linalg::lstsq(K.data, K.rows, K.cols, R.data, R.cols, opts.als_cutoff, &rank);
  if (rank < K.rows && opts.rank_deficit_counter) ++(*opts.rank_deficit_counter);
  return linalg::from_matrix(sol, R);
}

void als_optimize(std::vector<Tensor>& var, const std::vector<Tensor>& target,
                  const std::string& bond, double tt, double& delta,
                  const EvolveOptions& opts) {
  const auto [ia, ib] = owners(var, bond);
  for (int sweep = 0; sweep < opts.als_sweeps; ++sweep) {
    const double before = delta;
    for (const std::size_t ix : {ia, ib}) {
      Tensor xnew = als_solve(var, ix, target, opts);
      const Tensor xold = var[ix];
      var[ix] = std::move(xnew);
      const double dnew = rel_delta(target, var, tt);
      if (dnew <= delta + 1e-14) delta = dnew;
      else var[ix] = xold; // keep the record monotone under solver noise
    }
    if (before - delta < opts.als_tol * std::max(before, 1e-300)) break;
  }
}

std::vector<double> kron(const std::vector<double>& a, std::int64_t na,
                         const std::vector<double>& b, std::int64_t nb) {
  std::vector<double> out(static_cast<std::size_t>(na * nb * na * nb));
  for (std::int64_t i = 0; i < na; ++i)
    for (std::int64_t j = 0; j < na; ++j)
      for (std::int64_t k = 0; k < nb; ++k)
        for (std::int64_t l = 0; l < nb; ++l)
          out[(i * nb + k) * na * nb + (j * nb + l)] = a[i * na + j] * b[k * nb + l];
  return out;
}

} // namespace

const Tensor& UnitCell::site(int k) const {
  switch (k) {
    case 0: return a;
    case 1: return b;
    case 2: return c;
    default: return d;
  }
}

Tensor& UnitCell::site(int k) {
  switch (k) {
    case 0: return a;
    case 1: return b;
    case 2: return c;
    default: return d;
  }
}

std::vector<std::pair<std::string, std::int64_t>> UnitCell::bond_dims() const {
  const std::pair<const char*, const char*> pairs[8] = {
      {"a.right", "b.left"}, {"b.down", "c.up"}, {"d.right", "c.left"},
      {"a.down", "d.up"},    {"c.right", "d.left"}, {"d.down", "a.up"},
      {"b.right", "a.left"}, {"c.down", "b.up"},
  };
  auto dim_of = [this](const std::string& spec) {
    const int site_idx = spec[0] == 'a' ? 0 : spec[0] == 'b' ? 1 : spec[0] == 'c' ? 2 : 3;
    return site(site_idx).dim(spec.substr(2));
  };
  std::vector<std::pair<std::string, std::int64_t>> out;
  for (const auto& [lhs, rhs] : pairs) {
    const std::int64_t dl = dim_of(lhs), dr = dim_of(rhs);
    if (dl != dr)
      throw std::logic_error(std::string("unit cell bond mismatch: ") + lhs + " vs " + rhs);
    out.push_back({std::string(lhs) + "=" + rhs, dl});
  }
  return out;
}

std::string method_name(Method m) { return m == Method::zmt ? "zmt" : "svd"; }

std::string plaquette_name(PlaquetteClass c) {
  return c == PlaquetteClass::abcd ? "abcd" : "cdab";
}

UnitCell initial_state() {
  Tensor t(kCellAxes, {1, 1, 1, 1, 2, 2});
  const double v = 1.0 / std::sqrt(2.0);
  t.at({0, 0, 0, 0, 0, 0}) = v;
  t.at({0, 0, 0, 0, 1, 1}) = v;
  UnitCell cell;
  cell.a = t;
  cell.b = t;
  cell.c = t;
  cell.d = t;
  return cell;
}

UnitCell electric_half_step(const UnitCell& cell, const ModelParams& params) {
  const double t = params.dbeta / 4.0;
  Tensor m({"so", "si"}, {2, 2},
           {std::cosh(t), std::sinh(t), std::sinh(t), std::cosh(t)});
  UnitCell out = cell;
  for (int k = 0; k < 4; ++k) {
    Tensor s = contract(out.site(k), m, {{"spin", "si"}}).renamed("so", "spin");
    out.site(k) = permuted(s, kCellAxes);
  }
  return out;
}

PlaquetteMpo build_plaquette_mpo(const ModelParams& params) {
  const double eps = params.epsilon();
  const double c1 = std::pow(std::cosh(eps), 0.25);
  const double sh = std::sinh(eps);
  const double c2 = std::pow(std::abs(sh), 0.25);
  PlaquetteMpo mpo;
  for (int site = 0; site < 4; ++site) {
    // sinh < 0 (reverse step) rides as a sign on site 0's sigma_z channel
    const double cz = (sh < 0 && site == 0) ? -c2 : c2;
    Tensor w({"so", "si", "jl", "jr"}, {2, 2, 2, 2});
    w.at({0, 0, 0, 0}) = c1;
    w.at({1, 1, 0, 0}) = c1;
    w.at({0, 0, 1, 1}) = cz;
    w.at({1, 1, 1, 1}) = -cz;
    mpo.ops.push_back(std::move(w));
  }
  return mpo;
}

std::vector<double> PlaquetteMpo::contracted() const {
  std::vector<double> u(16 * 16, 0.0);
  for (std::int64_t j = 0; j < 2; ++j) {
    std::vector<std::vector<double>> site_ops;
    for (const auto& w : ops) {
      std::vector<double> o(4);
      for (std::int64_t so = 0; so < 2; ++so)
        for (std::int64_t si = 0; si < 2; ++si) o[so * 2 + si] = w.at({so, si, j, j});
      site_ops.push_back(std::move(o));
    }
    std::vector<double> acc = site_ops[0];
    std::int64_t n = 2;
    for (int k = 1; k < 4; ++k) {
      acc = kron(acc, n, site_ops[k], 2);
      n *= 2;
    }
    for (std::size_t e = 0; e < u.size(); ++e) u[e] += acc[e];
  }
  return u;
}

std::pair<UnitCell, std::vector<ErrorRecord>> apply_and_truncate_plaquette(
    const UnitCell& cell, const PlaquetteMpo& mpo, PlaquetteClass cls,
    Method method, const EvolveOptions& opts) {
  std::vector<Tensor> net = assemble_plaquette(cell, cls);

  // absorb the pMPO: one channel operator per site, loop legs fused into the
  // ring bonds in (bond, loop) order on both sides
  for (int role = 0; role < 4; ++role) {
    const auto& [ax1, j1] = kRoleLoops[role][0];
    const auto& [ax2, j2] = kRoleLoops[role][1];
    Tensor w = mpo.ops[role].renamed({{"jl", j1}, {"jr", j2}});
    const std::string spin = std::string(kSite[role]) + ".spin";
    Tensor t = contract(net[role], w, {{spin, "si"}}).renamed("so", spin);
    std::vector<FuseGroup> groups;
    for (const auto& ax : t.axes()) {
      if (ax == j1 || ax == j2) continue;
      if (ax == ax1) groups.push_back({ax1, {ax1, j1}});
      else if (ax == ax2) groups.push_back({ax2, {ax2, j2}});
      else groups.push_back({ax, {ax}});
    }
    net[role] = fuse(t, groups);
  }

  ZmtOptions zopts;
  zopts.kappa = opts.kappa;
  zopts.reg = opts.reg;
  zopts.monitor = opts.monitor;

  std::vector<ErrorRecord> records;
  for (int bidx = 0; bidx < 4; ++bidx) {
    const std::string bond = kRing[bidx];
    const auto [ia, ib] = owners(net, bond);
    const std::int64_t d_cur = net[ia].dim(bond);
    const std::int64_t d_tar = std::min<std::int64_t>(opts.D_max, d_cur);

    const std::vector<Tensor> target = net;
    const double tt = overlap(target, target);

    ErrorRecord rec;
    rec.bond = kBondName[cls == PlaquetteClass::abcd ? 0 : 1][bidx];
    rec.plaquette = plaquette_name(cls);
    rec.method = method;

    if (d_tar < d_cur) {
      if (method == Method::zmt) {
        for (std::int64_t cut = 0; cut < d_cur - d_tar; ++cut) {
          auto [reduced, report] = zmt_cut_bond(net, bond, zopts);
          net = std::move(reduced);
          rec.cg_iterations += report.cg_iterations;
          rec.fallback = rec.fallback || report.fallback_used;
        }
        // dimension-preserving re-split: the absorbed sqrt(lambda) factors
        // can leave the bond ill-conditioned for the least-squares sweeps
        net = svd_cut_bond(net, bond, d_tar);
      } else {
        net = svd_cut_bond(net, bond, d_tar);
      }
    }

    double delta = rel_delta(target, net, tt);
    rec.delta_initial = delta;
    if (delta > 1e-13)
      als_optimize(net, target, bond, tt, delta, opts);
    rec.delta_final = delta;
    records.push_back(std::move(rec));
  }

  UnitCell out = cell;
  disassemble_plaquette(net, cls, out);
  return {std::move(out), std::move(records)};
}

std::pair<UnitCell, std::vector<ErrorRecord>> trotter_step(
    const UnitCell& cell, const ModelParams& params, const EvolveOptions& opts) {
  UnitCell cur = electric_half_step(cell, params);
  const PlaquetteMpo mpo = build_plaquette_mpo(params);
  auto [c1, rec1] = apply_and_truncate_plaquette(cur, mpo, PlaquetteClass::abcd,
                                                 opts.method, opts);
  auto [c2, rec2] = apply_and_truncate_plaquette(c1, mpo, PlaquetteClass::cdab,
                                                 opts.method, opts);
  UnitCell out = electric_half_step(c2, params);
  out.beta = cell.beta + params.dbeta;
  out.log_scale = cell.log_scale;
  for (int k = 0; k < 4; ++k) {
    const double n = out.site(k).norm();
    out.site(k) *= 1.0 / n;
    out.log_scale += std::log(n);
  }
  std::vector<ErrorRecord> records = std::move(rec1);
  records.insert(records.end(), rec2.begin(), rec2.end());
  return {std::move(out), std::move(records)};
}

std::vector<double> Trajectory::step_average(bool final_delta) const {
  std::vector<double> sums, counts;
  for (const auto& r : records) {
    const std::size_t k = static_cast<std::size_t>(r.step - 1);
    if (k >= sums.size()) {
      sums.resize(k + 1, 0.0);
      counts.resize(k + 1, 0.0);
    }
    sums[k] += final_delta ? r.delta_final : r.delta_initial;
    counts[k] += 1.0;
  }
  for (std::size_t k = 0; k < sums.size(); ++k)
    if (counts[k] > 0) sums[k] /= counts[k];
  return sums;
}

Trajectory evolve(const ModelParams& params, const EvolveOptions& opts,
                  std::uint64_t seed) {
  (void)seed; // the trajectory is deterministic; the seed is echoed by the CLI
  if (params.dbeta == 0.0) throw std::invalid_argument("evolve: dbeta must be nonzero");
  const double ratio = params.beta_max / params.dbeta;
  const std::int64_t steps = std::llround(ratio);
  if (steps < 0 || std::abs(ratio - static_cast<double>(steps)) > 1e-9)
    throw std::invalid_argument("evolve: beta_max must be a multiple of dbeta");

  Trajectory traj;
  UnitCell cell = initial_state();
  for (std::int64_t k = 1; k <= steps; ++k) {
    auto [next, recs] = trotter_step(cell, params, opts);
    cell = std::move(next);
    for (auto& r : recs) {
      r.step = static_cast<int>(k);
      r.beta = static_cast<double>(k) * params.dbeta;
      traj.records.push_back(std::move(r));
    }
    if (opts.snapshot_every > 0 && k % opts.snapshot_every == 0) {
      static const char* names[4] = {"a", "b", "c", "d"};
      for (int s = 0; s < 4; ++s)
        save_snapshot(cell.site(s), opts.snapshot_prefix + "_step" +
                                        std::to_string(k) + "_" + names[s] + ".tnt");
    }
  }
  traj.final_cell = std::move(cell);
  return traj;
}

ModelOperators model_operators() {
  ModelOperators ops;
  ops.sigma_x = {0, 1, 1, 0};
  ops.sigma_z = {1, 0, 0, -1};
  std::vector<double> ax = ops.sigma_x, az = ops.sigma_z;
  std::int64_t n = 2;
  for (int k = 1; k < 4; ++k) {
    ax = kron(ax, n, ops.sigma_x, 2);
    az = kron(az, n, ops.sigma_z, 2);
    n *= 2;
  }
  ops.A_p = std::move(ax);
  ops.B_p = std::move(az);
  ops.gauss_projector_factor.resize(16 * 16);
  for (std::int64_t e = 0; e < 16 * 16; ++e)
    ops.gauss_projector_factor[e] = 0.5 * ops.A_p[e];
  for (std::int64_t i = 0; i < 16; ++i) ops.gauss_projector_factor[i * 16 + i] += 0.5;
  return ops;
}

double cell_fidelity(const UnitCell& x, const UnitCell& y) {
  const std::vector<Tensor> nx = assemble_plaquette(x, PlaquetteClass::abcd);
  const std::vector<Tensor> ny = assemble_plaquette(y, PlaquetteClass::abcd);
  const double xy = overlap(nx, ny);
  return xy * xy / (overlap(nx, nx) * overlap(ny, ny));
}

} // namespace zmt::z2
