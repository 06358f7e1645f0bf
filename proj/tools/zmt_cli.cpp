// Command-line front end: toy fixtures, gradient and gauge diagnostics, and
// imaginary-time evolution benchmarks with CSV/JSON output.

#include <chrono>
#include <cinttypes>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "zmt/engine.hpp"
#include "zmt/rng.hpp"
#include "zmt/toynets.hpp"
#include "zmt/z2.hpp"

namespace {

constexpr const char* kVersion = "0.1.0";

struct RunConfig {
  std::string command;
  std::int64_t D = 4;
  std::int64_t d = 2;
  std::int64_t phys = 2;
  int kappa = 5;
  double dbeta = 0.01;
  double beta_max = 0.5;
  double g = 3.04438;
  double noise = 0.0;
  double f_tol = 1e-10;
  std::uint64_t seed = 7;
  std::string method = "zmt";
  std::string out_path;
  std::int64_t snapshot_every = 0;
  int trials = 5;
  int instances = 20;
};

struct CsvRow {
  std::int64_t step = 0;
  double beta = 0.0;
  std::string bond;
  std::string method;
  double delta_initial = 0.0;
  double delta_final = 0.0;
  int cg_iters = 0;
  bool fallback = false;
};

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_csv(const std::string& path, const std::vector<CsvRow>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open output file " + path);
  out << "step,beta,bond,method,delta_initial,delta_final,cg_iters,fallback\n";
  for (const auto& r : rows) {
    out << r.step << ',' << fmt_double(r.beta) << ',' << r.bond << ','
        << r.method << ',' << fmt_double(r.delta_initial) << ','
        << fmt_double(r.delta_final) << ',' << r.cg_iters << ','
        << (r.fallback ? 1 : 0) << '\n';
  }
}

std::string timestamp_utc() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

nlohmann::json config_json(const RunConfig& cfg) {
  return {
      {"command", cfg.command},   {"D", cfg.D},
      {"d", cfg.d},               {"phys", cfg.phys},
      {"kappa", cfg.kappa},       {"dbeta", cfg.dbeta},
      {"beta_max", cfg.beta_max}, {"g", cfg.g},
      {"noise", cfg.noise},       {"f_tol", cfg.f_tol},
      {"seed", cfg.seed},         {"method", cfg.method},
      {"out", cfg.out_path},      {"snapshot_every", cfg.snapshot_every},
      {"trials", cfg.trials},     {"instances", cfg.instances},
  };
}

void write_sidecar(const RunConfig& cfg, nlohmann::json summary,
                   const std::string& status) {
  nlohmann::json side;
  side["config"] = config_json(cfg);
  side["versions"] = {{"zmt", kVersion}, {"compiler", __VERSION__}};
  side["seed"] = cfg.seed;
  side["timestamp_utc"] = timestamp_utc();
  side["status"] = status;
  side["summary"] = std::move(summary);
  std::ofstream out(cfg.out_path + ".json", std::ios::binary);
  out << side.dump(2) << '\n';
}

void echo_config(const RunConfig& cfg) {
  const auto j = config_json(cfg);
  std::cout << "# resolved configuration\n";
  for (const auto& [key, value] : j.items())
    std::cout << "# " << key << " = " << value.dump() << '\n';
}

nlohmann::json mus_json(const std::vector<std::pair<double, double>>& mus) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& [re, im] : mus) out.push_back({re, im});
  return out;
}

std::vector<double> random_gauge(std::int64_t n, zmt::Rng rng) {
  std::vector<double> m1(static_cast<std::size_t>(n * n)),
      m2(static_cast<std::size_t>(n * n)), s(static_cast<std::size_t>(n));
  for (auto& v : m1) v = rng.uniform(-1, 1);
  for (auto& v : m2) v = rng.uniform(-1, 1);
  const auto q1 = zmt::linalg::qr(m1, n, n), q2 = zmt::linalg::qr(m2, n, n);
  for (auto& v : s) v = rng.uniform(0.6, 1.8);
  std::vector<double> gauge(static_cast<std::size_t>(n * n), 0.0);
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t j = 0; j < n; ++j)
      for (std::int64_t k = 0; k < n; ++k)
        gauge[i * n + j] += q1.q[i * n + k] * s[k] * q2.q[j * n + k];
  return gauge;
}

// ---------------------------------------------------------------- commands

int run_toy(const RunConfig& cfg) {
  const auto p = zmt::toy::make_virtual_loop(cfg.D, cfg.d, cfg.phys, cfg.noise,
                                             cfg.seed);
  zmt::PsdMonitor monitor;
  zmt::ZmtOptions opts;
  opts.kappa = cfg.kappa;
  opts.monitor = &monitor;
  const zmt::ReduceResult res =
      zmt::reduce_iteratively(p.tensors, "b1", cfg.f_tol, opts);

  std::vector<CsvRow> rows;
  nlohmann::json cuts = nlohmann::json::array();
  std::int64_t step = 0;
  for (const auto& r : res.reports) {
    rows.push_back({++step, 0.0, r.bond, "zmt", r.f_initial_mode, r.f_optimized,
                    r.cg_iterations, r.fallback_used});
    cuts.push_back({{"bond", r.bond},
                    {"D_before", r.D_before},
                    {"D_after", r.D_after},
                    {"f_initial_mode", r.f_initial_mode},
                    {"f_optimized", r.f_optimized},
                    {"cg_iterations", r.cg_iterations},
                    {"fallback_used", r.fallback_used},
                    {"mus", mus_json(r.mus)}});
  }
  write_csv(cfg.out_path, rows);

  nlohmann::json summary;
  summary["cuts"] = cuts;
  summary["final_bond_dimension"] = res.network.front().dim("b1");
  summary["psd_worst_ratio"] = monitor.worst_ratio;
  summary["metrics_built"] = monitor.metrics;
  const double total_phys = std::pow(static_cast<double>(cfg.phys), 4);
  if (total_phys <= static_cast<double>(1 << 20)) {
    summary["fidelity_vs_original"] = zmt::toy::fidelity(
        zmt::toy::full_state(p.tensors), zmt::toy::full_state(res.network));
  }
  write_sidecar(cfg, summary, "ok");
  std::cout << "toy: " << res.reports.size() << " cuts, final bond dimension "
            << res.network.front().dim("b1") << "\n";
  return 0;
}

std::vector<CsvRow> records_to_rows(const std::vector<zmt::z2::ErrorRecord>& recs) {
  std::vector<CsvRow> rows;
  rows.reserve(recs.size());
  for (const auto& r : recs)
    rows.push_back({r.step, r.beta, r.bond, zmt::z2::method_name(r.method),
                    r.delta_initial, r.delta_final, r.cg_iterations, r.fallback});
  return rows;
}

nlohmann::json trajectory_summary(const zmt::z2::Trajectory& traj,
                                  const zmt::PsdMonitor& monitor,
                                  std::int64_t rank_deficits, double dbeta) {
  nlohmann::json per_step = nlohmann::json::array();
  const auto ai = traj.step_average(false);
  const auto af = traj.step_average(true);
  for (std::size_t k = 0; k < af.size(); ++k)
    per_step.push_back({{"beta", (k + 1) * dbeta},
                        {"avg_delta_initial", ai[k]},
                        {"avg_delta_final", af[k]}});
  int fallbacks = 0;
  for (const auto& r : traj.records) fallbacks += r.fallback ? 1 : 0;
  return {{"per_step", per_step},
          {"fallbacks", fallbacks},
          {"rank_deficient_solves", rank_deficits},
          {"psd_worst_ratio", monitor.worst_ratio},
          {"metrics_built", monitor.metrics}};
}

int run_evolve(const RunConfig& cfg) {
  zmt::z2::ModelParams params{cfg.g, cfg.dbeta, cfg.beta_max};
  zmt::PsdMonitor monitor;
  std::int64_t deficits = 0;
  zmt::z2::EvolveOptions opts;
  opts.D_max = cfg.D;
  opts.method = cfg.method == "svd" ? zmt::z2::Method::svd : zmt::z2::Method::zmt;
  opts.kappa = cfg.kappa;
  opts.monitor = &monitor;
  opts.rank_deficit_counter = &deficits;
  opts.snapshot_every = cfg.snapshot_every;
  opts.snapshot_prefix = cfg.out_path;
  const zmt::z2::Trajectory traj = zmt::z2::evolve(params, opts, cfg.seed);
  write_csv(cfg.out_path, records_to_rows(traj.records));
  write_sidecar(cfg, trajectory_summary(traj, monitor, deficits, cfg.dbeta), "ok");
  const auto af = traj.step_average(true);
  std::cout << "evolve: " << af.size() << " steps, final avg delta "
            << (af.empty() ? 0.0 : af.back()) << "\n";
  return 0;
}

int run_compare(const RunConfig& cfg) {
  zmt::z2::ModelParams params{cfg.g, cfg.dbeta, cfg.beta_max};
  struct Lane {
    zmt::z2::Trajectory traj;
    zmt::PsdMonitor monitor;
    std::int64_t deficits = 0;
  };
  auto run_lane = [&](zmt::z2::Method m) {
    Lane lane;
    zmt::z2::EvolveOptions opts;
    opts.D_max = cfg.D;
    opts.method = m;
    opts.kappa = cfg.kappa;
    opts.monitor = &lane.monitor;
    opts.rank_deficit_counter = &lane.deficits;
    lane.traj = zmt::z2::evolve(params, opts, cfg.seed);
    return lane;
  };
  // the two trajectories are independent; run them concurrently
  auto fut = std::async(std::launch::async, run_lane, zmt::z2::Method::zmt);
  Lane svd = run_lane(zmt::z2::Method::svd);
  Lane zmt_lane = fut.get();

  std::vector<CsvRow> rows = records_to_rows(zmt_lane.traj.records);
  const auto svd_rows = records_to_rows(svd.traj.records);
  rows.insert(rows.end(), svd_rows.begin(), svd_rows.end());
  write_csv(cfg.out_path, rows);

  const auto az = zmt_lane.traj.step_average(true);
  const auto as = svd.traj.step_average(true);
  std::ofstream sum(cfg.out_path + ".summary.csv", std::ios::binary);
  sum << "step,beta,avg_delta_final_zmt,avg_delta_final_svd,ratio_svd_over_zmt\n";
  int wins = 0;
  double sz = 0, ss = 0;
  for (std::size_t k = 0; k < az.size(); ++k) {
    const double ratio = az[k] > 0 ? as[k] / az[k] : 0.0;
    sum << (k + 1) << ',' << fmt_double((k + 1) * cfg.dbeta) << ','
        << fmt_double(az[k]) << ',' << fmt_double(as[k]) << ','
        << fmt_double(ratio) << '\n';
    if (az[k] <= as[k]) ++wins;
    sz += az[k];
    ss += as[k];
  }
  nlohmann::json summary;
  summary["zmt"] = trajectory_summary(zmt_lane.traj, zmt_lane.monitor,
                                      zmt_lane.deficits, cfg.dbeta);
  summary["svd"] = trajectory_summary(svd.traj, svd.monitor, svd.deficits, cfg.dbeta);
  summary["zmt_wins"] = wins;
  summary["steps"] = az.size();
  summary["beta_averaged_ratio_svd_over_zmt"] = sz > 0 ? ss / sz : 0.0;
  write_sidecar(cfg, summary, "ok");
  std::cout << "compare: zmt at or below svd in " << wins << "/" << az.size()
            << " steps, beta-averaged ratio "
            << (sz > 0 ? ss / sz : 0.0) << "\n";
  return 0;
}

int run_gauge_probe(const RunConfig& cfg) {
  const auto p = zmt::toy::make_virtual_loop(cfg.D, cfg.d, cfg.phys, cfg.noise,
                                             cfg.seed);
  const std::int64_t bond_dim = p.tensors[0].dim("b1");
  zmt::ZmtOptions opts;
  opts.kappa = cfg.kappa;
  std::vector<CsvRow> rows;
  nlohmann::json trials = nlohmann::json::array();
  int agree = 0;
  for (int trial = 0; trial < cfg.trials; ++trial) {
    const auto gauge = random_gauge(bond_dim, zmt::Rng(cfg.seed).split(1000 + trial));
    const zmt::GaugeProbeResult res = zmt::gauge_probe(p.tensors, "b1", gauge, opts);
    double dmu = 0;
    for (std::size_t k = 0; k < res.mus_original.size(); ++k)
      dmu = std::max(dmu, std::hypot(res.mus_original[k].first - res.mus_gauged[k].first,
                                     res.mus_original[k].second - res.mus_gauged[k].second));
    const double df = std::abs(res.f_original - res.f_gauged) /
                      std::max(std::abs(res.f_original), 1e-300);
    const bool ok = dmu <= 1e-6 && df <= 1e-8;
    agree += ok ? 1 : 0;
    rows.push_back({trial + 1, 0.0, "b1", "zmt", res.f_original, res.f_gauged, 0, false});
    trials.push_back({{"trial", trial + 1},
                      {"gauge_cond", res.gauge_cond},
                      {"mus_original", mus_json(res.mus_original)},
                      {"mus_gauged", mus_json(res.mus_gauged)},
                      {"max_mu_difference", dmu},
                      {"f_original", res.f_original},
                      {"f_gauged", res.f_gauged},
                      {"f_relative_difference", df},
                      {"agree", ok}});
    std::cout << "trial " << (trial + 1) << ": cond " << res.gauge_cond
              << " max|dmu| " << dmu << " rel df " << df
              << (ok ? "" : "  [disagree]") << "\n";
  }
  write_csv(cfg.out_path, rows);
  nlohmann::json summary;
  summary["trials"] = trials;
  summary["agreeing_trials"] = agree;
  write_sidecar(cfg, summary, "ok");
  std::cout << "gauge-probe: " << agree << "/" << cfg.trials
            << " trials agree (mu 1e-6, f 1e-8)\n";
  return 0;
}

int run_grad_check(const RunConfig& cfg) {
  std::vector<CsvRow> rows;
  double worst = 0;
  int made = 0;
  std::uint64_t attempt = 0;
  const zmt::Rng root(cfg.seed);
  while (made < cfg.instances && attempt < 100 * static_cast<std::uint64_t>(cfg.instances)) {
    zmt::Rng rng = root.split(++attempt);
    // synthetic Gram environment
    const std::int64_t D = cfg.D, n = D * D;
    std::vector<double> x(static_cast<std::size_t>((n + 3) * n));
    for (auto& v : x) v = rng.uniform(-1.0, 1.0);
    std::vector<double> gm(static_cast<std::size_t>(n * n), 0.0);
    for (std::int64_t r = 0; r < n + 3; ++r)
      for (std::int64_t i = 0; i < n; ++i)
        for (std::int64_t j = 0; j < n; ++j)
          gm[i * n + j] += x[r * n + i] * x[r * n + j];
    zmt::BondEnvironment env;
    env.D = D;
    env.half_overlap = zmt::Tensor({"i", "j", "ip", "jp"}, {D, D, D, D}, gm);
    double tr = 0;
    for (std::int64_t r = 0; r < n; ++r) tr += gm[r * n + r];
    env.norm_scale = tr;
    env.min_eigenvalue = zmt::linalg::eig_sym(gm, n).values.front();

    const zmt::ModeBasis basis = zmt::lowest_modes(env, std::min<std::int64_t>(5, n), 1e-12);
    std::vector<double> alpha(basis.modes.size());
    double an = 0;
    for (auto& a : alpha) {
      a = rng.uniform(-1.0, 1.0);
      an += a * a;
    }
    for (auto& a : alpha) a /= std::sqrt(an);
    std::vector<double> Z(static_cast<std::size_t>(n), 0.0);
    for (std::size_t m = 0; m < alpha.size(); ++m)
      for (std::int64_t e = 0; e < n; ++e) Z[e] += alpha[m] * basis.modes[m][e];
    const auto eval = zmt::truncation_error(Z, env);
    if (!eval || eval->emax.defective) continue;
    const auto spec = zmt::linalg::eig_general(Z, D);
    const double E = std::abs(eval->emax.value_re);
    double radius = 0, second = 0;
    for (const auto& pr : spec) {
      radius = std::max(radius, std::hypot(pr.value_re, pr.value_im));
      if (pr.value_im == 0.0 && std::abs(std::abs(pr.value_re) - E) > 1e-10)
        second = std::max(second, std::abs(pr.value_re));
    }
    if (E < 0.3 * radius || second > 0.9 * E) continue;

    zmt::ZCandidate cand;
    cand.D = D;
    cand.alpha = alpha;
    cand.Z = Z;
    cand.emax = eval->emax;
    cand.f = eval->f;
    cand.N = eval->N;
    std::vector<double> gsub;
    const zmt::GradResult grad = zmt::gradient_subspace(cand, basis, env, &gsub);
    if (grad.status != zmt::GradStatus::ok) continue;
    ++made;
    const double h = 1e-6;
    double err = 0, scale = 0;
    for (std::size_t m = 0; m < alpha.size(); ++m) {
      auto ap = alpha, am = alpha;
      ap[m] += h;
      am[m] -= h;
      std::vector<double> zp(static_cast<std::size_t>(n), 0.0), zm(zp);
      for (std::size_t q = 0; q < alpha.size(); ++q)
        for (std::int64_t e = 0; e < n; ++e) {
          zp[e] += ap[q] * basis.modes[q][e];
          zm[e] += am[q] * basis.modes[q][e];
        }
      const auto fp = zmt::truncation_error(zp, env);
      const auto fm = zmt::truncation_error(zm, env);
      if (!fp || !fm) {
        err = 1;
        break;
      }
      const double fd = (fp->f - fm->f) / (2 * h);
      err = std::max(err, std::abs(gsub[m] - fd));
      scale = std::max(scale, std::abs(fd));
    }
    const double rel = err / std::max(scale, 1e-300);
    worst = std::max(worst, rel);
    rows.push_back({made, 0.0, "-", "zmt", rel, rel, 0, false});
  }
  write_csv(cfg.out_path, rows);
  nlohmann::json summary;
  summary["instances"] = made;
  summary["max_relative_error"] = worst;
  summary["threshold"] = 1e-5;
  const bool ok = made == cfg.instances && worst < 1e-5;
  write_sidecar(cfg, summary, ok ? "ok" : "failed");
  std::cout << "grad-check: " << made << " instances, max relative error " << worst
            << (ok ? " (ok)" : " (FAILED)") << "\n";
  return ok ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"zero-mode truncation for loopy tensor networks"};
  app.require_subcommand(1);
  RunConfig cfg;

  const char* out_dir_env = std::getenv("ZMT_OUT_DIR");
  const std::string out_dir = out_dir_env ? out_dir_env : ".";

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--kappa", cfg.kappa, "number of low metric modes")
        ->check(CLI::PositiveNumber);
    sub->add_option("--seed", cfg.seed, "64-bit fixture seed");
    sub->add_option("--out", cfg.out_path, "output CSV path");
    sub->set_config("--config", "", "key=value config file (flags override)");
  };

  CLI::App* toy = app.add_subcommand("toy", "reduce a virtual-loop fixture");
  toy->add_option("--D", cfg.D, "bond dimension before loop inflation")
      ->check(CLI::PositiveNumber);
  toy->add_option("--d", cfg.d, "virtual loop dimension")->check(CLI::PositiveNumber);
  toy->add_option("--phys", cfg.phys, "physical dimension per site")
      ->check(CLI::PositiveNumber);
  toy->add_option("--noise", cfg.noise, "uniform perturbation amplitude");
  toy->add_option("--f-tol", cfg.f_tol, "stop when the optimized f exceeds this");
  add_common(toy);

  CLI::App* evolve = app.add_subcommand("evolve", "imaginary-time evolution");
  evolve->add_option("--D", cfg.D, "bond dimension cap")->check(CLI::PositiveNumber);
  evolve->add_option("--g", cfg.g, "magnetic coupling");
  evolve->add_option("--dbeta", cfg.dbeta, "Trotter step")
      ->check(CLI::PositiveNumber);
  evolve->add_option("--beta-max", cfg.beta_max, "target inverse temperature")
      ->check(CLI::NonNegativeNumber);
  evolve->add_option("--method", cfg.method, "zmt or svd")
      ->check(CLI::IsMember({"zmt", "svd"}));
  evolve->add_option("--snapshot-every", cfg.snapshot_every,
                     "write tensor snapshots every N steps (0 = never)");
  add_common(evolve);

  CLI::App* compare = app.add_subcommand("compare", "paired zmt/svd evolution");
  compare->add_option("--D", cfg.D, "bond dimension cap")->check(CLI::PositiveNumber);
  compare->add_option("--g", cfg.g, "magnetic coupling");
  compare->add_option("--dbeta", cfg.dbeta, "Trotter step")
      ->check(CLI::PositiveNumber);
  compare->add_option("--beta-max", cfg.beta_max, "target inverse temperature")
      ->check(CLI::NonNegativeNumber);
  add_common(compare);

  CLI::App* gauge = app.add_subcommand("gauge-probe",
                                       "gauge invariance of the truncated spectrum");
  cfg.D = 1;
  cfg.d = 3;
  cfg.noise = 0.1;
  cfg.kappa = 9;
  gauge->add_option("--D", cfg.D, "bond dimension before loop inflation")
      ->check(CLI::PositiveNumber);
  gauge->add_option("--d", cfg.d, "virtual loop dimension")->check(CLI::PositiveNumber);
  gauge->add_option("--noise", cfg.noise, "uniform perturbation amplitude");
  gauge->add_option("--trials", cfg.trials, "number of random gauges")
      ->check(CLI::PositiveNumber);
  add_common(gauge);

  CLI::App* grad = app.add_subcommand("grad-check",
                                      "subspace gradient vs finite differences");
  grad->add_option("--D", cfg.D, "bond dimension of the synthetic metric")
      ->check(CLI::PositiveNumber);
  grad->add_option("--instances", cfg.instances, "number of random instances")
      ->check(CLI::PositiveNumber);
  add_common(grad);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2; // exit 2 on any usage error, 0 for --help
  }

  CLI::App* sub = app.get_subcommands().front();
  cfg.command = sub->get_name();

  // the odd-kappa rule: even values are rounded up with a warning
  if (cfg.kappa % 2 == 0) {
    std::cerr << "warning: --kappa " << cfg.kappa << " is even; using "
              << (cfg.kappa + 1) << "\n";
    ++cfg.kappa;
  }
  if (cfg.command == "evolve" || cfg.command == "compare") {
    const double ratio = cfg.beta_max / cfg.dbeta;
    if (std::abs(ratio - std::llround(ratio)) > 1e-9) {
      std::cerr << "error: --beta-max must be a multiple of --dbeta\n";
      return 2;
    }
  }
  if (cfg.out_path.empty())
    cfg.out_path = (std::filesystem::path(out_dir) / ("zmt_" + cfg.command + ".csv"))
                       .string();

  echo_config(cfg);
  try {
    if (cfg.command == "toy") return run_toy(cfg);
    if (cfg.command == "evolve") return run_evolve(cfg);
    if (cfg.command == "compare") return run_compare(cfg);
    if (cfg.command == "gauge-probe") return run_gauge_probe(cfg);
    return run_grad_check(cfg);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    try {
      write_sidecar(cfg, {{"error", e.what()}}, "numerical-failure");
    } catch (...) {
    }
    return 1;
  }
}
