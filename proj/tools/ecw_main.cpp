#include <CLI11.hpp>

#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <optional>
#include <sstream>

#include <json.hpp>

#include "ecw/cc.hpp"
#include "ecw/constraints.hpp"
#include "ecw/detspace.hpp"
#include "ecw/hamiltonian.hpp"
#include "ecw/hf.hpp"
#include "ecw/json_io.hpp"
#include "ecw/oracle.hpp"
#include "ecw/report.hpp"

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInputError = 1;
constexpr int kExitNotConverged = 2;

std::string fmt_double(double v) {
  char buf[40];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 17);
  return std::string(buf, ptr);
}

struct CliOptions {
  std::string config_path;
  std::string out_override;
  std::optional<std::uint64_t> seed_override;
  bool quiet = false;
};

struct LoadedProblem {
  ordered_json cfg;
  fs::path base;  // config directory, for relative paths
  ecw::Hamiltonian H;
  std::vector<ecw::PropertyOperator> properties;
  ecw::constraints::ConstraintSet experiment;
  std::string method;
  int n_states = 1;
  std::uint64_t seed = 0;
  fs::path out_dir;
};

ordered_json read_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ecw::IoError("cannot open config: " + path);
  ordered_json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ecw::ParseError(std::string("config: ") + e.what());
  }
  return j;
}

fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path fp(p);
  return fp.is_absolute() ? fp : base / fp;
}

ecw::hf::ScfConfig parse_scf(const ordered_json& cfg, std::uint64_t seed) {
  ecw::hf::ScfConfig sc;
  sc.seed = seed;
  if (cfg.contains("scf")) {
    const auto& j = cfg["scf"];
    sc.max_iter = j.value("max_iter", sc.max_iter);
    sc.energy_tol = j.value("energy_tol", sc.energy_tol);
    sc.density_tol = j.value("density_tol", sc.density_tol);
    sc.damping = j.value("damping", sc.damping);
    sc.diis_depth = j.value("diis_depth", sc.diis_depth);
    if (j.contains("occupied_selection"))
      sc.occupied_selection =
          ecw::hf::occupied_selection_from_string(j["occupied_selection"].get<std::string>());
  }
  if (cfg.contains("lambda") && cfg["lambda"].contains("schedule"))
    sc.lambda_schedule = cfg["lambda"]["schedule"].get<std::vector<double>>();
  return sc;
}

ecw::cc::CcConfig parse_cc(const ordered_json& cfg, std::uint64_t seed) {
  ecw::cc::CcConfig cc;
  cc.seed = seed;
  if (cfg.contains("cc")) {
    const auto& j = cfg["cc"];
    cc.tol = j.value("tol", cc.tol);
    cc.max_outer = j.value("max_outer", cc.max_outer);
    cc.max_inner = j.value("max_inner", cc.max_inner);
    cc.level_shift = j.value("level_shift", cc.level_shift);
    cc.root_overlap_min = j.value("root_overlap_min", cc.root_overlap_min);
    if (j.contains("vexp_sign"))
      cc.vexp_sign = ecw::cc::vexp_sign_from_string(j["vexp_sign"].get<std::string>());
  }
  if (cfg.contains("lambda") && cfg["lambda"].contains("schedule"))
    cc.lambda_schedule = cfg["lambda"]["schedule"].get<std::vector<double>>();
  return cc;
}

ecw::oracle::MinimizeOptions parse_oracle(const ordered_json& cfg, std::uint64_t seed) {
  ecw::oracle::MinimizeOptions op;
  op.seed = seed;
  if (cfg.contains("oracle")) {
    const auto& j = cfg["oracle"];
    op.max_outer = j.value("max_outer", op.max_outer);
    op.max_inner = j.value("max_inner", op.max_inner);
    op.grad_tol = j.value("grad_tol", op.grad_tol);
    op.initial_perturbation = j.value("initial_perturbation", op.initial_perturbation);
  }
  return op;
}

LoadedProblem load_problem(const CliOptions& cli, bool need_experiment) {
  LoadedProblem lp;
  lp.cfg = read_config(cli.config_path);
  lp.base = fs::path(cli.config_path).parent_path();

  if (!lp.cfg.contains("fcidump")) throw ecw::ValidationError("config: missing key 'fcidump'");
  const fs::path fcidump = resolve(lp.base, lp.cfg["fcidump"].get<std::string>());
  if (!fs::exists(fcidump))
    throw ecw::IoError("config key 'fcidump': file not found: " + fcidump.string());
  lp.H = ecw::to_spin_orbital(ecw::parse_fcidump_file(fcidump.string()));

  if (lp.cfg.contains("properties")) {
    const fs::path props = resolve(lp.base, lp.cfg["properties"].get<std::string>());
    if (!fs::exists(props))
      throw ecw::IoError("config key 'properties': file not found: " + props.string());
    auto pf = ecw::io::load_properties(props.string(), lp.H.n_spin_orbitals);
    lp.properties = std::move(pf.properties);
    if (pf.overlap) lp.H.s = *pf.overlap;
  }

  if (lp.cfg.contains("experiment")) {
    const fs::path exp = resolve(lp.base, lp.cfg["experiment"].get<std::string>());
    if (!fs::exists(exp))
      throw ecw::IoError("config key 'experiment': file not found: " + exp.string());
    lp.experiment = ecw::io::load_experiment(exp.string());
  } else if (need_experiment) {
    throw ecw::ValidationError("config: missing key 'experiment'");
  }

  lp.method = lp.cfg.value("method", std::string("hf"));
  if (lp.method != "hf" && lp.method != "cc" && lp.method != "oracle")
    throw ecw::ValidationError("config key 'method': expected hf|cc|oracle, got '" + lp.method + "'");
  lp.n_states = lp.cfg.value("n_states", 1);
  if (lp.n_states < 1) throw ecw::ValidationError("config key 'n_states' must be >= 1");
  lp.seed = cli.seed_override ? *cli.seed_override : lp.cfg.value("seed", 0ull);

  std::string out = cli.out_override.empty() ? lp.cfg.value("out", std::string("out"))
                                             : cli.out_override;
  lp.out_dir = resolve(lp.base, out);
  return lp;
}

void write_solver_outputs(const ecw::io::SolveReport& report, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  ecw::io::write_report_json(report, (out_dir / "report.json").string());
  ecw::io::write_trace_csv(report, (out_dir / "trace.csv").string());
  ecw::io::write_densities_json(report, (out_dir / "densities.json").string());
}

ecw::io::SolveReport oracle_report(const ecw::oracle::ConstrainedResult& r,
                                   const ecw::constraints::ConstraintSet& cs,
                                   std::uint64_t seed) {
  ecw::io::SolveReport rep;
  rep.method = "oracle";
  rep.seed = seed;
  rep.converged = r.converged;
  rep.iterations = r.outer_cycles;
  for (const auto& st : r.states) rep.energies.push_back(st.energy);
  ecw::io::attach_residuals(rep, cs, r.calc, r.overlaps);
  for (std::size_t n = 0; n < r.states.size(); ++n)
    rep.diagnostics["grad_norm_" + std::to_string(n)] = r.states[n].grad_norm;
  return rep;
}

int run_solver(const LoadedProblem& lp, const CliOptions& cli,
               ecw::io::SolveReport& report_out) {
  if (lp.method == "hf") {
    const auto sc = parse_scf(lp.cfg, lp.seed);
    const auto res = ecw::hf::scf_solve(lp.H, lp.properties, lp.experiment, lp.n_states, sc);
    report_out = res.report;
  } else if (lp.method == "cc") {
    const auto cc = parse_cc(lp.cfg, lp.seed);
    const auto sc = parse_scf(lp.cfg, lp.seed);
    const auto res = ecw::cc::cc_solve(lp.H, lp.properties, lp.experiment, lp.n_states, cc, sc);
    report_out = res.report;
  } else {
    const auto op = parse_oracle(lp.cfg, lp.seed);
    const std::string manifold =
        lp.cfg.contains("oracle") ? lp.cfg["oracle"].value("manifold", std::string("ci")) : "ci";
    if (manifold == "slater") {
      const auto r = ecw::oracle::constrained_slater_minimize(lp.H, lp.properties, lp.experiment,
                                                              lp.n_states, op);
      ecw::io::SolveReport rep;
      rep.method = "oracle";
      rep.seed = lp.seed;
      rep.converged = r.converged;
      rep.iterations = r.outer_cycles;
      rep.energies = r.energies;
      ecw::io::attach_residuals(rep, lp.experiment, r.calc, r.overlaps);
      report_out = rep;
    } else if (manifold == "ci") {
      const auto space =
          ecw::det::DetSpace::full(lp.H.n_spin_orbitals, lp.H.n_electrons());
      const auto r = ecw::oracle::constrained_fci_minimize(space, lp.H, lp.properties,
                                                           lp.experiment, lp.n_states, op);
      report_out = oracle_report(r, lp.experiment, lp.seed);
    } else {
      throw ecw::ValidationError("config key 'oracle.manifold': expected ci|slater");
    }
  }
  write_solver_outputs(report_out, lp.out_dir);
  if (!cli.quiet) {
    std::cout << "method=" << lp.method << " converged=" << (report_out.converged ? "yes" : "no")
              << " Q=" << fmt_double(report_out.q) << " energies=[";
    for (std::size_t i = 0; i < report_out.energies.size(); ++i)
      std::cout << (i ? ", " : "") << fmt_double(report_out.energies[i]);
    std::cout << "]\n  report: " << (lp.out_dir / "report.json").string() << "\n";
  }
  return report_out.converged ? kExitOk : kExitNotConverged;
}

int cmd_run(const CliOptions& cli) {
  const auto lp = load_problem(cli, false);
  ecw::io::SolveReport rep;
  return run_solver(lp, cli, rep);
}

int cmd_gen(const CliOptions& cli) {
  const auto lp = load_problem(cli, false);
  if (!lp.cfg.contains("gen")) throw ecw::ValidationError("config: missing 'gen' section");
  const auto& g = lp.cfg["gen"];
  std::vector<ecw::constraints::SynthesisRequest> requests;
  if (!g.contains("requests") || !g["requests"].is_array())
    throw ecw::ValidationError("config key 'gen.requests' must be an array");
  for (const auto& rj : g["requests"]) {
    ecw::constraints::SynthesisRequest r;
    r.property_id = rj.at("property").get<std::string>();
    r.bra = rj.at("bra").get<int>();
    r.ket = rj.at("ket").get<int>();
    r.sigma = rj.value("sigma", 1.0);
    r.weight = rj.value("weight", 1.0);
    r.loss = ecw::constraints::loss_from_string(rj.value("loss", std::string("l2")));
    requests.push_back(std::move(r));
  }
  const std::string noise_s = g.value("noise", std::string("none"));
  ecw::constraints::NoiseModel noise;
  if (noise_s == "none")
    noise = ecw::constraints::NoiseModel::none;
  else if (noise_s == "gaussian")
    noise = ecw::constraints::NoiseModel::gaussian;
  else
    throw ecw::ValidationError("config key 'gen.noise': expected none|gaussian");
  const double ortho = g.value("ortho_weight", 0.0);

  const auto cs =
      ecw::constraints::synthesize_experiment(lp.H, lp.properties, requests, noise, lp.seed, ortho);
  fs::create_directories(lp.out_dir);
  const fs::path out = lp.out_dir / "experiment.json";
  ecw::io::save_experiment(cs, out.string());
  if (!cli.quiet) std::cout << "wrote " << out.string() << " (" << cs.data.size() << " data)\n";
  return kExitOk;
}

struct ScanRow {
  double scale = 0.0;
  double q = 0.0;
  double e0 = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<double> residuals;
};

void write_scan_csv(const std::vector<ScanRow>& rows,
                    const ecw::constraints::ConstraintSet& cs, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw ecw::IoError("cannot open for writing: " + path.string());
  out << "scale,Q,E0,iterations,converged";
  for (const auto& d : cs.data)
    out << ",resid_" << d.property_id << "_" << d.bra << "_" << d.ket;
  out << "\n";
  for (const auto& r : rows) {
    out << fmt_double(r.scale) << "," << fmt_double(r.q) << "," << fmt_double(r.e0) << ","
        << r.iterations << "," << (r.converged ? 1 : 0);
    for (double v : r.residuals) out << "," << fmt_double(v);
    out << "\n";
  }
}

// minimal self-contained line chart
void write_scan_svg(const std::vector<ScanRow>& rows, const fs::path& path) {
  const int w = 640, h = 400, margin = 60;
  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (const auto& r : rows) {
    xmin = std::min(xmin, r.scale);
    xmax = std::max(xmax, r.scale);
    ymin = std::min(ymin, r.q);
    ymax = std::max(ymax, r.q);
  }
  if (xmax <= xmin) xmax = xmin + 1;
  if (ymax <= ymin) ymax = ymin + 1;
  auto px = [&](double x) { return margin + (x - xmin) / (xmax - xmin) * (w - 2 * margin); };
  auto py = [&](double y) { return h - margin - (y - ymin) / (ymax - ymin) * (h - 2 * margin); };
  std::ofstream out(path);
  if (!out) throw ecw::IoError("cannot open for writing: " + path.string());
  out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << w << "' height='" << h << "'>\n";
  out << "<rect width='100%' height='100%' fill='white'/>\n";
  out << "<line x1='" << margin << "' y1='" << h - margin << "' x2='" << w - margin << "' y2='"
      << h - margin << "' stroke='black'/>\n";
  out << "<line x1='" << margin << "' y1='" << margin << "' x2='" << margin << "' y2='"
      << h - margin << "' stroke='black'/>\n";
  out << "<text x='" << w / 2 << "' y='" << h - 15 << "' text-anchor='middle'>weight scale</text>\n";
  out << "<text x='15' y='" << h / 2 << "' transform='rotate(-90 15 " << h / 2
      << ")' text-anchor='middle'>Q</text>\n";
  out << "<polyline fill='none' stroke='steelblue' stroke-width='2' points='";
  for (const auto& r : rows) out << px(r.scale) << "," << py(r.q) << " ";
  out << "'/>\n";
  for (const auto& r : rows)
    out << "<circle cx='" << px(r.scale) << "' cy='" << py(r.q)
        << "' r='3' fill='" << (r.converged ? "steelblue" : "crimson") << "'/>\n";
  out << "</svg>\n";
}

int cmd_scan(const CliOptions& cli, const std::vector<double>& grid_flag, bool plot_flag) {
  const auto lp = load_problem(cli, true);
  std::vector<double> grid = grid_flag;
  bool plot = plot_flag;
  bool warm_start = true;
  bool parallel = false;
  if (lp.cfg.contains("scan")) {
    const auto& sj = lp.cfg["scan"];
    if (grid.empty() && sj.contains("grid")) grid = sj["grid"].get<std::vector<double>>();
    plot = plot || sj.value("plot", false);
    warm_start = sj.value("warm_start", true);
    parallel = sj.value("parallel", false);
  }
  if (grid.empty()) throw ecw::ValidationError("scan: no grid given (config key 'scan.grid')");

  auto solve_point = [&](double scale, const ecw::hf::ScfResult* warm_hf,
                         const ecw::cc::CcResult* warm_cc) {
    ecw::constraints::ConstraintSet scaled = lp.experiment;
    for (auto& d : scaled.data) d.weight *= scale;
    scaled.ortho_weight *= scale;
    ScanRow row;
    row.scale = scale;
    ecw::io::SolveReport rep;
    ecw::hf::ScfResult hf_res;
    ecw::cc::CcResult cc_res;
    if (lp.method == "cc") {
      auto cc = parse_cc(lp.cfg, lp.seed);
      cc.lambda_schedule = {1.0};  // the scan supplies the ramp
      hf_res = {};
      cc_res = ecw::cc::cc_solve(lp.H, lp.properties, scaled, lp.n_states, cc,
                                 parse_scf(lp.cfg, lp.seed), warm_cc);
      rep = cc_res.report;
    } else {
      auto sc = parse_scf(lp.cfg, lp.seed);
      sc.lambda_schedule = {1.0};
      hf_res = ecw::hf::scf_solve(lp.H, lp.properties, scaled, lp.n_states, sc,
                                  warm_hf && !warm_hf->states.empty() ? &warm_hf->states : nullptr);
      rep = hf_res.report;
    }
    // Q and residuals at the experiment's stated weights
    double q_unit = 0.0;
    std::vector<double> residuals;
    {
      ecw::constraints::CalcMap calc;
      ecw::constraints::OverlapMap ovl;
      if (lp.method == "cc") {
        calc = cc_res.calc;
      } else {
        calc = hf_res.calc;
        ovl = hf_res.overlaps;
      }
      q_unit = ecw::constraints::eval_Q(calc, lp.experiment, ovl);
      for (const auto& d : lp.experiment.data)
        residuals.push_back((ecw::constraints::fitted_value(d, calc) - d.value) / d.sigma);
    }
    row.q = q_unit;
    row.e0 = rep.energies.empty() ? 0.0 : rep.energies[0];
    row.iterations = rep.iterations;
    row.converged = rep.converged;
    row.residuals = std::move(residuals);
    return std::tuple(row, hf_res, cc_res);
  };

  std::vector<ScanRow> rows;
  if (parallel && !warm_start) {
    int max_workers = 4;
    if (const char* env = std::getenv("ECW_THREADS")) max_workers = std::max(1, std::atoi(env));
    std::vector<std::future<std::tuple<ScanRow, ecw::hf::ScfResult, ecw::cc::CcResult>>> futs;
    rows.resize(grid.size());
    for (std::size_t i = 0; i < grid.size(); i += static_cast<std::size_t>(max_workers)) {
      const std::size_t hi = std::min(grid.size(), i + static_cast<std::size_t>(max_workers));
      futs.clear();
      for (std::size_t k = i; k < hi; ++k)
        futs.push_back(std::async(std::launch::async,
                                  [&, k] { return solve_point(grid[k], nullptr, nullptr); }));
      for (std::size_t k = i; k < hi; ++k) rows[k] = std::get<0>(futs[k - i].get());
    }
  } else {
    ecw::hf::ScfResult warm_hf;
    ecw::cc::CcResult warm_cc;
    bool have_warm = false;
    for (double s : grid) {
      auto [row, hf_res, cc_res] =
          solve_point(s, warm_start && have_warm ? &warm_hf : nullptr,
                      warm_start && have_warm ? &warm_cc : nullptr);
      rows.push_back(row);
      warm_hf = std::move(hf_res);
      warm_cc = std::move(cc_res);
      have_warm = true;
    }
  }

  fs::create_directories(lp.out_dir);
  write_scan_csv(rows, lp.experiment, lp.out_dir / "scan.csv");
  if (plot) write_scan_svg(rows, lp.out_dir / "scan_q.svg");
  bool all_converged = true;
  for (const auto& r : rows) all_converged = all_converged && r.converged;
  if (!cli.quiet) {
    std::cout << "scan: " << rows.size() << " points -> "
              << (lp.out_dir / "scan.csv").string() << "\n";
    if (!all_converged) std::cout << "scan: some points did not converge (flagged in csv)\n";
  }
  return all_converged ? kExitOk : kExitNotConverged;
}

int cmd_validate(const CliOptions& cli) {
  const auto lp = load_problem(cli, false);
  const auto space = ecw::det::DetSpace::full(lp.H.n_spin_orbitals, lp.H.n_electrons());
  const auto op = parse_oracle(lp.cfg, lp.seed);
  const auto oracle_res = ecw::oracle::constrained_fci_minimize(space, lp.H, lp.properties,
                                                                lp.experiment, lp.n_states, op);

  ecw::io::SolveReport rep;
  int rc = kExitOk;
  ordered_json j;
  j["version"] = ecw::io::kVersion;
  j["method"] = lp.method;
  j["oracle_energies"] = ordered_json::array();
  for (const auto& st : oracle_res.states) j["oracle_energies"].push_back(st.energy);
  j["oracle_q"] = oracle_res.q;

  if (lp.method == "hf") {
    const auto res =
        ecw::hf::scf_solve(lp.H, lp.properties, lp.experiment, lp.n_states, parse_scf(lp.cfg, lp.seed));
    rep = res.report;
  } else if (lp.method == "cc") {
    const auto res = ecw::cc::cc_solve(lp.H, lp.properties, lp.experiment, lp.n_states,
                                       parse_cc(lp.cfg, lp.seed), parse_scf(lp.cfg, lp.seed));
    rep = res.report;
  } else {
    throw ecw::ValidationError("validate: method must be hf or cc");
  }

  j["energies"] = rep.energies;
  j["q"] = rep.q;
  ordered_json gaps = ordered_json::array();
  double max_gap = 0.0;
  for (std::size_t n = 0; n < rep.energies.size() && n < oracle_res.states.size(); ++n) {
    const double gap = std::abs(rep.energies[n] - oracle_res.states[n].energy);
    gaps.push_back(gap);
    max_gap = std::max(max_gap, gap);
  }
  j["energy_gaps"] = gaps;
  j["q_gap"] = std::abs(rep.q - oracle_res.q);
  j["max_energy_gap"] = max_gap;

  fs::create_directories(lp.out_dir);
  std::ofstream out(lp.out_dir / "validate.json");
  out << j.dump(2) << "\n";
  if (!cli.quiet) {
    std::cout << "validate: method=" << lp.method << " max_energy_gap=" << fmt_double(max_gap)
              << " q_gap=" << fmt_double(std::abs(rep.q - oracle_res.q)) << "\n";
  }
  if (lp.method == "cc" && lp.H.n_electrons() == 2)
    rc = (max_gap < 1e-6 && std::abs(rep.q - oracle_res.q) < 1e-6) ? kExitOk : kExitNotConverged;
  return rc;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ecw - constrained ground/excited-state wavefunction solvers"};
  app.require_subcommand(1);

  CliOptions cli;
  std::vector<double> scan_grid;
  bool scan_plot = false;

  auto add_common = [&](CLI::App* sub, bool config_required = true) {
    auto* opt = sub->add_option("--config", cli.config_path, "path to config.json");
    if (config_required) opt->required();
    sub->add_option("--out", cli.out_override, "output directory (overrides config)");
    sub->add_option("--seed", cli.seed_override, "seed override");
    sub->add_flag("--quiet", cli.quiet, "suppress stdout summaries");
  };

  auto* run = app.add_subcommand("run", "run a solver and write report/trace/densities");
  add_common(run);
  auto* gen = app.add_subcommand("gen", "generate a synthetic experiment file");
  add_common(gen);
  auto* scan = app.add_subcommand("scan", "sweep a global scale over all constraint weights");
  add_common(scan);
  scan->add_option("--grid", scan_grid, "weight scale factors (overrides config scan.grid)");
  scan->add_flag("--plot", scan_plot, "emit scan_q.svg");
  auto* validate = app.add_subcommand("validate", "compare a solver against the brute-force oracle");
  add_common(validate);

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return cmd_run(cli);
    if (gen->parsed()) return cmd_gen(cli);
    if (scan->parsed()) return cmd_scan(cli, scan_grid, scan_plot);
    if (validate->parsed()) return cmd_validate(cli);
  } catch (const ecw::ConvergenceError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNotConverged;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInputError;
  }
  return kExitInputError;
}
