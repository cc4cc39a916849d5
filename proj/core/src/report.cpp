#include "ecw/report.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace ecw::io {

using ordered_json = nlohmann::ordered_json;

namespace {

std::string fmt_double(double v) {
  char buf[40];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 17);
  return std::string(buf, ptr);
}

std::vector<double> matrix_to_flat(const Mat& m) {
  std::vector<double> flat(static_cast<std::size_t>(m.rows() * m.cols()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      flat[static_cast<std::size_t>(i * m.cols() + j)] = m(i, j);
  return flat;
}

void write_text(const std::string& text, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << text;
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace

std::string report_to_json(const SolveReport& r) {
  ordered_json j;
  j["version"] = kVersion;
  j["method"] = r.method;
  j["seed"] = r.seed;
  j["converged"] = r.converged;
  j["iterations"] = r.iterations;
  j["energies"] = r.energies;
  j["q"] = r.q;
  j["residuals"] = ordered_json::array();
  for (const auto& e : r.residuals) {
    ordered_json ej;
    ej["property"] = e.property_id;
    ej["bra"] = e.bra;
    ej["ket"] = e.ket;
    ej["target"] = e.target;
    ej["calc"] = e.calc;
    ej["sigma"] = e.sigma;
    ej["weight"] = e.weight;
    ej["loss"] = e.loss;
    ej["residual"] = e.residual;
    j["residuals"].push_back(std::move(ej));
  }
  j["pair_overlaps"] = ordered_json::array();
  for (const auto& p : r.pair_overlaps)
    j["pair_overlaps"].push_back(ordered_json{{"bra", p.bra}, {"ket", p.ket}, {"value", p.value}});
  j["events"] = r.events;
  j["diagnostics"] = ordered_json::object();
  for (const auto& [k, v] : r.diagnostics) j["diagnostics"][k] = v;
  j["trace"] = ordered_json::array();
  for (const auto& t : r.trace)
    j["trace"].push_back(ordered_json::array({t.iter, t.state, t.energy, t.q, t.max_residual}));
  return j.dump(2) + "\n";
}

void write_report_json(const SolveReport& r, const std::string& path) {
  write_text(report_to_json(r), path);
}

std::string trace_to_csv(const SolveReport& r) {
  std::ostringstream out;
  out << "iter,state,energy,Q,max_residual\n";
  for (const auto& t : r.trace)
    out << t.iter << "," << t.state << "," << fmt_double(t.energy) << "," << fmt_double(t.q) << ","
        << fmt_double(t.max_residual) << "\n";
  return out.str();
}

void write_trace_csv(const SolveReport& r, const std::string& path) {
  write_text(trace_to_csv(r), path);
}

void write_densities_json(const SolveReport& r, const std::string& path) {
  ordered_json j;
  j["version"] = kVersion;
  j["states"] = ordered_json::array();
  for (std::size_t n = 0; n < r.densities.size(); ++n) {
    ordered_json sj;
    sj["state"] = n;
    sj["dim"] = r.densities[n].rows();
    sj["gamma"] = matrix_to_flat(r.densities[n]);
    j["states"].push_back(std::move(sj));
  }
  write_text(j.dump(2) + "\n", path);
}

void attach_residuals(SolveReport& r, const constraints::ConstraintSet& cs,
                      const constraints::CalcMap& calc, const constraints::OverlapMap& overlaps) {
  r.residuals.clear();
  for (const auto& d : cs.data) {
    ResidualEntry e;
    e.property_id = d.property_id;
    e.bra = d.bra;
    e.ket = d.ket;
    e.target = d.value;
    e.calc = constraints::fitted_value(d, calc);
    e.sigma = d.sigma;
    e.weight = d.weight;
    e.loss = constraints::to_string(d.loss);
    e.residual = (e.calc - e.target) / e.sigma;
    r.residuals.push_back(std::move(e));
  }
  r.pair_overlaps.clear();
  for (const auto& [pair, v] : overlaps)
    if (pair.first != pair.second) r.pair_overlaps.push_back({pair.first, pair.second, v});
  r.q = constraints::eval_Q(calc, cs, overlaps);
}

}  // namespace ecw::io
