#include "ecw/json_io.hpp"

#include <fstream>
#include <set>

#include <json.hpp>

namespace ecw::io {

using ordered_json = nlohmann::ordered_json;

namespace {

ordered_json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open: " + path);
  ordered_json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  return j;
}

void dump_json(const ordered_json& j, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << j.dump(2) << "\n";
  if (!out) throw IoError("write failed: " + path);
}

Mat matrix_from_flat(const std::vector<double>& flat, const std::string& what) {
  const auto n = static_cast<Eigen::Index>(std::llround(std::sqrt(double(flat.size()))));
  if (n * n != static_cast<Eigen::Index>(flat.size()))
    throw ValidationError(what + ": matrix list length " + std::to_string(flat.size()) +
                          " is not a perfect square");
  Mat m(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) m(i, j) = flat[static_cast<std::size_t>(i * n + j)];
  return m;
}

std::vector<double> matrix_to_flat(const Mat& m) {
  std::vector<double> flat(static_cast<std::size_t>(m.rows() * m.cols()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      flat[static_cast<std::size_t>(i * m.cols() + j)] = m(i, j);
  return flat;
}

}  // namespace

PropertyFile load_properties(const std::string& path, int n_spin_orbitals) {
  const auto j = load_json(path);
  if (!j.contains("properties") || !j["properties"].is_array())
    throw ParseError(path + ": missing 'properties' array");
  PropertyFile pf;
  std::set<std::string> ids;
  for (const auto& pj : j["properties"]) {
    PropertyOperator p;
    p.id = pj.at("id").get<std::string>();
    if (!ids.insert(p.id).second) throw ValidationError(path + ": duplicate property id '" + p.id + "'");
    p.kind = property_kind_from_string(pj.value("kind", std::string("custom")));
    p.hermitian = pj.value("hermitian", true);
    if (p.kind != PropertyKind::custom) p.hermitian = true;  // named kinds are observables
    p.a = matrix_from_flat(pj.at("matrix").get<std::vector<double>>(), "property '" + p.id + "'");
    if (p.a.rows() != n_spin_orbitals)
      throw ValidationError("property '" + p.id + "': matrix is " + std::to_string(p.a.rows()) +
                            "x" + std::to_string(p.a.cols()) + " but the Hamiltonian has " +
                            std::to_string(n_spin_orbitals) + " spin-orbitals");
    if (p.hermitian && (p.a - p.a.adjoint()).cwiseAbs().maxCoeff() > 1e-12)
      throw ValidationError("property '" + p.id + "': flagged hermitian but is not (to 1e-12)");
    pf.properties.push_back(std::move(p));
  }
  if (j.contains("overlap")) {
    Mat s = matrix_from_flat(j["overlap"].get<std::vector<double>>(), "overlap");
    if (s.rows() != n_spin_orbitals)
      throw ValidationError("overlap: dimension mismatch with Hamiltonian");
    pf.overlap = std::move(s);
  }
  return pf;
}

void save_properties(const PropertyFile& pf, const std::string& path) {
  ordered_json j;
  j["properties"] = ordered_json::array();
  for (const auto& p : pf.properties) {
    ordered_json pj;
    pj["id"] = p.id;
    pj["kind"] = to_string(p.kind);
    pj["hermitian"] = p.hermitian;
    pj["matrix"] = matrix_to_flat(p.a);
    j["properties"].push_back(std::move(pj));
  }
  if (pf.overlap) j["overlap"] = matrix_to_flat(*pf.overlap);
  dump_json(j, path);
}

constraints::ConstraintSet load_experiment(const std::string& path) {
  const auto j = load_json(path);
  constraints::ConstraintSet cs;
  cs.ortho_weight = j.value("ortho_weight", 0.0);
  if (j.contains("data")) {
    if (!j["data"].is_array()) throw ParseError(path + ": 'data' must be an array");
    for (const auto& dj : j["data"]) {
      constraints::ExperimentalDatum d;
      d.property_id = dj.at("property").get<std::string>();
      d.bra = dj.at("bra").get<int>();
      d.ket = dj.at("ket").get<int>();
      d.value = dj.at("value").get<double>();
      d.sigma = dj.at("sigma").get<double>();
      d.loss = constraints::loss_from_string(dj.value("loss", std::string("l2")));
      d.weight = dj.at("weight").get<double>();
      cs.data.push_back(std::move(d));
    }
  }
  return cs;
}

void save_experiment(const constraints::ConstraintSet& cs, const std::string& path) {
  ordered_json j;
  j["ortho_weight"] = cs.ortho_weight;
  j["data"] = ordered_json::array();
  for (const auto& d : cs.data) {
    ordered_json dj;
    dj["property"] = d.property_id;
    dj["bra"] = d.bra;
    dj["ket"] = d.ket;
    dj["value"] = d.value;
    dj["sigma"] = d.sigma;
    dj["loss"] = constraints::to_string(d.loss);
    dj["weight"] = d.weight;
    j["data"].push_back(std::move(dj));
  }
  dump_json(j, path);
}

}  // namespace ecw::io
