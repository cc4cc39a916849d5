#include "ecw/constraints.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "ecw/detspace.hpp"

namespace ecw::constraints {

Loss loss_from_string(const std::string& s) {
  if (s == "l2" || s == "L2") return Loss::L2;
  if (s == "l1" || s == "L1") return Loss::L1;
  throw ValidationError("unknown loss: " + s);
}

std::string to_string(Loss l) { return l == Loss::L2 ? "l2" : "l1"; }

void ConstraintSet::validate(int n_states) const {
  if (ortho_weight < 0) throw ValidationError("ortho_weight must be >= 0");
  std::set<CalcKey> seen;
  for (const auto& d : data) {
    if (d.sigma <= 0)
      throw ValidationError("datum '" + d.property_id + "': sigma must be > 0");
    if (d.weight < 0)
      throw ValidationError("datum '" + d.property_id + "': weight must be >= 0");
    if (d.bra < 0 || d.bra >= n_states || d.ket < 0 || d.ket >= n_states)
      throw ValidationError("datum '" + d.property_id + "': state pair (" +
                            std::to_string(d.bra) + "," + std::to_string(d.ket) +
                            ") outside 0.." + std::to_string(n_states - 1));
    const CalcKey key{d.property_id, {d.bra, d.ket}};
    if (!seen.insert(key).second)
      throw ValidationError("duplicate datum for property '" + d.property_id + "' pair (" +
                            std::to_string(d.bra) + "," + std::to_string(d.ket) + ")");
  }
}

namespace {

double calc_at(const CalcMap& calc, const std::string& id, int n, int m) {
  const auto it = calc.find({id, {n, m}});
  if (it == calc.end())
    throw ValidationError("missing calculated value for property '" + id + "' pair (" +
                          std::to_string(n) + "," + std::to_string(m) + ")");
  return it->second;
}

double loss_value(Loss l, double r) { return l == Loss::L2 ? r * r : std::abs(r); }

// derivative of rho(r) with respect to r; L1 subgradient at 0 is 0
double loss_derivative(Loss l, double r) {
  if (l == Loss::L2) return 2.0 * r;
  return (r > 0) - (r < 0);
}

}  // namespace

double fitted_value(const ExperimentalDatum& d, const CalcMap& calc) {
  if (d.diagonal()) return calc_at(calc, d.property_id, d.bra, d.ket);
  return calc_at(calc, d.property_id, d.bra, d.ket) * calc_at(calc, d.property_id, d.ket, d.bra);
}

double eval_Q(const CalcMap& calc, const ConstraintSet& cs, const OverlapMap& overlaps) {
  double q = 0.0;
  for (const auto& d : cs.data) {
    const double r = (fitted_value(d, calc) - d.value) / d.sigma;
    q += d.weight * loss_value(d.loss, r);
  }
  if (cs.ortho_weight > 0) {
    for (const auto& [pair, ovl] : overlaps) {
      if (pair.first == pair.second) continue;
      q += cs.ortho_weight * ovl * ovl;
    }
  }
  return q;
}

double dQ_dA(const ExperimentalDatum& d, const CalcMap& calc, bool bra_ket_orientation) {
  const double fitted = fitted_value(d, calc);
  const double r = (fitted - d.value) / d.sigma;
  const double outer = d.weight * loss_derivative(d.loss, r) / d.sigma;
  if (d.diagonal()) return outer;
  // fitted = A(n,m) * A(m,n): chain rule picks up the opposite orientation
  const double partner = bra_ket_orientation ? calc_at(calc, d.property_id, d.ket, d.bra)
                                             : calc_at(calc, d.property_id, d.bra, d.ket);
  return outer * partner;
}

const PropertyOperator& find_property(const std::vector<PropertyOperator>& properties,
                                      const std::string& id) {
  for (const auto& p : properties)
    if (p.id == id) return p;
  throw ValidationError("unknown property id: " + id);
}

Mat build_vexp(std::pair<int, int> pair, const ConstraintSet& cs, const CalcMap& calc,
               const std::vector<PropertyOperator>& properties) {
  Mat v;
  for (const auto& d : cs.data) {
    double scale = 0.0;
    if (d.bra == pair.first && d.ket == pair.second) {
      scale = dQ_dA(d, calc, true);
    } else if (!d.diagonal() && d.bra == pair.second && d.ket == pair.first) {
      scale = dQ_dA(d, calc, false);
    } else {
      continue;
    }
    const auto& p = find_property(properties, d.property_id);
    if (v.size() == 0) v = Mat::Zero(p.a.rows(), p.a.cols());
    v += scale * p.a;
  }
  if (v.size() == 0 && !properties.empty())
    v = Mat::Zero(properties.front().a.rows(), properties.front().a.cols());
  return v;
}

NormalStream::NormalStream(std::uint64_t seed) : state_(seed ^ 0x9e3779b97f4a7c15ULL) {}

double NormalStream::next_uniform() {
  // splitmix64 step; avoids platform-dependent std::normal_distribution
  state_ += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state_;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  z ^= z >> 31;
  const double u = (static_cast<double>(z >> 11) + 0.5) * 0x1.0p-53;
  return u;
}

double NormalStream::next() {
  if (have_spare_) {
    have_spare_ = false;
    return spare_;
  }
  const double u1 = next_uniform();
  const double u2 = next_uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * M_PI * u2;
  spare_ = r * std::sin(theta);
  have_spare_ = true;
  return r * std::cos(theta);
}

ConstraintSet synthesize_experiment(const Hamiltonian& H,
                                    const std::vector<PropertyOperator>& properties,
                                    const std::vector<SynthesisRequest>& requests,
                                    NoiseModel noise, std::uint64_t seed, double ortho_weight) {
  int n_states = 0;
  for (const auto& r : requests) n_states = std::max({n_states, r.bra + 1, r.ket + 1});
  if (n_states == 0) return ConstraintSet{{}, ortho_weight};

  // full N-electron space so state indices agree with the constrained
  // solvers, which are not restricted to one spin sector
  const auto space = det::DetSpace::full(H.n_spin_orbitals, H.n_electrons());
  if (n_states > static_cast<int>(space.size()))
    throw ValidationError("synthesize_experiment: pair index requires " + std::to_string(n_states) +
                          " states but the space holds only " + std::to_string(space.size()));
  const auto fci = det::fci_solve(space, H, n_states);

  auto element = [&](const PropertyOperator& p, int n, int m) {
    return fci.states[n].dot(det::apply_one_body(space, p.a, fci.states[m]));
  };

  NormalStream rng(seed);
  ConstraintSet cs;
  cs.ortho_weight = ortho_weight;
  for (const auto& r : requests) {
    const auto& p = find_property(properties, r.property_id);
    ExperimentalDatum d;
    d.property_id = r.property_id;
    d.bra = r.bra;
    d.ket = r.ket;
    d.sigma = r.sigma;
    d.weight = r.weight;
    d.loss = r.loss;
    if (r.bra == r.ket) {
      d.value = element(p, r.bra, r.ket);
    } else {
      d.value = element(p, r.bra, r.ket) * element(p, r.ket, r.bra);
    }
    if (noise == NoiseModel::gaussian) d.value += r.sigma * rng.next();
    cs.data.push_back(std::move(d));
  }
  cs.validate(n_states);
  return cs;
}

}  // namespace ecw::constraints
