#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ecw/hamiltonian.hpp"
#include "ecw/types.hpp"

namespace ecw::constraints {

enum class Loss { L2, L1 };

Loss loss_from_string(const std::string& s);
std::string to_string(Loss l);

/// One measured value. `pair` is (bra, ket) of the matrix element it targets:
/// diagonal data fit A(n,n) directly; transition data (bra != ket) are fitted
/// as the phase-insensitive product A(n,m) * A(m,n) (= |A(n,m)|^2 for
/// Hermitian estimates), and `value` stores that product.
struct ExperimentalDatum {
  std::string property_id;
  int bra = 0;
  int ket = 0;
  double value = 0.0;
  double sigma = 1.0;
  Loss loss = Loss::L2;
  double weight = 0.0;  // per-datum Lagrange multiplier, >= 0

  bool diagonal() const { return bra == ket; }
};

struct ConstraintSet {
  std::vector<ExperimentalDatum> data;
  double ortho_weight = 0.0;  // weight of sum_{n!=m} |det Sigma(n,m)|^2

  bool empty() const { return data.empty() && ortho_weight == 0.0; }
  /// Throws ValidationError on duplicate (property, pair), sigma <= 0,
  /// negative weights, or state indices outside [0, n_states).
  void validate(int n_states) const;
};

/// Calculated matrix elements A(n,m) keyed by (property_id, (bra, ket)).
/// Off-diagonal data require both orientations to be present.
using CalcKey = std::pair<std::string, std::pair<int, int>>;
using CalcMap = std::map<CalcKey, double>;

/// Many-body overlaps <Psi_n|Psi_m> keyed by ordered pair (n, m).
using OverlapMap = std::map<std::pair<int, int>, double>;

/// Misfit value the loss acts on: A(n,n) for diagonal data, A(n,m)*A(m,n)
/// for transition data. Throws ValidationError when calc entries are missing.
double fitted_value(const ExperimentalDatum& d, const CalcMap& calc);

/// Q = sum_j w_j rho_j((fitted - value)/sigma) + ortho_weight sum_{n!=m} |ovl|^2
/// with rho = r^2 for L2 and |r| for L1.
double eval_Q(const CalcMap& calc, const ConstraintSet& cs, const OverlapMap& overlaps);

/// dQ/dA(n,m) for one datum given the current calc values. For transition
/// data the chain rule through the product A(n,m)*A(m,n) is included, so the
/// derivative with respect to A(bra,ket) is loss'(r)/sigma * A(ket,bra).
double dQ_dA(const ExperimentalDatum& d, const CalcMap& calc, bool bra_ket_orientation = true);

/// V(n,m) = sum_j dQ/dA(n,m)_j * A_j; zero when no datum touches the pair.
Mat build_vexp(std::pair<int, int> pair, const ConstraintSet& cs, const CalcMap& calc,
               const std::vector<PropertyOperator>& properties);

const PropertyOperator& find_property(const std::vector<PropertyOperator>& properties,
                                      const std::string& id);

enum class NoiseModel { none, gaussian };

struct SynthesisRequest {
  std::string property_id;
  int bra = 0;
  int ket = 0;
  double sigma = 1.0;
  double weight = 1.0;
  Loss loss = Loss::L2;
};

/// Builds a ConstraintSet whose values are exact FCI observables of H
/// (optionally displaced by Gaussian noise of width sigma), deterministic
/// under the seed. Transition requests store A(n,m)*A(m,n).
ConstraintSet synthesize_experiment(const Hamiltonian& H,
                                    const std::vector<PropertyOperator>& properties,
                                    const std::vector<SynthesisRequest>& requests,
                                    NoiseModel noise, std::uint64_t seed,
                                    double ortho_weight = 0.0);

/// Deterministic standard normal stream (Box-Muller over a splitmix-seeded
/// mt19937_64); identical output on every platform for a given seed.
class NormalStream {
 public:
  explicit NormalStream(std::uint64_t seed);
  double next();

 private:
  std::uint64_t state_;
  bool have_spare_ = false;
  double spare_ = 0.0;
  double next_uniform();  // in (0,1)
};

}  // namespace ecw::constraints
