#include <doctest.h>

#include "ecw/json_io.hpp"
#include "ecw/oracle.hpp"
#include "test_helpers.hpp"

using namespace ecw;
using namespace ecw::constraints;

namespace {

std::vector<PropertyOperator> h2_props() {
  const auto H = test::h2_fixture();
  return io::load_properties(test::fixture("h2_properties.json"), H.n_spin_orbitals).properties;
}

}  // namespace

TEST_CASE("empty constraints reduce to the fci ground spectrum") {
  const auto H = test::h2_fixture();
  const auto space = det::DetSpace::sector(4, 1, 1);
  const auto res = oracle::constrained_fci_minimize(space, H, {}, ConstraintSet{}, 2, {});
  const auto fci = det::fci_solve(space, H, 2);
  CHECK(res.converged);
  CHECK(res.q == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(res.states[0].energy == doctest::Approx(fci.energies[0]).scale(1.0).epsilon(1e-8));
  CHECK(res.states[1].energy == doctest::Approx(fci.energies[1]).scale(1.0).epsilon(1e-8));
}

TEST_CASE("a datum already satisfied keeps the fci solution") {
  const auto H = test::h2_fixture();
  const auto props = h2_props();
  const auto space = det::DetSpace::sector(4, 1, 1);
  const auto cs = synthesize_experiment(
      H, props, {{"dipole_z", 0, 0, 0.05, 5.0, Loss::L2}}, NoiseModel::none, 0);
  const auto res = oracle::constrained_fci_minimize(space, H, props, cs, 1, {});
  const auto fci = det::fci_solve(space, H, 1);
  CHECK(res.converged);
  CHECK(res.q < 1e-14);
  CHECK(res.states[0].energy == doctest::Approx(fci.energies[0]).scale(1.0).epsilon(1e-9));
  CHECK(std::abs(std::abs(res.states[0].v.dot(fci.states[0])) - 1.0) < 1e-8);
}

TEST_CASE("a displaced dipole target pulls the observable monotonically") {
  const auto H = test::h2_fixture();
  const auto props = h2_props();
  const auto space = det::DetSpace::sector(4, 1, 1);
  const auto& a = find_property(props, "dipole_z").a;

  const auto fci = det::fci_solve(space, H, 1);
  const double exact = fci.states[0].dot(det::apply_one_body(space, a, fci.states[0]));
  const double target = exact + 0.2;

  double prev_gap = std::abs(exact - target);
  double prev_q = -1.0;
  for (const double lam : {0.5, 2.0, 8.0, 32.0}) {
    ConstraintSet cs;
    ExperimentalDatum d;
    d.property_id = "dipole_z";
    d.bra = d.ket = 0;
    d.value = target;
    d.sigma = 0.1;
    d.loss = Loss::L2;
    d.weight = lam;
    cs.data.push_back(d);
    const auto res = oracle::constrained_fci_minimize(space, H, props, cs, 1, {});
    const double fitted = res.calc.at({"dipole_z", {0, 0}});
    const double gap = std::abs(fitted - target);
    CHECK(gap < prev_gap + 1e-10);
    if (prev_q >= 0) {
      // unit-weight misfit shrinks as lambda grows
      const double misfit = gap * gap / (0.1 * 0.1);
      CHECK(misfit <= prev_q + 1e-8);
      prev_q = misfit;
    } else {
      prev_q = gap * gap / (0.1 * 0.1);
    }
    prev_gap = gap;
  }
}

TEST_CASE("slater-manifold minimizer finds a stationary single determinant") {
  const auto H = test::h2_fixture();
  oracle::MinimizeOptions opt;
  const auto res = oracle::constrained_slater_minimize(H, {}, ConstraintSet{}, 1, opt);
  CHECK(res.converged);
  CHECK((res.orbitals[0].transpose() * res.orbitals[0] - Mat::Identity(2, 2))
            .cwiseAbs()
            .maxCoeff() < 1e-10);
  // mean-field energy sits above the exact ground state
  const auto space = det::DetSpace::sector(4, 1, 1);
  const auto fci = det::fci_solve(space, H, 1);
  CHECK(res.energies[0] > fci.energies[0]);
  CHECK(res.energies[0] < fci.energies[0] + 0.1);
}

TEST_CASE("slater minimizer refuses non-orthonormal bases") {
  auto H = test::h2_fixture();
  H.s(0, 0) = 2.0;
  CHECK_THROWS_AS(oracle::constrained_slater_minimize(H, {}, ConstraintSet{}, 1, {}),
                  ValidationError);
}

TEST_CASE("orthogonality penalty drives pair overlaps down") {
  const auto H = test::h2_fixture();
  const auto space = det::DetSpace::sector(4, 1, 1);
  ConstraintSet cs;
  cs.ortho_weight = 20.0;
  oracle::MinimizeOptions opt;
  opt.initial_perturbation = 0.05;
  opt.seed = 3;
  opt.max_outer = 200;
  const auto res = oracle::constrained_fci_minimize(space, H, {}, cs, 2, opt);
  CHECK(std::abs(res.overlaps.at({0, 1})) < 1e-3);
}
