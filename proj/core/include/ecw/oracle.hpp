#pragma once

#include <cstdint>
#include <vector>

#include "ecw/constraints.hpp"
#include "ecw/detspace.hpp"
#include "ecw/hamiltonian.hpp"

namespace ecw::oracle {

struct MinimizeOptions {
  int max_outer = 60;
  int max_inner = 400;
  double grad_tol = 1e-9;
  double armijo_c = 1e-4;
  double step0 = 1.0;
  std::uint64_t seed = 0;
  double initial_perturbation = 0.0;  // optional random kick on the start states
  std::vector<Mat> initial_orbitals;  // slater manifold only: per-state M x N starts
};

struct ConstrainedState {
  Vec v;            // CI coefficients, unit norm
  double energy;    // Rayleigh quotient <v|H|v>
  double grad_norm;  // projected gradient norm at exit
};

struct ConstrainedResult {
  std::vector<ConstrainedState> states;
  double q = 0.0;
  bool converged = false;
  int outer_cycles = 0;
  constraints::CalcMap calc;       // observables at the solution
  constraints::OverlapMap overlaps;
};

/// Cyclic minimization of L_n = <v_n|H - E_n|v_n> + Q over unit-norm CI
/// vectors, E_n frozen to the Rayleigh quotient at the top of each outer
/// cycle, projected gradient descent with Armijo line search inside.
/// The ground-truth reference for the self-consistent solvers.
ConstrainedResult constrained_fci_minimize(const det::DetSpace& space, const Hamiltonian& H,
                                           const std::vector<PropertyOperator>& properties,
                                           const constraints::ConstraintSet& cs, int n_states,
                                           const MinimizeOptions& opt = {});

struct SlaterResult {
  std::vector<Mat> orbitals;  // M x N coefficient blocks, C^T C = I
  std::vector<double> energies;
  double q = 0.0;
  bool converged = false;
  int outer_cycles = 0;
  constraints::CalcMap calc;
  constraints::OverlapMap overlaps;
};

/// Same objective restricted to single-determinant states, parametrized by
/// orthonormal M x N orbital blocks. Energies and observables are evaluated
/// by expanding each determinant into the CI basis, so this route shares no
/// code with the cofactor algebra. Requires an orthonormal basis (s = I).
SlaterResult constrained_slater_minimize(const Hamiltonian& H,
                                         const std::vector<PropertyOperator>& properties,
                                         const constraints::ConstraintSet& cs, int n_states,
                                         const MinimizeOptions& opt = {});

}  // namespace ecw::oracle
