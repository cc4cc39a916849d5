#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ecw/constraints.hpp"
#include "ecw/hamiltonian.hpp"
#include "ecw/nonorth.hpp"
#include "ecw/report.hpp"
#include "ecw/types.hpp"

namespace ecw::hf {

/// One single-determinant state: occupied coefficient block (columns are the
/// occupied spin-orbitals, C^H S C = I), the orbital energies of the last
/// diagonalization, and the full eigenvector set it was selected from.
struct SlaterState {
  Mat c_occ;   // M x N
  Vec eps;     // all M orbital energies
  Mat c_all;   // M x M eigenvectors, S-orthonormal
  int state_index = 0;
};

enum class OccupiedSelection { aufbau, mom };

OccupiedSelection occupied_selection_from_string(const std::string& s);

struct ScfConfig {
  int max_iter = 200;
  double energy_tol = 1e-10;
  double density_tol = 1e-8;
  double damping = 0.0;          // in [0,1); composed with DIIS when both act
  int diis_depth = 8;
  double level_shift = 0.0;      // raises the virtual block of fbar
  OccupiedSelection occupied_selection = OccupiedSelection::mom;
  std::uint64_t seed = 0;
  std::vector<double> lambda_schedule = {1.0};  // scale factors ramped in order

  void validate() const;
};

/// f = h + contraction of the antisymmetrized two-body tensor with gamma:
/// f(p,r) += sum_qs g(p,q,r,s) gamma(s,q).
Mat standard_fock(const Hamiltonian& H, const Mat& gamma);

/// E = tr(h gamma) + 1/2 tr(G(gamma) gamma) + e_core for a one-determinant
/// density gamma = C C^H.
double hf_energy(const Hamiltonian& H, const Mat& gamma);

/// Same-state experimental term: V g S + S g V - 2 S g V g S.
Mat vexp_same_state(const Mat& v_nn, const Mat& gamma_nn, const Mat& s);

/// Cross-state experimental term for the (n,m) pair; needs both transition
/// densities (with gamma2) and the state-n density. Throws on n == m.
Mat vexp_cross_state(int n, int m, const Mat& v_nm, const Mat& v_mn,
                     const nonorth::TransitionDensity& td_mn,
                     const nonorth::TransitionDensity& td_nm, const Mat& gamma_nn, const Mat& s);

/// Orbital-space gradient of the overlap penalty for state n, folded into the
/// modified Fock as an occupied-virtual contribution.
Mat ortho_penalty_term(int n, const std::vector<Mat>& occupied_blocks, const Mat& s,
                       double ortho_weight);

struct ModifiedFock {
  Mat fbar;      // assembled, Hermitian
  Mat f;         // standard Fock part
  Mat v_n;       // same-state experimental part
  Mat v_nm_sum;  // cross-state experimental part (+ overlap penalty)
};

/// Occupied-occupied and virtual-virtual blocks carry f alone; the
/// occupied-virtual blocks carry f + v_n + v_nm_sum. Symmetrized on exit.
ModifiedFock assemble_modified_fock(const Mat& f, const Mat& v_n, const Mat& v_nm_sum,
                                    const Mat& c_occ, const Mat& s);

struct RoothaanResult {
  Vec eps;   // ascending
  Mat c;     // S-orthonormal eigenvectors, deterministic phase
};

/// Generalized eigenproblem fbar C = S C diag(eps) via S^(-1/2) congruence.
RoothaanResult solve_roothaan(const Mat& fbar, const Mat& s);

/// Column selection: aufbau takes the lowest-eps N columns; mom greedily
/// maximizes the summed squared S-overlap with the previous occupied block
/// (ties broken by lower eps, then lower index).
std::vector<int> select_occupied(const Mat& c_all, const Vec& eps, const Mat& s,
                                 const std::optional<Mat>& previous_occ, int n_occ,
                                 OccupiedSelection mode);

struct ScfResult {
  std::vector<SlaterState> states;
  io::SolveReport report;
  constraints::CalcMap calc;
  constraints::OverlapMap overlaps;
};

/// Self-consistent solve of the modified Roothaan equations for n_states
/// coupled single-determinant states, with the weight schedule ramped in
/// cfg.lambda_schedule order (warm start between stages). `initial`
/// overrides the core-Hamiltonian guess, e.g. along a weight scan.
ScfResult scf_solve(const Hamiltonian& H, const std::vector<PropertyOperator>& properties,
                    const constraints::ConstraintSet& cs, int n_states, const ScfConfig& cfg,
                    const std::vector<SlaterState>* initial = nullptr);

/// Gradient of E + Q along the occupied-virtual direction d_occ (M x N) at
/// the given state; used by the finite-difference stationarity checks.
double directional_derivative(const Mat& fbar_grad_block, const Mat& c_occ, const Mat& c_virt,
                              const Mat& k);

}  // namespace ecw::hf
