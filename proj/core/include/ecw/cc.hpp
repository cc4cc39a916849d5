#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ecw/constraints.hpp"
#include "ecw/detspace.hpp"
#include "ecw/hamiltonian.hpp"
#include "ecw/hf.hpp"
#include "ecw/report.hpp"
#include "ecw/types.hpp"

namespace ecw::cc {

/// Sign placement of the experimental potentials in the Lambda/L/R equations
/// and the ground-state energy projection. `consistent` derives every
/// equation from the constrained Schroedinger form (the T-equation sign);
/// `printed` flips those terms. The two disagree; a diagnostic against the
/// brute-force oracle is part of the test suite.
enum class VexpSign { consistent, printed };

VexpSign vexp_sign_from_string(const std::string& s);

struct CcConfig {
  double tol = 1e-10;
  int max_outer = 60;
  int max_inner = 400;
  double level_shift = 0.0;
  double root_overlap_min = 0.5;
  VexpSign vexp_sign = VexpSign::consistent;
  std::uint64_t seed = 0;
  std::vector<double> lambda_schedule = {1.0};

  void validate() const;
  double sign_factor() const { return vexp_sign == VexpSign::consistent ? 1.0 : -1.0; }
};

/// One excitation out of the reference determinant: `from` occupied
/// spin-orbitals annihilated, `to` virtuals created, ascending index order.
/// `sign` is <det| a+_to... a_from... |ref> for that canonical ordering.
struct Excitation {
  int rank = 1;
  std::array<int, 2> from{{-1, -1}};
  std::array<int, 2> to{{-1, -1}};
  det::DetMask det = 0;
  int sign = 1;
};

/// Reference determinant, singles+doubles catalogue, and precomputed
/// connection tables for fast operator application at desk scale. The
/// Hamiltonian handed in must be in an orthonormal (molecular-orbital) basis
/// ordered so the reference occupies spin-orbitals 0..N-1.
class CcWorkspace {
 public:
  CcWorkspace(const Hamiltonian& h_mo, Vec orbital_energies);

  const Hamiltonian& hamiltonian() const { return h_; }
  const det::DetSpace& space() const { return space_; }
  const Vec& eps() const { return eps_; }
  int n_occ() const { return n_occ_; }
  int n_vir() const { return h_.n_spin_orbitals - n_occ_; }
  det::DetMask reference_mask() const { return ref_; }
  std::size_t reference_index() const { return ref_index_; }

  int n_amplitudes() const { return static_cast<int>(catalogue_.size()); }
  int subspace_dim() const { return n_amplitudes() + 1; }  // + reference row
  const std::vector<Excitation>& catalogue() const { return catalogue_; }
  std::size_t excitation_det_index(int k) const { return exc_index_[static_cast<std::size_t>(k)]; }

  /// Moller-Plesset style denominator sum(eps_to) - sum(eps_from).
  double denominator(int k) const;

  int single_index(int occ, int vir) const;          // -1 when absent
  int double_index(int o1, int o2, int v1, int v2) const;  // canonical order only

  struct Link {
    int src;
    int dst;
    double phase;
  };
  const std::vector<Link>& links(int k) const { return links_[static_cast<std::size_t>(k)]; }

 private:
  Hamiltonian h_;
  Vec eps_;
  int n_occ_;
  det::DetSpace space_;
  det::DetMask ref_;
  std::size_t ref_index_;
  std::vector<Excitation> catalogue_;
  std::vector<std::size_t> exc_index_;
  std::vector<std::vector<Link>> links_;
  std::map<std::pair<int, int>, int> single_lookup_;
  std::map<std::array<int, 4>, int> double_lookup_;
};

/// Canonical CCSD amplitudes over the workspace catalogue. The antisymmetry
/// of the doubles block lives in the accessors.
struct Amplitudes {
  Vec flat;

  static Amplitudes zero(const CcWorkspace& ws) { return {Vec::Zero(ws.n_amplitudes())}; }
  double t1(const CcWorkspace& ws, int occ, int vir) const;
  double t2(const CcWorkspace& ws, int o1, int o2, int v1, int v2) const;
};

// -- operator application (CI vectors over ws.space()) ----------------------

Vec apply_T(const CcWorkspace& ws, const Vec& amps, const Vec& v);
Vec apply_T_adjoint(const CcWorkspace& ws, const Vec& amps, const Vec& v);

/// e^{sign*T} v by the terminating power series (T nilpotent).
Vec apply_expT(const CcWorkspace& ws, const Vec& amps, const Vec& v, int sign);
Vec apply_expT_adjoint(const CcWorkspace& ws, const Vec& amps, const Vec& v, int sign);

/// similarity transforms e^{-T} O e^{T} applied to a CI vector
Vec hbar_apply(const CcWorkspace& ws, const Vec& amps, const Vec& v);
Vec vbar_apply(const CcWorkspace& ws, const Mat& v_one_body, const Vec& amps, const Vec& v);

/// embed/project between subspace coordinates (index 0 = reference, then the
/// catalogue order) and CI vectors
Vec embed(const CcWorkspace& ws, const Vec& subspace_coords);
Vec project(const CcWorkspace& ws, const Vec& ci);

/// dense subspace matrices <e_mu| e^{-T} O e^{T} |e_nu>
Mat build_hbar_matrix(const CcWorkspace& ws, const Vec& amps);
Mat build_vbar_matrix(const CcWorkspace& ws, const Mat& v_one_body, const Vec& amps);

/// Frozen context for the constrained T-equations: the (0,0) potential and
/// the cross-state potentials paired with the frozen R vectors.
struct TConstraintContext {
  Mat v00;                                  // zero-size when absent
  std::vector<std::pair<Mat, Vec>> cross;   // (V^{0m}, rho(m) subspace coords), m != 0
};

/// Residual of the constrained T-equations in canonical amplitude
/// coordinates: sign * <det_k| e^{-T}(H+V00)e^{T}|ref> + cross terms.
Vec t_residual(const CcWorkspace& ws, const Vec& amps, const TConstraintContext& ctx);

/// Ground-state projection with the convention factor applied to the
/// experimental terms: <ref|Hbar|ref> + c*<ref|V00bar|ref> + c*sum_m <ref|V0m_bar R(m)|ref>.
double e0_projection(const CcWorkspace& ws, const Vec& amps, const TConstraintContext& ctx,
                     double sign_factor);

struct TSolveResult {
  Vec amps;
  bool converged = false;
  int iterations = 0;
  double residual_norm = 0.0;
};

TSolveResult solve_T(const CcWorkspace& ws, const TConstraintContext& ctx, const CcConfig& cfg,
                     const Vec& initial);

/// MP2-style start: one quasi-Newton step from zero amplitudes.
Vec mp2_guess(const CcWorkspace& ws, const CcConfig& cfg);

/// gamma(q,p) = <ref| L e^{-T} a+_p a_q e^{T} R |ref> for subspace-coordinate
/// left/right vectors; observables read tr(A gamma).
Mat cc_rdm(const CcWorkspace& ws, const Vec& amps, const Vec& l_coords, const Vec& r_coords);

struct CcResult {
  Vec amps;                    // converged t
  Vec lambda_flat;             // canonical lambda amplitudes (catalogue order)
  std::vector<Vec> r;          // subspace coords per state; r[0] = e_0
  std::vector<Vec> l;          // l[0] = e_0 + Lambda (det coords)
  std::vector<double> energies;  // E_0 ... E_{n-1}
  std::vector<double> l0_row_residuals;  // per excited state, consistency diagnostic
  Mat mo_coefficients;
  Vec mo_energies;
  io::SolveReport report;
  constraints::CalcMap calc;
};

/// The full self-consistent solver: unconstrained HF reference, MO transform,
/// CCSD T/Lambda + EOM bootstrap, then the six-step constrained outer cycle
/// ramped over cfg.lambda_schedule. A previous result for the same
/// Hamiltonian warm-starts all amplitudes and vectors (weight scans).
CcResult cc_solve(const Hamiltonian& H, const std::vector<PropertyOperator>& properties,
                  const constraints::ConstraintSet& cs, int n_states, const CcConfig& cfg,
                  const hf::ScfConfig& scf_cfg = {}, const CcResult* warm = nullptr);

/// Spatial->MO one-body transform helpers used by cc_solve (exposed for tests).
Hamiltonian transform_to_basis(const Hamiltonian& H, const Mat& c);
Mat transform_one_body(const Mat& a, const Mat& c);

}  // namespace ecw::cc
