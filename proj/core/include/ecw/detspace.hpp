#pragma once

#include <cstdint>
#include <unordered_map>
#include <vector>

#include "ecw/hamiltonian.hpp"
#include "ecw/types.hpp"

namespace ecw::det {

/// One Slater determinant as an occupation bitmask over M spin-orbitals
/// (bit p set <=> spin-orbital p occupied). M <= 64.
using DetMask = std::uint64_t;

/// An ordered determinant basis. Lexicographic mask order, deterministic.
class DetSpace {
 public:
  /// All determinants with n_alpha electrons in even (alpha) spin-orbitals and
  /// n_beta in odd (beta) ones.
  static DetSpace sector(int n_spin_orbitals, int n_alpha, int n_beta);

  /// All determinants with n_electrons electrons, any spin distribution.
  static DetSpace full(int n_spin_orbitals, int n_electrons);

  int n_orb() const { return n_orb_; }
  int n_elec() const { return n_elec_; }
  std::size_t size() const { return dets_.size(); }
  DetMask mask(std::size_t i) const { return dets_[i]; }
  const std::vector<DetMask>& masks() const { return dets_; }

  /// Index of a mask, or -1 if absent.
  std::ptrdiff_t index(DetMask m) const {
    auto it = index_.find(m);
    return it == index_.end() ? -1 : static_cast<std::ptrdiff_t>(it->second);
  }

 private:
  int n_orb_ = 0;
  int n_elec_ = 0;
  std::vector<DetMask> dets_;
  std::unordered_map<DetMask, std::size_t> index_;
  void build_index();
};

/// Fermionic phase of annihilating orbital p from mask m (p must be set):
/// (-1)^(number of occupied orbitals below p).
int annihilation_phase(DetMask m, int p);

/// v' = sum_pq A(p,q) a+_p a_q v, exact with fermionic signs.
Vec apply_one_body(const DetSpace& space, const Mat& A, const Vec& v);

/// v' = H v via Slater-Condon rules (diagonal, single, double connections).
Vec apply_hamiltonian(const DetSpace& space, const Hamiltonian& H, const Vec& v);

/// <D|H|D> for a single determinant.
double slater_condon_diagonal(const Hamiltonian& H, DetMask m);

/// Dense matrix of H (or a one-body operator) in the determinant basis,
/// built by literal application of the second-quantized operator string.
/// Test-oracle quality: O(dim * M^4), use at small M only.
Mat build_dense_hamiltonian_bruteforce(const DetSpace& space, const Hamiltonian& H);
Mat build_dense_one_body_bruteforce(const DetSpace& space, const Mat& A);

/// Dense matrix via repeated apply_hamiltonian on unit vectors.
Mat build_dense_hamiltonian(const DetSpace& space, const Hamiltonian& H);

struct FciResult {
  std::vector<double> energies;   // ascending
  std::vector<Vec> states;        // orthonormal, deterministic phase
};

/// Lowest k eigenpairs by dense symmetric diagonalization.
/// Refuses spaces larger than 1e5 determinants.
FciResult fci_solve(const DetSpace& space, const Hamiltonian& H, int k);

/// One-particle (transition) density gamma(p,q) = <bra| a+_q a_p |ket>.
Mat fci_tdm(const DetSpace& space, const Vec& bra, const Vec& ket);

/// Two-particle analogue gamma2(a,b,a',b') = <bra| a+_a' a+_b' a_b a_a |ket>,
/// used as the brute-force reference for the cofactor algebra.
Tensor4 fci_tdm2(const DetSpace& space, const Vec& bra, const Vec& ket);

/// CI expansion of the Slater determinant with M x N orbital coefficient
/// matrix C over an orthonormal basis: coefficient of the determinant with
/// ascending occupied set K equals det C(K,:).
Vec expand_slater(const DetSpace& space, const Mat& C);
CVec expand_slater(const DetSpace& space, const CMat& C);

}  // namespace ecw::det
