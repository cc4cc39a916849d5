#pragma once

#include <complex>
#include <utility>

#include "ecw/types.hpp"

namespace ecw::nonorth {

// Index conventions used throughout this module, fixed once:
//   Sigma(n,m)(a,b)       = sum_{mu,nu} conj(C(n)(mu,a)) S(mu,nu) C(m)(nu,b)
//   gamma(m,n)(a,b)       = <Psi_n| a+_b(n) a_a(m) |Psi_m> = Cofactor_{b,a} Sigma(n,m)
//                         = adj(Sigma(n,m))(a,b)
//   gamma(m,n)(mu,nu)     = [C(m) gamma_occ C(n)^H](mu,nu)          (common basis)
//   gamma2(m,n)(a,b,a',b')= <Psi_n| a+_a'(n) a+_b'(n) a_b(m) a_a(m) |Psi_m>
//                         = Cofactor_{a'b',ab} Sigma(n,m)
// so that a transition matrix element reads
//   <Psi_n| A |Psi_m>     = sum_{mu,nu} A(mu,nu) gamma(m,n)(nu,mu) = tr(A gamma1).
// The bra state always supplies the conjugated coefficients.

template <class Scalar>
using MatT = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <class Scalar>
struct PairOverlapT {
  MatT<Scalar> sigma;  // N x N occupied-orbital overlap of (bra, ket)
  Scalar det_sigma{};
  int bra_index = 0;
  int ket_index = 0;
};

template <class Scalar>
struct TransitionDensityT {
  MatT<Scalar> gamma1;       // M x M, common basis
  Tensor4T<Scalar> gamma2;   // optional; empty unless built by tdm2
  int ket_index = 0;         // m: the state annihilation acts on
  int bra_index = 0;         // n: the state creation acts on
  bool has_gamma2() const { return !gamma2.empty(); }
};

using PairOverlap = PairOverlapT<double>;
using TransitionDensity = TransitionDensityT<double>;
using CPairOverlap = PairOverlapT<std::complex<double>>;
using CTransitionDensity = TransitionDensityT<std::complex<double>>;

/// Sigma and det Sigma for a (bra, ket) pair of occupied coefficient blocks.
/// det by LU with partial pivoting; an empty occupied set gives det = 1.
template <class Scalar>
PairOverlapT<Scalar> pair_overlap(const MatT<Scalar>& bra_c, const MatT<Scalar>& ket_c,
                                  const MatT<Scalar>& s, int bra_index = 0, int ket_index = 0);

/// One-particle transition density (gamma1 only).
template <class Scalar>
TransitionDensityT<Scalar> tdm1(const MatT<Scalar>& bra_c, const MatT<Scalar>& ket_c,
                                const MatT<Scalar>& s, int bra_index = 0, int ket_index = 0);

/// One- and two-particle transition densities. Refuses M > 12 (dense gamma2)
/// and throws RankDeficiencyError when Sigma has more than two vanishing
/// singular values.
template <class Scalar>
TransitionDensityT<Scalar> tdm2(const MatT<Scalar>& bra_c, const MatT<Scalar>& ket_c,
                                const MatT<Scalar>& s, int bra_index = 0, int ket_index = 0);

/// <bra| A |ket> = sum_{mu,nu} A(mu,nu) gamma1(nu,mu).
template <class Scalar>
Scalar observable(const TransitionDensityT<Scalar>& td, const MatT<Scalar>& a);

namespace detail {

/// adj(Sigma)(a,b) = Cofactor_{b,a}(Sigma); rank-revealing SVD route, exact
/// for any rank (zero matrix once the deficiency exceeds one).
template <class Scalar>
MatT<Scalar> first_cofactors_svd(const MatT<Scalar>& sigma);

/// Same values by explicit (N-1)-minor expansion. Reference route for tests.
template <class Scalar>
MatT<Scalar> first_cofactors_minor(const MatT<Scalar>& sigma);

/// K2(a,b,a',b') = Cofactor_{a'b',ab}(Sigma) via the Jacobi identity
/// det*[inv(a,a') inv(b,b') - inv(a,b') inv(b,a')]; requires invertible Sigma.
template <class Scalar>
Tensor4T<Scalar> second_cofactors_jacobi(const MatT<Scalar>& sigma);

/// Same values by explicit (N-2)-minor expansion with sign
/// (-1)^(a+b+a'+b'); valid for any rank.
template <class Scalar>
Tensor4T<Scalar> second_cofactors_minor(const MatT<Scalar>& sigma);

/// Number of singular values below tol * max(1, sigma_max).
template <class Scalar>
int rank_deficiency(const MatT<Scalar>& sigma, double tol = 1e-10);

}  // namespace detail

}  // namespace ecw::nonorth
