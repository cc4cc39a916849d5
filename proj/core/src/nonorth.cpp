#include "ecw/nonorth.hpp"

#include <Eigen/LU>
#include <Eigen/SVD>

#include <cmath>

namespace ecw::nonorth {

namespace detail {

template <class Scalar>
MatT<Scalar> first_cofactors_svd(const MatT<Scalar>& sigma) {
  const int N = static_cast<int>(sigma.rows());
  if (N == 0) return MatT<Scalar>(0, 0);
  if (N == 1) return MatT<Scalar>::Identity(1, 1);
  Eigen::JacobiSVD<MatT<Scalar>> svd(sigma, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  // adj(U L V^H) = det(U V^H) * V adj(L) U^H, adj(L) diagonal with
  // products of the remaining singular values.
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> adj_l(N);
  for (int i = 0; i < N; ++i) {
    double prod = 1.0;
    for (int j = 0; j < N; ++j)
      if (j != i) prod *= sv[j];
    adj_l[i] = Scalar(prod);
  }
  const Scalar unit_det = svd.matrixU().determinant() * svd.matrixV().adjoint().determinant();
  return unit_det * svd.matrixV() * adj_l.asDiagonal() * svd.matrixU().adjoint();
}

template <class Scalar>
MatT<Scalar> first_cofactors_minor(const MatT<Scalar>& sigma) {
  const int N = static_cast<int>(sigma.rows());
  MatT<Scalar> out(N, N);
  if (N == 0) return out;
  if (N == 1) return MatT<Scalar>::Identity(1, 1);
  MatT<Scalar> sub(N - 1, N - 1);
  for (int b = 0; b < N; ++b) {      // row removed (bra orbital)
    for (int a = 0; a < N; ++a) {    // column removed (ket orbital)
      int ri = 0;
      for (int r = 0; r < N; ++r) {
        if (r == b) continue;
        int ci = 0;
        for (int c = 0; c < N; ++c) {
          if (c == a) continue;
          sub(ri, ci++) = sigma(r, c);
        }
        ++ri;
      }
      const double sign = ((a + b) % 2 == 0) ? 1.0 : -1.0;
      out(a, b) = Scalar(sign) * sub.determinant();
    }
  }
  return out;
}

template <class Scalar>
Tensor4T<Scalar> second_cofactors_jacobi(const MatT<Scalar>& sigma) {
  const int N = static_cast<int>(sigma.rows());
  Tensor4T<Scalar> out(N);
  if (N < 2) return out;
  Eigen::PartialPivLU<MatT<Scalar>> lu(sigma);
  const Scalar det = lu.determinant();
  const MatT<Scalar> inv = lu.inverse();
  for (int a = 0; a < N; ++a)
    for (int b = 0; b < N; ++b) {
      if (a == b) continue;
      for (int ap = 0; ap < N; ++ap)
        for (int bp = 0; bp < N; ++bp) {
          if (ap == bp) continue;
          out(a, b, ap, bp) = det * (inv(a, ap) * inv(b, bp) - inv(a, bp) * inv(b, ap));
        }
    }
  return out;
}

template <class Scalar>
Tensor4T<Scalar> second_cofactors_minor(const MatT<Scalar>& sigma) {
  const int N = static_cast<int>(sigma.rows());
  Tensor4T<Scalar> out(N);
  if (N < 2) return out;
  if (N == 2) {
    // removing both rows and both columns leaves the empty determinant 1;
    // sign (-1)^(0+1+0+1) = +1 for (a,b,ap,bp) = (0,1,0,1)
    out(0, 1, 0, 1) = Scalar(1);
    out(1, 0, 0, 1) = Scalar(-1);
    out(0, 1, 1, 0) = Scalar(-1);
    out(1, 0, 1, 0) = Scalar(1);
    return out;
  }
  MatT<Scalar> sub(N - 2, N - 2);
  for (int ap = 0; ap < N; ++ap)
    for (int bp = ap + 1; bp < N; ++bp)
      for (int a = 0; a < N; ++a)
        for (int b = a + 1; b < N; ++b) {
          int ri = 0;
          for (int r = 0; r < N; ++r) {
            if (r == ap || r == bp) continue;
            int ci = 0;
            for (int c = 0; c < N; ++c) {
              if (c == a || c == b) continue;
              sub(ri, ci++) = sigma(r, c);
            }
            ++ri;
          }
          const double sign = ((a + b + ap + bp) % 2 == 0) ? 1.0 : -1.0;
          const Scalar val = Scalar(sign) * sub.determinant();
          out(a, b, ap, bp) = val;
          out(b, a, ap, bp) = -val;
          out(a, b, bp, ap) = -val;
          out(b, a, bp, ap) = val;
        }
  return out;
}

template <class Scalar>
int rank_deficiency(const MatT<Scalar>& sigma, double tol) {
  const int N = static_cast<int>(sigma.rows());
  if (N == 0) return 0;
  Eigen::JacobiSVD<MatT<Scalar>> svd(sigma);
  const auto& sv = svd.singularValues();
  const double cut = tol * std::max(1.0, sv[0]);
  int def = 0;
  for (int i = 0; i < N; ++i)
    if (sv[i] < cut) ++def;
  return def;
}

template MatT<double> first_cofactors_svd<double>(const MatT<double>&);
template MatT<std::complex<double>> first_cofactors_svd<std::complex<double>>(
    const MatT<std::complex<double>>&);
template MatT<double> first_cofactors_minor<double>(const MatT<double>&);
template MatT<std::complex<double>> first_cofactors_minor<std::complex<double>>(
    const MatT<std::complex<double>>&);
template Tensor4T<double> second_cofactors_jacobi<double>(const MatT<double>&);
template Tensor4T<std::complex<double>> second_cofactors_jacobi<std::complex<double>>(
    const MatT<std::complex<double>>&);
template Tensor4T<double> second_cofactors_minor<double>(const MatT<double>&);
template Tensor4T<std::complex<double>> second_cofactors_minor<std::complex<double>>(
    const MatT<std::complex<double>>&);
template int rank_deficiency<double>(const MatT<double>&, double);
template int rank_deficiency<std::complex<double>>(const MatT<std::complex<double>>&, double);

}  // namespace detail

namespace {

template <class Scalar>
void check_pair_dims(const MatT<Scalar>& bra_c, const MatT<Scalar>& ket_c,
                     const MatT<Scalar>& s) {
  if (bra_c.rows() != ket_c.rows() || bra_c.cols() != ket_c.cols())
    throw DimensionError("nonorth: bra/ket coefficient shapes differ");
  if (s.rows() != bra_c.rows() || s.cols() != bra_c.rows())
    throw DimensionError("nonorth: overlap matrix does not match basis dimension");
}

}  // namespace

template <class Scalar>
PairOverlapT<Scalar> pair_overlap(const MatT<Scalar>& bra_c, const MatT<Scalar>& ket_c,
                                  const MatT<Scalar>& s, int bra_index, int ket_index) {
  check_pair_dims(bra_c, ket_c, s);
  PairOverlapT<Scalar> po;
  po.bra_index = bra_index;
  po.ket_index = ket_index;
  po.sigma = bra_c.adjoint() * s * ket_c;
  if (po.sigma.rows() == 0) {
    po.det_sigma = Scalar(1);
  } else {
    Eigen::PartialPivLU<MatT<Scalar>> lu(po.sigma);
    po.det_sigma = lu.determinant();
  }
  return po;
}

template <class Scalar>
TransitionDensityT<Scalar> tdm1(const MatT<Scalar>& bra_c, const MatT<Scalar>& ket_c,
                                const MatT<Scalar>& s, int bra_index, int ket_index) {
  check_pair_dims(bra_c, ket_c, s);
  const auto po = pair_overlap(bra_c, ket_c, s, bra_index, ket_index);
  TransitionDensityT<Scalar> td;
  td.bra_index = bra_index;
  td.ket_index = ket_index;
  const MatT<Scalar> gamma_occ = detail::first_cofactors_svd(po.sigma);
  td.gamma1 = ket_c * gamma_occ * bra_c.adjoint();
  return td;
}

template <class Scalar>
TransitionDensityT<Scalar> tdm2(const MatT<Scalar>& bra_c, const MatT<Scalar>& ket_c,
                                const MatT<Scalar>& s, int bra_index, int ket_index) {
  check_pair_dims(bra_c, ket_c, s);
  const int M = static_cast<int>(bra_c.rows());
  const int N = static_cast<int>(bra_c.cols());
  if (M > 12)
    throw ValidationError("tdm2: dense two-particle density refused for M > 12 (got M=" +
                          std::to_string(M) + ")");
  auto td = tdm1(bra_c, ket_c, s, bra_index, ket_index);
  const auto po = pair_overlap(bra_c, ket_c, s, bra_index, ket_index);

  const int def = detail::rank_deficiency(po.sigma);
  if (def > 2)
    throw RankDeficiencyError("tdm2: higher-rank deficiency (" + std::to_string(def) +
                              " vanishing singular values of Sigma)");
  Tensor4T<Scalar> k2;
  if (def == 0 && N >= 2) {
    k2 = detail::second_cofactors_jacobi(po.sigma);
  } else if (N >= 2) {
    if (N > 6)
      throw ValidationError("tdm2: singular Sigma minor expansion limited to N <= 6");
    k2 = detail::second_cofactors_minor(po.sigma);
  } else {
    k2 = Tensor4T<Scalar>(N);
  }

  // common-basis transform, staged one index at a time
  td.gamma2 = Tensor4T<Scalar>(M);
  if (N >= 2) {
    std::vector<Scalar> t1(static_cast<std::size_t>(M) * N * N * N, Scalar(0));
    auto t1_at = [&](int mu, int b, int ap, int bp) -> Scalar& {
      return t1[((static_cast<std::size_t>(mu) * N + b) * N + ap) * N + bp];
    };
    for (int mu = 0; mu < M; ++mu)
      for (int b = 0; b < N; ++b)
        for (int ap = 0; ap < N; ++ap)
          for (int bp = 0; bp < N; ++bp) {
            Scalar acc(0);
            for (int a = 0; a < N; ++a) acc += ket_c(mu, a) * k2(a, b, ap, bp);
            t1_at(mu, b, ap, bp) = acc;
          }
    std::vector<Scalar> t2(static_cast<std::size_t>(M) * M * N * N, Scalar(0));
    auto t2_at = [&](int mu, int nu, int ap, int bp) -> Scalar& {
      return t2[((static_cast<std::size_t>(mu) * M + nu) * N + ap) * N + bp];
    };
    for (int mu = 0; mu < M; ++mu)
      for (int nu = 0; nu < M; ++nu)
        for (int ap = 0; ap < N; ++ap)
          for (int bp = 0; bp < N; ++bp) {
            Scalar acc(0);
            for (int b = 0; b < N; ++b) acc += ket_c(nu, b) * t1_at(mu, b, ap, bp);
            t2_at(mu, nu, ap, bp) = acc;
          }
    std::vector<Scalar> t3(static_cast<std::size_t>(M) * M * M * N, Scalar(0));
    auto t3_at = [&](int mu, int nu, int mup, int bp) -> Scalar& {
      return t3[((static_cast<std::size_t>(mu) * M + nu) * M + mup) * N + bp];
    };
    using Eigen::numext::conj;
    for (int mu = 0; mu < M; ++mu)
      for (int nu = 0; nu < M; ++nu)
        for (int mup = 0; mup < M; ++mup)
          for (int bp = 0; bp < N; ++bp) {
            Scalar acc(0);
            for (int ap = 0; ap < N; ++ap) acc += conj(bra_c(mup, ap)) * t2_at(mu, nu, ap, bp);
            t3_at(mu, nu, mup, bp) = acc;
          }
    for (int mu = 0; mu < M; ++mu)
      for (int nu = 0; nu < M; ++nu)
        for (int mup = 0; mup < M; ++mup)
          for (int nup = 0; nup < M; ++nup) {
            Scalar acc(0);
            for (int bp = 0; bp < N; ++bp) acc += conj(bra_c(nup, bp)) * t3_at(mu, nu, mup, bp);
            td.gamma2(mu, nu, mup, nup) = acc;
          }
  }
  return td;
}

template <class Scalar>
Scalar observable(const TransitionDensityT<Scalar>& td, const MatT<Scalar>& a) {
  if (a.rows() != td.gamma1.rows() || a.cols() != td.gamma1.cols())
    throw DimensionError("observable: operator/density dimension mismatch");
  return (a * td.gamma1).trace();
}

template PairOverlapT<double> pair_overlap<double>(const MatT<double>&, const MatT<double>&,
                                                   const MatT<double>&, int, int);
template PairOverlapT<std::complex<double>> pair_overlap<std::complex<double>>(
    const MatT<std::complex<double>>&, const MatT<std::complex<double>>&,
    const MatT<std::complex<double>>&, int, int);
template TransitionDensityT<double> tdm1<double>(const MatT<double>&, const MatT<double>&,
                                                 const MatT<double>&, int, int);
template TransitionDensityT<std::complex<double>> tdm1<std::complex<double>>(
    const MatT<std::complex<double>>&, const MatT<std::complex<double>>&,
    const MatT<std::complex<double>>&, int, int);
template TransitionDensityT<double> tdm2<double>(const MatT<double>&, const MatT<double>&,
                                                 const MatT<double>&, int, int);
template TransitionDensityT<std::complex<double>> tdm2<std::complex<double>>(
    const MatT<std::complex<double>>&, const MatT<std::complex<double>>&,
    const MatT<std::complex<double>>&, int, int);
template double observable<double>(const TransitionDensityT<double>&, const MatT<double>&);
template std::complex<double> observable<std::complex<double>>(
    const TransitionDensityT<std::complex<double>>&, const MatT<std::complex<double>>&);

}  // namespace ecw::nonorth
