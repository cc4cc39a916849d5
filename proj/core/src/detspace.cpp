#include "ecw/detspace.hpp"

#include <algorithm>
#include <bit>
#include <cmath>

namespace ecw::det {

namespace {

// All masks with n bits chosen from the given positions, in lexicographic
// order of the resulting mask value.
void combinations(const std::vector<int>& positions, int n, std::vector<DetMask>& out) {
  const int P = static_cast<int>(positions.size());
  if (n < 0 || n > P) return;
  std::vector<int> pick(n);
  for (int i = 0; i < n; ++i) pick[i] = i;
  while (true) {
    DetMask m = 0;
    for (int i : pick) m |= (DetMask{1} << positions[i]);
    out.push_back(m);
    int i = n - 1;
    while (i >= 0 && pick[i] == P - n + i) --i;
    if (i < 0) break;
    ++pick[i];
    for (int j = i + 1; j < n; ++j) pick[j] = pick[j - 1] + 1;
  }
}

int popcount_below(DetMask m, int p) {
  const DetMask below = (p == 0) ? 0 : (m & ((DetMask{1} << p) - 1));
  return std::popcount(below);
}

}  // namespace

void DetSpace::build_index() {
  std::sort(dets_.begin(), dets_.end());
  index_.reserve(dets_.size() * 2);
  for (std::size_t i = 0; i < dets_.size(); ++i) index_[dets_[i]] = i;
}

DetSpace DetSpace::sector(int n_spin_orbitals, int n_alpha, int n_beta) {
  if (n_spin_orbitals <= 0 || n_spin_orbitals > 64 || n_spin_orbitals % 2 != 0)
    throw ValidationError("DetSpace: n_spin_orbitals must be even and in 2..64");
  const int n_spatial = n_spin_orbitals / 2;
  if (n_alpha < 0 || n_beta < 0 || n_alpha > n_spatial || n_beta > n_spatial)
    throw ValidationError("DetSpace: electron count exceeds available orbitals");
  std::vector<int> even, odd;
  for (int p = 0; p < n_spin_orbitals; p += 2) even.push_back(p);
  for (int p = 1; p < n_spin_orbitals; p += 2) odd.push_back(p);
  std::vector<DetMask> am, bm;
  combinations(even, n_alpha, am);
  combinations(odd, n_beta, bm);
  DetSpace sp;
  sp.n_orb_ = n_spin_orbitals;
  sp.n_elec_ = n_alpha + n_beta;
  sp.dets_.reserve(am.size() * bm.size());
  for (DetMask a : am)
    for (DetMask b : bm) sp.dets_.push_back(a | b);
  sp.build_index();
  return sp;
}

DetSpace DetSpace::full(int n_spin_orbitals, int n_electrons) {
  if (n_spin_orbitals <= 0 || n_spin_orbitals > 64)
    throw ValidationError("DetSpace: n_spin_orbitals must be in 1..64");
  if (n_electrons < 0 || n_electrons > n_spin_orbitals)
    throw ValidationError("DetSpace: electron count exceeds available orbitals");
  std::vector<int> all(n_spin_orbitals);
  for (int p = 0; p < n_spin_orbitals; ++p) all[p] = p;
  DetSpace sp;
  sp.n_orb_ = n_spin_orbitals;
  sp.n_elec_ = n_electrons;
  combinations(all, n_electrons, sp.dets_);
  sp.build_index();
  return sp;
}

int annihilation_phase(DetMask m, int p) {
  return (popcount_below(m, p) % 2 == 0) ? 1 : -1;
}

Vec apply_one_body(const DetSpace& space, const Mat& A, const Vec& v) {
  const int M = space.n_orb();
  require_square(A, M, "apply_one_body operator");
  if (v.size() != static_cast<Eigen::Index>(space.size()))
    throw DimensionError("apply_one_body: vector/space size mismatch");
  Vec out = Vec::Zero(v.size());
  for (std::size_t k = 0; k < space.size(); ++k) {
    const double c = v[static_cast<Eigen::Index>(k)];
    if (c == 0.0) continue;
    const DetMask m = space.mask(k);
    for (int q = 0; q < M; ++q) {
      if (!(m >> q & 1)) continue;
      const int ph_q = annihilation_phase(m, q);
      const DetMask m1 = m & ~(DetMask{1} << q);
      for (int p = 0; p < M; ++p) {
        if (A(p, q) == 0.0) continue;
        if (m1 >> p & 1) continue;
        const int ph_p = annihilation_phase(m1, p);
        const DetMask m2 = m1 | (DetMask{1} << p);
        const auto j = space.index(m2);
        if (j >= 0) out[j] += A(p, q) * ph_q * ph_p * c;
      }
    }
  }
  return out;
}

double slater_condon_diagonal(const Hamiltonian& H, DetMask m) {
  double e = H.e_core;
  std::vector<int> occ;
  for (int p = 0; p < H.n_spin_orbitals; ++p)
    if (m >> p & 1) occ.push_back(p);
  for (int p : occ) e += H.h(p, p);
  for (int p : occ)
    for (int q : occ) e += 0.5 * H.g(p, q, p, q);
  return e;
}

Vec apply_hamiltonian(const DetSpace& space, const Hamiltonian& H, const Vec& v) {
  const int M = space.n_orb();
  if (H.n_spin_orbitals != M) throw DimensionError("apply_hamiltonian: dimension mismatch");
  if (v.size() != static_cast<Eigen::Index>(space.size()))
    throw DimensionError("apply_hamiltonian: vector/space size mismatch");
  Vec out = Vec::Zero(v.size());
  std::vector<int> occ, vir;
  occ.reserve(space.n_elec());
  vir.reserve(M);
  for (std::size_t k = 0; k < space.size(); ++k) {
    const double c = v[static_cast<Eigen::Index>(k)];
    if (c == 0.0) continue;
    const DetMask m = space.mask(k);
    occ.clear();
    vir.clear();
    for (int p = 0; p < M; ++p) (m >> p & 1 ? occ : vir).push_back(p);

    out[static_cast<Eigen::Index>(k)] += slater_condon_diagonal(H, m) * c;

    // single excitations q -> p
    for (int q : occ) {
      const DetMask m1 = m & ~(DetMask{1} << q);
      const int ph_q = annihilation_phase(m, q);
      for (int p : vir) {
        double amp = H.h(p, q);
        for (int r : occ)
          if (r != q) amp += H.g(p, r, q, r);
        if (amp == 0.0) continue;
        const int ph_p = annihilation_phase(m1, p);
        const auto j = space.index(m1 | (DetMask{1} << p));
        if (j >= 0) out[j] += amp * ph_q * ph_p * c;
      }
    }

    // double excitations (q1<q2) -> (p1<p2); matrix element g(p1,p2,q1,q2)
    for (std::size_t iq1 = 0; iq1 < occ.size(); ++iq1)
      for (std::size_t iq2 = iq1 + 1; iq2 < occ.size(); ++iq2) {
        const int q1 = occ[iq1], q2 = occ[iq2];
        const DetMask m1 = m & ~(DetMask{1} << q1);
        const int ph1 = annihilation_phase(m, q1);
        const DetMask m2 = m1 & ~(DetMask{1} << q2);
        const int ph2 = annihilation_phase(m1, q2);
        for (std::size_t ip1 = 0; ip1 < vir.size(); ++ip1)
          for (std::size_t ip2 = ip1 + 1; ip2 < vir.size(); ++ip2) {
            const int p1 = vir[ip1], p2 = vir[ip2];
            const double amp = H.g(p1, p2, q1, q2);
            if (amp == 0.0) continue;
            // apply a+_p2 then a+_p1 to match <..| a+_p1 a+_p2 a_q2 a_q1 |..>
            const int ph3 = annihilation_phase(m2, p2);
            const DetMask m3 = m2 | (DetMask{1} << p2);
            const int ph4 = annihilation_phase(m3, p1);
            const auto j = space.index(m3 | (DetMask{1} << p1));
            if (j >= 0) out[j] += amp * ph1 * ph2 * ph3 * ph4 * c;
          }
      }
  }
  return out;
}

Mat build_dense_one_body_bruteforce(const DetSpace& space, const Mat& A) {
  const int M = space.n_orb();
  const auto dim = static_cast<Eigen::Index>(space.size());
  Mat out = Mat::Zero(dim, dim);
  for (Eigen::Index k = 0; k < dim; ++k) {
    const DetMask m = space.mask(static_cast<std::size_t>(k));
    for (int q = 0; q < M; ++q) {
      if (!(m >> q & 1)) continue;
      const int ph_q = annihilation_phase(m, q);
      const DetMask m1 = m & ~(DetMask{1} << q);
      for (int p = 0; p < M; ++p) {
        if (m1 >> p & 1) continue;
        const int ph_p = annihilation_phase(m1, p);
        const auto j = space.index(m1 | (DetMask{1} << p));
        if (j >= 0) out(j, k) += A(p, q) * ph_q * ph_p;
      }
    }
  }
  return out;
}

Mat build_dense_hamiltonian_bruteforce(const DetSpace& space, const Hamiltonian& H) {
  const int M = space.n_orb();
  const auto dim = static_cast<Eigen::Index>(space.size());
  Mat out = build_dense_one_body_bruteforce(space, H.h);
  out += H.e_core * Mat::Identity(dim, dim);
  // 1/4 sum_pqrs g(p,q,r,s) a+_p a+_q a_s a_r, applied literally
  for (Eigen::Index k = 0; k < dim; ++k) {
    const DetMask m = space.mask(static_cast<std::size_t>(k));
    for (int r = 0; r < M; ++r) {
      if (!(m >> r & 1)) continue;
      const int ph_r = annihilation_phase(m, r);
      const DetMask m1 = m & ~(DetMask{1} << r);
      for (int s = 0; s < M; ++s) {
        if (!(m1 >> s & 1)) continue;
        const int ph_s = annihilation_phase(m1, s);
        const DetMask m2 = m1 & ~(DetMask{1} << s);
        for (int q = 0; q < M; ++q) {
          if (m2 >> q & 1) continue;
          const int ph_q = annihilation_phase(m2, q);
          const DetMask m3 = m2 | (DetMask{1} << q);
          for (int p = 0; p < M; ++p) {
            if (m3 >> p & 1) continue;
            const double amp = H.g(p, q, r, s);
            if (amp == 0.0) continue;
            const int ph_p = annihilation_phase(m3, p);
            const auto j = space.index(m3 | (DetMask{1} << p));
            if (j >= 0) out(j, k) += 0.25 * amp * ph_r * ph_s * ph_q * ph_p;
          }
        }
      }
    }
  }
  return out;
}

Mat build_dense_hamiltonian(const DetSpace& space, const Hamiltonian& H) {
  const auto dim = static_cast<Eigen::Index>(space.size());
  Mat out(dim, dim);
  Vec e = Vec::Zero(dim);
  for (Eigen::Index j = 0; j < dim; ++j) {
    e[j] = 1.0;
    out.col(j) = apply_hamiltonian(space, H, e);
    e[j] = 0.0;
  }
  return out;
}

namespace {

void fix_phase(Vec& v) {
  Eigen::Index imax = 0;
  v.cwiseAbs().maxCoeff(&imax);
  if (v[imax] < 0) v = -v;
}

}  // namespace

FciResult fci_solve(const DetSpace& space, const Hamiltonian& H, int k) {
  if (space.size() > 100000)
    throw ValidationError("fci_solve: determinant space too large (" +
                          std::to_string(space.size()) + " > 100000)");
  if (k <= 0 || k > static_cast<int>(space.size()))
    throw ValidationError("fci_solve: requested " + std::to_string(k) + " states from a space of " +
                          std::to_string(space.size()));
  const Mat Hd = build_dense_hamiltonian(space, H);
  Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (Hd + Hd.transpose()));
  FciResult r;
  r.energies.resize(k);
  r.states.resize(k);
  for (int i = 0; i < k; ++i) {
    r.energies[i] = es.eigenvalues()[i];
    r.states[i] = es.eigenvectors().col(i);
    fix_phase(r.states[i]);
  }
  return r;
}

Mat fci_tdm(const DetSpace& space, const Vec& bra, const Vec& ket) {
  const int M = space.n_orb();
  if (bra.size() != ket.size() || bra.size() != static_cast<Eigen::Index>(space.size()))
    throw DimensionError("fci_tdm: sector mismatch");
  Mat g = Mat::Zero(M, M);
  for (std::size_t k = 0; k < space.size(); ++k) {
    const double c = ket[static_cast<Eigen::Index>(k)];
    if (c == 0.0) continue;
    const DetMask m = space.mask(k);
    for (int p = 0; p < M; ++p) {
      if (!(m >> p & 1)) continue;
      const int ph_p = annihilation_phase(m, p);
      const DetMask m1 = m & ~(DetMask{1} << p);
      for (int q = 0; q < M; ++q) {
        if (m1 >> q & 1) continue;
        const int ph_q = annihilation_phase(m1, q);
        const auto j = space.index(m1 | (DetMask{1} << q));
        if (j >= 0) g(p, q) += ph_p * ph_q * c * bra[j];
      }
    }
  }
  return g;
}

Tensor4 fci_tdm2(const DetSpace& space, const Vec& bra, const Vec& ket) {
  const int M = space.n_orb();
  if (bra.size() != ket.size() || bra.size() != static_cast<Eigen::Index>(space.size()))
    throw DimensionError("fci_tdm2: sector mismatch");
  Tensor4 g2(M);
  for (std::size_t k = 0; k < space.size(); ++k) {
    const double c = ket[static_cast<Eigen::Index>(k)];
    if (c == 0.0) continue;
    const DetMask m = space.mask(k);
    // gamma2(a,b,ap,bp) = <bra| a+_ap a+_bp a_b a_a |ket>
    for (int a = 0; a < M; ++a) {
      if (!(m >> a & 1)) continue;
      const int ph_a = annihilation_phase(m, a);
      const DetMask m1 = m & ~(DetMask{1} << a);
      for (int b = 0; b < M; ++b) {
        if (!(m1 >> b & 1)) continue;
        const int ph_b = annihilation_phase(m1, b);
        const DetMask m2 = m1 & ~(DetMask{1} << b);
        for (int bp = 0; bp < M; ++bp) {
          if (m2 >> bp & 1) continue;
          const int ph_bp = annihilation_phase(m2, bp);
          const DetMask m3 = m2 | (DetMask{1} << bp);
          for (int ap = 0; ap < M; ++ap) {
            if (m3 >> ap & 1) continue;
            const int ph_ap = annihilation_phase(m3, ap);
            const auto j = space.index(m3 | (DetMask{1} << ap));
            if (j >= 0) g2(a, b, ap, bp) += ph_a * ph_b * ph_bp * ph_ap * c * bra[j];
          }
        }
      }
    }
  }
  return g2;
}

namespace {

template <class Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> expand_slater_impl(
    const DetSpace& space, const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& C) {
  const int M = space.n_orb();
  const int N = static_cast<int>(C.cols());
  if (C.rows() != M) throw DimensionError("expand_slater: coefficient rows != n_spin_orbitals");
  if (N != space.n_elec()) throw DimensionError("expand_slater: columns != electron count");
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> out(space.size());
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> sub(N, N);
  std::vector<int> rows(N);
  for (std::size_t k = 0; k < space.size(); ++k) {
    const DetMask m = space.mask(k);
    int n = 0;
    for (int p = 0; p < M; ++p)
      if (m >> p & 1) rows[n++] = p;
    for (int i = 0; i < N; ++i) sub.row(i) = C.row(rows[i]);
    out[static_cast<Eigen::Index>(k)] = (N == 0) ? Scalar{1} : sub.determinant();
  }
  return out;
}

}  // namespace

Vec expand_slater(const DetSpace& space, const Mat& C) { return expand_slater_impl<double>(space, C); }

CVec expand_slater(const DetSpace& space, const CMat& C) {
  return expand_slater_impl<std::complex<double>>(space, C);
}

}  // namespace ecw::det
