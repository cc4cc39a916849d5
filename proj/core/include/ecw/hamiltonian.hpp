#pragma once

#include <iosfwd>
#include <string>

#include "ecw/types.hpp"

namespace ecw {

/// Second-quantized model Hamiltonian over M spin-orbitals:
///   H = e_core + sum_pq h(p,q) a+_p a_q
///            + 1/4 sum_pqrs g(p,q,r,s) a+_p a+_q a_s a_r
/// with g the antisymmetrized two-electron tensor <pq||rs>.
/// Spin-orbital ordering is interleaved: index 2P is the alpha spin-orbital of
/// spatial orbital P, index 2P+1 its beta partner.
struct Hamiltonian {
  int n_spin_orbitals = 0;  // M
  Mat h;                    // M x M, Hermitian
  Tensor4 g;                // <pq||rs>, antisymmetrized
  double e_core = 0.0;
  Mat s;                    // M x M basis overlap; identity for orthonormal input
  int n_alpha = 0;
  int n_beta = 0;

  int n_electrons() const { return n_alpha + n_beta; }

  /// Checks the type invariants (Hermiticity of h and s, positive-definite s,
  /// antisymmetry and Hermiticity of g). Throws ValidationError.
  void validate() const;
};

enum class PropertyKind { dipole_x, dipole_y, dipole_z, kinetic, custom };

PropertyKind property_kind_from_string(const std::string& s);
std::string to_string(PropertyKind k);

/// One-body observable sum_pq a(p,q) a+_p a_q in the same basis as the
/// Hamiltonian it accompanies.
struct PropertyOperator {
  std::string id;
  Mat a;  // M x M
  PropertyKind kind = PropertyKind::custom;
  bool hermitian = true;
};

/// Raw FCIDUMP content in the file's own conventions: spatial orbitals,
/// chemists' notation (ij|kl), 1-based indices collapsed to 0-based here.
struct FcidumpData {
  int norb = 0;
  int nelec = 0;
  int ms2 = 0;
  Mat h1;       // norb x norb
  Tensor4 eri;  // chemists' (ij|kl), full 8-fold symmetric storage
  double e_core = 0.0;
};

/// Parses an FCIDUMP stream. Throws ParseError (with a line number) on
/// malformed records and ValidationError on inconsistent NELEC/MS2.
FcidumpData parse_fcidump_stream(std::istream& in);
FcidumpData parse_fcidump_file(const std::string& path);

/// Writes the canonical unique integral records in full round-trip precision.
void write_fcidump_stream(const FcidumpData& d, std::ostream& out);
void write_fcidump_file(const FcidumpData& d, const std::string& path);

/// Expands spatial integrals to the interleaved spin-orbital basis and
/// antisymmetrizes the two-body tensor. Overlap defaults to identity.
Hamiltonian to_spin_orbital(const FcidumpData& d);

/// g[p,q,r,s] <- (g[p,q,r,s] - g[q,p,r,s] - g[p,q,s,r] + g[q,p,s,r]) / 4 style
/// projection onto the antisymmetric part; idempotent.
Tensor4 antisymmetrize(const Tensor4& g);

}  // namespace ecw
