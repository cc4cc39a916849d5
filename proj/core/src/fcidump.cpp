#include "ecw/hamiltonian.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

namespace ecw {

namespace {

std::string upper(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::toupper(c); });
  return s;
}

// Pulls "KEY=integer" out of the namelist header, ignoring everything else
// (ORBSYM lists, ISYM, UHF flags and so on).
bool find_header_int(const std::string& header, const std::string& key, int& out) {
  auto pos = header.find(key + "=");
  if (pos == std::string::npos) return false;
  pos += key.size() + 1;
  while (pos < header.size() && std::isspace(static_cast<unsigned char>(header[pos]))) ++pos;
  std::size_t end = pos;
  if (end < header.size() && (header[end] == '+' || header[end] == '-')) ++end;
  while (end < header.size() && std::isdigit(static_cast<unsigned char>(header[end]))) ++end;
  if (end == pos) return false;
  out = std::stoi(header.substr(pos, end - pos));
  return true;
}

}  // namespace

FcidumpData parse_fcidump_stream(std::istream& in) {
  std::string line;
  std::string header;
  int line_no = 0;
  bool header_done = false;
  while (std::getline(in, line)) {
    ++line_no;
    header += " " + upper(line);
    if (header.find('/') != std::string::npos || header.find("&END") != std::string::npos) {
      header_done = true;
      break;
    }
  }
  if (!header_done) throw ParseError("FCIDUMP: namelist header never terminated by '/' or &END");

  FcidumpData d;
  if (!find_header_int(header, "NORB", d.norb))
    throw ParseError("FCIDUMP: header is missing NORB");
  if (!find_header_int(header, "NELEC", d.nelec))
    throw ParseError("FCIDUMP: header is missing NELEC");
  if (!find_header_int(header, "MS2", d.ms2)) d.ms2 = 0;

  if (d.norb <= 0) throw ValidationError("FCIDUMP: NORB must be positive");
  if (d.nelec < 0 || d.nelec > 2 * d.norb)
    throw ValidationError("FCIDUMP: NELEC out of range for NORB=" + std::to_string(d.norb));
  if ((d.nelec + d.ms2) % 2 != 0 || std::abs(d.ms2) > d.nelec)
    throw ValidationError("FCIDUMP: NELEC=" + std::to_string(d.nelec) +
                          " inconsistent with MS2=" + std::to_string(d.ms2));

  d.h1 = Mat::Zero(d.norb, d.norb);
  d.eri = Tensor4(d.norb);

  auto check_index = [&](int i, int ln) {
    if (i < 0 || i > d.norb)
      throw ParseError("FCIDUMP line " + std::to_string(ln) + ": orbital index " +
                       std::to_string(i) + " outside 1.." + std::to_string(d.norb));
  };

  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ss(line);
    std::vector<std::string> tok;
    std::string t;
    while (ss >> t) tok.push_back(t);
    if (tok.empty()) continue;
    if (tok.size() != 5)
      throw ParseError("FCIDUMP line " + std::to_string(line_no) + ": expected 'value i j k l', got " +
                       std::to_string(tok.size()) + " fields");
    double value = 0.0;
    std::array<int, 4> ix{};
    try {
      std::size_t used = 0;
      value = std::stod(tok[0], &used);
      if (used != tok[0].size()) throw std::invalid_argument(tok[0]);
      for (int k = 0; k < 4; ++k) ix[k] = std::stoi(tok[k + 1]);
    } catch (const std::exception&) {
      throw ParseError("FCIDUMP line " + std::to_string(line_no) + ": malformed record '" + line + "'");
    }
    for (int v : ix) check_index(v, line_no);

    const int i = ix[0], j = ix[1], k = ix[2], l = ix[3];
    if (i == 0 && j == 0 && k == 0 && l == 0) {
      d.e_core = value;
    } else if (k == 0 && l == 0) {
      if (i == 0 || j == 0)
        throw ParseError("FCIDUMP line " + std::to_string(line_no) + ": one-body record with a zero index");
      d.h1(i - 1, j - 1) = value;
      d.h1(j - 1, i - 1) = value;
    } else if (i == 0 || j == 0 || k == 0 || l == 0) {
      throw ParseError("FCIDUMP line " + std::to_string(line_no) + ": mixed zero/nonzero indices");
    } else {
      const int p = i - 1, q = j - 1, r = k - 1, s = l - 1;
      // chemists' (pq|rs); real-orbital 8-fold symmetry
      const std::array<std::array<int, 4>, 8> perms{{{p, q, r, s},
                                                     {q, p, r, s},
                                                     {p, q, s, r},
                                                     {q, p, s, r},
                                                     {r, s, p, q},
                                                     {s, r, p, q},
                                                     {r, s, q, p},
                                                     {s, r, q, p}}};
      for (const auto& e : perms) d.eri(e[0], e[1], e[2], e[3]) = value;
    }
  }
  return d;
}

FcidumpData parse_fcidump_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open FCIDUMP file: " + path);
  return parse_fcidump_stream(in);
}

void write_fcidump_stream(const FcidumpData& d, std::ostream& out) {
  out << "&FCI NORB=" << d.norb << ",NELEC=" << d.nelec << ",MS2=" << d.ms2 << ",\n/\n";
  char buf[64];
  auto emit = [&](double v, int i, int j, int k, int l) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    out << buf << " " << i << " " << j << " " << k << " " << l << "\n";
  };
  // unique chemists' quadruples: i>=j, k>=l, (i,j) >= (k,l)
  for (int i = 0; i < d.norb; ++i)
    for (int j = 0; j <= i; ++j)
      for (int k = 0; k <= i; ++k)
        for (int l = 0; l <= k; ++l) {
          if (k == i && l > j) continue;
          const double v = d.eri(i, j, k, l);
          if (v != 0.0) emit(v, i + 1, j + 1, k + 1, l + 1);
        }
  for (int i = 0; i < d.norb; ++i)
    for (int j = 0; j <= i; ++j)
      if (d.h1(i, j) != 0.0) emit(d.h1(i, j), i + 1, j + 1, 0, 0);
  emit(d.e_core, 0, 0, 0, 0);
}

void write_fcidump_file(const FcidumpData& d, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  write_fcidump_stream(d, out);
  if (!out) throw IoError("write failed: " + path);
}

Hamiltonian to_spin_orbital(const FcidumpData& d) {
  Hamiltonian H;
  const int M = 2 * d.norb;
  H.n_spin_orbitals = M;
  H.e_core = d.e_core;
  H.n_alpha = (d.nelec + d.ms2) / 2;
  H.n_beta = (d.nelec - d.ms2) / 2;
  if (H.n_alpha < 0 || H.n_beta < 0 || H.n_alpha > d.norb || H.n_beta > d.norb)
    throw ValidationError("FCIDUMP: electron counts per spin outside 0..NORB");

  H.h = Mat::Zero(M, M);
  for (int P = 0; P < d.norb; ++P)
    for (int Q = 0; Q < d.norb; ++Q)
      for (int sp = 0; sp < 2; ++sp) H.h(2 * P + sp, 2 * Q + sp) = d.h1(P, Q);

  // physicists' <pq|rs> = (PR|QS) delta(sp_p,sp_r) delta(sp_q,sp_s), then
  // antisymmetrize: g = <pq|rs> - <pq|sr>.
  H.g = Tensor4(M);
  auto phys = [&](int p, int q, int r, int s) -> double {
    if (p % 2 != r % 2 || q % 2 != s % 2) return 0.0;
    return d.eri(p / 2, r / 2, q / 2, s / 2);
  };
  for (int p = 0; p < M; ++p)
    for (int q = 0; q < M; ++q)
      for (int r = 0; r < M; ++r)
        for (int s = 0; s < M; ++s) H.g(p, q, r, s) = phys(p, q, r, s) - phys(p, q, s, r);

  H.s = Mat::Identity(M, M);
  return H;
}

Tensor4 antisymmetrize(const Tensor4& g) {
  const int n = g.dim();
  Tensor4 out(n);
  for (int p = 0; p < n; ++p)
    for (int q = 0; q < n; ++q)
      for (int r = 0; r < n; ++r)
        for (int s = 0; s < n; ++s)
          out(p, q, r, s) =
              0.25 * (g(p, q, r, s) - g(q, p, r, s) - g(p, q, s, r) + g(q, p, s, r));
  return out;
}

void Hamiltonian::validate() const {
  const int M = n_spin_orbitals;
  require_square(h, M, "Hamiltonian.h");
  require_square(s, M, "Hamiltonian.s");
  if (g.dim() != M) throw DimensionError("Hamiltonian.g dimension mismatch");
  if ((h - h.adjoint()).cwiseAbs().maxCoeff() > 1e-12)
    throw ValidationError("Hamiltonian.h is not Hermitian to 1e-12");
  if ((s - s.adjoint()).cwiseAbs().maxCoeff() > 1e-12)
    throw ValidationError("Hamiltonian.s is not Hermitian to 1e-12");
  Eigen::SelfAdjointEigenSolver<Mat> es(s);
  if (es.eigenvalues().minCoeff() <= 0.0)
    throw ValidationError("Hamiltonian.s is not positive definite");
  for (int p = 0; p < M; ++p)
    for (int q = 0; q < M; ++q)
      for (int r = 0; r < M; ++r)
        for (int t = 0; t < M; ++t) {
          const double v = g(p, q, r, t);
          if (std::abs(v + g(q, p, r, t)) > 1e-12 || std::abs(v + g(p, q, t, r)) > 1e-12 ||
              std::abs(v - g(r, t, p, q)) > 1e-12)
            throw ValidationError("Hamiltonian.g violates antisymmetry/Hermiticity");
        }
  if (n_alpha < 0 || n_beta < 0 || n_alpha + n_beta > M)
    throw ValidationError("Hamiltonian electron counts out of range");
}

PropertyKind property_kind_from_string(const std::string& s) {
  if (s == "dipole_x") return PropertyKind::dipole_x;
  if (s == "dipole_y") return PropertyKind::dipole_y;
  if (s == "dipole_z") return PropertyKind::dipole_z;
  if (s == "kinetic") return PropertyKind::kinetic;
  if (s == "custom") return PropertyKind::custom;
  throw ValidationError("unknown property kind: " + s);
}

std::string to_string(PropertyKind k) {
  switch (k) {
    case PropertyKind::dipole_x: return "dipole_x";
    case PropertyKind::dipole_y: return "dipole_y";
    case PropertyKind::dipole_z: return "dipole_z";
    case PropertyKind::kinetic: return "kinetic";
    case PropertyKind::custom: return "custom";
  }
  return "custom";
}

}  // namespace ecw
