#include <doctest.h>

#include <fstream>
#include <sstream>
#include <unistd.h>

#include "ecw/detspace.hpp"
#include "ecw/hamiltonian.hpp"
#include "ecw/json_io.hpp"
#include "test_helpers.hpp"

using namespace ecw;

TEST_CASE("one-orbital fcidump expands and antisymmetrizes") {
  std::istringstream in(
      "&FCI NORB=1,NELEC=2,MS2=0,\n/\n"
      "0.5 1 1 1 1\n"
      "-1.0 1 1 0 0\n"
      "0.0 0 0 0 0\n");
  const auto H = to_spin_orbital(parse_fcidump_stream(in));
  CHECK(H.n_spin_orbitals == 2);
  CHECK(H.n_alpha == 1);
  CHECK(H.n_beta == 1);
  CHECK(H.h(0, 0) == doctest::Approx(-1.0));
  CHECK(H.h(1, 1) == doctest::Approx(-1.0));
  CHECK(H.g(0, 1, 0, 1) == doctest::Approx(0.5));
  CHECK(H.g(0, 1, 1, 0) == doctest::Approx(-0.5));
  CHECK(H.g(1, 0, 0, 1) == doctest::Approx(-0.5));
  H.validate();
}

TEST_CASE("h2 fixture ground energy agrees across two dense eigensolver routes") {
  const auto H = test::h2_fixture();
  const auto space = det::DetSpace::sector(H.n_spin_orbitals, H.n_alpha, H.n_beta);
  const Mat hd = det::build_dense_hamiltonian(space, H);

  Eigen::SelfAdjointEigenSolver<Mat> sym(hd);
  Eigen::EigenSolver<Mat> gen(hd);
  double gen_min = 1e300;
  for (int i = 0; i < gen.eigenvalues().size(); ++i)
    gen_min = std::min(gen_min, gen.eigenvalues()[i].real());

  CHECK(sym.eigenvalues()[0] == doctest::Approx(gen_min).scale(1.0).epsilon(1e-10));
  // the fixture is bound and correlated: below the mean-field region
  CHECK(sym.eigenvalues()[0] < -1.11);

  const auto fci = det::fci_solve(space, H, 2);
  CHECK(fci.energies[0] == doctest::Approx(sym.eigenvalues()[0]).scale(1.0).epsilon(1e-10));
}

TEST_CASE("malformed record errors name the line") {
  std::istringstream in(
      "&FCI NORB=1,NELEC=2,MS2=0,\n/\n"
      "0.5 1 1 1\n");
  try {
    parse_fcidump_stream(in);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
}

TEST_CASE("nelec inconsistent with ms2 is rejected") {
  std::istringstream in("&FCI NORB=2,NELEC=2,MS2=1,\n/\n0.0 0 0 0 0\n");
  CHECK_THROWS_AS(parse_fcidump_stream(in), ValidationError);
}

TEST_CASE("index out of range is a parse error") {
  std::istringstream in("&FCI NORB=2,NELEC=2,MS2=0,\n/\n0.5 1 3 0 0\n");
  CHECK_THROWS_AS(parse_fcidump_stream(in), ParseError);
}

TEST_CASE("fcidump round-trips in full precision") {
  test::Rng rng(42);
  FcidumpData d;
  d.norb = 3;
  d.nelec = 4;
  d.ms2 = 0;
  d.h1 = rng.hermitian(3);
  d.eri = Tensor4(3);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j <= i; ++j)
      for (int k = 0; k <= i; ++k)
        for (int l = 0; l <= k; ++l) {
          if (k == i && l > j) continue;
          const double v = rng.uniform();
          const std::array<std::array<int, 4>, 8> perms{{{i, j, k, l},
                                                         {j, i, k, l},
                                                         {i, j, l, k},
                                                         {j, i, l, k},
                                                         {k, l, i, j},
                                                         {l, k, i, j},
                                                         {k, l, j, i},
                                                         {l, k, j, i}}};
          for (const auto& p : perms) d.eri(p[0], p[1], p[2], p[3]) = v;
        }
  d.e_core = 0.7142857142857143;

  std::ostringstream out;
  write_fcidump_stream(d, out);
  std::istringstream in(out.str());
  const auto d2 = parse_fcidump_stream(in);
  CHECK(d2.norb == d.norb);
  CHECK(d2.nelec == d.nelec);
  CHECK(d2.e_core == d.e_core);
  CHECK((d2.h1 - d.h1).cwiseAbs().maxCoeff() == 0.0);
  for (int p = 0; p < 3; ++p)
    for (int q = 0; q < 3; ++q)
      for (int r = 0; r < 3; ++r)
        for (int s = 0; s < 3; ++s) CHECK(d2.eri(p, q, r, s) == d.eri(p, q, r, s));
}

TEST_CASE("antisymmetrization is idempotent") {
  test::Rng rng(7);
  Tensor4 raw(4);
  for (auto& v : raw.data()) v = rng.uniform();
  const Tensor4 a1 = antisymmetrize(raw);
  const Tensor4 a2 = antisymmetrize(a1);
  for (std::size_t i = 0; i < a1.data().size(); ++i)
    CHECK(a2.data()[i] == doctest::Approx(a1.data()[i]).scale(1.0).epsilon(1e-15));
}

TEST_CASE("properties file loads and validates") {
  const auto H = test::h2_fixture();
  const auto pf = io::load_properties(test::fixture("h2_properties.json"), H.n_spin_orbitals);
  CHECK(pf.properties.size() == 4);
  const auto& dip = constraints::find_property(pf.properties, "dipole_z");
  CHECK(dip.kind == PropertyKind::dipole_z);
  CHECK((dip.a - dip.a.transpose()).cwiseAbs().maxCoeff() == 0.0);
  CHECK(!pf.overlap.has_value());

  // shape mismatch against a smaller Hamiltonian
  CHECK_THROWS_AS(io::load_properties(test::fixture("h2_properties.json"), 2), ValidationError);
}

TEST_CASE("identity property parses from literal json") {
  const std::string path = std::string("/tmp/ecw_test_props_") + std::to_string(::getpid()) + ".json";
  {
    std::ofstream out(path);
    out << R"({"properties":[{"id":"number","kind":"custom","hermitian":true,
               "matrix":[1.0,0.0,0.0,1.0]}]})";
  }
  const auto pf = io::load_properties(path, 2);
  CHECK(pf.properties.at(0).a.isApprox(Mat::Identity(2, 2)));
  std::remove(path.c_str());
}

TEST_CASE("duplicate property ids are rejected") {
  const std::string path = std::string("/tmp/ecw_test_dup_") + std::to_string(::getpid()) + ".json";
  {
    std::ofstream out(path);
    out << R"({"properties":[
      {"id":"a","kind":"custom","hermitian":true,"matrix":[1.0,0.0,0.0,1.0]},
      {"id":"a","kind":"custom","hermitian":true,"matrix":[1.0,0.0,0.0,1.0]}]})";
  }
  CHECK_THROWS_AS(io::load_properties(path, 2), ValidationError);
  std::remove(path.c_str());
}

TEST_CASE("hamiltonian validation rejects broken symmetry") {
  auto H = test::h2_fixture();
  H.validate();
  H.h(0, 1) += 1e-6;  // break Hermiticity
  CHECK_THROWS_AS(H.validate(), ValidationError);

  auto H2b = test::h2_fixture();
  H2b.g(0, 1, 0, 1) += 1e-6;  // break antisymmetry consistency
  CHECK_THROWS_AS(H2b.validate(), ValidationError);
}

TEST_CASE("named hermitian kinds are checked regardless of the flag") {
  const std::string path = std::string("/tmp/ecw_test_kind_") + std::to_string(::getpid()) + ".json";
  {
    std::ofstream out(path);
    out << R"({"properties":[{"id":"d","kind":"dipole_z","hermitian":false,
               "matrix":[0.0,1.0,0.5,0.0]}]})";
  }
  CHECK_THROWS_AS(io::load_properties(path, 2), ValidationError);
  std::remove(path.c_str());
}
