#include <benchmark/benchmark.h>

#include "ecw/cc.hpp"
#include "ecw/detspace.hpp"
#include "ecw/hf.hpp"
#include "ecw/nonorth.hpp"
#include "ecw/oracle.hpp"

using namespace ecw;

namespace {

std::uint64_t g_rng_state = 12345;

double uniform() {
  g_rng_state += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = g_rng_state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  z ^= z >> 31;
  return 2.0 * ((static_cast<double>(z >> 11) + 0.5) * 0x1.0p-53) - 1.0;
}

Mat random_orthonormal(int rows, int cols) {
  Mat m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = uniform();
  Eigen::HouseholderQR<Mat> qr(m);
  return qr.householderQ() * Mat::Identity(rows, cols);
}

// small closed-shell chain with on-site repulsion; orthonormal site basis
Hamiltonian chain_hamiltonian(int n_sites) {
  FcidumpData d;
  d.norb = n_sites;
  d.nelec = n_sites;
  d.ms2 = 0;
  d.h1 = Mat::Zero(n_sites, n_sites);
  for (int i = 0; i + 1 < n_sites; ++i) d.h1(i, i + 1) = d.h1(i + 1, i) = -1.0;
  d.eri = Tensor4(n_sites);
  for (int i = 0; i < n_sites; ++i) d.eri(i, i, i, i) = 1.0;
  return to_spin_orbital(d);
}

void bm_fci_solve(benchmark::State& state) {
  const int n_sites = static_cast<int>(state.range(0));
  const auto H = chain_hamiltonian(n_sites);
  const auto space = det::DetSpace::sector(H.n_spin_orbitals, H.n_alpha, H.n_beta);
  for (auto _ : state) {
    benchmark::DoNotOptimize(det::fci_solve(space, H, 1));
  }
  state.SetLabel(std::to_string(space.size()) + " determinants");
}

void bm_tdm2(benchmark::State& state) {
  const int m = static_cast<int>(state.range(0));
  const int n = m / 2;
  const Mat s = Mat::Identity(m, m);
  const Mat bra = random_orthonormal(m, n);
  const Mat ket = random_orthonormal(m, n);
  for (auto _ : state) {
    benchmark::DoNotOptimize(nonorth::tdm2<double>(bra, ket, s));
  }
}

void bm_scf(benchmark::State& state) {
  const auto H = chain_hamiltonian(static_cast<int>(state.range(0)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        hf::scf_solve(H, {}, constraints::ConstraintSet{}, 1, hf::ScfConfig{}));
  }
}

void bm_cc_unconstrained(benchmark::State& state) {
  const auto H = chain_hamiltonian(static_cast<int>(state.range(0)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(cc::cc_solve(H, {}, constraints::ConstraintSet{}, 2, cc::CcConfig{}));
  }
}

void bm_hbar_matrix(benchmark::State& state) {
  const auto H = chain_hamiltonian(static_cast<int>(state.range(0)));
  const auto ref = hf::scf_solve(H, {}, constraints::ConstraintSet{}, 1, hf::ScfConfig{});
  const auto H_mo = cc::transform_to_basis(H, ref.states[0].c_all);
  cc::CcWorkspace ws(H_mo, ref.states[0].eps);
  const Vec t = cc::mp2_guess(ws, cc::CcConfig{});
  for (auto _ : state) {
    benchmark::DoNotOptimize(cc::build_hbar_matrix(ws, t));
  }
  state.SetLabel(std::to_string(ws.subspace_dim()) + "x" + std::to_string(ws.subspace_dim()));
}

}  // namespace

BENCHMARK(bm_fci_solve)->Arg(4)->Arg(5)->Arg(6)->Unit(benchmark::kMillisecond);
BENCHMARK(bm_tdm2)->Arg(6)->Arg(8)->Arg(10)->Arg(12)->Unit(benchmark::kMicrosecond);
BENCHMARK(bm_scf)->Arg(3)->Arg(4)->Arg(6)->Unit(benchmark::kMillisecond);
BENCHMARK(bm_cc_unconstrained)->Arg(2)->Arg(3)->Arg(4)->Unit(benchmark::kMillisecond);
BENCHMARK(bm_hbar_matrix)->Arg(3)->Arg(4)->Arg(6)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
