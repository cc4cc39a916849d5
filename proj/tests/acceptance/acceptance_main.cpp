// Acceptance suite: one self-contained check per release criterion, one
// PASS/FAIL line each, nonzero exit when anything fails.

#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <string>
#include <vector>

#include "ecw/cc.hpp"
#include "ecw/detspace.hpp"
#include "ecw/hf.hpp"
#include "ecw/json_io.hpp"
#include "ecw/nonorth.hpp"
#include "ecw/oracle.hpp"
#include "ecw/report.hpp"
#include "../test_helpers.hpp"

using namespace ecw;
using constraints::ConstraintSet;
using constraints::Loss;

namespace {

int g_failures = 0;

void report(int number, const std::string& what, bool ok, const std::string& detail = "") {
  std::printf("%s: criterion %d - %s%s%s\n", ok ? "PASS" : "FAIL", number, what.c_str(),
              detail.empty() ? "" : " :: ", detail.c_str());
  if (!ok) ++g_failures;
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.3e", v);
  return buf;
}

std::vector<PropertyOperator> h2_props() {
  const auto H = test::h2_fixture();
  return io::load_properties(test::fixture("h2_properties.json"), H.n_spin_orbitals).properties;
}

// ---------------------------------------------------------------------------
// 1. reduction to the standard methods at zero constraint weight
// ---------------------------------------------------------------------------
void criterion_1() {
  const auto H = test::h2_fixture();

  // mean field against the brute-force single-determinant minimizer
  const auto hf_res = hf::scf_solve(H, {}, ConstraintSet{}, 1, hf::ScfConfig{});
  oracle::MinimizeOptions opt;
  opt.grad_tol = 1e-11;
  opt.max_inner = 20000;
  const auto slater = oracle::constrained_slater_minimize(H, {}, ConstraintSet{}, 1, opt);
  const double hf_gap = std::abs(hf_res.report.energies[0] - slater.energies[0]);

  // ccsd ground and every eom root against exact diagonalization
  const int n_states = 6;  // the full two-electron spectrum of this fixture
  const auto cc_res = cc::cc_solve(H, {}, ConstraintSet{}, n_states, cc::CcConfig{});
  const auto space = det::DetSpace::full(4, 2);
  const auto fci = det::fci_solve(space, H, static_cast<int>(space.size()));
  double cc_gap = 0.0;
  for (int n = 0; n < n_states; ++n) {
    double best = 1e300;
    for (double e : fci.energies) best = std::min(best, std::abs(cc_res.energies[n] - e));
    cc_gap = std::max(cc_gap, best);
  }
  const bool ok = hf_res.report.converged && cc_res.report.converged && hf_gap < 1e-8 &&
                  cc_gap < 1e-9;
  report(1, "zero-weight reduction to standard methods", ok,
         "hf gap " + fmt(hf_gap) + ", worst cc/eom gap " + fmt(cc_gap));
}

// ---------------------------------------------------------------------------
// 2. cofactor transition densities against the determinant-space oracle
// ---------------------------------------------------------------------------
void criterion_2() {
  double worst1 = 0.0, worst2 = 0.0;
  int deficient_checked = 0;
  int pair_count = 0;
  for (std::uint64_t trial = 0; trial < 500; ++trial) {
    test::Rng rng(5000 + trial);
    const int n = 2 + static_cast<int>(trial % 3);                   // 2..4 electrons
    const int m = std::max(2 * n, 5 + static_cast<int>(trial % 4));  // up to 8 orbitals
    const Mat s = Mat::Identity(m, m);
    const auto space = det::DetSpace::full(m, n);

    Mat bra, ket;
    const int sel = static_cast<int>(trial % 5);
    const int deficiency = sel == 3 ? 1 : (sel == 4 ? std::min(2, n) : 0);
    if (deficiency == 0) {
      bra = rng.orthonormal(m, n);
      ket = rng.orthonormal(m, n);
    } else {
      const Mat basis = rng.orthonormal(m, m);
      ket = basis.leftCols(n);
      bra = Mat(m, n);
      for (int j = 0; j < n - deficiency; ++j) bra.col(j) = basis.col(j);
      for (int j = 0; j < deficiency; ++j) bra.col(n - deficiency + j) = basis.col(n + j);
      bra = bra * rng.orthonormal(n, n);
      ++deficient_checked;
    }
    ++pair_count;

    const Vec xb = det::expand_slater(space, bra);
    const Vec xk = det::expand_slater(space, ket);

    const Mat a = rng.matrix(m, m);
    const auto td = nonorth::tdm2<double>(bra, ket, s);
    const double one_gap =
        std::abs((a * td.gamma1).trace() - xb.dot(det::apply_one_body(space, a, xk)));
    worst1 = std::max(worst1, one_gap);

    Tensor4 b(m);
    for (auto& v : b.data()) v = rng.uniform();
    double via = 0.0;
    for (std::size_t i = 0; i < b.data().size(); ++i) via += b.data()[i] * td.gamma2.data()[i];
    const Tensor4 g2 = det::fci_tdm2(space, xb, xk);
    double direct = 0.0;
    for (std::size_t i = 0; i < b.data().size(); ++i) direct += b.data()[i] * g2.data()[i];
    worst2 = std::max(worst2, std::abs(via - direct));
  }
  const bool ok = worst1 < 1e-10 && worst2 < 1e-10;
  report(2, "cofactor densities match brute-force second quantization", ok,
         std::to_string(pair_count) + " pairs (" + std::to_string(deficient_checked) +
             " rank-deficient), one-body gap " + fmt(worst1) + ", two-body gap " + fmt(worst2));
}

// ---------------------------------------------------------------------------
// 3. stationarity of converged constrained mean-field solutions
// ---------------------------------------------------------------------------
void criterion_3() {
  const auto H = test::h2_fixture();
  const auto props = h2_props();
  auto cs = constraints::synthesize_experiment(
      H, props,
      {{"dipole_z", 0, 0, 0.5, 1.0, Loss::L2}, {"kinetic", 0, 0, 0.5, 1.0, Loss::L2}},
      constraints::NoiseModel::none, 0);
  for (auto& d : cs.data) d.value += (d.property_id == "dipole_z" ? 0.15 : -0.1);

  hf::ScfConfig cfg;
  cfg.max_iter = 500;
  cfg.lambda_schedule = {0.0, 0.3, 1.0};
  const auto res = hf::scf_solve(H, props, cs, 1, cfg);
  const double brillouin = res.report.trace.back().max_residual;

  // analytic vs central-difference directional derivatives of E + Q
  const Mat c_occ = res.states[0].c_occ;
  Eigen::HouseholderQR<Mat> qr(c_occ);
  const Mat c_virt = Mat(qr.householderQ()).rightCols(2);
  const Mat gamma = c_occ * c_occ.transpose();
  const Mat f = hf::standard_fock(H, gamma);
  constraints::CalcMap calc;
  for (const auto& d : cs.data) {
    const auto& p = constraints::find_property(props, d.property_id);
    calc[{d.property_id, {0, 0}}] =
        nonorth::observable<double>(nonorth::tdm1<double>(c_occ, c_occ, H.s), p.a);
  }
  const Mat v00 = constraints::build_vexp({0, 0}, cs, calc, props);
  const Mat grad_op = f + hf::vexp_same_state(v00, gamma, H.s);

  auto objective = [&](const Mat& c) {
    const Mat g = c * c.transpose();
    constraints::CalcMap cm;
    for (const auto& d : cs.data) {
      const auto& p = constraints::find_property(props, d.property_id);
      cm[{d.property_id, {0, 0}}] =
          nonorth::observable<double>(nonorth::tdm1<double>(c, c, H.s), p.a);
    }
    return hf::hf_energy(H, g) + constraints::eval_Q(cm, cs, {});
  };

  test::Rng rng(31);
  const double h = 1e-5;
  auto probe_directions = [&](const Mat& at_occ, const Mat& at_virt, const Mat& op, int count) {
    double worst = 0.0;
    for (int trial = 0; trial < count; ++trial) {
      const Mat k = rng.matrix(static_cast<int>(at_virt.cols()), static_cast<int>(at_occ.cols()));
      const double analytic = hf::directional_derivative(op, at_occ, at_virt, k);
      auto value_at = [&](double theta) {
        Mat c = at_occ + theta * at_virt * k;
        Eigen::SelfAdjointEigenSolver<Mat> es(c.transpose() * H.s * c);
        c = c * es.eigenvectors() * es.eigenvalues().cwiseSqrt().cwiseInverse().asDiagonal() *
            es.eigenvectors().transpose();
        return objective(c);
      };
      const double f0 = value_at(0.0), fp = value_at(h), fm = value_at(-h);
      const double numeric = (fp - fm) / (2 * h);
      // at a stationary point the derivative sits below the finite-difference
      // resolution, which is set by the directional curvature times h
      const double resolution = std::abs(fp + fm - 2 * f0) / h;
      const double scale = std::max({std::abs(analytic), resolution, 1e-9});
      worst = std::max(worst, std::abs(numeric - analytic) / scale);
    }
    return worst;
  };

  // at the converged solution and at non-stationary probe states
  double worst_rel = probe_directions(c_occ, c_virt, grad_op, 20);
  for (int probe = 0; probe < 3; ++probe) {
    const Mat c_rand = rng.orthonormal(4, 2);
    Eigen::HouseholderQR<Mat> qr2(c_rand);
    const Mat v_rand = Mat(qr2.householderQ()).rightCols(2);
    const Mat g_rand = c_rand * c_rand.transpose();
    constraints::CalcMap cm;
    for (const auto& d : cs.data) {
      const auto& p = constraints::find_property(props, d.property_id);
      cm[{d.property_id, {0, 0}}] =
          nonorth::observable<double>(nonorth::tdm1<double>(c_rand, c_rand, H.s), p.a);
    }
    const Mat op_rand = hf::standard_fock(H, g_rand) +
                        hf::vexp_same_state(constraints::build_vexp({0, 0}, cs, cm, props),
                                            g_rand, H.s);
    const Mat keep_occ = c_occ;  // objective closes over c via the lambda argument only
    auto saved_objective = objective;
    worst_rel = std::max(worst_rel, [&] {
      double worst = 0.0;
      for (int trial = 0; trial < 7; ++trial) {
        const Mat k = rng.matrix(2, 2);
        const double analytic = hf::directional_derivative(op_rand, c_rand, v_rand, k);
        auto value_at = [&](double theta) {
          Mat c = c_rand + theta * v_rand * k;
          Eigen::SelfAdjointEigenSolver<Mat> es(c.transpose() * H.s * c);
          c = c * es.eigenvectors() * es.eigenvalues().cwiseSqrt().cwiseInverse().asDiagonal() *
              es.eigenvectors().transpose();
          return saved_objective(c);
        };
        const double numeric = (value_at(h) - value_at(-h)) / (2 * h);
        worst = std::max(worst, std::abs(numeric - analytic) / std::max(std::abs(analytic), 1e-6));
      }
      return worst;
    }());
    (void)keep_occ;
  }

  const bool ok = res.report.converged && brillouin < 1e-7 && worst_rel < 1e-5;
  report(3, "modified-Brillouin stationarity and gradient consistency", ok,
         "residual " + fmt(brillouin) + ", worst relative derivative gap " + fmt(worst_rel));
}

// ---------------------------------------------------------------------------
// 4. agreement with the constrained brute-force oracle
// ---------------------------------------------------------------------------
void criterion_4() {
  const auto H = test::h2_fixture();
  const auto props = h2_props();
  // state indices refer to the full two-electron spectrum, shared by the
  // generator, the oracle, and the eom solver
  const auto space = det::DetSpace::full(4, 2);

  // coupled-cluster side: noiseless data on the ground state and on the
  // non-degenerate open-shell singlet (state 4 of this fixture)
  const int n_st = 5;
  auto cs_cc = constraints::synthesize_experiment(
      H, props,
      {{"field_mix", 0, 0, 0.5, 0.5, Loss::L2}, {"field_mix", 4, 4, 0.5, 0.5, Loss::L2}},
      constraints::NoiseModel::none, 0);
  cc::CcConfig ccfg;
  ccfg.lambda_schedule = {0.0, 0.25, 1.0};
  ccfg.max_outer = 400;
  const auto cc_res = cc::cc_solve(H, props, cs_cc, n_st, ccfg);
  const auto ora_cc = oracle::constrained_fci_minimize(space, H, props, cs_cc, n_st, {});
  double cc_gap = std::abs(cc_res.report.q - ora_cc.q);
  for (const auto& [key, value] : ora_cc.calc)
    cc_gap = std::max(cc_gap, std::abs(cc_res.calc.at(key) - value));

  auto cs_active = cs_cc;
  cs_active.data[0].value -= 0.02;  // displaced target: the potential stays on
  const auto cc_act = cc::cc_solve(H, props, cs_active, n_st, ccfg);
  const auto ora_act = oracle::constrained_fci_minimize(space, H, props, cs_active, n_st, {});
  double active_gap = std::abs(cc_act.report.q - ora_act.q);
  for (const auto& [key, value] : ora_act.calc)
    active_gap = std::max(active_gap, std::abs(cc_act.calc.at(key) - value));
  const double moved = std::abs(cc_act.calc.at({"field_mix", {0, 0}}) -
                                cc_res.calc.at({"field_mix", {0, 0}}));

  // mean-field side against the single-determinant manifold minimizer; the
  // mixed-structure operator is correlation sensitive, so the noiseless
  // target sits off the mean-field manifold and the fit must respond
  auto cs_hf = constraints::synthesize_experiment(
      H, props,
      {{"field_mix", 0, 0, 0.1, 0.4, Loss::L2}, {"kinetic", 0, 0, 0.5, 0.4, Loss::L2}},
      constraints::NoiseModel::none, 0);
  hf::ScfConfig hcfg;
  hcfg.max_iter = 500;
  hcfg.lambda_schedule = {0.0, 0.3, 1.0};
  const auto hf_res = hf::scf_solve(H, props, cs_hf, 1, hcfg);
  oracle::MinimizeOptions opt;
  opt.grad_tol = 1e-11;
  opt.max_inner = 20000;
  const auto ora_hf = oracle::constrained_slater_minimize(H, props, cs_hf, 1, opt);
  double hf_gap = std::abs(hf_res.report.q - ora_hf.q);
  for (const auto& [key, value] : ora_hf.calc)
    hf_gap = std::max(hf_gap, std::abs(hf_res.calc.at(key) - value));

  const bool ok = cc_res.report.converged && cc_act.report.converged &&
                  hf_res.report.converged && cc_gap < 1e-6 && active_gap < 1e-6 &&
                  hf_gap < 1e-6 && moved > 1e-4;
  report(4, "constrained solutions match the brute-force oracle", ok,
         "cc gap " + fmt(cc_gap) + ", active-potential gap " + fmt(active_gap) + " (shift " +
             fmt(moved) + "), hf gap " + fmt(hf_gap));
}

// ---------------------------------------------------------------------------
// 5. weight-scan behavior and the orthogonality penalty
// ---------------------------------------------------------------------------
void criterion_5() {
  const auto H = test::h2_fixture();
  const auto props = h2_props();
  auto cs = constraints::synthesize_experiment(
      H, props,
      {{"kinetic", 0, 0, 0.5, 1.0, Loss::L2}, {"kinetic", 1, 1, 0.5, 1.0, Loss::L2}},
      constraints::NoiseModel::none, 0, /*ortho_weight=*/10.0);

  std::vector<double> scan{0.0, 0.25, 1.0, 4.0};
  double prev_q = 1e300;
  bool monotone = true;
  bool all_converged = true;
  double final_overlap = 1.0;
  std::vector<hf::SlaterState> warm;
  for (double scale : scan) {
    auto scaled = cs;
    for (auto& d : scaled.data) d.weight *= scale;
    scaled.ortho_weight *= scale;
    hf::ScfConfig cfg;
    cfg.max_iter = 500;
    const auto res = hf::scf_solve(H, props, scaled, 2, cfg, warm.empty() ? nullptr : &warm);
    warm = res.states;
    all_converged = all_converged && res.report.converged;
    const double q_unit = constraints::eval_Q(res.calc, cs, res.overlaps);
    if (q_unit > prev_q + 1e-8) monotone = false;
    prev_q = q_unit;
    final_overlap = std::abs(res.overlaps.at({0, 1}));
  }
  const bool ok = all_converged && monotone && final_overlap < 1e-3;
  report(5, "non-increasing misfit along the weight scan with active overlap penalty", ok,
         "final |det Sigma(0,1)| " + fmt(final_overlap));
}

// ---------------------------------------------------------------------------
// 6. coupled-cluster internal identities
// ---------------------------------------------------------------------------
void criterion_6() {
  const auto H = test::h2_fixture();
  const auto props = h2_props();

  // unconstrained: l0 vanishes and left/right spectra coincide
  const auto plain = cc::cc_solve(H, props, ConstraintSet{}, 4, cc::CcConfig{});
  double worst_l0 = 0.0;
  for (int n = 1; n < 4; ++n) worst_l0 = std::max(worst_l0, std::abs(plain.l[n][0]));

  const auto H_mo = cc::transform_to_basis(H, plain.mo_coefficients);
  cc::CcWorkspace ws(H_mo, plain.mo_energies);
  const Mat hbar = cc::build_hbar_matrix(ws, plain.amps);
  Eigen::EigenSolver<Mat> right(hbar);
  Eigen::EigenSolver<Mat> left(hbar.transpose());
  std::vector<double> re, le;
  for (int i = 0; i < right.eigenvalues().size(); ++i) {
    re.push_back(right.eigenvalues()[i].real());
    le.push_back(left.eigenvalues()[i].real());
  }
  std::sort(re.begin(), re.end());
  std::sort(le.begin(), le.end());
  double spectra_gap = 0.0;
  for (std::size_t i = 0; i < re.size(); ++i)
    spectra_gap = std::max(spectra_gap, std::abs(re[i] - le[i]));

  // constrained: the normalization condition holds at convergence
  auto cs = constraints::synthesize_experiment(
      H, props,
      {{"dipole_z", 0, 0, 0.05, 0.5, Loss::L2}, {"kinetic", 1, 1, 0.05, 0.5, Loss::L2}},
      constraints::NoiseModel::none, 0);
  cc::CcConfig cfg;
  cfg.lambda_schedule = {0.0, 0.25, 1.0};
  const auto res = cc::cc_solve(H, props, cs, 2, cfg);
  double worst_norm = 0.0;
  for (int n = 0; n < 2; ++n)
    worst_norm = std::max(
        worst_norm,
        std::abs(res.report.diagnostics.at("normalization_residual_" + std::to_string(n))));

  const bool ok = plain.report.converged && res.report.converged && worst_l0 < 1e-10 &&
                  spectra_gap < 1e-9 && worst_norm < 1e-8;
  report(6, "cc normalization, l0, and left/right spectral identities", ok,
         "norm residual " + fmt(worst_norm) + ", l0 " + fmt(worst_l0) + ", spectra gap " +
             fmt(spectra_gap));
}

// ---------------------------------------------------------------------------
// 7. determinism of reports under a fixed config and seed
// ---------------------------------------------------------------------------
void criterion_7() {
  const auto H = test::h2_fixture();
  const auto props = h2_props();
  auto cs = constraints::synthesize_experiment(
      H, props, {{"dipole_z", 0, 0, 0.05, 0.3, Loss::L2}}, constraints::NoiseModel::gaussian, 42);

  hf::ScfConfig hcfg;
  hcfg.seed = 7;
  hcfg.lambda_schedule = {0.0, 1.0};
  const auto h1 = hf::scf_solve(H, props, cs, 1, hcfg);
  const auto h2 = hf::scf_solve(H, props, cs, 1, hcfg);
  const bool hf_same = io::report_to_json(h1.report) == io::report_to_json(h2.report) &&
                       io::trace_to_csv(h1.report) == io::trace_to_csv(h2.report);

  cc::CcConfig ccfg;
  ccfg.seed = 7;
  ccfg.lambda_schedule = {0.0, 1.0};
  const auto c1 = cc::cc_solve(H, props, cs, 1, ccfg);
  const auto c2 = cc::cc_solve(H, props, cs, 1, ccfg);
  const bool cc_same = io::report_to_json(c1.report) == io::report_to_json(c2.report);

  report(7, "byte-identical reports under identical config and seed", hf_same && cc_same);
}

}  // namespace

int main() {
  criterion_1();
  criterion_2();
  criterion_3();
  criterion_4();
  criterion_5();
  criterion_6();
  criterion_7();
  if (g_failures == 0) {
    std::printf("acceptance: all criteria passed\n");
  } else {
    std::printf("acceptance: %d criteria FAILED\n", g_failures);
  }
  return g_failures == 0 ? 0 : 1;
}
