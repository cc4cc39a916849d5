#include "ecw/hf.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <deque>
#include <map>
#include <numeric>
#include <set>

namespace ecw::hf {

OccupiedSelection occupied_selection_from_string(const std::string& s) {
  if (s == "aufbau") return OccupiedSelection::aufbau;
  if (s == "mom") return OccupiedSelection::mom;
  throw ValidationError("unknown occupied_selection: " + s);
}

void ScfConfig::validate() const {
  if (max_iter <= 0) throw ValidationError("scf.max_iter must be positive");
  if (energy_tol <= 0 || density_tol <= 0) throw ValidationError("scf tolerances must be > 0");
  if (damping < 0 || damping >= 1) throw ValidationError("scf.damping must be in [0,1)");
  if (diis_depth < 0) throw ValidationError("scf.diis_depth must be >= 0");
  if (level_shift < 0) throw ValidationError("scf.level_shift must be >= 0");
  if (lambda_schedule.empty()) throw ValidationError("lambda.schedule must not be empty");
  for (double s : lambda_schedule)
    if (s < 0) throw ValidationError("lambda.schedule entries must be >= 0");
}

Mat standard_fock(const Hamiltonian& H, const Mat& gamma) {
  const int M = H.n_spin_orbitals;
  require_square(gamma, M, "standard_fock gamma");
  Mat f = H.h;
  for (int p = 0; p < M; ++p)
    for (int r = 0; r < M; ++r) {
      double acc = 0.0;
      for (int q = 0; q < M; ++q)
        for (int s = 0; s < M; ++s) acc += H.g(p, q, r, s) * gamma(s, q);
      f(p, r) += acc;
    }
  return f;
}

double hf_energy(const Hamiltonian& H, const Mat& gamma) {
  const Mat g_part = standard_fock(H, gamma) - H.h;  // G(gamma)
  return (H.h * gamma).trace() + 0.5 * (g_part * gamma).trace() + H.e_core;
}

Mat vexp_same_state(const Mat& v_nn, const Mat& gamma_nn, const Mat& s) {
  return v_nn * gamma_nn * s + s * gamma_nn * v_nn - 2.0 * s * gamma_nn * v_nn * gamma_nn * s;
}

namespace {

// W2(g2, V)(x, y) = sum_{u,v} g2(x, u, y, v) V(v, u)
Mat contract_gamma2(const Tensor4& g2, const Mat& v) {
  const int M = g2.dim();
  Mat out = Mat::Zero(M, M);
  for (int x = 0; x < M; ++x)
    for (int y = 0; y < M; ++y) {
      double acc = 0.0;
      for (int u = 0; u < M; ++u)
        for (int w = 0; w < M; ++w) acc += g2(x, u, y, w) * v(w, u);
      out(x, y) = acc;
    }
  return out;
}

}  // namespace

Mat vexp_cross_state(int n, int m, const Mat& v_nm, const Mat& v_mn,
                     const nonorth::TransitionDensity& td_mn,
                     const nonorth::TransitionDensity& td_nm, const Mat& gamma_nn, const Mat& s) {
  if (n == m) throw ValidationError("vexp_cross_state: state pair must be distinct");
  if (!td_mn.has_gamma2() || !td_nm.has_gamma2())
    throw ValidationError("vexp_cross_state: transition densities must carry gamma2");
  const int M = static_cast<int>(s.rows());
  const Mat id = Mat::Identity(M, M);
  const Mat sgs = s * gamma_nn * s;
  const Mat line1 = (id - s * gamma_nn) *
                    (v_nm * td_mn.gamma1 + s * contract_gamma2(td_mn.gamma2, v_nm)) * sgs;
  const Mat line2 = sgs * (td_nm.gamma1 * v_mn + contract_gamma2(td_nm.gamma2, v_mn) * s) *
                    (id - gamma_nn * s);
  Mat v = line1 + line2;
  const double asym = (v - v.transpose()).cwiseAbs().maxCoeff();
  const double scale = std::max(1.0, v.cwiseAbs().maxCoeff());
  if (asym > 1e-8 * scale)
    throw ValidationError("vexp_cross_state: assembled term is not Hermitian (defect " +
                          std::to_string(asym) + ")");
  return 0.5 * (v + v.transpose());
}

Mat ortho_penalty_term(int n, const std::vector<Mat>& occupied_blocks, const Mat& s,
                       double ortho_weight) {
  const int M = static_cast<int>(s.rows());
  Mat delta = Mat::Zero(M, M);
  if (ortho_weight == 0.0) return delta;
  const Mat& c_n = occupied_blocks[static_cast<std::size_t>(n)];
  Mat grad = Mat::Zero(M, c_n.cols());
  for (std::size_t m = 0; m < occupied_blocks.size(); ++m) {
    if (static_cast<int>(m) == n) continue;
    const auto po = nonorth::pair_overlap<double>(c_n, occupied_blocks[m], s);
    const Mat adj = nonorth::detail::first_cofactors_svd<double>(po.sigma);
    grad += 2.0 * ortho_weight * po.det_sigma * s * occupied_blocks[m] * adj;
  }
  // carrier matrix whose occupied-virtual block reproduces the gradient
  delta = grad * c_n.transpose() * s;
  return delta;
}

ModifiedFock assemble_modified_fock(const Mat& f, const Mat& v_n, const Mat& v_nm_sum,
                                    const Mat& c_occ, const Mat& s) {
  const int M = static_cast<int>(f.rows());
  const Mat v_total = v_n + v_nm_sum;
  const Mat p_occ = c_occ * c_occ.transpose() * s;  // idempotent in the S metric
  const Mat p_vir = Mat::Identity(M, M) - p_occ;
  Mat fbar = f + p_vir.transpose() * v_total * p_occ + p_occ.transpose() * v_total * p_vir;
  fbar = 0.5 * (fbar + fbar.transpose()).eval();
  ModifiedFock mf;
  mf.fbar = fbar;
  mf.f = f;
  mf.v_n = v_n;
  mf.v_nm_sum = v_nm_sum;
  return mf;
}

RoothaanResult solve_roothaan(const Mat& fbar, const Mat& s) {
  Eigen::SelfAdjointEigenSolver<Mat> es_s(s);
  const double smax = es_s.eigenvalues().maxCoeff();
  if (es_s.eigenvalues().minCoeff() <= 1e-12 * std::max(1.0, smax))
    throw ValidationError("solve_roothaan: overlap matrix is not positive definite");
  const Mat x = es_s.eigenvectors() *
                es_s.eigenvalues().cwiseSqrt().cwiseInverse().asDiagonal() *
                es_s.eigenvectors().transpose();
  const Mat fp = x.transpose() * fbar * x;
  Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (fp + fp.transpose()));
  RoothaanResult r;
  r.eps = es.eigenvalues();
  r.c = x * es.eigenvectors();
  for (Eigen::Index j = 0; j < r.c.cols(); ++j) {
    Eigen::Index imax = 0;
    r.c.col(j).cwiseAbs().maxCoeff(&imax);
    if (r.c(imax, j) < 0) r.c.col(j) = -r.c.col(j);
  }
  return r;
}

std::vector<int> select_occupied(const Mat& c_all, const Vec& eps, const Mat& s,
                                 const std::optional<Mat>& previous_occ, int n_occ,
                                 OccupiedSelection mode) {
  const int m_all = static_cast<int>(c_all.cols());
  if (n_occ > m_all) throw ValidationError("select_occupied: more occupied than orbitals");
  std::vector<int> idx(m_all);
  std::iota(idx.begin(), idx.end(), 0);
  if (mode == OccupiedSelection::mom) {
    if (!previous_occ) throw ValidationError("select_occupied: mom requires a previous state");
    const Mat ovl = previous_occ->transpose() * s * c_all;  // N_prev x M
    Vec score = ovl.cwiseAbs2().colwise().sum().transpose();
    std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
      if (score[a] != score[b]) return score[a] > score[b];
      if (eps[a] != eps[b]) return eps[a] < eps[b];
      return a < b;
    });
  }
  std::vector<int> chosen(idx.begin(), idx.begin() + n_occ);
  std::sort(chosen.begin(), chosen.end(), [&](int a, int b) {
    if (eps[a] != eps[b]) return eps[a] < eps[b];
    return a < b;
  });
  return chosen;
}

double directional_derivative(const Mat& fbar_grad_block, const Mat& c_occ, const Mat& c_virt,
                              const Mat& k) {
  return 2.0 * (k.transpose() * (c_virt.transpose() * fbar_grad_block * c_occ)).trace();
}

// ---------------------------------------------------------------------------
// self-consistent driver
// ---------------------------------------------------------------------------

namespace {

using constraints::CalcMap;
using constraints::ConstraintSet;
using constraints::OverlapMap;

struct PairKeyLess {
  bool operator()(const std::pair<int, int>& a, const std::pair<int, int>& b) const {
    return a < b;
  }
};

struct SweepContext {
  std::vector<Mat> gammas;                                     // per state, common basis
  std::map<std::pair<int, int>, nonorth::TransitionDensity> tdms;  // cross pairs with gamma2
  CalcMap calc;
  OverlapMap overlaps;
  std::map<std::pair<int, int>, Mat, PairKeyLess> vexp;        // scaled potentials
  std::vector<double> energies;
  double q_scaled = 0.0;
  double q_unit = 0.0;
};

ConstraintSet scaled_constraints(const ConstraintSet& cs, double scale) {
  ConstraintSet out = cs;
  out.ortho_weight *= scale;
  for (auto& d : out.data) d.weight *= scale;
  return out;
}

std::set<std::pair<int, int>> cross_pairs(const ConstraintSet& cs) {
  std::set<std::pair<int, int>> pairs;
  for (const auto& d : cs.data)
    if (!d.diagonal()) {
      pairs.insert({d.bra, d.ket});
      pairs.insert({d.ket, d.bra});
    }
  return pairs;
}

SweepContext build_context(const Hamiltonian& H, const std::vector<PropertyOperator>& properties,
                           const ConstraintSet& cs_unit, const ConstraintSet& cs_scaled,
                           const std::vector<SlaterState>& states) {
  const int n_states = static_cast<int>(states.size());
  SweepContext ctx;
  ctx.gammas.resize(n_states);
  ctx.energies.resize(n_states);
  for (int n = 0; n < n_states; ++n) {
    ctx.gammas[n] = states[n].c_occ * states[n].c_occ.transpose();
    ctx.energies[n] = hf_energy(H, ctx.gammas[n]);
  }
  for (int n = 0; n < n_states; ++n)
    for (int m = 0; m < n_states; ++m) {
      if (n == m) continue;
      const auto po = nonorth::pair_overlap<double>(states[n].c_occ, states[m].c_occ, H.s, n, m);
      ctx.overlaps[{n, m}] = po.det_sigma;
    }

  // transition densities with gamma2 for every pair touched by cross data:
  // the Fock cross term for state n against m needs gamma(m,n) and gamma(n,m)
  for (const auto& pr : cross_pairs(cs_scaled)) {
    const int bra = pr.first, ket = pr.second;
    ctx.tdms.emplace(pr, nonorth::tdm2<double>(states[bra].c_occ, states[ket].c_occ, H.s, bra, ket));
  }

  // calculated matrix elements for every datum orientation
  std::set<constraints::CalcKey> keys;
  for (const auto& d : cs_scaled.data) {
    keys.insert({d.property_id, {d.bra, d.ket}});
    if (!d.diagonal()) keys.insert({d.property_id, {d.ket, d.bra}});
  }
  for (const auto& key : keys) {
    const auto& p = constraints::find_property(properties, key.first);
    const auto& [n, m] = key.second;
    if (n == m) {
      ctx.calc[key] = (p.a * ctx.gammas[n]).trace();
    } else {
      const auto it = ctx.tdms.find({n, m});
      if (it != ctx.tdms.end()) {
        ctx.calc[key] = nonorth::observable<double>(it->second, p.a);
      } else {
        const auto td = nonorth::tdm1<double>(states[n].c_occ, states[m].c_occ, H.s, n, m);
        ctx.calc[key] = nonorth::observable<double>(td, p.a);
      }
    }
  }

  ctx.q_scaled = constraints::eval_Q(ctx.calc, cs_scaled, ctx.overlaps);
  ctx.q_unit = constraints::eval_Q(ctx.calc, cs_unit, ctx.overlaps);

  for (int n = 0; n < n_states; ++n)
    for (int m = 0; m < n_states; ++m) {
      const Mat v = constraints::build_vexp({n, m}, cs_scaled, ctx.calc, properties);
      if (v.size() != 0 && v.cwiseAbs().maxCoeff() > 0) ctx.vexp[{n, m}] = v;
    }
  return ctx;
}

// Pulay DIIS over the modified Fock with commutator error f g S - S g f.
class Diis {
 public:
  explicit Diis(int depth) : depth_(depth) {}

  Mat update(const Mat& f, const Mat& err) {
    if (depth_ <= 0) return f;
    focks_.push_back(f);
    errors_.push_back(err);
    if (static_cast<int>(focks_.size()) > depth_) {
      focks_.pop_front();
      errors_.pop_front();
    }
    const int k = static_cast<int>(focks_.size());
    if (k < 2) return f;
    Mat b = Mat::Zero(k + 1, k + 1);
    for (int i = 0; i < k; ++i)
      for (int j = 0; j < k; ++j) b(i, j) = (errors_[i].transpose() * errors_[j]).trace();
    for (int i = 0; i < k; ++i) b(i, k) = b(k, i) = -1.0;
    Vec rhs = Vec::Zero(k + 1);
    rhs[k] = -1.0;
    Eigen::FullPivLU<Mat> lu(b);
    if (!lu.isInvertible()) return f;
    const Vec coef = lu.solve(rhs);
    Mat out = Mat::Zero(f.rows(), f.cols());
    for (int i = 0; i < k; ++i) out += coef[i] * focks_[i];
    return out;
  }

  void reset() {
    focks_.clear();
    errors_.clear();
  }

 private:
  int depth_;
  std::deque<Mat> focks_;
  std::deque<Mat> errors_;
};

// Virtual complement: the c_all columns with the smallest projection onto
// the occupied span. At a fixed point this is an exact occupied/virtual split.
Mat virtual_block(const SlaterState& st, const Mat& s) {
  const int m_all = static_cast<int>(st.c_all.cols());
  const int n_occ = static_cast<int>(st.c_occ.cols());
  const Mat proj = st.c_occ.transpose() * s * st.c_all;  // N x M
  const Vec score = proj.cwiseAbs2().colwise().sum().transpose();
  std::vector<int> idx(static_cast<std::size_t>(m_all));
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return score[a] < score[b]; });
  Mat cv(st.c_all.rows(), m_all - n_occ);
  std::vector<int> keep(idx.begin(), idx.begin() + (m_all - n_occ));
  std::sort(keep.begin(), keep.end());
  for (int k = 0; k < m_all - n_occ; ++k) cv.col(k) = st.c_all.col(keep[static_cast<std::size_t>(k)]);
  return cv;
}

}  // namespace

ScfResult scf_solve(const Hamiltonian& H, const std::vector<PropertyOperator>& properties,
                    const ConstraintSet& cs, int n_states, const ScfConfig& cfg,
                    const std::vector<SlaterState>* initial) {
  cfg.validate();
  cs.validate(n_states);
  if (n_states < 1) throw ValidationError("scf_solve: n_states must be >= 1");
  const int M = H.n_spin_orbitals;
  const int N = H.n_electrons();
  if (N < 1) throw ValidationError("scf_solve: no electrons");

  ScfResult res;
  res.report.method = "hf";
  res.report.seed = cfg.seed;

  std::vector<SlaterState> states(static_cast<std::size_t>(n_states));
  if (initial) {
    if (static_cast<int>(initial->size()) != n_states)
      throw ValidationError("scf_solve: initial state count mismatch");
    for (const auto& st : *initial) {
      if (st.c_occ.rows() != M || st.c_occ.cols() != N)
        throw ValidationError("scf_solve: initial state has the wrong shape");
      const Mat ortho = st.c_occ.transpose() * H.s * st.c_occ;
      if ((ortho - Mat::Identity(N, N)).cwiseAbs().maxCoeff() > 1e-8)
        throw ValidationError("scf_solve: initial occupied set is not S-orthonormal");
    }
    states = *initial;
  } else {
    // core-Hamiltonian guess; excited states from single-column swaps
    const auto core = solve_roothaan(H.h, H.s);
    for (int n = 0; n < n_states; ++n) {
      if (n > 0 && N - 1 + n >= M)
        throw ValidationError("scf_solve: not enough virtual orbitals for excited-state guess " +
                              std::to_string(n));
      std::vector<int> occ(static_cast<std::size_t>(N));
      std::iota(occ.begin(), occ.end(), 0);
      if (n > 0) occ[static_cast<std::size_t>(N - 1)] = N - 1 + n;
      Mat c_occ(M, N);
      for (int i = 0; i < N; ++i) c_occ.col(i) = core.c.col(occ[static_cast<std::size_t>(i)]);
      states[static_cast<std::size_t>(n)] = SlaterState{c_occ, core.eps, core.c, n};
    }
  }

  std::vector<Diis> diis(static_cast<std::size_t>(n_states), Diis(cfg.diis_depth));
  std::vector<Mat> prev_fock(static_cast<std::size_t>(n_states));

  int global_iter = 0;
  bool stage_converged = false;
  SweepContext ctx;
  std::set<int> collapse_flagged;
  double damping_auto = 0.0;
  double shift_auto = 0.0;
  std::deque<double> objective_history;

  ConstraintSet cs_scaled = scaled_constraints(cs, cfg.lambda_schedule.back());

  auto assemble_sweep = [&](const SweepContext& sweep_ctx,
                              const std::vector<SlaterState>& sweep_states,
                              std::vector<ModifiedFock>& mfs) {
      std::vector<Mat> occ_blocks(static_cast<std::size_t>(n_states));
      for (int n = 0; n < n_states; ++n)
        occ_blocks[static_cast<std::size_t>(n)] = sweep_states[static_cast<std::size_t>(n)].c_occ;
      double max_resid = 0.0;
      mfs.resize(static_cast<std::size_t>(n_states));
      for (int n = 0; n < n_states; ++n) {
        const Mat f = standard_fock(H, sweep_ctx.gammas[static_cast<std::size_t>(n)]);
        Mat v_n = Mat::Zero(M, M);
        if (auto itv = sweep_ctx.vexp.find({n, n}); itv != sweep_ctx.vexp.end())
          v_n = vexp_same_state(itv->second, sweep_ctx.gammas[static_cast<std::size_t>(n)], H.s);
        Mat v_sum = Mat::Zero(M, M);
        for (int m = 0; m < n_states; ++m) {
          if (m == n) continue;
          const auto it_nm = sweep_ctx.vexp.find({n, m});
          const auto it_mn = sweep_ctx.vexp.find({m, n});
          if (it_nm == sweep_ctx.vexp.end() && it_mn == sweep_ctx.vexp.end()) continue;
          const Mat v_nm = it_nm != sweep_ctx.vexp.end() ? it_nm->second : Mat::Zero(M, M);
          const Mat v_mn = it_mn != sweep_ctx.vexp.end() ? it_mn->second : Mat::Zero(M, M);
          const auto& td_mn = sweep_ctx.tdms.at({n, m});  // gamma(m,n): bra n, ket m
          const auto& td_nm = sweep_ctx.tdms.at({m, n});
          v_sum += vexp_cross_state(n, m, v_nm, v_mn, td_mn, td_nm,
                                    sweep_ctx.gammas[static_cast<std::size_t>(n)], H.s);
        }
        v_sum += ortho_penalty_term(n, occ_blocks, H.s, cs_scaled.ortho_weight);
        mfs[static_cast<std::size_t>(n)] = assemble_modified_fock(
            f, v_n, v_sum, sweep_states[static_cast<std::size_t>(n)].c_occ, H.s);

        const Mat cv = virtual_block(sweep_states[static_cast<std::size_t>(n)], H.s);
        const Mat grad_block = f + v_n + v_sum;
        const double resid =
            (cv.transpose() * grad_block * sweep_states[static_cast<std::size_t>(n)].c_occ)
                .cwiseAbs()
                .maxCoeff();
        max_resid = std::max(max_resid, resid);
      }
      return max_resid;
    };

  for (std::size_t stage = 0; stage < cfg.lambda_schedule.size(); ++stage) {
    const double scale = cfg.lambda_schedule[stage];
    cs_scaled = scaled_constraints(cs, scale);
    for (auto& d : diis) d.reset();
    for (auto& f : prev_fock) f.resize(0, 0);
    stage_converged = false;
    std::vector<double> prev_e;
    std::vector<Mat> prev_gamma;

    for (int it = 0; it < cfg.max_iter; ++it) {
      ++global_iter;
      ctx = build_context(H, properties, cs, cs_scaled, states);

      // collapse watch: an excited state drifting onto the ground state
      if (cfg.occupied_selection == OccupiedSelection::mom)
        for (int n = 1; n < n_states; ++n)
          if (std::abs(ctx.overlaps[{0, n}]) > 0.999 && collapse_flagged.insert(n).second)
            res.report.events.push_back("variational collapse suspected for state " +
                                        std::to_string(n) + " (|<0|" + std::to_string(n) +
                                        ">| > 0.999)");

      // assemble per-state modified Fock operators from the current iterate
      std::vector<ModifiedFock> mfs;
      const double max_resid = assemble_sweep(ctx, states, mfs);

      for (int n = 0; n < n_states; ++n)
        res.report.trace.push_back({global_iter, n, ctx.energies[static_cast<std::size_t>(n)],
                                    ctx.q_unit, max_resid});

      // convergence judged between successive contexts
      if (!prev_e.empty()) {
        double de = 0.0, dg = 0.0;
        for (int n = 0; n < n_states; ++n) {
          de = std::max(de, std::abs(ctx.energies[static_cast<std::size_t>(n)] - prev_e[static_cast<std::size_t>(n)]));
          dg = std::max(dg, (ctx.gammas[static_cast<std::size_t>(n)] - prev_gamma[static_cast<std::size_t>(n)])
                                .cwiseAbs()
                                .maxCoeff());
        }
        if (de < cfg.energy_tol && dg < cfg.density_tol) {
          stage_converged = true;
          break;
        }
      }
      prev_e = ctx.energies;
      prev_gamma = ctx.gammas;

      // oscillation watch on the stage objective; raise damping when the
      // plain iteration settles into a two-cycle
      {
        double objective = ctx.q_scaled;
        for (double e : ctx.energies) objective += e;
        objective_history.push_back(objective);
        if (objective_history.size() > 8) objective_history.pop_front();
        if (objective_history.size() == 8) {
          int flips = 0;
          for (std::size_t i = 2; i < objective_history.size(); ++i) {
            const double d1 = objective_history[i] - objective_history[i - 1];
            const double d2 = objective_history[i - 1] - objective_history[i - 2];
            if (d1 * d2 < 0) ++flips;
          }
          if (flips >= 5) {
            if (damping_auto < 0.89) {
              damping_auto = std::min(0.9, damping_auto + 0.3);
              res.report.events.push_back("iteration " + std::to_string(global_iter) +
                                          ": oscillation detected, damping raised to " +
                                          std::to_string(std::max(cfg.damping, damping_auto)));
            } else if (shift_auto < 8.0) {
              shift_auto += 1.0;
              res.report.events.push_back("iteration " + std::to_string(global_iter) +
                                          ": persistent oscillation, level shift raised to " +
                                          std::to_string(cfg.level_shift + shift_auto));
            }
            objective_history.clear();
          }
        }
      }

      // update every state from the frozen sweep context
      std::vector<SlaterState> next = states;
      const double damp = std::max(cfg.damping, damping_auto);
      const double shift = cfg.level_shift + shift_auto;
      for (int n = 0; n < n_states; ++n) {
        const Mat& gamma_n = ctx.gammas[static_cast<std::size_t>(n)];
        Mat fbar_raw = mfs[static_cast<std::size_t>(n)].fbar;
        // the level shift raises virtual orbitals only and leaves the
        // commutator error untouched
        const Mat err = fbar_raw * gamma_n * H.s - H.s * gamma_n * fbar_raw;
        if (shift > 0) fbar_raw += shift * (H.s - H.s * gamma_n * H.s);
        Mat fbar = fbar_raw;
        if (damp > 0 && prev_fock[static_cast<std::size_t>(n)].size() != 0)
          fbar = (1.0 - damp) * fbar + damp * prev_fock[static_cast<std::size_t>(n)];
        prev_fock[static_cast<std::size_t>(n)] = fbar;
        if (cfg.diis_depth > 0)
          fbar = diis[static_cast<std::size_t>(n)].update(fbar, err);
        const auto rh = solve_roothaan(fbar, H.s);
        const auto occ = select_occupied(rh.c, rh.eps, H.s, states[n].c_occ, N,
                                         cfg.occupied_selection);
        Mat c_occ(M, N);
        for (int i = 0; i < N; ++i) c_occ.col(i) = rh.c.col(occ[static_cast<std::size_t>(i)]);
        next[static_cast<std::size_t>(n)] = SlaterState{c_occ, rh.eps, rh.c, n};
      }
      states = std::move(next);
    }
    if (!stage_converged)
      res.report.events.push_back("stage " + std::to_string(stage) + " (scale " +
                                  std::to_string(scale) + ") hit max_iter without converging");
  }

  // refresh orbital energies from the raw (unshifted, undamped) operator at
  // the final densities
  {
    cs_scaled = scaled_constraints(cs, cfg.lambda_schedule.back());
    ctx = build_context(H, properties, cs, cs_scaled, states);
    std::vector<ModifiedFock> mfs;
    assemble_sweep(ctx, states, mfs);
    for (int n = 0; n < n_states; ++n) {
      const auto rh = solve_roothaan(mfs[static_cast<std::size_t>(n)].fbar, H.s);
      states[static_cast<std::size_t>(n)].eps = rh.eps;
    }
  }

  res.states = states;
  res.calc = ctx.calc;
  res.overlaps = ctx.overlaps;
  res.report.converged = stage_converged;
  res.report.iterations = global_iter;
  res.report.energies = ctx.energies;
  io::attach_residuals(res.report, cs, ctx.calc, ctx.overlaps);
  res.report.densities = ctx.gammas;
  return res;
}

}  // namespace ecw::hf
