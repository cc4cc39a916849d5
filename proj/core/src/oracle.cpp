#include "ecw/oracle.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <set>

namespace ecw::oracle {

namespace {

using constraints::CalcMap;
using constraints::ConstraintSet;
using constraints::OverlapMap;

// Keys (property, pair) needed to evaluate Q and its derivatives: each datum
// needs its own pair, and transition data need the reversed orientation too.
std::set<constraints::CalcKey> needed_keys(const ConstraintSet& cs) {
  std::set<constraints::CalcKey> keys;
  for (const auto& d : cs.data) {
    keys.insert({d.property_id, {d.bra, d.ket}});
    if (!d.diagonal()) keys.insert({d.property_id, {d.ket, d.bra}});
  }
  return keys;
}

struct CiContext {
  const det::DetSpace& space;
  const Hamiltonian& H;
  const std::vector<PropertyOperator>& properties;
  const ConstraintSet& cs;

  CalcMap calc(const std::vector<Vec>& states) const {
    CalcMap m;
    for (const auto& key : needed_keys(cs)) {
      const auto& p = constraints::find_property(properties, key.first);
      const auto& [n, mm] = key.second;
      m[key] = states[n].dot(det::apply_one_body(space, p.a, states[mm]));
    }
    return m;
  }

  OverlapMap overlaps(const std::vector<Vec>& states) const {
    OverlapMap o;
    for (std::size_t n = 0; n < states.size(); ++n)
      for (std::size_t m = 0; m < states.size(); ++m)
        if (n != m) o[{static_cast<int>(n), static_cast<int>(m)}] = states[n].dot(states[m]);
    return o;
  }

  double q(const std::vector<Vec>& states) const {
    return constraints::eval_Q(calc(states), cs, overlaps(states));
  }
};

// d(Q)/d(x_n) with every other state frozen.
Vec q_gradient(const CiContext& ctx, const std::vector<Vec>& states, int n) {
  const auto calc = ctx.calc(states);
  Vec g = Vec::Zero(states[n].size());
  for (const auto& d : ctx.cs.data) {
    if (d.bra != n && d.ket != n) continue;
    const auto& p = constraints::find_property(ctx.properties, d.property_id);
    const double fitted = constraints::fitted_value(d, calc);
    const double r = (fitted - d.value) / d.sigma;
    const double rho_prime = (d.loss == constraints::Loss::L2) ? 2.0 * r : double((r > 0) - (r < 0));
    const double outer = d.weight * rho_prime / d.sigma;
    if (outer == 0.0) continue;
    if (d.diagonal()) {
      // fitted = x^T A x
      g += outer * (det::apply_one_body(ctx.space, p.a, states[n]) +
                    det::apply_one_body(ctx.space, Mat(p.a.transpose()), states[n]));
    } else {
      // fitted = (x_n^T A x_m)(x_m^T A x_n)
      const int m = (d.bra == n) ? d.ket : d.bra;
      const double a_nm = calc.at({d.property_id, {n, m}});
      const double a_mn = calc.at({d.property_id, {m, n}});
      g += outer * (a_mn * det::apply_one_body(ctx.space, p.a, states[m]) +
                    a_nm * det::apply_one_body(ctx.space, Mat(p.a.transpose()), states[m]));
    }
  }
  if (ctx.cs.ortho_weight > 0) {
    for (std::size_t m = 0; m < states.size(); ++m) {
      if (static_cast<int>(m) == n) continue;
      g += 4.0 * ctx.cs.ortho_weight * states[n].dot(states[m]) * states[m];
    }
  }
  return g;
}

}  // namespace

ConstrainedResult constrained_fci_minimize(const det::DetSpace& space, const Hamiltonian& H,
                                           const std::vector<PropertyOperator>& properties,
                                           const ConstraintSet& cs, int n_states,
                                           const MinimizeOptions& opt) {
  if (space.size() > 10000)
    throw ValidationError("constrained_fci_minimize: determinant space too large (" +
                          std::to_string(space.size()) + " > 10000)");
  cs.validate(n_states);
  const CiContext ctx{space, H, properties, cs};

  auto fci = det::fci_solve(space, H, n_states);
  std::vector<Vec> states = fci.states;
  if (opt.initial_perturbation > 0) {
    constraints::NormalStream rng(opt.seed);
    for (auto& x : states) {
      for (Eigen::Index i = 0; i < x.size(); ++i) x[i] += opt.initial_perturbation * rng.next();
      x.normalize();
    }
  }

  ConstrainedResult res;
  res.states.resize(n_states);
  std::vector<double> e_mult(n_states, 0.0);

  auto state_objective = [&](const std::vector<Vec>& st, int n, double e_n) {
    const Vec hx = det::apply_hamiltonian(space, H, st[n]);
    return st[n].dot(hx) - e_n * (st[n].squaredNorm() - 1.0) + ctx.q(st);
  };
  auto projected_gradient = [&](const std::vector<Vec>& st, int n, double e_n) {
    const Vec hx = det::apply_hamiltonian(space, H, st[n]);
    Vec g = 2.0 * (hx - e_n * st[n]) + q_gradient(ctx, st, n);
    g -= st[n].dot(g) * st[n];
    return g;
  };

  double worst_grad = 0.0;
  int cycle = 0;
  while (cycle < opt.max_outer) {
    ++cycle;
    for (int n = 0; n < n_states; ++n)
      e_mult[n] = states[n].dot(det::apply_hamiltonian(space, H, states[n]));
    worst_grad = 0.0;
    for (int n = 0; n < n_states; ++n) {
      double step = opt.step0;
      for (int it = 0; it < opt.max_inner; ++it) {
        const Vec g = projected_gradient(states, n, e_mult[n]);
        const double gn = g.norm();
        if (gn < opt.grad_tol) break;
        const double f0 = state_objective(states, n, e_mult[n]);
        bool accepted = false;
        double alpha = step;
        for (int bt = 0; bt < 48; ++bt) {
          std::vector<Vec> trial = states;
          trial[n] = (states[n] - alpha * g).normalized();
          if (state_objective(trial, n, e_mult[n]) <= f0 - opt.armijo_c * alpha * gn * gn) {
            states = std::move(trial);
            step = std::min(alpha * 2.0, 8.0 * opt.step0);
            accepted = true;
            break;
          }
          alpha *= 0.5;
        }
        if (!accepted) break;  // stalled at line-search resolution
      }
      worst_grad = std::max(worst_grad, projected_gradient(states, n, e_mult[n]).norm());
    }
    if (worst_grad < opt.grad_tol) {
      res.converged = true;
      break;
    }
  }

  res.outer_cycles = cycle;
  res.calc = ctx.calc(states);
  res.overlaps = ctx.overlaps(states);
  res.q = constraints::eval_Q(res.calc, cs, res.overlaps);
  for (int n = 0; n < n_states; ++n) {
    const Vec hx = det::apply_hamiltonian(space, H, states[n]);
    const double e_n = states[n].dot(hx);
    res.states[n] = ConstrainedState{states[n], e_n, projected_gradient(states, n, e_n).norm()};
  }
  return res;
}

// ---------------------------------------------------------------------------
// single-determinant manifold
// ---------------------------------------------------------------------------

namespace {

Mat loewdin(const Mat& w) {
  Eigen::SelfAdjointEigenSolver<Mat> es(w.transpose() * w);
  const Vec inv_sqrt = es.eigenvalues().cwiseMax(1e-300).cwiseSqrt().cwiseInverse();
  return w * es.eigenvectors() * inv_sqrt.asDiagonal() * es.eigenvectors().transpose();
}

// Explicit-minor adjugate; deliberately local so this oracle stays
// independent of the cofactor transition-density code path.
Mat adjugate_by_minors(const Mat& a) {
  const int n = static_cast<int>(a.rows());
  if (n == 0) return Mat(0, 0);
  if (n == 1) return Mat::Identity(1, 1);
  Mat adj(n, n);
  Mat sub(n - 1, n - 1);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      int ri = 0;
      for (int r = 0; r < n; ++r) {
        if (r == i) continue;
        int ci = 0;
        for (int c = 0; c < n; ++c) {
          if (c == j) continue;
          sub(ri, ci++) = a(r, c);
        }
        ++ri;
      }
      adj(j, i) = (((i + j) % 2 == 0) ? 1.0 : -1.0) * sub.determinant();
    }
  return adj;
}

// d x_K / d C(mu,a) = adj(C_K)(a, row position of mu in K); contract with a
// det-space gradient gx to get the orbital-space gradient.
Mat chain_to_orbitals(const det::DetSpace& space, const Vec& gx, const Mat& c) {
  const int M = static_cast<int>(c.rows());
  const int N = static_cast<int>(c.cols());
  Mat g = Mat::Zero(M, N);
  Mat sub(N, N);
  std::vector<int> rows(N);
  for (std::size_t k = 0; k < space.size(); ++k) {
    const double gk = gx[static_cast<Eigen::Index>(k)];
    if (gk == 0.0) continue;
    const det::DetMask mask = space.mask(k);
    int nr = 0;
    for (int p = 0; p < M; ++p)
      if (mask >> p & 1) rows[nr++] = p;
    for (int i = 0; i < N; ++i) sub.row(i) = c.row(rows[i]);
    const Mat adj = adjugate_by_minors(sub);
    for (int i = 0; i < N; ++i)
      for (int a = 0; a < N; ++a) g(rows[i], a) += gk * adj(a, i);
  }
  return g;
}

}  // namespace

SlaterResult constrained_slater_minimize(const Hamiltonian& H,
                                         const std::vector<PropertyOperator>& properties,
                                         const ConstraintSet& cs, int n_states,
                                         const MinimizeOptions& opt) {
  if ((H.s - Mat::Identity(H.n_spin_orbitals, H.n_spin_orbitals)).cwiseAbs().maxCoeff() > 1e-12)
    throw ValidationError("constrained_slater_minimize requires an orthonormal basis (s = I)");
  cs.validate(n_states);
  const int M = H.n_spin_orbitals;
  const int N = H.n_electrons();
  const auto space = det::DetSpace::full(M, N);
  if (space.size() > 10000)
    throw ValidationError("constrained_slater_minimize: determinant space too large");
  const CiContext ctx{space, H, properties, cs};

  // core-Hamiltonian guess; excited starts swap the highest occupied column
  // with successive virtuals. Callers may override the starting basins.
  std::vector<Mat> orbitals(n_states);
  if (!opt.initial_orbitals.empty()) {
    if (static_cast<int>(opt.initial_orbitals.size()) != n_states)
      throw ValidationError("constrained_slater_minimize: initial orbital count mismatch");
    for (const auto& c : opt.initial_orbitals)
      if (c.rows() != M || c.cols() != N)
        throw ValidationError("constrained_slater_minimize: initial orbital shape mismatch");
    for (int n = 0; n < n_states; ++n) orbitals[n] = loewdin(opt.initial_orbitals[n]);
  } else {
    Eigen::SelfAdjointEigenSolver<Mat> es(H.h);
    for (int n = 0; n < n_states; ++n) {
      Mat c = es.eigenvectors().leftCols(N);
      if (n > 0) {
        if (N - 1 + n >= M)
          throw ValidationError("constrained_slater_minimize: not enough virtuals for state " +
                                std::to_string(n));
        c.col(N - 1) = es.eigenvectors().col(N - 1 + n);
      }
      orbitals[n] = c;
    }
  }
  if (opt.initial_perturbation > 0) {
    constraints::NormalStream rng(opt.seed);
    for (auto& c : orbitals) {
      for (Eigen::Index i = 0; i < c.rows(); ++i)
        for (Eigen::Index j = 0; j < c.cols(); ++j) c(i, j) += opt.initial_perturbation * rng.next();
      c = loewdin(c);
    }
  }

  auto expand_all = [&](const std::vector<Mat>& cc) {
    std::vector<Vec> xs(cc.size());
    for (std::size_t i = 0; i < cc.size(); ++i) xs[i] = det::expand_slater(space, cc[i]);
    return xs;
  };

  auto state_objective = [&](const std::vector<Vec>& xs, int n) {
    return xs[n].dot(det::apply_hamiltonian(space, H, xs[n])) + ctx.q(xs);
  };

  SlaterResult res;
  double worst_grad = 0.0;
  int cycle = 0;
  std::vector<Vec> xs = expand_all(orbitals);
  while (cycle < opt.max_outer) {
    ++cycle;
    worst_grad = 0.0;
    for (int n = 0; n < n_states; ++n) {
      double step = opt.step0;
      for (int it = 0; it < opt.max_inner; ++it) {
        const Vec gx = 2.0 * det::apply_hamiltonian(space, H, xs[n]) + q_gradient(ctx, xs, n);
        Mat g = chain_to_orbitals(space, gx, orbitals[n]);
        const Mat ctg = orbitals[n].transpose() * g;
        g -= orbitals[n] * (0.5 * (ctg + ctg.transpose()));  // Stiefel tangent
        const double gn = g.norm();
        if (gn < opt.grad_tol) break;
        const double f0 = state_objective(xs, n);
        bool accepted = false;
        double alpha = step;
        for (int bt = 0; bt < 48; ++bt) {
          const Mat trial_c = loewdin(orbitals[n] - alpha * g);
          auto trial_xs = xs;
          trial_xs[n] = det::expand_slater(space, trial_c);
          if (state_objective(trial_xs, n) <= f0 - opt.armijo_c * alpha * gn * gn) {
            orbitals[n] = trial_c;
            xs = std::move(trial_xs);
            step = std::min(alpha * 2.0, 8.0 * opt.step0);
            accepted = true;
            break;
          }
          alpha *= 0.5;
        }
        if (!accepted) break;
      }
      const Vec gx = 2.0 * det::apply_hamiltonian(space, H, xs[n]) + q_gradient(ctx, xs, n);
      Mat g = chain_to_orbitals(space, gx, orbitals[n]);
      const Mat ctg = orbitals[n].transpose() * g;
      g -= orbitals[n] * (0.5 * (ctg + ctg.transpose()));
      worst_grad = std::max(worst_grad, g.norm());
    }
    if (worst_grad < opt.grad_tol) {
      res.converged = true;
      break;
    }
  }

  res.outer_cycles = cycle;
  res.orbitals = orbitals;
  res.calc = ctx.calc(xs);
  res.overlaps = ctx.overlaps(xs);
  res.q = constraints::eval_Q(res.calc, cs, res.overlaps);
  res.energies.resize(n_states);
  for (int n = 0; n < n_states; ++n)
    res.energies[n] = xs[n].dot(det::apply_hamiltonian(space, H, xs[n]));
  return res;
}

}  // namespace ecw::oracle
