#include "headneck/mpc.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <string>

#include <Eigen/Cholesky>

namespace headneck::mpc {

FlatWeights WeightVector::flat() const {
  FlatWeights w;
  w << effort, conflict;
  return w;
}

WeightVector WeightVector::from_flat(const FlatWeights& w) {
  WeightVector v;
  v.effort = w.head<kDofs>();
  v.conflict = w.tail<kDofs>();
  return v;
}

void WeightVector::validate() const {
  const FlatWeights w = flat();
  for (int i = 0; i < kWeightCount; ++i) {
    if (!std::isfinite(w[i]) || w[i] < 0.0) {
      throw InvalidArgument("weights." + std::string(kWeightNames[static_cast<std::size_t>(i)]) +
                            " must be finite and non-negative");
    }
  }
}

WeightVector WeightVector::scaled(double c) const {
  WeightVector v = *this;
  v.effort *= c;
  v.conflict *= c;
  return v;
}

WeightVector WeightVector::optimized() {
  WeightVector w;
  w.effort << 17.68, 78.92, 63.77, 15.53, 33.90;
  w.conflict << 70.84, 15.28, 7.85, 41.40, 5.17;
  return w;
}

WeightVector WeightVector::sagittal_prior() {
  WeightVector w = optimized();
  w.effort[index(Dof::LowerPitch)] = 76.96;
  w.effort[index(Dof::UpperPitch)] = 3.37;
  w.conflict[index(Dof::LowerPitch)] = 8.26;
  w.conflict[index(Dof::UpperPitch)] = 1.62;
  return w;
}

WeightVector WeightVector::sagittal_retuned() {
  WeightVector w = optimized();
  w.effort[index(Dof::LowerPitch)] = 78.92;
  w.effort[index(Dof::UpperPitch)] = 15.53;
  w.conflict[index(Dof::LowerPitch)] = 15.28;
  w.conflict[index(Dof::UpperPitch)] = 41.40;
  return w;
}

void MpcConfig::validate() const {
  if (intervals < 1) throw InvalidArgument("mpc.N must be >= 1");
  if (!(interval_length > 0.0) || !std::isfinite(interval_length)) {
    throw InvalidArgument("mpc.T_sp must be positive");
  }
  if (node_fractions.empty() && collocation_nodes < 1) throw InvalidArgument("mpc.d must be >= 1");
  if (!node_fractions.empty()) (void)CollocationScheme::from_nodes(
      Eigen::Map<const Eigen::VectorXd>(node_fractions.data(),
                                        static_cast<Eigen::Index>(node_fractions.size())));
  for (int i = 0; i < kDofs; ++i) {
    if (!(torque_bounds[i] > 0.0) || !std::isfinite(torque_bounds[i])) {
      throw InvalidArgument("mpc.torque_bounds must be positive");
    }
    if (!(joint_limits[i] > 0.0) || !std::isfinite(joint_limits[i])) {
      throw InvalidArgument("mpc.joint_limits must be positive");
    }
  }
  if (!(limit_penalty >= 0.0)) throw InvalidArgument("mpc.limit_penalty must be non-negative");
  if (max_iterations < 1) throw InvalidArgument("mpc.max_iterations must be >= 1");
  if (!(tolerance > 0.0)) throw InvalidArgument("mpc.tolerance must be positive");
  if (!(control_period > 0.0)) throw InvalidArgument("mpc.control_period must be positive");
}

CollocationScheme MpcConfig::scheme() const {
  if (node_fractions.empty()) return CollocationScheme::radau(collocation_nodes);
  return CollocationScheme::from_nodes(Eigen::Map<const Eigen::VectorXd>(
      node_fractions.data(), static_cast<Eigen::Index>(node_fractions.size())));
}

std::vector<double> MpcConfig::fractions() const {
  const CollocationScheme s = scheme();
  return {s.tau.data(), s.tau.data() + s.tau.size()};
}

HorizonGrid build_horizon(double t0, const MpcConfig& cfg) {
  cfg.validate();
  return build_horizon(t0, cfg.intervals, cfg.interval_length, cfg.fractions());
}

CostWeights CostWeights::from(const WeightVector& w) {
  w.validate();
  return {Eigen::VectorXd(w.effort), Eigen::VectorXd(w.conflict)};
}

double trajectory_cost(const Prediction& traj, const Eigen::MatrixXd& controls,
                       const CostWeights& w, double interval_length) {
  const auto n = controls.rows();
  if (w.effort.size() != n || w.conflict.size() != n || traj.states.rows() != 2 * n ||
      traj.node_weights.size() != traj.states.cols()) {
    throw InvalidArgument("cost: inconsistent shapes");
  }
  double j = 0.0;
  for (int c = 0; c < traj.states.cols(); ++c) {
    const auto qd = traj.states.col(c).tail(n);
    j += traj.node_weights[c] * (w.conflict.array() * qd.array().square()).sum();
  }
  for (int k = 0; k < controls.cols(); ++k) {
    j += interval_length * (w.effort.array() * controls.col(k).array().square()).sum();
  }
  return j;
}

double cost(const Prediction& traj, const Eigen::MatrixXd& controls, const WeightVector& w,
            double interval_length) {
  return trajectory_cost(traj, controls, CostWeights::from(w), interval_length);
}

Eigen::VectorXd solve_box_qp(const Eigen::MatrixXd& h, const Eigen::VectorXd& g,
                             const Eigen::VectorXd& lo, const Eigen::VectorXd& hi, int* iterations) {
  const int n = static_cast<int>(g.size());
  enum State : char { kFree, kLower, kUpper };
  std::vector<State> st(static_cast<std::size_t>(n), kFree);
  Eigen::VectorXd x = Eigen::VectorXd::Zero(n).cwiseMax(lo).cwiseMin(hi);
  for (int i = 0; i < n; ++i) {
    if (x[i] <= lo[i] && g[i] > 0.0) st[static_cast<std::size_t>(i)] = kLower;
    if (x[i] >= hi[i] && g[i] < 0.0) st[static_cast<std::size_t>(i)] = kUpper;
  }

  std::vector<int> free;
  int it = 0;
  const int max_it = 10 * n + 10;
  for (; it < max_it; ++it) {
    free.clear();
    for (int i = 0; i < n; ++i) {
      if (st[static_cast<std::size_t>(i)] == kFree) free.push_back(i);
    }
    const int nf = static_cast<int>(free.size());
    if (nf > 0) {
      Eigen::MatrixXd hff(nf, nf);
      Eigen::VectorXd rhs(nf);
      for (int a = 0; a < nf; ++a) {
        double r = -g[free[a]];
        for (int i = 0; i < n; ++i) {
          if (st[static_cast<std::size_t>(i)] != kFree) r -= h(free[a], i) * x[i];
        }
        rhs[a] = r;
        for (int b = 0; b < nf; ++b) hff(a, b) = h(free[a], free[b]);
      }
      const Eigen::VectorXd target = hff.llt().solve(rhs);

      // Walk toward the subspace minimizer until a bound blocks.
      double step = 1.0;
      int blocking = -1;
      bool blocking_lower = false;
      for (int a = 0; a < nf; ++a) {
        const int i = free[a];
        const double d = target[a] - x[i];
        if (d < 0.0 && x[i] + d < lo[i]) {
          const double s = (lo[i] - x[i]) / d;
          if (s < step) step = s, blocking = i, blocking_lower = true;
        } else if (d > 0.0 && x[i] + d > hi[i]) {
          const double s = (hi[i] - x[i]) / d;
          if (s < step) step = s, blocking = i, blocking_lower = false;
        }
      }
      for (int a = 0; a < nf; ++a) x[free[a]] += step * (target[a] - x[free[a]]);
      if (blocking >= 0) {
        x[blocking] = blocking_lower ? lo[blocking] : hi[blocking];
        st[static_cast<std::size_t>(blocking)] = blocking_lower ? kLower : kUpper;
        continue;
      }
    }

    // Subspace optimum reached: release the bound with the worst multiplier.
    const Eigen::VectorXd grad = h * x + g;
    int release = -1;
    double worst = 0.0;
    for (int i = 0; i < n; ++i) {
      const State s = st[static_cast<std::size_t>(i)];
      const double viol = s == kLower ? -grad[i] : s == kUpper ? grad[i] : 0.0;
      if (viol > worst) worst = viol, release = i;
    }
    if (release < 0 || worst <= 1e-14 * (1.0 + grad.lpNorm<Eigen::Infinity>())) break;
    st[static_cast<std::size_t>(release)] = kFree;
  }
  if (iterations) *iterations = it;
  return x;
}

NlpSolver::NlpSolver(const PredictionModel& model, const CollocationScheme& scheme, int intervals,
                     double interval_length, Eigen::VectorXd torque_bounds,
                     Eigen::VectorXd joint_limits, NlpOptions options)
    : predictor_(model, scheme, intervals, interval_length),
      n_(model.dofs()),
      bounds_(std::move(torque_bounds)),
      limits_(std::move(joint_limits)),
      options_(options) {
  if (bounds_.size() != n_ || limits_.size() != n_) {
    throw InvalidArgument("solver: bounds must have one entry per DoF");
  }
}

NlpSolver::Evaluation NlpSolver::evaluate(const Eigen::VectorXd& x0,
                                          const Eigen::MatrixXd& controls,
                                          const BaseForecast& forecast, double t0,
                                          const CostWeights& w, bool derivatives) {
  Evaluation e;
  e.prediction = predictor_.predict(x0, controls, forecast, t0, derivatives);
  if (!e.prediction.feasible) {
    e.objective = e.cost = std::numeric_limits<double>::infinity();
    return e;
  }
  e.feasible = true;
  const Prediction& p = e.prediction;
  const double h = predictor_.interval_length();
  const int nodes = p.nodes();
  const int m = 2 * n_;
  const int nu = n_ * predictor_.intervals();

  e.cost = trajectory_cost(p, controls, w, h);
  double penalty = 0.0;
  const double rho = options_.limit_penalty;
  for (int c = 0; c < nodes; ++c) {
    for (int i = 0; i < n_; ++i) {
      const double excess = std::abs(p.states(i, c)) - limits_[i];
      if (excess > 0.0) penalty += rho * p.node_weights[c] * excess * excess;
    }
  }
  e.objective = e.cost + penalty;
  if (!derivatives) return e;

  // Residual Jacobian rows: sqrt(weight) * d(residual)/du.
  Eigen::MatrixXd rows(n_ * nodes * 2, nu);
  Eigen::VectorXd res(n_ * nodes * 2);
  int r = 0;
  for (int c = 1; c < nodes; ++c) {
    const double wn = p.node_weights[c];
    if (wn <= 0.0) continue;
    for (int i = 0; i < n_; ++i) {
      const double s = std::sqrt(w.conflict[i] * wn);
      if (s > 0.0) {
        rows.row(r) = s * p.sensitivity.row(c * m + n_ + i);
        res[r] = s * p.states(n_ + i, c);
        ++r;
      }
      const double excess = std::abs(p.states(i, c)) - limits_[i];
      if (excess > 0.0 && rho > 0.0) {
        const double sp = std::sqrt(rho * wn);
        const double sign = p.states(i, c) > 0.0 ? 1.0 : -1.0;
        rows.row(r) = sp * sign * p.sensitivity.row(c * m + i);
        res[r] = sp * excess;
        ++r;
      }
    }
  }
  const auto jr = rows.topRows(r);
  e.hessian.setZero(nu, nu);
  e.hessian.selfadjointView<Eigen::Lower>().rankUpdate(jr.transpose(), 2.0);
  e.hessian.triangularView<Eigen::StrictlyUpper>() = e.hessian.transpose();
  e.gradient.noalias() = 2.0 * jr.transpose() * res.head(r);
  for (int k = 0; k < predictor_.intervals(); ++k) {
    for (int i = 0; i < n_; ++i) {
      const int col = k * n_ + i;
      e.gradient[col] += 2.0 * w.effort[i] * h * controls(i, k);
      e.hessian(col, col) += 2.0 * w.effort[i] * h;
    }
  }
  return e;
}

namespace {

double projected_gradient_norm(const Eigen::VectorXd& u, const Eigen::VectorXd& g,
                               const Eigen::VectorXd& lo, const Eigen::VectorXd& hi) {
  double norm = 0.0;
  for (Eigen::Index i = 0; i < u.size(); ++i) {
    if (u[i] <= lo[i] && g[i] > 0.0) continue;
    if (u[i] >= hi[i] && g[i] < 0.0) continue;
    norm = std::max(norm, std::abs(g[i]));
  }
  return norm;
}

}  // namespace

NlpResult NlpSolver::solve(const Eigen::VectorXd& x0, const BaseForecast& forecast, double t0,
                           const CostWeights& w, const Eigen::MatrixXd* initial) {
  if (!x0.allFinite()) throw InvalidArgument("solver: non-finite initial state");
  if (x0.head(n_).cwiseAbs().maxCoeff() > Predictor::kDivergenceAngle) {
    throw InvalidArgument("solver: initial state is outside the feasible joint range");
  }
  const int big_n = predictor_.intervals();
  const int nu = n_ * big_n;
  Eigen::VectorXd lo(nu), hi(nu);
  for (int k = 0; k < big_n; ++k) {
    lo.segment(k * n_, n_) = -bounds_;
    hi.segment(k * n_, n_) = bounds_;
  }

  Eigen::MatrixXd u = Eigen::MatrixXd::Zero(n_, big_n);
  if (initial) {
    if (initial->rows() != n_ || initial->cols() != big_n) {
      throw InvalidArgument("solver: initial controls have the wrong shape");
    }
    u = *initial;
    for (int k = 0; k < big_n; ++k) u.col(k) = u.col(k).cwiseMax(-bounds_).cwiseMin(bounds_);
  }

  NlpResult out;
  Evaluation cur = evaluate(x0, u, forecast, t0, w, true);
  if (!cur.feasible && initial) {
    u.setZero();
    cur = evaluate(x0, u, forecast, t0, w, true);
  }
  out.controls = u;
  if (!cur.feasible) {
    out.prediction = std::move(cur.prediction);
    out.cost = out.objective = std::numeric_limits<double>::infinity();
    return out;
  }
  out.objective_history.push_back(cur.objective);

  for (int it = 0;; ++it) {
    Eigen::Map<const Eigen::VectorXd> uf(u.data(), nu);
    out.projected_gradient = projected_gradient_norm(uf, cur.gradient, lo, hi);
    if (out.projected_gradient < options_.tolerance) {
      out.converged = true;
      break;
    }
    if (it >= options_.max_iterations) break;
    out.iterations = it + 1;

    const Eigen::VectorXd delta = solve_box_qp(cur.hessian, cur.gradient, lo - uf, hi - uf);
    const double slope = cur.gradient.dot(delta);
    if (!(slope < 0.0)) break;

    // Armijo backtracking on the exact objective.
    bool accepted = false;
    double alpha = 1.0;
    for (int ls = 0; ls < 30; ++ls, alpha *= 0.5) {
      Eigen::VectorXd trial_f = uf + alpha * delta;
      trial_f = trial_f.cwiseMax(lo).cwiseMin(hi);
      const Eigen::MatrixXd trial = Eigen::Map<const Eigen::MatrixXd>(trial_f.data(), n_, big_n);
      // The full step is usually accepted, so it is evaluated with derivatives.
      const bool full = ls == 0;
      Evaluation cand = evaluate(x0, trial, forecast, t0, w, full);
      if (cand.feasible && cand.objective <= cur.objective + 1e-4 * alpha * slope) {
        u = trial;
        cur = full ? std::move(cand) : evaluate(x0, u, forecast, t0, w, true);
        accepted = true;
        break;
      }
    }
    if (!accepted) break;
    out.objective_history.push_back(cur.objective);
  }

  out.controls = u;
  out.cost = cur.cost;
  out.objective = cur.objective;
  out.prediction = std::move(cur.prediction);
  return out;
}

MpcController::MpcController(plant::PlantParams params, MpcConfig cfg, WeightVector weights)
    : cfg_(std::move(cfg)), weights_(weights) {
  params.validate();
  cfg_.validate();
  cost_weights_ = CostWeights::from(weights_);
  model_ = std::make_unique<HeadNeckModel>(std::move(params));
  NlpOptions opt;
  opt.max_iterations = cfg_.max_iterations;
  opt.tolerance = cfg_.tolerance;
  opt.limit_penalty = cfg_.limit_penalty;
  solver_ = std::make_unique<NlpSolver>(*model_, cfg_.scheme(), cfg_.intervals, cfg_.interval_length,
                                        Eigen::VectorXd(cfg_.torque_bounds),
                                        Eigen::VectorXd(cfg_.joint_limits), opt);
}

MpcSolution MpcController::solve(const plant::PlantState& x0, const BaseForecast& forecast,
                                 double t0, const Eigen::MatrixXd* warm) {
  if (!x0.finite()) throw InvalidArgument("mpc: non-finite initial state");
  const auto start = std::chrono::steady_clock::now();
  Eigen::VectorXd x(2 * kDofs);
  x << x0.q, x0.qd;
  NlpResult r = solver_->solve(x, forecast, t0, cost_weights_, warm);
  const auto stop = std::chrono::steady_clock::now();

  MpcSolution s;
  s.controls = r.controls;
  s.u0.tau = r.controls.col(0).cwiseMax(-cfg_.torque_bounds).cwiseMin(cfg_.torque_bounds);
  s.node_times = r.prediction.times;
  s.node_states = r.prediction.states;
  s.cost = r.cost;
  s.objective = r.objective;
  s.projected_gradient = r.projected_gradient;
  s.iterations = r.iterations;
  s.converged = r.converged;
  s.solve_time = std::chrono::duration<double>(stop - start).count();
  return s;
}

Eigen::MatrixXd MpcController::shift_controls(const Eigen::MatrixXd& prev, double prev_t0, double t0,
                                              double interval_length) {
  Eigen::MatrixXd out(prev.rows(), prev.cols());
  const auto last = prev.cols() - 1;
  for (Eigen::Index k = 0; k < prev.cols(); ++k) {
    const double mid = t0 + (static_cast<double>(k) + 0.5) * interval_length;
    const auto src = static_cast<Eigen::Index>(std::floor((mid - prev_t0) / interval_length));
    out.col(k) = prev.col(std::clamp<Eigen::Index>(src, 0, last));
  }
  return out;
}

MpcSolution MpcController::step(const sensory::SensoryFeedback& fb, double base_accel_now,
                                const perturb::BaseTrajectory* future, double t_now) {
  plant::PlantState x0;
  x0.q = fb.head_on_trunk_angles;
  x0.qd = fb.joint_rates;

  BaseForecast forecast = BaseForecast::hold(base_accel_now);
  if (cfg_.preview == Preview::Full) {
    if (!future) throw InvalidArgument("mpc: full preview requires the base trajectory");
    forecast = BaseForecast::follow(*future);
  }

  std::optional<Eigen::MatrixXd> warm;
  if (cfg_.warm_start && previous_) {
    warm = shift_controls(*previous_, previous_t0_, t_now, cfg_.interval_length);
  }
  MpcSolution s = solve(x0, forecast, t_now, warm ? &*warm : nullptr);
  previous_ = s.controls;
  previous_t0_ = t_now;
  return s;
}

void MpcController::reset() {
  previous_.reset();
  previous_t0_ = 0.0;
}

}  // namespace headneck::mpc
