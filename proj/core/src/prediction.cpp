#include "headneck/prediction.hpp"

#include <cmath>
#include <limits>

#include <Eigen/Cholesky>

namespace headneck::mpc {

void PredictionModel::state_jacobian(const Eigen::Ref<const Eigen::VectorXd>& q,
                                     const Eigen::Ref<const Eigen::VectorXd>& qd,
                                     const Eigen::Ref<const Eigen::VectorXd>& tau, double base_accel,
                                     Eigen::Ref<Eigen::MatrixXd> dq,
                                     Eigen::Ref<Eigen::MatrixXd> dqd) const {
  const int n = dofs();
  Eigen::VectorXd f0(n), f1(n);
  accelerations(q, qd, tau, base_accel, f0);
  Eigen::VectorXd qp = q, qdp = qd;
  for (int i = 0; i < n; ++i) {
    const double hq = 1.5e-8 * std::max(1.0, std::abs(q[i]));
    qp[i] = q[i] + hq;
    accelerations(qp, qd, tau, base_accel, f1);
    dq.col(i) = (f1 - f0) / hq;
    qp[i] = q[i];

    const double hv = 1.5e-8 * std::max(1.0, std::abs(qd[i]));
    qdp[i] = qd[i] + hv;
    accelerations(q, qdp, tau, base_accel, f1);
    dqd.col(i) = (f1 - f0) / hv;
    qdp[i] = qd[i];
  }
}

void PredictionModel::linearize(const Eigen::Ref<const Eigen::VectorXd>& q,
                                const Eigen::Ref<const Eigen::VectorXd>& qd,
                                const Eigen::Ref<const Eigen::VectorXd>& tau, double base_accel,
                                Eigen::Ref<Eigen::MatrixXd> dq, Eigen::Ref<Eigen::MatrixXd> dqd,
                                Eigen::Ref<Eigen::MatrixXd> gain) const {
  state_jacobian(q, qd, tau, base_accel, dq, dqd);
  input_gain(q, gain);
}

void HeadNeckModel::state_jacobian(const Eigen::Ref<const Eigen::VectorXd>& q,
                                   const Eigen::Ref<const Eigen::VectorXd>& qd,
                                   const Eigen::Ref<const Eigen::VectorXd>& tau, double base_accel,
                                   Eigen::Ref<Eigen::MatrixXd> dq,
                                   Eigen::Ref<Eigen::MatrixXd> dqd) const {
  const plant::AccelerationJacobian j = plant::acceleration_jacobian(q, qd, tau, base_accel, params_);
  dq = j.dq;
  dqd = j.dqd;
}

void HeadNeckModel::linearize(const Eigen::Ref<const Eigen::VectorXd>& q,
                              const Eigen::Ref<const Eigen::VectorXd>& qd,
                              const Eigen::Ref<const Eigen::VectorXd>& tau, double base_accel,
                              Eigen::Ref<Eigen::MatrixXd> dq, Eigen::Ref<Eigen::MatrixXd> dqd,
                              Eigen::Ref<Eigen::MatrixXd> gain) const {
  const plant::AccelerationJacobian j = plant::acceleration_jacobian(q, qd, tau, base_accel, params_);
  dq = j.dq;
  dqd = j.dqd;
  gain = j.gain;
}

void HeadNeckModel::accelerations(const Eigen::Ref<const Eigen::VectorXd>& q,
                                  const Eigen::Ref<const Eigen::VectorXd>& qd,
                                  const Eigen::Ref<const Eigen::VectorXd>& tau, double base_accel,
                                  Eigen::Ref<Eigen::VectorXd> qdd) const {
  qdd = plant::forward_dynamics_unchecked(q, qd, tau, base_accel, params_);
}

void HeadNeckModel::input_gain(const Eigen::Ref<const Eigen::VectorXd>& q,
                               Eigen::Ref<Eigen::MatrixXd> gain) const {
  const JointVector qq = q;
  gain = plant::mass_matrix(qq, params_).llt().solve(Eigen::Matrix<double, kDofs, kDofs>::Identity());
}

LinearModel::LinearModel(Eigen::MatrixXd stiffness, Eigen::MatrixXd damping, Eigen::MatrixXd gain,
                         Eigen::VectorXd base)
    : stiffness_(std::move(stiffness)),
      damping_(std::move(damping)),
      gain_(std::move(gain)),
      base_(std::move(base)) {
  const auto n = gain_.rows();
  if (gain_.cols() != n || stiffness_.rows() != n || stiffness_.cols() != n ||
      damping_.rows() != n || damping_.cols() != n || base_.size() != n) {
    throw InvalidArgument("linear model: inconsistent matrix shapes");
  }
}

void LinearModel::accelerations(const Eigen::Ref<const Eigen::VectorXd>& q,
                                const Eigen::Ref<const Eigen::VectorXd>& qd,
                                const Eigen::Ref<const Eigen::VectorXd>& tau, double base_accel,
                                Eigen::Ref<Eigen::VectorXd> qdd) const {
  qdd = stiffness_ * q + damping_ * qd + gain_ * tau + base_ * base_accel;
}

void LinearModel::input_gain(const Eigen::Ref<const Eigen::VectorXd>&,
                             Eigen::Ref<Eigen::MatrixXd> gain) const {
  gain = gain_;
}

void LinearModel::state_jacobian(const Eigen::Ref<const Eigen::VectorXd>&,
                                 const Eigen::Ref<const Eigen::VectorXd>&,
                                 const Eigen::Ref<const Eigen::VectorXd>&, double,
                                 Eigen::Ref<Eigen::MatrixXd> dq, Eigen::Ref<Eigen::MatrixXd> dqd) const {
  dq = stiffness_;
  dqd = damping_;
}

LinearModel upper_pitch_linearization(const plant::PlantParams& params) {
  constexpr int k = static_cast<int>(Dof::UpperPitch);
  plant::PlantState s;
  const double inertia = plant::mass_matrix(s.q, params)(k, k);

  // d(forcing)/dq and d(forcing)/dqd about the upright stack, others locked.
  const double h = 1e-6;
  plant::PlantState sp = s, sm = s;
  sp.q[k] = h;
  sm.q[k] = -h;
  const double dfdq =
      (plant::dynamics_terms(sp, 0.0, params).forcing[k] - plant::dynamics_terms(sm, 0.0, params).forcing[k]) /
      (2.0 * h);
  sp = s;
  sm = s;
  sp.qd[k] = h;
  sm.qd[k] = -h;
  const double dfdv =
      (plant::dynamics_terms(sp, 0.0, params).forcing[k] - plant::dynamics_terms(sm, 0.0, params).forcing[k]) /
      (2.0 * h);

  Eigen::MatrixXd a(1, 1), c(1, 1), b(1, 1);
  a(0, 0) = dfdq / inertia;
  c(0, 0) = dfdv / inertia;
  b(0, 0) = 1.0 / inertia;
  return LinearModel(a, c, b, Eigen::VectorXd::Zero(1));
}

Predictor::Predictor(const PredictionModel& model, CollocationScheme scheme, int intervals,
                     double interval_length)
    : model_(&model),
      scheme_(std::move(scheme)),
      intervals_(intervals),
      h_(interval_length),
      n_(model.dofs()),
      m_(2 * model.dofs()),
      d_(scheme_.stages()) {
  if (intervals_ < 1) throw InvalidArgument("predictor: interval count must be >= 1");
  if (!(h_ > 0.0)) throw InvalidArgument("predictor: interval length must be positive");
  if (d_ < 1) throw InvalidArgument("predictor: empty collocation scheme");
  newton_.resize(m_ * d_, m_ * d_);
  stage_jx_.resize(m_, m_ * d_);
  stage_ju_.resize(m_, n_ * d_);
  rhs_.resize(m_ * d_, m_ + n_);
}

int Predictor::node_count() const {
  return 1 + intervals_ * d_ + (scheme_.right_endpoint() ? 0 : 1);
}

void Predictor::dynamics(const Eigen::Ref<const Eigen::VectorXd>& x, const Eigen::VectorXd& u,
                         double a, Eigen::Ref<Eigen::VectorXd> out) const {
  out.head(n_) = x.tail(n_);
  model_->accelerations(x.head(n_), x.tail(n_), u, a, out.tail(n_));
}

void Predictor::jacobian(const Eigen::Ref<const Eigen::VectorXd>& x, const Eigen::VectorXd& u,
                         double a, Eigen::Ref<Eigen::MatrixXd> jx,
                         Eigen::Ref<Eigen::MatrixXd> ju) const {
  jx.setZero();
  jx.topRightCorner(n_, n_).setIdentity();
  ju.setZero();
  model_->linearize(x.head(n_), x.tail(n_), u, a, jx.bottomLeftCorner(n_, n_),
                    jx.bottomRightCorner(n_, n_), ju.bottomRows(n_));
}

Prediction Predictor::predict(const Eigen::VectorXd& x0, const Eigen::MatrixXd& controls,
                              const BaseForecast& forecast, double t0, bool with_sensitivity) {
  if (x0.size() != m_) throw InvalidArgument("predictor: initial state has the wrong size");
  if (controls.rows() != n_ || controls.cols() != intervals_) {
    throw InvalidArgument("predictor: controls must be dofs x intervals");
  }
  const bool endpoint = scheme_.right_endpoint();
  const int nodes = node_count();
  const int nu = n_ * intervals_;

  Prediction p;
  p.times.resize(static_cast<std::size_t>(nodes));
  p.states.setZero(m_, nodes);
  p.node_weights.setZero(nodes);
  p.has_sensitivity = with_sensitivity;
  if (with_sensitivity) p.sensitivity.setZero(m_ * nodes, nu);

  p.times[0] = t0;
  p.states.col(0) = x0;

  Eigen::VectorXd x = x0;
  Eigen::MatrixXd sx;  // d x / d u at the current interval start
  if (with_sensitivity) sx.setZero(m_, nu);

  Eigen::VectorXd z(m_ * d_), f(m_ * d_), g(m_ * d_), dz(m_ * d_);
  Eigen::VectorXd accel(d_);
  Eigen::MatrixXd jx(m_, m_), ju(m_, n_);
  const Eigen::MatrixXd& a = scheme_.a;

  int node = 1;
  for (int k = 0; k < intervals_; ++k) {
    const double tk = t0 + k * h_;
    const Eigen::VectorXd u = controls.col(k);
    for (int j = 0; j < d_; ++j) accel[j] = forecast.at(tk + scheme_.tau[j] * h_);

    // Simplified Newton on the stage states. The iteration matrix is the
    // exact one of the previous interval when sensitivities were factored
    // there, else it is built from the Jacobian at x.
    Eigen::VectorXd fx(m_);
    dynamics(x, u, accel[0], fx);
    auto fresh_matrix = [&] {
      jacobian(x, u, accel[0], jx, ju);
      for (int i = 0; i < d_; ++i) {
        for (int j = 0; j < d_; ++j) {
          newton_.block(i * m_, j * m_, m_, m_) = -h_ * a(i, j) * jx;
        }
        newton_.block(i * m_, i * m_, m_, m_).diagonal().array() += 1.0;
      }
      lu_.compute(newton_);
    };
    auto iterate = [&] {
      for (int i = 0; i < d_; ++i) z.segment(i * m_, m_) = x + scheme_.tau[i] * h_ * fx;
      for (int it = 0; it < 50; ++it) {
        for (int j = 0; j < d_; ++j) dynamics(z.segment(j * m_, m_), u, accel[j], f.segment(j * m_, m_));
        if (!f.allFinite()) return false;
        for (int i = 0; i < d_; ++i) {
          g.segment(i * m_, m_) = z.segment(i * m_, m_) - x;
          for (int j = 0; j < d_; ++j) g.segment(i * m_, m_) -= h_ * a(i, j) * f.segment(j * m_, m_);
        }
        dz = lu_.solve(g);
        z -= dz;
        if (!z.allFinite()) return false;
        const double scale = 1.0 + z.lpNorm<Eigen::Infinity>();
        if (dz.lpNorm<Eigen::Infinity>() <= 1e-11 * scale) return true;
      }
      return false;
    };
    const bool reuse = with_sensitivity && k > 0;
    if (!reuse) fresh_matrix();
    bool converged = iterate();
    if (!converged && reuse) {
      fresh_matrix();
      converged = iterate();
    }
    if (converged && !endpoint) {
      for (int j = 0; j < d_; ++j) dynamics(z.segment(j * m_, m_), u, accel[j], f.segment(j * m_, m_));
      converged = f.allFinite();
    }
    if (!converged) {
      p.feasible = false;
      return p;
    }

    Eigen::MatrixXd dzdx, dzdu;
    if (with_sensitivity) {
      // Implicit function theorem on Z - 1 (x) x - h (A (x) I) F(Z, u) = 0.
      for (int j = 0; j < d_; ++j) {
        jacobian(z.segment(j * m_, m_), u, accel[j], stage_jx_.middleCols(j * m_, m_),
                 stage_ju_.middleCols(j * n_, n_));
      }
      rhs_.setZero();
      for (int i = 0; i < d_; ++i) {
        for (int j = 0; j < d_; ++j) {
          newton_.block(i * m_, j * m_, m_, m_) = -h_ * a(i, j) * stage_jx_.middleCols(j * m_, m_);
          rhs_.block(i * m_, m_, m_, n_) += h_ * a(i, j) * stage_ju_.middleCols(j * n_, n_);
        }
        newton_.block(i * m_, i * m_, m_, m_).diagonal().array() += 1.0;
        rhs_.block(i * m_, 0, m_, m_).setIdentity();
      }
      lu_.compute(newton_);
      const Eigen::MatrixXd sol = lu_.solve(rhs_);
      dzdx = sol.leftCols(m_);
      dzdu = sol.rightCols(n_);
    }

    const int cols_before = k * n_;
    for (int j = 0; j < d_; ++j, ++node) {
      p.times[static_cast<std::size_t>(node)] = tk + scheme_.tau[j] * h_;
      p.states.col(node) = z.segment(j * m_, m_);
      p.node_weights[node] = h_ * scheme_.b[j];
      if (with_sensitivity) {
        auto rows = p.sensitivity.middleRows(node * m_, m_);
        if (cols_before > 0) {
          rows.leftCols(cols_before).noalias() =
              dzdx.middleRows(j * m_, m_) * sx.leftCols(cols_before);
        }
        rows.middleCols(cols_before, n_) = dzdu.middleRows(j * m_, m_);
      }
    }

    if (endpoint) {
      x = z.tail(m_);
      if (with_sensitivity) sx = p.sensitivity.middleRows((node - 1) * m_, m_);
    } else {
      Eigen::VectorXd xn = x;
      for (int j = 0; j < d_; ++j) xn += h_ * scheme_.b[j] * f.segment(j * m_, m_);
      if (with_sensitivity) {
        Eigen::MatrixXd sn = sx;
        for (int j = 0; j < d_; ++j) {
          const auto jxj = stage_jx_.middleCols(j * m_, m_);
          sn.noalias() += h_ * scheme_.b[j] * jxj * p.sensitivity.middleRows((node - d_ + j) * m_, m_);
          sn.middleCols(cols_before, n_) += h_ * scheme_.b[j] * stage_ju_.middleCols(j * n_, n_);
        }
        sx = sn;
      }
      x = xn;
    }

    for (int j = 0; j < n_; ++j) {
      if (!(std::abs(x[j]) <= kDivergenceAngle)) {
        p.feasible = false;
        return p;
      }
    }
    for (int c = node - d_; c < node; ++c) {
      if (!(p.states.col(c).head(n_).cwiseAbs().maxCoeff() <= kDivergenceAngle)) {
        p.feasible = false;
        return p;
      }
    }
  }

  if (!endpoint) {
    p.times[static_cast<std::size_t>(node)] = t0 + intervals_ * h_;
    p.states.col(node) = x;
    if (with_sensitivity) p.sensitivity.middleRows(node * m_, m_) = sx;
  }
  return p;
}

}  // namespace headneck::mpc
