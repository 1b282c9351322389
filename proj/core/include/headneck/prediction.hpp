#pragma once

// Internal (forward) model of the controller: integrates second-order joint
// dynamics over the prediction horizon by collocation, optionally with the
// exact derivatives of every node state with respect to the controls.

#include <vector>

#include <Eigen/Core>
#include <Eigen/LU>

#include "headneck/collocation.hpp"
#include "headneck/perturbation.hpp"
#include "headneck/plant.hpp"

namespace headneck::mpc {

/// qdd = f(q, qd, tau, base_accel) for an n-DoF mechanism.
class PredictionModel {
 public:
  virtual ~PredictionModel() = default;

  virtual int dofs() const = 0;

  virtual void accelerations(const Eigen::Ref<const Eigen::VectorXd>& q,
                             const Eigen::Ref<const Eigen::VectorXd>& qd,
                             const Eigen::Ref<const Eigen::VectorXd>& tau, double base_accel,
                             Eigen::Ref<Eigen::VectorXd> qdd) const = 0;

  /// d(qdd)/d(tau), n x n.
  virtual void input_gain(const Eigen::Ref<const Eigen::VectorXd>& q,
                          Eigen::Ref<Eigen::MatrixXd> gain) const = 0;

  /// d(qdd)/dq and d(qdd)/dqd. The default uses forward differences.
  virtual void state_jacobian(const Eigen::Ref<const Eigen::VectorXd>& q,
                              const Eigen::Ref<const Eigen::VectorXd>& qd,
                              const Eigen::Ref<const Eigen::VectorXd>& tau, double base_accel,
                              Eigen::Ref<Eigen::MatrixXd> dq, Eigen::Ref<Eigen::MatrixXd> dqd) const;

  /// state_jacobian and input_gain together.
  virtual void linearize(const Eigen::Ref<const Eigen::VectorXd>& q,
                         const Eigen::Ref<const Eigen::VectorXd>& qd,
                         const Eigen::Ref<const Eigen::VectorXd>& tau, double base_accel,
                         Eigen::Ref<Eigen::MatrixXd> dq, Eigen::Ref<Eigen::MatrixXd> dqd,
                         Eigen::Ref<Eigen::MatrixXd> gain) const;
};

/// The plant's own equations of motion (perfect internal model).
class HeadNeckModel final : public PredictionModel {
 public:
  explicit HeadNeckModel(plant::PlantParams params) : params_(std::move(params)) {}

  int dofs() const override { return kDofs; }
  void accelerations(const Eigen::Ref<const Eigen::VectorXd>& q,
                     const Eigen::Ref<const Eigen::VectorXd>& qd,
                     const Eigen::Ref<const Eigen::VectorXd>& tau, double base_accel,
                     Eigen::Ref<Eigen::VectorXd> qdd) const override;
  void input_gain(const Eigen::Ref<const Eigen::VectorXd>& q,
                  Eigen::Ref<Eigen::MatrixXd> gain) const override;
  void state_jacobian(const Eigen::Ref<const Eigen::VectorXd>& q,
                      const Eigen::Ref<const Eigen::VectorXd>& qd,
                      const Eigen::Ref<const Eigen::VectorXd>& tau, double base_accel,
                      Eigen::Ref<Eigen::MatrixXd> dq, Eigen::Ref<Eigen::MatrixXd> dqd) const override;
  void linearize(const Eigen::Ref<const Eigen::VectorXd>& q,
                 const Eigen::Ref<const Eigen::VectorXd>& qd,
                 const Eigen::Ref<const Eigen::VectorXd>& tau, double base_accel,
                 Eigen::Ref<Eigen::MatrixXd> dq, Eigen::Ref<Eigen::MatrixXd> dqd,
                 Eigen::Ref<Eigen::MatrixXd> gain) const override;

  const plant::PlantParams& params() const { return params_; }

 private:
  plant::PlantParams params_;
};

/// qdd = stiffness * q + damping * qd + gain * tau + base * base_accel.
class LinearModel final : public PredictionModel {
 public:
  LinearModel(Eigen::MatrixXd stiffness, Eigen::MatrixXd damping, Eigen::MatrixXd gain,
              Eigen::VectorXd base);

  int dofs() const override { return static_cast<int>(gain_.rows()); }
  void accelerations(const Eigen::Ref<const Eigen::VectorXd>& q,
                     const Eigen::Ref<const Eigen::VectorXd>& qd,
                     const Eigen::Ref<const Eigen::VectorXd>& tau, double base_accel,
                     Eigen::Ref<Eigen::VectorXd> qdd) const override;
  void input_gain(const Eigen::Ref<const Eigen::VectorXd>& q,
                  Eigen::Ref<Eigen::MatrixXd> gain) const override;
  void state_jacobian(const Eigen::Ref<const Eigen::VectorXd>& q,
                      const Eigen::Ref<const Eigen::VectorXd>& qd,
                      const Eigen::Ref<const Eigen::VectorXd>& tau, double base_accel,
                      Eigen::Ref<Eigen::MatrixXd> dq, Eigen::Ref<Eigen::MatrixXd> dqd) const override;

  const Eigen::MatrixXd& stiffness() const { return stiffness_; }
  const Eigen::MatrixXd& damping() const { return damping_; }
  const Eigen::MatrixXd& gain() const { return gain_; }

 private:
  Eigen::MatrixXd stiffness_, damping_, gain_;
  Eigen::VectorXd base_;
};

/// Small-angle upper-neck pitch model with every other DoF locked.
LinearModel upper_pitch_linearization(const plant::PlantParams& params);

/// Lateral base acceleration expected over the horizon.
struct BaseForecast {
  double held_accel = 0.0;
  const perturb::BaseTrajectory* profile = nullptr;  // true future when set

  static BaseForecast hold(double accel) { return {accel, nullptr}; }
  static BaseForecast follow(const perturb::BaseTrajectory& traj) { return {0.0, &traj}; }

  double at(double t) const { return profile ? profile->accel_at(t) : held_accel; }
};

/// States at the horizon nodes, in time order: the initial state, the
/// collocation nodes of every interval, and the final state when the last
/// node fraction is below one.
struct Prediction {
  std::vector<double> times;
  Eigen::MatrixXd states;        // 2n x nodes, [q; qd] per column
  Eigen::VectorXd node_weights;  // quadrature weight of each node [s]
  Eigen::MatrixXd sensitivity;   // (2n * nodes) x (n * N), column-major control order
  bool feasible = true;
  bool has_sensitivity = false;

  int nodes() const { return static_cast<int>(states.cols()); }
};

class Predictor {
 public:
  Predictor(const PredictionModel& model, CollocationScheme scheme, int intervals,
            double interval_length);

  /// controls is n x N (column k acts on interval k).
  Prediction predict(const Eigen::VectorXd& x0, const Eigen::MatrixXd& controls,
                     const BaseForecast& forecast, double t0, bool with_sensitivity);

  int intervals() const { return intervals_; }
  double interval_length() const { return h_; }
  const CollocationScheme& scheme() const { return scheme_; }
  const PredictionModel& model() const { return *model_; }
  int node_count() const;

  /// Largest joint angle magnitude a prediction may reach before it is
  /// declared infeasible.
  static constexpr double kDivergenceAngle = kPi;

 private:
  void dynamics(const Eigen::Ref<const Eigen::VectorXd>& x, const Eigen::VectorXd& u, double a,
                Eigen::Ref<Eigen::VectorXd> out) const;
  void jacobian(const Eigen::Ref<const Eigen::VectorXd>& x, const Eigen::VectorXd& u, double a,
                Eigen::Ref<Eigen::MatrixXd> jx, Eigen::Ref<Eigen::MatrixXd> ju) const;

  const PredictionModel* model_;
  CollocationScheme scheme_;
  int intervals_;
  double h_;
  int n_;
  int m_;
  int d_;

  // Workspace.
  Eigen::MatrixXd newton_;
  Eigen::PartialPivLU<Eigen::MatrixXd> lu_;
  Eigen::MatrixXd stage_jx_, stage_ju_;
  Eigen::MatrixXd rhs_;
};

}  // namespace headneck::mpc
