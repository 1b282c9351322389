#pragma once

// Collocation-horizon MPC: piecewise-constant joint torques over N intervals
// minimize weighted muscle effort plus somatosensory conflict (squared joint
// rates) subject to torque boxes and penalized joint limits.

#include <array>
#include <memory>
#include <optional>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "headneck/collocation.hpp"
#include "headneck/perturbation.hpp"
#include "headneck/plant.hpp"
#include "headneck/prediction.hpp"
#include "headneck/sensory.hpp"

namespace headneck::mpc {

inline constexpr int kWeightCount = 2 * kDofs;

/// Weight names in flat order: efforts then conflicts, each in DoF order.
inline constexpr std::array<std::string_view, kWeightCount> kWeightNames = {
    "tx1", "ty1", "tx2", "ty2", "tz2", "wx1", "wy1", "wx2", "wy2", "wz2"};

using FlatWeights = Eigen::Matrix<double, kWeightCount, 1>;

struct WeightVector {
  JointVector effort = JointVector::Ones();    // tx1, ty1, tx2, ty2, tz2
  JointVector conflict = JointVector::Ones();  // wx1, wy1, wx2, wy2, wz2

  FlatWeights flat() const;
  static WeightVector from_flat(const FlatWeights& w);

  /// Throws InvalidArgument on negative or non-finite entries.
  void validate() const;

  WeightVector scaled(double c) const;

  /// W_tx1 / W_tx2.
  double lower_to_upper_roll_effort_ratio() const { return effort[0] / effort[2]; }

  /// Optimized vector reported for the lateral scenario.
  static WeightVector optimized();
  /// Earlier sagittal tuning (pitch weights from the comparison table; the
  /// remaining six entries are taken from optimized()).
  static WeightVector sagittal_prior();
  /// Re-tuned sagittal pitch weights; identical to optimized().
  static WeightVector sagittal_retuned();
};

/// Roll-effort ratio stated alongside the optimized vector, which the
/// vector's own entries do not reproduce (17.68 / 63.77).
inline constexpr double kStatedRollEffortRatio = 0.5;

enum class Preview { None, Full };

struct MpcConfig {
  int intervals = 10;             // N
  double interval_length = 0.04;  // T_sp [s]
  int collocation_nodes = 4;      // d
  std::vector<double> node_fractions;  // empty: Radau points for d
  JointVector torque_bounds = (JointVector() << 30, 30, 20, 20, 20).finished();  // N·m
  JointVector joint_limits = (JointVector() << deg2rad(45), deg2rad(45), deg2rad(70),
                              deg2rad(70), deg2rad(70)).finished();               // rad
  double limit_penalty = 1e4;     // per rad² of excursion beyond the limit, per second
  int max_iterations = 30;
  double tolerance = 1e-6;        // projected-gradient infinity norm
  bool warm_start = true;
  Preview preview = Preview::None;
  double control_period = 0.01;   // s between re-solves

  void validate() const;
  /// Collocation scheme from node_fractions, or Radau points when empty.
  CollocationScheme scheme() const;
  std::vector<double> fractions() const;
};

HorizonGrid build_horizon(double t0, const MpcConfig& cfg);

/// Per-DoF cost weights for a model of any size.
struct CostWeights {
  Eigen::VectorXd effort;
  Eigen::VectorXd conflict;

  static CostWeights from(const WeightVector& w);
};

/// J = sum_nodes w_node sum_i conflict_i qd_i^2 + sum_k sum_i effort_i u_ik^2 T_sp.
double trajectory_cost(const Prediction& traj, const Eigen::MatrixXd& controls,
                       const CostWeights& w, double interval_length);

double cost(const Prediction& traj, const Eigen::MatrixXd& controls, const WeightVector& w,
            double interval_length);

/// argmin 0.5 x'Hx + g'x subject to lo <= x <= hi (H symmetric positive
/// definite, lo <= 0 <= hi) by a primal active-set method.
Eigen::VectorXd solve_box_qp(const Eigen::MatrixXd& h, const Eigen::VectorXd& g,
                             const Eigen::VectorXd& lo, const Eigen::VectorXd& hi,
                             int* iterations = nullptr);

struct NlpOptions {
  int max_iterations = 30;
  double tolerance = 1e-6;
  double limit_penalty = 1e4;
};

struct NlpResult {
  Eigen::MatrixXd controls;  // n x N
  Prediction prediction;
  double cost = 0.0;         // J without the limit penalty
  double objective = 0.0;    // J plus the limit penalty
  double projected_gradient = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<double> objective_history;  // accepted iterates, starting with the initial guess
};

/// Gauss-Newton SQP over piecewise-constant controls of any PredictionModel.
class NlpSolver {
 public:
  NlpSolver(const PredictionModel& model, const CollocationScheme& scheme, int intervals,
            double interval_length, Eigen::VectorXd torque_bounds, Eigen::VectorXd joint_limits,
            NlpOptions options);

  struct Evaluation {
    bool feasible = false;
    double objective = 0.0;
    double cost = 0.0;
    Eigen::VectorXd gradient;  // flattened column-major over controls
    Eigen::MatrixXd hessian;   // Gauss-Newton approximation
    Prediction prediction;
  };

  Evaluation evaluate(const Eigen::VectorXd& x0, const Eigen::MatrixXd& controls,
                      const BaseForecast& forecast, double t0, const CostWeights& w,
                      bool derivatives);

  /// initial may be null (zero controls). It is clipped into the torque box.
  NlpResult solve(const Eigen::VectorXd& x0, const BaseForecast& forecast, double t0,
                  const CostWeights& w, const Eigen::MatrixXd* initial = nullptr);

  const Predictor& predictor() const { return predictor_; }
  int intervals() const { return predictor_.intervals(); }
  int dofs() const { return n_; }

 private:
  Predictor predictor_;
  int n_;
  Eigen::VectorXd bounds_;  // per DoF
  Eigen::VectorXd limits_;  // per DoF
  NlpOptions options_;
};

struct MpcSolution {
  JointTorques u0;
  Eigen::MatrixXd controls;          // 5 x N
  std::vector<double> node_times;
  Eigen::MatrixXd node_states;       // 10 x nodes, [q; qd]
  double cost = 0.0;
  double objective = 0.0;
  double projected_gradient = 0.0;
  int iterations = 0;
  bool converged = false;
  double solve_time = 0.0;           // wall-clock s
};

/// Head-neck MPC with a perfect internal model of the plant. Not thread-safe;
/// one instance per closed-loop run.
class MpcController {
 public:
  MpcController(plant::PlantParams params, MpcConfig cfg, WeightVector weights);

  /// Solves from x0 with an explicit forecast. warm, when given, seeds the
  /// iteration (n x N).
  MpcSolution solve(const plant::PlantState& x0, const BaseForecast& forecast, double t0,
                    const Eigen::MatrixXd* warm = nullptr);

  /// One control update at t_now from the sensed state. The forecast holds
  /// base_accel_now (preview none) or follows future (preview full, required
  /// then). The previous solution, shifted to t_now, warm-starts the solve.
  MpcSolution step(const sensory::SensoryFeedback& fb, double base_accel_now,
                   const perturb::BaseTrajectory* future, double t_now);

  void reset();

  const MpcConfig& config() const { return cfg_; }
  const WeightVector& weights() const { return weights_; }
  const plant::PlantParams& params() const { return model_->params(); }

  /// Controls of a previous solution that started at prev_t0, resampled at the
  /// interval midpoints of a horizon starting at t0 (held past its end).
  static Eigen::MatrixXd shift_controls(const Eigen::MatrixXd& prev, double prev_t0, double t0,
                                        double interval_length);

 private:
  MpcConfig cfg_;
  WeightVector weights_;
  CostWeights cost_weights_;
  std::unique_ptr<HeadNeckModel> model_;
  std::unique_ptr<NlpSolver> solver_;
  std::optional<Eigen::MatrixXd> previous_;
  double previous_t0_ = 0.0;
};

}  // namespace headneck::mpc
