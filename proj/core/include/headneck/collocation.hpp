#pragma once

#include <vector>

#include <Eigen/Core>

namespace headneck::mpc {

/// Collocation method on normalized nodes tau_j in (0, 1]:
/// A(i, j) = integral_0^{tau_i} l_j(s) ds and b(j) = integral_0^1 l_j(s) ds,
/// with l_j the Lagrange basis on the nodes.
struct CollocationScheme {
  Eigen::VectorXd tau;
  Eigen::MatrixXd a;
  Eigen::VectorXd b;

  int stages() const { return static_cast<int>(tau.size()); }
  bool right_endpoint() const { return stages() > 0 && tau[stages() - 1] == 1.0; }

  /// Throws InvalidArgument unless the nodes are strictly increasing in (0, 1].
  static CollocationScheme from_nodes(const Eigen::VectorXd& tau);
  /// Radau IIA nodes (right endpoint included).
  static CollocationScheme radau(int stages);
};

/// Right Radau points on (0, 1]: roots of P_d(2x-1) - P_{d-1}(2x-1).
Eigen::VectorXd radau_points(int stages);

/// Forecast time points over the prediction horizon:
/// {t0} U {t_k + T_sp * tau_j : k = 0..N-1, j = 1..d} U {t_N}.
struct HorizonGrid {
  double t0 = 0.0;
  int interval_count = 0;
  double interval_length = 0.0;
  std::vector<double> node_fractions;
  std::vector<double> nodes;

  double end() const { return t0 + interval_count * interval_length; }
};

HorizonGrid build_horizon(double t0, int interval_count, double interval_length,
                          const std::vector<double>& node_fractions);

}  // namespace headneck::mpc
