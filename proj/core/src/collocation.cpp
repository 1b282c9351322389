#include "headneck/collocation.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/LU>

#include "headneck/types.hpp"

namespace headneck::mpc {
namespace {

// Legendre P_n(u) via the three-term recurrence.
double legendre(int n, double u) {
  if (n == 0) return 1.0;
  double p0 = 1.0, p1 = u;
  for (int k = 2; k <= n; ++k) {
    const double p2 = ((2.0 * k - 1.0) * u * p1 - (k - 1.0) * p0) / k;
    p0 = p1;
    p1 = p2;
  }
  return p1;
}

double radau_residual(int d, double x) {
  const double u = 2.0 * x - 1.0;
  return legendre(d, u) - legendre(d - 1, u);
}

}  // namespace

Eigen::VectorXd radau_points(int stages) {
  if (stages < 1) throw InvalidArgument("collocation: at least one node is required");
  std::vector<double> roots;
  // The d-1 interior roots are simple and separated by more than the grid.
  const int grid = 4000 * stages;
  double x_prev = 0.0, f_prev = radau_residual(stages, 0.0);
  for (int i = 1; i < grid; ++i) {
    const double x = static_cast<double>(i) / grid;
    const double f = radau_residual(stages, x);
    if ((f_prev < 0.0) != (f < 0.0)) {
      double lo = x_prev, hi = x, flo = f_prev;
      for (int it = 0; it < 200 && hi - lo > 1e-17; ++it) {
        const double mid = 0.5 * (lo + hi);
        const double fm = radau_residual(stages, mid);
        if ((fm < 0.0) == (flo < 0.0)) {
          lo = mid;
          flo = fm;
        } else {
          hi = mid;
        }
      }
      roots.push_back(0.5 * (lo + hi));
    }
    x_prev = x;
    f_prev = f;
  }
  roots.push_back(1.0);
  if (static_cast<int>(roots.size()) != stages) {
    throw Error("collocation: failed to isolate Radau points");
  }
  return Eigen::Map<Eigen::VectorXd>(roots.data(), stages);
}

CollocationScheme CollocationScheme::from_nodes(const Eigen::VectorXd& tau) {
  const int d = static_cast<int>(tau.size());
  if (d < 1) throw InvalidArgument("collocation: at least one node is required");
  for (int i = 0; i < d; ++i) {
    if (!(tau[i] > 0.0 && tau[i] <= 1.0)) {
      throw InvalidArgument("collocation: node fractions must lie in (0, 1]");
    }
    if (i > 0 && !(tau[i] > tau[i - 1])) {
      throw InvalidArgument("collocation: node fractions must be strictly increasing");
    }
  }
  // Monomial coefficients of each Lagrange basis polynomial: V * coeffs = I.
  Eigen::MatrixXd v(d, d);
  for (int i = 0; i < d; ++i) {
    for (int k = 0; k < d; ++k) v(i, k) = std::pow(tau[i], k);
  }
  const Eigen::MatrixXd coeffs = v.partialPivLu().solve(Eigen::MatrixXd::Identity(d, d));

  auto integral = [&](int j, double upper) {
    double s = 0.0;
    for (int k = 0; k < d; ++k) s += coeffs(k, j) * std::pow(upper, k + 1) / (k + 1);
    return s;
  };

  CollocationScheme c;
  c.tau = tau;
  c.a.resize(d, d);
  c.b.resize(d);
  for (int j = 0; j < d; ++j) {
    for (int i = 0; i < d; ++i) c.a(i, j) = integral(j, tau[i]);
    c.b[j] = integral(j, 1.0);
  }
  if (tau[d - 1] == 1.0) c.b = c.a.row(d - 1).transpose();
  return c;
}

CollocationScheme CollocationScheme::radau(int stages) { return from_nodes(radau_points(stages)); }

HorizonGrid build_horizon(double t0, int interval_count, double interval_length,
                          const std::vector<double>& node_fractions) {
  if (interval_count < 1) throw InvalidArgument("horizon: interval count must be >= 1");
  if (!(interval_length > 0.0)) throw InvalidArgument("horizon: interval length must be positive");
  if (node_fractions.empty()) throw InvalidArgument("horizon: at least one collocation node is required");
  for (double tau : node_fractions) {
    if (!(tau > 0.0 && tau <= 1.0)) throw InvalidArgument("horizon: node fractions must lie in (0, 1]");
  }

  HorizonGrid g;
  g.t0 = t0;
  g.interval_count = interval_count;
  g.interval_length = interval_length;
  g.node_fractions = node_fractions;

  std::vector<double> offsets;
  offsets.reserve(1 + node_fractions.size() * interval_count + 1);
  offsets.push_back(0.0);
  for (int k = 0; k < interval_count; ++k) {
    for (double tau : node_fractions) offsets.push_back((k + tau) * interval_length);
  }
  offsets.push_back(interval_count * interval_length);
  std::sort(offsets.begin(), offsets.end());

  // t_k + T_sp * 1 and t_{k+1} are the same instant; merge within rounding.
  const double merge_tol = 1e-12 * interval_length * interval_count;
  g.nodes.reserve(offsets.size());
  double last = -1.0;
  for (double o : offsets) {
    if (!g.nodes.empty() && o - last <= merge_tol) continue;
    g.nodes.push_back(t0 + o);
    last = o;
  }
  g.nodes.front() = t0;
  g.nodes.back() = t0 + interval_count * interval_length;
  return g;
}

}  // namespace headneck::mpc
