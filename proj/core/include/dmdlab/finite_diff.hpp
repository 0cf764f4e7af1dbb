#pragma once

#include <functional>

#include <Eigen/Dense>

namespace dmdlab {

using ScalarFn = std::function<double(const Eigen::VectorXd&)>;

/// Central-difference gradient (f(x + h e_i) - f(x - h e_i)) / 2h.
Eigen::VectorXd finite_diff_grad(const ScalarFn& f, const Eigen::VectorXd& x, double h);

/// Nodes and weights with sum_i w_i f(x_i) ~ E f(Z), Z ~ N(0, 1)
/// (Golub-Welsch on the probabilists' Hermite recurrence).
struct GaussHermite {
  Eigen::VectorXd nodes;
  Eigen::VectorXd weights;
};
GaussHermite gauss_hermite(int n);

}  // namespace dmdlab
