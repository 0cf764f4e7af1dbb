#include "dmdlab/finite_diff.hpp"

#include <Eigen/Eigenvalues>

#include "dmdlab/error.hpp"

namespace dmdlab {

Eigen::VectorXd finite_diff_grad(const ScalarFn& f, const Eigen::VectorXd& x, double h) {
  if (!(h > 0.0)) throw Error("finite_diff_grad: step must be positive");
  Eigen::VectorXd g(x.size());
  Eigen::VectorXd probe = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + h;
    const double up = f(probe);
    probe[i] = x[i] - h;
    const double down = f(probe);
    probe[i] = x[i];
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

GaussHermite gauss_hermite(int n) {
  if (n < 1) throw Error("gauss_hermite: need at least one node");
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
  for (int k = 1; k < n; ++k) J(k, k - 1) = J(k - 1, k) = std::sqrt(static_cast<double>(k));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
  GaussHermite gh{es.eigenvalues(), es.eigenvectors().row(0).transpose().array().square()};
  return gh;
}

}  // namespace dmdlab
