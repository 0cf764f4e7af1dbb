#pragma once

#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "dmdlab/rng.hpp"
#include "dmdlab/schedule.hpp"

namespace dmdlab {

/// Gaussian mixture sum_k w_k N(mu_k, Sigma_k). Diagonal covariances are the
/// fast path; full covariances are accepted for dim <= 4.
struct MixtureSpec {
  std::vector<double> weights;
  std::vector<Eigen::VectorXd> means;
  std::vector<Eigen::MatrixXd> covariances;

  int dim() const { return means.empty() ? 0 : static_cast<int>(means.front().size()); }
  int size() const { return static_cast<int>(weights.size()); }
  bool is_diagonal() const;

  /// Throws ConfigError when weights do not sum to 1 (within 1e-12), a
  /// covariance is not SPD, or shapes disagree.
  void validate() const;

  /// K equally spaced isotropic components on a circle in 2D. An empty
  /// `weights` means equal weights; otherwise weights are normalized.
  static MixtureSpec ring(int components, double radius, double stddev,
                          std::vector<double> weights = {});
  static MixtureSpec isotropic(std::vector<double> weights, std::vector<Eigen::VectorXd> means,
                               double stddev);
};

nlohmann::json mixture_to_json(const MixtureSpec& mix);
MixtureSpec mixture_from_json(const nlohmann::json& j);

/// The mixture pushed through the forward noising kernel at one timestep:
/// component k becomes N(sqrt(abar) mu_k, abar Sigma_k + (1 - abar) I).
class NoisyMixture {
 public:
  NoisyMixture(const MixtureSpec& mix, double alpha_bar);

  double log_density(const Eigen::VectorXd& x) const;
  Eigen::VectorXd score(const Eigen::VectorXd& x) const;
  /// Posterior component probabilities gamma_k(x).
  Eigen::VectorXd responsibilities(const Eigen::VectorXd& x) const;
  /// E[x0 | x_t = x], the Bayes-optimal clean-sample prediction.
  Eigen::VectorXd posterior_mean(const Eigen::VectorXd& x) const;

 private:
  struct Component {
    double log_weight;
    Eigen::VectorXd mean;
    Eigen::VectorXd diag;                // diagonal fast path
    Eigen::LLT<Eigen::MatrixXd> chol;    // full covariance path
    Eigen::MatrixXd precision;
    double log_norm;                     // -0.5 (d log 2pi + log det C)
  };
  Eigen::VectorXd component_log_terms(const Eigen::VectorXd& x) const;

  int dim_;
  double alpha_bar_;
  bool diagonal_;
  std::vector<Component> comps_;
};

/// log p_t(x) for the noisy marginal at timestep t (max-shifted log-sum-exp).
double noisy_log_density(const Eigen::VectorXd& x, int t, const MixtureSpec& mix,
                         const Schedule& sched);

/// Exact grad_x log p_t(x).
Eigen::VectorXd analytic_score(const Eigen::VectorXd& x, int t, const MixtureSpec& mix,
                               const Schedule& sched);

/// Column-wise analytic score, column j at timesteps[j].
Eigen::MatrixXd analytic_score_batch(const Eigen::MatrixXd& x, std::span<const int> timesteps,
                                     const MixtureSpec& mix, const Schedule& sched);

struct MixtureDraw {
  Eigen::MatrixXd samples;       // dim x n
  std::vector<int> components;   // generating component per column
};

MixtureDraw sample_mixture(const MixtureSpec& mix, int n, Rng& rng);

}  // namespace dmdlab
