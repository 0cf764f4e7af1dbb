#pragma once

#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

namespace dmdlab {

enum class ScheduleKind { kLinear, kCosine };

std::string to_string(ScheduleKind kind);
ScheduleKind schedule_kind_from_string(const std::string& name);

/// Discrete variance-preserving noise schedule over t = 0..T.
///
/// alphas_bar[t] is the cumulative signal retention; alphas_bar[0] == 1 and
/// the sequence is strictly decreasing. sigmas[t] = sqrt(1 - alphas_bar[t]).
struct Schedule {
  ScheduleKind kind = ScheduleKind::kLinear;
  int num_steps = 0;
  double beta_start = 1e-4;
  double beta_end = 0.02;
  std::vector<double> alphas_bar;
  std::vector<double> sqrt_alphas_bar;
  std::vector<double> sigmas;

  double alpha_bar(int t) const { return alphas_bar.at(static_cast<std::size_t>(t)); }
  double sqrt_alpha_bar(int t) const { return sqrt_alphas_bar.at(static_cast<std::size_t>(t)); }
  double sigma(int t) const { return sigmas.at(static_cast<std::size_t>(t)); }
  void check_timestep(int t) const;
};

/// Builds a schedule with T steps. Linear: beta_t interpolates beta_start..beta_end
/// over t = 1..T. Cosine: the squared-cosine cumulative form with betas clipped
/// at 0.999 so that every alpha_bar stays positive.
Schedule make_schedule(int num_steps, ScheduleKind kind = ScheduleKind::kLinear,
                       double beta_start = 1e-4, double beta_end = 0.02);

nlohmann::json schedule_to_json(const Schedule& sched);
Schedule schedule_from_json(const nlohmann::json& j);

struct NoisySample {
  Eigen::VectorXd x;
  int t = 0;
  Eigen::VectorXd eps;
};

/// x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps.
NoisySample add_noise(const Eigen::VectorXd& x0, const Eigen::VectorXd& eps, int t,
                      const Schedule& sched);

/// Column-wise add_noise; column j is noised to timesteps[j].
Eigen::MatrixXd add_noise_batch(const Eigen::MatrixXd& x0, const Eigen::MatrixXd& eps,
                                std::span<const int> timesteps, const Schedule& sched);

/// x0 = sqrt(abar_t) x_t - sqrt(1 - abar_t) v.
Eigen::VectorXd v_to_x0(const Eigen::VectorXd& x_t, const Eigen::VectorXd& v, int t,
                        const Schedule& sched);

/// The velocity target consistent with v_to_x0: v = sqrt(abar) eps - sqrt(1 - abar) x0.
Eigen::VectorXd velocity_target(const Eigen::VectorXd& x0, const Eigen::VectorXd& eps, int t,
                                const Schedule& sched);

/// Score implied by a clean-sample prediction:
/// s = -(x_t - sqrt(abar_t) x0_pred) / sigma_t^2. Requires t >= 1.
Eigen::VectorXd score_from_denoiser(const Eigen::VectorXd& x_t, const Eigen::VectorXd& x0_pred,
                                    int t, const Schedule& sched);

Eigen::MatrixXd score_from_denoiser_batch(const Eigen::MatrixXd& x_t,
                                          const Eigen::MatrixXd& x0_pred,
                                          std::span<const int> timesteps,
                                          const Schedule& sched);

}  // namespace dmdlab
