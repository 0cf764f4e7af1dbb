#include "dmdlab/schedule.hpp"

#include <cmath>
#include <numbers>

#include "dmdlab/error.hpp"

namespace dmdlab {

std::string to_string(ScheduleKind kind) {
  switch (kind) {
    case ScheduleKind::kLinear: return "linear";
    case ScheduleKind::kCosine: return "cosine";
  }
  return "linear";
}

ScheduleKind schedule_kind_from_string(const std::string& name) {
  if (name == "linear") return ScheduleKind::kLinear;
  if (name == "cosine") return ScheduleKind::kCosine;
  throw ConfigError("schedule.kind", "unknown schedule family '" + name + "'");
}

void Schedule::check_timestep(int t) const {
  if (t < 0 || t > num_steps)
    throw Error("timestep " + std::to_string(t) + " outside [0, " + std::to_string(num_steps) + "]");
}

Schedule make_schedule(int num_steps, ScheduleKind kind, double beta_start, double beta_end) {
  if (num_steps < 2) throw ConfigError("schedule.T", "need T >= 2, got " + std::to_string(num_steps));
  Schedule s;
  s.kind = kind;
  s.num_steps = num_steps;
  s.beta_start = beta_start;
  s.beta_end = beta_end;
  s.alphas_bar.assign(static_cast<std::size_t>(num_steps) + 1, 1.0);

  if (kind == ScheduleKind::kLinear) {
    if (!(beta_start > 0.0 && beta_end < 1.0 && beta_start <= beta_end))
      throw ConfigError("schedule.beta", "need 0 < beta_start <= beta_end < 1");
    for (int t = 1; t <= num_steps; ++t) {
      const double beta =
          beta_start + (beta_end - beta_start) * static_cast<double>(t - 1) / (num_steps - 1);
      s.alphas_bar[t] = s.alphas_bar[t - 1] * (1.0 - beta);
    }
  } else {
    constexpr double offset = 0.008;
    auto f = [&](int t) {
      const double u = (static_cast<double>(t) / num_steps + offset) / (1.0 + offset);
      const double c = std::cos(u * std::numbers::pi / 2.0);
      return c * c;
    };
    const double f0 = f(0);
    for (int t = 1; t <= num_steps; ++t) {
      const double beta = std::min(1.0 - (f(t) / f0) / (f(t - 1) / f0), 0.999);
      s.alphas_bar[t] = s.alphas_bar[t - 1] * (1.0 - beta);
    }
  }

  s.sqrt_alphas_bar.resize(s.alphas_bar.size());
  s.sigmas.resize(s.alphas_bar.size());
  for (std::size_t t = 0; t < s.alphas_bar.size(); ++t) {
    s.sqrt_alphas_bar[t] = std::sqrt(s.alphas_bar[t]);
    s.sigmas[t] = std::sqrt(1.0 - s.alphas_bar[t]);
  }
  if (s.alphas_bar.back() >= 1e-3)
    throw ConfigError("schedule", "terminal alpha_bar " + std::to_string(s.alphas_bar.back()) +
                                      " is not below 1e-3");
  return s;
}

nlohmann::json schedule_to_json(const Schedule& sched) {
  return {{"kind", to_string(sched.kind)},
          {"T", sched.num_steps},
          {"beta_start", sched.beta_start},
          {"beta_end", sched.beta_end}};
}

Schedule schedule_from_json(const nlohmann::json& j) {
  return make_schedule(j.value("T", 1000), schedule_kind_from_string(j.value("kind", "linear")),
                       j.value("beta_start", 1e-4), j.value("beta_end", 0.02));
}

namespace {

void require_same_size(const Eigen::VectorXd& a, const Eigen::VectorXd& b, const char* what) {
  if (a.size() != b.size())
    throw ShapeError(std::string(what) + ": dimension mismatch " + std::to_string(a.size()) +
                     " vs " + std::to_string(b.size()));
}

}  // namespace

NoisySample add_noise(const Eigen::VectorXd& x0, const Eigen::VectorXd& eps, int t,
                      const Schedule& sched) {
  require_same_size(x0, eps, "add_noise");
  sched.check_timestep(t);
  return {sched.sqrt_alpha_bar(t) * x0 + sched.sigma(t) * eps, t, eps};
}

Eigen::MatrixXd add_noise_batch(const Eigen::MatrixXd& x0, const Eigen::MatrixXd& eps,
                                std::span<const int> timesteps, const Schedule& sched) {
  if (x0.rows() != eps.rows() || x0.cols() != eps.cols() ||
      static_cast<std::size_t>(x0.cols()) != timesteps.size())
    throw ShapeError("add_noise_batch: shape mismatch");
  Eigen::MatrixXd out(x0.rows(), x0.cols());
  for (Eigen::Index j = 0; j < x0.cols(); ++j) {
    const int t = timesteps[static_cast<std::size_t>(j)];
    sched.check_timestep(t);
    out.col(j) = sched.sqrt_alpha_bar(t) * x0.col(j) + sched.sigma(t) * eps.col(j);
  }
  return out;
}

Eigen::VectorXd v_to_x0(const Eigen::VectorXd& x_t, const Eigen::VectorXd& v, int t,
                        const Schedule& sched) {
  require_same_size(x_t, v, "v_to_x0");
  sched.check_timestep(t);
  return sched.sqrt_alpha_bar(t) * x_t - sched.sigma(t) * v;
}

Eigen::VectorXd velocity_target(const Eigen::VectorXd& x0, const Eigen::VectorXd& eps, int t,
                                const Schedule& sched) {
  require_same_size(x0, eps, "velocity_target");
  sched.check_timestep(t);
  return sched.sqrt_alpha_bar(t) * eps - sched.sigma(t) * x0;
}

Eigen::VectorXd score_from_denoiser(const Eigen::VectorXd& x_t, const Eigen::VectorXd& x0_pred,
                                    int t, const Schedule& sched) {
  require_same_size(x_t, x0_pred, "score_from_denoiser");
  sched.check_timestep(t);
  if (t < 1) throw Error("score_from_denoiser: t = 0 has zero noise level");
  const double var = 1.0 - sched.alpha_bar(t);
  return -(x_t - sched.sqrt_alpha_bar(t) * x0_pred) / var;
}

Eigen::MatrixXd score_from_denoiser_batch(const Eigen::MatrixXd& x_t,
                                          const Eigen::MatrixXd& x0_pred,
                                          std::span<const int> timesteps,
                                          const Schedule& sched) {
  if (x_t.rows() != x0_pred.rows() || x_t.cols() != x0_pred.cols() ||
      static_cast<std::size_t>(x_t.cols()) != timesteps.size())
    throw ShapeError("score_from_denoiser_batch: shape mismatch");
  Eigen::MatrixXd out(x_t.rows(), x_t.cols());
  for (Eigen::Index j = 0; j < x_t.cols(); ++j) {
    const int t = timesteps[static_cast<std::size_t>(j)];
    sched.check_timestep(t);
    if (t < 1) throw Error("score_from_denoiser: t = 0 has zero noise level");
    out.col(j) = -(x_t.col(j) - sched.sqrt_alpha_bar(t) * x0_pred.col(j)) /
                 (1.0 - sched.alpha_bar(t));
  }
  return out;
}

}  // namespace dmdlab
