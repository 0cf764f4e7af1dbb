#include "dmdlab/adam.hpp"

#include <cmath>
#include <string>

#include "dmdlab/error.hpp"

namespace dmdlab {

nlohmann::json adam_config_to_json(const AdamConfig& cfg) {
  return {{"lr", cfg.lr},
          {"beta1", cfg.beta1},
          {"beta2", cfg.beta2},
          {"eps", cfg.eps},
          {"weight_decay", cfg.weight_decay}};
}

AdamConfig adam_config_from_json(const nlohmann::json& j, const AdamConfig& defaults) {
  AdamConfig cfg = defaults;
  cfg.lr = j.value("lr", cfg.lr);
  cfg.beta1 = j.value("beta1", cfg.beta1);
  cfg.beta2 = j.value("beta2", cfg.beta2);
  cfg.eps = j.value("eps", cfg.eps);
  cfg.weight_decay = j.value("weight_decay", cfg.weight_decay);
  return cfg;
}

AdamState make_adam(Eigen::Index num_params, const AdamConfig& config) {
  return {config, Eigen::VectorXd::Zero(num_params), Eigen::VectorXd::Zero(num_params), 0};
}

void adam_step(AdamState& s, Eigen::VectorXd& params, const Eigen::VectorXd& grad) {
  if (params.size() != grad.size() || s.m.size() != params.size())
    throw ShapeError("adam_step: parameter, gradient and moment lengths differ");
  if (!grad.allFinite()) {
    Eigen::Index bad = 0;
    while (std::isfinite(grad[bad])) ++bad;
    throw Error("adam_step: non-finite gradient at index " + std::to_string(bad) + " (value " +
                std::to_string(grad[bad]) + ")");
  }
  const auto& c = s.config;
  ++s.step;
  s.m = c.beta1 * s.m + (1.0 - c.beta1) * grad;
  s.v = c.beta2 * s.v + (1.0 - c.beta2) * grad.cwiseAbs2();
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(s.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(s.step));
  if (c.weight_decay != 0.0) params *= 1.0 - c.lr * c.weight_decay;
  params.array() -= c.lr * (s.m.array() / bc1) / ((s.v.array() / bc2).sqrt() + c.eps);
}

}  // namespace dmdlab
