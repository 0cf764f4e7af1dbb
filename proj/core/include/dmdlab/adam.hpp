#pragma once

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

namespace dmdlab {

struct AdamConfig {
  double lr = 5e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // decoupled (AdamW)
};

nlohmann::json adam_config_to_json(const AdamConfig& cfg);
AdamConfig adam_config_from_json(const nlohmann::json& j, const AdamConfig& defaults = {});

struct AdamState {
  AdamConfig config;
  Eigen::VectorXd m;
  Eigen::VectorXd v;
  long step = 0;
};

AdamState make_adam(Eigen::Index num_params, const AdamConfig& config);

/// One bias-corrected AdamW update of `params` in place. Throws Error naming
/// the first offending index if `grad` has a non-finite entry; nothing is
/// modified in that case.
void adam_step(AdamState& state, Eigen::VectorXd& params, const Eigen::VectorXd& grad);

}  // namespace dmdlab
