#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dmdlab/adversarial.hpp"
#include "dmdlab/dense_net.hpp"
#include "dmdlab/denoiser.hpp"
#include "dmdlab/dmd.hpp"
#include "dmdlab/mixture.hpp"
#include "dmdlab/schedule.hpp"
#include "dmdlab/student.hpp"
#include "dmdlab/teacher.hpp"

namespace dmdlab {

struct TeacherConfig {
  std::vector<int> hidden;
  Activation activation = Activation::kAlgebraic;
  Prediction prediction = Prediction::kSample;
  bool conditional = false;
  DenoiserTrainOptions train;
  std::uint64_t seed = 0;
};

struct GanConfig {
  int iters = 4000;
  int disc_updates = 5;
  GanLossForm form = GanLossForm::kNonSaturating;
  int tap_layer = -1;
  std::vector<int> head_hidden;
  double head_lr = 5e-5;
  int collapse_patience = 500;
  double collapse_threshold = 1e-3;
};

struct DmdConfig {
  int iters = 5000;
  int fake_updates = 5;
  WeightMode weight_mode = WeightMode::kAppendix;
  std::string score_provider = "teacher";  // "teacher" or "analytic"
  bool chain_sqrt_alpha = false;
  bool normalize = false;
  bool truncate_tau = false;
  bool train_head = true;
  double fake_lr = 5e-5;
};

struct AblationSwitches {
  bool gan_init = true;
  bool dmd = true;
  bool soften = true;
};

struct EvalConfig {
  int samples = 10000;
  double radius = 3.0;
  int min_hits = -1;  // < 0: max(5, 0.1 n / K)
  int directions = 64;
  int energy_max_points = 0;
  int teacher_steps = 50;
};

struct RunConfig {
  nlohmann::json resolved;  // defaults + file + overrides, echoed verbatim

  MixtureSpec mixture;
  Schedule schedule;
  TeacherConfig teacher;
  int grid_steps = 4;
  RenoiseMode renoise = RenoiseMode::kStochastic;
  int pretrain_iters = 0;
  double lr = 5e-5;
  int batch = 4;
  double weight_decay = 0.0;
  GanConfig gan;
  DmdConfig dmd;
  AblationSwitches ablation;
  EvalConfig eval;
  std::uint64_t seed = 0;
  std::uint64_t eval_seed = 0;
  int checkpoint_every = 0;
  int log_every = 1;

  /// The weight actually applied: kPlain when softening is switched off.
  WeightMode effective_weight_mode() const {
    return ablation.soften ? dmd.weight_mode : WeightMode::kPlain;
  }
};

/// Every recognized key with its default value.
nlohmann::json default_config_json();

/// Applies "a.b.c=value". The value is parsed as JSON when possible and taken
/// as a string otherwise. Unknown keys raise ConfigError naming the key;
/// keys below "mixture" are free-form.
void apply_override(nlohmann::json& cfg, const std::string& assignment);

/// Deep-merges `user` over the defaults, then applies the overrides.
nlohmann::json resolve_config(const nlohmann::json& user,
                              const std::vector<std::string>& overrides = {});

/// Validates and converts. Throws ConfigError naming the first bad field; the
/// message lists every problem found.
RunConfig parse_run_config(const nlohmann::json& resolved);

/// Reads a JSON file, resolves it, and parses it.
RunConfig load_run_config(const std::string& path, const std::vector<std::string>& overrides = {});

}  // namespace dmdlab
