#include "dmdlab/config.hpp"

#include <sstream>

#include "dmdlab/error.hpp"
#include "dmdlab/io.hpp"

namespace dmdlab {

using nlohmann::json;

json default_config_json() {
  return json::parse(R"({
  "mixture": {"kind": "ring", "components": 8, "radius": 2.0, "sigma": 0.1},
  "schedule": {"kind": "linear", "T": 1000, "beta_start": 0.0001, "beta_end": 0.02},
  "teacher": {
    "hidden": [64, 64, 64],
    "activation": "algebraic",
    "prediction": "sample",
    "conditional": false,
    "iters": 12000,
    "batch": 256,
    "lr": 0.002,
    "final_lr_fraction": 0.02,
    "seed": 7
  },
  "student": {"grid_steps": 4, "renoise": "stochastic", "pretrain_iters": 0},
  "optim": {"lr": 5e-05, "batch": 4, "weight_decay": 0.0},
  "gan": {
    "iters": 4000,
    "disc_updates": 5,
    "loss_form": "non-saturating",
    "tap_layer": -1,
    "head_hidden": [64],
    "head_lr": null,
    "collapse_patience": 500,
    "collapse_threshold": 0.001
  },
  "dmd": {
    "iters": 5000,
    "fake_updates": 5,
    "weight_mode": "appendix",
    "score_provider": "teacher",
    "chain_sqrt_alpha": false,
    "normalize": false,
    "truncate_tau": false,
    "train_head": true,
    "fake_lr": null
  },
  "ablation": {"gan_init": true, "dmd": true, "soften": true},
  "eval": {
    "samples": 10000,
    "radius": 3.0,
    "min_hits": -1,
    "directions": 64,
    "energy_max_points": 0,
    "teacher_steps": 50
  },
  "seed": 0,
  "eval_seed": 1000,
  "checkpoint_every": 0,
  "log_every": 1
})");
}

namespace {

std::vector<std::string> split_dotted(const std::string& key) {
  std::vector<std::string> parts;
  std::stringstream ss(key);
  std::string p;
  while (std::getline(ss, p, '.')) parts.push_back(p);
  return parts;
}

// Recursively merges `src` into `dst`, rejecting keys absent from `dst`
// except below free-form sections.
void merge_known(json& dst, const json& src, const std::string& path) {
  for (auto it = src.begin(); it != src.end(); ++it) {
    const std::string field = path.empty() ? it.key() : path + "." + it.key();
    if (field == "mixture") {
      dst["mixture"] = it.value();
      continue;
    }
    if (!dst.contains(it.key())) throw ConfigError(field, "unknown configuration key");
    json& slot = dst[it.key()];
    if (slot.is_object() && it.value().is_object())
      merge_known(slot, it.value(), field);
    else
      slot = it.value();
  }
}

}  // namespace

void apply_override(json& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ConfigError(assignment, "override must look like key.path=value");
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(text);
  } catch (const json::parse_error&) {
    value = text;
  }
  const auto parts = split_dotted(key);
  json* node = &cfg;
  bool free_form = false;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i == 0 && parts[i] == "mixture") free_form = true;
    if (!node->is_object()) throw ConfigError(key, "'" + parts[i - 1] + "' is not a section");
    if (!free_form && !node->contains(parts[i])) throw ConfigError(key, "unknown configuration key");
    node = &(*node)[parts[i]];
  }
  *node = std::move(value);
}

json resolve_config(const json& user, const std::vector<std::string>& overrides) {
  if (!user.is_object()) throw ConfigError("<root>", "configuration must be a JSON object");
  json cfg = default_config_json();
  merge_known(cfg, user, "");
  for (const auto& o : overrides) apply_override(cfg, o);
  return cfg;
}

namespace {

class Checker {
 public:
  explicit Checker(const json& root) : root_(root) {}

  const json& at(const std::string& dotted) {
    const json* node = &root_;
    for (const auto& p : split_dotted(dotted)) {
      if (!node->is_object() || !node->contains(p)) {
        fail(dotted, "missing");
        static const json null_value;
        return null_value;
      }
      node = &(*node)[p];
    }
    return *node;
  }

  template <typename T>
  T get(const std::string& field, T fallback) {
    try {
      const json& v = at(field);
      if (v.is_null()) return fallback;
      return v.get<T>();
    } catch (const json::exception& e) {
      fail(field, std::string("wrong type (") + e.what() + ")");
      return fallback;
    }
  }

  int integer(const std::string& field, int lo, int fallback = 0) {
    const json& v = at(field);
    if (!v.is_number_integer()) {
      fail(field, "expected an integer");
      return fallback;
    }
    const int x = v.get<int>();
    if (x < lo) fail(field, "must be >= " + std::to_string(lo));
    return x;
  }

  double positive(const std::string& field, double fallback) {
    const double x = get<double>(field, fallback);
    if (!(x > 0.0)) fail(field, "must be > 0");
    return x;
  }

  template <typename Fn>
  auto parse(const std::string& field, Fn fn, decltype(fn(std::string())) fallback) {
    try {
      return fn(get<std::string>(field, ""));
    } catch (const ConfigError& e) {
      fail(field, e.what());
      return fallback;
    }
  }

  void fail(const std::string& field, const std::string& msg) {
    if (first_.empty()) first_ = field;
    message_ += (message_.empty() ? "" : "; ") + field + ": " + msg;
  }

  void finish() const {
    if (!first_.empty()) throw ConfigError(first_, message_);
  }

 private:
  const json& root_;
  std::string first_;
  std::string message_;
};

std::vector<int> widths(Checker& c, const std::string& field) {
  auto v = c.get<std::vector<int>>(field, {});
  for (int w : v)
    if (w < 1) c.fail(field, "widths must be >= 1");
  return v;
}

}  // namespace

RunConfig parse_run_config(const json& resolved) {
  RunConfig cfg;
  cfg.resolved = resolved;
  Checker c(resolved);

  try {
    cfg.mixture = mixture_from_json(c.at("mixture"));
    cfg.mixture.validate();
  } catch (const ConfigError& e) {
    c.fail("mixture", e.what());
  } catch (const std::exception& e) {
    c.fail("mixture", e.what());
  }
  try {
    cfg.schedule = schedule_from_json(c.at("schedule"));
  } catch (const std::exception& e) {
    c.fail("schedule", e.what());
  }

  auto& t = cfg.teacher;
  t.hidden = widths(c, "teacher.hidden");
  if (t.hidden.empty()) c.fail("teacher.hidden", "need at least one hidden layer");
  t.activation = c.parse("teacher.activation", activation_from_string, Activation::kAlgebraic);
  t.prediction = c.parse("teacher.prediction", prediction_from_string, Prediction::kSample);
  t.conditional = c.get<bool>("teacher.conditional", false);
  t.train.iters = c.integer("teacher.iters", 0);
  t.train.batch = c.integer("teacher.batch", 1, 1);
  t.train.adam.lr = c.positive("teacher.lr", 1e-3);
  t.train.final_lr_fraction = c.get<double>("teacher.final_lr_fraction", 0.05);
  t.seed = c.get<std::uint64_t>("teacher.seed", 0);

  cfg.grid_steps = c.integer("student.grid_steps", 1, 4);
  cfg.renoise = c.parse("student.renoise", renoise_mode_from_string, RenoiseMode::kStochastic);
  cfg.pretrain_iters = c.integer("student.pretrain_iters", 0);

  cfg.lr = c.positive("optim.lr", 5e-5);
  cfg.batch = c.integer("optim.batch", 1, 1);
  cfg.weight_decay = c.get<double>("optim.weight_decay", 0.0);
  if (cfg.weight_decay < 0.0) c.fail("optim.weight_decay", "must be >= 0");

  auto& g = cfg.gan;
  g.iters = c.integer("gan.iters", 0);
  g.disc_updates = c.integer("gan.disc_updates", 0);
  g.form = c.parse("gan.loss_form", gan_loss_form_from_string, GanLossForm::kNonSaturating);
  g.tap_layer = c.get<int>("gan.tap_layer", -1);
  g.head_hidden = widths(c, "gan.head_hidden");
  g.head_lr = c.at("gan.head_lr").is_null() ? cfg.lr : c.positive("gan.head_lr", cfg.lr);
  g.collapse_patience = c.integer("gan.collapse_patience", 1, 500);
  g.collapse_threshold = c.get<double>("gan.collapse_threshold", 1e-3);

  auto& d = cfg.dmd;
  d.iters = c.integer("dmd.iters", 0);
  d.fake_updates = c.integer("dmd.fake_updates", 0);
  d.weight_mode = c.parse("dmd.weight_mode", weight_mode_from_string, WeightMode::kAppendix);
  if (d.weight_mode == WeightMode::kPlain)
    c.fail("dmd.weight_mode", "must be appendix or main-text; use ablation.soften=false for plain");
  d.score_provider = c.get<std::string>("dmd.score_provider", "teacher");
  if (d.score_provider != "teacher" && d.score_provider != "analytic")
    c.fail("dmd.score_provider", "expected 'teacher' or 'analytic'");
  if (d.score_provider == "analytic" && t.conditional)
    c.fail("dmd.score_provider", "the analytic score is unconditional; use 'teacher' with a conditional teacher");
  d.chain_sqrt_alpha = c.get<bool>("dmd.chain_sqrt_alpha", false);
  d.normalize = c.get<bool>("dmd.normalize", false);
  d.truncate_tau = c.get<bool>("dmd.truncate_tau", false);
  d.train_head = c.get<bool>("dmd.train_head", true);
  d.fake_lr = c.at("dmd.fake_lr").is_null() ? cfg.lr : c.positive("dmd.fake_lr", cfg.lr);

  cfg.ablation.gan_init = c.get<bool>("ablation.gan_init", true);
  cfg.ablation.dmd = c.get<bool>("ablation.dmd", true);
  cfg.ablation.soften = c.get<bool>("ablation.soften", true);

  auto& e = cfg.eval;
  e.samples = c.integer("eval.samples", 0);
  e.radius = c.positive("eval.radius", 3.0);
  e.min_hits = c.get<int>("eval.min_hits", -1);
  e.directions = c.integer("eval.directions", 1, 64);
  e.energy_max_points = c.integer("eval.energy_max_points", 0);
  e.teacher_steps = c.integer("eval.teacher_steps", 1, 50);

  cfg.seed = c.get<std::uint64_t>("seed", 0);
  cfg.eval_seed = c.get<std::uint64_t>("eval_seed", 0);
  cfg.checkpoint_every = c.integer("checkpoint_every", 0);
  cfg.log_every = c.integer("log_every", 1, 1);
  c.finish();
  return cfg;
}

RunConfig load_run_config(const std::string& path, const std::vector<std::string>& overrides) {
  json user;
  try {
    user = json::parse(read_text(path));
  } catch (const json::parse_error& e) {
    throw ConfigError("<file>", path + ": " + e.what());
  } catch (const Error& e) {
    throw ConfigError("<file>", e.what());
  }
  return parse_run_config(resolve_config(user, overrides));
}

}  // namespace dmdlab
