#include "dmdlab/teacher.hpp"

#include <cmath>
#include <numbers>

#include "dmdlab/error.hpp"

namespace dmdlab {

void TeacherBundle::validate() const {
  mixture.validate();
  const auto& layout = denoiser.net.layout();
  if (layout.sample_dim != mixture.dim() || layout.time_dim != kTimeEmbeddingWidth ||
      layout.condition_dim != condition_dim ||
      denoiser.net.input_width() != mixture.dim() + kTimeEmbeddingWidth + condition_dim)
    throw ShapeError("teacher denoiser input width must equal d + time embedding + condition");
  if (condition_dim != 0 && condition_dim != mixture.size())
    throw ShapeError("teacher condition must be empty or a one-hot component label");
}

TeacherBundle make_teacher_bundle(MixtureSpec mixture, Schedule schedule,
                                  const std::vector<int>& hidden, Activation activation,
                                  Prediction prediction, bool conditional, Rng& init_rng) {
  const int cond = conditional ? mixture.size() : 0;
  Denoiser d = make_denoiser(mixture.dim(), hidden, activation, prediction, cond, init_rng);
  TeacherBundle b{std::move(mixture), std::move(d), std::move(schedule), cond};
  b.validate();
  return b;
}

Eigen::MatrixXd one_hot(const std::vector<int>& labels, int num_classes) {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(num_classes, static_cast<Eigen::Index>(labels.size()));
  for (std::size_t j = 0; j < labels.size(); ++j) out(labels[j], static_cast<Eigen::Index>(j)) = 1.0;
  return out;
}

TrainLog train_teacher_denoiser(TeacherBundle& bundle, const DenoiserTrainOptions& options,
                                Rng& rng) {
  bundle.validate();
  TrainLog log;
  if (options.iters <= 0) return log;
  log.loss.reserve(static_cast<std::size_t>(options.iters));
  AdamState adam = make_adam(bundle.denoiser.net.num_params(), options.adam);
  DivergenceMonitor monitor;
  const int T = bundle.schedule.num_steps;
  std::vector<int> ts(static_cast<std::size_t>(options.batch));

  for (int it = 0; it < options.iters; ++it) {
    const double progress = static_cast<double>(it) / options.iters;
    const double f = options.final_lr_fraction;
    adam.config.lr =
        options.adam.lr * (f + (1.0 - f) * 0.5 * (1.0 + std::cos(std::numbers::pi * progress)));

    MixtureDraw draw = sample_mixture(bundle.mixture, options.batch, rng);
    for (auto& t : ts) t = rng.uniform_int(1, T);
    const Eigen::MatrixXd eps = rng.normal_matrix(bundle.mixture.dim(), options.batch);
    const Eigen::MatrixXd cond = bundle.condition_dim > 0
                                     ? one_hot(draw.components, bundle.condition_dim)
                                     : Eigen::MatrixXd();
    DenoisingLoss l = denoising_loss(bundle.denoiser, draw.samples, eps, ts, bundle.schedule, cond);
    log.loss.push_back(l.loss);
    if (!monitor.update(l.loss))
      throw TrainingAborted("teacher", "loss diverged at iteration " + std::to_string(it) +
                                           " (loss " + std::to_string(l.loss) + ", initial " +
                                           std::to_string(monitor.initial()) + ")");
    adam_step(adam, bundle.denoiser.net.mutable_params(), l.grad);
  }
  return log;
}

MultistepResult sample_multistep(const TeacherBundle& bundle, int n_steps, const Eigen::MatrixXd& z,
                                 const Eigen::MatrixXd& condition, double eta, Rng* rng) {
  const auto& sched = bundle.schedule;
  const int T = sched.num_steps;
  if (n_steps < 1 || n_steps > T)
    throw Error("sample_multistep: n_steps must lie in [1, T], got " + std::to_string(n_steps));
  if (eta > 0.0 && rng == nullptr) throw Error("sample_multistep: eta > 0 needs an rng");

  std::vector<int> times;
  for (int i = n_steps; i >= 0; --i)
    times.push_back(static_cast<int>(std::lround(static_cast<double>(i) * T / n_steps)));

  MultistepResult res;
  Eigen::MatrixXd x = z;
  const auto n = static_cast<std::size_t>(z.cols());
  for (int i = 0; i < n_steps; ++i) {
    const int t = times[static_cast<std::size_t>(i)];
    const int t_prev = times[static_cast<std::size_t>(i) + 1];
    const std::vector<int> ts(n, t);
    const Eigen::MatrixXd x0 = bundle.denoiser.predict_x0(x, ts, sched, condition);
    ++res.evaluations;
    if (t_prev == 0) {
      x = x0;
      break;
    }
    const Eigen::MatrixXd eps_hat = (x - sched.sqrt_alpha_bar(t) * x0) / sched.sigma(t);
    const double ab = sched.alpha_bar(t);
    const double ab_prev = sched.alpha_bar(t_prev);
    const double sigma_eta =
        eta * std::sqrt((1.0 - ab_prev) / (1.0 - ab)) * std::sqrt(1.0 - ab / ab_prev);
    const double dir = std::sqrt(std::max(0.0, 1.0 - ab_prev - sigma_eta * sigma_eta));
    x = std::sqrt(ab_prev) * x0 + dir * eps_hat;
    if (sigma_eta > 0.0) x += sigma_eta * rng->normal_matrix(x.rows(), x.cols());
  }
  res.samples = std::move(x);
  return res;
}

}  // namespace dmdlab
