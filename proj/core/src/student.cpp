#include "dmdlab/student.hpp"

#include <cmath>
#include <numbers>

#include "dmdlab/error.hpp"

namespace dmdlab {

void FewStepGrid::validate(int num_steps) const {
  if (steps.size() < 2) throw ConfigError("grid", "need 0 plus at least one denoising timestep");
  if (steps.front() != 0) throw ConfigError("grid", "first grid element must be 0");
  for (std::size_t i = 1; i < steps.size(); ++i)
    if (steps[i] <= steps[i - 1]) throw ConfigError("grid", "grid must be strictly increasing");
  if (steps.back() > num_steps) throw ConfigError("grid", "grid exceeds T");
}

FewStepGrid FewStepGrid::uniform(int num_steps, int denoising_steps) {
  if (denoising_steps < 1) throw ConfigError("grid", "need Q >= 1");
  FewStepGrid g{{0}};
  for (int i = 1; i <= denoising_steps; ++i) g.steps.push_back(i * num_steps / denoising_steps - 1);
  g.validate(num_steps);
  return g;
}

std::string to_string(RenoiseMode m) {
  return m == RenoiseMode::kStochastic ? "stochastic" : "deterministic";
}

RenoiseMode renoise_mode_from_string(const std::string& name) {
  if (name == "stochastic") return RenoiseMode::kStochastic;
  if (name == "deterministic") return RenoiseMode::kDeterministic;
  throw ConfigError("student.renoise", "unknown re-noise mode '" + name + "'");
}

void StudentModel::validate() const {
  grid.validate(schedule.num_steps);
  if (grid.steps[1] < 1) throw ConfigError("grid", "t_1 must be >= 1");
}

StudentModel make_student_from_teacher(const TeacherBundle& teacher, FewStepGrid grid) {
  StudentModel m{teacher.denoiser, std::move(grid), teacher.schedule};
  m.validate();
  return m;
}

StudentModel make_student(int sample_dim, const std::vector<int>& hidden, Activation activation,
                          Prediction prediction, int condition_dim, FewStepGrid grid,
                          Schedule schedule, Rng& init_rng) {
  StudentModel m{make_denoiser(sample_dim, hidden, activation, prediction, condition_dim, init_rng),
                 std::move(grid), std::move(schedule)};
  m.validate();
  return m;
}

Eigen::VectorXd student_predict(const StudentModel& m, const Eigen::VectorXd& x_t, int t,
                                const Eigen::VectorXd& condition) {
  const int ts[] = {t};
  Eigen::MatrixXd c = condition.size() > 0 ? Eigen::MatrixXd(condition) : Eigen::MatrixXd();
  return m.denoiser.predict_x0(x_t, ts, m.schedule, c).col(0);
}

Eigen::MatrixXd student_predict_batch(const StudentModel& m, const Eigen::MatrixXd& x_t,
                                      std::span<const int> timesteps,
                                      const Eigen::MatrixXd& condition) {
  return m.denoiser.predict_x0(x_t, timesteps, m.schedule, condition);
}

FewStepResult generate_few_step(const StudentModel& m, const Eigen::MatrixXd& z,
                                const Eigen::MatrixXd& condition, Rng& rng, RenoiseMode mode) {
  const auto& sched = m.schedule;
  const auto grid = m.grid.denoising_steps();
  const auto n = static_cast<std::size_t>(z.cols());
  FewStepResult res;
  Eigen::MatrixXd x = z;
  for (std::size_t i = grid.size(); i-- > 0;) {
    const int t = grid[i];
    const std::vector<int> ts(n, t);
    Eigen::MatrixXd x0 = m.denoiser.predict_x0(x, ts, sched, condition);
    ++res.evaluations;
    res.trace.push_back({t, x, x0});
    if (i == 0) {
      res.samples = std::move(x0);
      break;
    }
    const int t_prev = grid[i - 1];
    const std::vector<int> ts_prev(n, t_prev);
    if (mode == RenoiseMode::kStochastic) {
      x = add_noise_batch(x0, rng.normal_matrix(x0.rows(), x0.cols()), ts_prev, sched);
    } else {
      const Eigen::MatrixXd eps_hat = (x - sched.sqrt_alpha_bar(t) * x0) / sched.sigma(t);
      x = add_noise_batch(x0, eps_hat, ts_prev, sched);
    }
  }
  return res;
}

TrainLog pretrain_student(StudentModel& m, const TeacherBundle& bundle,
                          const DenoiserTrainOptions& options, Rng& rng) {
  if (m.denoiser.net.same_architecture(bundle.denoiser.net) &&
      m.denoiser.prediction == bundle.denoiser.prediction)
    m.denoiser.net.set_params(bundle.denoiser.net.params());

  TrainLog log;
  if (options.iters <= 0) return log;
  AdamState adam = make_adam(m.denoiser.net.num_params(), options.adam);
  DivergenceMonitor monitor;
  const auto grid = m.grid.denoising_steps();
  std::vector<int> ts(static_cast<std::size_t>(options.batch));
  for (int it = 0; it < options.iters; ++it) {
    const double progress = static_cast<double>(it) / options.iters;
    const double f = options.final_lr_fraction;
    adam.config.lr =
        options.adam.lr * (f + (1.0 - f) * 0.5 * (1.0 + std::cos(std::numbers::pi * progress)));
    MixtureDraw draw = sample_mixture(bundle.mixture, options.batch, rng);
    for (auto& t : ts) t = grid[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(grid.size()) - 1))];
    const Eigen::MatrixXd eps = rng.normal_matrix(bundle.mixture.dim(), options.batch);
    const Eigen::MatrixXd cond = m.denoiser.condition_dim() > 0
                                     ? one_hot(draw.components, m.denoiser.condition_dim())
                                     : Eigen::MatrixXd();
    DenoisingLoss l = denoising_loss(m.denoiser, draw.samples, eps, ts, m.schedule, cond);
    log.loss.push_back(l.loss);
    if (!monitor.update(l.loss))
      throw TrainingAborted("pretrain", "loss diverged at iteration " + std::to_string(it));
    adam_step(adam, m.denoiser.net.mutable_params(), l.grad);
  }
  return log;
}

nlohmann::json grid_to_json(const FewStepGrid& g) { return g.steps; }

}  // namespace dmdlab
