#include "dmdlab/denoiser.hpp"

#include <cmath>

#include "dmdlab/error.hpp"

namespace dmdlab {

std::string to_string(Prediction p) {
  return p == Prediction::kSample ? "sample" : "velocity";
}

Prediction prediction_from_string(const std::string& name) {
  if (name == "sample" || name == "x0") return Prediction::kSample;
  if (name == "velocity" || name == "v") return Prediction::kVelocity;
  throw ConfigError("network.prediction", "unknown prediction head '" + name + "'");
}

Eigen::MatrixXd Denoiser::raw(const Eigen::MatrixXd& x_t, std::span<const int> timesteps,
                              const Schedule& sched, const Eigen::MatrixXd& condition) const {
  return net.forward(build_input(net.layout(), x_t, timesteps, sched.num_steps, condition));
}

namespace {

void velocity_to_sample(Eigen::MatrixXd& out, const Eigen::MatrixXd& x_t,
                        std::span<const int> timesteps, const Schedule& sched) {
  for (Eigen::Index j = 0; j < out.cols(); ++j) {
    const int t = timesteps[static_cast<std::size_t>(j)];
    out.col(j) = sched.sqrt_alpha_bar(t) * x_t.col(j) - sched.sigma(t) * out.col(j);
  }
}

}  // namespace

Eigen::MatrixXd Denoiser::predict_x0(const Eigen::MatrixXd& x_t, std::span<const int> timesteps,
                                     const Schedule& sched,
                                     const Eigen::MatrixXd& condition) const {
  Eigen::MatrixXd out = raw(x_t, timesteps, sched, condition);
  if (prediction == Prediction::kVelocity) velocity_to_sample(out, x_t, timesteps, sched);
  return out;
}

Eigen::MatrixXd Denoiser::predict_x0(const Eigen::MatrixXd& x_t, std::span<const int> timesteps,
                                     const Schedule& sched, const Eigen::MatrixXd& condition,
                                     Tape& tape) const {
  tape.timesteps.assign(timesteps.begin(), timesteps.end());
  Eigen::MatrixXd out = net.forward(
      build_input(net.layout(), x_t, timesteps, sched.num_steps, condition), tape.net);
  if (prediction == Prediction::kVelocity) velocity_to_sample(out, x_t, timesteps, sched);
  return out;
}

Denoiser::Gradients Denoiser::backward_x0(const Tape& tape, const Eigen::MatrixXd& cotangent,
                                          const Schedule& sched) const {
  Eigen::MatrixXd head_cot = cotangent;
  if (prediction == Prediction::kVelocity) {
    for (Eigen::Index j = 0; j < head_cot.cols(); ++j)
      head_cot.col(j) *= -sched.sigma(tape.timesteps[static_cast<std::size_t>(j)]);
  }
  auto g = net.backward(tape.net, head_cot);
  Gradients out{std::move(g.params), g.input.topRows(sample_dim())};
  if (prediction == Prediction::kVelocity) {
    for (Eigen::Index j = 0; j < out.x_t.cols(); ++j)
      out.x_t.col(j) +=
          sched.sqrt_alpha_bar(tape.timesteps[static_cast<std::size_t>(j)]) * cotangent.col(j);
  }
  return out;
}

Denoiser make_denoiser(int sample_dim, const std::vector<int>& hidden, Activation activation,
                       Prediction prediction, int condition_dim, Rng& init_rng) {
  InputLayout layout{sample_dim, kTimeEmbeddingWidth, condition_dim};
  std::vector<int> widths{layout.width()};
  widths.insert(widths.end(), hidden.begin(), hidden.end());
  widths.push_back(sample_dim);
  Denoiser d{DenseNet(widths, activation, layout), prediction};
  init_fan_in(d.net, init_rng);
  return d;
}

Eigen::MatrixXd denoiser_score(const Denoiser& d, const Eigen::MatrixXd& x_t,
                               std::span<const int> timesteps, const Schedule& sched,
                               const Eigen::MatrixXd& condition) {
  return score_from_denoiser_batch(x_t, d.predict_x0(x_t, timesteps, sched, condition), timesteps,
                                   sched);
}

DenoisingLoss denoising_loss(const Denoiser& d, const Eigen::MatrixXd& x0,
                             const Eigen::MatrixXd& eps, std::span<const int> timesteps,
                             const Schedule& sched, const Eigen::MatrixXd& condition) {
  const Eigen::MatrixXd x_t = add_noise_batch(x0, eps, timesteps, sched);
  Eigen::MatrixXd target = x0;
  if (d.prediction == Prediction::kVelocity) {
    for (Eigen::Index j = 0; j < target.cols(); ++j) {
      const int t = timesteps[static_cast<std::size_t>(j)];
      target.col(j) = sched.sqrt_alpha_bar(t) * eps.col(j) - sched.sigma(t) * x0.col(j);
    }
  }
  DenseNet::Tape tape;
  const Eigen::MatrixXd& out = d.net.forward(
      build_input(d.net.layout(), x_t, timesteps, sched.num_steps, condition), tape);
  const Eigen::MatrixXd diff = out - target;
  const double n = static_cast<double>(x0.cols());
  DenoisingLoss res;
  res.loss = diff.squaredNorm() / n;
  res.grad = d.net.backward(tape, (2.0 / n) * diff).params;
  return res;
}

bool DivergenceMonitor::update(double loss) {
  if (!std::isfinite(loss)) return false;
  if (!started_) {
    initial_ = loss;
    started_ = true;
    return true;
  }
  streak_ = loss > factor_ * initial_ ? streak_ + 1 : 0;
  return streak_ < patience_;
}

std::vector<double> moving_average(const std::vector<double>& values, std::size_t window) {
  std::vector<double> out(values.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    sum += values[i];
    if (i >= window) sum -= values[i - window];
    out[i] = sum / static_cast<double>(std::min(i + 1, window));
  }
  return out;
}

}  // namespace dmdlab
