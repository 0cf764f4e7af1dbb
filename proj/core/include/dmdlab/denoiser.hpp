#pragma once

#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dmdlab/adam.hpp"
#include "dmdlab/dense_net.hpp"
#include "dmdlab/rng.hpp"
#include "dmdlab/schedule.hpp"

namespace dmdlab {

/// What the network's output head regresses: the clean sample or the velocity.
enum class Prediction { kSample, kVelocity };

std::string to_string(Prediction p);
Prediction prediction_from_string(const std::string& name);

/// A DenseNet read as a clean-sample predictor x0_hat(x_t, t, c). Teacher,
/// student and fake score all share this wrapper.
struct Denoiser {
  DenseNet net;
  Prediction prediction = Prediction::kSample;

  int sample_dim() const { return net.layout().sample_dim; }
  int condition_dim() const { return net.layout().condition_dim; }

  struct Tape {
    DenseNet::Tape net;
    std::vector<int> timesteps;
  };

  struct Gradients {
    Eigen::VectorXd params;
    Eigen::MatrixXd x_t;  // gradient w.r.t. the noisy input, per column
  };

  /// Raw network output (x0 or v per `prediction`).
  Eigen::MatrixXd raw(const Eigen::MatrixXd& x_t, std::span<const int> timesteps,
                      const Schedule& sched, const Eigen::MatrixXd& condition = {}) const;

  Eigen::MatrixXd predict_x0(const Eigen::MatrixXd& x_t, std::span<const int> timesteps,
                             const Schedule& sched, const Eigen::MatrixXd& condition = {}) const;
  Eigen::MatrixXd predict_x0(const Eigen::MatrixXd& x_t, std::span<const int> timesteps,
                             const Schedule& sched, const Eigen::MatrixXd& condition,
                             Tape& tape) const;

  /// Reverse pass of <x0_hat, cotangent> through the prediction head.
  Gradients backward_x0(const Tape& tape, const Eigen::MatrixXd& cotangent,
                        const Schedule& sched) const;
};

Denoiser make_denoiser(int sample_dim, const std::vector<int>& hidden, Activation activation,
                       Prediction prediction, int condition_dim, Rng& init_rng);

/// Score estimate implied by the denoiser via the score-denoiser relation.
Eigen::MatrixXd denoiser_score(const Denoiser& d, const Eigen::MatrixXd& x_t,
                               std::span<const int> timesteps, const Schedule& sched,
                               const Eigen::MatrixXd& condition = {});

/// Mean-squared regression loss on the head's native target (x0 or v) for
/// clean samples x0 noised with `eps` at `timesteps`, and its parameter gradient.
struct DenoisingLoss {
  double loss = 0.0;
  Eigen::VectorXd grad;
};
DenoisingLoss denoising_loss(const Denoiser& d, const Eigen::MatrixXd& x0,
                             const Eigen::MatrixXd& eps, std::span<const int> timesteps,
                             const Schedule& sched, const Eigen::MatrixXd& condition = {});

/// Aborts training when the loss stays above `factor` x its first value for
/// `patience` consecutive steps.
class DivergenceMonitor {
 public:
  DivergenceMonitor(double factor = 10.0, int patience = 100)
      : factor_(factor), patience_(patience) {}
  /// Returns false once the divergence condition is met.
  bool update(double loss);
  double initial() const { return initial_; }
  int streak() const { return streak_; }
  void restore(double initial, int streak, bool started) {
    initial_ = initial;
    streak_ = streak;
    started_ = started;
  }
  bool started() const { return started_; }

 private:
  double factor_;
  int patience_;
  double initial_ = 0.0;
  int streak_ = 0;
  bool started_ = false;
};

/// Trailing moving average of a logged series; entry i averages
/// values[max(0, i - window + 1) .. i].
std::vector<double> moving_average(const std::vector<double>& values, std::size_t window);

}  // namespace dmdlab
