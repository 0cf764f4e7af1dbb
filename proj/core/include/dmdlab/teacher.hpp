#pragma once

#include <vector>

#include <Eigen/Dense>

#include "dmdlab/adam.hpp"
#include "dmdlab/denoiser.hpp"
#include "dmdlab/mixture.hpp"
#include "dmdlab/rng.hpp"
#include "dmdlab/schedule.hpp"

namespace dmdlab {

/// The data distribution together with a neural denoiser fitted to it.
/// condition_dim is 0 (unconditional) or the component count (one-hot label).
struct TeacherBundle {
  MixtureSpec mixture;
  Denoiser denoiser;
  Schedule schedule;
  int condition_dim = 0;

  /// Throws ShapeError unless the denoiser input is d + time + condition wide.
  void validate() const;
};

TeacherBundle make_teacher_bundle(MixtureSpec mixture, Schedule schedule,
                                  const std::vector<int>& hidden, Activation activation,
                                  Prediction prediction, bool conditional, Rng& init_rng);

/// One-hot component labels, K x n.
Eigen::MatrixXd one_hot(const std::vector<int>& labels, int num_classes);

struct DenoiserTrainOptions {
  int iters = 20000;
  int batch = 128;
  AdamConfig adam{.lr = 1e-3};
  /// Cosine decay of the learning rate down to lr * final_lr_fraction.
  double final_lr_fraction = 0.05;
};

struct TrainLog {
  std::vector<double> loss;
};

/// Fits the teacher denoiser on mixture samples with t ~ U{1..T}. Throws
/// TrainingAborted("teacher", ...) when the divergence monitor trips.
TrainLog train_teacher_denoiser(TeacherBundle& bundle, const DenoiserTrainOptions& options,
                                Rng& rng);

struct MultistepResult {
  Eigen::MatrixXd samples;
  int evaluations = 0;
};

/// Deterministic DDIM-style sampler over n_steps evenly spaced timesteps from T
/// down to 0, starting at noise `z` (d x n). Each step is one batched denoiser
/// evaluation; `eta` > 0 adds the stochastic DDIM term drawn from `rng`.
MultistepResult sample_multistep(const TeacherBundle& bundle, int n_steps, const Eigen::MatrixXd& z,
                                 const Eigen::MatrixXd& condition = {}, double eta = 0.0,
                                 Rng* rng = nullptr);

}  // namespace dmdlab
