#pragma once

#include <span>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "dmdlab/denoiser.hpp"
#include "dmdlab/teacher.hpp"

namespace dmdlab {

/// Ordered timesteps {0, t_1, ..., t_Q}; the student denoises at t_1..t_Q.
struct FewStepGrid {
  std::vector<int> steps;

  int num_denoising() const { return static_cast<int>(steps.size()) - 1; }
  std::span<const int> denoising_steps() const { return std::span(steps).subspan(1); }
  /// Throws ConfigError unless steps[0] == 0, strictly increasing, all <= T.
  void validate(int num_steps) const;

  /// {0, T/Q - 1, 2T/Q - 1, ..., T - 1}; T = 1000, Q = 4 gives {0, 249, 499, 749, 999}.
  static FewStepGrid uniform(int num_steps, int denoising_steps);
};

enum class RenoiseMode { kStochastic, kDeterministic };

std::string to_string(RenoiseMode m);
RenoiseMode renoise_mode_from_string(const std::string& name);

struct StudentModel {
  Denoiser denoiser;
  FewStepGrid grid;
  Schedule schedule;

  void validate() const;
};

/// Student initialized as a copy of the teacher denoiser.
StudentModel make_student_from_teacher(const TeacherBundle& teacher, FewStepGrid grid);

/// Freshly initialized student with its own architecture.
StudentModel make_student(int sample_dim, const std::vector<int>& hidden, Activation activation,
                          Prediction prediction, int condition_dim, FewStepGrid grid,
                          Schedule schedule, Rng& init_rng);

/// x0_hat = G(x_t, t, c); velocity heads are converted internally.
Eigen::VectorXd student_predict(const StudentModel& m, const Eigen::VectorXd& x_t, int t,
                                const Eigen::VectorXd& condition = {});
Eigen::MatrixXd student_predict_batch(const StudentModel& m, const Eigen::MatrixXd& x_t,
                                      std::span<const int> timesteps,
                                      const Eigen::MatrixXd& condition = {});

struct FewStepTraceEntry {
  int t = 0;
  Eigen::MatrixXd input;       // x at this grid point
  Eigen::MatrixXd prediction;  // x0_hat
};

struct FewStepResult {
  Eigen::MatrixXd samples;
  std::vector<FewStepTraceEntry> trace;  // ordered t_Q ... t_1
  int evaluations = 0;
};

/// Backward sweep over the grid: start from z at t_Q, predict x0_hat at each
/// t_i, move to t_{i-1} (fresh-noise add_noise or a deterministic DDIM hop),
/// and return the t_1 prediction. Exactly Q batched network evaluations.
FewStepResult generate_few_step(const StudentModel& m, const Eigen::MatrixXd& z,
                                const Eigen::MatrixXd& condition, Rng& rng,
                                RenoiseMode mode = RenoiseMode::kStochastic);

/// Brings the student near the teacher: copies parameters when architectures
/// match, then (if iters > 0) runs denoising regression on mixture samples at
/// grid timesteps only.
TrainLog pretrain_student(StudentModel& m, const TeacherBundle& bundle,
                          const DenoiserTrainOptions& options, Rng& rng);

nlohmann::json grid_to_json(const FewStepGrid& g);

}  // namespace dmdlab
