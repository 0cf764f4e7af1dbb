#pragma once

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dmdlab/adam.hpp"
#include "dmdlab/dense_net.hpp"
#include "dmdlab/mixture.hpp"
#include "dmdlab/student.hpp"
#include "dmdlab/teacher.hpp"

namespace dmdlab {

inline constexpr double kLogitClamp = 15.0;

/// kNonSaturating: binary cross-entropy for the head (f = P(real)) and
/// -E log f(fake) for the generator. kLogDifference: the head minimizes
/// L_D = E_real log f - E_fake log f and the generator minimizes L_G = E_fake log f.
enum class GanLossForm { kNonSaturating, kLogDifference };

std::string to_string(GanLossForm f);
GanLossForm gan_loss_form_from_string(const std::string& name);

/// Classifier over frozen teacher features. The backbone is shared and never
/// updated; only the head is trainable.
struct Discriminator {
  std::shared_ptr<const DenseNet> backbone;
  int tap_layer = 0;
  DenseNet head;
  int num_steps = 0;

  int sample_dim() const { return backbone->layout().sample_dim; }
  int condition_dim() const { return backbone->layout().condition_dim; }
};

/// `tap_layer` < 0 counts from the end (-1 = last hidden layer). The head's
/// output layer starts at zero, so every initial probability is 1/2.
Discriminator make_discriminator(const TeacherBundle& teacher, int tap_layer,
                                 const std::vector<int>& head_hidden, Activation activation,
                                 Rng& init_rng);

struct DiscriminatorTape {
  DenseNet::Tape backbone;
  DenseNet::Tape head;
  Eigen::VectorXd raw_logits;
};

/// Clamped logits for a batch of noisy points.
Eigen::VectorXd disc_logits(const Discriminator& d, const Eigen::MatrixXd& x_t,
                            std::span<const int> timesteps, const Eigen::MatrixXd& condition = {},
                            DiscriminatorTape* tape = nullptr);

struct DiscriminatorGradients {
  Eigen::VectorXd head;
  Eigen::MatrixXd x;  // empty unless requested
};

/// Reverse pass of <logits, cotangent>; clamped entries pass no gradient.
DiscriminatorGradients disc_backward(const Discriminator& d, const DiscriminatorTape& tape,
                                     const Eigen::VectorXd& logit_cotangent, bool input_gradient);

double sigmoid(double logit);

/// f(D(x, t)): sigmoid of the clamped logit, strictly inside (0, 1).
double disc_prob(const Discriminator& d, const Eigen::VectorXd& x_t, int t,
                 const Eigen::VectorXd& condition = {});

/// r = f / (1 - f) = exp(clamped logit).
double density_ratio(const Discriminator& d, const Eigen::VectorXd& x_t, int t,
                     const Eigen::VectorXd& condition = {});
Eigen::VectorXd density_ratio_batch(const Discriminator& d, const Eigen::MatrixXd& x_t,
                                    std::span<const int> timesteps,
                                    const Eigen::MatrixXd& condition = {});

/// One paired batch: clean data x0, its grid-noised copy fed to the student,
/// and the shared (tau, eps') used to noise both the real and fake sample.
struct GanBatch {
  Eigen::MatrixXd real;
  std::vector<int> grid_t;
  Eigen::MatrixXd grid_eps;
  std::vector<int> tau;
  Eigen::MatrixXd tau_eps;
  Eigen::MatrixXd condition;

  int size() const { return static_cast<int>(real.cols()); }
};

/// tau ~ U{1..tau_max}. tau_max <= 0 means T.
GanBatch draw_gan_batch(const MixtureSpec& mix, const StudentModel& m, int batch, Rng& data,
                        Rng& noise, bool conditional, int tau_max = 0);

struct GanBatchReport {
  double loss_d = 0.0;
  double loss_g = 0.0;
  double real_prob = 0.0;
  double fake_prob = 0.0;
  double grad_norm_g = 0.0;
  double grad_norm_d = 0.0;
};

struct GanLossResult {
  GanBatchReport report;
  Eigen::VectorXd head_grad;     // gradient of the head's loss
  Eigen::VectorXd student_grad;  // gradient of the generator loss (empty unless requested)
};

/// Both adversarial losses on one batch with their parameter gradients.
/// Throws TrainingAborted("gan", ...) on a non-finite loss.
GanLossResult gan_losses(const Discriminator& d, const StudentModel& m, const GanBatch& batch,
                         GanLossForm form, bool student_gradient);

struct HeadLoss {
  double loss = 0.0;
  Eigen::VectorXd grad;
  double real_prob = 0.0;
  double fake_prob = 0.0;
};

/// The head's loss on already-noised real and fake batches that share
/// `timesteps`, with its parameter gradient.
HeadLoss head_loss(const Discriminator& d, const Eigen::MatrixXd& real_t,
                   const Eigen::MatrixXd& fake_t, std::span<const int> timesteps,
                   GanLossForm form, const Eigen::MatrixXd& condition = {});

struct GanPhaseOptions {
  int iters = 4000;
  int batch = 4;
  int disc_updates = 5;  // head updates per generator update
  GanLossForm form = GanLossForm::kNonSaturating;
  bool update_generator = true;
  bool conditional = false;
  int collapse_patience = 500;
  double collapse_threshold = 1e-3;
};

/// Counters that must survive a checkpoint.
struct GanProgress {
  int iteration = 0;
  int collapse_streak = 0;
};

/// One head update on a fresh batch. Returns the head gradient norm.
double discriminator_step(Discriminator& d, AdamState& head_opt, const StudentModel& m,
                          const MixtureSpec& mix, int batch, GanLossForm form, bool conditional,
                          Rng& data, Rng& noise);

using GanLogSink = std::function<void(int iteration, const GanBatchReport&)>;

/// Runs `iters` alternating iterations (disc_updates head steps, then one
/// generator step) continuing from `progress`. Aborts with
/// TrainingAborted("gan", ...) when the mean fake probability stays below the
/// collapse threshold for `collapse_patience` consecutive iterations.
std::vector<GanBatchReport> run_gan_phase(Discriminator& d, AdamState& head_opt, StudentModel& m,
                                          AdamState& student_opt, const MixtureSpec& mix,
                                          const GanPhaseOptions& options, Rng& data, Rng& noise,
                                          GanProgress& progress, int iters,
                                          const GanLogSink& sink = {});

}  // namespace dmdlab
