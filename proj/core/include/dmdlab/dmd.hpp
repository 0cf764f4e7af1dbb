#pragma once

#include <functional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "dmdlab/adam.hpp"
#include "dmdlab/adversarial.hpp"
#include "dmdlab/denoiser.hpp"
#include "dmdlab/mixture.hpp"
#include "dmdlab/student.hpp"

namespace dmdlab {

/// A score function s(x, t): either the exact mixture score or the score
/// implied by a (non-owned) denoiser.
class ScoreSource {
 public:
  static ScoreSource analytic(MixtureSpec mix) { return ScoreSource(std::move(mix)); }
  static ScoreSource neural(const Denoiser& d) { return ScoreSource(&d); }

  bool is_analytic() const { return std::holds_alternative<MixtureSpec>(src_); }
  std::string tag() const { return is_analytic() ? "analytic" : "neural"; }

  Eigen::MatrixXd operator()(const Eigen::MatrixXd& x, std::span<const int> timesteps,
                             const Schedule& sched, const Eigen::MatrixXd& condition = {}) const;

 private:
  explicit ScoreSource(MixtureSpec mix) : src_(std::move(mix)) {}
  explicit ScoreSource(const Denoiser* d) : src_(d) {}
  std::variant<MixtureSpec, const Denoiser*> src_;
};

struct ScoreProvider {
  ScoreSource real;
  ScoreSource fake;
  Schedule schedule;
};

/// Per-sample weight on the score difference.
/// kPlain: 1 (reverse KL). kAppendix: 1 / (1 + r). kMainText: 1 / r.
enum class WeightMode { kPlain, kAppendix, kMainText };

std::string to_string(WeightMode m);
WeightMode weight_mode_from_string(const std::string& name);
double soften_weight(double ratio, WeightMode mode);

/// Density ratio p_real,t / p_fake,t for a batch of noisy points.
using RatioFn =
    std::function<Eigen::VectorXd(const Eigen::MatrixXd& x, std::span<const int> timesteps,
                                  const Eigen::MatrixXd& condition)>;
/// exp(logit) for a head trained with the non-saturating loss. A head trained
/// with the log-difference loss learns P(fake), so its ratio is exp(-logit).
RatioFn ratio_from_discriminator(const Discriminator& d,
                                 GanLossForm form = GanLossForm::kNonSaturating);

struct DmdOptions {
  WeightMode weight_mode = WeightMode::kAppendix;
  /// Multiply by d x_tau / d x0_hat = sqrt(abar_tau).
  bool chain_sqrt_alpha = false;
  /// Divide the batch of cotangents by their root-mean-square norm.
  bool normalize = false;
};

struct DmdGradReport {
  Eigen::MatrixXd cotangents;  // injected at the student output, per sample
  Eigen::VectorXd ratio;       // r per sample (1 in plain mode)
  Eigen::VectorXd weight;      // w per sample
  std::vector<int> tau;
  double rms = 0.0;            // RMS cotangent norm before any normalization
};

/// -(s_real - s_fake) at F(x0_hat, tau) with noise eps'.
Eigen::VectorXd dmd_cotangent_rkl(const ScoreProvider& sp, const Eigen::VectorXd& x0_hat, int tau,
                                  const Eigen::VectorXd& eps, bool chain_sqrt_alpha = false);

/// -w(r) (s_real - s_fake) at F(x0_hat, tau); r from `ratio`.
std::pair<Eigen::VectorXd, DmdGradReport> dmd_cotangent_soften(
    const ScoreProvider& sp, const RatioFn& ratio, const Eigen::VectorXd& x0_hat, int tau,
    const Eigen::VectorXd& eps, WeightMode weight_mode, bool chain_sqrt_alpha = false);

/// Batched cotangents. `ratio` may be empty when weight_mode is kPlain.
DmdGradReport dmd_cotangents(const ScoreProvider& sp, const RatioFn& ratio,
                             const Eigen::MatrixXd& x0_hat, std::span<const int> tau,
                             const Eigen::MatrixXd& eps, const DmdOptions& options,
                             const Eigen::MatrixXd& condition = {});

/// Composite Simpson grid on [lo, hi] with n points (n odd).
struct QuadratureGrid {
  double lo = -10.0;
  double hi = 10.0;
  int points = 4001;
};

using LogDensity1D = std::function<double(double)>;

/// Softened reverse KL between 1D densities p (real) and q (fake), taken as the
/// integral of q (r + 1) log(1/2 + 1/(2r)) with r = p / q, i.e.
/// int (p + q) log((p + q) / (2p)). This equals 2 KL((p + q)/2 || p), and its
/// gradient under a reparameterized q carries the weight 1 / (1 + r).
/// Throws Error with mass diagnostics if the grid holds < 99.99% of p or q.
double soften_rkl_value(const LogDensity1D& log_p, const LogDensity1D& log_q,
                        const QuadratureGrid& grid);

/// KL((p + q)/2 || p) by the same quadrature (half of soften_rkl_value).
double mixture_kl_value(const LogDensity1D& log_p, const LogDensity1D& log_q,
                        const QuadratureGrid& grid);

/// Reverse KL(q || p) by the same quadrature.
double reverse_kl_value(const LogDensity1D& log_p, const LogDensity1D& log_q,
                        const QuadratureGrid& grid);

/// One denoising step of the fake score on fresh student outputs. The student
/// is read-only. Returns the loss before the step.
double fake_score_update(Denoiser& fake, AdamState& fake_opt, const StudentModel& m,
                         const MixtureSpec& mix, int batch, bool conditional, Rng& data,
                         Rng& noise);

struct DmdPhaseOptions {
  int iters = 5000;
  int batch = 4;
  DmdOptions dmd;
  bool truncate_tau = false;  // restrict tau to <= 0.98 T
  int fake_updates = 5;       // fake-score updates per student update
  int disc_updates = 5;       // head updates per student update
  bool train_head = true;
  GanLossForm form = GanLossForm::kNonSaturating;
  bool conditional = false;
};

struct DmdLogRow {
  double mean_cotangent = 0.0;  // mean |cotangent| after weighting
  double mean_ratio = 1.0;
  double mean_weight = 1.0;
  double fake_score_loss = 0.0;
  double rms = 0.0;
};

struct DmdProgress {
  int iteration = 0;
  DivergenceMonitor fake_monitor;
};

using DmdLogSink = std::function<void(int iteration, const DmdLogRow&)>;

/// Phase-2 loop: per iteration, `fake_updates` fake-score steps, optional head
/// steps (ratio tracking), then one student step along the weighted score
/// difference. `d`/`head_opt` may be null in plain mode with train_head off.
std::vector<DmdLogRow> run_dmd_phase(StudentModel& m, AdamState& student_opt, Denoiser& fake,
                                     AdamState& fake_opt, Discriminator* d, AdamState* head_opt,
                                     const ScoreSource& real, const MixtureSpec& mix,
                                     const DmdPhaseOptions& options, Rng& data, Rng& noise,
                                     DmdProgress& progress, int iters, const DmdLogSink& sink = {});

}  // namespace dmdlab
