#include "dmdlab/dmd.hpp"

#include <cmath>

#include "dmdlab/error.hpp"

namespace dmdlab {

Eigen::MatrixXd ScoreSource::operator()(const Eigen::MatrixXd& x, std::span<const int> timesteps,
                                        const Schedule& sched,
                                        const Eigen::MatrixXd& condition) const {
  for (int t : timesteps)
    if (t < 1) throw Error("score evaluation needs t >= 1");
  if (const auto* mix = std::get_if<MixtureSpec>(&src_))
    return analytic_score_batch(x, timesteps, *mix, sched);
  return denoiser_score(*std::get<const Denoiser*>(src_), x, timesteps, sched, condition);
}

std::string to_string(WeightMode m) {
  switch (m) {
    case WeightMode::kPlain: return "plain";
    case WeightMode::kAppendix: return "appendix";
    case WeightMode::kMainText: return "main-text";
  }
  return "appendix";
}

WeightMode weight_mode_from_string(const std::string& name) {
  if (name == "plain") return WeightMode::kPlain;
  if (name == "appendix") return WeightMode::kAppendix;
  if (name == "main-text") return WeightMode::kMainText;
  throw ConfigError("dmd.weight_mode", "unknown weight mode '" + name +
                                           "' (expected appendix or main-text)");
}

double soften_weight(double ratio, WeightMode mode) {
  switch (mode) {
    case WeightMode::kPlain: return 1.0;
    case WeightMode::kAppendix: return 1.0 / (1.0 + ratio);
    case WeightMode::kMainText: return 1.0 / ratio;
  }
  return 1.0;
}

RatioFn ratio_from_discriminator(const Discriminator& d, GanLossForm form) {
  if (form == GanLossForm::kLogDifference)
    return [&d](const Eigen::MatrixXd& x, std::span<const int> ts,
                const Eigen::MatrixXd& c) -> Eigen::VectorXd {
      return (-disc_logits(d, x, ts, c).array()).exp();
    };
  return [&d](const Eigen::MatrixXd& x, std::span<const int> ts, const Eigen::MatrixXd& c) {
    return density_ratio_batch(d, x, ts, c);
  };
}

DmdGradReport dmd_cotangents(const ScoreProvider& sp, const RatioFn& ratio,
                             const Eigen::MatrixXd& x0_hat, std::span<const int> tau,
                             const Eigen::MatrixXd& eps, const DmdOptions& options,
                             const Eigen::MatrixXd& condition) {
  const auto& sched = sp.schedule;
  const Eigen::Index n = x0_hat.cols();
  for (int t : tau)
    if (t < 1 || t > sched.num_steps) throw Error("dmd: tau must lie in [1, T]");
  const Eigen::MatrixXd x_tau = add_noise_batch(x0_hat, eps, tau, sched);
  const Eigen::MatrixXd diff = sp.real(x_tau, tau, sched, condition) -
                               sp.fake(x_tau, tau, sched, condition);
  if (!diff.allFinite()) throw TrainingAborted("dmd", "non-finite score difference");

  DmdGradReport rep;
  rep.tau.assign(tau.begin(), tau.end());
  rep.ratio = Eigen::VectorXd::Ones(n);
  if (options.weight_mode != WeightMode::kPlain) {
    if (!ratio) throw Error("dmd: softened weighting needs a density-ratio source");
    rep.ratio = ratio(x_tau, tau, condition);
  }
  rep.weight.resize(n);
  rep.cotangents.resize(x0_hat.rows(), n);
  for (Eigen::Index j = 0; j < n; ++j) {
    rep.weight[j] = soften_weight(rep.ratio[j], options.weight_mode);
    double scale = -rep.weight[j];
    if (options.chain_sqrt_alpha) scale *= sched.sqrt_alpha_bar(tau[static_cast<std::size_t>(j)]);
    rep.cotangents.col(j) = scale * diff.col(j);
  }
  if (!rep.cotangents.allFinite()) throw TrainingAborted("dmd", "non-finite cotangent");
  rep.rms = std::sqrt(rep.cotangents.colwise().squaredNorm().mean());
  if (options.normalize && rep.rms > 0.0) rep.cotangents /= rep.rms;
  return rep;
}

Eigen::VectorXd dmd_cotangent_rkl(const ScoreProvider& sp, const Eigen::VectorXd& x0_hat, int tau,
                                  const Eigen::VectorXd& eps, bool chain_sqrt_alpha) {
  const int ts[] = {tau};
  DmdOptions opt{WeightMode::kPlain, chain_sqrt_alpha, false};
  return dmd_cotangents(sp, {}, x0_hat, ts, eps, opt).cotangents.col(0);
}

std::pair<Eigen::VectorXd, DmdGradReport> dmd_cotangent_soften(
    const ScoreProvider& sp, const RatioFn& ratio, const Eigen::VectorXd& x0_hat, int tau,
    const Eigen::VectorXd& eps, WeightMode weight_mode, bool chain_sqrt_alpha) {
  if (weight_mode == WeightMode::kPlain)
    throw Error("dmd_cotangent_soften: weight mode must be appendix or main-text");
  const int ts[] = {tau};
  DmdOptions opt{weight_mode, chain_sqrt_alpha, false};
  DmdGradReport rep = dmd_cotangents(sp, ratio, x0_hat, ts, eps, opt);
  Eigen::VectorXd c = rep.cotangents.col(0);
  return {std::move(c), std::move(rep)};
}

namespace {

struct Tabulated {
  Eigen::ArrayXd log_p, log_q, weights;
};

Tabulated tabulate(const LogDensity1D& log_p, const LogDensity1D& log_q,
                   const QuadratureGrid& grid) {
  if (grid.points < 3 || grid.points % 2 == 0)
    throw Error("quadrature: Simpson grid needs an odd number of points >= 3");
  if (!(grid.hi > grid.lo)) throw Error("quadrature: empty interval");
  const double h = (grid.hi - grid.lo) / (grid.points - 1);
  Tabulated tab{Eigen::ArrayXd(grid.points), Eigen::ArrayXd(grid.points),
                Eigen::ArrayXd(grid.points)};
  for (int i = 0; i < grid.points; ++i) {
    const double x = grid.lo + i * h;
    tab.log_p[i] = log_p(x);
    tab.log_q[i] = log_q(x);
    const double c = (i == 0 || i == grid.points - 1) ? 1.0 : (i % 2 == 1 ? 4.0 : 2.0);
    tab.weights[i] = c * h / 3.0;
  }
  const double mass_p = (tab.weights * tab.log_p.exp()).sum();
  const double mass_q = (tab.weights * tab.log_q.exp()).sum();
  if (mass_p < 0.9999 || mass_q < 0.9999)
    throw Error("quadrature: grid [" + std::to_string(grid.lo) + ", " + std::to_string(grid.hi) +
                "] covers mass p = " + std::to_string(mass_p) + ", q = " + std::to_string(mass_q) +
                " (need >= 0.9999 of each)");
  return tab;
}

}  // namespace

double soften_rkl_value(const LogDensity1D& log_p, const LogDensity1D& log_q,
                        const QuadratureGrid& grid) {
  const Tabulated tab = tabulate(log_p, log_q, grid);
  double total = 0.0;
  for (Eigen::Index i = 0; i < tab.weights.size(); ++i) {
    // (p + q) log((p + q) / (2p)) with log(p + q) via log-sum-exp.
    const double lp = tab.log_p[i];
    const double lq = tab.log_q[i];
    const double m = std::max(lp, lq);
    if (!std::isfinite(m)) continue;
    const double log_sum = m + std::log(std::exp(lp - m) + std::exp(lq - m));
    const double integrand = std::exp(log_sum) * (log_sum - std::log(2.0) - lp);
    total += tab.weights[i] * integrand;
  }
  return total;
}

double mixture_kl_value(const LogDensity1D& log_p, const LogDensity1D& log_q,
                        const QuadratureGrid& grid) {
  return 0.5 * soften_rkl_value(log_p, log_q, grid);
}

double reverse_kl_value(const LogDensity1D& log_p, const LogDensity1D& log_q,
                        const QuadratureGrid& grid) {
  const Tabulated tab = tabulate(log_p, log_q, grid);
  double total = 0.0;
  for (Eigen::Index i = 0; i < tab.weights.size(); ++i) {
    const double q = std::exp(tab.log_q[i]);
    if (q == 0.0) continue;
    total += tab.weights[i] * q * (tab.log_q[i] - tab.log_p[i]);
  }
  return total;
}

double fake_score_update(Denoiser& fake, AdamState& fake_opt, const StudentModel& m,
                         const MixtureSpec& mix, int batch, bool conditional, Rng& data,
                         Rng& noise) {
  const auto& sched = m.schedule;
  const GanBatch b = draw_gan_batch(mix, m, batch, data, noise, conditional);
  const Eigen::MatrixXd x_t = add_noise_batch(b.real, b.grid_eps, b.grid_t, sched);
  const Eigen::MatrixXd x0_hat = m.denoiser.predict_x0(x_t, b.grid_t, sched, b.condition);
  // Fresh timestep and noise for the denoising target (b.tau, b.tau_eps).
  DenoisingLoss l = denoising_loss(fake, x0_hat, b.tau_eps, b.tau, sched, b.condition);
  adam_step(fake_opt, fake.net.mutable_params(), l.grad);
  return l.loss;
}

std::vector<DmdLogRow> run_dmd_phase(StudentModel& m, AdamState& student_opt, Denoiser& fake,
                                     AdamState& fake_opt, Discriminator* d, AdamState* head_opt,
                                     const ScoreSource& real, const MixtureSpec& mix,
                                     const DmdPhaseOptions& options, Rng& data, Rng& noise,
                                     DmdProgress& progress, int iters, const DmdLogSink& sink) {
  const bool needs_ratio = options.dmd.weight_mode != WeightMode::kPlain;
  if ((needs_ratio || options.train_head) && (d == nullptr || head_opt == nullptr))
    throw Error("run_dmd_phase: ratio estimation needs a discriminator");
  const auto& sched = m.schedule;
  const int tau_max = options.truncate_tau
                          ? static_cast<int>(std::floor(0.98 * sched.num_steps))
                          : sched.num_steps;
  ScoreProvider sp{real, ScoreSource::neural(fake), sched};
  const RatioFn ratio = needs_ratio ? ratio_from_discriminator(*d, options.form) : RatioFn{};

  std::vector<DmdLogRow> log;
  log.reserve(static_cast<std::size_t>(std::max(iters, 0)));
  for (int k = 0; k < iters; ++k) {
    DmdLogRow row;
    for (int u = 0; u < options.fake_updates; ++u) {
      row.fake_score_loss = fake_score_update(fake, fake_opt, m, mix, options.batch,
                                              options.conditional, data, noise);
      if (!progress.fake_monitor.update(row.fake_score_loss))
        throw TrainingAborted("dmd", "fake-score loss diverged at iteration " +
                                         std::to_string(progress.iteration));
    }
    if (options.train_head)
      for (int u = 0; u < options.disc_updates; ++u)
        discriminator_step(*d, *head_opt, m, mix, options.batch, options.form, options.conditional,
                           data, noise);

    const GanBatch b =
        draw_gan_batch(mix, m, options.batch, data, noise, options.conditional, tau_max);
    const Eigen::MatrixXd x_t = add_noise_batch(b.real, b.grid_eps, b.grid_t, sched);
    Denoiser::Tape tape;
    const Eigen::MatrixXd x0_hat = m.denoiser.predict_x0(x_t, b.grid_t, sched, b.condition, tape);
    const DmdGradReport rep =
        dmd_cotangents(sp, ratio, x0_hat, b.tau, b.tau_eps, options.dmd, b.condition);
    const Eigen::VectorXd grad =
        m.denoiser.backward_x0(tape, rep.cotangents / static_cast<double>(b.size()), sched).params;
    adam_step(student_opt, m.denoiser.net.mutable_params(), grad);

    row.mean_cotangent = rep.cotangents.colwise().norm().mean();
    row.mean_ratio = rep.ratio.mean();
    row.mean_weight = rep.weight.mean();
    row.rms = rep.rms;
    const int it = progress.iteration++;
    log.push_back(row);
    if (sink) sink(it, row);
  }
  return log;
}

}  // namespace dmdlab
