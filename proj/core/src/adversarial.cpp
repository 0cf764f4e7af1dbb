#include "dmdlab/adversarial.hpp"

#include <algorithm>
#include <cmath>

#include "dmdlab/error.hpp"

namespace dmdlab {

std::string to_string(GanLossForm f) {
  return f == GanLossForm::kNonSaturating ? "non-saturating" : "log-difference";
}

GanLossForm gan_loss_form_from_string(const std::string& name) {
  if (name == "non-saturating" || name == "bce") return GanLossForm::kNonSaturating;
  if (name == "log-difference") return GanLossForm::kLogDifference;
  throw ConfigError("gan.loss_form", "unknown GAN loss form '" + name + "'");
}

Discriminator make_discriminator(const TeacherBundle& teacher, int tap_layer,
                                 const std::vector<int>& head_hidden, Activation activation,
                                 Rng& init_rng) {
  const DenseNet& net = teacher.denoiser.net;
  const int hidden_layers = net.num_layers() - 1;
  if (hidden_layers < 1) throw ConfigError("gan.tap_layer", "teacher has no hidden layer to tap");
  const int tap = tap_layer < 0 ? hidden_layers + tap_layer : tap_layer;
  if (tap < 0 || tap >= hidden_layers)
    throw ConfigError("gan.tap_layer", "tap layer " + std::to_string(tap_layer) +
                                           " outside the teacher's hidden layers");
  const int features = net.widths()[static_cast<std::size_t>(tap) + 1];
  InputLayout layout{features, kTimeEmbeddingWidth, 0};
  std::vector<int> widths{layout.width()};
  widths.insert(widths.end(), head_hidden.begin(), head_hidden.end());
  widths.push_back(1);
  Discriminator d{std::make_shared<const DenseNet>(net), tap, DenseNet(widths, activation, layout),
                  teacher.schedule.num_steps};
  init_fan_in(d.head, init_rng, /*zero_output=*/true);
  return d;
}

double sigmoid(double logit) {
  return logit >= 0 ? 1.0 / (1.0 + std::exp(-logit)) : std::exp(logit) / (1.0 + std::exp(logit));
}

namespace {

// log(sigmoid(l)) = -softplus(-l), computed without overflow.
double log_sigmoid(double l) {
  return l >= 0 ? -std::log1p(std::exp(-l)) : l - std::log1p(std::exp(l));
}

}  // namespace

Eigen::VectorXd disc_logits(const Discriminator& d, const Eigen::MatrixXd& x_t,
                            std::span<const int> timesteps, const Eigen::MatrixXd& condition,
                            DiscriminatorTape* tape) {
  DiscriminatorTape local;
  DiscriminatorTape& tp = tape ? *tape : local;
  const Eigen::MatrixXd in =
      build_input(d.backbone->layout(), x_t, timesteps, d.num_steps, condition);
  d.backbone->forward(in, tp.backbone);
  const Eigen::MatrixXd& features = tp.backbone.post[static_cast<std::size_t>(d.tap_layer)];
  const Eigen::MatrixXd head_in = build_input(d.head.layout(), features, timesteps, d.num_steps);
  tp.raw_logits = d.head.forward(head_in, tp.head).row(0).transpose();
  return tp.raw_logits.cwiseMax(-kLogitClamp).cwiseMin(kLogitClamp);
}

DiscriminatorGradients disc_backward(const Discriminator& d, const DiscriminatorTape& tape,
                                     const Eigen::VectorXd& logit_cotangent, bool input_gradient) {
  Eigen::MatrixXd cot(1, logit_cotangent.size());
  for (Eigen::Index j = 0; j < cot.cols(); ++j)
    cot(0, j) = std::abs(tape.raw_logits[j]) > kLogitClamp ? 0.0 : logit_cotangent[j];
  auto hg = d.head.backward(tape.head, cot);
  DiscriminatorGradients g{std::move(hg.params), {}};
  if (input_gradient) {
    const Eigen::MatrixXd feat_cot = hg.input.topRows(d.head.layout().sample_dim);
    g.x = d.backbone->backward_input_from(tape.backbone, d.tap_layer, feat_cot)
              .topRows(d.sample_dim());
  }
  return g;
}

double disc_prob(const Discriminator& d, const Eigen::VectorXd& x_t, int t,
                 const Eigen::VectorXd& condition) {
  if (t < 1 || t > d.num_steps) throw Error("disc_prob: t must lie in [1, T]");
  const int ts[] = {t};
  const Eigen::MatrixXd c = condition.size() > 0 ? Eigen::MatrixXd(condition) : Eigen::MatrixXd();
  return sigmoid(disc_logits(d, x_t, ts, c)[0]);
}

double density_ratio(const Discriminator& d, const Eigen::VectorXd& x_t, int t,
                     const Eigen::VectorXd& condition) {
  if (t < 1 || t > d.num_steps) throw Error("density_ratio: t must lie in [1, T]");
  const int ts[] = {t};
  const Eigen::MatrixXd c = condition.size() > 0 ? Eigen::MatrixXd(condition) : Eigen::MatrixXd();
  return std::exp(disc_logits(d, x_t, ts, c)[0]);
}

Eigen::VectorXd density_ratio_batch(const Discriminator& d, const Eigen::MatrixXd& x_t,
                                    std::span<const int> timesteps,
                                    const Eigen::MatrixXd& condition) {
  return disc_logits(d, x_t, timesteps, condition).array().exp();
}

GanBatch draw_gan_batch(const MixtureSpec& mix, const StudentModel& m, int batch, Rng& data,
                        Rng& noise, bool conditional, int tau_max) {
  if (batch < 1) throw Error("draw_gan_batch: empty batch");
  const int T = m.schedule.num_steps;
  if (tau_max <= 0) tau_max = T;
  const auto grid = m.grid.denoising_steps();
  GanBatch b;
  MixtureDraw draw = sample_mixture(mix, batch, data);
  b.real = std::move(draw.samples);
  if (conditional) b.condition = one_hot(draw.components, mix.size());
  b.grid_t.resize(static_cast<std::size_t>(batch));
  b.tau.resize(static_cast<std::size_t>(batch));
  for (auto& t : b.grid_t)
    t = grid[static_cast<std::size_t>(noise.uniform_int(0, static_cast<int>(grid.size()) - 1))];
  b.grid_eps = noise.normal_matrix(mix.dim(), batch);
  for (auto& t : b.tau) t = noise.uniform_int(1, tau_max);
  b.tau_eps = noise.normal_matrix(mix.dim(), batch);
  return b;
}

GanLossResult gan_losses(const Discriminator& d, const StudentModel& m, const GanBatch& batch,
                         GanLossForm form, bool student_gradient) {
  const int n = batch.size();
  const double inv_n = 1.0 / n;
  const auto& sched = m.schedule;

  // Student prediction from the grid-noised data.
  const Eigen::MatrixXd x_t = add_noise_batch(batch.real, batch.grid_eps, batch.grid_t, sched);
  Denoiser::Tape stape;
  const Eigen::MatrixXd x0_hat =
      m.denoiser.predict_x0(x_t, batch.grid_t, sched, batch.condition, stape);

  // Real and fake samples noised with the same (tau, eps'), evaluated together.
  Eigen::MatrixXd joint(batch.real.rows(), 2 * n);
  joint.leftCols(n) = add_noise_batch(batch.real, batch.tau_eps, batch.tau, sched);
  joint.rightCols(n) = add_noise_batch(x0_hat, batch.tau_eps, batch.tau, sched);
  std::vector<int> joint_t(batch.tau);
  joint_t.insert(joint_t.end(), batch.tau.begin(), batch.tau.end());
  Eigen::MatrixXd joint_c;
  if (batch.condition.size() > 0) {
    joint_c.resize(batch.condition.rows(), 2 * n);
    joint_c << batch.condition, batch.condition;
  }
  DiscriminatorTape tape;
  const Eigen::VectorXd logits = disc_logits(d, joint, joint_t, joint_c, &tape);

  GanLossResult res;
  auto& rep = res.report;
  Eigen::VectorXd cot_d = Eigen::VectorXd::Zero(2 * n);
  Eigen::VectorXd cot_g = Eigen::VectorXd::Zero(2 * n);
  for (int j = 0; j < n; ++j) {
    const double lr = logits[j];
    const double lf = logits[n + j];
    const double pr = sigmoid(lr);
    const double pf = sigmoid(lf);
    rep.real_prob += pr * inv_n;
    rep.fake_prob += pf * inv_n;
    if (form == GanLossForm::kNonSaturating) {
      rep.loss_d += (-log_sigmoid(lr) - log_sigmoid(-lf)) * inv_n;
      rep.loss_g += -log_sigmoid(lf) * inv_n;
      cot_d[j] = -(1.0 - pr) * inv_n;
      cot_d[n + j] = pf * inv_n;
      cot_g[n + j] = -(1.0 - pf) * inv_n;
    } else {
      rep.loss_d += (log_sigmoid(lr) - log_sigmoid(lf)) * inv_n;
      rep.loss_g += log_sigmoid(lf) * inv_n;
      cot_d[j] = (1.0 - pr) * inv_n;
      cot_d[n + j] = -(1.0 - pf) * inv_n;
      cot_g[n + j] = (1.0 - pf) * inv_n;
    }
  }
  if (!std::isfinite(rep.loss_d) || !std::isfinite(rep.loss_g))
    throw TrainingAborted("gan", "non-finite loss (loss_D " + std::to_string(rep.loss_d) +
                                     ", loss_G " + std::to_string(rep.loss_g) + ")");

  res.head_grad = disc_backward(d, tape, cot_d, false).head;
  rep.grad_norm_d = res.head_grad.norm();

  if (student_gradient) {
    const DiscriminatorGradients gg = disc_backward(d, tape, cot_g, true);
    // d x_tau / d x0_hat = sqrt(abar_tau).
    Eigen::MatrixXd cot_x0 = gg.x.rightCols(n);
    for (int j = 0; j < n; ++j)
      cot_x0.col(j) *= sched.sqrt_alpha_bar(batch.tau[static_cast<std::size_t>(j)]);
    res.student_grad = m.denoiser.backward_x0(stape, cot_x0, sched).params;
    rep.grad_norm_g = res.student_grad.norm();
  }
  return res;
}

HeadLoss head_loss(const Discriminator& d, const Eigen::MatrixXd& real_t,
                   const Eigen::MatrixXd& fake_t, std::span<const int> timesteps,
                   GanLossForm form, const Eigen::MatrixXd& condition) {
  const auto n = real_t.cols();
  if (fake_t.cols() != n || static_cast<Eigen::Index>(timesteps.size()) != n)
    throw ShapeError("head_loss: real, fake and timesteps must have the same batch size");
  Eigen::MatrixXd joint(real_t.rows(), 2 * n);
  joint << real_t, fake_t;
  std::vector<int> ts(timesteps.begin(), timesteps.end());
  ts.insert(ts.end(), timesteps.begin(), timesteps.end());
  Eigen::MatrixXd c;
  if (condition.size() > 0) {
    c.resize(condition.rows(), 2 * n);
    c << condition, condition;
  }
  DiscriminatorTape tape;
  const Eigen::VectorXd logits = disc_logits(d, joint, ts, c, &tape);
  HeadLoss res;
  Eigen::VectorXd cot(2 * n);
  const double inv_n = 1.0 / static_cast<double>(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const double lr = logits[j];
    const double lf = logits[n + j];
    const double pr = sigmoid(lr);
    const double pf = sigmoid(lf);
    res.real_prob += pr * inv_n;
    res.fake_prob += pf * inv_n;
    if (form == GanLossForm::kNonSaturating) {
      res.loss += (-log_sigmoid(lr) - log_sigmoid(-lf)) * inv_n;
      cot[j] = -(1.0 - pr) * inv_n;
      cot[n + j] = pf * inv_n;
    } else {
      res.loss += (log_sigmoid(lr) - log_sigmoid(lf)) * inv_n;
      cot[j] = (1.0 - pr) * inv_n;
      cot[n + j] = -(1.0 - pf) * inv_n;
    }
  }
  res.grad = disc_backward(d, tape, cot, false).head;
  return res;
}

double discriminator_step(Discriminator& d, AdamState& head_opt, const StudentModel& m,
                          const MixtureSpec& mix, int batch, GanLossForm form, bool conditional,
                          Rng& data, Rng& noise) {
  const GanBatch b = draw_gan_batch(mix, m, batch, data, noise, conditional);
  GanLossResult r = gan_losses(d, m, b, form, false);
  adam_step(head_opt, d.head.mutable_params(), r.head_grad);
  return r.report.grad_norm_d;
}

std::vector<GanBatchReport> run_gan_phase(Discriminator& d, AdamState& head_opt, StudentModel& m,
                                          AdamState& student_opt, const MixtureSpec& mix,
                                          const GanPhaseOptions& options, Rng& data, Rng& noise,
                                          GanProgress& progress, int iters,
                                          const GanLogSink& sink) {
  std::vector<GanBatchReport> log;
  log.reserve(static_cast<std::size_t>(std::max(iters, 0)));
  for (int k = 0; k < iters; ++k) {
    double head_norm = 0.0;
    for (int u = 0; u < options.disc_updates; ++u)
      head_norm = discriminator_step(d, head_opt, m, mix, options.batch, options.form,
                                     options.conditional, data, noise);

    const GanBatch b = draw_gan_batch(mix, m, options.batch, data, noise, options.conditional);
    GanLossResult r = gan_losses(d, m, b, options.form, options.update_generator);
    if (options.update_generator) adam_step(student_opt, m.denoiser.net.mutable_params(), r.student_grad);
    if (options.disc_updates > 0) r.report.grad_norm_d = head_norm;

    progress.collapse_streak =
        r.report.fake_prob < options.collapse_threshold ? progress.collapse_streak + 1 : 0;
    const int it = progress.iteration++;
    log.push_back(r.report);
    if (sink) sink(it, r.report);
    if (progress.collapse_streak >= options.collapse_patience)
      throw TrainingAborted("gan", "fake probability below " +
                                       std::to_string(options.collapse_threshold) + " for " +
                                       std::to_string(progress.collapse_streak) +
                                       " consecutive iterations (iteration " +
                                       std::to_string(it) + ")");
  }
  return log;
}

}  // namespace dmdlab
