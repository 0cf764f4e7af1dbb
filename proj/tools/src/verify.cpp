#include "dmdlab/tools/verify.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "dmdlab/adversarial.hpp"
#include "dmdlab/dmd.hpp"
#include "dmdlab/error.hpp"
#include "dmdlab/finite_diff.hpp"
#include "dmdlab/mixture.hpp"
#include "dmdlab/schedule.hpp"
#include "dmdlab/teacher.hpp"

namespace dmdlab::tools {

namespace {

std::string label(const std::string& a, double v) {
  return a + "=" + std::to_string(static_cast<long long>(std::lround(v)));
}

MixtureSpec bimodal_1d() {
  return MixtureSpec::isotropic({0.3, 0.7},
                                {Eigen::VectorXd::Constant(1, -1.5), Eigen::VectorXd::Constant(1, 1.0)},
                                0.5);
}

std::vector<CheckResult> score_suite() {
  std::vector<CheckResult> out;
  const Schedule sched = make_schedule(1000, ScheduleKind::kLinear, 1e-4, 0.02);
  const int T = sched.num_steps;
  for (int d : {1, 2}) {
    const MixtureSpec mix = d == 1 ? bimodal_1d() : MixtureSpec::ring(8, 2.0, 0.1);
    double max_var = 0.0;
    for (const auto& c : mix.covariances) max_var = std::max(max_var, c.diagonal().maxCoeff());
    for (int t : {1, T / 4, T / 2, T}) {
      const double ab = sched.alpha_bar(t);
      const double s = std::sqrt(ab * max_var + 1.0 - ab);
      Eigen::VectorXd lo = Eigen::VectorXd::Constant(d, 1e300);
      Eigen::VectorXd hi = Eigen::VectorXd::Constant(d, -1e300);
      for (const auto& m : mix.means) {
        lo = lo.cwiseMin(std::sqrt(ab) * m);
        hi = hi.cwiseMax(std::sqrt(ab) * m);
      }
      lo.array() -= 2.576 * s;
      hi.array() += 2.576 * s;
      const int per_dim = 10;
      const int total = d == 1 ? per_dim : per_dim * per_dim;
      double worst = 0.0;
      for (int i = 0; i < total; ++i) {
        Eigen::VectorXd x(d);
        x[0] = lo[0] + (hi[0] - lo[0]) * (i % per_dim) / (per_dim - 1.0);
        if (d == 2) x[1] = lo[1] + (hi[1] - lo[1]) * (i / per_dim) / (per_dim - 1.0);
        const Eigen::VectorXd a = analytic_score(x, t, mix, sched);
        const Eigen::VectorXd fd = finite_diff_grad(
            [&](const Eigen::VectorXd& y) { return noisy_log_density(y, t, mix, sched); }, x, 1e-5 * s);
        worst = std::max(worst, (a - fd).norm() / std::max(a.norm(), 1e-3));
      }
      out.push_back({"scores", "d=" + std::to_string(d) + " " + label("t", t), worst, 1e-3, worst < 1e-3});
    }
  }
  return out;
}

// E over (z, eps) ~ N(0, I_2) of the pipeline cotangent for x0 = theta + s z.
double expected_cotangent(const ScoreProvider& sp, const RatioFn& ratio, double theta, double s,
                          int tau, WeightMode mode) {
  const GaussHermite gh = gauss_hermite(40);
  const Eigen::Index n = gh.nodes.size();
  Eigen::MatrixXd x0(1, n * n), eps(1, n * n);
  Eigen::VectorXd w(n * n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) {
      x0(0, i * n + j) = theta + s * gh.nodes[i];
      eps(0, i * n + j) = gh.nodes[j];
      w[i * n + j] = gh.weights[i] * gh.weights[j];
    }
  const std::vector<int> taus(static_cast<std::size_t>(n * n), tau);
  DmdOptions opt{mode, /*chain_sqrt_alpha=*/true, false};
  const DmdGradReport rep = dmd_cotangents(sp, ratio, x0, taus, eps, opt);
  return rep.cotangents.row(0).dot(w);
}

std::vector<CheckResult> gradient_suite() {
  std::vector<CheckResult> out;
  const Schedule sched = make_schedule(1000, ScheduleKind::kLinear, 1e-4, 0.02);
  const MixtureSpec p = bimodal_1d();
  const double theta = -0.4, s = 0.6, h = 1e-4;
  const QuadratureGrid grid{-9.0, 9.0, 8001};
  auto q_of = [&](double th) {
    return MixtureSpec::isotropic({1.0}, {Eigen::VectorXd::Constant(1, th)}, s);
  };
  for (int t : {100, 250, 500, 750}) {
    auto logp = [&](double x) { return noisy_log_density(Eigen::VectorXd::Constant(1, x), t, p, sched); };
    auto value = [&](double th, bool soften) {
      const MixtureSpec q = q_of(th);
      auto logq = [&](double x) { return noisy_log_density(Eigen::VectorXd::Constant(1, x), t, q, sched); };
      return soften ? soften_rkl_value(logp, logq, grid) : reverse_kl_value(logp, logq, grid);
    };
    const MixtureSpec q = q_of(theta);
    const ScoreProvider sp{ScoreSource::analytic(p), ScoreSource::analytic(q), sched};
    const RatioFn bayes = [&](const Eigen::MatrixXd& x, std::span<const int> ts, const Eigen::MatrixXd&) {
      Eigen::VectorXd r(x.cols());
      for (Eigen::Index j = 0; j < x.cols(); ++j)
        r[j] = std::exp(noisy_log_density(x.col(j), ts[static_cast<std::size_t>(j)], p, sched) -
                        noisy_log_density(x.col(j), ts[static_cast<std::size_t>(j)], q, sched));
      return r;
    };
    for (bool soften : {false, true}) {
      const double fd = (value(theta + h, soften) - value(theta - h, soften)) / (2.0 * h);
      const double g = expected_cotangent(sp, bayes, theta, s, t,
                                          soften ? WeightMode::kAppendix : WeightMode::kPlain);
      const double rel = std::abs(g - fd) / std::abs(fd);
      out.push_back({"gradients", std::string(soften ? "softened " : "reverse-kl ") + label("t", t),
                     rel, 1e-2, rel < 1e-2});
    }
  }
  return out;
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

std::vector<CheckResult> ratio_suite() {
  const Schedule sched = make_schedule(1000, ScheduleKind::kLinear, 1e-4, 0.02);
  const int T = sched.num_steps;
  const MixtureSpec real = MixtureSpec::isotropic({1.0}, {Eigen::VectorXd::Zero(1)}, 1.0);
  const MixtureSpec fake = MixtureSpec::isotropic({1.0}, {Eigen::VectorXd::Constant(1, 2.0)}, 1.0);

  Rng init = Rng::stream(11, "init");
  Rng data = Rng::stream(11, "data");
  TeacherBundle teacher = make_teacher_bundle(real, sched, {32, 32}, Activation::kAlgebraic,
                                              Prediction::kSample, false, init);
  DenoiserTrainOptions topt;
  topt.iters = 1500;
  topt.batch = 256;
  topt.adam.lr = 2e-3;
  train_teacher_denoiser(teacher, topt, data);

  Discriminator d = make_discriminator(teacher, -1, {32}, Activation::kAlgebraic, init);
  AdamConfig hc;
  hc.lr = 2e-3;
  AdamState opt = make_adam(d.head.num_params(), hc);
  const int iters = 3000, batch = 256;
  std::vector<int> ts(static_cast<std::size_t>(batch));
  for (int it = 0; it < iters; ++it) {
    opt.config.lr = hc.lr * (0.02 + 0.98 * 0.5 * (1.0 + std::cos(std::numbers::pi * it / iters)));
    const Eigen::MatrixXd xr = sample_mixture(real, batch, data).samples;
    const Eigen::MatrixXd xf = sample_mixture(fake, batch, data).samples;
    for (auto& t : ts) t = data.uniform_int(1, T);
    const Eigen::MatrixXd nr = add_noise_batch(xr, data.normal_matrix(1, batch), ts, sched);
    const Eigen::MatrixXd nf = add_noise_batch(xf, data.normal_matrix(1, batch), ts, sched);
    const HeadLoss l = head_loss(d, nr, nf, ts, GanLossForm::kNonSaturating);
    adam_step(opt, d.head.mutable_params(), l.grad);
  }

  // Central 90% of (p_t + q_t) / 2 at t = T/4; both marginals have unit variance.
  const int t = T / 4;
  const double shift = 2.0 * sched.sqrt_alpha_bar(t);
  auto cdf = [&](double x) { return 0.5 * (normal_cdf(x) + normal_cdf(x - shift)); };
  auto quantile = [&](double u) {
    double a = -10.0, b = 12.0;
    for (int i = 0; i < 200; ++i) {
      const double m = 0.5 * (a + b);
      (cdf(m) < u ? a : b) = m;
    }
    return 0.5 * (a + b);
  };
  const double lo = quantile(0.05), hi = quantile(0.95);
  const int m = 201;
  Eigen::MatrixXd x(1, m);
  for (int i = 0; i < m; ++i) x(0, i) = lo + (hi - lo) * i / (m - 1.0);
  const std::vector<int> tt(static_cast<std::size_t>(m), t);
  const Eigen::VectorXd log_est = disc_logits(d, x, tt);
  double err = 0.0;
  for (int i = 0; i < m; ++i) {
    const Eigen::VectorXd xi = x.col(i);
    const double log_true = noisy_log_density(xi, t, real, sched) - noisy_log_density(xi, t, fake, sched);
    err += std::abs(log_est[i] - log_true) / m;
  }
  return {{"ratio", "mean |log r_est - log r_true| at t=T/4", err, 0.2, err < 0.2}};
}

std::vector<CheckResult> quadrature_suite() {
  std::vector<CheckResult> out;
  auto gauss = [](double mu, double s) {
    return [=](double x) {
      const double z = (x - mu) / s;
      return -0.5 * z * z - std::log(s) - 0.5 * std::log(2.0 * std::numbers::pi);
    };
  };
  const double m1 = 0.7, s1 = 0.8, m2 = -0.2, s2 = 1.3;
  const double closed = std::log(s2 / s1) + (s1 * s1 + (m1 - m2) * (m1 - m2)) / (2.0 * s2 * s2) - 0.5;
  double prev = 0.0;
  for (int n : {201, 801, 3201}) {
    const double v = reverse_kl_value(gauss(m2, s2), gauss(m1, s1), {-12.0, 12.0, n});
    prev = std::abs(v - closed);
  }
  out.push_back({"quadrature", "reverse KL vs closed form (n=3201)", prev, 1e-9, prev < 1e-9});

  // Coarse grids, where the step-size error is still visible.
  std::vector<double> vals;
  for (int n : {41, 81, 161, 3201})
    vals.push_back(soften_rkl_value(gauss(m2, s2), gauss(m1, s1), {-12.0, 12.0, n}));
  const double d1 = std::abs(vals[1] - vals[0]);
  const double d2 = std::abs(vals[2] - vals[1]);
  const double fine = std::abs(vals[3] - vals[2]);
  out.push_back({"quadrature", "softened value change n=161 -> 3201", fine, 1e-8, fine < 1e-8});
  const double order = d2 > 0.0 ? d1 / d2 : 1e300;
  out.push_back({"quadrature", "softened value error shrink per halving (>= 8)", order, 8.0, order >= 8.0});

  const double self = std::abs(soften_rkl_value(gauss(m1, s1), gauss(m1, s1), {-12.0, 12.0, 801}));
  out.push_back({"quadrature", "softened value of identical densities", self, 1e-12, self < 1e-12});

  bool threw = false;
  try {
    soften_rkl_value(gauss(m2, s2), gauss(m1, s1), {-1.0, 1.0, 801});
  } catch (const Error&) {
    threw = true;
  }
  out.push_back({"quadrature", "truncated grid rejected", threw ? 1.0 : 0.0, 1.0, threw});
  return out;
}

}  // namespace

std::vector<std::string> verify_suite_names() { return {"scores", "gradients", "ratio", "quadrature"}; }

std::vector<CheckResult> run_verify_suite(const std::string& suite) {
  if (suite == "scores") return score_suite();
  if (suite == "gradients") return gradient_suite();
  if (suite == "ratio") return ratio_suite();
  if (suite == "quadrature") return quadrature_suite();
  std::string names;
  for (const auto& n : verify_suite_names()) names += (names.empty() ? "" : ", ") + n;
  throw ConfigError("suite", "unknown suite '" + suite + "' (valid: " + names + ", all)");
}

}  // namespace dmdlab::tools
