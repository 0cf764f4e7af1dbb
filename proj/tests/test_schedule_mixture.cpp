#include <doctest.h>

#include <cmath>
#include <vector>

#include "dmdlab/error.hpp"
#include "dmdlab/finite_diff.hpp"
#include "dmdlab/mixture.hpp"
#include "dmdlab/rng.hpp"
#include "dmdlab/schedule.hpp"
#include "dmdlab/student.hpp"

using namespace dmdlab;

namespace {

Schedule linear() { return make_schedule(1000, ScheduleKind::kLinear, 1e-4, 0.02); }

MixtureSpec skewed_1d() {
  return MixtureSpec::isotropic({0.25, 0.75},
                                {Eigen::VectorXd::Constant(1, -2.0), Eigen::VectorXd::Constant(1, 1.5)},
                                0.4);
}

}  // namespace

TEST_CASE("linear schedule matches the running product of 1 - beta") {
  const Schedule s = linear();
  REQUIRE(s.alphas_bar.size() == 1001);
  CHECK(s.alpha_bar(0) == 1.0);
  double prod = 1.0;
  for (int t = 1; t <= 1000; ++t) {
    const double beta = 1e-4 + (0.02 - 1e-4) * (t - 1) / 999.0;
    prod *= 1.0 - beta;
    CHECK(s.alpha_bar(t) == doctest::Approx(prod).epsilon(1e-12));
    CHECK(s.alpha_bar(t) < s.alpha_bar(t - 1));
    CHECK(s.sigma(t) == doctest::Approx(std::sqrt(1.0 - prod)).epsilon(1e-12));
  }
  CHECK(s.alpha_bar(1000) < 1e-4);
}

TEST_CASE("cosine schedule stays positive and decreasing") {
  const Schedule s = make_schedule(1000, ScheduleKind::kCosine);
  for (int t = 1; t <= 1000; ++t) {
    CHECK(s.alpha_bar(t) > 0.0);
    CHECK(s.alpha_bar(t) < s.alpha_bar(t - 1));
  }
}

TEST_CASE("timestep bounds are enforced") {
  const Schedule s = linear();
  CHECK_THROWS_AS(s.check_timestep(-1), Error);
  CHECK_THROWS_AS(s.check_timestep(1001), Error);
  CHECK_NOTHROW(s.check_timestep(0));
}

TEST_CASE("noising, velocity and score conversions agree") {
  const Schedule s = linear();
  Rng rng(3);
  const Eigen::VectorXd x0 = rng.normal_matrix(2, 1).col(0);
  const Eigen::VectorXd eps = rng.normal_matrix(2, 1).col(0);
  for (int t : {1, 10, 500, 1000}) {
    const NoisySample n = add_noise(x0, eps, t, s);
    CHECK((n.x - (s.sqrt_alpha_bar(t) * x0 + s.sigma(t) * eps)).norm() < 1e-14);
    const Eigen::VectorXd v = velocity_target(x0, eps, t, s);
    CHECK((v_to_x0(n.x, v, t, s) - x0).norm() < 1e-12);
    // With the true x0 the implied score is -eps / sigma.
    const Eigen::VectorXd sc = score_from_denoiser(n.x, x0, t, s);
    CHECK((sc + eps / s.sigma(t)).norm() < 1e-9 * (1.0 + eps.norm() / s.sigma(t)));
  }
  CHECK_THROWS(score_from_denoiser(x0, x0, 0, s));
}

TEST_CASE("grid for T=1000, Q=4") {
  const FewStepGrid g = FewStepGrid::uniform(1000, 4);
  CHECK(g.steps == std::vector<int>{0, 249, 499, 749, 999});
  CHECK(g.num_denoising() == 4);
  CHECK_NOTHROW(g.validate(1000));
  CHECK_THROWS_AS((FewStepGrid{{1, 5}}).validate(1000), ConfigError);
  CHECK_THROWS_AS((FewStepGrid{{0, 5, 5}}).validate(1000), ConfigError);
  CHECK_THROWS_AS((FewStepGrid{{0, 1001}}).validate(1000), ConfigError);
}

TEST_CASE("mixture validation") {
  MixtureSpec m = skewed_1d();
  CHECK_NOTHROW(m.validate());
  m.weights = {0.5, 0.6};
  CHECK_THROWS_AS(m.validate(), ConfigError);
  MixtureSpec bad = skewed_1d();
  bad.covariances[0](0, 0) = -1.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("noisy density of a single Gaussian is the closed form") {
  const Schedule s = linear();
  const MixtureSpec g = MixtureSpec::isotropic({1.0}, {Eigen::VectorXd::Constant(1, 0.7)}, 0.3);
  for (int t : {0, 1, 250, 1000}) {
    const double ab = s.alpha_bar(t);
    const double var = ab * 0.09 + 1.0 - ab;
    const double mean = std::sqrt(ab) * 0.7;
    for (double x : {-2.0, 0.0, 0.5, 3.0}) {
      const double ref = -0.5 * std::log(2.0 * M_PI * var) - 0.5 * (x - mean) * (x - mean) / var;
      CHECK(noisy_log_density(Eigen::VectorXd::Constant(1, x), t, g, s) ==
            doctest::Approx(ref).epsilon(1e-12));
    }
  }
}

TEST_CASE("analytic score is the gradient of the log density") {
  const Schedule s = linear();
  for (const MixtureSpec& mix : {skewed_1d(), MixtureSpec::ring(8, 2.0, 0.1)}) {
    Rng rng(5);
    for (int t : {1, 100, 600, 1000}) {
      for (int k = 0; k < 10; ++k) {
        const Eigen::VectorXd x = 2.0 * rng.normal_matrix(mix.dim(), 1).col(0);
        const Eigen::VectorXd a = analytic_score(x, t, mix, s);
        const Eigen::VectorXd fd = finite_diff_grad(
            [&](const Eigen::VectorXd& y) { return noisy_log_density(y, t, mix, s); }, x, 1e-5);
        CHECK((a - fd).norm() <= 1e-5 * std::max(1.0, a.norm()));
      }
    }
  }
}

TEST_CASE("posterior mean satisfies the score-denoiser relation") {
  const Schedule s = linear();
  const MixtureSpec mix = MixtureSpec::ring(8, 2.0, 0.1);
  Rng rng(9);
  for (int t : {5, 250, 900}) {
    const NoisyMixture nm(mix, s.alpha_bar(t));
    for (int k = 0; k < 20; ++k) {
      const Eigen::VectorXd x = 1.5 * rng.normal_matrix(2, 1).col(0);
      const Eigen::VectorXd tweedie = score_from_denoiser(x, nm.posterior_mean(x), t, s);
      const Eigen::VectorXd a = analytic_score(x, t, mix, s);
      CHECK((tweedie - a).norm() <= 1e-8 * std::max(1.0, a.norm()));
      CHECK(nm.responsibilities(x).sum() == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
}

TEST_CASE("batched score matches the per-sample score") {
  const Schedule s = linear();
  const MixtureSpec mix = MixtureSpec::ring(4, 1.0, 0.2);
  Rng rng(1);
  const Eigen::MatrixXd x = rng.normal_matrix(2, 6);
  const std::vector<int> ts{1, 2, 50, 400, 999, 1000};
  const Eigen::MatrixXd b = analytic_score_batch(x, ts, mix, s);
  for (int j = 0; j < 6; ++j)
    CHECK((b.col(j) - analytic_score(x.col(j), ts[static_cast<std::size_t>(j)], mix, s)).norm() == 0.0);
}

TEST_CASE("far-away points keep a finite score") {
  const Schedule s = linear();
  const MixtureSpec mix = MixtureSpec::ring(8, 2.0, 0.1);
  const Eigen::VectorXd x = Eigen::Vector2d(80.0, -60.0);
  const Eigen::VectorXd sc = analytic_score(x, 1, mix, s);
  CHECK(sc.allFinite());
  CHECK(std::isfinite(noisy_log_density(x, 1, mix, s)));
}

TEST_CASE("mixture sampling follows the weights") {
  const MixtureSpec mix = MixtureSpec::ring(4, 2.0, 0.05, {1.0, 2.0, 3.0, 4.0});
  Rng rng(17);
  const MixtureDraw d = sample_mixture(mix, 40000, rng);
  std::vector<int> counts(4, 0);
  for (int c : d.components) ++counts[static_cast<std::size_t>(c)];
  for (int k = 0; k < 4; ++k) CHECK(counts[static_cast<std::size_t>(k)] / 40000.0 ==
                                    doctest::Approx((k + 1) / 10.0).epsilon(0.05));
  for (Eigen::Index j = 0; j < 100; ++j)
    CHECK((d.samples.col(j) - mix.means[static_cast<std::size_t>(d.components[static_cast<std::size_t>(j)])]).norm() < 0.5);
}

TEST_CASE("named streams are reproducible and distinct") {
  Rng a = Rng::stream(4, "data");
  Rng b = Rng::stream(4, "data");
  Rng c = Rng::stream(4, "noise");
  const double va = a.normal();
  CHECK(va == b.normal());
  CHECK(va != c.normal());
  const std::string st = a.state();
  const double next = a.uniform();
  Rng d(0);
  d.set_state(st);
  CHECK(d.uniform() == next);
}
