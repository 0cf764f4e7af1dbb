#include <doctest.h>

#include <cmath>
#include <vector>

#include "dmdlab/error.hpp"
#include "dmdlab/eval.hpp"
#include "dmdlab/mixture.hpp"
#include "dmdlab/rng.hpp"
#include "dmdlab/schedule.hpp"

using namespace dmdlab;

TEST_CASE("energy distance: symmetric, zero on identical sets") {
  Rng rng(1);
  const Eigen::MatrixXd a = rng.normal_matrix(2, 300);
  const Eigen::MatrixXd b = rng.normal_matrix(2, 300).array() + 0.5;
  CHECK(energy_distance(a, b) == energy_distance(b, a));
  CHECK(energy_distance(a, a) == 0.0);
  CHECK(energy_distance(a, b) > 0.0);
  const Eigen::MatrixXd c = rng.normal_matrix(2, 170);
  CHECK(energy_distance(a, c) == doctest::Approx(energy_distance(c, a)).epsilon(1e-12));
}

TEST_CASE("energy distance separates N(0,1) from N(3,1)") {
  Rng rng(2);
  const Eigen::MatrixXd a = rng.normal_matrix(1, 1000);
  const Eigen::MatrixXd b = rng.normal_matrix(1, 1000).array() + 3.0;
  // Population value 2E|X-Y| - 2E|X-X'| with X-Y ~ N(3,2), X-X' ~ N(0,2): about 3.4.
  const double e = energy_distance(a, b);
  CHECK(e > 1.0);
  const double s2 = std::sqrt(2.0);
  const double exy = s2 * std::sqrt(2.0 / M_PI) * std::exp(-9.0 / 4.0) + 3.0 * std::erf(3.0 / (s2 * s2));
  const double exx = s2 * std::sqrt(2.0 / M_PI);
  CHECK(e == doctest::Approx(2 * exy - 2 * exx).epsilon(0.1));
}

TEST_CASE("energy distance against a brute-force reference") {
  Rng rng(3);
  const Eigen::MatrixXd a = rng.normal_matrix(2, 17);
  const Eigen::MatrixXd b = rng.normal_matrix(2, 23);
  double ab = 0, aa = 0, bb = 0;
  for (int i = 0; i < 17; ++i)
    for (int j = 0; j < 23; ++j) ab += (a.col(i) - b.col(j)).norm();
  for (int i = 0; i < 17; ++i)
    for (int j = 0; j < 17; ++j) aa += (a.col(i) - a.col(j)).norm();
  for (int i = 0; i < 23; ++i)
    for (int j = 0; j < 23; ++j) bb += (b.col(i) - b.col(j)).norm();
  const double ref = 2 * ab / (17.0 * 23) - aa / (17.0 * 17) - bb / (23.0 * 23);
  CHECK(energy_distance(a, b) == doctest::Approx(ref).epsilon(1e-12));
  CHECK_THROWS_AS(energy_distance(a.leftCols(1), b), Error);
}

TEST_CASE("subsampled energy distance is deterministic given the stream") {
  Rng g(4);
  const Eigen::MatrixXd a = g.normal_matrix(2, 500);
  const Eigen::MatrixXd b = g.normal_matrix(2, 500);
  Rng r1(9), r2(9);
  CHECK(energy_distance(a, b, r1, 100) == energy_distance(a, b, r2, 100));
  Rng r3(9);
  CHECK(energy_distance(a, b, r3, 0) == energy_distance(a, b));
}

TEST_CASE("sliced Wasserstein of a shift equals the mean projected shift") {
  Rng g(5);
  const Eigen::MatrixXd a = g.normal_matrix(2, 400);
  Eigen::MatrixXd b = a;
  b.row(0).array() += 1.0;
  Rng r(1);
  const double sw = sliced_wasserstein(a, b, r, 2000);
  // E|cos(theta)| over uniform directions is 2/pi.
  CHECK(sw == doctest::Approx(2.0 / M_PI).epsilon(0.03));
  Rng r2(1);
  CHECK(sliced_wasserstein(a, a, r2, 64) == 0.0);
}

TEST_CASE("coverage of exact mixture samples is 1") {
  const MixtureSpec mix = MixtureSpec::ring(8, 2.0, 0.1);
  Rng rng(6);
  const auto draw = sample_mixture(mix, 10000, rng);
  const CoverageReport r = mode_coverage(draw.samples, mix);
  CHECK(r.coverage == 1.0);
  CHECK(r.min_hits == 125);
  CHECK(r.samples == 10000);
}

TEST_CASE("coverage of a single collapsed mode is 1/K") {
  const MixtureSpec mix = MixtureSpec::ring(8, 2.0, 0.1);
  Eigen::MatrixXd x(2, 1000);
  Rng rng(7);
  for (int j = 0; j < 1000; ++j) x.col(j) = mix.means[3] + 0.05 * rng.normal_matrix(2, 1).col(0);
  const CoverageReport r = mode_coverage(x, mix);
  CHECK(r.coverage == doctest::Approx(1.0 / 8));
  CHECK(r.hits[3] == 1000);
}

TEST_CASE("coverage of far-away samples is 0") {
  const MixtureSpec mix = MixtureSpec::ring(8, 2.0, 0.1);
  const Eigen::MatrixXd x = Eigen::MatrixXd::Constant(2, 500, 30.0);
  CHECK(mode_coverage(x, mix).coverage == 0.0);
  // Origin: every mode is 20 standard deviations away.
  CHECK(mode_coverage(Eigen::MatrixXd::Zero(2, 500), mix).coverage == 0.0);
  CHECK_THROWS_AS(mode_coverage(Eigen::MatrixXd(2, 0), mix), Error);
}

TEST_CASE("minimum hit count") {
  CHECK(default_min_hits(10000, 8) == 125);
  CHECK(default_min_hits(100, 8) == 5);
  CHECK(default_min_hits(1001, 10) == 11);
}

TEST_CASE("speedup accounting for 4 vs 50 evaluations") {
  const SpeedupReport s = speedup_report(4, 50, 0.1, 1.0);
  CHECK(s.count_ratio == doctest::Approx(12.5));
  CHECK(s.count_reduction == doctest::Approx(0.92));
  CHECK(s.count_ratio_at_least_10);
  CHECK(s.wall_ratio == doctest::Approx(10.0));
  CHECK(speedup_report(4, 50).wall_ratio == 0.0);
}

TEST_CASE("score error map is zero for the analytic provider") {
  const MixtureSpec mix = MixtureSpec::ring(4, 1.0, 0.2);
  const Schedule s = make_schedule(1000);
  const ScoreFn exact = [&](const Eigen::MatrixXd& x, std::span<const int> t) {
    return analytic_score_batch(x, t, mix, s);
  };
  const ScoreErrorMap m = score_error_map(exact, mix, s, 100, -2, 2, 9);
  CHECK(m.points.cols() == 81);
  CHECK(m.max == 0.0);
}
