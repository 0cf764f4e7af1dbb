#pragma once

#include <functional>
#include <span>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "dmdlab/mixture.hpp"
#include "dmdlab/rng.hpp"
#include "dmdlab/schedule.hpp"

namespace dmdlab {

struct CoverageReport {
  std::vector<int> hits;  // samples within `radius` of their nearest mode
  double coverage = 0.0;
  double radius = 3.0;
  int min_hits = 0;
  int samples = 0;
};

/// max(5, ceil(0.1 n / K)).
int default_min_hits(int samples, int modes);

/// Each column is assigned to the mode with the smallest Mahalanobis distance
/// and counts as a hit when that distance is <= radius. `min_hits` < 0 selects
/// default_min_hits. Throws Error on an empty sample set.
CoverageReport mode_coverage(const Eigen::MatrixXd& samples, const MixtureSpec& mix,
                             double radius = 3.0, int min_hits = -1);

/// V-statistic 2 E|a - b| - E|a - a'| - E|b - b'| over all pairs. Throws Error
/// unless both sets have at least two columns.
double energy_distance(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

/// As above on at most `max_points` columns of each set, subsampled without
/// replacement with `rng` when larger.
double energy_distance(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, Rng& rng,
                       int max_points);

/// Mean over random unit directions of the 1D W1 distance between projections.
/// Unequal sizes are compared through matched quantiles.
double sliced_wasserstein(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, Rng& rng,
                          int directions = 64);

struct DistanceReport {
  double energy = 0.0;
  double sliced_w = 0.0;
  int size_a = 0;
  int size_b = 0;
};

DistanceReport distance_report(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, Rng& rng,
                               int directions = 64, int energy_max_points = 0);

using ScoreFn = std::function<Eigen::MatrixXd(const Eigen::MatrixXd& x, std::span<const int> t)>;

struct ScoreErrorMap {
  Eigen::MatrixXd points;  // d x m grid points
  Eigen::VectorXd error;   // |provider - analytic| per point
  double mean = 0.0;
  double max = 0.0;
};

/// Errors on a square grid of `resolution`^d points over [lo, hi]^d (d <= 2).
ScoreErrorMap score_error_map(const ScoreFn& provider, const MixtureSpec& mix,
                              const Schedule& sched, int t, double lo, double hi,
                              int resolution);

struct SpeedupReport {
  int student_evals = 0;
  int teacher_evals = 0;
  double count_ratio = 0.0;       // teacher / student
  double count_reduction = 0.0;   // 1 - student / teacher
  double wall_ratio = 0.0;        // teacher / student, 0 when not measured
  bool count_ratio_at_least_10 = false;
};

SpeedupReport speedup_report(int student_evals, int teacher_evals, double wall_student = 0.0,
                             double wall_teacher = 0.0);

nlohmann::json to_json(const CoverageReport& r);
nlohmann::json to_json(const DistanceReport& r);
nlohmann::json to_json(const SpeedupReport& r);

}  // namespace dmdlab
