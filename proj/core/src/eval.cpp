#include "dmdlab/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "dmdlab/error.hpp"

namespace dmdlab {

int default_min_hits(int samples, int modes) {
  const double frac = 0.1 * samples / std::max(modes, 1);
  return std::max(5, static_cast<int>(std::ceil(frac - 1e-12)));
}

CoverageReport mode_coverage(const Eigen::MatrixXd& samples, const MixtureSpec& mix,
                             double radius, int min_hits) {
  if (samples.cols() == 0) throw Error("mode_coverage: empty sample set");
  if (samples.rows() != mix.dim()) throw ShapeError("mode_coverage: sample dimension mismatch");
  const int K = mix.size();
  CoverageReport rep;
  rep.radius = radius;
  rep.samples = static_cast<int>(samples.cols());
  rep.min_hits = min_hits < 0 ? default_min_hits(rep.samples, K) : min_hits;
  rep.hits.assign(static_cast<std::size_t>(K), 0);

  std::vector<Eigen::LLT<Eigen::MatrixXd>> chol;
  chol.reserve(static_cast<std::size_t>(K));
  for (const auto& c : mix.covariances) chol.emplace_back(c);

  for (Eigen::Index j = 0; j < samples.cols(); ++j) {
    double best = std::numeric_limits<double>::infinity();
    int arg = -1;
    for (int k = 0; k < K; ++k) {
      const Eigen::VectorXd diff = samples.col(j) - mix.means[static_cast<std::size_t>(k)];
      const double m2 = chol[static_cast<std::size_t>(k)].matrixL().solve(diff).squaredNorm();
      if (m2 < best) {
        best = m2;
        arg = k;
      }
    }
    if (arg >= 0 && std::sqrt(best) <= radius) ++rep.hits[static_cast<std::size_t>(arg)];
  }
  int covered = 0;
  for (int h : rep.hits) covered += h >= rep.min_hits ? 1 : 0;
  rep.coverage = static_cast<double>(covered) / K;
  return rep;
}

namespace {

// Sum of Euclidean distances over all ordered pairs (i, j).
double pair_distance_sum(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < a.cols(); ++i)
    total += (b.colwise() - a.col(i)).colwise().norm().sum();
  return total;
}

Eigen::MatrixXd subsample(const Eigen::MatrixXd& x, Rng& rng, int max_points) {
  if (max_points <= 0 || x.cols() <= max_points) return x;
  std::vector<int> idx(static_cast<std::size_t>(x.cols()));
  std::iota(idx.begin(), idx.end(), 0);
  // Partial Fisher-Yates.
  for (int i = 0; i < max_points; ++i) {
    const int j = rng.uniform_int(i, static_cast<int>(idx.size()) - 1);
    std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
  }
  Eigen::MatrixXd out(x.rows(), max_points);
  for (int i = 0; i < max_points; ++i) out.col(i) = x.col(idx[static_cast<std::size_t>(i)]);
  return out;
}

}  // namespace

double energy_distance(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  if (a.cols() < 2 || b.cols() < 2) throw Error("energy_distance: need at least two samples per set");
  if (a.rows() != b.rows()) throw ShapeError("energy_distance: dimension mismatch");
  const double na = static_cast<double>(a.cols());
  const double nb = static_cast<double>(b.cols());
  // Arranged so that swapping a and b gives a bit-identical result.
  double ab;
  if (a.cols() == b.cols())
    ab = 0.5 * (pair_distance_sum(a, b) + pair_distance_sum(b, a));
  else
    ab = a.cols() < b.cols() ? pair_distance_sum(a, b) : pair_distance_sum(b, a);
  const double aa = pair_distance_sum(a, a) / (na * na);
  const double bb = pair_distance_sum(b, b) / (nb * nb);
  const double ed = 2.0 * ab / (na * nb) - (aa + bb);
  return std::max(ed, 0.0);
}

double energy_distance(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, Rng& rng,
                       int max_points) {
  return energy_distance(subsample(a, rng, max_points), subsample(b, rng, max_points));
}

double sliced_wasserstein(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, Rng& rng,
                          int directions) {
  if (a.cols() < 1 || b.cols() < 1) throw Error("sliced_wasserstein: empty sample set");
  if (a.rows() != b.rows()) throw ShapeError("sliced_wasserstein: dimension mismatch");
  if (directions < 1) throw Error("sliced_wasserstein: need at least one direction");
  const Eigen::Index d = a.rows();
  const Eigen::Index m = std::max(a.cols(), b.cols());
  double total = 0.0;
  for (int k = 0; k < directions; ++k) {
    Eigen::VectorXd u = rng.normal_matrix(static_cast<int>(d), 1).col(0);
    u /= u.norm();
    Eigen::VectorXd pa = (u.transpose() * a).transpose();
    Eigen::VectorXd pb = (u.transpose() * b).transpose();
    std::sort(pa.data(), pa.data() + pa.size());
    std::sort(pb.data(), pb.data() + pb.size());
    double w = 0.0;
    for (Eigen::Index i = 0; i < m; ++i) {
      const double q = (i + 0.5) / static_cast<double>(m);
      const auto ia = std::min<Eigen::Index>(static_cast<Eigen::Index>(q * pa.size()), pa.size() - 1);
      const auto ib = std::min<Eigen::Index>(static_cast<Eigen::Index>(q * pb.size()), pb.size() - 1);
      w += std::abs(pa[ia] - pb[ib]);
    }
    total += w / static_cast<double>(m);
  }
  return total / directions;
}

DistanceReport distance_report(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, Rng& rng,
                               int directions, int energy_max_points) {
  DistanceReport r;
  r.size_a = static_cast<int>(a.cols());
  r.size_b = static_cast<int>(b.cols());
  r.energy = energy_distance(a, b, rng, energy_max_points);
  r.sliced_w = sliced_wasserstein(a, b, rng, directions);
  return r;
}

ScoreErrorMap score_error_map(const ScoreFn& provider, const MixtureSpec& mix,
                              const Schedule& sched, int t, double lo, double hi,
                              int resolution) {
  if (t < 1) throw Error("score_error_map: t must be >= 1");
  const int d = mix.dim();
  if (d < 1 || d > 2) throw Error("score_error_map: grid maps support d = 1 or 2");
  if (resolution < 2) throw Error("score_error_map: resolution must be >= 2");
  const int m = d == 1 ? resolution : resolution * resolution;
  ScoreErrorMap map;
  map.points.resize(d, m);
  const double h = (hi - lo) / (resolution - 1);
  for (int i = 0; i < m; ++i) {
    map.points(0, i) = lo + (i % resolution) * h;
    if (d == 2) map.points(1, i) = lo + (i / resolution) * h;
  }
  const std::vector<int> ts(static_cast<std::size_t>(m), t);
  const Eigen::MatrixXd diff = provider(map.points, ts) - analytic_score_batch(map.points, ts, mix, sched);
  map.error = diff.colwise().norm().transpose();
  map.mean = map.error.mean();
  map.max = map.error.maxCoeff();
  return map;
}

SpeedupReport speedup_report(int student_evals, int teacher_evals, double wall_student,
                             double wall_teacher) {
  if (student_evals < 1 || teacher_evals < 1)
    throw Error("speedup_report: evaluation counts must be positive");
  SpeedupReport r;
  r.student_evals = student_evals;
  r.teacher_evals = teacher_evals;
  r.count_ratio = static_cast<double>(teacher_evals) / student_evals;
  r.count_reduction = 1.0 - static_cast<double>(student_evals) / teacher_evals;
  if (wall_student > 0.0 && wall_teacher > 0.0) r.wall_ratio = wall_teacher / wall_student;
  r.count_ratio_at_least_10 = r.count_ratio >= 10.0;
  return r;
}

nlohmann::json to_json(const CoverageReport& r) {
  return {{"hits", r.hits},
          {"coverage", r.coverage},
          {"radius", r.radius},
          {"min_hits", r.min_hits},
          {"samples", r.samples}};
}

nlohmann::json to_json(const DistanceReport& r) {
  return {{"energy_distance", r.energy},
          {"sliced_wasserstein", r.sliced_w},
          {"size_a", r.size_a},
          {"size_b", r.size_b}};
}

nlohmann::json to_json(const SpeedupReport& r) {
  return {{"student_evals", r.student_evals},
          {"teacher_evals", r.teacher_evals},
          {"count_ratio", r.count_ratio},
          {"count_reduction", r.count_reduction},
          {"wall_ratio", r.wall_ratio},
          {"count_ratio_at_least_10", r.count_ratio_at_least_10}};
}

}  // namespace dmdlab
