#include "dmdlab/mixture.hpp"

#include <cmath>
#include <numbers>

#include "dmdlab/error.hpp"

namespace dmdlab {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

double log_sum_exp(const Eigen::VectorXd& v) {
  const double m = v.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((v.array() - m).exp().sum());
}

}  // namespace

bool MixtureSpec::is_diagonal() const {
  for (const auto& c : covariances) {
    Eigen::MatrixXd off = c;
    off.diagonal().setZero();
    if (off.cwiseAbs().maxCoeff() != 0.0) return false;
  }
  return true;
}

void MixtureSpec::validate() const {
  if (weights.empty()) throw ConfigError("mixture.weights", "mixture has no components");
  if (means.size() != weights.size() || covariances.size() != weights.size())
    throw ConfigError("mixture", "weights, means and covariances differ in length");
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0)) throw ConfigError("mixture.weights", "negative or NaN weight");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-12)
    throw ConfigError("mixture.weights", "weights sum to " + std::to_string(total));
  const auto d = means.front().size();
  if (d == 0) throw ConfigError("mixture.means", "zero-dimensional mean");
  for (std::size_t k = 0; k < means.size(); ++k) {
    if (means[k].size() != d) throw ConfigError("mixture.means", "inconsistent dimensions");
    const auto& c = covariances[k];
    if (c.rows() != d || c.cols() != d)
      throw ConfigError("mixture.covariances", "covariance shape does not match dimension");
    if ((c - c.transpose()).cwiseAbs().maxCoeff() > 1e-12)
      throw ConfigError("mixture.covariances", "covariance not symmetric");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(c, Eigen::EigenvaluesOnly);
    if (!(es.eigenvalues().minCoeff() > 0.0))
      throw ConfigError("mixture.covariances", "covariance not positive definite");
  }
  if (!is_diagonal() && d > 4)
    throw ConfigError("mixture.covariances", "full covariances are supported only for d <= 4");
}

MixtureSpec MixtureSpec::ring(int components, double radius, double stddev,
                              std::vector<double> weights) {
  if (components < 1) throw ConfigError("mixture.components", "need at least one component");
  if (weights.empty()) weights.assign(static_cast<std::size_t>(components), 1.0);
  if (static_cast<int>(weights.size()) != components)
    throw ConfigError("mixture.weights", "ring weights length differs from component count");
  std::vector<Eigen::VectorXd> means;
  for (int k = 0; k < components; ++k) {
    const double a = 2.0 * std::numbers::pi * k / components;
    Eigen::VectorXd m(2);
    m << radius * std::cos(a), radius * std::sin(a);
    means.push_back(m);
  }
  return isotropic(std::move(weights), std::move(means), stddev);
}

MixtureSpec MixtureSpec::isotropic(std::vector<double> weights, std::vector<Eigen::VectorXd> means,
                                   double stddev) {
  double total = 0.0;
  for (double w : weights) total += w;
  if (!(total > 0.0)) throw ConfigError("mixture.weights", "weights must have positive sum");
  for (double& w : weights) w /= total;
  MixtureSpec mix;
  mix.weights = std::move(weights);
  mix.means = std::move(means);
  for (const auto& m : mix.means)
    mix.covariances.push_back(
        Eigen::MatrixXd::Identity(m.size(), m.size()) * (stddev * stddev));
  mix.validate();
  return mix;
}

nlohmann::json mixture_to_json(const MixtureSpec& mix) {
  nlohmann::json j;
  j["weights"] = mix.weights;
  auto& means = j["means"] = nlohmann::json::array();
  for (const auto& m : mix.means) means.push_back(std::vector<double>(m.begin(), m.end()));
  if (mix.is_diagonal()) {
    auto& diag = j["cov_diag"] = nlohmann::json::array();
    for (const auto& c : mix.covariances) {
      Eigen::VectorXd d = c.diagonal();
      diag.push_back(std::vector<double>(d.begin(), d.end()));
    }
  } else {
    auto& full = j["cov_full"] = nlohmann::json::array();
    for (const auto& c : mix.covariances) {
      nlohmann::json rows = nlohmann::json::array();
      for (Eigen::Index r = 0; r < c.rows(); ++r) {
        Eigen::VectorXd row = c.row(r).transpose();
        rows.push_back(std::vector<double>(row.begin(), row.end()));
      }
      full.push_back(rows);
    }
  }
  return j;
}

MixtureSpec mixture_from_json(const nlohmann::json& j) {
  const std::string kind = j.value("kind", "explicit");
  if (kind == "ring") {
    std::vector<double> weights;
    if (j.contains("weights")) weights = j.at("weights").get<std::vector<double>>();
    return MixtureSpec::ring(j.value("components", 8), j.value("radius", 2.0),
                             j.value("sigma", 0.1), std::move(weights));
  }
  if (kind != "explicit") throw ConfigError("mixture.kind", "unknown mixture kind '" + kind + "'");

  MixtureSpec mix;
  try {
    mix.weights = j.at("weights").get<std::vector<double>>();
    for (const auto& m : j.at("means")) {
      auto v = m.get<std::vector<double>>();
      mix.means.push_back(Eigen::Map<Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())));
    }
    if (j.contains("cov_diag")) {
      for (const auto& c : j.at("cov_diag")) {
        auto v = c.get<std::vector<double>>();
        mix.covariances.push_back(
            Eigen::Map<Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())).asDiagonal());
      }
    } else if (j.contains("cov_full")) {
      for (const auto& c : j.at("cov_full")) {
        const auto rows = c.get<std::vector<std::vector<double>>>();
        Eigen::MatrixXd m(rows.size(), rows.size());
        for (std::size_t r = 0; r < rows.size(); ++r) {
          if (rows[r].size() != rows.size())
            throw ConfigError("mixture.cov_full", "covariance rows must be square");
          for (std::size_t s = 0; s < rows.size(); ++s)
            m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(s)) = rows[r][s];
        }
        mix.covariances.push_back(m);
      }
    } else {
      throw ConfigError("mixture", "one of cov_diag or cov_full is required");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("mixture", e.what());
  }
  mix.validate();
  return mix;
}

NoisyMixture::NoisyMixture(const MixtureSpec& mix, double alpha_bar)
    : dim_(mix.dim()), alpha_bar_(alpha_bar), diagonal_(mix.is_diagonal()) {
  const int d = mix.dim();
  const double sa = std::sqrt(alpha_bar);
  comps_.reserve(mix.weights.size());
  for (int k = 0; k < mix.size(); ++k) {
    Component c;
    c.log_weight = mix.weights[k] > 0.0 ? std::log(mix.weights[k])
                                        : -std::numeric_limits<double>::infinity();
    c.mean = sa * mix.means[k];
    if (diagonal_) {
      c.diag = alpha_bar * mix.covariances[k].diagonal().array() + (1.0 - alpha_bar);
      c.log_norm = -0.5 * (d * kLog2Pi + c.diag.array().log().sum());
    } else {
      Eigen::MatrixXd cov = alpha_bar * mix.covariances[k] +
                            (1.0 - alpha_bar) * Eigen::MatrixXd::Identity(d, d);
      c.chol.compute(cov);
      c.precision = c.chol.solve(Eigen::MatrixXd::Identity(d, d));
      const double logdet = 2.0 * c.chol.matrixL().toDenseMatrix().diagonal().array().log().sum();
      c.log_norm = -0.5 * (d * kLog2Pi + logdet);
    }
    comps_.push_back(std::move(c));
  }
}

Eigen::VectorXd NoisyMixture::component_log_terms(const Eigen::VectorXd& x) const {
  if (x.size() != dim_)
    throw ShapeError("mixture: point has dimension " + std::to_string(x.size()) + ", expected " +
                     std::to_string(dim_));
  Eigen::VectorXd terms(static_cast<Eigen::Index>(comps_.size()));
  for (std::size_t k = 0; k < comps_.size(); ++k) {
    const auto& c = comps_[k];
    const Eigen::VectorXd r = x - c.mean;
    const double quad = diagonal_ ? (r.array().square() / c.diag.array()).sum()
                                  : r.dot(c.precision * r);
    terms[static_cast<Eigen::Index>(k)] = c.log_weight + c.log_norm - 0.5 * quad;
  }
  return terms;
}

double NoisyMixture::log_density(const Eigen::VectorXd& x) const {
  return log_sum_exp(component_log_terms(x));
}

Eigen::VectorXd NoisyMixture::responsibilities(const Eigen::VectorXd& x) const {
  Eigen::VectorXd terms = component_log_terms(x);
  const double lse = log_sum_exp(terms);
  return (terms.array() - lse).exp();
}

Eigen::VectorXd NoisyMixture::score(const Eigen::VectorXd& x) const {
  const Eigen::VectorXd gamma = responsibilities(x);
  Eigen::VectorXd s = Eigen::VectorXd::Zero(x.size());
  for (std::size_t k = 0; k < comps_.size(); ++k) {
    const double g = gamma[static_cast<Eigen::Index>(k)];
    if (g == 0.0) continue;
    const auto& c = comps_[k];
    const Eigen::VectorXd r = x - c.mean;
    if (diagonal_)
      s.array() -= g * r.array() / c.diag.array();
    else
      s -= g * (c.precision * r);
  }
  return s;
}

Eigen::VectorXd NoisyMixture::posterior_mean(const Eigen::VectorXd& x) const {
  // Tweedie: E[x0 | x_t] = (x_t + (1 - abar) score) / sqrt(abar).
  return (x + (1.0 - alpha_bar_) * score(x)) / std::sqrt(alpha_bar_);
}

double noisy_log_density(const Eigen::VectorXd& x, int t, const MixtureSpec& mix,
                         const Schedule& sched) {
  sched.check_timestep(t);
  return NoisyMixture(mix, sched.alpha_bar(t)).log_density(x);
}

Eigen::VectorXd analytic_score(const Eigen::VectorXd& x, int t, const MixtureSpec& mix,
                               const Schedule& sched) {
  sched.check_timestep(t);
  return NoisyMixture(mix, sched.alpha_bar(t)).score(x);
}

Eigen::MatrixXd analytic_score_batch(const Eigen::MatrixXd& x, std::span<const int> timesteps,
                                     const MixtureSpec& mix, const Schedule& sched) {
  if (static_cast<std::size_t>(x.cols()) != timesteps.size())
    throw ShapeError("analytic_score_batch: timestep count differs from batch size");
  Eigen::MatrixXd out(x.rows(), x.cols());
  for (Eigen::Index j = 0; j < x.cols(); ++j)
    out.col(j) = analytic_score(x.col(j), timesteps[static_cast<std::size_t>(j)], mix, sched);
  return out;
}

MixtureDraw sample_mixture(const MixtureSpec& mix, int n, Rng& rng) {
  const int d = mix.dim();
  MixtureDraw draw{Eigen::MatrixXd(d, n), std::vector<int>(static_cast<std::size_t>(n))};
  std::vector<Eigen::MatrixXd> factors;
  for (const auto& c : mix.covariances) factors.push_back(c.llt().matrixL());
  for (int j = 0; j < n; ++j) {
    const auto k = rng.categorical(mix.weights);
    Eigen::VectorXd z(d);
    for (int i = 0; i < d; ++i) z[i] = rng.normal();
    draw.samples.col(j) = mix.means[k] + factors[k] * z;
    draw.components[static_cast<std::size_t>(j)] = static_cast<int>(k);
  }
  return draw;
}

}  // namespace dmdlab
