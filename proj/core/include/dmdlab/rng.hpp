#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace dmdlab {

/// Seeded random source. Normal draws are computed from the engine alone
/// (no cached spare), so the serialized engine state is the complete state.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  /// Independent stream derived from a base seed and a stream name, e.g.
  /// Rng::stream(seed, "data"). Different names never share a sequence.
  static Rng stream(std::uint64_t seed, std::string_view name);

  double uniform();                  // [0, 1)
  double normal();                   // N(0, 1)
  int uniform_int(int lo, int hi);   // inclusive on both ends
  std::size_t categorical(const std::vector<double>& weights);

  Eigen::MatrixXd normal_matrix(Eigen::Index rows, Eigen::Index cols);

  std::string state() const;
  void set_state(const std::string& state);

  bool operator==(const Rng& other) const { return engine_ == other.engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace dmdlab
