#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "dmdlab/rng.hpp"

namespace dmdlab {

/// Hidden-layer nonlinearities. All are smooth so that finite-difference
/// checks of the reverse pass stay clean. The output layer is always linear.
enum class Activation {
  kLinear,
  kTanh,
  kSilu,
  kAlgebraic,  // x / sqrt(1 + x^2)
};

std::string to_string(Activation a);
Activation activation_from_string(const std::string& name);

/// Number of sinusoid frequencies in the timestep embedding (sin and cos each).
inline constexpr int kTimeFrequencies = 16;
inline constexpr int kTimeEmbeddingWidth = 2 * kTimeFrequencies;

/// Column layout of a network input: [sample | time embedding | condition].
struct InputLayout {
  int sample_dim = 0;
  int time_dim = 0;
  int condition_dim = 0;
  int width() const { return sample_dim + time_dim + condition_dim; }
  bool operator==(const InputLayout&) const = default;
};

/// Sinusoidal embedding of t / T, one column per timestep.
Eigen::MatrixXd time_embedding(std::span<const int> timesteps, int num_steps);

/// Stacks samples, the timestep embedding and an optional condition block
/// according to `layout`. `condition` may be empty when condition_dim == 0.
Eigen::MatrixXd build_input(const InputLayout& layout, const Eigen::MatrixXd& samples,
                            std::span<const int> timesteps, int num_steps,
                            const Eigen::MatrixXd& condition = {});

/// Fully connected feed-forward network over a flat parameter vector.
///
/// Layer l maps widths[l] -> widths[l+1]; its parameters are the weight matrix
/// (column-major, widths[l+1] x widths[l]) followed by the bias. Inputs and
/// outputs are batched column-wise.
class DenseNet {
 public:
  DenseNet() = default;
  DenseNet(std::vector<int> widths, Activation hidden, InputLayout layout);

  /// Cached activations of one forward pass, consumed by the reverse pass.
  struct Tape {
    Eigen::MatrixXd input;
    std::vector<Eigen::MatrixXd> pre;   // affine outputs per layer
    std::vector<Eigen::MatrixXd> post;  // activated outputs per layer
  };

  struct Gradients {
    Eigen::VectorXd params;  // summed over the batch
    Eigen::MatrixXd input;   // per column
  };

  const std::vector<int>& widths() const { return widths_; }
  int num_layers() const { return static_cast<int>(widths_.size()) - 1; }
  int input_width() const { return widths_.front(); }
  int output_width() const { return widths_.back(); }
  Activation activation() const { return activation_; }
  const InputLayout& layout() const { return layout_; }

  Eigen::Index num_params() const { return params_.size(); }
  const Eigen::VectorXd& params() const { return params_; }
  Eigen::VectorXd& mutable_params() { return params_; }
  void set_params(const Eigen::VectorXd& params);

  Eigen::MatrixXd forward(const Eigen::MatrixXd& input) const;
  const Eigen::MatrixXd& forward(const Eigen::MatrixXd& input, Tape& tape) const;

  /// Reverse pass of <output, cotangent>: exact parameter and input gradients.
  Gradients backward(const Tape& tape, const Eigen::MatrixXd& output_cotangent) const;

  /// Input gradient of <post[layer], cotangent>, where post[layer] is the
  /// activated output of hidden layer `layer`. No parameter gradient.
  Eigen::MatrixXd backward_input_from(const Tape& tape, int layer,
                                      const Eigen::MatrixXd& cotangent) const;

  bool same_architecture(const DenseNet& other) const;
  std::uint64_t checksum() const;

 private:
  Eigen::Map<const Eigen::MatrixXd> weight(int layer) const;
  Eigen::Map<const Eigen::VectorXd> bias(int layer) const;
  void check_input(const Eigen::MatrixXd& input) const;

  std::vector<int> widths_;
  Activation activation_ = Activation::kTanh;
  InputLayout layout_;
  std::vector<Eigen::Index> offsets_;
  Eigen::VectorXd params_;
};

/// Scaled-uniform fan-in init: W ~ U(-sqrt(3/fan_in), sqrt(3/fan_in)), b = 0.
/// `zero_output` zeroes the final layer.
void init_fan_in(DenseNet& net, Rng& rng, bool zero_output = false);

nlohmann::json architecture_to_json(const DenseNet& net);
DenseNet architecture_from_json(const nlohmann::json& j);

/// Writes `<stem>.bin` (little-endian float32 parameters) and `<stem>.json`
/// (layer shapes and layout).
void write_parameters_f32(const DenseNet& net, const std::filesystem::path& stem);
DenseNet read_parameters_f32(const std::filesystem::path& stem);

}  // namespace dmdlab
