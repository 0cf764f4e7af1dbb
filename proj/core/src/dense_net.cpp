#include "dmdlab/dense_net.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "dmdlab/error.hpp"

namespace dmdlab {

std::string to_string(Activation a) {
  switch (a) {
    case Activation::kLinear: return "linear";
    case Activation::kTanh: return "tanh";
    case Activation::kSilu: return "silu";
    case Activation::kAlgebraic: return "algebraic";
  }
  return "tanh";
}

Activation activation_from_string(const std::string& name) {
  if (name == "linear") return Activation::kLinear;
  if (name == "tanh") return Activation::kTanh;
  if (name == "silu") return Activation::kSilu;
  if (name == "algebraic") return Activation::kAlgebraic;
  throw ConfigError("network.activation", "unknown activation '" + name + "'");
}

Eigen::MatrixXd time_embedding(std::span<const int> timesteps, int num_steps) {
  // Frequencies are geometric in [1, 256] radians per unit of t / T.
  Eigen::MatrixXd emb(kTimeEmbeddingWidth, static_cast<Eigen::Index>(timesteps.size()));
  for (std::size_t j = 0; j < timesteps.size(); ++j) {
    const double s = static_cast<double>(timesteps[j]) / num_steps;
    for (int k = 0; k < kTimeFrequencies; ++k) {
      const double freq = std::exp2(8.0 * k / (kTimeFrequencies - 1));
      emb(k, static_cast<Eigen::Index>(j)) = std::sin(freq * s);
      emb(kTimeFrequencies + k, static_cast<Eigen::Index>(j)) = std::cos(freq * s);
    }
  }
  return emb;
}

Eigen::MatrixXd build_input(const InputLayout& layout, const Eigen::MatrixXd& samples,
                            std::span<const int> timesteps, int num_steps,
                            const Eigen::MatrixXd& condition) {
  const Eigen::Index n = samples.cols();
  if (samples.rows() != layout.sample_dim)
    throw ShapeError("build_input: sample rows " + std::to_string(samples.rows()) +
                     " != layout sample_dim " + std::to_string(layout.sample_dim));
  Eigen::MatrixXd in(layout.width(), n);
  in.topRows(layout.sample_dim) = samples;
  if (layout.time_dim > 0) {
    if (layout.time_dim != kTimeEmbeddingWidth)
      throw ShapeError("build_input: unsupported time embedding width");
    if (static_cast<Eigen::Index>(timesteps.size()) != n)
      throw ShapeError("build_input: timestep count differs from batch size");
    in.middleRows(layout.sample_dim, layout.time_dim) = time_embedding(timesteps, num_steps);
  }
  if (layout.condition_dim > 0) {
    if (condition.rows() != layout.condition_dim || condition.cols() != n)
      throw ShapeError("build_input: condition block has the wrong shape");
    in.bottomRows(layout.condition_dim) = condition;
  }
  return in;
}

DenseNet::DenseNet(std::vector<int> widths, Activation hidden, InputLayout layout)
    : widths_(std::move(widths)), activation_(hidden), layout_(layout) {
  if (widths_.size() < 2) throw ShapeError("DenseNet needs at least an input and output width");
  for (int w : widths_)
    if (w <= 0) throw ShapeError("DenseNet widths must be positive");
  if (layout_.width() != widths_.front())
    throw ShapeError("DenseNet input layout width " + std::to_string(layout_.width()) +
                     " != first layer width " + std::to_string(widths_.front()));
  Eigen::Index offset = 0;
  for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
    offsets_.push_back(offset);
    offset += static_cast<Eigen::Index>(widths_[l] + 1) * widths_[l + 1];
  }
  params_ = Eigen::VectorXd::Zero(offset);
}

void DenseNet::set_params(const Eigen::VectorXd& params) {
  if (params.size() != params_.size())
    throw ShapeError("set_params: expected " + std::to_string(params_.size()) + " values, got " +
                     std::to_string(params.size()));
  params_ = params;
}

Eigen::Map<const Eigen::MatrixXd> DenseNet::weight(int layer) const {
  return {params_.data() + offsets_[layer], widths_[layer + 1], widths_[layer]};
}

Eigen::Map<const Eigen::VectorXd> DenseNet::bias(int layer) const {
  return {params_.data() + offsets_[layer] +
              static_cast<Eigen::Index>(widths_[layer]) * widths_[layer + 1],
          widths_[layer + 1]};
}

void DenseNet::check_input(const Eigen::MatrixXd& input) const {
  if (input.rows() != input_width())
    throw ShapeError("DenseNet: input has " + std::to_string(input.rows()) + " rows, expected " +
                     std::to_string(input_width()));
}

namespace {

void activate(Activation a, const Eigen::MatrixXd& pre, Eigen::MatrixXd& post) {
  switch (a) {
    case Activation::kLinear: post = pre; break;
    case Activation::kTanh: post = pre.array().tanh(); break;
    case Activation::kSilu: post = pre.array() / (1.0 + (-pre.array()).exp()); break;
    case Activation::kAlgebraic: post = pre.array() * (1.0 + pre.array().square()).rsqrt(); break;
  }
}

// delta <- delta * act'(pre), using the cached post-activation where cheaper.
void scale_by_derivative(Activation a, const Eigen::MatrixXd& pre, const Eigen::MatrixXd& post,
                         Eigen::MatrixXd& delta) {
  switch (a) {
    case Activation::kLinear: break;
    case Activation::kTanh: delta.array() *= 1.0 - post.array().square(); break;
    case Activation::kSilu: {
      const Eigen::ArrayXXd sig = 1.0 / (1.0 + (-pre.array()).exp());
      delta.array() *= sig * (1.0 + pre.array() * (1.0 - sig));
      break;
    }
    case Activation::kAlgebraic: {
      const Eigen::ArrayXXd r = (1.0 + pre.array().square()).rsqrt();
      delta.array() *= r * r * r;
      break;
    }
  }
}

}  // namespace

Eigen::MatrixXd DenseNet::forward(const Eigen::MatrixXd& input) const {
  Tape tape;
  forward(input, tape);
  return std::move(tape.post.back());
}

const Eigen::MatrixXd& DenseNet::forward(const Eigen::MatrixXd& input, Tape& tape) const {
  check_input(input);
  const int layers = num_layers();
  tape.input = input;
  tape.pre.resize(static_cast<std::size_t>(layers));
  tape.post.resize(static_cast<std::size_t>(layers));
  const Eigen::MatrixXd* a = &tape.input;
  for (int l = 0; l < layers; ++l) {
    auto& z = tape.pre[static_cast<std::size_t>(l)];
    z.noalias() = weight(l) * (*a);
    z.colwise() += bias(l);
    auto& out = tape.post[static_cast<std::size_t>(l)];
    if (l + 1 < layers)
      activate(activation_, z, out);
    else
      out = z;
    a = &out;
  }
  return tape.post.back();
}

DenseNet::Gradients DenseNet::backward(const Tape& tape,
                                       const Eigen::MatrixXd& output_cotangent) const {
  const int layers = num_layers();
  if (static_cast<int>(tape.pre.size()) != layers)
    throw ShapeError("backward: tape does not belong to this network");
  const auto& out = tape.post.back();
  if (output_cotangent.rows() != out.rows() || output_cotangent.cols() != out.cols())
    throw ShapeError("backward: cotangent shape differs from output shape");

  Gradients g;
  g.params = Eigen::VectorXd::Zero(params_.size());
  Eigen::MatrixXd delta = output_cotangent;
  for (int l = layers - 1; l >= 0; --l) {
    const Eigen::MatrixXd& a_in = l == 0 ? tape.input : tape.post[static_cast<std::size_t>(l - 1)];
    Eigen::Map<Eigen::MatrixXd> gw(g.params.data() + offsets_[l], widths_[l + 1], widths_[l]);
    gw.noalias() = delta * a_in.transpose();
    Eigen::Map<Eigen::VectorXd>(g.params.data() + offsets_[l] +
                                    static_cast<Eigen::Index>(widths_[l]) * widths_[l + 1],
                                widths_[l + 1]) = delta.rowwise().sum();
    Eigen::MatrixXd prev;
    prev.noalias() = weight(l).transpose() * delta;
    if (l > 0)
      scale_by_derivative(activation_, tape.pre[static_cast<std::size_t>(l - 1)],
                          tape.post[static_cast<std::size_t>(l - 1)], prev);
    delta = std::move(prev);
  }
  g.input = std::move(delta);
  return g;
}

Eigen::MatrixXd DenseNet::backward_input_from(const Tape& tape, int layer,
                                              const Eigen::MatrixXd& cotangent) const {
  if (layer < 0 || layer >= num_layers() - 1)
    throw ShapeError("backward_input_from: layer " + std::to_string(layer) + " is not hidden");
  const auto& post = tape.post[static_cast<std::size_t>(layer)];
  if (cotangent.rows() != post.rows() || cotangent.cols() != post.cols())
    throw ShapeError("backward_input_from: cotangent shape mismatch");
  Eigen::MatrixXd delta = cotangent;
  scale_by_derivative(activation_, tape.pre[static_cast<std::size_t>(layer)], post, delta);
  for (int l = layer; l >= 0; --l) {
    Eigen::MatrixXd prev;
    prev.noalias() = weight(l).transpose() * delta;
    if (l > 0)
      scale_by_derivative(activation_, tape.pre[static_cast<std::size_t>(l - 1)],
                          tape.post[static_cast<std::size_t>(l - 1)], prev);
    delta = std::move(prev);
  }
  return delta;
}

bool DenseNet::same_architecture(const DenseNet& other) const {
  return widths_ == other.widths_ && activation_ == other.activation_ && layout_ == other.layout_;
}

std::uint64_t DenseNet::checksum() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  const auto* bytes = reinterpret_cast<const unsigned char*>(params_.data());
  for (std::size_t i = 0; i < static_cast<std::size_t>(params_.size()) * sizeof(double); ++i) {
    h ^= bytes[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

void init_fan_in(DenseNet& net, Rng& rng, bool zero_output) {
  Eigen::VectorXd& p = net.mutable_params();
  p.setZero();
  const auto& w = net.widths();
  Eigen::Index offset = 0;
  for (int l = 0; l < net.num_layers(); ++l) {
    const Eigen::Index nw = static_cast<Eigen::Index>(w[l]) * w[l + 1];
    const bool last = l + 1 == net.num_layers();
    const double bound = std::sqrt(3.0 / w[l]);
    for (Eigen::Index i = 0; i < nw; ++i)
      p[offset + i] = (last && zero_output) ? 0.0 : bound * (2.0 * rng.uniform() - 1.0);
    offset += nw + w[l + 1];
  }
}

nlohmann::json architecture_to_json(const DenseNet& net) {
  return {{"widths", net.widths()},
          {"activation", to_string(net.activation())},
          {"layout",
           {{"sample_dim", net.layout().sample_dim},
            {"time_dim", net.layout().time_dim},
            {"condition_dim", net.layout().condition_dim}}},
          {"num_params", net.num_params()}};
}

DenseNet architecture_from_json(const nlohmann::json& j) {
  try {
    const auto& lay = j.at("layout");
    InputLayout layout{lay.at("sample_dim").get<int>(), lay.at("time_dim").get<int>(),
                       lay.at("condition_dim").get<int>()};
    DenseNet net(j.at("widths").get<std::vector<int>>(),
                 activation_from_string(j.at("activation").get<std::string>()), layout);
    if (j.contains("num_params") && j.at("num_params").get<Eigen::Index>() != net.num_params())
      throw ShapeError("architecture: num_params disagrees with widths");
    return net;
  } catch (const nlohmann::json::exception& e) {
    throw ShapeError(std::string("architecture: ") + e.what());
  }
}

void write_parameters_f32(const DenseNet& net, const std::filesystem::path& stem) {
  static_assert(std::endian::native == std::endian::little, "little-endian host required");
  auto bin = stem;
  bin += ".bin";
  auto meta = stem;
  meta += ".json";
  std::ofstream os(bin, std::ios::binary);
  if (!os) throw Error("cannot open " + bin.string());
  for (Eigen::Index i = 0; i < net.num_params(); ++i) {
    const float v = static_cast<float>(net.params()[i]);
    os.write(reinterpret_cast<const char*>(&v), sizeof v);
  }
  nlohmann::json j = architecture_to_json(net);
  j["dtype"] = "float32";
  j["byte_order"] = "little";
  std::ofstream(meta) << j.dump(2) << '\n';
}

DenseNet read_parameters_f32(const std::filesystem::path& stem) {
  auto bin = stem;
  bin += ".bin";
  auto meta = stem;
  meta += ".json";
  std::ifstream ms(meta);
  if (!ms) throw Error("cannot open " + meta.string());
  nlohmann::json j;
  try {
    ms >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(meta.string() + ": " + e.what());
  }
  if (j.value("dtype", "") != "float32") throw ShapeError(meta.string() + ": dtype must be float32");
  DenseNet net = architecture_from_json(j);
  std::ifstream is(bin, std::ios::binary);
  if (!is) throw Error("cannot open " + bin.string());
  Eigen::VectorXd p(net.num_params());
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    float v;
    if (!is.read(reinterpret_cast<char*>(&v), sizeof v))
      throw ShapeError(bin.string() + ": file shorter than the declared parameter count");
    p[i] = v;
  }
  if (is.peek() != std::char_traits<char>::eof())
    throw ShapeError(bin.string() + ": trailing bytes after parameters");
  net.set_params(p);
  return net;
}

}  // namespace dmdlab
