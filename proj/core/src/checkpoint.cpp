#include "dmdlab/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "dmdlab/error.hpp"
#include "dmdlab/io.hpp"

namespace dmdlab {

static_assert(std::endian::native == std::endian::little,
              "checkpoint blobs are written in native little-endian order");

void Checkpoint::add(std::string name, Eigen::VectorXd values, nlohmann::json meta) {
  if (has(name)) throw CheckpointError(name, "duplicate section");
  sections.push_back({std::move(name), std::move(values), std::move(meta)});
}

bool Checkpoint::has(const std::string& name) const {
  for (const auto& s : sections)
    if (s.name == name) return true;
  return false;
}

const CheckpointSection& Checkpoint::get(const std::string& name) const {
  for (const auto& s : sections)
    if (s.name == name) return s;
  throw CheckpointError(name, "section missing from checkpoint");
}

std::uint64_t fnv1a(const void* data, std::size_t size) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = 1469598103934665603ULL;
  for (std::size_t i = 0; i < size; ++i) {
    h ^= p[i];
    h *= 1099511628211ULL;
  }
  return h;
}

namespace {

std::string hex64(std::uint64_t v) {
  std::ostringstream ss;
  ss << std::hex;
  ss.width(16);
  ss.fill('0');
  ss << v;
  return ss.str();
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::json manifest;
  manifest["format"] = "dmdlab-checkpoint-1";
  manifest["header"] = ckpt.header;
  manifest["sections"] = nlohmann::json::array();
  for (const auto& s : ckpt.sections) {
    const std::size_t bytes = static_cast<std::size_t>(s.values.size()) * sizeof(double);
    const std::string file = s.name + ".bin";
    std::ofstream out(dir / file, std::ios::binary);
    if (!out) throw CheckpointError(s.name, "cannot write " + (dir / file).string());
    out.write(reinterpret_cast<const char*>(s.values.data()), static_cast<std::streamsize>(bytes));
    if (!out) throw CheckpointError(s.name, "write failed");
    manifest["sections"].push_back({{"name", s.name},
                                    {"file", file},
                                    {"count", s.values.size()},
                                    {"bytes", bytes},
                                    {"fnv1a", hex64(fnv1a(s.values.data(), bytes))},
                                    {"meta", s.meta}});
  }
  write_json(dir / "manifest.json", manifest);
}

Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(read_text(dir / "manifest.json"));
  } catch (const std::exception& e) {
    throw CheckpointError("manifest", e.what());
  }
  if (manifest.value("format", "") != "dmdlab-checkpoint-1")
    throw CheckpointError("manifest", "unrecognized checkpoint format");
  Checkpoint ckpt;
  try {
    ckpt.header = manifest.at("header");
    for (const auto& entry : manifest.at("sections")) {
      const std::string name = entry.at("name");
      const std::size_t bytes = entry.at("bytes");
      const std::size_t count = entry.at("count");
      if (bytes != count * sizeof(double)) throw CheckpointError(name, "byte count disagrees with value count");
      const auto path = dir / entry.at("file").get<std::string>();
      std::ifstream in(path, std::ios::binary);
      if (!in) throw CheckpointError(name, "missing blob " + path.string());
      Eigen::VectorXd values(static_cast<Eigen::Index>(count));
      in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(bytes));
      if (static_cast<std::size_t>(in.gcount()) != bytes || in.peek() != std::char_traits<char>::eof())
        throw CheckpointError(name, "blob size differs from manifest (" + std::to_string(bytes) + " bytes expected)");
      if (hex64(fnv1a(values.data(), bytes)) != entry.at("fnv1a").get<std::string>())
        throw CheckpointError(name, "checksum mismatch");
      ckpt.sections.push_back({name, std::move(values), entry.value("meta", nlohmann::json::object())});
    }
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError("manifest", e.what());
  }
  return ckpt;
}

void add_network(Checkpoint& ckpt, const std::string& name, const DenseNet& net) {
  ckpt.add(name, net.params(), architecture_to_json(net));
}

void restore_network(const Checkpoint& ckpt, const std::string& name, DenseNet& net) {
  const auto& s = ckpt.get(name);
  const DenseNet stored = architecture_from_json(s.meta);
  if (!stored.same_architecture(net) || s.values.size() != net.num_params())
    throw ShapeError("checkpoint section '" + name + "' holds a network of a different shape (" +
                     s.meta.dump() + " vs " + architecture_to_json(net).dump() + ")");
  net.set_params(s.values);
}

void add_adam(Checkpoint& ckpt, const std::string& name, const AdamState& state) {
  Eigen::VectorXd mv(state.m.size() + state.v.size());
  mv << state.m, state.v;
  ckpt.add(name, std::move(mv), {{"step", state.step}, {"config", adam_config_to_json(state.config)}});
}

void restore_adam(const Checkpoint& ckpt, const std::string& name, AdamState& state) {
  const auto& s = ckpt.get(name);
  const Eigen::Index n = state.m.size();
  if (s.values.size() != 2 * n)
    throw ShapeError("checkpoint section '" + name + "' holds optimizer state of size " +
                     std::to_string(s.values.size() / 2) + ", expected " + std::to_string(n));
  state.m = s.values.head(n);
  state.v = s.values.tail(n);
  state.step = s.meta.at("step").get<long>();
  state.config = adam_config_from_json(s.meta.at("config"), state.config);
}

}  // namespace dmdlab
