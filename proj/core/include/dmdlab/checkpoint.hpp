#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "dmdlab/adam.hpp"
#include "dmdlab/dense_net.hpp"

namespace dmdlab {

/// A named block of float64 values plus free-form metadata.
struct CheckpointSection {
  std::string name;
  Eigen::VectorXd values;
  nlohmann::json meta = nlohmann::json::object();
};

/// In-memory checkpoint. On disk: `manifest.json` listing every section with
/// its byte length and FNV-1a checksum, plus one `<name>.bin` per section
/// holding little-endian float64 values.
struct Checkpoint {
  nlohmann::json header = nlohmann::json::object();
  std::vector<CheckpointSection> sections;

  void add(std::string name, Eigen::VectorXd values, nlohmann::json meta = nlohmann::json::object());
  bool has(const std::string& name) const;
  /// Throws CheckpointError(name) when absent.
  const CheckpointSection& get(const std::string& name) const;
};

std::uint64_t fnv1a(const void* data, std::size_t size);

/// Writes into `dir` (created if needed). Deterministic: equal checkpoints
/// produce identical bytes.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& dir);

/// Throws CheckpointError naming the failing section on a missing file, a size
/// mismatch or a checksum mismatch ("manifest" for manifest problems).
Checkpoint load_checkpoint(const std::filesystem::path& dir);

/// Network parameters with the architecture recorded in the metadata.
void add_network(Checkpoint& ckpt, const std::string& name, const DenseNet& net);
/// Restores parameters into `net`; ShapeError on an architecture mismatch.
void restore_network(const Checkpoint& ckpt, const std::string& name, DenseNet& net);

/// Adam moments (m then v) with the step count and config in the metadata.
void add_adam(Checkpoint& ckpt, const std::string& name, const AdamState& state);
void restore_adam(const Checkpoint& ckpt, const std::string& name, AdamState& state);

}  // namespace dmdlab
