#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

namespace dmdlab {

/// Row-oriented CSV file. Numbers are written with 17 significant digits so a
/// rerun with the same seeds reproduces the file byte for byte.
class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header);
  void row(const std::vector<double>& values);
  void flush() { out_.flush(); }

 private:
  std::ofstream out_;
  std::size_t columns_;
};

std::string format_number(double v);

/// Writes samples (d x n) with header seed,index,dim_0,...; n may be zero.
void write_samples_csv(const std::filesystem::path& path, const Eigen::MatrixXd& samples,
                       std::uint64_t seed);

/// Reads back the dim_* columns of a sample file as a d x n matrix.
Eigen::MatrixXd read_samples_csv(const std::filesystem::path& path);

/// Writes `j` with two-space indentation and a trailing newline.
void write_json(const std::filesystem::path& path, const nlohmann::json& j);
nlohmann::json read_json(const std::filesystem::path& path);

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace dmdlab
