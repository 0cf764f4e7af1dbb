#include "dmdlab/io.hpp"

#include <charconv>
#include <sstream>

#include "dmdlab/error.hpp"

namespace dmdlab {

std::string format_number(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

CsvWriter::CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header)
    : out_(path, std::ios::binary), columns_(header.size()) {
  if (!out_) throw Error("cannot open " + path.string() + " for writing");
  for (std::size_t i = 0; i < header.size(); ++i) out_ << (i ? "," : "") << header[i];
  out_ << '\n';
}

void CsvWriter::row(const std::vector<double>& values) {
  if (values.size() != columns_) throw ShapeError("csv row has the wrong number of columns");
  for (std::size_t i = 0; i < values.size(); ++i) out_ << (i ? "," : "") << format_number(values[i]);
  out_ << '\n';
}

void write_samples_csv(const std::filesystem::path& path, const Eigen::MatrixXd& samples,
                       std::uint64_t seed) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << "seed,index";
  for (Eigen::Index k = 0; k < samples.rows(); ++k) out << ",dim_" << k;
  out << '\n';
  for (Eigen::Index j = 0; j < samples.cols(); ++j) {
    out << seed << ',' << j;
    for (Eigen::Index k = 0; k < samples.rows(); ++k) out << ',' << format_number(samples(k, j));
    out << '\n';
  }
}

Eigen::MatrixXd read_samples_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  int dims = 0;
  for (std::size_t pos = 0; (pos = line.find("dim_", pos)) != std::string::npos; pos += 4) ++dims;
  std::vector<std::vector<double>> cols;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> v;
    int c = 0;
    while (std::getline(ss, cell, ',')) {
      if (c++ >= 2) v.push_back(std::stod(cell));
    }
    if (static_cast<int>(v.size()) != dims) throw ShapeError("malformed sample row in " + path.string());
    cols.push_back(std::move(v));
  }
  Eigen::MatrixXd x(dims, static_cast<Eigen::Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j)
    for (int k = 0; k < dims; ++k) x(k, static_cast<Eigen::Index>(j)) = cols[j][static_cast<std::size_t>(k)];
  return x;
}

void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  write_text(path, j.dump(2) + "\n");
}

nlohmann::json read_json(const std::filesystem::path& path) {
  const std::string text = read_text(path);
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(path.string() + ": " + e.what());
  }
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw Error("write failed for " + path.string());
}

}  // namespace dmdlab
