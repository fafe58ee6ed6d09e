#pragma once

// Deterministic CSV output: fixed %.17g formatting, a header row, and a
// leading comment row recording the config hash and seed so any file can be
// traced back to the run that produced it.

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace pomdpgrad {

inline std::string csv_num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return std::string(buf);
}

// FNV-1a, enough to fingerprint a config file.
inline std::uint64_t content_hash(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

class CsvWriter {
 public:
  CsvWriter(const std::string& path, const std::vector<std::string>& columns,
            std::uint64_t config_hash, std::uint64_t seed)
      : out_(path) {
    if (!out_) throw std::runtime_error("cannot open " + path + " for writing");
    out_ << "# config_hash=" << config_hash << " seed=" << seed << "\n";
    for (std::size_t i = 0; i < columns.size(); ++i)
      out_ << (i ? "," : "") << columns[i];
    out_ << "\n";
  }

  void row(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i)
      out_ << (i ? "," : "") << cells[i];
    out_ << "\n";
  }

 private:
  std::ofstream out_;
};

}  // namespace pomdpgrad
