#pragma once

#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "postdyn/util.hpp"

namespace postdyn {

// Fixed-header CSV writer: UTF-8, '.' decimal separator, one record per row.
class CsvWriter {
 public:
  CsvWriter(const std::string& path, std::vector<std::string> header)
      : out_(path), columns_(header.size()) {
    if (!out_) throw std::runtime_error("cannot open CSV for writing: " + path);
    std::string line;
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (i) line += ",";
      line += header[i];
    }
    out_ << line << "\n";
  }

  void row(const std::vector<std::string>& cells) {
    if (cells.size() != columns_) throw std::logic_error("CSV row width mismatch");
    std::string line;
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) line += ",";
      line += cells[i];
    }
    out_ << line << "\n";
  }

  static std::string num(double v) { return format_double(v); }
  static std::string num(long v) { return std::to_string(v); }
  static std::string num(int v) { return std::to_string(v); }
  static std::string flag(bool b) { return b ? "1" : "0"; }

 private:
  std::ofstream out_;
  std::size_t columns_;
};

}  // namespace postdyn
