#pragma once

#include <cstdint>
#include <fstream>
#include <iostream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include <fmt/format.h>

namespace regmcts {

/// In-memory CSV with a fixed header. Doubles are written in the shortest
/// form that round-trips, so output is exact and reproducible.
class CsvTable {
public:
  explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

  [[nodiscard]] const std::vector<std::string>& header() const noexcept { return header_; }
  [[nodiscard]] const std::vector<std::vector<std::string>>& rows() const noexcept { return rows_; }

  template <class... Ts>
  void add(const Ts&... cells) {
    if (sizeof...(Ts) != header_.size()) {
      throw std::logic_error(fmt::format("CsvTable: row has {} cells, header has {}",
                                         sizeof...(Ts), header_.size()));
    }
    rows_.push_back({cell(cells)...});
  }

  void append(const CsvTable& other) {
    if (other.header_ != header_) throw std::logic_error("CsvTable: header mismatch on append");
    rows_.insert(rows_.end(), other.rows_.begin(), other.rows_.end());
  }

  [[nodiscard]] std::size_t column(std::string_view name) const {
    for (std::size_t i = 0; i < header_.size(); ++i) {
      if (header_[i] == name) return i;
    }
    throw std::out_of_range(fmt::format("CsvTable: no column '{}'", name));
  }

  [[nodiscard]] std::string str() const {
    std::string out = join(header_);
    for (const auto& r : rows_) out += join(r);
    return out;
  }

  /// Writes to `path`, or to stdout when the path is empty or "-".
  void write(const std::string& path) const {
    if (path.empty() || path == "-") {
      std::cout << str() << std::flush;
      return;
    }
    std::ofstream file(path, std::ios::binary | std::ios::trunc);
    if (!file) throw std::runtime_error(fmt::format("cannot open '{}' for writing", path));
    file << str();
    if (!file.flush()) throw std::runtime_error(fmt::format("failed writing '{}'", path));
  }

private:
  template <class T>
  static std::string cell(const T& v) {
    if constexpr (std::is_same_v<T, bool>) {
      return v ? "1" : "0";
    } else if constexpr (std::is_floating_point_v<T>) {
      return fmt::format("{}", static_cast<double>(v));
    } else {
      return fmt::format("{}", v);
    }
  }

  static std::string join(const std::vector<std::string>& cells) {
    std::string line;
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) line += ',';
      line += cells[i];
    }
    line += '\n';
    return line;
  }

  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

}  // namespace regmcts
