#pragma once

#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"

namespace evolm {

// Appends one JSON object per line. Rows are also kept in memory so callers
// can inspect a run without re-reading the file.
class MetricsWriter {
  public:
    MetricsWriter() = default;  // in-memory only
    explicit MetricsWriter(const std::string& path);

    void write(const nlohmann::ordered_json& row);

    const std::vector<std::string>& lines() const { return lines_; }

  private:
    std::ofstream file_;
    std::vector<std::string> lines_;
};

}  // namespace evolm
