#include "evolm/metrics.hpp"

#include "evolm/error.hpp"

namespace evolm {

MetricsWriter::MetricsWriter(const std::string& path) {
    file_.open(path);
    if (!file_) {
        throw DataError("cannot open metrics file " + path);
    }
}

void MetricsWriter::write(const nlohmann::ordered_json& row) {
    std::string line = row.dump();
    if (file_.is_open()) {
        file_ << line << '\n';
        file_.flush();
    }
    lines_.push_back(std::move(line));
}

}  // namespace evolm
