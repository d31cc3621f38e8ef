#include "evolm/vocab.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <istream>
#include <sstream>

#include "json.hpp"

#include "evolm/error.hpp"

namespace evolm {

namespace {

const std::vector<std::string> kSpecialNames = {"[PAD]", "[UNK]", "[MASK]", "[CLS]"};

}  // namespace

std::vector<std::string> Vocabulary::split_lower(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (const char ch : line) {
        if (std::isspace(static_cast<unsigned char>(ch))) {
            if (!cur.empty()) {
                out.push_back(cur);
                cur.clear();
            }
        } else {
            cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
        }
    }
    if (!cur.empty()) {
        out.push_back(cur);
    }
    return out;
}

Vocabulary Vocabulary::build(std::istream& lines, std::int64_t max_vocab) {
    if (max_vocab < kNumSpecials + 1) {
        throw ContractError("max_vocab must be at least 5");
    }
    std::unordered_map<std::string, std::int64_t> counts;
    std::string line;
    bool any = false;
    while (std::getline(lines, line)) {
        for (const auto& tok : split_lower(line)) {
            ++counts[tok];
            any = true;
        }
    }
    if (!any) {
        throw DataError("empty corpus: no tokens found");
    }

    std::vector<std::pair<std::string, std::int64_t>> ranked(counts.begin(), counts.end());
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) {
            return a.second > b.second;
        }
        return a.first < b.first;
    });
    const std::size_t keep =
        std::min(ranked.size(), static_cast<std::size_t>(max_vocab - kNumSpecials));

    Vocabulary v;
    v.id_to_token_ = kSpecialNames;
    for (std::size_t i = 0; i < keep; ++i) {
        v.token_to_id_.emplace(ranked[i].first, static_cast<std::int64_t>(v.id_to_token_.size()));
        v.id_to_token_.push_back(ranked[i].first);
    }
    return v;
}

std::vector<std::int64_t> Vocabulary::encode(const std::string& line, bool add_cls) const {
    std::vector<std::int64_t> ids;
    if (add_cls) {
        ids.push_back(kCls);
    }
    for (const auto& tok : split_lower(line)) {
        ids.push_back(id_of(tok));
    }
    return ids;
}

std::string Vocabulary::decode(const std::vector<std::int64_t>& ids) const {
    std::ostringstream os;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (i) {
            os << ' ';
        }
        os << token_of(ids[i]);
    }
    return os.str();
}

std::int64_t Vocabulary::id_of(const std::string& token) const {
    const auto it = token_to_id_.find(token);
    return it == token_to_id_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token_of(std::int64_t id) const {
    if (id < 0 || id >= size()) {
        throw VocabError("token id " + std::to_string(id) + " out of range [0, " +
                         std::to_string(size()) + ")");
    }
    return id_to_token_[static_cast<std::size_t>(id)];
}

void Vocabulary::save(const std::string& path) const {
    nlohmann::json j;
    for (std::size_t id = 0; id < id_to_token_.size(); ++id) {
        j[id_to_token_[id]] = id;
    }
    std::ofstream out(path);
    if (!out) {
        throw DataError("cannot write vocabulary to " + path);
    }
    out << j.dump(2) << '\n';
}

Vocabulary Vocabulary::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot read vocabulary from " + path);
    }
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("malformed vocabulary JSON in " + path + ": " + e.what());
    }
    std::vector<std::string> names(j.size());
    for (const auto& [token, id] : j.items()) {
        const auto i = id.get<std::int64_t>();
        if (i < 0 || i >= static_cast<std::int64_t>(j.size())) {
            throw DataError("vocabulary id " + std::to_string(i) + " out of range");
        }
        names[static_cast<std::size_t>(i)] = token;
    }
    for (std::int64_t s = 0; s < kNumSpecials; ++s) {
        if (names[static_cast<std::size_t>(s)] != kSpecialNames[static_cast<std::size_t>(s)]) {
            throw DataError("vocabulary special id " + std::to_string(s) + " is '" +
                            names[static_cast<std::size_t>(s)] + "', expected '" +
                            kSpecialNames[static_cast<std::size_t>(s)] + "'");
        }
    }
    Vocabulary v;
    v.id_to_token_ = std::move(names);
    for (std::size_t id = kNumSpecials; id < v.id_to_token_.size(); ++id) {
        v.token_to_id_.emplace(v.id_to_token_[id], static_cast<std::int64_t>(id));
    }
    return v;
}

}  // namespace evolm
