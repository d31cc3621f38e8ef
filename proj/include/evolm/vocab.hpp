#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <unordered_map>
#include <vector>

namespace evolm {

// Whitespace tokenizer vocabulary. Ids 0..3 are reserved specials; encoding
// raw text can only ever produce UNK among them.
class Vocabulary {
  public:
    static constexpr std::int64_t kPad = 0;
    static constexpr std::int64_t kUnk = 1;
    static constexpr std::int64_t kMask = 2;
    static constexpr std::int64_t kCls = 3;
    static constexpr std::int64_t kNumSpecials = 4;

    // Most frequent (max_vocab - 4) whitespace tokens, lowercased, frequency
    // ties broken lexicographically.
    static Vocabulary build(std::istream& lines, std::int64_t max_vocab);

    std::int64_t size() const { return static_cast<std::int64_t>(id_to_token_.size()); }

    // Lowercases, splits on whitespace, maps out-of-vocabulary tokens to UNK.
    std::vector<std::int64_t> encode(const std::string& line, bool add_cls) const;

    std::string decode(const std::vector<std::int64_t>& ids) const;

    std::int64_t id_of(const std::string& token) const;  // UNK when absent
    const std::string& token_of(std::int64_t id) const;

    void save(const std::string& path) const;
    static Vocabulary load(const std::string& path);

    static bool is_special(std::int64_t id) { return id < kNumSpecials; }

    static std::vector<std::string> split_lower(const std::string& line);

  private:
    std::unordered_map<std::string, std::int64_t> token_to_id_;  // regular tokens only
    std::vector<std::string> id_to_token_;                       // includes specials
};

}  // namespace evolm
