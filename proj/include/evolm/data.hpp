#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "evolm/vocab.hpp"

namespace evolm {

struct Sample {
    std::vector<std::int64_t> token_ids;  // never contains PAD; CLS allowed at 0
    std::int64_t source_line = 0;
};

struct LabeledExample {
    std::vector<std::int64_t> token_ids;
    std::int64_t label = 0;
};

struct SyntheticCorpusSpec {
    std::int64_t num_templates = 3;
    std::int64_t num_entities = 20;
    std::int64_t num_relations = 5;
    std::int64_t samples = 1000;
    std::uint64_t seed = 0;

    void validate() const;
};

// Knowledge-slot provenance for one generated sentence. The attribute token
// is a pure function of (entity, relation), so predicting it requires the
// memorized pairing rather than template-local cues.
struct SlotInfo {
    std::int64_t word_index = 0;  // 0-based index into the whitespace tokens
    std::int64_t entity = 0;
    std::int64_t relation = 0;
    std::string attribute;  // the token occupying the slot
};

struct FactualCorpus {
    std::vector<std::string> lines;
    std::vector<SlotInfo> slots;  // parallel to lines
};

FactualCorpus generate_factual_corpus(const SyntheticCorpusSpec& spec);

// Token position of the knowledge slot once a line is encoded with CLS.
inline std::int64_t slot_token_position(const SlotInfo& slot) { return slot.word_index + 1; }

std::vector<Sample> encode_corpus(const Vocabulary& vocab, const std::vector<std::string>& lines);

// ---------------------------------------------------------------------------
// Synthetic classification tasks
// ---------------------------------------------------------------------------

struct LabeledText {
    std::string text;
    std::int64_t label = 0;
};

struct TaskGenOptions {
    std::int64_t samples_per_task = 600;
    std::int64_t num_markers = 16;  // split evenly between the two classes
    std::int64_t sentence_len = 8;
};

// Two binary marker-classification tasks over a shared word inventory.
// relatedness=1 gives the target the source's label rule on fresh samples;
// relatedness=0 flips the rule on exactly half the markers, which makes a
// source-fit classifier perform at chance on the target.
std::pair<std::vector<LabeledText>, std::vector<LabeledText>> generate_task_pair(
    std::uint64_t seed, double relatedness, const TaskGenOptions& opts = {});

struct ShiftPair {
    std::vector<LabeledText> seed_train;        // labeled, source domain
    std::vector<std::string> target_unlabeled;  // unlabeled, shifted domain
    std::vector<LabeledText> target_eval;       // labeled, shifted domain
};

struct ShiftGenOptions {
    std::int64_t seed_size = 64;
    std::int64_t unlabeled_size = 192;
    std::int64_t eval_size = 192;
    std::int64_t num_markers = 16;
    std::int64_t sentence_len = 8;
};

// Same label rule in both domains, disjoint filler-word distributions.
ShiftPair generate_shift_pair(std::uint64_t seed, const ShiftGenOptions& opts = {});

std::vector<LabeledExample> encode_examples(const Vocabulary& vocab,
                                            const std::vector<LabeledText>& texts);

// JSON Lines {"text": ..., "label": ...} persistence.
void save_labeled_jsonl(const std::string& path, const std::vector<LabeledText>& rows);
std::vector<LabeledText> load_labeled_jsonl(const std::string& path);

// ---------------------------------------------------------------------------
// Batching
// ---------------------------------------------------------------------------

struct Batch {
    std::int64_t rows = 0;
    std::int64_t cols = 0;
    std::vector<std::int64_t> ids;            // rows*cols, PAD-filled
    std::vector<std::uint8_t> mask;           // 1 = real token, 0 = pad
    std::vector<std::int64_t> sample_index;   // row -> index into the sample list

    std::vector<std::int64_t> row_ids(std::int64_t r) const;
    std::vector<std::uint8_t> row_mask(std::int64_t r) const;
    std::int64_t row_len(std::int64_t r) const;
};

// Shuffle order is a pure function of (seed, epoch).
std::vector<Batch> make_batches(const std::vector<Sample>& samples, std::int64_t batch_size,
                                std::uint64_t seed, std::int64_t epoch);

}  // namespace evolm
