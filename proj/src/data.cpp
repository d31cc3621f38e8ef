#include "evolm/data.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>

#include "json.hpp"

#include "evolm/error.hpp"
#include "evolm/rng.hpp"

namespace evolm {

namespace {

const std::vector<std::string> kFillers = {
    "the", "a", "was", "is", "of", "and", "very", "most",
    "quite", "also", "often", "then", "still", "now", "here", "too"};

// Each template fixes its filler words, so they are predictable from local
// cues; only the attribute slot needs the (entity, relation) pairing.
struct Template {
    std::vector<std::string> words;  // with placeholders
    std::int64_t attr_index = 0;
};

std::vector<Template> make_templates(std::int64_t count, Rng rng) {
    // Placeholders: "<E>" entity, "<R>" relation, "<A>" attribute.
    const std::vector<std::vector<std::string>> patterns = {
        {"F", "<E>", "F", "<R>", "F", "<A>", "F"},
        {"<E>", "F", "<R>", "F", "<A>", "F", "F"},
        {"F", "F", "<E>", "<R>", "F", "F", "<A>"},
    };
    std::vector<Template> out;
    for (std::int64_t t = 0; t < count; ++t) {
        const auto& pat = patterns[static_cast<std::size_t>(t % 3)];
        Template tpl;
        for (const auto& w : pat) {
            if (w == "F") {
                tpl.words.push_back(kFillers[static_cast<std::size_t>(
                    rng.below(static_cast<std::int64_t>(kFillers.size())))]);
            } else {
                if (w == "<A>") {
                    tpl.attr_index = static_cast<std::int64_t>(tpl.words.size());
                }
                tpl.words.push_back(w);
            }
        }
        out.push_back(std::move(tpl));
    }
    return out;
}

std::string label_word(const char* prefix, std::int64_t i) {
    return std::string(prefix) + std::to_string(i);
}

}  // namespace

void SyntheticCorpusSpec::validate() const {
    if (num_templates <= 0 || num_entities <= 0 || num_relations <= 0 || samples <= 0) {
        throw ContractError("SyntheticCorpusSpec fields must all be positive");
    }
}

FactualCorpus generate_factual_corpus(const SyntheticCorpusSpec& spec) {
    spec.validate();
    Rng master(spec.seed);
    const auto templates = make_templates(spec.num_templates, master.fork(1));

    // Attribute table: attr(e, r) depends only on the pair, via a seeded
    // permutation so several distinct attributes appear.
    const std::int64_t num_attrs = std::max<std::int64_t>(2, spec.num_entities);
    std::vector<std::int64_t> perm(static_cast<std::size_t>(num_attrs));
    std::iota(perm.begin(), perm.end(), 0);
    Rng perm_rng = master.fork(2);
    perm_rng.shuffle(perm);

    const auto attr_of = [&](std::int64_t e, std::int64_t r) {
        return perm[static_cast<std::size_t>((e * spec.num_relations + r) % num_attrs)];
    };

    Rng draw = master.fork(3);
    FactualCorpus corpus;
    corpus.lines.reserve(static_cast<std::size_t>(spec.samples));
    for (std::int64_t s = 0; s < spec.samples; ++s) {
        const std::int64_t e = draw.below(spec.num_entities);
        const std::int64_t r = draw.below(spec.num_relations);
        const std::int64_t t = draw.below(spec.num_templates);
        const Template& tpl = templates[static_cast<std::size_t>(t)];
        const std::int64_t a = attr_of(e, r);

        std::ostringstream line;
        SlotInfo slot;
        slot.entity = e;
        slot.relation = r;
        slot.attribute = label_word("attr", a);
        for (std::size_t w = 0; w < tpl.words.size(); ++w) {
            if (w) {
                line << ' ';
            }
            const std::string& word = tpl.words[w];
            if (word == "<E>") {
                line << label_word("ent", e);
            } else if (word == "<R>") {
                line << label_word("rel", r);
            } else if (word == "<A>") {
                line << slot.attribute;
                slot.word_index = static_cast<std::int64_t>(w);
            } else {
                line << word;
            }
        }
        corpus.lines.push_back(line.str());
        corpus.slots.push_back(std::move(slot));
    }
    return corpus;
}

std::vector<Sample> encode_corpus(const Vocabulary& vocab,
                                  const std::vector<std::string>& lines) {
    std::vector<Sample> samples;
    samples.reserve(lines.size());
    for (std::size_t i = 0; i < lines.size(); ++i) {
        Sample s;
        s.token_ids = vocab.encode(lines[i], /*add_cls=*/true);
        s.source_line = static_cast<std::int64_t>(i);
        if (s.token_ids.size() <= 1) {
            throw DataError("corpus line " + std::to_string(i) + " is empty");
        }
        samples.push_back(std::move(s));
    }
    return samples;
}

namespace {

// Markers decide the label; fillers are noise. `flip` lists markers whose
// label is inverted relative to the base rule.
LabeledText render_task_sentence(Rng& rng, const std::vector<std::int64_t>& marker_label,
                                 const std::vector<std::uint8_t>& flip,
                                 const std::vector<std::string>& filler_pool,
                                 std::int64_t sentence_len) {
    const std::int64_t num_markers = static_cast<std::int64_t>(marker_label.size());
    const std::int64_t marker = rng.below(num_markers);
    const std::int64_t marker_pos = rng.below(sentence_len);
    std::ostringstream os;
    for (std::int64_t w = 0; w < sentence_len; ++w) {
        if (w) {
            os << ' ';
        }
        if (w == marker_pos) {
            os << label_word("mk", marker);
        } else {
            os << filler_pool[static_cast<std::size_t>(
                rng.below(static_cast<std::int64_t>(filler_pool.size())))];
        }
    }
    std::int64_t label = marker_label[static_cast<std::size_t>(marker)];
    if (flip[static_cast<std::size_t>(marker)]) {
        label = 1 - label;
    }
    return LabeledText{os.str(), label};
}

std::vector<std::string> task_filler_pool(std::int64_t lo, std::int64_t hi) {
    std::vector<std::string> pool;
    for (std::int64_t i = lo; i < hi; ++i) {
        pool.push_back(label_word("tf", i));
    }
    return pool;
}

}  // namespace

std::pair<std::vector<LabeledText>, std::vector<LabeledText>> generate_task_pair(
    std::uint64_t seed, double relatedness, const TaskGenOptions& opts) {
    if (relatedness < 0.0 || relatedness > 1.0) {
        throw ContractError("relatedness must lie in [0, 1]");
    }
    if (opts.num_markers < 2 || opts.num_markers % 2 != 0) {
        throw ContractError("num_markers must be even and at least 2");
    }
    Rng master(seed);

    // Balanced base rule: a random half of the markers map to label 1.
    std::vector<std::int64_t> marker_label(static_cast<std::size_t>(opts.num_markers), 0);
    {
        std::vector<std::int64_t> order(static_cast<std::size_t>(opts.num_markers));
        std::iota(order.begin(), order.end(), 0);
        Rng r = master.fork(1);
        r.shuffle(order);
        for (std::int64_t i = 0; i < opts.num_markers / 2; ++i) {
            marker_label[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] = 1;
        }
    }

    // Target rule: flip round((1-relatedness)/2 * M) markers. relatedness=1
    // keeps the rule identical; relatedness=0 flips exactly half, so the two
    // rules agree on chance level only.
    const std::int64_t flips = static_cast<std::int64_t>(
        std::llround((1.0 - relatedness) / 2.0 * static_cast<double>(opts.num_markers)));
    std::vector<std::uint8_t> no_flip(static_cast<std::size_t>(opts.num_markers), 0);
    std::vector<std::uint8_t> target_flip = no_flip;
    {
        std::vector<std::int64_t> order(static_cast<std::size_t>(opts.num_markers));
        std::iota(order.begin(), order.end(), 0);
        Rng r = master.fork(2);
        r.shuffle(order);
        for (std::int64_t i = 0; i < flips; ++i) {
            target_flip[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] = 1;
        }
    }

    const auto pool = task_filler_pool(0, 10);
    std::vector<LabeledText> source, target;
    Rng rs = master.fork(3);
    Rng rt = master.fork(4);
    for (std::int64_t i = 0; i < opts.samples_per_task; ++i) {
        source.push_back(
            render_task_sentence(rs, marker_label, no_flip, pool, opts.sentence_len));
        target.push_back(
            render_task_sentence(rt, marker_label, target_flip, pool, opts.sentence_len));
    }
    return {std::move(source), std::move(target)};
}

ShiftPair generate_shift_pair(std::uint64_t seed, const ShiftGenOptions& opts) {
    if (opts.num_markers < 2 || opts.num_markers % 2 != 0) {
        throw ContractError("num_markers must be even and at least 2");
    }
    Rng master(seed);
    std::vector<std::int64_t> marker_label(static_cast<std::size_t>(opts.num_markers), 0);
    {
        std::vector<std::int64_t> order(static_cast<std::size_t>(opts.num_markers));
        std::iota(order.begin(), order.end(), 0);
        Rng r = master.fork(1);
        r.shuffle(order);
        for (std::int64_t i = 0; i < opts.num_markers / 2; ++i) {
            marker_label[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] = 1;
        }
    }
    const std::vector<std::uint8_t> no_flip(static_cast<std::size_t>(opts.num_markers), 0);
    const auto pool_a = task_filler_pool(0, 10);
    const auto pool_b = task_filler_pool(10, 20);

    ShiftPair out;
    Rng ra = master.fork(2);
    for (std::int64_t i = 0; i < opts.seed_size; ++i) {
        out.seed_train.push_back(
            render_task_sentence(ra, marker_label, no_flip, pool_a, opts.sentence_len));
    }
    Rng rb = master.fork(3);
    for (std::int64_t i = 0; i < opts.unlabeled_size; ++i) {
        out.target_unlabeled.push_back(
            render_task_sentence(rb, marker_label, no_flip, pool_b, opts.sentence_len).text);
    }
    Rng rc = master.fork(4);
    for (std::int64_t i = 0; i < opts.eval_size; ++i) {
        out.target_eval.push_back(
            render_task_sentence(rc, marker_label, no_flip, pool_b, opts.sentence_len));
    }
    return out;
}

std::vector<LabeledExample> encode_examples(const Vocabulary& vocab,
                                            const std::vector<LabeledText>& texts) {
    std::vector<LabeledExample> out;
    out.reserve(texts.size());
    for (const auto& t : texts) {
        if (t.label < 0) {
            throw DataError("negative label in task data");
        }
        LabeledExample ex;
        ex.token_ids = vocab.encode(t.text, /*add_cls=*/true);
        ex.label = t.label;
        out.push_back(std::move(ex));
    }
    return out;
}

void save_labeled_jsonl(const std::string& path, const std::vector<LabeledText>& rows) {
    std::ofstream out(path);
    if (!out) {
        throw DataError("cannot write task file " + path);
    }
    for (const auto& r : rows) {
        nlohmann::ordered_json j;
        j["text"] = r.text;
        j["label"] = r.label;
        out << j.dump() << '\n';
    }
}

std::vector<LabeledText> load_labeled_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot read task file " + path);
    }
    std::vector<LabeledText> rows;
    std::string line;
    std::int64_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) {
            continue;
        }
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw DataError(path + ":" + std::to_string(lineno) + ": malformed JSONL: " +
                            e.what());
        }
        if (!j.contains("text") || !j.contains("label")) {
            throw DataError(path + ":" + std::to_string(lineno) +
                            ": expected fields \"text\" and \"label\"");
        }
        rows.push_back(LabeledText{j["text"].get<std::string>(), j["label"].get<std::int64_t>()});
    }
    return rows;
}

std::vector<std::int64_t> Batch::row_ids(std::int64_t r) const {
    return {ids.begin() + r * cols, ids.begin() + r * cols + row_len(r)};
}

std::vector<std::uint8_t> Batch::row_mask(std::int64_t r) const {
    return {mask.begin() + r * cols, mask.begin() + r * cols + row_len(r)};
}

std::int64_t Batch::row_len(std::int64_t r) const {
    std::int64_t len = 0;
    for (std::int64_t c = 0; c < cols; ++c) {
        len += mask[static_cast<std::size_t>(r * cols + c)];
    }
    return len;
}

std::vector<Batch> make_batches(const std::vector<Sample>& samples, std::int64_t batch_size,
                                std::uint64_t seed, std::int64_t epoch) {
    if (batch_size < 1) {
        throw ContractError("batch_size must be at least 1");
    }
    std::vector<std::int64_t> order(samples.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng(Rng::mix(seed, static_cast<std::uint64_t>(epoch)));
    rng.shuffle(order);

    std::vector<Batch> batches;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(batch_size)) {
        const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(batch_size));
        Batch b;
        b.rows = static_cast<std::int64_t>(end - start);
        std::int64_t maxlen = 0;
        for (std::size_t i = start; i < end; ++i) {
            maxlen = std::max(maxlen, static_cast<std::int64_t>(
                                          samples[static_cast<std::size_t>(order[i])].token_ids.size()));
        }
        b.cols = maxlen;
        b.ids.assign(static_cast<std::size_t>(b.rows * b.cols), Vocabulary::kPad);
        b.mask.assign(static_cast<std::size_t>(b.rows * b.cols), 0);
        for (std::size_t i = start; i < end; ++i) {
            const auto& s = samples[static_cast<std::size_t>(order[i])];
            const std::int64_t r = static_cast<std::int64_t>(i - start);
            b.sample_index.push_back(order[i]);
            for (std::size_t c = 0; c < s.token_ids.size(); ++c) {
                b.ids[static_cast<std::size_t>(r * b.cols) + c] = s.token_ids[c];
                b.mask[static_cast<std::size_t>(r * b.cols) + c] = 1;
            }
        }
        batches.push_back(std::move(b));
    }
    return batches;
}

}  // namespace evolm
