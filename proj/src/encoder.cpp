#include "evolm/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "evolm/error.hpp"
#include "evolm/rng.hpp"
#include "evolm/vocab.hpp"

namespace evolm {

void ModelConfig::validate() const {
    if (layers < 1 || hidden < 1 || ffn < 1 || heads < 1 || head_size < 1 || vocab_size < 1) {
        throw ConfigError("model dimensions must be positive");
    }
    if (heads * head_size != hidden) {
        throw ConfigError("heads * head_size must equal hidden (" + std::to_string(heads) +
                          " * " + std::to_string(head_size) +
                          " != " + std::to_string(hidden) + ")");
    }
    if (max_relative_distance < 1) {
        throw ConfigError("max_relative_distance must be at least 1");
    }
    if (max_seq_len < 2) {
        throw ConfigError("max_seq_len must be at least 2");
    }
}

ModelConfig ModelConfig::paper_preset() {
    ModelConfig c;
    c.layers = 24;
    c.hidden = 4096;
    c.ffn = 16384;
    c.heads = 32;
    c.head_size = 128;
    c.vocab_size = 128000;
    c.max_seq_len = 512;
    c.max_relative_distance = 128;
    return c;
}

ModelConfig ModelConfig::tiny_preset(std::int64_t vocab) {
    ModelConfig c;
    c.layers = 2;
    c.hidden = 64;
    c.ffn = 256;
    c.heads = 4;
    c.head_size = 16;
    c.vocab_size = vocab;
    c.max_seq_len = 32;
    c.max_relative_distance = 8;
    return c;
}

std::int64_t relative_bucket(std::int64_t i, std::int64_t j, std::int64_t k) {
    return std::clamp(i - j, -k, k) + k;
}

std::vector<std::int64_t> relative_bucket_matrix(std::int64_t seq, std::int64_t k) {
    std::vector<std::int64_t> out(static_cast<std::size_t>(seq * seq));
    for (std::int64_t i = 0; i < seq; ++i) {
        for (std::int64_t j = 0; j < seq; ++j) {
            out[static_cast<std::size_t>(i * seq + j)] = relative_bucket(i, j, k);
        }
    }
    return out;
}

Tensor disentangled_attention(Graph& g, const LayerWeights& lw, const Tensor& x,
                              const Tensor& pos_embed, const std::vector<std::uint8_t>& mask,
                              std::int64_t k, AttentionTrace* trace) {
    const std::int64_t seq = x.dim(0);
    if (static_cast<std::int64_t>(mask.size()) != seq) {
        throw DimensionError("attention mask length " + std::to_string(mask.size()) +
                             " does not match sequence length " + std::to_string(seq));
    }
    const std::int64_t head_size = lw.heads.front().wq.dim(1);
    const double score_scale = 1.0 / std::sqrt(3.0 * static_cast<double>(head_size));
    const auto rel = relative_bucket_matrix(seq, k);

    // Pad columns are removed from every query's distribution.
    std::vector<std::uint8_t> keep(static_cast<std::size_t>(seq * seq), 0);
    for (std::int64_t i = 0; i < seq; ++i) {
        for (std::int64_t j = 0; j < seq; ++j) {
            keep[static_cast<std::size_t>(i * seq + j)] = mask[static_cast<std::size_t>(j)];
        }
    }

    std::vector<Tensor> head_outputs;
    head_outputs.reserve(lw.heads.size());
    for (const auto& h : lw.heads) {
        Tensor qc = ops::add_row_bias(g, ops::matmul(g, x, h.wq), h.bq);
        Tensor kc = ops::add_row_bias(g, ops::matmul(g, x, h.wk), h.bk);
        Tensor vc = ops::add_row_bias(g, ops::matmul(g, x, h.wv), h.bv);
        Tensor qp = ops::matmul(g, pos_embed, h.wqp);  // (2k+1) x hs
        Tensor kp = ops::matmul(g, pos_embed, h.wkp);

        // content-to-content
        Tensor c2c = ops::matmul(g, qc, ops::transpose(g, kc));
        // content-to-position: Qc(i) . Kp(bucket(i, j))
        Tensor c2p =
            ops::gather_cols_per_row(g, ops::matmul(g, qc, ops::transpose(g, kp)), rel, seq);
        // position-to-content: Kc(j) . Qp(bucket(j, i))
        Tensor p2c = ops::transpose(
            g, ops::gather_cols_per_row(g, ops::matmul(g, kc, ops::transpose(g, qp)), rel, seq));

        Tensor scores = ops::scale(g, ops::add(g, ops::add(g, c2c, c2p), p2c), score_scale);
        scores = ops::masked_fill(g, scores, keep, ops::kNegFill);
        Tensor probs = ops::softmax(g, scores);
        if (trace) {
            trace->head_probs.push_back(probs);
        }
        head_outputs.push_back(ops::matmul(g, probs, vc));
    }
    Tensor merged = ops::concat_cols(g, head_outputs);
    return ops::add_row_bias(g, ops::matmul(g, merged, lw.wo), lw.bo);
}

Encoder Encoder::init(const ModelConfig& config) {
    config.validate();
    Rng rng(config.seed);
    constexpr double kInitStd = 0.02;

    const auto weight = [&rng](std::int64_t r, std::int64_t c) {
        return Tensor::randn({r, c}, rng, kInitStd, /*requires_grad=*/true);
    };
    const auto zeros1 = [](std::int64_t n) { return Tensor::zeros({n}, /*requires_grad=*/true); };
    const auto ones1 = [](std::int64_t n) {
        Tensor t = Tensor::full({n}, 1.0);
        t.set_requires_grad(true);
        return t;
    };

    Encoder e;
    e.config_ = config;
    e.token_embedding_ = weight(config.vocab_size, config.hidden);
    e.position_embedding_ = weight(2 * config.max_relative_distance + 1, config.hidden);
    for (std::int64_t l = 0; l < config.layers; ++l) {
        LayerWeights lw;
        for (std::int64_t h = 0; h < config.heads; ++h) {
            AttentionHeadWeights hw;
            hw.wq = weight(config.hidden, config.head_size);
            hw.wk = weight(config.hidden, config.head_size);
            hw.wv = weight(config.hidden, config.head_size);
            hw.wqp = weight(config.hidden, config.head_size);
            hw.wkp = weight(config.hidden, config.head_size);
            hw.bq = zeros1(config.head_size);
            hw.bk = zeros1(config.head_size);
            hw.bv = zeros1(config.head_size);
            lw.heads.push_back(std::move(hw));
        }
        lw.wo = weight(config.hidden, config.hidden);
        lw.bo = zeros1(config.hidden);
        lw.ln1_g = ones1(config.hidden);
        lw.ln1_b = zeros1(config.hidden);
        lw.ln2_g = ones1(config.hidden);
        lw.ln2_b = zeros1(config.hidden);
        lw.ffn_w1 = weight(config.hidden, config.ffn);
        lw.ffn_b1 = zeros1(config.ffn);
        lw.ffn_w2 = weight(config.ffn, config.hidden);
        lw.ffn_b2 = zeros1(config.hidden);
        e.layers_.push_back(std::move(lw));
    }
    e.final_ln_g_ = ones1(config.hidden);
    e.final_ln_b_ = zeros1(config.hidden);
    e.mlm_bias_ = zeros1(config.vocab_size);
    return e;
}

std::vector<std::pair<std::string, Tensor>> Encoder::named_parameters() const {
    std::vector<std::pair<std::string, Tensor>> out;
    out.emplace_back("embed.token", token_embedding_);
    out.emplace_back("embed.position", position_embedding_);
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        const auto& lw = layers_[l];
        const std::string prefix = "layer" + std::to_string(l) + ".";
        for (std::size_t h = 0; h < lw.heads.size(); ++h) {
            const auto& hw = lw.heads[h];
            const std::string hp = prefix + "head" + std::to_string(h) + ".";
            out.emplace_back(hp + "wq", hw.wq);
            out.emplace_back(hp + "wk", hw.wk);
            out.emplace_back(hp + "wv", hw.wv);
            out.emplace_back(hp + "wqp", hw.wqp);
            out.emplace_back(hp + "wkp", hw.wkp);
            out.emplace_back(hp + "bq", hw.bq);
            out.emplace_back(hp + "bk", hw.bk);
            out.emplace_back(hp + "bv", hw.bv);
        }
        out.emplace_back(prefix + "wo", lw.wo);
        out.emplace_back(prefix + "bo", lw.bo);
        out.emplace_back(prefix + "ln1.g", lw.ln1_g);
        out.emplace_back(prefix + "ln1.b", lw.ln1_b);
        out.emplace_back(prefix + "ln2.g", lw.ln2_g);
        out.emplace_back(prefix + "ln2.b", lw.ln2_b);
        out.emplace_back(prefix + "ffn.w1", lw.ffn_w1);
        out.emplace_back(prefix + "ffn.b1", lw.ffn_b1);
        out.emplace_back(prefix + "ffn.w2", lw.ffn_w2);
        out.emplace_back(prefix + "ffn.b2", lw.ffn_b2);
    }
    out.emplace_back("final_ln.g", final_ln_g_);
    out.emplace_back("final_ln.b", final_ln_b_);
    out.emplace_back("mlm.bias", mlm_bias_);
    return out;
}

std::vector<Tensor> Encoder::parameters() const {
    std::vector<Tensor> out;
    for (auto& [name, t] : named_parameters()) {
        (void)name;
        out.push_back(t);
    }
    return out;
}

std::int64_t Encoder::parameter_count() const {
    std::int64_t n = 0;
    for (const auto& t : parameters()) {
        n += t.size();
    }
    return n;
}

std::uint64_t checksum_parameters(const std::vector<Tensor>& params) {
    std::uint64_t hash = 0xcbf29ce484222325ull;
    for (const auto& t : params) {
        const auto* bytes = reinterpret_cast<const unsigned char*>(t.data());
        const std::size_t n = static_cast<std::size_t>(t.size()) * sizeof(double);
        for (std::size_t i = 0; i < n; ++i) {
            hash ^= bytes[i];
            hash *= 0x100000001b3ull;
        }
    }
    return hash;
}

std::uint64_t Encoder::parameter_checksum() const { return checksum_parameters(parameters()); }

void Encoder::set_trainable(bool trainable) {
    for (auto& t : parameters()) {
        t.set_requires_grad(trainable);
    }
}

Tensor Encoder::embed(Graph& g, const std::vector<std::int64_t>& ids) const {
    if (ids.empty()) {
        throw DimensionError("empty input sequence");
    }
    if (static_cast<std::int64_t>(ids.size()) > config_.max_seq_len) {
        throw DimensionError("sequence length " + std::to_string(ids.size()) +
                             " exceeds max_seq_len " + std::to_string(config_.max_seq_len));
    }
    for (const auto id : ids) {
        if (id < 0 || id >= config_.vocab_size) {
            throw VocabError("token id " + std::to_string(id) + " out of range [0, " +
                             std::to_string(config_.vocab_size) + ")");
        }
    }
    return ops::gather_rows(g, token_embedding_, ids);
}

Tensor Encoder::forward_hidden(Graph& g, const std::vector<std::int64_t>& ids,
                               const std::vector<std::uint8_t>& mask,
                               const Tensor& prompt) const {
    if (ids.size() != mask.size()) {
        throw DimensionError("ids and mask lengths differ");
    }
    Tensor x = embed(g, ids);
    std::vector<std::uint8_t> full_mask = mask;
    if (prompt.defined()) {
        if (prompt.ndim() != 2 || prompt.dim(1) != config_.hidden) {
            throw DimensionError("prompt shape " + shape_str(prompt.shape()) +
                                 " does not match hidden size " + std::to_string(config_.hidden));
        }
        x = ops::concat_rows(g, prompt, x);
        full_mask.insert(full_mask.begin(), static_cast<std::size_t>(prompt.dim(0)), 1);
    }
    return forward_hidden_from(g, x, full_mask);
}

Tensor Encoder::forward_hidden_from(Graph& g, const Tensor& states,
                                    const std::vector<std::uint8_t>& mask) const {
    if (states.ndim() != 2 || states.dim(1) != config_.hidden) {
        throw DimensionError("input states shape " + shape_str(states.shape()) +
                             " does not match hidden size " + std::to_string(config_.hidden));
    }
    if (static_cast<std::int64_t>(mask.size()) != states.dim(0)) {
        throw DimensionError("states and mask lengths differ");
    }
    Tensor x = states;
    const std::vector<std::uint8_t>& full_mask = mask;

    for (const auto& lw : layers_) {
        Tensor attn_in = ops::layer_norm(g, x, lw.ln1_g, lw.ln1_b);
        Tensor attn = disentangled_attention(g, lw, attn_in, position_embedding_, full_mask,
                                             config_.max_relative_distance);
        x = ops::add(g, x, attn);

        Tensor ffn_in = ops::layer_norm(g, x, lw.ln2_g, lw.ln2_b);
        Tensor h1 = ops::gelu(g, ops::add_row_bias(g, ops::matmul(g, ffn_in, lw.ffn_w1), lw.ffn_b1));
        Tensor h2 = ops::add_row_bias(g, ops::matmul(g, h1, lw.ffn_w2), lw.ffn_b2);
        x = ops::add(g, x, h2);
    }
    return ops::layer_norm(g, x, final_ln_g_, final_ln_b_);
}

Tensor Encoder::forward_mlm(Graph& g, const std::vector<std::int64_t>& ids,
                            const std::vector<std::uint8_t>& mask) const {
    Tensor hidden = forward_hidden(g, ids, mask);
    // Output projection is literally the embedding matrix transposed.
    return ops::add_row_bias(g, ops::matmul(g, hidden, ops::transpose(g, token_embedding_)),
                             mlm_bias_);
}

}  // namespace evolm
