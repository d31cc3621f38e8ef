#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "evolm/ops.hpp"
#include "evolm/tensor.hpp"

namespace evolm {

struct ModelConfig {
    std::int64_t layers = 2;
    std::int64_t hidden = 64;
    std::int64_t ffn = 256;
    std::int64_t heads = 4;
    std::int64_t head_size = 16;
    std::int64_t vocab_size = 256;
    std::int64_t max_seq_len = 32;
    std::int64_t max_relative_distance = 8;  // k; buckets span [0, 2k]
    std::uint64_t seed = 0;

    void validate() const;  // throws ConfigError

    // The architecture the full-scale run used; representable but never
    // instantiated at desk scale.
    static ModelConfig paper_preset();
    static ModelConfig tiny_preset(std::int64_t vocab);
};

// clip(i - j, -k, k) + k
std::int64_t relative_bucket(std::int64_t i, std::int64_t j, std::int64_t k);

// Flattened [seq x seq] bucket indices for gather_cols_per_row.
std::vector<std::int64_t> relative_bucket_matrix(std::int64_t seq, std::int64_t k);

struct AttentionHeadWeights {
    Tensor wq, wk, wv;    // hidden x head_size content projections
    Tensor wqp, wkp;      // hidden x head_size position projections (no bias)
    Tensor bq, bk, bv;    // head_size
};

struct LayerWeights {
    std::vector<AttentionHeadWeights> heads;
    Tensor wo, bo;              // hidden x hidden, hidden
    Tensor ln1_g, ln1_b;        // pre-attention norm
    Tensor ln2_g, ln2_b;        // pre-FFN norm
    Tensor ffn_w1, ffn_b1;      // hidden x ffn, ffn
    Tensor ffn_w2, ffn_b2;      // ffn x hidden, hidden
};

// Optional capture of per-head attention probabilities for inspection.
struct AttentionTrace {
    std::vector<Tensor> head_probs;  // one [seq x seq] tensor per head
};

// One disentangled-attention block on already-normalized states: raw scores
// are c2c + c2p + p2c over relative-position buckets, scaled by
// 1/sqrt(3*head_size), pad columns filled with ops::kNegFill before softmax.
Tensor disentangled_attention(Graph& g, const LayerWeights& lw, const Tensor& x,
                              const Tensor& pos_embed, const std::vector<std::uint8_t>& mask,
                              std::int64_t k, AttentionTrace* trace = nullptr);

// Pre-layer-norm transformer encoder with content/position-decomposed
// attention, shared relative-position embeddings, and an MLM head tied to the
// transposed token embedding.
class Encoder {
  public:
    static Encoder init(const ModelConfig& config);

    const ModelConfig& config() const { return config_; }

    Tensor token_embedding() const { return token_embedding_; }
    Tensor position_embedding() const { return position_embedding_; }
    Tensor mlm_bias() const { return mlm_bias_; }
    const std::vector<LayerWeights>& layer_weights() const { return layers_; }

    // Stable registry order; drives the optimizer, checkpoints and checksums.
    std::vector<std::pair<std::string, Tensor>> named_parameters() const;
    std::vector<Tensor> parameters() const;
    std::int64_t parameter_count() const;
    std::uint64_t parameter_checksum() const;
    void set_trainable(bool trainable);

    // Final hidden states [len x hidden]. A defined `prompt` is prepended to
    // the token embeddings before layer 1 (mask extended implicitly).
    Tensor forward_hidden(Graph& g, const std::vector<std::int64_t>& ids,
                          const std::vector<std::uint8_t>& mask,
                          const Tensor& prompt = Tensor()) const;

    // Runs the transformer blocks on caller-provided input states, one row
    // per position; used when the embeddings are normalized or perturbed
    // before entering layer 1.
    Tensor forward_hidden_from(Graph& g, const Tensor& states,
                               const std::vector<std::uint8_t>& mask) const;

    // Token embedding rows for ids (no prompt, no blocks).
    Tensor embed(Graph& g, const std::vector<std::int64_t>& ids) const;

    // MLM logits [len x vocab].
    Tensor forward_mlm(Graph& g, const std::vector<std::int64_t>& ids,
                       const std::vector<std::uint8_t>& mask) const;

  private:
    ModelConfig config_;
    Tensor token_embedding_;     // vocab x hidden
    Tensor position_embedding_;  // (2k+1) x hidden, shared across layers
    std::vector<LayerWeights> layers_;
    Tensor final_ln_g_, final_ln_b_;
    Tensor mlm_bias_;  // vocab
};

// FNV-1a over the raw bytes of the given tensors, in order.
std::uint64_t checksum_parameters(const std::vector<Tensor>& params);

}  // namespace evolm
