#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <utility>
#include <vector>

#include "evolm/data.hpp"
#include "evolm/encoder.hpp"
#include "evolm/metrics.hpp"
#include "evolm/rng.hpp"
#include "evolm/tensor.hpp"

namespace evolm {

enum class MaskAction : std::uint8_t { kMask, kRandom, kKeep };

struct MaskPlan {
    std::vector<std::int64_t> positions;     // strictly increasing
    std::vector<MaskAction> actions;         // parallel to positions
    std::vector<std::int64_t> replacements;  // token to substitute at each position
    std::vector<std::int64_t> originals;     // ground truth at each position
};

// ceil(mask_rate * eligible) positions (minimum 1) drawn uniformly without
// replacement among non-special tokens; actions 80% MASK / 10% random token /
// 10% keep, drawn per position. Returns nullopt when the sample has no
// eligible token (caller drops it).
std::optional<MaskPlan> random_mask(const Sample& sample, double mask_rate, Rng& rng,
                                    std::int64_t vocab_size);

std::vector<std::int64_t> apply_plan(const std::vector<std::int64_t>& ids, const MaskPlan& plan);

// Sum (not mean) of cross entropy at the plan's positions vs one-hot
// originals; building block for deterministic batch averaging.
Tensor mlm_loss_sum(Graph& g, const Tensor& logits, const MaskPlan& plan);

// Mean cross entropy over masked positions. Empty plan is a contract error.
Tensor mlm_loss(Graph& g, const Tensor& logits, const MaskPlan& plan);

struct PretrainConfig {
    std::int64_t steps = 2000;
    std::int64_t batch_size = 16;
    double lr = 1e-3;
    double warmup_frac = 0.05;
    double mask_rate = 0.15;
    double weight_decay = 0.01;
    double clip_norm = 1.0;
    std::int64_t eval_interval = 100;
    std::int64_t eval_samples = 96;
    std::uint64_t seed = 0;
    int threads = 0;
};

// Fixed evaluation set: per-sample plans frozen once so metric trends are
// comparable across steps.
struct EvalSet {
    std::vector<std::pair<std::int64_t, MaskPlan>> masked;     // (sample, plan)
    std::vector<std::pair<std::int64_t, std::int64_t>> slots;  // (sample, position)
};

EvalSet build_eval_set(const std::vector<Sample>& samples, const std::vector<SlotInfo>& slots,
                       std::int64_t eval_samples, double mask_rate, std::uint64_t seed,
                       std::int64_t vocab_size);

double masked_accuracy(const Encoder& encoder, const std::vector<Sample>& samples,
                       const EvalSet& eval, int threads);
double slot_accuracy(const Encoder& encoder, const std::vector<Sample>& samples,
                     const EvalSet& eval, int threads);

// Phase-1 loop: random masking, MLM loss, AdamW with warmup and gradient
// clipping. Emits {"step","loss","masked_acc","slot_acc","phase"} rows.
void pretrain(Encoder& encoder, const std::vector<Sample>& corpus,
              const std::vector<SlotInfo>& slots, const PretrainConfig& config,
              MetricsWriter& metrics, const char* phase = "mlm");

// Shared batch machinery: runs per-sample forward closures (returning a
// sum-loss and a position count), seeds each backward with 1/total, folds the
// per-sample gradients in batch order, and returns the mean loss.
double batched_loss_backward(
    std::int64_t n, int threads,
    const std::function<std::pair<Tensor, std::int64_t>(Graph&, std::int64_t)>& sample_loss);

}  // namespace evolm
