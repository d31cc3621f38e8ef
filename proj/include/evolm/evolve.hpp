#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "evolm/data.hpp"
#include "evolm/encoder.hpp"
#include "evolm/metrics.hpp"
#include "evolm/pretrain.hpp"
#include "evolm/rng.hpp"

namespace evolm {

// A probability vector over the vocabulary.
struct LabelDistribution {
    std::vector<double> probs;

    void validate() const;  // entries >= 0, sum within 1e-9 of 1
    bool is_one_hot() const;
    static LabelDistribution one_hot(std::int64_t size, std::int64_t index);
};

// A training-corpus position whose true token the model fails to rank
// strictly first when re-predicting the unmasked sentence.
struct NeglectedToken {
    std::int64_t position = 0;
    std::int64_t truth_id = 0;
    double truth_prob = 0.0;
    std::int64_t top_id = 0;  // best token other than the truth
    double top_prob = 0.0;
};

// Per-sample records, parallel to the corpus.
using NeglectedTokenIndex = std::vector<std::vector<NeglectedToken>>;

std::int64_t total_neglected(const NeglectedTokenIndex& index);

// Stage 1: re-predict every unmasked sample and collect the positions where
// the truth is not the unique argmax (ties count as neglected; a position is
// learned only when truth_prob > top_prob + margin_tau). Read-only on the
// encoder; offline.
NeglectedTokenIndex self_question_scan(const Encoder& encoder,
                                       const std::vector<Sample>& corpus,
                                       double margin_tau = 0.0, int threads = 0);

// Stage-2 mask selection: budget = ceil(rate * eligible); floor(mix * budget)
// positions are reserved for uniform-random picks, the rest go to neglected
// positions ranked by ascending truth_prob (ties by position); any shortfall
// falls back to random positions. All selections are replaced by [MASK].
MaskPlan select_evolution_masks(const Sample& sample, const std::vector<NeglectedToken>& entries,
                                double mask_budget_rate, double random_mix_rate, Rng& rng);

// y~ = (1-alpha)*y + alpha*r
LabelDistribution rectified_smooth_label(const LabelDistribution& y, const LabelDistribution& r,
                                         double alpha);

// Per-sample stage-2 loss: reference probabilities r come from the original
// (unmasked) sentence with gradients blocked, prediction probabilities p from
// the masked sentence; the loss sums CE(p, y~) over the plan's positions.
// `masked` must equal `original` outside the plan and the plan's
// replacements at its positions.
std::pair<Tensor, std::int64_t> evolution_loss_sum(Graph& g, const Encoder& encoder,
                                                   const std::vector<std::int64_t>& original,
                                                   const std::vector<std::int64_t>& masked,
                                                   const MaskPlan& plan, double alpha);

// Batch mean of evolution_loss_sum; forward only. Batches must be aligned.
double evolution_step_loss(const Encoder& encoder,
                           const std::vector<std::vector<std::int64_t>>& originals,
                           const std::vector<std::vector<std::int64_t>>& maskeds,
                           const std::vector<MaskPlan>& plans, double alpha, int threads = 0);

struct SelfEvolutionConfig {
    double alpha = 0.5;
    std::int64_t steps = 500;
    std::int64_t batch_size = 16;
    double mask_budget_rate = 0.15;
    double random_mix_rate = 0.2;
    double margin_tau = 0.0;
    double lr = 1e-3;
    double weight_decay = 0.01;
    double clip_norm = 1.0;
    double warmup_frac = 0.0;
    bool scan_once = false;         // fidelity mode: single offline scan
    double rescan_frac = 0.25;      // rescan every rescan_frac * steps
    std::int64_t eval_interval = 100;
    std::int64_t eval_samples = 96;
    std::uint64_t seed = 0;
    int threads = 0;

    void validate() const;
};

// Phase-2 loop: scan, train on neglected-token masks with rectified smooth
// labels, rescan periodically. Emits "evolve"-phase rows plus
// {"step","phase","neglected_count"} rows at every scan.
void self_evolve(Encoder& encoder, const std::vector<Sample>& corpus,
                 const std::vector<SlotInfo>& slots, const SelfEvolutionConfig& config,
                 MetricsWriter& metrics);

// JSON Lines: {"sample":..,"pos":..,"truth":..,"truth_p":..,"top":..,"top_p":..}
void save_index_jsonl(const std::string& path, const NeglectedTokenIndex& index);
NeglectedTokenIndex load_index_jsonl(const std::string& path, std::int64_t num_samples);

}  // namespace evolm
