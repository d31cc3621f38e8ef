#include "evolm/pretrain.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>

#include "evolm/error.hpp"
#include "evolm/optim.hpp"
#include "evolm/parallel.hpp"

namespace evolm {

namespace {

constexpr std::uint64_t kMaskStreamTag = 0x6d61736b;  // plan draws
constexpr std::uint64_t kEvalStreamTag = 0x6576616c;  // frozen eval plans

std::vector<std::int64_t> eligible_positions(const std::vector<std::int64_t>& ids) {
    std::vector<std::int64_t> out;
    for (std::size_t p = 0; p < ids.size(); ++p) {
        if (!Vocabulary::is_special(ids[p])) {
            out.push_back(static_cast<std::int64_t>(p));
        }
    }
    return out;
}

std::int64_t argmax_row(const double* row, std::int64_t n) {
    std::int64_t best = 0;
    for (std::int64_t i = 1; i < n; ++i) {
        if (row[i] > row[best]) {
            best = i;
        }
    }
    return best;
}

}  // namespace

std::optional<MaskPlan> random_mask(const Sample& sample, double mask_rate, Rng& rng,
                                    std::int64_t vocab_size) {
    if (mask_rate <= 0.0 || mask_rate > 0.5) {
        throw ContractError("mask_rate must lie in (0, 0.5]");
    }
    std::vector<std::int64_t> eligible = eligible_positions(sample.token_ids);
    if (eligible.empty()) {
        return std::nullopt;
    }
    const std::int64_t want = std::max<std::int64_t>(
        1, static_cast<std::int64_t>(
               std::ceil(mask_rate * static_cast<double>(eligible.size()))));
    rng.shuffle(eligible);
    eligible.resize(static_cast<std::size_t>(std::min<std::int64_t>(
        want, static_cast<std::int64_t>(eligible.size()))));
    std::sort(eligible.begin(), eligible.end());

    MaskPlan plan;
    for (const auto pos : eligible) {
        const std::int64_t original = sample.token_ids[static_cast<std::size_t>(pos)];
        const double u = rng.uniform();
        MaskAction action;
        std::int64_t replacement;
        if (u < 0.8) {
            action = MaskAction::kMask;
            replacement = Vocabulary::kMask;
        } else if (u < 0.9) {
            action = MaskAction::kRandom;
            replacement =
                Vocabulary::kNumSpecials + rng.below(vocab_size - Vocabulary::kNumSpecials);
        } else {
            action = MaskAction::kKeep;
            replacement = original;
        }
        plan.positions.push_back(pos);
        plan.actions.push_back(action);
        plan.replacements.push_back(replacement);
        plan.originals.push_back(original);
    }
    return plan;
}

std::vector<std::int64_t> apply_plan(const std::vector<std::int64_t>& ids, const MaskPlan& plan) {
    std::vector<std::int64_t> out = ids;
    for (std::size_t i = 0; i < plan.positions.size(); ++i) {
        out[static_cast<std::size_t>(plan.positions[i])] = plan.replacements[i];
    }
    return out;
}

Tensor mlm_loss_sum(Graph& g, const Tensor& logits, const MaskPlan& plan) {
    if (plan.positions.empty()) {
        throw ContractError("mask plan is empty");
    }
    const std::int64_t vocab = logits.dim(1);
    Tensor rows = ops::gather_rows(g, logits, plan.positions);
    Tensor probs = ops::softmax(g, rows);
    Tensor targets = Tensor::zeros({static_cast<std::int64_t>(plan.positions.size()), vocab});
    for (std::size_t i = 0; i < plan.originals.size(); ++i) {
        targets.data()[static_cast<std::int64_t>(i) * vocab + plan.originals[i]] = 1.0;
    }
    return ops::cross_entropy_rowsum(g, probs, targets);
}

Tensor mlm_loss(Graph& g, const Tensor& logits, const MaskPlan& plan) {
    Tensor sum = mlm_loss_sum(g, logits, plan);
    return ops::scale(g, sum, 1.0 / static_cast<double>(plan.positions.size()));
}

double batched_loss_backward(
    std::int64_t n, int threads,
    const std::function<std::pair<Tensor, std::int64_t>(Graph&, std::int64_t)>& sample_loss) {
    struct Item {
        Graph graph;
        Tensor loss;
        std::int64_t count = 0;
    };
    auto items = parallel_map<std::unique_ptr<Item>>(n, threads, [&](std::int64_t i) {
        auto item = std::make_unique<Item>();
        auto [loss, count] = sample_loss(item->graph, i);
        item->loss = loss;
        item->count = count;
        return item;
    });
    std::int64_t total = 0;
    for (const auto& item : items) {
        total += item->count;
    }
    if (total == 0) {
        throw ContractError("batch produced no loss terms");
    }
    const double inv_total = 1.0 / static_cast<double>(total);
    auto adjoints = parallel_map<Adjoints>(n, threads, [&](std::int64_t i) {
        return items[static_cast<std::size_t>(i)]->graph.backward_adjoints(
            items[static_cast<std::size_t>(i)]->loss, inv_total);
    });
    for (const auto& adj : adjoints) {
        adj.apply();
    }
    double loss_value = 0.0;
    for (const auto& item : items) {
        loss_value += item->loss.item();
    }
    return loss_value * inv_total;
}

EvalSet build_eval_set(const std::vector<Sample>& samples, const std::vector<SlotInfo>& slots,
                       std::int64_t eval_samples, double mask_rate, std::uint64_t seed,
                       std::int64_t vocab_size) {
    EvalSet eval;
    Rng rng(Rng::mix(seed, kEvalStreamTag));
    const std::int64_t n =
        std::min<std::int64_t>(eval_samples, static_cast<std::int64_t>(samples.size()));
    for (std::int64_t i = 0; i < n; ++i) {
        auto plan = random_mask(samples[static_cast<std::size_t>(i)], mask_rate, rng, vocab_size);
        if (plan) {
            eval.masked.emplace_back(i, std::move(*plan));
        }
        if (i < static_cast<std::int64_t>(slots.size())) {
            const std::int64_t pos = slot_token_position(slots[static_cast<std::size_t>(i)]);
            if (pos >= 0 &&
                pos < static_cast<std::int64_t>(samples[static_cast<std::size_t>(i)].token_ids.size())) {
                eval.slots.emplace_back(i, pos);
            }
        }
    }
    return eval;
}

double masked_accuracy(const Encoder& encoder, const std::vector<Sample>& samples,
                       const EvalSet& eval, int threads) {
    if (eval.masked.empty()) {
        return 0.0;
    }
    const auto hits = parallel_map<std::int64_t>(
        static_cast<std::int64_t>(eval.masked.size()), threads, [&](std::int64_t i) {
            const auto& [sample_idx, plan] = eval.masked[static_cast<std::size_t>(i)];
            const auto& sample = samples[static_cast<std::size_t>(sample_idx)];
            const auto masked = apply_plan(sample.token_ids, plan);
            Graph g(false);
            Tensor logits = encoder.forward_mlm(
                g, masked, std::vector<std::uint8_t>(masked.size(), 1));
            std::int64_t correct = 0;
            for (std::size_t p = 0; p < plan.positions.size(); ++p) {
                const double* row = logits.data() + plan.positions[p] * logits.dim(1);
                if (argmax_row(row, logits.dim(1)) == plan.originals[p]) {
                    ++correct;
                }
            }
            return correct;
        });
    std::int64_t total = 0, correct = 0;
    for (std::size_t i = 0; i < eval.masked.size(); ++i) {
        total += static_cast<std::int64_t>(eval.masked[i].second.positions.size());
        correct += hits[i];
    }
    return static_cast<double>(correct) / static_cast<double>(total);
}

double slot_accuracy(const Encoder& encoder, const std::vector<Sample>& samples,
                     const EvalSet& eval, int threads) {
    if (eval.slots.empty()) {
        return 0.0;
    }
    const auto hits = parallel_map<std::int64_t>(
        static_cast<std::int64_t>(eval.slots.size()), threads, [&](std::int64_t i) {
            const auto& [sample_idx, pos] = eval.slots[static_cast<std::size_t>(i)];
            const auto& sample = samples[static_cast<std::size_t>(sample_idx)];
            auto masked = sample.token_ids;
            const std::int64_t truth = masked[static_cast<std::size_t>(pos)];
            masked[static_cast<std::size_t>(pos)] = Vocabulary::kMask;
            Graph g(false);
            Tensor logits = encoder.forward_mlm(
                g, masked, std::vector<std::uint8_t>(masked.size(), 1));
            const double* row = logits.data() + pos * logits.dim(1);
            return static_cast<std::int64_t>(argmax_row(row, logits.dim(1)) == truth);
        });
    const std::int64_t correct = std::accumulate(hits.begin(), hits.end(), std::int64_t{0});
    return static_cast<double>(correct) / static_cast<double>(eval.slots.size());
}

void pretrain(Encoder& encoder, const std::vector<Sample>& corpus,
              const std::vector<SlotInfo>& slots, const PretrainConfig& config,
              MetricsWriter& metrics, const char* phase) {
    if (corpus.empty()) {
        throw DataError("pretraining corpus is empty");
    }
    const std::int64_t vocab = encoder.config().vocab_size;
    AdamW optimizer(encoder.parameters(),
                    {config.lr, 0.9, 0.999, 1e-8, config.weight_decay});
    Rng mask_rng(Rng::mix(config.seed, kMaskStreamTag));
    const EvalSet eval = build_eval_set(corpus, slots, config.eval_samples, config.mask_rate,
                                        config.seed, vocab);

    const auto emit = [&](std::int64_t step, double loss) {
        nlohmann::ordered_json row;
        row["step"] = step;
        row["loss"] = loss;
        row["masked_acc"] = masked_accuracy(encoder, corpus, eval, config.threads);
        row["slot_acc"] = slot_accuracy(encoder, corpus, eval, config.threads);
        row["phase"] = phase;
        metrics.write(row);
    };

    emit(0, 0.0);

    std::int64_t epoch = 0;
    std::vector<Batch> batches = make_batches(corpus, config.batch_size, config.seed, epoch);
    std::size_t batch_cursor = 0;

    for (std::int64_t step = 1; step <= config.steps; ++step) {
        if (batch_cursor >= batches.size()) {
            ++epoch;
            batches = make_batches(corpus, config.batch_size, config.seed, epoch);
            batch_cursor = 0;
        }
        const Batch& batch = batches[batch_cursor++];

        // Draw plans sequentially so the rng stream is independent of the
        // worker schedule.
        std::vector<std::pair<const Sample*, MaskPlan>> work;
        for (std::int64_t r = 0; r < batch.rows; ++r) {
            const Sample& sample =
                corpus[static_cast<std::size_t>(batch.sample_index[static_cast<std::size_t>(r)])];
            auto plan = random_mask(sample, config.mask_rate, mask_rng, vocab);
            if (plan) {
                work.emplace_back(&sample, std::move(*plan));
            }
        }
        if (work.empty()) {
            continue;
        }

        optimizer.zero_grad();
        const double loss = batched_loss_backward(
            static_cast<std::int64_t>(work.size()), config.threads,
            [&](Graph& g, std::int64_t i) {
                const auto& [sample, plan] = work[static_cast<std::size_t>(i)];
                const auto masked = apply_plan(sample->token_ids, plan);
                Tensor logits = encoder.forward_mlm(
                    g, masked, std::vector<std::uint8_t>(masked.size(), 1));
                return std::make_pair(mlm_loss_sum(g, logits, plan),
                                      static_cast<std::int64_t>(plan.positions.size()));
            });
        if (!std::isfinite(loss)) {
            throw DivergenceError("loss diverged at step " + std::to_string(step) + " (" +
                                  std::to_string(loss) + ")");
        }
        clip_gradients(optimizer.params(), config.clip_norm);
        optimizer.step(lr_at_step(config.lr, step, config.steps, config.warmup_frac));

        if (step % config.eval_interval == 0 || step == config.steps) {
            emit(step, loss);
        }
    }
}

}  // namespace evolm
