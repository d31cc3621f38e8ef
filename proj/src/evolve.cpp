#include "evolm/evolve.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "json.hpp"

#include "evolm/error.hpp"
#include "evolm/optim.hpp"
#include "evolm/parallel.hpp"

namespace evolm {

namespace {

constexpr std::uint64_t kEvolveMaskTag = 0x65766f6c;

std::vector<std::int64_t> eligible_positions(const std::vector<std::int64_t>& ids) {
    std::vector<std::int64_t> out;
    for (std::size_t p = 0; p < ids.size(); ++p) {
        if (!Vocabulary::is_special(ids[p])) {
            out.push_back(static_cast<std::int64_t>(p));
        }
    }
    return out;
}

}  // namespace

void LabelDistribution::validate() const {
    double sum = 0.0;
    for (const double p : probs) {
        if (p < 0.0) {
            throw ContractError("LabelDistribution entry is negative");
        }
        sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
        throw ContractError("LabelDistribution sums to " + std::to_string(sum) +
                            ", expected 1");
    }
}

bool LabelDistribution::is_one_hot() const {
    std::int64_t ones = 0;
    for (const double p : probs) {
        if (p == 1.0) {
            ++ones;
        } else if (p != 0.0) {
            return false;
        }
    }
    return ones == 1;
}

LabelDistribution LabelDistribution::one_hot(std::int64_t size, std::int64_t index) {
    if (index < 0 || index >= size) {
        throw ContractError("one_hot index out of range");
    }
    LabelDistribution d;
    d.probs.assign(static_cast<std::size_t>(size), 0.0);
    d.probs[static_cast<std::size_t>(index)] = 1.0;
    return d;
}

std::int64_t total_neglected(const NeglectedTokenIndex& index) {
    std::int64_t n = 0;
    for (const auto& records : index) {
        n += static_cast<std::int64_t>(records.size());
    }
    return n;
}

NeglectedTokenIndex self_question_scan(const Encoder& encoder,
                                       const std::vector<Sample>& corpus, double margin_tau,
                                       int threads) {
    return parallel_map<std::vector<NeglectedToken>>(
        static_cast<std::int64_t>(corpus.size()), threads, [&](std::int64_t s) {
            const auto& ids = corpus[static_cast<std::size_t>(s)].token_ids;
            Graph g(false);
            Tensor logits =
                encoder.forward_mlm(g, ids, std::vector<std::uint8_t>(ids.size(), 1));
            Tensor probs = ops::softmax(g, logits);
            const std::int64_t vocab = probs.dim(1);

            std::vector<NeglectedToken> records;
            for (std::size_t p = 0; p < ids.size(); ++p) {
                if (Vocabulary::is_special(ids[p])) {
                    continue;
                }
                const double* row = probs.data() + static_cast<std::int64_t>(p) * vocab;
                const std::int64_t truth = ids[p];
                std::int64_t rival = truth == 0 ? 1 : 0;
                for (std::int64_t j = 0; j < vocab; ++j) {
                    if (j != truth && row[j] > row[rival]) {
                        rival = j;
                    }
                }
                // Learned means the truth beats every rival by more than the
                // margin; anything else (including an exact tie) is neglected.
                if (!(row[truth] > row[rival] + margin_tau)) {
                    records.push_back(NeglectedToken{static_cast<std::int64_t>(p), truth,
                                                     row[truth], rival, row[rival]});
                }
            }
            return records;
        });
}

MaskPlan select_evolution_masks(const Sample& sample, const std::vector<NeglectedToken>& entries,
                                double mask_budget_rate, double random_mix_rate, Rng& rng) {
    if (mask_budget_rate <= 0.0 || mask_budget_rate > 1.0) {
        throw ContractError("mask_budget_rate must lie in (0, 1]");
    }
    if (random_mix_rate < 0.0 || random_mix_rate > 1.0) {
        throw ContractError("random_mix_rate must lie in [0, 1]");
    }
    std::vector<std::int64_t> eligible = eligible_positions(sample.token_ids);
    if (eligible.empty()) {
        throw ContractError("sample has no maskable token");
    }
    const std::int64_t budget = static_cast<std::int64_t>(
        std::ceil(mask_budget_rate * static_cast<double>(eligible.size())));
    const std::int64_t reserved_random =
        static_cast<std::int64_t>(std::floor(random_mix_rate * static_cast<double>(budget)));

    // Hardest first: ascending truth probability, ties by position.
    std::vector<NeglectedToken> ranked = entries;
    std::sort(ranked.begin(), ranked.end(), [](const NeglectedToken& a, const NeglectedToken& b) {
        if (a.truth_prob != b.truth_prob) {
            return a.truth_prob < b.truth_prob;
        }
        return a.position < b.position;
    });

    std::vector<std::int64_t> chosen;
    for (const auto& rec : ranked) {
        if (static_cast<std::int64_t>(chosen.size()) >= budget - reserved_random) {
            break;
        }
        chosen.push_back(rec.position);
    }

    // Fill the remainder (reserved slots plus any neglected shortfall) with
    // uniform-random positions.
    std::vector<std::int64_t> pool;
    for (const auto pos : eligible) {
        if (std::find(chosen.begin(), chosen.end(), pos) == chosen.end()) {
            pool.push_back(pos);
        }
    }
    rng.shuffle(pool);
    for (std::size_t i = 0; static_cast<std::int64_t>(chosen.size()) < budget && i < pool.size();
         ++i) {
        chosen.push_back(pool[i]);
    }
    std::sort(chosen.begin(), chosen.end());

    MaskPlan plan;
    for (const auto pos : chosen) {
        plan.positions.push_back(pos);
        plan.actions.push_back(MaskAction::kMask);
        plan.replacements.push_back(Vocabulary::kMask);
        plan.originals.push_back(sample.token_ids[static_cast<std::size_t>(pos)]);
    }
    return plan;
}

LabelDistribution rectified_smooth_label(const LabelDistribution& y, const LabelDistribution& r,
                                         double alpha) {
    if (alpha < 0.0 || alpha > 1.0) {
        throw ContractError("alpha must lie in [0, 1]");
    }
    if (y.probs.size() != r.probs.size()) {
        throw ContractError("rectified_smooth_label length mismatch");
    }
    if (!y.is_one_hot()) {
        throw ContractError("rectified_smooth_label expects one-hot y");
    }
    r.validate();
    LabelDistribution out;
    out.probs.resize(y.probs.size());
    for (std::size_t i = 0; i < y.probs.size(); ++i) {
        out.probs[i] = (1.0 - alpha) * y.probs[i] + alpha * r.probs[i];
    }
    return out;
}

std::pair<Tensor, std::int64_t> evolution_loss_sum(Graph& g, const Encoder& encoder,
                                                   const std::vector<std::int64_t>& original,
                                                   const std::vector<std::int64_t>& masked,
                                                   const MaskPlan& plan, double alpha) {
    if (plan.positions.empty()) {
        throw ContractError("evolution plan is empty");
    }
    if (original.size() != masked.size()) {
        throw ContractError("masked and original sequences are misaligned");
    }
    for (std::size_t p = 0; p < original.size(); ++p) {
        const auto it =
            std::find(plan.positions.begin(), plan.positions.end(), static_cast<std::int64_t>(p));
        if (it == plan.positions.end()) {
            if (original[p] != masked[p]) {
                throw ContractError("masked sequence differs from original off-plan at position " +
                                    std::to_string(p));
            }
        } else {
            const std::size_t k = static_cast<std::size_t>(it - plan.positions.begin());
            if (masked[p] != plan.replacements[k]) {
                throw ContractError("masked sequence does not apply the plan at position " +
                                    std::to_string(p));
            }
        }
    }
    const std::int64_t vocab = encoder.config().vocab_size;

    // Reference probabilities from the unmasked sentence; inference graph, so
    // no gradient ever flows through r.
    Graph ref_graph(false);
    Tensor ref_logits = encoder.forward_mlm(ref_graph, original,
                                            std::vector<std::uint8_t>(original.size(), 1));
    Tensor ref_rows = ops::gather_rows(ref_graph, ref_logits, plan.positions);
    Tensor r = ops::softmax(ref_graph, ref_rows);

    Tensor logits = encoder.forward_mlm(g, masked, std::vector<std::uint8_t>(masked.size(), 1));
    Tensor p = ops::softmax(g, ops::gather_rows(g, logits, plan.positions));

    // Targets y~ = (1-alpha)*y + alpha*r, built as constants.
    Tensor targets = Tensor::zeros({static_cast<std::int64_t>(plan.positions.size()), vocab});
    for (std::size_t i = 0; i < plan.positions.size(); ++i) {
        double* trow = targets.data() + static_cast<std::int64_t>(i) * vocab;
        const double* rrow = r.data() + static_cast<std::int64_t>(i) * vocab;
        for (std::int64_t j = 0; j < vocab; ++j) {
            trow[j] = alpha * rrow[j];
        }
        trow[plan.originals[i]] += 1.0 - alpha;
    }
    return {ops::cross_entropy_rowsum(g, p, targets),
            static_cast<std::int64_t>(plan.positions.size())};
}

double evolution_step_loss(const Encoder& encoder,
                           const std::vector<std::vector<std::int64_t>>& originals,
                           const std::vector<std::vector<std::int64_t>>& maskeds,
                           const std::vector<MaskPlan>& plans, double alpha, int threads) {
    if (originals.size() != maskeds.size() || originals.size() != plans.size()) {
        throw ContractError("evolution batch components are misaligned");
    }
    if (plans.empty()) {
        throw ContractError("evolution batch is empty");
    }
    const auto losses = parallel_map<std::pair<double, std::int64_t>>(
        static_cast<std::int64_t>(plans.size()), threads, [&](std::int64_t i) {
            Graph g(false);
            auto [loss, count] = evolution_loss_sum(
                g, encoder, originals[static_cast<std::size_t>(i)],
                maskeds[static_cast<std::size_t>(i)], plans[static_cast<std::size_t>(i)], alpha);
            return std::make_pair(loss.item(), count);
        });
    double total = 0.0;
    std::int64_t count = 0;
    for (const auto& [l, c] : losses) {
        total += l;
        count += c;
    }
    return total / static_cast<double>(count);
}

void SelfEvolutionConfig::validate() const {
    if (alpha < 0.0 || alpha > 1.0) {
        throw ConfigError("alpha must lie in [0, 1]");
    }
    if (mask_budget_rate <= 0.0 || mask_budget_rate > 1.0) {
        throw ConfigError("mask_budget_rate must lie in (0, 1]");
    }
    if (random_mix_rate < 0.0 || random_mix_rate > 1.0) {
        throw ConfigError("random_mix_rate must lie in [0, 1]");
    }
    if (steps < 0 || batch_size < 1) {
        throw ConfigError("invalid steps/batch_size");
    }
}

void self_evolve(Encoder& encoder, const std::vector<Sample>& corpus,
                 const std::vector<SlotInfo>& slots, const SelfEvolutionConfig& config,
                 MetricsWriter& metrics) {
    config.validate();
    if (corpus.empty()) {
        throw DataError("self-evolution corpus is empty");
    }
    const std::int64_t vocab = encoder.config().vocab_size;
    AdamW optimizer(encoder.parameters(), {config.lr, 0.9, 0.999, 1e-8, config.weight_decay});
    Rng mask_rng(Rng::mix(config.seed, kEvolveMaskTag));
    const EvalSet eval = build_eval_set(corpus, slots, config.eval_samples,
                                        config.mask_budget_rate, config.seed, vocab);

    const auto emit_scan = [&](std::int64_t step, const NeglectedTokenIndex& index) {
        nlohmann::ordered_json row;
        row["step"] = step;
        row["phase"] = "evolve";
        row["neglected_count"] = total_neglected(index);
        metrics.write(row);
    };
    const auto emit_train = [&](std::int64_t step, double loss) {
        nlohmann::ordered_json row;
        row["step"] = step;
        row["loss"] = loss;
        row["masked_acc"] = masked_accuracy(encoder, corpus, eval, config.threads);
        row["slot_acc"] = slot_accuracy(encoder, corpus, eval, config.threads);
        row["phase"] = "evolve";
        metrics.write(row);
    };

    NeglectedTokenIndex index =
        self_question_scan(encoder, corpus, config.margin_tau, config.threads);
    emit_scan(0, index);
    emit_train(0, 0.0);

    const std::int64_t rescan_interval =
        config.scan_once ? 0
                         : std::max<std::int64_t>(
                               1, static_cast<std::int64_t>(std::floor(
                                      config.rescan_frac * static_cast<double>(config.steps))));

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

        struct Work {
            const Sample* sample;
            MaskPlan plan;
        };
        std::vector<Work> work;
        for (std::int64_t r = 0; r < batch.rows; ++r) {
            const std::int64_t si = batch.sample_index[static_cast<std::size_t>(r)];
            const Sample& sample = corpus[static_cast<std::size_t>(si)];
            work.push_back(Work{&sample, select_evolution_masks(
                                             sample, index[static_cast<std::size_t>(si)],
                                             config.mask_budget_rate, config.random_mix_rate,
                                             mask_rng)});
        }

        optimizer.zero_grad();
        const double loss = batched_loss_backward(
            static_cast<std::int64_t>(work.size()), config.threads,
            [&](Graph& g, std::int64_t i) {
                const auto& w = work[static_cast<std::size_t>(i)];
                const auto masked = apply_plan(w.sample->token_ids, w.plan);
                return evolution_loss_sum(g, encoder, w.sample->token_ids, masked, w.plan,
                                          config.alpha);
            });
        if (!std::isfinite(loss)) {
            throw DivergenceError("loss diverged at step " + std::to_string(step) + " (" +
                                  std::to_string(loss) + ")");
        }
        clip_gradients(optimizer.params(), config.clip_norm);
        optimizer.step(lr_at_step(config.lr, step, config.steps, config.warmup_frac));

        if (step % config.eval_interval == 0 || step == config.steps) {
            emit_train(step, loss);
        }
        const bool rescan_due = rescan_interval > 0 && step % rescan_interval == 0;
        if (rescan_due || step == config.steps) {
            index = self_question_scan(encoder, corpus, config.margin_tau, config.threads);
            emit_scan(step, index);
        }
    }
}

void save_index_jsonl(const std::string& path, const NeglectedTokenIndex& index) {
    std::ofstream out(path);
    if (!out) {
        throw DataError("cannot write index file " + path);
    }
    for (std::size_t s = 0; s < index.size(); ++s) {
        for (const auto& rec : index[s]) {
            nlohmann::ordered_json j;
            j["sample"] = s;
            j["pos"] = rec.position;
            j["truth"] = rec.truth_id;
            j["truth_p"] = rec.truth_prob;
            j["top"] = rec.top_id;
            j["top_p"] = rec.top_prob;
            out << j.dump() << '\n';
        }
    }
}

NeglectedTokenIndex load_index_jsonl(const std::string& path, std::int64_t num_samples) {
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot read index file " + path);
    }
    NeglectedTokenIndex index(static_cast<std::size_t>(num_samples));
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
        const std::int64_t s = j.at("sample").get<std::int64_t>();
        if (s < 0 || s >= num_samples) {
            throw DataError(path + ":" + std::to_string(lineno) + ": sample index out of range");
        }
        index[static_cast<std::size_t>(s)].push_back(NeglectedToken{
            j.at("pos").get<std::int64_t>(), j.at("truth").get<std::int64_t>(),
            j.at("truth_p").get<double>(), j.at("top").get<std::int64_t>(),
            j.at("top_p").get<double>()});
    }
    return index;
}

}  // namespace evolm
