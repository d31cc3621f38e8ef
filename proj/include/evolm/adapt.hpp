#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "evolm/data.hpp"
#include "evolm/encoder.hpp"
#include "evolm/metrics.hpp"
#include "evolm/rng.hpp"

namespace evolm {

struct ClassifierHead {
    Tensor w;  // hidden x num_classes
    Tensor b;  // num_classes

    static ClassifierHead init(std::int64_t hidden, std::int64_t num_classes,
                               std::uint64_t seed);
    std::int64_t num_classes() const { return w.dim(1); }
    std::vector<Tensor> parameters() const { return {w, b}; }
};

// Class logits [1 x C] from the CLS position (position prompt_len when a
// prompt is prepended, else 0).
Tensor classifier_logits(Graph& g, const Encoder& encoder, const ClassifierHead& head,
                         const std::vector<std::int64_t>& ids, const Tensor& prompt = Tensor());

std::int64_t predict_class(const Encoder& encoder, const ClassifierHead& head,
                           const std::vector<std::int64_t>& ids, const Tensor& prompt = Tensor());

double classifier_accuracy(const Encoder& encoder, const ClassifierHead& head,
                           const std::vector<LabeledExample>& examples,
                           const Tensor& prompt = Tensor(), int threads = 0);

struct SiftConfig {
    double epsilon = 1e-3;   // per-position L2 bound on the perturbation
    std::int64_t ascent_steps = 1;
    double adv_weight = 1.0;  // lambda_adv

    void validate() const;
};

struct FinetuneConfig {
    std::int64_t steps = 200;
    std::int64_t batch_size = 16;
    double lr = 1e-3;
    double weight_decay = 0.01;
    double clip_norm = 1.0;
    std::int64_t eval_interval = 50;
    std::uint64_t seed = 0;
    int threads = 0;
    bool use_sift = false;
    SiftConfig sift;
};

// Full-parameter fine-tuning of encoder + head with AdamW; optional SiFT
// adversarial regularization. Emits {"step","loss","acc","phase"} rows.
void finetune_classifier(Encoder& encoder, ClassifierHead& head,
                         const std::vector<LabeledExample>& train,
                         const std::vector<LabeledExample>& dev, const FinetuneConfig& config,
                         MetricsWriter& metrics, const char* phase = "finetune");

// SiFT loss for one example: embeddings are standardized, clean CE plus
// adv_weight times the symmetric KL between the clean distribution and the
// distribution after an adversarially ascended, epsilon-ball-projected
// perturbation of the normalized embeddings. The perturbation is fixed
// (no parameter gradients) once the ascent finishes.
Tensor sift_loss(Graph& g, const Encoder& encoder, const ClassifierHead& head,
                 const std::vector<std::int64_t>& ids, std::int64_t label,
                 const SiftConfig& config, std::uint64_t perturb_seed,
                 std::vector<double>* delta_out = nullptr);

// ---------------------------------------------------------------------------
// Prompt tuning and KD-based prompt transfer
// ---------------------------------------------------------------------------

struct SoftPrompt {
    Tensor vectors;  // prompt_len x hidden
    std::string task_name;

    static SoftPrompt init(std::int64_t prompt_len, std::int64_t hidden, std::uint64_t seed,
                           std::string task_name);
};

struct TaskEmbedding {
    std::vector<double> v;
};

// Mean over the prompt rows.
TaskEmbedding task_embedding(const SoftPrompt& prompt);

// max(0, cosine); zero vectors map to 0.
double prompt_similarity(const TaskEmbedding& a, const TaskEmbedding& b);

struct PromptTuneConfig {
    std::int64_t prompt_len = 8;
    std::int64_t steps = 300;
    std::int64_t batch_size = 16;
    double lr = 5e-2;
    double weight_decay = 0.0;
    double clip_norm = 1.0;
    std::int64_t eval_interval = 50;
    std::uint64_t seed = 0;
    int threads = 0;
};

// Tunes prompt + head with the backbone frozen; the encoder parameter
// checksum is unchanged by construction.
void prompt_tune(const Encoder& encoder, SoftPrompt& prompt, ClassifierHead& head,
                 const std::vector<LabeledExample>& train,
                 const std::vector<LabeledExample>& dev, const PromptTuneConfig& config,
                 MetricsWriter& metrics, const char* phase = "prompt");

// Plain prompt-tuning loss for one example; also the lambda=0 reduction of
// the KD transfer loss.
Tensor prompt_tune_loss(Graph& g, const Encoder& encoder, const ClassifierHead& head,
                        const Tensor& prompt_vectors, const std::vector<std::int64_t>& ids,
                        std::int64_t label);

struct KdTransferConfig {
    PromptTuneConfig tune;
    double temperature = 2.0;
    std::optional<double> lambda_override;  // static balancing factor
    std::int64_t lambda_interval = 50;      // recompute lambda every N steps
};

// (1-lambda)*CE(student, y) + lambda*T^2*KL(teacher_T || student_T) for one
// example; teacher_logits are constants.
Tensor kd_transfer_loss(Graph& g, const Encoder& encoder, const ClassifierHead& student_head,
                        const Tensor& student_prompt, const std::vector<std::int64_t>& ids,
                        std::int64_t label, const std::vector<double>& teacher_logits,
                        double lambda, double temperature);

struct KdReport {
    std::string source;
    std::string target;
    double similarity = 0.0;    // final metric value
    double lambda = 0.0;        // final balancing factor actually used
    double acc_transfer = 0.0;  // filled by the harness
    double acc_scratch = 0.0;   // filled by the harness
};

// Teacher = frozen backbone + source prompt + source head; student = fresh
// random prompt + fresh head. Only student parameters are updated. Returns
// the tuned student prompt/head and the report skeleton.
KdReport kd_prompt_transfer(const Encoder& encoder, const SoftPrompt& source_prompt,
                            const ClassifierHead& source_head, SoftPrompt& student_prompt,
                            ClassifierHead& student_head,
                            const std::vector<LabeledExample>& target_train,
                            const std::vector<LabeledExample>& target_dev,
                            const KdTransferConfig& config, MetricsWriter& metrics);

// ---------------------------------------------------------------------------
// Transductive fine-tuning
// ---------------------------------------------------------------------------

struct TransductiveConfig {
    std::int64_t t_max = 5;
    double agreement_threshold = 0.99;
    bool confidence_filter = false;   // keep only max-prob >= confidence
    double confidence = 0.9;
    FinetuneConfig tune;
};

struct TransductiveState {
    std::int64_t t = 0;                    // estimate rounds performed
    std::vector<double> agreements;        // one entry per round from t=2 on
    std::vector<std::int64_t> dm_sizes;    // |D_M| per round
    bool converged = false;
};

// Algorithm: fine-tune on the labeled seed, then iterate pseudo-labeling of
// the unlabeled inputs and tuning on seed + pseudo-labels until consecutive
// pseudo-label agreement reaches the threshold or t_max rounds elapse. The
// seed set is never relabeled.
TransductiveState transductive_finetune(Encoder& encoder, ClassifierHead& head,
                                        const std::vector<LabeledExample>& seed,
                                        const std::vector<std::vector<std::int64_t>>& unlabeled,
                                        const std::vector<LabeledExample>& dev,
                                        const TransductiveConfig& config,
                                        MetricsWriter& metrics);

}  // namespace evolm
