#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nebula/metrics.hpp"
#include "nebula/model.hpp"
#include "nebula/tokenize.hpp"

namespace nebula {

struct TrainConfig {
    double lr = 2.5e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-2;
    std::size_t batch_size = 96;
    double budget_seconds = 0.0;  // 0 = no wall-clock budget
    std::size_t max_epochs = 0;   // 0 = no epoch cap; both 0 = one epoch
    std::size_t folds = 3;
    std::uint64_t seed = 42;

    void validate() const;
};

struct OptimizerState {
    ModelParams m;  // first moments, shapes mirror the parameters
    ModelParams v;  // second moments
    std::int64_t step = 0;

    static OptimizerState init(const ModelParams& params);
};

// Mean softmax cross-entropy over the batch. Throws LabelOutOfRange.
double compute_loss(const Tensor& logits, const std::vector<int>& labels);

// Same, but also fills dlogits = (softmax - onehot) / B.
double loss_and_grad(const Tensor& logits, const std::vector<int>& labels, Tensor& dlogits);

// Decoupled weight decay update:
//   m <- b1 m + (1-b1) g;   v <- b2 v + (1-b2) g^2
//   theta <- theta - lr * (mhat / (sqrt(vhat) + eps) + wd * theta)
void adamw_step(ModelParams& params, const ModelParams& grads, OptimizerState& state,
                const TrainConfig& cfg);

struct Dataset {
    std::vector<TokenSequence> sequences;
    std::vector<int> labels;

    std::size_t size() const { return sequences.size(); }
};

struct BatchStat {
    std::size_t batch_index = 0;
    double wall_seconds = 0.0;
    double loss = 0.0;
};

struct TrainResult {
    std::vector<BatchStat> history;
    std::size_t batches_seen = 0;
    std::size_t epochs_completed = 0;

    std::string history_csv() const;
};

// Owns the optimizer state so training can be resumed across calls.
class Trainer {
public:
    Trainer(Model& model, TrainConfig cfg);

    // Shuffled mini-batches, one adamw_step per batch, until the wall-clock
    // budget or the epoch cap is reached (whichever first). Always processes
    // at least one batch.
    TrainResult run(const Dataset& data);
    TrainResult run_epochs(const Dataset& data, std::size_t epochs);

    const TrainConfig& config() const { return cfg_; }

private:
    TrainResult run_impl(const Dataset& data, double budget_seconds, std::size_t max_epochs);

    Model& model_;
    TrainConfig cfg_;
    OptimizerState state_;
    Rng shuffle_rng_;
    Rng dropout_rng_;
    std::size_t next_batch_index_ = 0;
};

TrainResult train(Model& model, const Dataset& data, const TrainConfig& cfg);

struct FoldResult {
    std::size_t fold_index = 0;
    EvalReport report;
    std::size_t batches_seen = 0;
    Vocabulary vocabulary;
    ModelParams params;  // trained snapshot
};

struct CvResult {
    std::vector<FoldResult> folds;
    EvalReport mean;
};

// Seeded stratified k-fold indices: per class, samples are shuffled and dealt
// round-robin, so fold class ratios stay within one sample of the global mix.
std::vector<std::vector<std::size_t>> stratified_folds(const std::vector<int>& labels,
                                                       std::size_t k, std::uint64_t seed);

// Per-fold protocol: tokenizer artifacts (BPE merges when applicable) and the
// vocabulary come from that fold's training portion only, then a fresh model
// is trained and scored on the held-out fold.
CvResult cross_validate(const std::vector<std::string>& texts, const std::vector<int>& labels,
                        TokenizerKind tokenizer, std::size_t vocab_budget,
                        ModelConfig model_config, const TrainConfig& cfg, double target_fpr);

// Softmax class probabilities, then binary or macro one-vs-rest evaluation.
EvalReport evaluate_model(const Model& model, const Dataset& data, double target_fpr);
std::vector<std::vector<double>> predict_probabilities(const Model& model,
                                                       const std::vector<TokenSequence>& seqs);

}  // namespace nebula
