#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "nebula/model.hpp"
#include "nebula/tokenize.hpp"

namespace nebula {

struct Attribution {
    std::vector<double> token_scores;  // length N: mean over the embedding dim
    std::vector<double> token_sums;    // length N: pre-mean signed sums
    double completeness_gap = 0.0;     // |sum(attr) - (f(x) - f(baseline))|
    double baseline_score = 0.0;
    double input_score = 0.0;
    int target_class = 0;
};

// Differentiable scalar of an N x d embedding matrix: value and gradient.
using ScoreFn = std::function<std::pair<double, Tensor>(const Tensor&)>;

// Plain integrated gradients with a left Riemann sum over `steps` points:
// attribution = (input - baseline) .* mean_k grad f(baseline + k/m (input -
// baseline)). Exact for any step count when f is linear.
Attribution integrated_gradients_path(const ScoreFn& f, const Tensor& input,
                                      const Tensor& baseline, std::size_t steps);

// Model attribution: the baseline is the embedded all-pad sequence, the
// attributed scalar is the positive-class logit (binary) or the
// predicted-class logit (multiclass), and the input's padding mask stays
// fixed along the path. Pass target_class >= 0 to override.
Attribution integrated_gradients(const Model& model, const TokenSequence& x, std::size_t steps,
                                 int target_class = -1);

// Forward pass recording every post-softmax attention matrix. Read-only:
// logits are not perturbed.
AttentionRecord attention_activations(const Model& model, const TokenSequence& x);

struct AttributedToken {
    std::string token;
    std::size_t position = 0;
    double score = 0.0;
};

// k highest |score| real-token positions, |score| descending, ties by
// position ascending.
std::vector<AttributedToken> top_attributed_tokens(const Attribution& attr,
                                                   const Vocabulary& vocab,
                                                   const TokenSequence& x, std::size_t k);

std::string attribution_to_json(const Attribution& attr, const Vocabulary& vocab,
                                const TokenSequence& x);
std::string attribution_to_csv(const Attribution& attr, const Vocabulary& vocab,
                               const TokenSequence& x);
std::string attention_record_to_json(const AttentionRecord& record);

}  // namespace nebula
