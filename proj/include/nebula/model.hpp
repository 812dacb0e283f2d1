#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "nebula/rng.hpp"
#include "nebula/tensor.hpp"
#include "nebula/tokenize.hpp"

namespace nebula {

struct ModelConfig {
    std::size_t vocab_size = 50000;      // V
    std::size_t seq_len = 512;           // N
    std::size_t embed_dim = 64;          // d_e, must be even and divisible by H
    std::size_t num_layers = 2;          // L
    std::size_t num_heads = 8;           // H
    std::size_t span = 64;               // S, must divide N
    std::size_t ffn_dim = 256;           // defaults to 4 * d_e
    std::size_t classifier_hidden = 64;
    std::size_t num_classes = 2;
    double dropout = 0.0;

    std::size_t head_dim() const { return embed_dim / num_heads; }
    std::size_t num_spans() const { return seq_len / span; }
    void validate() const;

    std::string to_json() const;
    static ModelConfig from_json(const std::string& text);
};

struct LayerParams {
    Tensor wq, bq, wk, bk, wv, bv, wo, bo;  // attention projections, d x d / d
    Tensor ln1_gain, ln1_bias;
    Tensor ffn_w1, ffn_b1;  // d x ffn, ffn
    Tensor ffn_w2, ffn_b2;  // ffn x d, d
    Tensor ln2_gain, ln2_bias;
};

struct ModelParams {
    Tensor embedding;  // V x d
    std::vector<LayerParams> layers;
    Tensor cls_w1, cls_b1;  // d x hidden, hidden
    Tensor cls_w2, cls_b2;  // hidden x classes, classes

    static ModelParams init(const ModelConfig& config, std::uint64_t seed);
    static ModelParams zeros_like(const ModelParams& other);

    // Deterministic tensor enumeration; drives persistence, the optimizer,
    // and gradient checks.
    template <typename Fn>
    void for_each_tensor(Fn&& fn) {
        fn("embedding", embedding);
        for (std::size_t l = 0; l < layers.size(); ++l) {
            const std::string p = "layer" + std::to_string(l) + ".";
            LayerParams& lp = layers[l];
            fn(p + "wq", lp.wq);
            fn(p + "bq", lp.bq);
            fn(p + "wk", lp.wk);
            fn(p + "bk", lp.bk);
            fn(p + "wv", lp.wv);
            fn(p + "bv", lp.bv);
            fn(p + "wo", lp.wo);
            fn(p + "bo", lp.bo);
            fn(p + "ln1_gain", lp.ln1_gain);
            fn(p + "ln1_bias", lp.ln1_bias);
            fn(p + "ffn_w1", lp.ffn_w1);
            fn(p + "ffn_b1", lp.ffn_b1);
            fn(p + "ffn_w2", lp.ffn_w2);
            fn(p + "ffn_b2", lp.ffn_b2);
            fn(p + "ln2_gain", lp.ln2_gain);
            fn(p + "ln2_bias", lp.ln2_bias);
        }
        fn("cls_w1", cls_w1);
        fn("cls_b1", cls_b1);
        fn("cls_w2", cls_w2);
        fn("cls_b2", cls_b2);
    }
    template <typename Fn>
    void for_each_tensor(Fn&& fn) const {
        const_cast<ModelParams*>(this)->for_each_tensor(
            [&fn](const std::string& name, Tensor& t) { fn(name, static_cast<const Tensor&>(t)); });
    }

    std::size_t total_parameters() const;
};

// Closed-form learnable-scalar count:
//   embedding: V*d
//   per layer: 4*(d*d + d)            attention projections + biases
//            + (d*f + f) + (f*d + d)  feed-forward
//            + 2*(2*d)                two layer norms (gain + bias)
//   classifier: (d*h + h) + (h*C + C)
std::size_t count_parameters(const ModelConfig& config);

// PE[pos, 2i] = sin(pos / 10000^(2i/d)), PE[pos, 2i+1] = cos(same).
Tensor positional_encoding(std::size_t seq_len, std::size_t dim);

// Row i = embedding_table[ids[i]] * sqrt(d). Throws IdOutOfRange.
Tensor embed(const TokenSequence& seq, const Tensor& embedding_table);

// Elementwise e + pe. Throws ShapeMismatch.
Tensor add_positions(const Tensor& e, const Tensor& pe);

struct AttentionStats {
    std::uint64_t score_macs = 0;  // multiply-accumulates spent on Q K^T
};

// Attention over M = N/S contiguous blocks: softmax(Q_b K_b^T / sqrt(d_k))
// V_b per block, concatenated. Masked key positions get -inf logits; a block
// whose keys are all masked outputs zeros. `probs`, when given, receives one
// N x S matrix (query row -> in-block key distribution).
Tensor chunked_self_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                              std::size_t span, const std::vector<bool>& mask,
                              AttentionStats* stats = nullptr, Tensor* probs = nullptr);

struct LayerCache {
    Tensor input;                    // N x d
    Tensor q, k, v;                  // N x d
    std::vector<Tensor> head_probs;  // per head: N x S
    Tensor attn_concat;              // N x d
    Tensor drop_mask1;               // empty when dropout off
    Tensor resid1;                   // N x d
    Tensor ln1_xhat, ln1_out;        // N x d
    Tensor ln1_invstd;               // N
    Tensor ffn_pre, ffn_act;         // N x ffn
    Tensor drop_mask2;
    Tensor resid2;                   // N x d
    Tensor ln2_xhat, ln2_out;        // N x d
    Tensor ln2_invstd;               // N
};

struct ForwardCache {
    std::vector<std::uint32_t> ids;
    std::vector<bool> mask;
    Tensor embedded;  // N x d, already scaled by sqrt(d)
    Tensor x0;        // embedded + PE
    std::vector<LayerCache> layers;
    Tensor pooled;  // d
    double pool_count = 0.0;
    Tensor cls_pre, cls_act;  // hidden
    Tensor logits;            // C
};

// Post-softmax attention activations: probs[layer][head][block] is S x S.
struct AttentionRecord {
    std::size_t span = 0;
    std::vector<std::vector<std::vector<Tensor>>> probs;
};

class Model {
public:
    Model(ModelConfig config, std::uint64_t seed);
    Model(ModelConfig config, ModelParams params);

    const ModelConfig& config() const { return config_; }
    const ModelParams& params() const { return params_; }
    ModelParams& params() { return params_; }

    // Logits [C] for one sequence. The sequence length must be a positive
    // multiple of the span but may differ from config.seq_len (the PE table
    // is extended as needed); padded positions never influence real ones.
    Tensor forward_one(const TokenSequence& seq, ForwardCache* cache = nullptr,
                       AttentionStats* stats = nullptr, AttentionRecord* record = nullptr,
                       Rng* dropout_rng = nullptr) const;

    // Logits [B x C].
    Tensor forward(const std::vector<TokenSequence>& batch) const;

    // Forward starting from a scaled embedding matrix (the attribution path).
    Tensor forward_from_embedding(const Tensor& embedded, const std::vector<bool>& mask,
                                  ForwardCache* cache = nullptr) const;

    // Accumulates parameter gradients for one cached sample into `grads`;
    // when `grad_embedding` is non-null it receives d loss / d embedded.
    void backward_one(const ForwardCache& cache, const Tensor& dlogits, ModelParams& grads,
                      Tensor* grad_embedding = nullptr) const;

    // One encoder layer on an N x d input; exposed for tests.
    Tensor encoder_layer_forward(const Tensor& x, std::size_t layer,
                                 const std::vector<bool>& mask, LayerCache* cache = nullptr,
                                 AttentionStats* stats = nullptr,
                                 Rng* dropout_rng = nullptr) const;

    void save(const std::filesystem::path& path) const;
    static Model load(const std::filesystem::path& path);

private:
    Tensor run_from_cache(ForwardCache& cache, AttentionStats* stats, Rng* dropout_rng) const;

    ModelConfig config_;
    ModelParams params_;
    Tensor pe_;  // config.seq_len x d
};

}  // namespace nebula
