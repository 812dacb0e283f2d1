#include "nebula/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include <json.hpp>

#include "nebula/errors.hpp"

namespace nebula {

namespace {

constexpr double kLayerNormEps = 1e-5;

void check(bool ok, const char* what) {
    if (!ok) throw ShapeMismatch(what);
}

// y = gain * (x - mean) / sqrt(var + eps) + bias, rowwise over an n x d
// matrix; xhat and invstd are cached for the backward pass.
void layer_norm_forward(const Tensor& x, const Tensor& gain, const Tensor& bias, Tensor& xhat,
                        Tensor& invstd, Tensor& y) {
    const std::size_t n = x.dim(0), d = x.dim(1);
    xhat = Tensor({n, d});
    invstd = Tensor({n});
    y = Tensor({n, d});
    for (std::size_t i = 0; i < n; ++i) {
        const double* row = x.data() + i * d;
        double mean = 0.0;
        for (std::size_t j = 0; j < d; ++j) mean += row[j];
        mean /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            const double c = row[j] - mean;
            var += c * c;
        }
        var /= static_cast<double>(d);
        const double istd = 1.0 / std::sqrt(var + kLayerNormEps);
        invstd[i] = istd;
        double* xh = xhat.data() + i * d;
        double* out = y.data() + i * d;
        for (std::size_t j = 0; j < d; ++j) {
            xh[j] = (row[j] - mean) * istd;
            out[j] = gain[j] * xh[j] + bias[j];
        }
    }
}

// dx = invstd * (dxhat - mean(dxhat) - xhat * mean(dxhat .* xhat)).
void layer_norm_backward(const Tensor& dy, const Tensor& xhat, const Tensor& invstd,
                         const Tensor& gain, Tensor& dx, Tensor& dgain, Tensor& dbias) {
    const std::size_t n = dy.dim(0), d = dy.dim(1);
    dx = Tensor({n, d});
    for (std::size_t i = 0; i < n; ++i) {
        const double* dyr = dy.data() + i * d;
        const double* xh = xhat.data() + i * d;
        double m1 = 0.0, m2 = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            const double dxh = dyr[j] * gain[j];
            m1 += dxh;
            m2 += dxh * xh[j];
        }
        m1 /= static_cast<double>(d);
        m2 /= static_cast<double>(d);
        double* dxr = dx.data() + i * d;
        for (std::size_t j = 0; j < d; ++j) {
            const double dxh = dyr[j] * gain[j];
            dxr[j] = invstd[i] * (dxh - m1 - xh[j] * m2);
            dgain[j] += dyr[j] * xh[j];
            dbias[j] += dyr[j];
        }
    }
}

// x W + b for row-major x (n x k), W (k x m), b (m).
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
    const std::size_t n = x.dim(0), k = x.dim(1), m = w.dim(1);
    Tensor y({n, m});
    matmul_nn(x.data(), w.data(), y.data(), n, k, m);
    for (std::size_t i = 0; i < n; ++i) {
        double* row = y.data() + i * m;
        for (std::size_t j = 0; j < m; ++j) row[j] += b[j];
    }
    return y;
}

void add_inplace(Tensor& a, const Tensor& b) {
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
}

void apply_dropout(Tensor& x, Tensor& mask, double p, Rng& rng) {
    mask = Tensor(x.shape());
    const double scale = 1.0 / (1.0 - p);
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double keep = rng.uniform() >= p ? scale : 0.0;
        mask[i] = keep;
        x[i] *= keep;
    }
}

void write_u32(std::ostream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

void write_u64(std::ostream& out, std::uint64_t v) {
    write_u32(out, static_cast<std::uint32_t>(v));
    write_u32(out, static_cast<std::uint32_t>(v >> 32));
}

std::uint32_t read_u32(std::istream& in) {
    unsigned char b[4] = {0, 0, 0, 0};
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw UserError("truncated checkpoint");
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

std::uint64_t read_u64(std::istream& in) {
    const std::uint64_t lo = read_u32(in);
    const std::uint64_t hi = read_u32(in);
    return lo | (hi << 32);
}

constexpr char kMagic[8] = {'N', 'E', 'B', 'U', 'L', 'A', 'P', '1'};

}  // namespace

void ModelConfig::validate() const {
    if (vocab_size < 2) throw UserError("vocab_size must be >= 2");
    if (seq_len == 0) throw UserError("seq_len must be positive");
    if (embed_dim == 0 || embed_dim % 2 != 0) throw UserError("embed_dim must be positive and even");
    if (num_heads == 0 || embed_dim % num_heads != 0)
        throw UserError("embed_dim must be divisible by num_heads");
    if (span == 0 || seq_len % span != 0)
        throw SpanNotDivisor("span must divide seq_len (" + std::to_string(span) + " vs " +
                             std::to_string(seq_len) + ")");
    if (ffn_dim == 0) throw UserError("ffn_dim must be positive");
    if (classifier_hidden == 0) throw UserError("classifier_hidden must be positive");
    if (num_classes < 2) throw UserError("num_classes must be >= 2");
    if (dropout < 0.0 || dropout >= 1.0) throw UserError("dropout must be in [0, 1)");
}

std::string ModelConfig::to_json() const {
    nlohmann::ordered_json j;
    j["vocab_size"] = vocab_size;
    j["seq_len"] = seq_len;
    j["embed_dim"] = embed_dim;
    j["num_layers"] = num_layers;
    j["num_heads"] = num_heads;
    j["span"] = span;
    j["ffn_dim"] = ffn_dim;
    j["classifier_hidden"] = classifier_hidden;
    j["num_classes"] = num_classes;
    j["dropout"] = dropout;
    return j.dump();
}

ModelConfig ModelConfig::from_json(const std::string& text) {
    const auto j = nlohmann::ordered_json::parse(text);
    ModelConfig c;
    c.vocab_size = j.at("vocab_size").get<std::size_t>();
    c.seq_len = j.at("seq_len").get<std::size_t>();
    c.embed_dim = j.at("embed_dim").get<std::size_t>();
    c.num_layers = j.at("num_layers").get<std::size_t>();
    c.num_heads = j.at("num_heads").get<std::size_t>();
    c.span = j.at("span").get<std::size_t>();
    c.ffn_dim = j.at("ffn_dim").get<std::size_t>();
    c.classifier_hidden = j.at("classifier_hidden").get<std::size_t>();
    c.num_classes = j.at("num_classes").get<std::size_t>();
    c.dropout = j.at("dropout").get<double>();
    return c;
}

ModelParams ModelParams::init(const ModelConfig& config, std::uint64_t seed) {
    config.validate();
    Rng rng(seed);
    const std::size_t d = config.embed_dim;
    ModelParams p;
    p.embedding = Tensor({config.vocab_size, d});
    for (std::size_t i = 0; i < p.embedding.size(); ++i) p.embedding[i] = rng.normal(0.0, 0.02);

    auto xavier = [&rng](std::size_t fan_in, std::size_t fan_out) {
        Tensor t({fan_in, fan_out});
        const double std = std::sqrt(2.0 / static_cast<double>(fan_in + fan_out));
        for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.normal(0.0, std);
        return t;
    };
    auto zeros = [](std::size_t n) { return Tensor({n}); };
    auto ones = [](std::size_t n) {
        Tensor t({n});
        t.fill(1.0);
        return t;
    };

    p.layers.resize(config.num_layers);
    for (LayerParams& lp : p.layers) {
        lp.wq = xavier(d, d);
        lp.bq = zeros(d);
        lp.wk = xavier(d, d);
        lp.bk = zeros(d);
        lp.wv = xavier(d, d);
        lp.bv = zeros(d);
        lp.wo = xavier(d, d);
        lp.bo = zeros(d);
        lp.ln1_gain = ones(d);
        lp.ln1_bias = zeros(d);
        lp.ffn_w1 = xavier(d, config.ffn_dim);
        lp.ffn_b1 = zeros(config.ffn_dim);
        lp.ffn_w2 = xavier(config.ffn_dim, d);
        lp.ffn_b2 = zeros(d);
        lp.ln2_gain = ones(d);
        lp.ln2_bias = zeros(d);
    }
    p.cls_w1 = xavier(d, config.classifier_hidden);
    p.cls_b1 = zeros(config.classifier_hidden);
    p.cls_w2 = xavier(config.classifier_hidden, config.num_classes);
    p.cls_b2 = zeros(config.num_classes);
    return p;
}

ModelParams ModelParams::zeros_like(const ModelParams& other) {
    ModelParams p;
    p.embedding = Tensor::zeros_like(other.embedding);
    p.layers.resize(other.layers.size());
    for (std::size_t l = 0; l < other.layers.size(); ++l) {
        const LayerParams& src = other.layers[l];
        LayerParams& dst = p.layers[l];
        dst.wq = Tensor::zeros_like(src.wq);
        dst.bq = Tensor::zeros_like(src.bq);
        dst.wk = Tensor::zeros_like(src.wk);
        dst.bk = Tensor::zeros_like(src.bk);
        dst.wv = Tensor::zeros_like(src.wv);
        dst.bv = Tensor::zeros_like(src.bv);
        dst.wo = Tensor::zeros_like(src.wo);
        dst.bo = Tensor::zeros_like(src.bo);
        dst.ln1_gain = Tensor::zeros_like(src.ln1_gain);
        dst.ln1_bias = Tensor::zeros_like(src.ln1_bias);
        dst.ffn_w1 = Tensor::zeros_like(src.ffn_w1);
        dst.ffn_b1 = Tensor::zeros_like(src.ffn_b1);
        dst.ffn_w2 = Tensor::zeros_like(src.ffn_w2);
        dst.ffn_b2 = Tensor::zeros_like(src.ffn_b2);
        dst.ln2_gain = Tensor::zeros_like(src.ln2_gain);
        dst.ln2_bias = Tensor::zeros_like(src.ln2_bias);
    }
    p.cls_w1 = Tensor::zeros_like(other.cls_w1);
    p.cls_b1 = Tensor::zeros_like(other.cls_b1);
    p.cls_w2 = Tensor::zeros_like(other.cls_w2);
    p.cls_b2 = Tensor::zeros_like(other.cls_b2);
    return p;
}

std::size_t ModelParams::total_parameters() const {
    std::size_t total = 0;
    for_each_tensor([&total](const std::string&, const Tensor& t) { total += t.size(); });
    return total;
}

std::size_t count_parameters(const ModelConfig& config) {
    const std::size_t d = config.embed_dim;
    const std::size_t f = config.ffn_dim;
    const std::size_t h = config.classifier_hidden;
    const std::size_t c = config.num_classes;
    const std::size_t per_layer = 4 * (d * d + d) + (d * f + f) + (f * d + d) + 2 * (2 * d);
    return config.vocab_size * d + config.num_layers * per_layer + (d * h + h) + (h * c + c);
}

Tensor positional_encoding(std::size_t seq_len, std::size_t dim) {
    if (dim % 2 != 0) throw ShapeMismatch("positional encoding needs an even dimension");
    Tensor pe({seq_len, dim});
    for (std::size_t pos = 0; pos < seq_len; ++pos) {
        for (std::size_t i = 0; 2 * i < dim; ++i) {
            const double denom =
                std::pow(10000.0, (2.0 * static_cast<double>(i)) / static_cast<double>(dim));
            const double angle = static_cast<double>(pos) / denom;
            pe.at(pos, 2 * i) = std::sin(angle);
            pe.at(pos, 2 * i + 1) = std::cos(angle);
        }
    }
    return pe;
}

Tensor embed(const TokenSequence& seq, const Tensor& embedding_table) {
    const std::size_t n = seq.ids.size();
    const std::size_t v = embedding_table.dim(0);
    const std::size_t d = embedding_table.dim(1);
    const double scale = std::sqrt(static_cast<double>(d));
    Tensor e({n, d});
    for (std::size_t i = 0; i < n; ++i) {
        const std::uint32_t id = seq.ids[i];
        if (id >= v) throw IdOutOfRange("token id " + std::to_string(id) + " >= vocab size");
        const double* row = embedding_table.data() + static_cast<std::size_t>(id) * d;
        double* out = e.data() + i * d;
        for (std::size_t j = 0; j < d; ++j) out[j] = row[j] * scale;
    }
    return e;
}

Tensor add_positions(const Tensor& e, const Tensor& pe) {
    if (e.rank() != 2 || pe.rank() != 2 || e.dim(0) > pe.dim(0) || e.dim(1) != pe.dim(1))
        throw ShapeMismatch("embedding " + e.shape_str() + " vs positional table " + pe.shape_str());
    Tensor out = e;
    const std::size_t d = e.dim(1);
    for (std::size_t i = 0; i < e.dim(0); ++i)
        for (std::size_t j = 0; j < d; ++j) out.at(i, j) += pe.at(i, j);
    return out;
}

Tensor chunked_self_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                              std::size_t span, const std::vector<bool>& mask,
                              AttentionStats* stats, Tensor* probs) {
    const std::size_t n = q.dim(0);
    const std::size_t dk = q.dim(1);
    if (!q.same_shape(k) || !q.same_shape(v)) throw ShapeMismatch("q/k/v shapes differ");
    if (span == 0 || n % span != 0)
        throw SpanNotDivisor("span " + std::to_string(span) + " does not divide length " +
                             std::to_string(n));
    if (mask.size() != n) throw ShapeMismatch("mask length != sequence length");

    const std::size_t blocks = n / span;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dk));
    Tensor out({n, dk});
    if (probs) *probs = Tensor({n, span});

    std::vector<double> scores(span * span);
    for (std::size_t b = 0; b < blocks; ++b) {
        const std::size_t base = b * span;
        const double* qb = q.data() + base * dk;
        const double* kb = k.data() + base * dk;
        const double* vb = v.data() + base * dk;

        matmul_nt(qb, kb, scores.data(), span, dk, span);
        if (stats) stats->score_macs += static_cast<std::uint64_t>(span) * span * dk;

        bool any_key = false;
        for (std::size_t j = 0; j < span; ++j) any_key = any_key || mask[base + j];

        for (std::size_t i = 0; i < span; ++i) {
            double* row = scores.data() + i * span;
            double* out_row = out.data() + (base + i) * dk;
            if (!any_key) {
                // Fully padded block: zero output, zero attention row.
                if (probs)
                    for (std::size_t j = 0; j < span; ++j) probs->at(base + i, j) = 0.0;
                continue;
            }
            double max_logit = -std::numeric_limits<double>::infinity();
            for (std::size_t j = 0; j < span; ++j) {
                row[j] *= scale;
                if (mask[base + j] && row[j] > max_logit) max_logit = row[j];
            }
            double denom = 0.0;
            for (std::size_t j = 0; j < span; ++j) {
                if (mask[base + j]) {
                    row[j] = std::exp(row[j] - max_logit);
                    denom += row[j];
                } else {
                    row[j] = 0.0;
                }
            }
            for (std::size_t j = 0; j < span; ++j) {
                const double p = row[j] / denom;
                row[j] = p;
                if (probs) probs->at(base + i, j) = p;
                if (p != 0.0) {
                    const double* vrow = vb + j * dk;
                    for (std::size_t c = 0; c < dk; ++c) out_row[c] += p * vrow[c];
                }
            }
        }
    }
    return out;
}

Model::Model(ModelConfig config, std::uint64_t seed)
    : config_(std::move(config)), params_(ModelParams::init(config_, seed)) {
    pe_ = positional_encoding(config_.seq_len, config_.embed_dim);
}

Model::Model(ModelConfig config, ModelParams params)
    : config_(std::move(config)), params_(std::move(params)) {
    config_.validate();
    pe_ = positional_encoding(config_.seq_len, config_.embed_dim);
}

Tensor Model::encoder_layer_forward(const Tensor& x, std::size_t layer,
                                    const std::vector<bool>& mask, LayerCache* cache,
                                    AttentionStats* stats, Rng* dropout_rng) const {
    const LayerParams& lp = params_.layers[layer];
    const std::size_t n = x.dim(0);
    const std::size_t d = config_.embed_dim;
    const std::size_t heads = config_.num_heads;
    const std::size_t dk = config_.head_dim();
    check(x.dim(1) == d, "encoder layer input width != embed_dim");

    LayerCache local;
    LayerCache& c = cache ? *cache : local;
    c.input = x;
    c.q = linear(x, lp.wq, lp.bq);
    c.k = linear(x, lp.wk, lp.bk);
    c.v = linear(x, lp.wv, lp.bv);

    // Per-head chunked attention on column slices; contexts land in place.
    c.attn_concat = Tensor({n, d});
    c.head_probs.assign(heads, Tensor());
    Tensor qh({n, dk}), kh({n, dk}), vh({n, dk});
    for (std::size_t h = 0; h < heads; ++h) {
        for (std::size_t i = 0; i < n; ++i) {
            const double* qr = c.q.data() + i * d + h * dk;
            const double* kr = c.k.data() + i * d + h * dk;
            const double* vr = c.v.data() + i * d + h * dk;
            std::copy(qr, qr + dk, qh.data() + i * dk);
            std::copy(kr, kr + dk, kh.data() + i * dk);
            std::copy(vr, vr + dk, vh.data() + i * dk);
        }
        Tensor ctx = chunked_self_attention(qh, kh, vh, config_.span, mask, stats,
                                            &c.head_probs[h]);
        for (std::size_t i = 0; i < n; ++i)
            std::copy(ctx.data() + i * dk, ctx.data() + (i + 1) * dk,
                      c.attn_concat.data() + i * d + h * dk);
    }

    Tensor attn_out = linear(c.attn_concat, lp.wo, lp.bo);
    if (config_.dropout > 0.0 && dropout_rng)
        apply_dropout(attn_out, c.drop_mask1, config_.dropout, *dropout_rng);

    c.resid1 = c.input;
    add_inplace(c.resid1, attn_out);
    layer_norm_forward(c.resid1, lp.ln1_gain, lp.ln1_bias, c.ln1_xhat, c.ln1_invstd, c.ln1_out);

    c.ffn_pre = linear(c.ln1_out, lp.ffn_w1, lp.ffn_b1);
    c.ffn_act = c.ffn_pre;
    for (std::size_t i = 0; i < c.ffn_act.size(); ++i)
        if (c.ffn_act[i] < 0.0) c.ffn_act[i] = 0.0;
    Tensor ffn_out = linear(c.ffn_act, lp.ffn_w2, lp.ffn_b2);
    if (config_.dropout > 0.0 && dropout_rng)
        apply_dropout(ffn_out, c.drop_mask2, config_.dropout, *dropout_rng);

    c.resid2 = c.ln1_out;
    add_inplace(c.resid2, ffn_out);
    layer_norm_forward(c.resid2, lp.ln2_gain, lp.ln2_bias, c.ln2_xhat, c.ln2_invstd, c.ln2_out);
    return c.ln2_out;
}

// Encoder stack, masked mean pooling and the MLP head, starting from the
// scaled embedding already stored in the cache.
Tensor Model::run_from_cache(ForwardCache& c, AttentionStats* stats, Rng* dropout_rng) const {
    const std::size_t n = c.embedded.dim(0);
    const std::size_t d = config_.embed_dim;
    check(c.embedded.dim(1) == d, "embedding width != embed_dim");
    if (n == 0 || n % config_.span != 0)
        throw SpanNotDivisor("sequence length must be a positive multiple of the span");

    const Tensor& pe = n <= config_.seq_len ? pe_ : positional_encoding(n, d);
    c.x0 = add_positions(c.embedded, pe);

    c.layers.resize(config_.num_layers);
    Tensor x = c.x0;
    for (std::size_t l = 0; l < config_.num_layers; ++l)
        x = encoder_layer_forward(x, l, c.mask, &c.layers[l], stats, dropout_rng);

    // Masked mean pooling; a fully padded sequence pools to the zero vector.
    c.pooled = Tensor({d});
    double count = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (!c.mask[i]) continue;
        count += 1.0;
        const double* row = x.data() + i * d;
        for (std::size_t j = 0; j < d; ++j) c.pooled[j] += row[j];
    }
    if (count > 0.0)
        for (std::size_t j = 0; j < d; ++j) c.pooled[j] /= count;
    c.pool_count = count;

    const std::size_t hidden = config_.classifier_hidden;
    c.cls_pre = Tensor({hidden});
    for (std::size_t j = 0; j < hidden; ++j) {
        double acc = params_.cls_b1[j];
        for (std::size_t i = 0; i < d; ++i) acc += c.pooled[i] * params_.cls_w1.at(i, j);
        c.cls_pre[j] = acc;
    }
    c.cls_act = c.cls_pre;
    for (std::size_t j = 0; j < hidden; ++j)
        if (c.cls_act[j] < 0.0) c.cls_act[j] = 0.0;

    const std::size_t classes = config_.num_classes;
    c.logits = Tensor({classes});
    for (std::size_t j = 0; j < classes; ++j) {
        double acc = params_.cls_b2[j];
        for (std::size_t i = 0; i < hidden; ++i) acc += c.cls_act[i] * params_.cls_w2.at(i, j);
        c.logits[j] = acc;
    }
    return c.logits;
}

Tensor Model::forward_from_embedding(const Tensor& embedded, const std::vector<bool>& mask,
                                     ForwardCache* cache) const {
    ForwardCache local;
    ForwardCache& c = cache ? *cache : local;
    c.mask = mask;
    c.embedded = embedded;
    return run_from_cache(c, nullptr, nullptr);
}

Tensor Model::forward_one(const TokenSequence& seq, ForwardCache* cache, AttentionStats* stats,
                          AttentionRecord* record, Rng* dropout_rng) const {
    const std::size_t n = seq.ids.size();
    ForwardCache local;
    ForwardCache& c = cache ? *cache : local;
    c.ids = seq.ids;
    c.mask = seq.mask;
    c.embedded = embed(seq, params_.embedding);
    run_from_cache(c, stats, dropout_rng);

    if (record) {
        record->span = config_.span;
        const std::size_t blocks = n / config_.span;
        record->probs.assign(config_.num_layers,
                             std::vector<std::vector<Tensor>>(config_.num_heads));
        for (std::size_t l = 0; l < config_.num_layers; ++l) {
            for (std::size_t h = 0; h < config_.num_heads; ++h) {
                auto& per_block = record->probs[l][h];
                per_block.assign(blocks, Tensor());
                const Tensor& np = c.layers[l].head_probs[h];
                for (std::size_t b = 0; b < blocks; ++b) {
                    Tensor m({config_.span, config_.span});
                    for (std::size_t i = 0; i < config_.span; ++i)
                        for (std::size_t j = 0; j < config_.span; ++j)
                            m.at(i, j) = np.at(b * config_.span + i, j);
                    per_block[b] = std::move(m);
                }
            }
        }
    }
    return c.logits;
}

Tensor Model::forward(const std::vector<TokenSequence>& batch) const {
    const std::size_t classes = config_.num_classes;
    Tensor logits({batch.size(), classes});
    for (std::size_t s = 0; s < batch.size(); ++s) {
        if (batch[s].ids.size() != config_.seq_len)
            throw ShapeMismatch("sequence length != config seq_len in batch");
        Tensor row = forward_one(batch[s]);
        std::copy(row.data(), row.data() + classes, logits.data() + s * classes);
    }
    return logits;
}

void Model::backward_one(const ForwardCache& cache, const Tensor& dlogits, ModelParams& grads,
                         Tensor* grad_embedding) const {
    const std::size_t n = cache.x0.dim(0);
    const std::size_t d = config_.embed_dim;
    const std::size_t hidden = config_.classifier_hidden;
    const std::size_t classes = config_.num_classes;
    const std::size_t heads = config_.num_heads;
    const std::size_t dk = config_.head_dim();
    const std::size_t span = config_.span;
    const std::size_t blocks = n / span;
    const double att_scale = 1.0 / std::sqrt(static_cast<double>(dk));

    // Classifier head.
    Tensor d_act({hidden});
    for (std::size_t i = 0; i < hidden; ++i) {
        for (std::size_t j = 0; j < classes; ++j) {
            grads.cls_w2.at(i, j) += cache.cls_act[i] * dlogits[j];
            d_act[i] += params_.cls_w2.at(i, j) * dlogits[j];
        }
    }
    for (std::size_t j = 0; j < classes; ++j) grads.cls_b2[j] += dlogits[j];

    Tensor d_pre({hidden});
    for (std::size_t i = 0; i < hidden; ++i)
        d_pre[i] = cache.cls_pre[i] > 0.0 ? d_act[i] : 0.0;

    Tensor d_pooled({d});
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = 0; j < hidden; ++j) {
            grads.cls_w1.at(i, j) += cache.pooled[i] * d_pre[j];
            d_pooled[i] += params_.cls_w1.at(i, j) * d_pre[j];
        }
    }
    for (std::size_t j = 0; j < hidden; ++j) grads.cls_b1[j] += d_pre[j];

    // Pooling.
    Tensor dx({n, d});
    if (cache.pool_count > 0.0) {
        for (std::size_t i = 0; i < n; ++i) {
            if (!cache.mask[i]) continue;
            double* row = dx.data() + i * d;
            for (std::size_t j = 0; j < d; ++j) row[j] = d_pooled[j] / cache.pool_count;
        }
    }

    // Encoder layers in reverse.
    for (std::size_t li = config_.num_layers; li-- > 0;) {
        const LayerParams& lp = params_.layers[li];
        LayerParams& lg = grads.layers[li];
        const LayerCache& c = cache.layers[li];

        Tensor d_resid2;
        layer_norm_backward(dx, c.ln2_xhat, c.ln2_invstd, lp.ln2_gain, d_resid2, lg.ln2_gain,
                            lg.ln2_bias);

        Tensor d_ffn_out = d_resid2;
        if (c.drop_mask2.size() > 0)
            for (std::size_t i = 0; i < d_ffn_out.size(); ++i) d_ffn_out[i] *= c.drop_mask2[i];

        // ffn_out = ffn_act * W2 + b2
        matmul_tn(c.ffn_act.data(), d_ffn_out.data(), lg.ffn_w2.data(), n, config_.ffn_dim, d,
                  /*accumulate=*/true);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < d; ++j) lg.ffn_b2[j] += d_ffn_out.at(i, j);
        Tensor d_ffn_act({n, config_.ffn_dim});
        matmul_nt(d_ffn_out.data(), lp.ffn_w2.data(), d_ffn_act.data(), n, d, config_.ffn_dim);
        for (std::size_t i = 0; i < d_ffn_act.size(); ++i)
            if (c.ffn_pre[i] <= 0.0) d_ffn_act[i] = 0.0;

        // ffn_pre = ln1_out * W1 + b1
        matmul_tn(c.ln1_out.data(), d_ffn_act.data(), lg.ffn_w1.data(), n, d, config_.ffn_dim,
                  /*accumulate=*/true);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < config_.ffn_dim; ++j) lg.ffn_b1[j] += d_ffn_act.at(i, j);

        Tensor d_ln1_out = d_resid2;  // residual branch
        matmul_nt(d_ffn_act.data(), lp.ffn_w1.data(), d_ln1_out.data(), n, config_.ffn_dim, d,
                  /*accumulate=*/true);

        Tensor d_resid1;
        layer_norm_backward(d_ln1_out, c.ln1_xhat, c.ln1_invstd, lp.ln1_gain, d_resid1,
                            lg.ln1_gain, lg.ln1_bias);

        Tensor d_attn_out = d_resid1;
        if (c.drop_mask1.size() > 0)
            for (std::size_t i = 0; i < d_attn_out.size(); ++i) d_attn_out[i] *= c.drop_mask1[i];

        // attn_out = attn_concat * Wo + bo
        matmul_tn(c.attn_concat.data(), d_attn_out.data(), lg.wo.data(), n, d, d, true);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < d; ++j) lg.bo[j] += d_attn_out.at(i, j);
        Tensor d_concat({n, d});
        matmul_nt(d_attn_out.data(), lp.wo.data(), d_concat.data(), n, d, d);

        // Attention backward per head and block.
        Tensor d_q({n, d}), d_k({n, d}), d_v({n, d});
        std::vector<double> d_ctx(span * dk), d_p(span * span), d_scores(span * span);
        std::vector<double> qb(span * dk), kb(span * dk), vb(span * dk);
        for (std::size_t h = 0; h < heads; ++h) {
            const Tensor& probs = c.head_probs[h];
            for (std::size_t b = 0; b < blocks; ++b) {
                const std::size_t base = b * span;
                for (std::size_t i = 0; i < span; ++i) {
                    const double* qr = c.q.data() + (base + i) * d + h * dk;
                    const double* kr = c.k.data() + (base + i) * d + h * dk;
                    const double* vr = c.v.data() + (base + i) * d + h * dk;
                    std::copy(qr, qr + dk, qb.data() + i * dk);
                    std::copy(kr, kr + dk, kb.data() + i * dk);
                    std::copy(vr, vr + dk, vb.data() + i * dk);
                    const double* dcr = d_concat.data() + (base + i) * d + h * dk;
                    std::copy(dcr, dcr + dk, d_ctx.data() + i * dk);
                }
                // d_P = d_ctx * V^T ; d_V = P^T * d_ctx
                matmul_nt(d_ctx.data(), vb.data(), d_p.data(), span, dk, span);
                // softmax backward: dS = P .* (dP - sum_j dP_j P_j)
                for (std::size_t i = 0; i < span; ++i) {
                    const double* prow = probs.data() + (base + i) * span;
                    double* dprow = d_p.data() + i * span;
                    double dot = 0.0;
                    for (std::size_t j = 0; j < span; ++j) dot += dprow[j] * prow[j];
                    double* dsrow = d_scores.data() + i * span;
                    for (std::size_t j = 0; j < span; ++j)
                        dsrow[j] = prow[j] * (dprow[j] - dot);
                }
                // d_V = P^T * d_ctx; the block's rows are contiguous in the
                // N x S probability cache.
                const double* pblock = probs.data() + base * span;
                std::vector<double> dvb(span * dk, 0.0);
                matmul_tn(pblock, d_ctx.data(), dvb.data(), span, span, dk);
                // dQ = dS * K * scale ; dK = dS^T * Q * scale
                std::vector<double> dqb(span * dk, 0.0), dkb(span * dk, 0.0);
                matmul_nn(d_scores.data(), kb.data(), dqb.data(), span, span, dk);
                matmul_tn(d_scores.data(), qb.data(), dkb.data(), span, span, dk);
                for (std::size_t i = 0; i < span; ++i) {
                    double* dqr = d_q.data() + (base + i) * d + h * dk;
                    double* dkr = d_k.data() + (base + i) * d + h * dk;
                    double* dvr = d_v.data() + (base + i) * d + h * dk;
                    for (std::size_t cidx = 0; cidx < dk; ++cidx) {
                        dqr[cidx] = dqb[i * dk + cidx] * att_scale;
                        dkr[cidx] = dkb[i * dk + cidx] * att_scale;
                        dvr[cidx] = dvb[i * dk + cidx];
                    }
                }
            }
        }

        // Projection backward: q = x Wq + bq etc.
        matmul_tn(c.input.data(), d_q.data(), lg.wq.data(), n, d, d, true);
        matmul_tn(c.input.data(), d_k.data(), lg.wk.data(), n, d, d, true);
        matmul_tn(c.input.data(), d_v.data(), lg.wv.data(), n, d, d, true);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < d; ++j) {
                lg.bq[j] += d_q.at(i, j);
                lg.bk[j] += d_k.at(i, j);
                lg.bv[j] += d_v.at(i, j);
            }
        }
        Tensor d_input = d_resid1;  // residual branch
        matmul_nt(d_q.data(), lp.wq.data(), d_input.data(), n, d, d, true);
        matmul_nt(d_k.data(), lp.wk.data(), d_input.data(), n, d, d, true);
        matmul_nt(d_v.data(), lp.wv.data(), d_input.data(), n, d, d, true);
        dx = std::move(d_input);
    }

    // Embedding: e = table[id] * sqrt(d); PE is additive.
    if (grad_embedding) *grad_embedding = dx;
    if (!cache.ids.empty()) {
        const double scale = std::sqrt(static_cast<double>(d));
        for (std::size_t i = 0; i < n; ++i) {
            double* grow = grads.embedding.data() + static_cast<std::size_t>(cache.ids[i]) * d;
            const double* dxr = dx.data() + i * d;
            for (std::size_t j = 0; j < d; ++j) grow[j] += dxr[j] * scale;
        }
    }
}

void Model::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw UserError("cannot write checkpoint: " + path.string());
    out.write(kMagic, sizeof(kMagic));
    const std::string config_json = config_.to_json();
    write_u32(out, static_cast<std::uint32_t>(config_json.size()));
    out.write(config_json.data(), static_cast<std::streamsize>(config_json.size()));

    std::uint32_t tensor_count = 0;
    params_.for_each_tensor([&tensor_count](const std::string&, const Tensor&) { ++tensor_count; });
    write_u32(out, tensor_count);

    params_.for_each_tensor([&out](const std::string& name, const Tensor& t) {
        write_u32(out, static_cast<std::uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_u32(out, static_cast<std::uint32_t>(t.rank()));
        for (std::size_t i = 0; i < t.rank(); ++i) write_u64(out, t.dim(i));
        for (std::size_t i = 0; i < t.size(); ++i) {
            const float f = static_cast<float>(t[i]);
            const auto bits = std::bit_cast<std::uint32_t>(f);
            write_u32(out, bits);
        }
    });
    if (!out) throw UserError("failed writing checkpoint: " + path.string());
}

Model Model::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MissingFile(path.string());
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kMagic, 8) != 0)
        throw UserError("not a model checkpoint: " + path.string());
    const std::uint32_t config_len = read_u32(in);
    if (config_len > (1u << 20)) throw UserError("corrupt checkpoint header");
    std::string config_json(config_len, '\0');
    in.read(config_json.data(), config_len);
    if (!in) throw UserError("truncated checkpoint: " + path.string());
    const ModelConfig config = ModelConfig::from_json(config_json);

    ModelParams params = ModelParams::zeros_like(ModelParams::init(config, 0));
    const std::uint32_t tensor_count = read_u32(in);
    for (std::uint32_t t = 0; t < tensor_count; ++t) {
        const std::uint32_t name_len = read_u32(in);
        if (name_len > 256) throw UserError("corrupt tensor name in " + path.string());
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        const std::uint32_t rank = read_u32(in);
        if (rank > 8) throw UserError("corrupt tensor rank in " + path.string());
        std::vector<std::size_t> dims(rank);
        std::size_t total = 1;
        for (std::uint32_t i = 0; i < rank; ++i) {
            dims[i] = static_cast<std::size_t>(read_u64(in));
            total *= dims[i];
        }
        Tensor* target = nullptr;
        params.for_each_tensor([&](const std::string& tn, Tensor& tt) {
            if (tn == name) target = &tt;
        });
        if (!target) throw UserError("unknown tensor '" + name + "' in " + path.string());
        if (target->shape() != dims)
            throw UserError("tensor '" + name + "' shape mismatch in " + path.string());
        for (std::size_t i = 0; i < total; ++i) {
            const std::uint32_t bits = read_u32(in);
            (*target)[i] = static_cast<double>(std::bit_cast<float>(bits));
        }
    }
    if (!in) throw UserError("truncated checkpoint: " + path.string());
    return Model(config, std::move(params));
}

}  // namespace nebula
