#include "nebula/explain.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include <json.hpp>

#include "nebula/errors.hpp"

namespace nebula {

Attribution integrated_gradients_path(const ScoreFn& f, const Tensor& input,
                                      const Tensor& baseline, std::size_t steps) {
    if (!input.same_shape(baseline)) throw ShapeMismatch("input/baseline shapes differ");
    if (steps == 0) throw UserError("integrated gradients needs at least one step");
    const std::size_t n = input.dim(0);
    const std::size_t d = input.dim(1);

    Tensor delta = input;
    for (std::size_t i = 0; i < delta.size(); ++i) delta[i] -= baseline[i];

    Tensor grad_sum({n, d});
    for (std::size_t s = 0; s < steps; ++s) {
        const double alpha = static_cast<double>(s) / static_cast<double>(steps);
        Tensor point = baseline;
        for (std::size_t i = 0; i < point.size(); ++i) point[i] += alpha * delta[i];
        const auto [value, grad] = f(point);
        (void)value;
        for (std::size_t i = 0; i < grad_sum.size(); ++i) grad_sum[i] += grad[i];
    }

    Attribution attr;
    attr.token_scores.assign(n, 0.0);
    attr.token_sums.assign(n, 0.0);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double row_sum = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            const double a = delta.at(i, j) * grad_sum.at(i, j) / static_cast<double>(steps);
            row_sum += a;
        }
        attr.token_sums[i] = row_sum;
        attr.token_scores[i] = row_sum / static_cast<double>(d);
        total += row_sum;
    }
    attr.input_score = f(input).first;
    attr.baseline_score = f(baseline).first;
    attr.completeness_gap = std::abs(total - (attr.input_score - attr.baseline_score));
    return attr;
}

Attribution integrated_gradients(const Model& model, const TokenSequence& x, std::size_t steps,
                                 int target_class) {
    const Tensor input = embed(x, model.params().embedding);

    TokenSequence baseline_seq;
    baseline_seq.ids.assign(x.ids.size(), Vocabulary::kPadId);
    baseline_seq.mask.assign(x.ids.size(), false);
    const Tensor baseline = embed(baseline_seq, model.params().embedding);

    int target = target_class;
    if (target < 0) {
        if (model.config().num_classes == 2) {
            target = 1;
        } else {
            const Tensor logits = model.forward_one(x);
            target = 0;
            for (std::size_t c = 1; c < model.config().num_classes; ++c)
                if (logits[c] > logits[target]) target = static_cast<int>(c);
        }
    }
    if (static_cast<std::size_t>(target) >= model.config().num_classes)
        throw LabelOutOfRange("attribution target class out of range");

    ModelParams scratch = ModelParams::zeros_like(model.params());
    const std::vector<bool> mask = x.mask;
    ScoreFn f = [&model, &scratch, &mask, target](const Tensor& e) {
        ForwardCache cache;
        const Tensor logits = model.forward_from_embedding(e, mask, &cache);
        Tensor dlogits({logits.size()});
        dlogits[static_cast<std::size_t>(target)] = 1.0;
        Tensor grad;
        model.backward_one(cache, dlogits, scratch, &grad);
        return std::make_pair(logits[static_cast<std::size_t>(target)], std::move(grad));
    };
    Attribution attr = integrated_gradients_path(f, input, baseline, steps);
    attr.target_class = target;
    return attr;
}

AttentionRecord attention_activations(const Model& model, const TokenSequence& x) {
    AttentionRecord record;
    model.forward_one(x, nullptr, nullptr, &record);
    return record;
}

std::vector<AttributedToken> top_attributed_tokens(const Attribution& attr,
                                                   const Vocabulary& vocab,
                                                   const TokenSequence& x, std::size_t k) {
    if (k == 0) throw UserError("k must be >= 1");
    std::vector<std::size_t> positions;
    for (std::size_t i = 0; i < x.mask.size(); ++i)
        if (x.mask[i]) positions.push_back(i);
    std::sort(positions.begin(), positions.end(), [&attr](std::size_t a, std::size_t b) {
        const double fa = std::abs(attr.token_scores[a]);
        const double fb = std::abs(attr.token_scores[b]);
        if (fa != fb) return fa > fb;
        return a < b;
    });
    if (positions.size() > k) positions.resize(k);
    std::vector<AttributedToken> out;
    out.reserve(positions.size());
    for (std::size_t pos : positions)
        out.push_back(AttributedToken{vocab.token(x.ids[pos]), pos, attr.token_scores[pos]});
    return out;
}

std::string attribution_to_json(const Attribution& attr, const Vocabulary& vocab,
                                const TokenSequence& x) {
    nlohmann::ordered_json j;
    j["target_class"] = attr.target_class;
    j["input_score"] = attr.input_score;
    j["baseline_score"] = attr.baseline_score;
    j["completeness_gap"] = attr.completeness_gap;
    nlohmann::ordered_json tokens = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < attr.token_scores.size(); ++i) {
        if (!x.mask[i]) continue;
        nlohmann::ordered_json t;
        t["position"] = i;
        t["token"] = vocab.token(x.ids[i]);
        t["score"] = attr.token_scores[i];
        t["sum"] = attr.token_sums[i];
        tokens.push_back(std::move(t));
    }
    j["tokens"] = std::move(tokens);
    return j.dump(2) + "\n";
}

std::string attribution_to_csv(const Attribution& attr, const Vocabulary& vocab,
                               const TokenSequence& x) {
    std::string out = "position,token,score\n";
    for (std::size_t i = 0; i < attr.token_scores.size(); ++i) {
        if (!x.mask[i]) continue;
        out += std::to_string(i);
        out.push_back(',');
        out += vocab.token(x.ids[i]);
        out.push_back(',');
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.12g", attr.token_scores[i]);
        out += buf;
        out.push_back('\n');
    }
    return out;
}

std::string attention_record_to_json(const AttentionRecord& record) {
    nlohmann::ordered_json j;
    j["span"] = record.span;
    nlohmann::ordered_json layers = nlohmann::ordered_json::array();
    for (std::size_t l = 0; l < record.probs.size(); ++l) {
        for (std::size_t h = 0; h < record.probs[l].size(); ++h) {
            for (std::size_t b = 0; b < record.probs[l][h].size(); ++b) {
                const Tensor& m = record.probs[l][h][b];
                nlohmann::ordered_json entry;
                entry["layer"] = l;
                entry["head"] = h;
                entry["block"] = b;
                nlohmann::ordered_json rows = nlohmann::ordered_json::array();
                for (std::size_t i = 0; i < m.dim(0); ++i) {
                    nlohmann::ordered_json row = nlohmann::ordered_json::array();
                    for (std::size_t jx = 0; jx < m.dim(1); ++jx) row.push_back(m.at(i, jx));
                    rows.push_back(std::move(row));
                }
                entry["matrix"] = std::move(rows);
                layers.push_back(std::move(entry));
            }
        }
    }
    j["activations"] = std::move(layers);
    return j.dump() + "\n";
}

}  // namespace nebula
