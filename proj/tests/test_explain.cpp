#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "nebula/explain.hpp"

#include <algorithm>
#include <cmath>

#include "nebula/rng.hpp"
#include "nebula/train.hpp"

using namespace nebula;

namespace {

TokenSequence make_seq(std::vector<std::uint32_t> ids, std::size_t content) {
    TokenSequence seq;
    seq.ids = std::move(ids);
    seq.mask.assign(seq.ids.size(), false);
    for (std::size_t i = 0; i < content; ++i) seq.mask[i] = true;
    return seq;
}

ModelConfig small_config() {
    ModelConfig config;
    config.vocab_size = 12;
    config.seq_len = 8;
    config.embed_dim = 8;
    config.num_layers = 2;
    config.num_heads = 2;
    config.span = 4;
    config.ffn_dim = 16;
    config.classifier_hidden = 16;
    config.num_classes = 2;
    return config;
}

}  // namespace

TEST_CASE("integrated gradients: exact for a linear surrogate head") {
    Rng rng(1);
    const std::size_t n = 6, d = 4;
    Tensor w({n, d});
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = rng.normal(0.0, 1.0);

    // f(e) = sum_ij w_ij e_ij; gradient is w everywhere.
    ScoreFn linear = [&w](const Tensor& e) {
        double value = 0.0;
        for (std::size_t i = 0; i < e.size(); ++i) value += w[i] * e[i];
        return std::make_pair(value, w);
    };

    Tensor input({n, d});
    for (std::size_t i = 0; i < input.size(); ++i) input[i] = rng.normal(0.0, 2.0);
    Tensor baseline({n, d});  // zeros

    for (std::size_t steps : {1u, 2u, 7u, 33u}) {
        const Attribution attr = integrated_gradients_path(linear, input, baseline, steps);
        for (std::size_t i = 0; i < n; ++i) {
            double expected = 0.0;
            for (std::size_t j = 0; j < d; ++j) expected += w.at(i, j) * input.at(i, j);
            CHECK(attr.token_sums[i] == doctest::Approx(expected).epsilon(1e-12));
            CHECK(attr.token_scores[i] == doctest::Approx(expected / d).epsilon(1e-12));
        }
        CHECK(attr.completeness_gap <= 1e-10);
    }
}

TEST_CASE("integrated gradients: input equal to baseline attributes nothing") {
    Model model(small_config(), 3);
    const TokenSequence allpad = make_seq({0, 0, 0, 0, 0, 0, 0, 0}, 0);
    const Attribution attr = integrated_gradients(model, allpad, 8);
    for (double s : attr.token_scores) CHECK(s == 0.0);
    CHECK(attr.completeness_gap <= 1e-12);
    CHECK(attr.input_score == doctest::Approx(attr.baseline_score));
}

TEST_CASE("integrated gradients: completeness tightens with more steps") {
    // Train briefly so the surface is not flat, then sweep m.
    Model model(small_config(), 7);
    Dataset data;
    Rng rng(5);
    for (int i = 0; i < 24; ++i) {
        const int label = i % 2;
        std::vector<std::uint32_t> ids(8, 0);
        for (std::size_t t = 0; t < 6; ++t)
            ids[t] = label == 0 ? 2 + static_cast<std::uint32_t>(rng.uniform_u64(3))
                                : 6 + static_cast<std::uint32_t>(rng.uniform_u64(3));
        data.sequences.push_back(make_seq(ids, 6));
        data.labels.push_back(label);
    }
    TrainConfig cfg;
    cfg.batch_size = 8;
    cfg.max_epochs = 30;
    cfg.lr = 3e-3;
    train(model, data, cfg);

    const TokenSequence& x = data.sequences[1];
    double previous_gap = std::numeric_limits<double>::infinity();
    for (std::size_t m : {16u, 64u, 256u}) {
        const Attribution attr = integrated_gradients(model, x, m);
        const double delta = std::abs(attr.input_score - attr.baseline_score);
        if (m == 256) CHECK(attr.completeness_gap <= 0.01 * delta + 1e-4);
        CHECK(attr.completeness_gap <= previous_gap * 1.5 + 1e-9);  // no blow-ups
        previous_gap = attr.completeness_gap;
    }

    // Pad positions receive (input - baseline) = 0, so zero attribution.
    const Attribution attr = integrated_gradients(model, x, 16);
    for (std::size_t i = 6; i < 8; ++i) CHECK(attr.token_scores[i] == 0.0);
}

TEST_CASE("attention activations: read-only recording with exact shapes") {
    ModelConfig config = small_config();
    Model model(config, 11);
    const TokenSequence x = make_seq({2, 3, 4, 5, 6, 7, 0, 0}, 6);

    const Tensor plain = model.forward_one(x);
    AttentionRecord record;
    ForwardCache cache;
    const Tensor recorded = model.forward_one(x, &cache, nullptr, &record);
    for (std::size_t c = 0; c < plain.size(); ++c) CHECK(plain[c] == recorded[c]);

    REQUIRE(record.probs.size() == config.num_layers);
    for (const auto& layer : record.probs) {
        REQUIRE(layer.size() == config.num_heads);
        for (const auto& head : layer) {
            REQUIRE(head.size() == config.seq_len / config.span);
            for (const Tensor& block : head) {
                REQUIRE(block.shape() ==
                        std::vector<std::size_t>{config.span, config.span});
                for (std::size_t i = 0; i < block.size(); ++i) CHECK(block[i] >= 0.0);
            }
        }
    }

    // Rows over unmasked keys sum to one at every layer/head/block.
    for (std::size_t l = 0; l < config.num_layers; ++l)
        for (std::size_t h = 0; h < config.num_heads; ++h)
            for (std::size_t b = 0; b < config.seq_len / config.span; ++b) {
                const Tensor& m = record.probs[l][h][b];
                bool any = false;
                for (std::size_t j = 0; j < config.span; ++j)
                    any = any || x.mask[b * config.span + j];
                for (std::size_t i = 0; i < config.span; ++i) {
                    double sum = 0.0;
                    for (std::size_t j = 0; j < config.span; ++j) sum += m.at(i, j);
                    if (any)
                        CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
                    else
                        CHECK(sum == 0.0);
                }
            }
}

TEST_CASE("attention activations: zero projections give uniform rows") {
    ModelConfig config = small_config();
    config.num_layers = 1;
    Model model(config, 13);
    LayerParams& lp = model.params().layers[0];
    lp.wq.fill(0.0);
    lp.bq.fill(0.0);
    lp.wk.fill(0.0);
    lp.bk.fill(0.0);

    const TokenSequence x = make_seq({2, 3, 4, 5, 6, 7, 8, 9}, 8);
    const AttentionRecord record = attention_activations(model, x);
    for (const auto& head : record.probs[0])
        for (const Tensor& block : head)
            for (std::size_t i = 0; i < block.size(); ++i)
                CHECK(block[i] == doctest::Approx(1.0 / config.span).epsilon(1e-12));
}

TEST_CASE("top attributed tokens: ordering against a reference sort") {
    const Vocabulary vocab = Vocabulary::build({{"aa", "bb", "cc", "dd"}}, 10);
    TokenSequence x = make_seq({2, 3, 4, 5, 0, 0}, 4);

    Attribution attr;
    attr.token_scores = {0.3, -0.9, 0.3, 0.05, 0.7, 0.0};  // pads carry junk on purpose
    attr.token_sums = attr.token_scores;

    const auto top = top_attributed_tokens(attr, vocab, x, 3);
    REQUIRE(top.size() == 3);
    CHECK(top[0].position == 1);  // |-0.9|
    CHECK(top[1].position == 0);  // |0.3| tie -> lower position first
    CHECK(top[2].position == 2);

    // k larger than real tokens: all real tokens, pads excluded.
    const auto all = top_attributed_tokens(attr, vocab, x, 99);
    CHECK(all.size() == 4);
    for (const auto& t : all) CHECK(t.position < 4);

    // Single dominant score comes first.
    Attribution single;
    single.token_scores = {0.0, 0.0, 0.42, 0.0, 0.0, 0.0};
    single.token_sums = single.token_scores;
    CHECK(top_attributed_tokens(single, vocab, x, 1)[0].position == 2);

    // Independent oracle: stable sort by |score| then position.
    std::vector<std::size_t> order = {0, 1, 2, 3};
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const double fa = std::abs(attr.token_scores[a]), fb = std::abs(attr.token_scores[b]);
        return fa != fb ? fa > fb : a < b;
    });
    for (std::size_t i = 0; i < all.size(); ++i) CHECK(all[i].position == order[i]);
}

TEST_CASE("attribution serialization") {
    const Vocabulary vocab = Vocabulary::build({{"aa", "bb"}}, 10);
    TokenSequence x = make_seq({2, 3, 0}, 2);
    Attribution attr;
    attr.token_scores = {0.5, -0.25, 0.0};
    attr.token_sums = {1.0, -0.5, 0.0};
    attr.input_score = 0.4;

    const std::string json = attribution_to_json(attr, vocab, x);
    CHECK(json.find("\"token\": \"aa\"") != std::string::npos);
    CHECK(json.find("completeness_gap") != std::string::npos);

    const std::string csv = attribution_to_csv(attr, vocab, x);
    CHECK(csv.rfind("position,token,score\n", 0) == 0);
    CHECK(csv.find("1,bb,-0.25") != std::string::npos);
}
