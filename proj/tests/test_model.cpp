#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "nebula/model.hpp"

#include <cmath>

#include "nebula/errors.hpp"
#include "nebula/rng.hpp"
#include "reference_oracles.hpp"
#include "test_support.hpp"

using namespace nebula;

namespace {

TokenSequence make_seq(std::vector<std::uint32_t> ids, std::size_t content) {
    TokenSequence seq;
    seq.ids = std::move(ids);
    seq.mask.assign(seq.ids.size(), false);
    for (std::size_t i = 0; i < content; ++i) seq.mask[i] = true;
    return seq;
}

Tensor random_tensor(Rng& rng, std::size_t rows, std::size_t cols, double scale = 1.0) {
    Tensor t({rows, cols});
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.normal(0.0, scale);
    return t;
}

ModelConfig tiny_config() {
    ModelConfig config;
    config.vocab_size = 20;
    config.seq_len = 8;
    config.embed_dim = 8;
    config.num_layers = 1;
    config.num_heads = 2;
    config.span = 4;
    config.ffn_dim = 16;
    config.classifier_hidden = 64;
    config.num_classes = 2;
    return config;
}

}  // namespace

TEST_CASE("embed scales rows by sqrt(d)") {
    SUBCASE("d=1: scale is 1") {
        Tensor table({2, 1});
        table.at(0, 0) = 0.5;
        table.at(1, 0) = 2.0;
        const Tensor e = embed(make_seq({1, 0}, 1), table);
        CHECK(e.at(0, 0) == doctest::Approx(2.0));
        CHECK(e.at(1, 0) == doctest::Approx(0.5));
    }
    SUBCASE("d=4: all-ones row becomes 2.0") {
        Tensor table({3, 4});
        for (std::size_t j = 0; j < 4; ++j) table.at(2, j) = 1.0;
        const Tensor e = embed(make_seq({2}, 1), table);
        for (std::size_t j = 0; j < 4; ++j) CHECK(e.at(0, j) == doctest::Approx(2.0));
    }
    SUBCASE("all-pad sequence repeats the scaled pad row") {
        Tensor table({4, 2});
        table.at(0, 0) = 3.0;
        table.at(0, 1) = -1.0;
        const Tensor e = embed(make_seq({0, 0, 0}, 0), table);
        const double s = std::sqrt(2.0);
        for (std::size_t i = 0; i < 3; ++i) {
            CHECK(e.at(i, 0) == doctest::Approx(3.0 * s));
            CHECK(e.at(i, 1) == doctest::Approx(-1.0 * s));
        }
    }
    SUBCASE("out-of-range id throws") {
        Tensor table({2, 2});
        CHECK_THROWS_AS(embed(make_seq({5}, 1), table), IdOutOfRange);
    }
}

TEST_CASE("positional encoding values") {
    const Tensor pe = positional_encoding(16, 6);
    // pos 0: sin(0)=0 on even dims, cos(0)=1 on odd dims.
    for (std::size_t i = 0; i < 6; i += 2) {
        CHECK(pe.at(0, i) == 0.0);
        CHECK(pe.at(0, i + 1) == 1.0);
    }
    CHECK(pe.at(1, 0) == doctest::Approx(std::sin(1.0)).epsilon(1e-9));
    CHECK(pe.at(1, 0) == doctest::Approx(0.841471).epsilon(1e-5));
    for (std::size_t i = 0; i < pe.size(); ++i) {
        CHECK(pe[i] >= -1.0);
        CHECK(pe[i] <= 1.0);
    }
    // Direct re-evaluation of the defining formula.
    for (std::size_t pos = 0; pos < 16; ++pos) {
        for (std::size_t i = 0; 2 * i < 6; ++i) {
            const double angle = pos / std::pow(10000.0, 2.0 * i / 6.0);
            CHECK(pe.at(pos, 2 * i) == doctest::Approx(std::sin(angle)).epsilon(1e-12));
            CHECK(pe.at(pos, 2 * i + 1) == doctest::Approx(std::cos(angle)).epsilon(1e-12));
        }
    }
}

TEST_CASE("add_positions") {
    const Tensor pe = positional_encoding(4, 6);
    Tensor zero({4, 6});
    const Tensor out = add_positions(zero, pe);
    for (std::size_t i = 0; i < out.size(); ++i) CHECK(out[i] == pe[i]);

    Rng rng(1);
    const Tensor e = random_tensor(rng, 4, 6);
    Tensor roundtrip = add_positions(e, pe);
    for (std::size_t i = 0; i < roundtrip.size(); ++i) roundtrip[i] -= pe[i];
    for (std::size_t i = 0; i < e.size(); ++i)
        CHECK(roundtrip[i] == doctest::Approx(e[i]).epsilon(1e-15));

    Tensor bad({4, 4});
    CHECK_THROWS_AS(add_positions(bad, pe), ShapeMismatch);
}

TEST_CASE("chunked attention: single span equals dense attention") {
    Rng rng(2);
    for (int trial = 0; trial < 10; ++trial) {
        const std::size_t n = 8;
        const std::size_t dk = 3;
        const Tensor q = random_tensor(rng, n, dk);
        const Tensor k = random_tensor(rng, n, dk);
        const Tensor v = random_tensor(rng, n, dk);
        std::vector<bool> mask(n, true);
        mask[n - 1] = trial % 2 == 0;

        const Tensor out = chunked_self_attention(q, k, v, n, mask);
        const auto ref = reference::dense_attention(reference::to_matrix(q),
                                                    reference::to_matrix(k),
                                                    reference::to_matrix(v), mask, 0, n);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t c = 0; c < dk; ++c)
                CHECK(out.at(i, c) == doctest::Approx(ref[i][c]).epsilon(1e-9));
    }
}

TEST_CASE("chunked attention: blocks match per-block dense attention") {
    Rng rng(3);
    const std::size_t n = 8, s = 4, dk = 2;
    const Tensor q = random_tensor(rng, n, dk);
    const Tensor k = random_tensor(rng, n, dk);
    const Tensor v = random_tensor(rng, n, dk);
    std::vector<bool> mask(n, true);
    mask[6] = false;
    mask[7] = false;

    const Tensor out = chunked_self_attention(q, k, v, s, mask);
    for (std::size_t b = 0; b < n / s; ++b) {
        const auto ref = reference::dense_attention(reference::to_matrix(q),
                                                    reference::to_matrix(k),
                                                    reference::to_matrix(v), mask, b * s,
                                                    (b + 1) * s);
        for (std::size_t i = 0; i < s; ++i)
            for (std::size_t c = 0; c < dk; ++c)
                CHECK(out.at(b * s + i, c) == doctest::Approx(ref[i][c]).epsilon(1e-9));
    }
}

TEST_CASE("chunked attention: zero scores average the block values") {
    Rng rng(4);
    const std::size_t n = 8, s = 4, dk = 2;
    Tensor q({n, dk}), k({n, dk});
    const Tensor v = random_tensor(rng, n, dk);
    std::vector<bool> mask(n, true);
    const Tensor out = chunked_self_attention(q, k, v, s, mask);
    for (std::size_t b = 0; b < n / s; ++b) {
        for (std::size_t c = 0; c < dk; ++c) {
            double mean = 0.0;
            for (std::size_t j = 0; j < s; ++j) mean += v.at(b * s + j, c) / s;
            for (std::size_t i = 0; i < s; ++i)
                CHECK(out.at(b * s + i, c) == doctest::Approx(mean).epsilon(1e-12));
        }
    }
}

TEST_CASE("chunked attention: block independence and masking") {
    Rng rng(5);
    const std::size_t n = 12, s = 4, dk = 3;
    const Tensor q = random_tensor(rng, n, dk);
    const Tensor k = random_tensor(rng, n, dk);
    Tensor v = random_tensor(rng, n, dk);
    std::vector<bool> mask(n, true);

    const Tensor base = chunked_self_attention(q, k, v, s, mask);
    // Perturb everything inside block 2; blocks 0 and 1 must not move.
    Tensor q2 = q, k2 = k, v2 = v;
    for (std::size_t i = 8; i < 12; ++i)
        for (std::size_t c = 0; c < dk; ++c) {
            q2.at(i, c) += 5.0;
            k2.at(i, c) -= 3.0;
            v2.at(i, c) *= -2.0;
        }
    const Tensor bumped = chunked_self_attention(q2, k2, v2, s, mask);
    for (std::size_t i = 0; i < 8; ++i)
        for (std::size_t c = 0; c < dk; ++c)
            CHECK(bumped.at(i, c) == base.at(i, c));

    // A fully masked block outputs zeros.
    std::vector<bool> masked = mask;
    for (std::size_t i = 4; i < 8; ++i) masked[i] = false;
    const Tensor with_hole = chunked_self_attention(q, k, v, s, masked);
    for (std::size_t i = 4; i < 8; ++i)
        for (std::size_t c = 0; c < dk; ++c) CHECK(with_hole.at(i, c) == 0.0);

    CHECK_THROWS_AS(chunked_self_attention(q, k, v, 5, mask), SpanNotDivisor);
}

TEST_CASE("chunked attention: rows over unmasked keys sum to one") {
    Rng rng(6);
    const std::size_t n = 16, s = 4, dk = 4;
    const Tensor q = random_tensor(rng, n, dk);
    const Tensor k = random_tensor(rng, n, dk);
    const Tensor v = random_tensor(rng, n, dk);
    std::vector<bool> mask(n, false);
    for (std::size_t i = 0; i < 10; ++i) mask[i] = true;

    Tensor probs;
    chunked_self_attention(q, k, v, s, mask, nullptr, &probs);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t block = i / s;
        bool any = false;
        for (std::size_t j = 0; j < s; ++j) any = any || mask[block * s + j];
        double sum = 0.0;
        for (std::size_t j = 0; j < s; ++j) {
            CHECK(probs.at(i, j) >= 0.0);
            sum += probs.at(i, j);
        }
        if (any)
            CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
        else
            CHECK(sum == 0.0);
    }
}

TEST_CASE("attention cost counter: M * S^2 * dk score MACs per head") {
    Rng rng(7);
    const std::size_t n = 64, dk = 4;
    const Tensor q = random_tensor(rng, n, dk);
    const Tensor k = random_tensor(rng, n, dk);
    const Tensor v = random_tensor(rng, n, dk);
    const std::vector<bool> mask(n, true);

    for (std::size_t s : {8u, 16u, 32u, 64u}) {
        AttentionStats stats;
        chunked_self_attention(q, k, v, s, mask, &stats);
        CHECK(stats.score_macs == (n / s) * s * s * dk);
    }
    // Full attention: N^2 dk; the S = N/8 setting costs 8x less.
    AttentionStats full, chunked;
    chunked_self_attention(q, k, v, n, mask, &full);
    chunked_self_attention(q, k, v, n / 8, mask, &chunked);
    CHECK(full.score_macs == n * n * dk);
    CHECK(full.score_macs == 8 * chunked.score_macs);

    // Model level: L layers x H heads x M blocks x S^2 x dk.
    ModelConfig config = tiny_config();
    config.num_layers = 2;
    Model model(config, 3);
    TokenSequence seq;
    seq.ids.assign(config.seq_len, 1);
    seq.mask.assign(config.seq_len, true);
    AttentionStats stats;
    model.forward_one(seq, nullptr, &stats);
    const std::size_t expected = config.num_layers * config.num_heads *
                                 config.num_spans() * config.span * config.span *
                                 config.head_dim();
    CHECK(stats.score_macs == expected);
}

TEST_CASE("encoder layer: shape, residual path, finiteness") {
    ModelConfig config = tiny_config();
    Model model(config, 99);

    SUBCASE("output shape equals input shape") {
        Rng rng(8);
        const Tensor x = random_tensor(rng, config.seq_len, config.embed_dim);
        const std::vector<bool> mask(config.seq_len, true);
        const Tensor y = model.encoder_layer_forward(x, 0, mask);
        CHECK(y.shape() == x.shape());
    }

    SUBCASE("zeroed attention and ffn weights reduce to the residual path") {
        LayerParams& lp = model.params().layers[0];
        for (Tensor* t : {&lp.wq, &lp.bq, &lp.wk, &lp.bk, &lp.wv, &lp.bv, &lp.wo, &lp.bo,
                          &lp.ffn_w1, &lp.ffn_b1, &lp.ffn_w2, &lp.ffn_b2})
            t->fill(0.0);
        // Rows prepared with zero mean and variance 1 - eps are fixed points
        // of the layer norm.
        Rng rng(9);
        Tensor x = random_tensor(rng, config.seq_len, config.embed_dim);
        const std::size_t d = config.embed_dim;
        for (std::size_t i = 0; i < config.seq_len; ++i) {
            double mean = 0.0;
            for (std::size_t j = 0; j < d; ++j) mean += x.at(i, j) / d;
            double var = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
                x.at(i, j) -= mean;
                var += x.at(i, j) * x.at(i, j) / d;
            }
            const double target = std::sqrt((1.0 - 1e-5) / var);
            for (std::size_t j = 0; j < d; ++j) x.at(i, j) *= target;
        }
        const std::vector<bool> mask(config.seq_len, true);
        const Tensor y = model.encoder_layer_forward(x, 0, mask);
        for (std::size_t i = 0; i < y.size(); ++i)
            CHECK(y[i] == doctest::Approx(x[i]).epsilon(1e-7));
    }

    SUBCASE("finite outputs across random configurations") {
        Rng rng(10);
        for (int trial = 0; trial < 100; ++trial) {
            ModelConfig c;
            c.vocab_size = 5 + rng.uniform_u64(20);
            c.embed_dim = 2 * (1 + rng.uniform_u64(4));        // 2..8 even
            c.num_heads = c.embed_dim % 4 == 0 && rng.uniform() < 0.5 ? 2 : 1;
            const std::size_t blocks = 1 + rng.uniform_u64(3);
            c.span = 1 + rng.uniform_u64(6);
            c.seq_len = c.span * blocks;
            c.ffn_dim = 1 + rng.uniform_u64(12);
            c.num_layers = 1 + rng.uniform_u64(2);
            c.classifier_hidden = 4;
            c.num_classes = 2 + rng.uniform_u64(3);
            Model m(c, rng.next_u64());

            TokenSequence seq;
            const std::size_t content = rng.uniform_u64(c.seq_len + 1);
            seq.ids.assign(c.seq_len, 0);
            for (std::size_t i = 0; i < content; ++i)
                seq.ids[i] = static_cast<std::uint32_t>(rng.uniform_u64(c.vocab_size));
            seq.mask.assign(c.seq_len, false);
            for (std::size_t i = 0; i < content; ++i) seq.mask[i] = true;

            const Tensor logits = m.forward_one(seq);
            CHECK(logits.all_finite());
        }
    }
}

TEST_CASE("forward: batch shape, determinism, position sensitivity") {
    ModelConfig config = tiny_config();
    Model model(config, 42);

    const TokenSequence a = make_seq({2, 3, 4, 5, 0, 0, 0, 0}, 4);
    const TokenSequence b = make_seq({3, 2, 4, 5, 0, 0, 0, 0}, 4);

    const Tensor batch = model.forward({a, a});
    CHECK(batch.shape() == std::vector<std::size_t>{2, 2});
    for (std::size_t c = 0; c < 2; ++c) CHECK(batch.at(0, c) == batch.at(1, c));

    // Swapping two real tokens must move the logits (positions differ).
    const Tensor la = model.forward_one(a);
    const Tensor lb = model.forward_one(b);
    double diff = 0.0;
    for (std::size_t c = 0; c < 2; ++c) diff = std::max(diff, std::abs(la[c] - lb[c]));
    CHECK(diff > 1e-6);
}

TEST_CASE("forward: trailing padding never changes logits") {
    ModelConfig small = tiny_config();
    small.seq_len = 8;
    small.span = 4;
    Model model(small, 77);

    ModelConfig wide = small;
    wide.seq_len = 16;
    Model extended(wide, model.params());

    TokenSequence shorter = make_seq({2, 3, 4, 5, 6, 0, 0, 0}, 5);
    TokenSequence longer = make_seq({2, 3, 4, 5, 6, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0}, 5);

    const Tensor l1 = model.forward_one(shorter);
    const Tensor l2 = extended.forward_one(longer);
    for (std::size_t c = 0; c < 2; ++c)
        CHECK(l1[c] == doctest::Approx(l2[c]).epsilon(1e-12));

    // Fully padded input pools to the zero vector: logits = classifier(0).
    const TokenSequence empty = make_seq({0, 0, 0, 0, 0, 0, 0, 0}, 0);
    const Tensor le = model.forward_one(empty);
    CHECK(le.all_finite());
}

TEST_CASE("parameter counting") {
    SUBCASE("hand-counted L=0 example") {
        ModelConfig c;
        c.vocab_size = 10;
        c.embed_dim = 2;
        c.num_layers = 0;
        c.num_heads = 1;
        c.span = 4;
        c.seq_len = 4;
        c.ffn_dim = 8;
        c.classifier_hidden = 64;
        c.num_classes = 2;
        // embedding 20 + classifier (2*64 + 64) + (64*2 + 2) = 342
        CHECK(count_parameters(c) == 342);
    }
    SUBCASE("doubling V adds exactly V*d") {
        ModelConfig c = tiny_config();
        const std::size_t base = count_parameters(c);
        ModelConfig doubled = c;
        doubled.vocab_size *= 2;
        CHECK(count_parameters(doubled) == base + c.vocab_size * c.embed_dim);
    }
    SUBCASE("closed form matches the reflective tensor-size sum") {
        ModelConfig c = tiny_config();
        c.num_layers = 2;
        Model model(c, 1);
        CHECK(count_parameters(c) == model.params().total_parameters());
    }
}

TEST_CASE("checkpoint round-trip") {
    ModelConfig config = tiny_config();
    Model model(config, 2024);
    test_support::TempDir dir;
    const auto path = dir.path() / "model.bin";
    model.save(path);
    const Model loaded = Model::load(path);

    CHECK(loaded.config().embed_dim == config.embed_dim);
    CHECK(loaded.config().span == config.span);

    // Values survive as float32; a second save is byte-identical.
    const auto path2 = dir.path() / "model2.bin";
    loaded.save(path2);
    CHECK(test_support::slurp(path) == test_support::slurp(path2));

    bool all_match = true;
    std::vector<const Tensor*> orig, back;
    model.params().for_each_tensor([&](const std::string&, const Tensor& t) { orig.push_back(&t); });
    loaded.params().for_each_tensor([&](const std::string&, const Tensor& t) { back.push_back(&t); });
    REQUIRE(orig.size() == back.size());
    for (std::size_t t = 0; t < orig.size(); ++t)
        for (std::size_t i = 0; i < orig[t]->size(); ++i)
            if (static_cast<double>(static_cast<float>((*orig[t])[i])) != (*back[t])[i])
                all_match = false;
    CHECK(all_match);
}

TEST_CASE("gradient check on the tiny configuration") {
    Model model(tiny_config(), 1337);
    const std::vector<TokenSequence> batch = {make_seq({2, 5, 7, 11, 3, 0, 0, 0}, 5),
                                              make_seq({4, 6, 8, 10, 12, 14, 16, 18}, 8)};
    const std::vector<int> labels = {0, 1};
    const auto result = reference::gradient_check(model, batch, labels, 1e-4);
    CHECK_MESSAGE(result.passed, "worst tensor ", result.worst_tensor, " rel ",
                  result.worst_rel);
}
