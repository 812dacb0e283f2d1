#include "nebula/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>

#include "nebula/errors.hpp"

namespace nebula {

namespace {

double elapsed_seconds(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

void zero_params(ModelParams& p) {
    p.for_each_tensor([](const std::string&, Tensor& t) { t.fill(0.0); });
}

}  // namespace

void TrainConfig::validate() const {
    if (lr <= 0.0) throw UserError("learning rate must be positive");
    if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0)
        throw UserError("betas must be in [0, 1)");
    if (eps <= 0.0) throw UserError("eps must be positive");
    if (weight_decay < 0.0) throw UserError("weight_decay must be non-negative");
    if (batch_size == 0) throw UserError("batch_size must be >= 1");
    if (budget_seconds < 0.0) throw UserError("budget_seconds must be non-negative");
}

OptimizerState OptimizerState::init(const ModelParams& params) {
    OptimizerState state;
    state.m = ModelParams::zeros_like(params);
    state.v = ModelParams::zeros_like(params);
    state.step = 0;
    return state;
}

double compute_loss(const Tensor& logits, const std::vector<int>& labels) {
    Tensor unused;
    return loss_and_grad(logits, labels, unused);
}

double loss_and_grad(const Tensor& logits, const std::vector<int>& labels, Tensor& dlogits) {
    const std::size_t batch = logits.dim(0);
    const std::size_t classes = logits.dim(1);
    if (labels.size() != batch) throw LengthMismatch("labels length != batch size");
    dlogits = Tensor({batch, classes});
    double total = 0.0;
    for (std::size_t i = 0; i < batch; ++i) {
        const int label = labels[i];
        if (label < 0 || static_cast<std::size_t>(label) >= classes)
            throw LabelOutOfRange("label " + std::to_string(label) + " outside [0, " +
                                  std::to_string(classes) + ")");
        const double* row = logits.data() + i * classes;
        double max_logit = row[0];
        for (std::size_t c = 1; c < classes; ++c) max_logit = std::max(max_logit, row[c]);
        double denom = 0.0;
        for (std::size_t c = 0; c < classes; ++c) denom += std::exp(row[c] - max_logit);
        const double log_denom = std::log(denom);
        total += -(row[static_cast<std::size_t>(label)] - max_logit - log_denom);
        double* drow = dlogits.data() + i * classes;
        for (std::size_t c = 0; c < classes; ++c) {
            const double p = std::exp(row[c] - max_logit) / denom;
            drow[c] = (p - (static_cast<int>(c) == label ? 1.0 : 0.0)) / batch;
        }
    }
    return total / batch;
}

void adamw_step(ModelParams& params, const ModelParams& grads, OptimizerState& state,
                const TrainConfig& cfg) {
    state.step += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));

    // Walk the four structures in lockstep via the canonical enumeration.
    std::vector<Tensor*> p_list, m_list, v_list;
    std::vector<const Tensor*> g_list;
    params.for_each_tensor([&](const std::string&, Tensor& t) { p_list.push_back(&t); });
    grads.for_each_tensor([&](const std::string&, const Tensor& t) { g_list.push_back(&t); });
    state.m.for_each_tensor([&](const std::string&, Tensor& t) { m_list.push_back(&t); });
    state.v.for_each_tensor([&](const std::string&, Tensor& t) { v_list.push_back(&t); });
    if (p_list.size() != g_list.size() || p_list.size() != m_list.size() ||
        p_list.size() != v_list.size())
        throw ShapeMismatch("optimizer state does not mirror parameters");

    for (std::size_t t = 0; t < p_list.size(); ++t) {
        Tensor& theta = *p_list[t];
        const Tensor& g = *g_list[t];
        Tensor& m = *m_list[t];
        Tensor& v = *v_list[t];
        if (!theta.same_shape(g) || !theta.same_shape(m) || !theta.same_shape(v))
            throw ShapeMismatch("gradient/state shape mismatch");
        for (std::size_t i = 0; i < theta.size(); ++i) {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            theta[i] -= cfg.lr * (mhat / (std::sqrt(vhat) + cfg.eps) +
                                  cfg.weight_decay * theta[i]);
        }
    }
}

std::string TrainResult::history_csv() const {
    std::ostringstream oss;
    oss << "batch_index,wall_seconds,loss\n";
    oss.precision(9);
    for (const BatchStat& s : history)
        oss << s.batch_index << ',' << s.wall_seconds << ',' << s.loss << '\n';
    return oss.str();
}

Trainer::Trainer(Model& model, TrainConfig cfg)
    : model_(model),
      cfg_(cfg),
      state_(OptimizerState::init(model.params())),
      shuffle_rng_(cfg.seed),
      dropout_rng_(cfg.seed ^ 0x5bd1e995u) {
    cfg_.validate();
}

TrainResult Trainer::run(const Dataset& data) {
    return run_impl(data, cfg_.budget_seconds, cfg_.max_epochs);
}

TrainResult Trainer::run_epochs(const Dataset& data, std::size_t epochs) {
    return run_impl(data, 0.0, epochs);
}

TrainResult Trainer::run_impl(const Dataset& data, double budget_seconds,
                              std::size_t max_epochs) {
    if (data.size() == 0) throw EmptyDataset();
    if (data.labels.size() != data.sequences.size())
        throw LengthMismatch("dataset labels/sequences length mismatch");
    const bool single_pass = budget_seconds <= 0.0 && max_epochs == 0;

    TrainResult result;
    ModelParams grads = ModelParams::zeros_like(model_.params());
    Rng* dropout = model_.config().dropout > 0.0 ? &dropout_rng_ : nullptr;

    std::vector<std::size_t> order(data.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    const auto start = std::chrono::steady_clock::now();
    bool stop = false;
    while (!stop) {
        shuffle_rng_.shuffle(order);
        for (std::size_t begin = 0; begin < order.size() && !stop; begin += cfg_.batch_size) {
            const std::size_t end = std::min(begin + cfg_.batch_size, order.size());
            const std::size_t batch = end - begin;

            zero_params(grads);
            std::vector<ForwardCache> caches(batch);
            Tensor logits({batch, model_.config().num_classes});
            std::vector<int> labels(batch);
            for (std::size_t s = 0; s < batch; ++s) {
                const std::size_t idx = order[begin + s];
                labels[s] = data.labels[idx];
                Tensor row = model_.forward_one(data.sequences[idx], &caches[s], nullptr,
                                                nullptr, dropout);
                std::copy(row.data(), row.data() + row.size(),
                          logits.data() + s * model_.config().num_classes);
            }
            Tensor dlogits;
            const double loss = loss_and_grad(logits, labels, dlogits);
            Tensor drow({model_.config().num_classes});
            for (std::size_t s = 0; s < batch; ++s) {
                std::copy(dlogits.data() + s * drow.size(),
                          dlogits.data() + (s + 1) * drow.size(), drow.data());
                model_.backward_one(caches[s], drow, grads);
            }
            adamw_step(model_.params(), grads, state_, cfg_);

            result.history.push_back(
                BatchStat{next_batch_index_++, elapsed_seconds(start), loss});
            ++result.batches_seen;
            if (budget_seconds > 0.0 && elapsed_seconds(start) >= budget_seconds) stop = true;
        }
        if (!stop) {
            ++result.epochs_completed;
            if (max_epochs > 0 && result.epochs_completed >= max_epochs) stop = true;
            if (single_pass) stop = true;
        }
    }
    return result;
}

TrainResult train(Model& model, const Dataset& data, const TrainConfig& cfg) {
    Trainer trainer(model, cfg);
    return trainer.run(data);
}

std::vector<std::vector<std::size_t>> stratified_folds(const std::vector<int>& labels,
                                                       std::size_t k, std::uint64_t seed) {
    if (k < 2) throw TooFewSamples("k must be >= 2 for cross-validation");
    if (labels.size() < k)
        throw TooFewSamples("dataset size " + std::to_string(labels.size()) +
                            " is smaller than k = " + std::to_string(k));
    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);

    Rng rng(seed);
    std::vector<std::vector<std::size_t>> folds(k);
    // One cursor across classes keeps fold sizes within a single sample of
    // each other while each class stays dealt round-robin.
    std::size_t cursor = 0;
    for (auto& [label, indices] : by_class) {
        rng.shuffle(indices);
        for (std::size_t idx : indices) folds[cursor++ % k].push_back(idx);
    }
    for (auto& fold : folds) std::sort(fold.begin(), fold.end());
    return folds;
}

std::vector<std::vector<double>> predict_probabilities(const Model& model,
                                                       const std::vector<TokenSequence>& seqs) {
    const std::size_t classes = model.config().num_classes;
    std::vector<std::vector<double>> probs(seqs.size(), std::vector<double>(classes, 0.0));
    for (std::size_t i = 0; i < seqs.size(); ++i) {
        const Tensor logits = model.forward_one(seqs[i]);
        double max_logit = logits[0];
        for (std::size_t c = 1; c < classes; ++c) max_logit = std::max(max_logit, logits[c]);
        double denom = 0.0;
        for (std::size_t c = 0; c < classes; ++c) denom += std::exp(logits[c] - max_logit);
        for (std::size_t c = 0; c < classes; ++c)
            probs[i][c] = std::exp(logits[c] - max_logit) / denom;
    }
    return probs;
}

EvalReport evaluate_model(const Model& model, const Dataset& data, double target_fpr) {
    const auto probs = predict_probabilities(model, data.sequences);
    const int classes = static_cast<int>(model.config().num_classes);
    if (classes == 2) {
        std::vector<double> scores(probs.size());
        for (std::size_t i = 0; i < probs.size(); ++i) scores[i] = probs[i][1];
        return evaluate_binary(scores, data.labels, target_fpr);
    }
    return evaluate_multiclass(probs, data.labels, classes, target_fpr);
}

CvResult cross_validate(const std::vector<std::string>& texts, const std::vector<int>& labels,
                        TokenizerKind tokenizer, std::size_t vocab_budget,
                        ModelConfig model_config, const TrainConfig& cfg, double target_fpr) {
    if (texts.size() != labels.size()) throw LengthMismatch("texts/labels length mismatch");
    const auto folds = stratified_folds(labels, cfg.folds, cfg.seed);

    CvResult result;
    for (std::size_t f = 0; f < folds.size(); ++f) {
        std::vector<bool> in_val(texts.size(), false);
        for (std::size_t idx : folds[f]) in_val[idx] = true;

        std::vector<std::string> train_texts;
        std::vector<int> train_labels;
        std::vector<std::string> val_texts;
        std::vector<int> val_labels;
        for (std::size_t i = 0; i < texts.size(); ++i) {
            if (in_val[i]) {
                val_texts.push_back(texts[i]);
                val_labels.push_back(labels[i]);
            } else {
                train_texts.push_back(texts[i]);
                train_labels.push_back(labels[i]);
            }
        }

        // Tokenizer artifacts and vocabulary from the training portion only.
        BpeModel bpe;
        if (tokenizer == TokenizerKind::Bpe) bpe = BpeModel::train(train_texts, vocab_budget);
        auto tokenize = [&](const std::string& text) {
            switch (tokenizer) {
                case TokenizerKind::Whitespace: return tokenize_whitespace(text);
                case TokenizerKind::Wordpunct: return tokenize_wordpunct(text);
                case TokenizerKind::Bpe: return bpe.tokenize(text);
            }
            return tokenize_whitespace(text);
        };
        std::vector<std::vector<std::string>> train_tokens;
        train_tokens.reserve(train_texts.size());
        for (const std::string& t : train_texts) train_tokens.push_back(tokenize(t));
        const Vocabulary vocab = Vocabulary::build(train_tokens, vocab_budget);

        Dataset train_data;
        for (std::size_t i = 0; i < train_tokens.size(); ++i)
            train_data.sequences.push_back(encode(train_tokens[i], vocab, model_config.seq_len));
        train_data.labels = train_labels;

        Dataset val_data;
        for (const std::string& t : val_texts)
            val_data.sequences.push_back(encode(tokenize(t), vocab, model_config.seq_len));
        val_data.labels = val_labels;

        ModelConfig fold_config = model_config;
        fold_config.vocab_size = vocab.size();
        Model model(fold_config, cfg.seed + 0x9e3779b9ULL * (f + 1));
        Trainer trainer(model, cfg);
        const TrainResult tr = trainer.run(train_data);

        FoldResult fold;
        fold.fold_index = f;
        fold.report = evaluate_model(model, val_data, target_fpr);
        fold.batches_seen = tr.batches_seen;
        fold.vocabulary = vocab;
        fold.params = model.params();
        result.folds.push_back(std::move(fold));
    }

    EvalReport& mean = result.mean;
    mean.target_fpr = target_fpr;
    const double k = static_cast<double>(result.folds.size());
    for (const FoldResult& fold : result.folds) {
        mean.tpr_at_target += fold.report.tpr_at_target / k;
        mean.auc += fold.report.auc / k;
        mean.f1 += fold.report.f1 / k;
        mean.macro_f1 += fold.report.macro_f1 / k;
        mean.accuracy += fold.report.accuracy / k;
        for (const auto& [cls, f1] : fold.report.per_class_f1) mean.per_class_f1[cls] += f1 / k;
    }
    return result;
}

}  // namespace nebula
