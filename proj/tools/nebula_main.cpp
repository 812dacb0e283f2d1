// nebula: behavior-report classification pipeline driver.
//
// Subcommands: clean, vocab, train, eval, explain, synth, ablate.
// Exit codes: 0 success, 1 user/data error, 2 internal error.

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "nebula/errors.hpp"
#include "nebula/explain.hpp"
#include "nebula/ingest.hpp"
#include "nebula/metrics.hpp"
#include "nebula/model.hpp"
#include "nebula/normalize.hpp"
#include "nebula/pipeline.hpp"
#include "nebula/synth.hpp"
#include "nebula/tokenize.hpp"
#include "nebula/train.hpp"

namespace fs = std::filesystem;
using nebula::ojson;

namespace {

struct CommonArgs {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out_dir;
};

nebula::PipelineConfig resolve_config(const CommonArgs& common) {
    nebula::PipelineConfig config;
    if (!common.config_path.empty())
        config = nebula::PipelineConfig::from_json_file(common.config_path);
    if (common.seed) config.train.seed = *common.seed;
    if (!common.out_dir.empty()) config.out_dir = common.out_dir;
    return config;
}

void add_common(CLI::App* cmd, CommonArgs& common) {
    cmd->add_option("--config", common.config_path, "pipeline config JSON");
    cmd->add_option("--seed", common.seed, "seed override");
    cmd->add_option("--out", common.out_dir, "output directory");
}

ojson report_to_ojson(const nebula::EvalReport& report) {
    return ojson::parse(report.to_json());
}

struct LoadedArtifacts {
    std::vector<nebula::CleanedRecord> records;
    nebula::Vocabulary vocab;
    nebula::TokenizerKind kind = nebula::TokenizerKind::Whitespace;
    nebula::BpeModel bpe;
};

LoadedArtifacts load_artifacts(const std::string& input, const std::string& vocab_path,
                               const std::string& bpe_path) {
    LoadedArtifacts art;
    art.records = nebula::read_cleaned_jsonl(input);
    auto loaded = nebula::load_vocabulary(vocab_path);
    art.vocab = std::move(loaded.vocab);
    art.kind = nebula::tokenizer_kind_from_name(loaded.tokenizer_name);
    if (art.kind == nebula::TokenizerKind::Bpe) {
        fs::path merges = bpe_path.empty()
                              ? fs::path(vocab_path).parent_path() / "bpe_merges.txt"
                              : fs::path(bpe_path);
        art.bpe = nebula::BpeModel::load(merges);
    }
    return art;
}

int run_clean(const CommonArgs& common, const std::string& manifest, std::string out_file,
              std::string profile, bool no_filter, bool strict,
              const std::string& norm_config_path) {
    nebula::PipelineConfig config = resolve_config(common);
    if (!profile.empty()) config.filter_profile = profile;
    if (no_filter) config.filter_enabled = false;

    const nebula::FieldFilter filter = config.filter_enabled
                                           ? nebula::load_filter_profile(config.filter_profile)
                                           : nebula::FieldFilter::identity();
    const nebula::NormalizerConfig norm =
        norm_config_path.empty() ? nebula::NormalizerConfig::defaults()
                                 : nebula::NormalizerConfig::from_json_file(norm_config_path);

    nebula::CleanStats stats;
    const auto records =
        nebula::clean_dataset(manifest, filter, norm, strict, &std::cerr, &stats);
    if (out_file.empty()) {
        fs::create_directories(config.out_dir);
        out_file = (fs::path(config.out_dir) / "cleaned.jsonl").string();
    }
    nebula::write_cleaned_jsonl(out_file, records);
    std::cout << "cleaned " << stats.reports << " reports (" << stats.records << " records)";
    if (stats.skipped > 0) std::cout << ", skipped " << stats.skipped;
    std::cout << " -> " << out_file << "\n";
    return 0;
}

int run_vocab(const CommonArgs& common, const std::string& input, std::string tokenizer,
              std::optional<std::size_t> vocab_size) {
    nebula::PipelineConfig config = resolve_config(common);
    if (!tokenizer.empty()) config.tokenizer = tokenizer;
    if (vocab_size) config.vocab_size = *vocab_size;
    config.validate();

    const auto records = nebula::read_cleaned_jsonl(input);
    std::vector<std::string> texts;
    texts.reserve(records.size());
    for (const auto& r : records) texts.push_back(r.text);

    const auto kind = nebula::tokenizer_kind_from_name(config.tokenizer);
    fs::create_directories(config.out_dir);
    nebula::BpeModel bpe;
    if (kind == nebula::TokenizerKind::Bpe) {
        bpe = nebula::BpeModel::train(texts, config.vocab_size);
        bpe.save(fs::path(config.out_dir) / "bpe_merges.txt");
    }
    const auto tokens = nebula::tokenize_corpus(
        texts, kind, kind == nebula::TokenizerKind::Bpe ? &bpe : nullptr);
    const auto vocab = nebula::Vocabulary::build(tokens, config.vocab_size);
    const auto vocab_path = fs::path(config.out_dir) / "vocab.json";
    vocab.save(vocab_path, config.tokenizer);
    std::cout << "vocabulary of " << vocab.size() << " tokens -> " << vocab_path.string()
              << "\n";
    return 0;
}

int run_train(const CommonArgs& common, const std::string& input, const std::string& vocab_path,
              const std::string& bpe_path, std::optional<std::size_t> folds,
              std::optional<double> budget, std::optional<std::size_t> epochs,
              std::optional<std::size_t> seq_len, std::optional<std::size_t> embed_dim,
              std::optional<std::size_t> layers, std::optional<std::size_t> heads,
              std::optional<std::size_t> span, std::optional<std::size_t> batch_size,
              std::optional<double> lr, std::optional<std::size_t> ffn_dim) {
    nebula::PipelineConfig config = resolve_config(common);
    if (folds) config.train.folds = *folds;
    if (budget) config.train.budget_seconds = *budget;
    if (epochs) config.train.max_epochs = *epochs;
    if (seq_len) config.seq_len = *seq_len;
    if (embed_dim) config.model.embed_dim = *embed_dim;
    if (layers) config.model.num_layers = *layers;
    if (heads) config.model.num_heads = *heads;
    if (span) config.model.span = *span;
    if (batch_size) config.train.batch_size = *batch_size;
    if (lr) config.train.lr = *lr;
    if (ffn_dim) config.model.ffn_dim = *ffn_dim;
    if (config.model.span > config.seq_len) config.model.span = config.seq_len;
    config.validate();

    auto art = load_artifacts(input, vocab_path, bpe_path);
    const nebula::BpeModel* bpe =
        art.kind == nebula::TokenizerKind::Bpe ? &art.bpe : nullptr;

    nebula::ModelConfig model_config = config.model;
    model_config.vocab_size = art.vocab.size();
    model_config.seq_len = config.seq_len;
    model_config.num_classes =
        std::max(2, nebula::max_label(art.records) + 1);

    fs::create_directories(config.out_dir);

    if (config.train.folds >= 2) {
        std::vector<std::string> texts;
        std::vector<int> labels;
        for (const auto& r : art.records) {
            texts.push_back(r.text);
            labels.push_back(r.label);
        }
        const auto cv = nebula::cross_validate(texts, labels, art.kind, config.vocab_size,
                                               model_config, config.train, config.target_fpr);
        ojson folds_json;
        folds_json["folds"] = ojson::array();
        std::size_t total_batches = 0;
        for (const auto& fold : cv.folds) {
            ojson f = report_to_ojson(fold.report);
            f["fold"] = fold.fold_index;
            f["batches_seen"] = fold.batches_seen;
            total_batches += fold.batches_seen;
            folds_json["folds"].push_back(std::move(f));
        }
        folds_json["total_batches"] = total_batches;
        folds_json["mean"] = report_to_ojson(cv.mean);
        nebula::write_file(fs::path(config.out_dir) / "fold_metrics.json",
                           folds_json.dump(2) + "\n");
        std::cout << "cross-validation mean F1 " << cv.mean.f1 << " over " << cv.folds.size()
                  << " folds\n";
    }

    const auto dataset =
        nebula::encode_dataset(art.records, art.vocab, art.kind, bpe, config.seq_len);
    nebula::Model model(model_config, config.train.seed);
    nebula::Trainer trainer(model, config.train);
    const auto result = trainer.run(dataset);

    const auto model_path = fs::path(config.out_dir) / "model.bin";
    model.save(model_path);
    nebula::write_file(fs::path(config.out_dir) / "history.csv", result.history_csv());

    ojson summary;
    summary["batches_seen"] = result.batches_seen;
    summary["epochs_completed"] = result.epochs_completed;
    summary["parameters"] = nebula::count_parameters(model_config);
    summary["num_classes"] = model_config.num_classes;
    summary["vocab_size"] = model_config.vocab_size;
    if (!result.history.empty()) summary["final_loss"] = result.history.back().loss;
    nebula::write_file(fs::path(config.out_dir) / "train_summary.json",
                       summary.dump(2) + "\n");
    std::cout << "trained " << result.batches_seen << " batches -> " << model_path.string()
              << "\n";
    return 0;
}

int run_eval(const CommonArgs& common, const std::string& input, const std::string& vocab_path,
             const std::string& bpe_path, const std::string& model_path,
             std::optional<double> target_fpr) {
    nebula::PipelineConfig config = resolve_config(common);
    if (target_fpr) config.target_fpr = *target_fpr;
    if (config.target_fpr < 0.0 || config.target_fpr > 1.0)
        throw nebula::UserError("target_fpr must be in [0, 1]");

    auto art = load_artifacts(input, vocab_path, bpe_path);
    const nebula::BpeModel* bpe =
        art.kind == nebula::TokenizerKind::Bpe ? &art.bpe : nullptr;
    const nebula::Model model = nebula::Model::load(model_path);
    const auto dataset = nebula::encode_dataset(art.records, art.vocab, art.kind, bpe,
                                                model.config().seq_len);

    const auto report = nebula::evaluate_model(model, dataset, config.target_fpr);
    fs::create_directories(config.out_dir);
    nebula::write_file(fs::path(config.out_dir) / "eval.json", report.to_json());

    if (model.config().num_classes == 2) {
        const auto probs = nebula::predict_probabilities(model, dataset.sequences);
        std::vector<nebula::ScoredSample> samples(probs.size());
        for (std::size_t i = 0; i < probs.size(); ++i)
            samples[i] = nebula::ScoredSample{probs[i][1], dataset.labels[i] == 1 ? 1 : 0};
        nebula::write_file(fs::path(config.out_dir) / "roc.csv",
                           nebula::roc_curve(samples).to_csv());
    }
    std::cout << "eval: auc " << report.auc << ", f1 " << report.f1 << ", tpr@"
              << report.target_fpr << " " << report.tpr_at_target << "\n";
    return 0;
}

int run_explain(const CommonArgs& common, const std::string& input,
                const std::string& vocab_path, const std::string& bpe_path,
                const std::string& model_path, const std::string& sample,
                std::size_t steps, std::size_t top_k, bool attention) {
    nebula::PipelineConfig config = resolve_config(common);
    auto art = load_artifacts(input, vocab_path, bpe_path);
    const nebula::BpeModel* bpe =
        art.kind == nebula::TokenizerKind::Bpe ? &art.bpe : nullptr;
    const nebula::Model model = nebula::Model::load(model_path);

    std::size_t index = art.records.size();
    for (std::size_t i = 0; i < art.records.size(); ++i)
        if (art.records[i].id == sample) index = i;
    if (index == art.records.size()) {
        try {
            index = std::stoul(sample);
        } catch (const std::exception&) {
            throw nebula::UserError("sample '" + sample + "' not found");
        }
        if (index >= art.records.size())
            throw nebula::UserError("sample index " + sample + " out of range");
    }

    const auto dataset = nebula::encode_dataset({art.records[index]}, art.vocab, art.kind, bpe,
                                                model.config().seq_len);
    const nebula::TokenSequence& seq = dataset.sequences[0];
    const auto attr = nebula::integrated_gradients(model, seq, steps);

    fs::create_directories(config.out_dir);
    const std::string stem = "attribution_" + std::to_string(index);
    nebula::write_file(fs::path(config.out_dir) / (stem + ".json"),
                       nebula::attribution_to_json(attr, art.vocab, seq));
    nebula::write_file(fs::path(config.out_dir) / (stem + ".csv"),
                       nebula::attribution_to_csv(attr, art.vocab, seq));
    if (attention) {
        const auto record = nebula::attention_activations(model, seq);
        nebula::write_file(fs::path(config.out_dir) /
                               ("attention_" + std::to_string(index) + ".json"),
                           nebula::attention_record_to_json(record));
    }

    const auto top = nebula::top_attributed_tokens(attr, art.vocab, seq, top_k);
    std::cout << "sample " << art.records[index].id << " target class " << attr.target_class
              << " score " << attr.input_score << "\n";
    for (const auto& t : top)
        std::cout << "  " << t.token << " @" << t.position << " " << t.score << "\n";
    return 0;
}

int run_synth(const CommonArgs& common, std::size_t count, std::size_t classes,
              std::uint64_t seed) {
    nebula::PipelineConfig config = resolve_config(common);
    nebula::SynthOptions options;
    options.count = count;
    options.num_classes = classes;
    options.seed = seed;
    const auto manifest = nebula::write_corpus(config.out_dir, options);
    std::cout << manifest.string() << "\n";
    return 0;
}

// One-axis-at-a-time sweep harness; each cell runs clean -> vocab -> train ->
// eval end to end and writes <out>/<axis>_<value>/eval.json.
int run_ablate(const CommonArgs& common, const std::string& manifest,
               std::vector<std::size_t> vocab_sizes, std::vector<std::size_t> seq_lens,
               std::vector<std::string> tokenizers, bool sweep_filters,
               std::optional<double> budget, std::optional<std::size_t> epochs) {
    nebula::PipelineConfig base = resolve_config(common);
    if (budget) base.train.budget_seconds = *budget;
    if (epochs) base.train.max_epochs = *epochs;
    base.validate();

    struct Cell {
        std::string name;
        nebula::PipelineConfig config;
    };
    std::vector<Cell> cells;
    for (std::size_t v : vocab_sizes) {
        Cell cell{"vocab_" + std::to_string(v), base};
        cell.config.vocab_size = v;
        cells.push_back(std::move(cell));
    }
    for (std::size_t n : seq_lens) {
        Cell cell{"seqlen_" + std::to_string(n), base};
        cell.config.seq_len = n;
        if (cell.config.model.span > n) cell.config.model.span = n;
        cells.push_back(std::move(cell));
    }
    for (const std::string& t : tokenizers) {
        Cell cell{"tokenizer_" + t, base};
        cell.config.tokenizer = t;
        cells.push_back(std::move(cell));
    }
    if (sweep_filters) {
        Cell on{"filter_on", base};
        on.config.filter_enabled = true;
        cells.push_back(std::move(on));
        Cell off{"filter_off", base};
        off.config.filter_enabled = false;
        cells.push_back(std::move(off));
    }

    const nebula::NormalizerConfig norm = nebula::NormalizerConfig::defaults();
    for (const Cell& cell : cells) {
        const nebula::PipelineConfig& cfg = cell.config;
        cfg.validate();
        const nebula::FieldFilter filter =
            cfg.filter_enabled ? nebula::load_filter_profile(cfg.filter_profile)
                               : nebula::FieldFilter::identity();
        const auto records = nebula::clean_dataset(manifest, filter, norm, true, &std::cerr);

        std::vector<std::string> texts;
        for (const auto& r : records) texts.push_back(r.text);
        const auto kind = nebula::tokenizer_kind_from_name(cfg.tokenizer);
        nebula::BpeModel bpe;
        if (kind == nebula::TokenizerKind::Bpe)
            bpe = nebula::BpeModel::train(texts, cfg.vocab_size);
        const nebula::BpeModel* bpe_ptr = kind == nebula::TokenizerKind::Bpe ? &bpe : nullptr;
        const auto tokens = nebula::tokenize_corpus(texts, kind, bpe_ptr);
        const auto vocab = nebula::Vocabulary::build(tokens, cfg.vocab_size);

        const auto dataset =
            nebula::encode_dataset(records, vocab, kind, bpe_ptr, cfg.seq_len);
        nebula::ModelConfig model_config = cfg.model;
        model_config.vocab_size = vocab.size();
        model_config.seq_len = cfg.seq_len;
        model_config.num_classes = std::max(2, nebula::max_label(records) + 1);

        nebula::Model model(model_config, cfg.train.seed);
        nebula::Trainer trainer(model, cfg.train);
        trainer.run(dataset);
        const auto report = nebula::evaluate_model(model, dataset, cfg.target_fpr);

        const fs::path cell_dir = fs::path(cfg.out_dir) / cell.name;
        fs::create_directories(cell_dir);
        nebula::write_file(cell_dir / "eval.json", report.to_json());
        std::cout << cell.name << ": auc " << report.auc << ", f1 " << report.f1 << "\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"behavior-report transformer pipeline"};
    app.require_subcommand(1);

    // clean
    CommonArgs clean_common;
    std::string clean_manifest, clean_out, clean_profile, clean_norm;
    bool clean_no_filter = false, clean_strict = false;
    auto* clean_cmd = app.add_subcommand("clean", "filter, flatten and normalize raw reports");
    add_common(clean_cmd, clean_common);
    clean_cmd->add_option("--manifest", clean_manifest, "JSONL/CSV manifest of reports")
        ->required();
    clean_cmd->add_option("--out-file", clean_out, "output cleaned JSONL path");
    clean_cmd->add_option("--profile", clean_profile, "filter profile name or JSON path");
    clean_cmd->add_flag("--no-filter", clean_no_filter, "identity filter");
    clean_cmd->add_flag("--strict", clean_strict, "fail on the first bad report");
    clean_cmd->add_option("--norm-config", clean_norm, "normalizer config JSON");

    // vocab
    CommonArgs vocab_common;
    std::string vocab_input, vocab_tokenizer;
    std::optional<std::size_t> vocab_size;
    auto* vocab_cmd = app.add_subcommand("vocab", "train tokenizer artifacts and vocabulary");
    add_common(vocab_cmd, vocab_common);
    vocab_cmd->add_option("--input", vocab_input, "cleaned JSONL")->required();
    vocab_cmd->add_option("--tokenizer", vocab_tokenizer, "whitespace|wordpunct|bpe");
    vocab_cmd->add_option("--vocab-size", vocab_size, "vocabulary cap V");

    // train
    CommonArgs train_common;
    std::string train_input, train_vocab, train_bpe;
    std::optional<std::size_t> train_folds, train_epochs, train_seq_len, train_embed,
        train_layers, train_heads, train_span, train_batch, train_ffn;
    std::optional<double> train_budget, train_lr;
    auto* train_cmd = app.add_subcommand("train", "train the classifier");
    add_common(train_cmd, train_common);
    train_cmd->add_option("--input", train_input, "cleaned JSONL")->required();
    train_cmd->add_option("--vocab", train_vocab, "vocabulary JSON")->required();
    train_cmd->add_option("--bpe", train_bpe, "BPE merges path");
    train_cmd->add_option("--folds", train_folds, "cross-validation folds (>=2 enables CV)");
    train_cmd->add_option("--budget-seconds", train_budget, "wall-clock budget");
    train_cmd->add_option("--epochs", train_epochs, "epoch cap");
    train_cmd->add_option("--seq-len", train_seq_len, "sequence length N");
    train_cmd->add_option("--embed-dim", train_embed, "embedding dimension");
    train_cmd->add_option("--layers", train_layers, "encoder layers");
    train_cmd->add_option("--heads", train_heads, "attention heads");
    train_cmd->add_option("--span", train_span, "attention span S");
    train_cmd->add_option("--batch-size", train_batch, "batch size");
    train_cmd->add_option("--lr", train_lr, "learning rate");
    train_cmd->add_option("--ffn-dim", train_ffn, "feed-forward width");

    // eval
    CommonArgs eval_common;
    std::string eval_input, eval_vocab, eval_bpe, eval_model;
    std::optional<double> eval_fpr;
    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
    add_common(eval_cmd, eval_common);
    eval_cmd->add_option("--input", eval_input, "cleaned JSONL")->required();
    eval_cmd->add_option("--vocab", eval_vocab, "vocabulary JSON")->required();
    eval_cmd->add_option("--bpe", eval_bpe, "BPE merges path");
    eval_cmd->add_option("--model", eval_model, "model checkpoint")->required();
    eval_cmd->add_option("--target-fpr", eval_fpr, "operating-point FPR");

    // explain
    CommonArgs explain_common;
    std::string explain_input, explain_vocab, explain_bpe, explain_model, explain_sample;
    std::size_t explain_steps = 64, explain_top = 10;
    bool explain_attention = false;
    auto* explain_cmd = app.add_subcommand("explain", "token attributions for one sample");
    add_common(explain_cmd, explain_common);
    explain_cmd->add_option("--input", explain_input, "cleaned JSONL")->required();
    explain_cmd->add_option("--vocab", explain_vocab, "vocabulary JSON")->required();
    explain_cmd->add_option("--bpe", explain_bpe, "BPE merges path");
    explain_cmd->add_option("--model", explain_model, "model checkpoint")->required();
    explain_cmd->add_option("--sample", explain_sample, "sample id or index")->required();
    explain_cmd->add_option("--steps", explain_steps, "integration steps");
    explain_cmd->add_option("--top", explain_top, "top-k tokens to print");
    explain_cmd->add_flag("--attention", explain_attention, "dump attention activations");

    // synth
    CommonArgs synth_common;
    std::size_t synth_count = 200, synth_classes = 2;
    std::uint64_t synth_seed = 7;
    auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic report corpus");
    add_common(synth_cmd, synth_common);
    synth_cmd->add_option("--count", synth_count, "number of reports");
    synth_cmd->add_option("--classes", synth_classes, "number of classes (2..8)");
    synth_cmd->add_option("--corpus-seed", synth_seed, "corpus seed");

    // ablate
    CommonArgs ablate_common;
    std::string ablate_manifest;
    std::vector<std::size_t> ablate_vocab, ablate_seqlen;
    std::vector<std::string> ablate_tokenizers;
    bool ablate_filters = false;
    std::optional<double> ablate_budget;
    std::optional<std::size_t> ablate_epochs;
    auto* ablate_cmd = app.add_subcommand("ablate", "one-axis-at-a-time configuration sweeps");
    add_common(ablate_cmd, ablate_common);
    ablate_cmd->add_option("--manifest", ablate_manifest, "raw report manifest")->required();
    ablate_cmd->add_option("--vocab-sizes", ablate_vocab, "vocabulary sizes")->delimiter(',');
    ablate_cmd->add_option("--seq-lens", ablate_seqlen, "sequence lengths")->delimiter(',');
    ablate_cmd->add_option("--tokenizers", ablate_tokenizers, "tokenizer names")->delimiter(',');
    ablate_cmd->add_flag("--filters", ablate_filters, "sweep filter on/off");
    ablate_cmd->add_option("--budget-seconds", ablate_budget, "per-cell training budget");
    ablate_cmd->add_option("--epochs", ablate_epochs, "per-cell epoch cap");

    CLI11_PARSE(app, argc, argv);

    try {
        if (clean_cmd->parsed())
            return run_clean(clean_common, clean_manifest, clean_out, clean_profile,
                             clean_no_filter, clean_strict, clean_norm);
        if (vocab_cmd->parsed())
            return run_vocab(vocab_common, vocab_input, vocab_tokenizer, vocab_size);
        if (train_cmd->parsed())
            return run_train(train_common, train_input, train_vocab, train_bpe, train_folds,
                             train_budget, train_epochs, train_seq_len, train_embed,
                             train_layers, train_heads, train_span, train_batch, train_lr,
                             train_ffn);
        if (eval_cmd->parsed())
            return run_eval(eval_common, eval_input, eval_vocab, eval_bpe, eval_model, eval_fpr);
        if (explain_cmd->parsed())
            return run_explain(explain_common, explain_input, explain_vocab, explain_bpe,
                               explain_model, explain_sample, explain_steps, explain_top,
                               explain_attention);
        if (synth_cmd->parsed())
            return run_synth(synth_common, synth_count, synth_classes, synth_seed);
        if (ablate_cmd->parsed())
            return run_ablate(ablate_common, ablate_manifest, ablate_vocab, ablate_seqlen,
                              ablate_tokenizers, ablate_filters, ablate_budget, ablate_epochs);
    } catch (const nebula::UserError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
