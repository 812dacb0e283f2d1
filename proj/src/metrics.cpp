#include "nebula/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "nebula/errors.hpp"

namespace nebula {

namespace {

struct Counts {
    std::size_t positives = 0;
    std::size_t negatives = 0;
};

Counts count_classes(const std::vector<ScoredSample>& samples) {
    Counts c;
    for (const ScoredSample& s : samples) {
        if (!std::isfinite(s.score)) throw UserError("scores must be finite");
        if (s.label == 1)
            ++c.positives;
        else
            ++c.negatives;
    }
    if (c.positives == 0 || c.negatives == 0) throw SingleClass();
    return c;
}

std::string format_double(double v) {
    std::ostringstream oss;
    oss.precision(17);
    oss << v;
    return oss.str();
}

}  // namespace

std::string RocCurve::to_csv() const {
    std::ostringstream oss;
    oss << "fpr,tpr,threshold\n";
    for (const RocPoint& p : points)
        oss << format_double(p.fpr) << ',' << format_double(p.tpr) << ','
            << format_double(p.threshold) << '\n';
    return oss.str();
}

RocCurve roc_curve(const std::vector<ScoredSample>& samples) {
    const Counts counts = count_classes(samples);
    std::vector<ScoredSample> sorted = samples;
    std::sort(sorted.begin(), sorted.end(),
              [](const ScoredSample& a, const ScoredSample& b) { return a.score > b.score; });

    RocCurve curve;
    curve.points.push_back(RocPoint{0.0, 0.0, std::numeric_limits<double>::infinity()});
    std::size_t tp = 0, fp = 0;
    std::size_t i = 0;
    while (i < sorted.size()) {
        const double threshold = sorted[i].score;
        // Identical scores form one threshold group.
        while (i < sorted.size() && sorted[i].score == threshold) {
            if (sorted[i].label == 1)
                ++tp;
            else
                ++fp;
            ++i;
        }
        curve.points.push_back(RocPoint{static_cast<double>(fp) / counts.negatives,
                                        static_cast<double>(tp) / counts.positives, threshold});
    }
    return curve;
}

double auc(const std::vector<ScoredSample>& samples) {
    const Counts counts = count_classes(samples);
    // Midrank formulation of the Mann-Whitney U statistic.
    std::vector<const ScoredSample*> order;
    order.reserve(samples.size());
    for (const ScoredSample& s : samples) order.push_back(&s);
    std::sort(order.begin(), order.end(),
              [](const ScoredSample* a, const ScoredSample* b) { return a->score < b->score; });

    double positive_rank_sum = 0.0;
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j < order.size() && order[j]->score == order[i]->score) ++j;
        // ranks i+1 .. j (1-based); midrank for the tie group
        const double midrank = 0.5 * static_cast<double>(i + 1 + j);
        for (std::size_t k = i; k < j; ++k)
            if (order[k]->label == 1) positive_rank_sum += midrank;
        i = j;
    }
    const double n1 = static_cast<double>(counts.positives);
    const double n0 = static_cast<double>(counts.negatives);
    const double u = positive_rank_sum - n1 * (n1 + 1.0) / 2.0;
    return u / (n1 * n0);
}

OperatingPoint tpr_at_fpr(const std::vector<ScoredSample>& samples, double target_fpr) {
    const Counts counts = count_classes(samples);
    if (target_fpr < 0.0 || target_fpr > 1.0) throw UserError("target_fpr must be in [0, 1]");

    std::vector<ScoredSample> sorted = samples;
    std::sort(sorted.begin(), sorted.end(),
              [](const ScoredSample& a, const ScoredSample& b) { return a.score > b.score; });

    OperatingPoint best;
    best.threshold = std::numeric_limits<double>::infinity();
    best.tpr = 0.0;
    best.fpr = 0.0;
    std::size_t tp = 0, fp = 0;
    std::size_t i = 0;
    while (i < sorted.size()) {
        const double threshold = sorted[i].score;
        while (i < sorted.size() && sorted[i].score == threshold) {
            if (sorted[i].label == 1)
                ++tp;
            else
                ++fp;
            ++i;
        }
        const double fpr = static_cast<double>(fp) / counts.negatives;
        if (fpr <= target_fpr) {
            // Thresholds decrease along the sweep; the last admissible one is
            // the smallest.
            best.threshold = threshold;
            best.tpr = static_cast<double>(tp) / counts.positives;
            best.fpr = fpr;
        }
    }
    return best;
}

ClassificationReport classification_report(const std::vector<int>& preds,
                                           const std::vector<int>& labels, int num_classes) {
    if (preds.size() != labels.size())
        throw LengthMismatch("preds and labels differ in length");
    ClassificationReport report;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < preds.size(); ++i)
        if (preds[i] == labels[i]) ++correct;
    report.accuracy = preds.empty() ? 0.0 : static_cast<double>(correct) / preds.size();

    double f1_sum = 0.0;
    for (int c = 0; c < num_classes; ++c) {
        std::size_t tp = 0, fp = 0, fn = 0;
        for (std::size_t i = 0; i < preds.size(); ++i) {
            const bool pred_c = preds[i] == c;
            const bool label_c = labels[i] == c;
            if (pred_c && label_c) ++tp;
            if (pred_c && !label_c) ++fp;
            if (!pred_c && label_c) ++fn;
        }
        double f1 = 0.0;
        if (tp + fp + fn == 0) {
            report.degenerate_classes.push_back(c);
        } else if (tp > 0) {
            const double precision = static_cast<double>(tp) / (tp + fp);
            const double recall = static_cast<double>(tp) / (tp + fn);
            f1 = 2.0 * precision * recall / (precision + recall);
        }
        report.per_class_f1[c] = f1;
        f1_sum += f1;
    }
    report.macro_f1 = num_classes > 0 ? f1_sum / num_classes : 0.0;
    return report;
}

std::string EvalReport::to_json() const {
    nlohmann::ordered_json j;
    j["tpr_at_target"] = tpr_at_target;
    j["target_fpr"] = target_fpr;
    j["threshold"] = std::isfinite(threshold) ? threshold : 0.0;
    j["threshold_finite"] = std::isfinite(threshold);
    j["auc"] = auc;
    j["f1"] = f1;
    j["macro_f1"] = macro_f1;
    j["accuracy"] = accuracy;
    nlohmann::ordered_json per_class = nlohmann::ordered_json::object();
    for (const auto& [cls, f1v] : per_class_f1) per_class[std::to_string(cls)] = f1v;
    j["per_class_f1"] = std::move(per_class);
    return j.dump(2) + "\n";
}

EvalReport evaluate_binary(const std::vector<double>& positive_scores,
                           const std::vector<int>& labels, double target_fpr) {
    if (positive_scores.size() != labels.size())
        throw LengthMismatch("scores and labels differ in length");
    std::vector<ScoredSample> samples(positive_scores.size());
    for (std::size_t i = 0; i < samples.size(); ++i)
        samples[i] = ScoredSample{positive_scores[i], labels[i] == 1 ? 1 : 0};

    EvalReport report;
    report.target_fpr = target_fpr;
    report.auc = auc(samples);
    const OperatingPoint op = tpr_at_fpr(samples, target_fpr);
    report.tpr_at_target = op.tpr;
    report.threshold = op.threshold;

    std::vector<int> preds(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i)
        preds[i] = positive_scores[i] >= 0.5 ? 1 : 0;
    const ClassificationReport cls = classification_report(preds, labels, 2);
    report.accuracy = cls.accuracy;
    report.macro_f1 = cls.macro_f1;
    report.per_class_f1 = cls.per_class_f1;
    report.f1 = cls.per_class_f1.at(1);  // headline binary F1 = positive class
    return report;
}

EvalReport evaluate_multiclass(const std::vector<std::vector<double>>& class_scores,
                               const std::vector<int>& labels, int num_classes,
                               double target_fpr) {
    if (class_scores.size() != labels.size())
        throw LengthMismatch("scores and labels differ in length");
    std::vector<int> preds(labels.size(), 0);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const auto& row = class_scores[i];
        preds[i] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
    }
    EvalReport report;
    report.target_fpr = target_fpr;
    const ClassificationReport cls = classification_report(preds, labels, num_classes);
    report.accuracy = cls.accuracy;
    report.macro_f1 = cls.macro_f1;
    report.per_class_f1 = cls.per_class_f1;
    report.f1 = cls.macro_f1;

    // Macro one-vs-rest AUC / TPR over classes present in the labels.
    double auc_sum = 0.0, tpr_sum = 0.0;
    int evaluable = 0;
    for (int c = 0; c < num_classes; ++c) {
        std::vector<ScoredSample> samples(labels.size());
        for (std::size_t i = 0; i < labels.size(); ++i)
            samples[i] = ScoredSample{class_scores[i][static_cast<std::size_t>(c)],
                                      labels[i] == c ? 1 : 0};
        try {
            auc_sum += auc(samples);
            tpr_sum += tpr_at_fpr(samples, target_fpr).tpr;
            ++evaluable;
        } catch (const SingleClass&) {
            // class absent: skip
        }
    }
    if (evaluable > 0) {
        report.auc = auc_sum / evaluable;
        report.tpr_at_target = tpr_sum / evaluable;
    }
    report.threshold = std::numeric_limits<double>::quiet_NaN();
    return report;
}

}  // namespace nebula
