#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace nebula {

struct ScoredSample {
    double score = 0.0;  // higher = more in-class
    int label = 0;       // 1 = positive for binary ops
};

struct RocPoint {
    double fpr = 0.0;
    double tpr = 0.0;
    double threshold = 0.0;
};

// Step-function ROC: thresholds swept over distinct scores descending,
// predictions are score >= threshold. Endpoints (0,0) and (1,1) included.
struct RocCurve {
    std::vector<RocPoint> points;
    std::string to_csv() const;
};

RocCurve roc_curve(const std::vector<ScoredSample>& samples);

// Mann-Whitney statistic: fraction of (positive, negative) pairs ranked
// correctly, ties counted 1/2.
double auc(const std::vector<ScoredSample>& samples);

struct OperatingPoint {
    double tpr = 0.0;
    double threshold = 0.0;
    double fpr = 0.0;
};

// Smallest threshold whose empirical FPR <= target (conservative step rule,
// no interpolation); +inf with TPR 0 when no finite threshold qualifies.
OperatingPoint tpr_at_fpr(const std::vector<ScoredSample>& samples, double target_fpr);

struct ClassificationReport {
    double accuracy = 0.0;
    double macro_f1 = 0.0;
    std::map<int, double> per_class_f1;
    std::vector<int> degenerate_classes;  // absent from both preds and labels
};

ClassificationReport classification_report(const std::vector<int>& preds,
                                           const std::vector<int>& labels, int num_classes);

struct EvalReport {
    double tpr_at_target = 0.0;
    double target_fpr = 1e-3;
    double threshold = 0.0;
    double auc = 0.0;
    double f1 = 0.0;  // positive-class F1 for binary, macro for multiclass
    double macro_f1 = 0.0;
    double accuracy = 0.0;
    std::map<int, double> per_class_f1;

    std::string to_json() const;
};

// Binary evaluation from positive-class scores.
EvalReport evaluate_binary(const std::vector<double>& positive_scores,
                           const std::vector<int>& labels, double target_fpr);

// Multiclass: accuracy / macro F1 from argmax predictions; AUC and TPR at
// the target FPR are macro one-vs-rest averages over per-class scores.
EvalReport evaluate_multiclass(const std::vector<std::vector<double>>& class_scores,
                               const std::vector<int>& labels, int num_classes,
                               double target_fpr);

}  // namespace nebula
