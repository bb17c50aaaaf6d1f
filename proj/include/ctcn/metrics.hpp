#pragma once

#include <cstddef>
#include <iosfwd>
#include <vector>

namespace ctcn {

/// Leukemia (label 1) is the positive class.
struct ConfusionMatrix {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  std::size_t total() const { return tp + fp + tn + fn; }
};

/// prediction = 1 iff probability >= threshold.
ConfusionMatrix confusion(const std::vector<double>& probabilities, const std::vector<int>& labels,
                          double threshold = 0.5);

/// A ratio with a zero denominator is reported as 0 with its flag cleared.
struct Metrics {
  double accuracy = 0, precision = 0, recall = 0, f1 = 0;
  bool precision_defined = true, recall_defined = true, f1_defined = true;
};

Metrics metrics(const ConfusionMatrix& cm);

struct RocPoint {
  double threshold, fpr, tpr;
};

struct RocCurve {
  std::vector<RocPoint> points;  // descending threshold, +inf first and -inf last
  double auc = 0;
};

/// One point per distinct score plus the two infinite sentinels; trapezoidal
/// area, which equals P(score_pos > score_neg) + P(tie) / 2.
RocCurve roc_auc(const std::vector<double>& scores, const std::vector<int>& labels);

/// `metric,value` rows: accuracy, precision, recall, f1, auc.
void write_metrics_csv(std::ostream& out, const Metrics& m, double auc);
/// `threshold,fpr,tpr` rows.
void write_roc_csv(std::ostream& out, const RocCurve& roc);

}  // namespace ctcn
