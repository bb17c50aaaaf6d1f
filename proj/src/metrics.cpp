#include "ctcn/metrics.hpp"

#include "ctcn/tensor.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <limits>
#include <numeric>
#include <ostream>

namespace ctcn {

namespace {

void check_inputs(const std::vector<double>& scores, const std::vector<int>& labels, const char* op) {
  if (scores.size() != labels.size())
    throw DataError(fmt::format("{}: {} scores vs {} labels", op, scores.size(), labels.size()));
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] != 0 && labels[i] != 1) throw DataError(fmt::format("{}: label {} at index {}", op, labels[i], i));
}

double ratio(std::size_t num, std::size_t den, bool& defined) {
  defined = den != 0;
  return defined ? static_cast<double>(num) / static_cast<double>(den) : 0.0;
}

}  // namespace

ConfusionMatrix confusion(const std::vector<double>& probabilities, const std::vector<int>& labels, double threshold) {
  check_inputs(probabilities, labels, "confusion");
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool predicted = probabilities[i] >= threshold;
    if (labels[i] == 1) (predicted ? cm.tp : cm.fn)++;
    else (predicted ? cm.fp : cm.tn)++;
  }
  return cm;
}

Metrics metrics(const ConfusionMatrix& cm) {
  if (cm.total() == 0) throw DataError("metrics: empty confusion matrix");
  Metrics m;
  bool unused = true;
  m.accuracy = ratio(cm.tp + cm.tn, cm.total(), unused);
  m.precision = ratio(cm.tp, cm.tp + cm.fp, m.precision_defined);
  m.recall = ratio(cm.tp, cm.tp + cm.fn, m.recall_defined);
  m.f1_defined = m.precision_defined && m.recall_defined && m.precision + m.recall > 0;
  m.f1 = m.f1_defined ? 2 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
  return m;
}

RocCurve roc_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  check_inputs(scores, labels, "roc_auc");
  const auto pos = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
  const std::size_t neg = labels.size() - pos;
  if (pos == 0 || neg == 0) throw DataError("roc_auc: both classes must be present");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  constexpr double inf = std::numeric_limits<double>::infinity();
  RocCurve roc;
  roc.points.push_back({inf, 0.0, 0.0});
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double s = scores[order[i]];
    for (; i < order.size() && scores[order[i]] == s; ++i) (labels[order[i]] == 1 ? tp : fp)++;
    roc.points.push_back({s, static_cast<double>(fp) / static_cast<double>(neg),
                          static_cast<double>(tp) / static_cast<double>(pos)});
  }
  roc.points.push_back({-inf, 1.0, 1.0});
  for (std::size_t i = 1; i < roc.points.size(); ++i) {
    const auto& a = roc.points[i - 1];
    const auto& b = roc.points[i];
    roc.auc += (b.fpr - a.fpr) * (a.tpr + b.tpr) / 2.0;
  }
  return roc;
}

void write_metrics_csv(std::ostream& out, const Metrics& m, double auc) {
  out << "metric,value\n";
  out << fmt::format("accuracy,{}\nprecision,{}\nrecall,{}\nf1,{}\nauc,{}\n", m.accuracy, m.precision, m.recall, m.f1,
                     auc);
}

void write_roc_csv(std::ostream& out, const RocCurve& roc) {
  out << "threshold,fpr,tpr\n";
  for (const auto& p : roc.points) out << fmt::format("{},{},{}\n", p.threshold, p.fpr, p.tpr);
}

}  // namespace ctcn
