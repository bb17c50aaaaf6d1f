#include "ctcn/grafr.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

namespace ctcn {

FeatureGraph build_graph(const FeatureMatrix& features) {
  const Eigen::Index n = features.rows(), d = features.cols();
  if (n < 2) throw GraphError(fmt::format("build_graph: need at least 2 nodes, got {}", n));
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < d; ++j)
      if (!std::isfinite(features(i, j)))
        throw DataError(fmt::format("build_graph: non-finite feature at row {}, column {}", i, j));
  FeatureGraph g{features, RowMatrix::Zero(n, n), RowMatrix::Zero(n, n)};
  for (Eigen::Index u = 0; u < n; ++u)
    for (Eigen::Index v = u + 1; v < n; ++v) {
      double acc = 0.0;
      for (Eigen::Index j = 0; j < d; ++j) {
        const double diff = features(u, j) - features(v, j);
        acc += diff * diff;
      }
      const double dist = std::sqrt(acc);
      g.distances(u, v) = g.distances(v, u) = dist;
      g.similarities(u, v) = g.similarities(v, u) = 1.0 / std::max(dist, kSimilarityEpsilon);
    }
  return g;
}

std::vector<double> mean_similarities(const FeatureGraph& graph) {
  const auto n = static_cast<Eigen::Index>(graph.size());
  std::vector<double> out(graph.size());
  for (Eigen::Index u = 0; u < n; ++u) {
    double acc = 0.0;
    for (Eigen::Index v = 0; v < n; ++v)
      if (v != u) acc += graph.similarities(u, v);
    out[static_cast<std::size_t>(u)] = acc / static_cast<double>(n - 1);
  }
  return out;
}

HiddenSet select_hidden(const FeatureGraph& graph, std::size_t k) {
  if (k < 1 || k > graph.size())
    throw ParameterError(fmt::format("select_hidden: k = {} outside [1, {}]", k, graph.size()));
  const auto score = mean_similarities(graph);
  std::vector<std::size_t> order(graph.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return score[a] > score[b]; });
  HiddenSet h;
  for (std::size_t i = 0; i < k; ++i) {
    h.indices.push_back(order[i]);
    h.scores.push_back(score[order[i]]);
  }
  return h;
}

FeatureMatrix reconstruct(const FeatureGraph& graph) {
  const auto n = static_cast<Eigen::Index>(graph.size());
  const Eigen::Index d = graph.nodes.cols();
  FeatureMatrix out(n, d);
  for (Eigen::Index u = 0; u < n; ++u) {
    double weight = 0.0;
    for (Eigen::Index v = 0; v < n; ++v)
      if (v != u) weight += graph.similarities(u, v);
    for (Eigen::Index j = 0; j < d; ++j) {
      double acc = 0.0;
      for (Eigen::Index v = 0; v < n; ++v)
        if (v != u) acc += graph.similarities(u, v) * graph.nodes(v, j);
      out(u, j) = acc / weight;
    }
  }
  return out;
}

std::size_t default_hidden_count(std::size_t nodes) { return std::max<std::size_t>(1, (nodes + 9) / 10); }

GrafrResult grafr_apply(const FeatureMatrix& global, const FeatureMatrix& spatial, std::size_t k) {
  if (global.rows() != spatial.rows())
    throw DataError(fmt::format("grafr_apply: {} global rows vs {} spatial rows", global.rows(), spatial.rows()));
  FeatureMatrix joined(global.rows(), global.cols() + spatial.cols());
  joined << global, spatial;
  const FeatureGraph graph = build_graph(joined);
  GrafrResult r;
  r.hidden = select_hidden(graph, k == 0 ? default_hidden_count(graph.size()) : k);
  r.mean_similarity = mean_similarities(graph);
  r.features = reconstruct(graph);
  return r;
}

FeatureMatrix reconstruct_against(const FeatureMatrix& reference, const FeatureMatrix& queries, bool self_excluded) {
  const Eigen::Index n = reference.rows(), d = reference.cols();
  if (queries.cols() != d)
    throw DimensionError(fmt::format("reconstruct_against: {} query columns vs {} reference columns", queries.cols(), d));
  if (self_excluded && queries.rows() != n)
    throw DimensionError("reconstruct_against: self-excluded queries must be the reference rows");
  if (n < (self_excluded ? 2 : 1)) throw GraphError(fmt::format("reconstruct_against: {} reference nodes", n));
  for (const FeatureMatrix* m : {&reference, &queries})
    if (!m->allFinite()) throw DataError("reconstruct_against: non-finite feature");
  FeatureMatrix out(queries.rows(), d);
  std::vector<double> sim(static_cast<std::size_t>(n));
  for (Eigen::Index u = 0; u < queries.rows(); ++u) {
    double weight = 0.0;
    for (Eigen::Index v = 0; v < n; ++v) {
      if (self_excluded && v == u) continue;
      double acc = 0.0;
      for (Eigen::Index j = 0; j < d; ++j) {
        const double diff = queries(u, j) - reference(v, j);
        acc += diff * diff;
      }
      sim[static_cast<std::size_t>(v)] = 1.0 / std::max(std::sqrt(acc), kSimilarityEpsilon);
      weight += sim[static_cast<std::size_t>(v)];
    }
    for (Eigen::Index j = 0; j < d; ++j) {
      double acc = 0.0;
      for (Eigen::Index v = 0; v < n; ++v)
        if (!self_excluded || v != u) acc += sim[static_cast<std::size_t>(v)] * reference(v, j);
      out(u, j) = acc / weight;
    }
  }
  return out;
}

void write_grafr_diagnostics(std::ostream& out, const GrafrResult& result) {
  std::vector<bool> selected(result.mean_similarity.size(), false);
  for (auto i : result.hidden.indices) selected[i] = true;
  out << "node_index,mean_similarity,selected\n";
  for (std::size_t i = 0; i < result.mean_similarity.size(); ++i)
    out << fmt::format("{},{},{}\n", i, result.mean_similarity[i], selected[i] ? 1 : 0);
}

}  // namespace ctcn
