#pragma once

#include "ctcn/tensor.hpp"

#include <cstddef>
#include <iosfwd>
#include <stdexcept>
#include <vector>

namespace ctcn {

/// Rows are samples, columns are features.
using FeatureMatrix = RowMatrix;

class GraphError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline constexpr double kSimilarityEpsilon = 1e-12;

/// Fully connected graph over the rows of a feature matrix.
/// distances: symmetric, zero diagonal. similarities[u][v] = 1 / max(d_uv, eps)
/// off the diagonal and 0 on it (no self-loops).
struct FeatureGraph {
  FeatureMatrix nodes;
  RowMatrix distances;
  RowMatrix similarities;

  std::size_t size() const { return static_cast<std::size_t>(nodes.rows()); }
};

/// Sorted by descending score, ties by ascending index.
struct HiddenSet {
  std::vector<std::size_t> indices;
  std::vector<double> scores;
};

/// Distances are sqrt of the coordinate-ordered sum of squared differences.
FeatureGraph build_graph(const FeatureMatrix& features);

/// Mean similarity of each node to every other node, summed in index order.
std::vector<double> mean_similarities(const FeatureGraph& graph);

/// The k nodes with the highest mean similarity.
HiddenSet select_hidden(const FeatureGraph& graph, std::size_t k);

/// Row u is sum_{v != u} s_uv x_v / sum_{v != u} s_uv, accumulated in index order.
FeatureMatrix reconstruct(const FeatureGraph& graph);

/// ceil(0.1 * n), at least 1.
std::size_t default_hidden_count(std::size_t nodes);

struct GrafrResult {
  FeatureMatrix features;
  HiddenSet hidden;
  std::vector<double> mean_similarity;
};

/// [global | spatial] per row, then build_graph and reconstruct. k == 0 picks
/// default_hidden_count.
GrafrResult grafr_apply(const FeatureMatrix& global, const FeatureMatrix& spatial, std::size_t k = 0);

/// The reconstruction rule evaluated row by row without materializing a graph:
/// query u becomes the similarity-weighted mean of the reference nodes. With
/// self_excluded the queries are the reference rows and node u skips itself,
/// which equals reconstruct(build_graph(reference)) exactly.
FeatureMatrix reconstruct_against(const FeatureMatrix& reference, const FeatureMatrix& queries, bool self_excluded);

/// CSV `node_index,mean_similarity,selected`.
void write_grafr_diagnostics(std::ostream& out, const GrafrResult& result);

}  // namespace ctcn
