#pragma once

// Brute-force graph reconstruction on nested std::vector, written without any
// of the library's types. The summation order matches the library's so the
// comparison can be exact.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace ctcn::testing {

using Rows = std::vector<std::vector<double>>;

struct GraphOracle {
  Rows distance;
  Rows similarity;  // diagonal unused
  std::vector<double> mean_similarity;
  std::vector<std::size_t> ranking;  // descending mean similarity, ties by index
  Rows reconstructed;
};

inline GraphOracle graph_oracle(const Rows& x) {
  const std::size_t n = x.size();
  GraphOracle o;
  o.distance.assign(n, std::vector<double>(n, 0.0));
  o.similarity.assign(n, std::vector<double>(n, 0.0));
  for (std::size_t u = 0; u < n; ++u)
    for (std::size_t v = 0; v < n; ++v) {
      if (u == v) continue;
      double s = 0;
      for (std::size_t i = 0; i < x[u].size(); ++i) s += (x[u][i] - x[v][i]) * (x[u][i] - x[v][i]);
      o.distance[u][v] = std::sqrt(s);
      o.similarity[u][v] = 1.0 / (o.distance[u][v] > 1e-12 ? o.distance[u][v] : 1e-12);
    }
  for (std::size_t u = 0; u < n; ++u) {
    double s = 0;
    for (std::size_t v = 0; v < n; ++v)
      if (v != u) s += o.similarity[u][v];
    o.mean_similarity.push_back(s / double(n - 1));
  }
  o.ranking.resize(n);
  std::iota(o.ranking.begin(), o.ranking.end(), 0);
  // insertion sort, strictly greater moves ahead
  for (std::size_t i = 1; i < n; ++i)
    for (std::size_t j = i; j > 0 && o.mean_similarity[o.ranking[j]] > o.mean_similarity[o.ranking[j - 1]]; --j)
      std::swap(o.ranking[j], o.ranking[j - 1]);
  for (std::size_t u = 0; u < n; ++u) {
    double w = 0;
    for (std::size_t v = 0; v < n; ++v)
      if (v != u) w += o.similarity[u][v];
    std::vector<double> row(x[u].size());
    for (std::size_t i = 0; i < row.size(); ++i) {
      double acc = 0;
      for (std::size_t v = 0; v < n; ++v)
        if (v != u) acc += o.similarity[u][v] * x[v][i];
      row[i] = acc / w;
    }
    o.reconstructed.push_back(row);
  }
  return o;
}

}  // namespace ctcn::testing
