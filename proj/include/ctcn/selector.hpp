#pragma once

#include "ctcn/grafr.hpp"
#include "ctcn/rng.hpp"

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <unordered_map>
#include <utility>
#include <vector>

namespace ctcn {

using Mask = std::vector<bool>;

/// mask[j] == (position[j] >= 0.5) whenever position changes.
struct Candidate {
  Eigen::VectorXd position;
  Mask mask;
  std::optional<double> fitness;

  static Candidate at(Eigen::VectorXd position);
  std::size_t selected() const;
};

Mask transfer(const Eigen::VectorXd& position);

struct SCAConfig {
  std::size_t population = 30;
  std::size_t iterations = 200;
  double alpha = 2.0;
  std::uint64_t seed = 0;
};

struct ABHCConfig {
  std::size_t iterations = 100;
  double p = 2.0;
  double beta_min = 0.0;
  double beta_max = 0.05;
};

/// Higher is better.
using Objective = std::function<double(const Candidate&)>;

/// Score of an empty mask. Below any reachable fitness.
inline constexpr double kEmptyMaskFitness = -1e30;

class FitnessError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct FitnessSpec {
  FeatureMatrix train_x;
  std::vector<int> train_y;
  FeatureMatrix val_x;
  std::vector<int> val_y;
  double lambda = 0.01;
  std::size_t epochs = 200;
  double learning_rate = 0.5;
};

/// Validation F1 of a logistic model (full-batch gradient descent on the
/// masked, train-standardized features) minus lambda * |mask| / d.
double fitness(const Mask& mask, const FitnessSpec& spec);

/// fitness() memoized on the mask. Copies share the cache.
Objective mask_objective(const FitnessSpec& spec);

/// r1 = alpha - t * alpha / T.
double r1_schedule(std::size_t t, std::size_t total, double alpha);

/// Sine branch when r4 < 0.5, cosine branch otherwise; no clamping.
double sca_update(double p, double d, double r1, double r2, double r3, double r4);

/// Moves every candidate toward or around best. Candidate i draws
/// r2 in [0, 2pi), r3 in [0, 2), r4 in [0, 1) per dimension from
/// stream.derive("iteration", t).derive("candidate", i). Positions are
/// clamped to [0, 1], masks recomputed and fitness cleared.
void sca_step(std::vector<Candidate>& population, const Eigen::VectorXd& best, double r1, const Rng& stream,
              std::size_t t);

struct TraceRow {
  std::size_t iteration;
  double best_fitness;
  double mean_fitness;
  std::size_t selected_count;
};

struct SearchResult {
  Candidate best;
  std::vector<TraceRow> trace;
};

/// Evaluates at t = 0..T and steps between evaluations, so the population is
/// evaluated T + 1 times. The incumbent changes only on strict improvement.
SearchResult sca_run(const Objective& objective, std::size_t dims, const SCAConfig& config);

/// (N_HC, beta_HC) at iteration t.
std::pair<double, double> abhc_schedules(std::size_t t, const ABHCConfig& config);

/// Greedy mask-space local search from seed (which must carry a fitness).
/// Iteration t flips one uniform bit with probability N_HC(t), then resets each
/// bit to a fair coin with probability beta_HC(t). Trace rows continue the
/// iteration count from first_iteration.
SearchResult abhc_refine(const Candidate& seed, const Objective& objective, const ABHCConfig& config, Rng& rng,
                         std::size_t first_iteration = 0);

/// CSV `iteration,best_fitness,mean_fitness,selected_count`.
void write_trace_csv(std::ostream& out, const std::vector<TraceRow>& trace);

}  // namespace ctcn
