#include "ctcn/selector.hpp"

#include "ctcn/metrics.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>
#include <ostream>

namespace ctcn {

Mask transfer(const Eigen::VectorXd& position) {
  Mask m(static_cast<std::size_t>(position.size()));
  for (Eigen::Index j = 0; j < position.size(); ++j) m[static_cast<std::size_t>(j)] = position[j] >= 0.5;
  return m;
}

Candidate Candidate::at(Eigen::VectorXd position) {
  Candidate c;
  c.mask = transfer(position);
  c.position = std::move(position);
  return c;
}

std::size_t Candidate::selected() const { return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), true)); }

namespace {

std::vector<Eigen::Index> selected_columns(const Mask& mask) {
  std::vector<Eigen::Index> cols;
  for (std::size_t j = 0; j < mask.size(); ++j)
    if (mask[j]) cols.push_back(static_cast<Eigen::Index>(j));
  return cols;
}

}  // namespace

double fitness(const Mask& mask, const FitnessSpec& spec) {
  const auto d = static_cast<std::size_t>(spec.train_x.cols());
  if (mask.size() != d) throw DataError(fmt::format("fitness: mask of {} bits for {} features", mask.size(), d));
  if (spec.train_x.rows() != static_cast<Eigen::Index>(spec.train_y.size()) ||
      spec.val_x.rows() != static_cast<Eigen::Index>(spec.val_y.size()) || spec.val_x.cols() != spec.train_x.cols())
    throw DataError("fitness: feature and label extents disagree");
  const auto positives = std::count(spec.train_y.begin(), spec.train_y.end(), 1);
  if (positives == 0 || positives == static_cast<long>(spec.train_y.size()))
    throw FitnessError("fitness: training split has a single class");
  const auto cols = selected_columns(mask);
  if (cols.empty()) return kEmptyMaskFitness;

  RowMatrix x = spec.train_x(Eigen::all, cols);
  RowMatrix v = spec.val_x(Eigen::all, cols);
  const Eigen::RowVectorXd mu = x.colwise().mean();
  Eigen::RowVectorXd sd = ((x.rowwise() - mu).array().square().colwise().mean()).sqrt();
  sd = (sd.array() > 1e-12).select(sd, 1.0);
  x = (x.rowwise() - mu).array().rowwise() / sd.array();
  v = (v.rowwise() - mu).array().rowwise() / sd.array();

  Eigen::VectorXd y(x.rows());
  for (Eigen::Index i = 0; i < y.size(); ++i) y[i] = spec.train_y[static_cast<std::size_t>(i)];
  Eigen::VectorXd w = Eigen::VectorXd::Zero(x.cols());
  double b = 0.0;
  const double n = static_cast<double>(x.rows());
  for (std::size_t e = 0; e < spec.epochs; ++e) {
    const Eigen::VectorXd z = (x * w).array() + b;
    const Eigen::VectorXd r = (1.0 / (1.0 + (-z.array()).exp())).matrix() - y;
    w -= spec.learning_rate / n * (x.transpose() * r);
    b -= spec.learning_rate / n * r.sum();
  }
  const Eigen::VectorXd score = (v * w).array() + b;
  std::vector<double> prob(static_cast<std::size_t>(score.size()));
  for (Eigen::Index i = 0; i < score.size(); ++i) prob[static_cast<std::size_t>(i)] = score[i] >= 0.0 ? 1.0 : 0.0;
  const double f1 = metrics(confusion(prob, spec.val_y, 0.5)).f1;
  return f1 - spec.lambda * static_cast<double>(cols.size()) / static_cast<double>(d);
}

Objective mask_objective(const FitnessSpec& spec) {
  auto cache = std::make_shared<std::unordered_map<Mask, double>>();
  auto shared = std::make_shared<const FitnessSpec>(spec);
  return [cache, shared](const Candidate& c) {
    auto it = cache->find(c.mask);
    if (it != cache->end()) return it->second;
    const double f = fitness(c.mask, *shared);
    cache->emplace(c.mask, f);
    return f;
  };
}

double r1_schedule(std::size_t t, std::size_t total, double alpha) {
  if (total == 0) throw ParameterError("r1_schedule: T must be positive");
  if (t > total) throw ParameterError(fmt::format("r1_schedule: t = {} beyond T = {}", t, total));
  return alpha - static_cast<double>(t) * alpha / static_cast<double>(total);
}

double sca_update(double p, double d, double r1, double r2, double r3, double r4) {
  const double step = std::abs(r3 * d - p);
  return r4 < 0.5 ? p + r1 * std::sin(r2) * step : p + r1 * std::cos(r2) * step;
}

void sca_step(std::vector<Candidate>& population, const Eigen::VectorXd& best, double r1, const Rng& stream,
              std::size_t t) {
  const Rng iteration = stream.derive("iteration", t);
  for (std::size_t i = 0; i < population.size(); ++i) {
    Rng rng = iteration.derive("candidate", i);
    auto& c = population[i];
    for (Eigen::Index j = 0; j < c.position.size(); ++j) {
      const double r2 = rng.uniform(0.0, 2.0 * std::numbers::pi);
      const double r3 = rng.uniform(0.0, 2.0);
      const double r4 = rng.uniform();
      c.position[j] = std::clamp(sca_update(c.position[j], best[j], r1, r2, r3, r4), 0.0, 1.0);
    }
    c.mask = transfer(c.position);
    c.fitness.reset();
  }
}

SearchResult sca_run(const Objective& objective, std::size_t dims, const SCAConfig& config) {
  if (config.population < 2) throw ParameterError("sca_run: population must be at least 2");
  if (config.iterations < 1) throw ParameterError("sca_run: iterations must be at least 1");
  if (dims == 0) throw ParameterError("sca_run: no dimensions");
  const Rng root = Rng(config.seed).derive("sca");
  std::vector<Candidate> population;
  for (std::size_t i = 0; i < config.population; ++i) {
    Rng rng = root.derive("init", i);
    Eigen::VectorXd p(static_cast<Eigen::Index>(dims));
    for (auto& v : p) v = rng.uniform();
    population.push_back(Candidate::at(std::move(p)));
  }

  SearchResult result;
  for (std::size_t t = 0;; ++t) {
    double total = 0.0;
    for (auto& c : population) {
      c.fitness = objective(c);
      total += *c.fitness;
      if (!result.best.fitness || *c.fitness > *result.best.fitness) result.best = c;
    }
    result.trace.push_back({t, *result.best.fitness, total / static_cast<double>(population.size()),
                            result.best.selected()});
    if (t == config.iterations) break;
    sca_step(population, result.best.position, r1_schedule(t, config.iterations, config.alpha), root, t);
  }
  return result;
}

std::pair<double, double> abhc_schedules(std::size_t t, const ABHCConfig& config) {
  if (config.iterations == 0) throw ParameterError("abhc_schedules: T_max must be positive");
  if (t > config.iterations) throw ParameterError(fmt::format("abhc_schedules: t = {} beyond T_max", t));
  if (config.p <= 0.0) throw ParameterError("abhc_schedules: P must be positive");
  const double tt = static_cast<double>(t), tmax = static_cast<double>(config.iterations);
  const double n = 1.0 - std::pow(tt, 1.0 / config.p) / std::pow(tmax, 1.0 / config.p);
  const double beta = config.beta_min + tt * (config.beta_max - config.beta_min) / tmax;
  return {n, beta};
}

SearchResult abhc_refine(const Candidate& seed, const Objective& objective, const ABHCConfig& config, Rng& rng,
                         std::size_t first_iteration) {
  if (!seed.fitness) throw ContractError("abhc_refine: seed must carry a fitness");
  if (config.beta_min > config.beta_max || config.beta_min < 0.0 || config.beta_max > 1.0)
    throw ParameterError("abhc_refine: need 0 <= beta_min <= beta_max <= 1");
  SearchResult result{seed, {}};
  const std::size_t d = seed.mask.size();
  for (std::size_t t = 1; t <= config.iterations; ++t) {
    const auto [n_hc, beta_hc] = abhc_schedules(t, config);
    Candidate next = result.best;
    bool changed = false;
    auto set_bit = [&](std::size_t j, bool on) {
      if (next.mask[j] == on) return;
      next.mask[j] = on;
      next.position[static_cast<Eigen::Index>(j)] = on ? 1.0 : 0.0;
      changed = true;
    };
    if (rng.bernoulli(n_hc)) {
      const std::size_t j = rng.index(d);
      set_bit(j, !next.mask[j]);
    }
    for (std::size_t j = 0; j < d; ++j)
      if (rng.bernoulli(beta_hc)) set_bit(j, rng.bernoulli(0.5));
    double proposal = *result.best.fitness;
    if (changed) {
      next.fitness = proposal = objective(next);
      if (*next.fitness > *result.best.fitness) result.best = std::move(next);
    }
    result.trace.push_back({first_iteration + t, *result.best.fitness, proposal, result.best.selected()});
  }
  return result;
}

void write_trace_csv(std::ostream& out, const std::vector<TraceRow>& trace) {
  out << "iteration,best_fitness,mean_fitness,selected_count\n";
  for (const auto& r : trace)
    out << fmt::format("{},{},{},{}\n", r.iteration, r.best_fitness, r.mean_fitness, r.selected_count);
}

}  // namespace ctcn
