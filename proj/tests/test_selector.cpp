#include "ctcn/selector.hpp"
#include "planted.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <sstream>

using namespace ctcn;
using ctcn::testing::informative_hits;
using ctcn::testing::planted_problem;

namespace {

double sphere(const Candidate& c) { return -(c.position.array() - 0.5).square().sum(); }

FitnessSpec separable_spec() {
  FitnessSpec s;
  s.train_x.resize(40, 5);
  s.val_x.resize(20, 5);
  Rng rng(7);
  for (Eigen::Index i = 0; i < 60; ++i) {
    const int label = int(i % 2);
    auto& m = i < 40 ? s.train_x : s.val_x;
    const Eigen::Index r = i < 40 ? i : i - 40;
    for (Eigen::Index j = 0; j < 5; ++j) m(r, j) = rng.normal();
    m(r, 0) = label ? 3.0 + rng.uniform() : -3.0 - rng.uniform();
    (i < 40 ? s.train_y : s.val_y).push_back(label);
  }
  return s;
}

}  // namespace

TEST_CASE("schedules") {
  CHECK(r1_schedule(0, 100, 2.0) == 2.0);
  CHECK(r1_schedule(100, 100, 2.0) == 0.0);
  CHECK(r1_schedule(50, 100, 2.0) == 1.0);
  CHECK_THROWS_AS(r1_schedule(0, 0, 2.0), ParameterError);

  ABHCConfig c{100, 2.0, 0.01, 0.05};
  CHECK(abhc_schedules(0, c) == std::pair{1.0, 0.01});
  CHECK(abhc_schedules(100, c).first == 0.0);
  CHECK(std::abs(abhc_schedules(100, c).second - 0.05) < 1e-15);
  CHECK(std::abs(abhc_schedules(25, c).first - 0.5) < 1e-15);
  double prev_n = 2, prev_b = -1;
  for (std::size_t t = 0; t <= 100; ++t) {
    auto [n, b] = abhc_schedules(t, c);
    CHECK(n <= prev_n);
    CHECK(b >= prev_b);
    CHECK(n >= 0.0);
    CHECK(b <= 1.0);
    prev_n = n;
    prev_b = b;
  }
  CHECK_THROWS_AS(abhc_schedules(0, ABHCConfig{0, 2.0, 0.0, 0.0}), ParameterError);
}

TEST_CASE("sca_update and sca_step") {
  CHECK(std::abs(sca_update(0.3, 0.8, 1.0, std::numbers::pi / 2, 1.0, 0.2) - 0.8) < 1e-15);
  // cosine branch with cos(0) = 1
  CHECK(std::abs(sca_update(0.3, 0.8, 1.0, 0.0, 1.0, 0.7) - 0.8) < 1e-15);

  Rng rng(1);
  std::vector<Candidate> pop;
  for (int i = 0; i < 6; ++i) {
    Eigen::VectorXd p(7);
    for (auto& v : p) v = rng.uniform();
    pop.push_back(Candidate::at(p));
  }
  const Eigen::VectorXd best = pop[2].position;
  auto frozen = pop;
  sca_step(frozen, best, 0.0, Rng(3), 0);
  for (std::size_t i = 0; i < pop.size(); ++i) CHECK(frozen[i].position == pop[i].position);

  auto moved = pop;
  sca_step(moved, best, 2.0, Rng(3), 4);
  CHECK(moved.size() == 6);
  for (auto& c : moved) {
    CHECK(c.position.size() == 7);
    CHECK(c.position.minCoeff() >= 0.0);
    CHECK(c.position.maxCoeff() <= 1.0);
    CHECK(c.mask == transfer(c.position));
    CHECK_FALSE(c.fitness.has_value());
  }
  auto again = pop;
  sca_step(again, best, 2.0, Rng(3), 4);
  for (std::size_t i = 0; i < pop.size(); ++i) CHECK(again[i].position == moved[i].position);
}

TEST_CASE("fitness") {
  FitnessSpec s = separable_spec();
  s.lambda = 0.0;
  CHECK(fitness({true, false, false, false, false}, s) == 1.0);
  CHECK(fitness({false, false, false, false, false}, s) == kEmptyMaskFitness);
  s.lambda = 0.01;
  CHECK(std::abs(fitness({true, false, true, false, false}, s) - (1.0 - 0.01 * 2 / 5)) < 1e-15);
  // the stated formula: F1 0.95, 4 of 20 selected
  CHECK(std::abs((0.95 - 0.01 * 4.0 / 20.0) - 0.948) < 1e-15);

  FitnessSpec one = s;
  std::fill(one.train_y.begin(), one.train_y.end(), 1);
  CHECK_THROWS_AS(fitness({true, false, false, false, false}, one), FitnessError);
  CHECK_THROWS_AS(fitness({true, false}, s), DataError);
}

TEST_CASE("sca_run") {
  SUBCASE("sphere surrogate improves with a monotone incumbent") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      SearchResult r = sca_run(sphere, 5, SCAConfig{30, 200, 2.0, seed});
      CHECK(r.trace.size() == 201);
      CHECK(r.trace.back().best_fitness > r.trace.front().best_fitness);
      CHECK(*r.best.fitness == sphere(r.best));
      for (std::size_t i = 1; i < r.trace.size(); ++i) CHECK(r.trace[i].best_fitness >= r.trace[i - 1].best_fitness);
    }
  }
  SUBCASE("deterministic") {
    SearchResult a = sca_run(sphere, 4, SCAConfig{10, 20, 2.0, 9});
    SearchResult b = sca_run(sphere, 4, SCAConfig{10, 20, 2.0, 9});
    CHECK(a.best.position == b.best.position);
    for (std::size_t i = 0; i < a.trace.size(); ++i) CHECK(a.trace[i].mean_fitness == b.trace[i].mean_fitness);
  }
  SUBCASE("invalid configs") {
    CHECK_THROWS_AS(sca_run(sphere, 4, SCAConfig{1, 20, 2.0, 0}), ParameterError);
    CHECK_THROWS_AS(sca_run(sphere, 4, SCAConfig{5, 0, 2.0, 0}), ParameterError);
  }
  SUBCASE("planted features are recovered") {
    auto p = planted_problem(11);
    SearchResult r = sca_run(mask_objective(p.spec), 20, SCAConfig{20, 30, 2.0, 11});
    CHECK(informative_hits(r.best.mask, p.informative) >= 3);
  }
}

TEST_CASE("abhc_refine") {
  auto p = planted_problem(12);
  Objective obj = mask_objective(p.spec);
  SearchResult sca = sca_run(obj, 20, SCAConfig{10, 5, 2.0, 12});
  SUBCASE("no proposals leave the seed unchanged") {
    Rng rng(1);
    SearchResult r = abhc_refine(sca.best, obj, ABHCConfig{1, 2.0, 0.0, 0.0}, rng);
    CHECK(r.best.mask == sca.best.mask);
    CHECK(r.best.position == sca.best.position);
    CHECK(*r.best.fitness == *sca.best.fitness);
  }
  SUBCASE("never worse, informative recall kept") {
    Rng rng(2);
    SearchResult r = abhc_refine(sca.best, obj, ABHCConfig{40, 2.0, 0.0, 0.05}, rng, 5);
    CHECK(*r.best.fitness >= *sca.best.fitness);
    CHECK(informative_hits(r.best.mask, p.informative) >= informative_hits(sca.best.mask, p.informative));
    CHECK(r.trace.front().iteration == 6);
    for (std::size_t i = 1; i < r.trace.size(); ++i) CHECK(r.trace[i].best_fitness >= r.trace[i - 1].best_fitness);
  }
  SUBCASE("seed needs a fitness") {
    Rng rng(3);
    CHECK_THROWS_AS(abhc_refine(Candidate::at(Eigen::VectorXd::Zero(20)), obj, ABHCConfig{}, rng), ContractError);
  }
}

TEST_CASE("trace csv") {
  std::ostringstream out;
  write_trace_csv(out, {{0, 0.5, 0.25, 3}, {1, 0.75, 0.5, 2}});
  CHECK(out.str() == "iteration,best_fitness,mean_fitness,selected_count\n0,0.5,0.25,3\n1,0.75,0.5,2\n");
}
