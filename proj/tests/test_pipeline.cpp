#include "ctcn/config.hpp"
#include "ctcn/dataset.hpp"
#include "ctcn/pipeline.hpp"
#include "planted.hpp"

#include <doctest.h>
#include <fmt/format.h>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace ctcn;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / fmt::format("ctcn_test_pipeline_{}", name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// Planted selection problem written as a feature CSV: columns 2, 7, 11, 16
// carry the label.
fs::path planted_csv(const fs::path& dir, std::uint64_t seed) {
  auto p = ctcn::testing::planted_problem(seed, 240, 20, 240);
  FeatureSet set;
  set.x = p.spec.train_x;
  set.labels = p.spec.train_y;
  for (std::size_t i = 0; i < set.labels.size(); ++i) set.ids.push_back(fmt::format("s{:03}", i));
  save_feature_csv(dir / "planted.csv", set);
  return dir / "planted.csv";
}

PipelineConfig small_feature_run(const fs::path& csv, const fs::path& out) {
  PipelineConfig c = parse_config(R"(
dataset.format = feature-csv
sca.pop = 8
sca.iters = 10
abhc.iters = 10
fitness.epochs = 100
hdlc.filters = 4
hdlc.widths = 16, 8, 8, 4, 4, 1
hdlc.epochs = 30
hdlc.lr = 0.05
hdlc.batch = 16
)");
  c.dataset_path = csv;
  c.out = out;
  return c;
}

}  // namespace

TEST_CASE("config parsing") {
  SUBCASE("keys, comments and relative paths") {
    PipelineConfig c = parse_config("# comment\n\ndataset.path = data/x\nseed = 7  \nimage.size = 48\n"
                                    "dataset.classes = hem:0, all:1\nhdlc.widths = 8,4,4,2,2,1\n",
                                    "/base");
    CHECK(c.dataset_path == fs::path("/base/data/x"));
    CHECK(c.seed == 7);
    CHECK(c.image_size == 48);
    CHECK(c.gmod.height == 48);
    CHECK(c.gmod.width == 48);
    CHECK(c.classes == std::map<std::string, int>{{"hem", 0}, {"all", 1}});
    CHECK(c.hdlc.widths == std::vector<std::size_t>{8, 4, 4, 2, 2, 1});
  }
  SUBCASE("errors name the key") {
    CHECK_THROWS_WITH_AS(parse_config("no.such.key = 1\n"), doctest::Contains("no.such.key"), ConfigError);
    CHECK_THROWS_WITH_AS(parse_config("seed = seven\n"), doctest::Contains("seed"), ConfigError);
    CHECK_THROWS_AS(parse_config("seed 7\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("stage.grafr = maybe\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("dataset.format = tarball\n"), ConfigError);
  }
  SUBCASE("split fractions must be positive and sum to one") {
    PipelineConfig c = parse_config("split.train = 0.5\nsplit.val = 0.2\nsplit.test = 0.2\n");
    c.classes = {{"a", 0}, {"b", 1}};
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = parse_config("split.train = 0.9\nsplit.val = 0.1\nsplit.test = 0\n");
    CHECK_THROWS_AS(c.validate(), ConfigError);
  }
  SUBCASE("canonical text round-trips and fixes the hash") {
    PipelineConfig c = load_config(fs::path(CTCN_SOURCE_DIR) / "configs" / "toy.conf");
    const std::string text = canonical_text(c);
    PipelineConfig back = parse_config(text);
    CHECK(canonical_text(back) == text);
    CHECK(config_hash(back) == config_hash(c));
    CHECK(config_hash(c).size() == 16);
    back.seed += 1;
    CHECK(config_hash(back) != config_hash(c));
  }
}

TEST_CASE("stratified_split") {
  std::vector<int> labels;
  for (int i = 0; i < 100; ++i) labels.push_back(i < 60 ? 1 : 0);
  const auto a = stratified_split(labels, 0.7, 0.15, 3);
  CHECK(a == stratified_split(labels, 0.7, 0.15, 3));
  CHECK(a != stratified_split(labels, 0.7, 0.15, 4));
  std::map<std::pair<Split, int>, int> count;
  for (std::size_t i = 0; i < labels.size(); ++i) ++count[{a[i], labels[i]}];
  CHECK(count[{Split::train, 1}] == 42);
  CHECK(count[{Split::val, 1}] == 9);
  CHECK(count[{Split::test, 1}] == 9);
  CHECK(count[{Split::train, 0}] == 28);
  CHECK(count[{Split::val, 0}] == 6);
  CHECK(count[{Split::test, 0}] == 6);

  CHECK_THROWS_AS(stratified_split({0, 0, 1, 1}, 0.7, 0.15, 0), IngestError);
  CHECK_THROWS_AS(stratified_split({0, 2, 1}, 0.4, 0.3, 0), IngestError);
}

TEST_CASE("feature csv") {
  SUBCASE("twenty columns, exact round trip") {
    auto p = ctcn::testing::planted_problem(1, 30, 20, 30);
    FeatureSet set{{}, p.spec.train_y, p.spec.train_x};
    for (int i = 0; i < 30; ++i) set.ids.push_back(fmt::format("r{}", i));
    std::stringstream buf;
    write_feature_csv(buf, set);
    CHECK(buf.str().rfind("id,label,f0,f1,", 0) == 0);
    FeatureSet back = read_feature_csv(buf, "mem");
    CHECK(back.x.cols() == 20);
    CHECK(back.x == set.x);
    CHECK(back.ids == set.ids);
    CHECK(back.labels == set.labels);
  }
  SUBCASE("malformed input names source and line") {
    auto fails = [](const std::string& text) {
      std::istringstream in(text);
      return read_feature_csv(in, "bad.csv");
    };
    CHECK_THROWS_WITH_AS(fails("id,label,g0\na,1,2\n"), doctest::Contains("bad.csv"), IngestError);
    CHECK_THROWS_WITH_AS(fails("id,label,f0\na,1,2\nb,3,2\n"), doctest::Contains("bad.csv:3"), IngestError);
    CHECK_THROWS_WITH_AS(fails("id,label,f0,f1\na,1,2\n"), doctest::Contains("bad.csv:2"), IngestError);
    CHECK_THROWS_WITH_AS(fails("id,label,f0\na,0,x\n"), doctest::Contains("bad.csv:2"), IngestError);
    CHECK_THROWS_AS(fails(""), IngestError);
  }
}

TEST_CASE("scan_image_dir") {
  SUBCASE("C-NMC layout counts 12528 files") {
    const fs::path root = scratch("cnmc");
    for (auto [name, n] : {std::pair{"all", 8491}, std::pair{"hem", 4037}}) {
      fs::create_directories(root / name);
      for (int i = 0; i < n; ++i) std::ofstream(root / name / fmt::format("{:05}.bmp", i));
    }
    const auto refs = scan_image_dir(root, {{"all", 1}, {"hem", 0}});
    CHECK(refs.size() == 12528);
    CHECK(std::count_if(refs.begin(), refs.end(), [](const SampleRef& r) { return r.label == 1; }) == 8491);
    CHECK(refs.front().id == "all/00000.bmp");
    fs::remove_all(root);
  }
  SUBCASE("missing or empty class") {
    const fs::path root = scratch("missing");
    fs::create_directories(root / "hem");
    CHECK_THROWS_WITH_AS(scan_image_dir(root, {{"all", 1}, {"hem", 0}}), doctest::Contains("all"), IngestError);
    fs::create_directories(root / "all");
    std::ofstream(root / "all" / "x.png");
    CHECK_THROWS_WITH_AS(scan_image_dir(root, {{"all", 1}, {"hem", 0}}), doctest::Contains("hem"), IngestError);
    fs::remove_all(root);
  }
}

TEST_CASE("disabled stages are identity pass-throughs") {
  auto p = ctcn::testing::planted_problem(2, 90, 6, 60);
  FeatureSplits f;
  f[Split::train] = {std::vector<std::string>(60, "t"), p.spec.train_y, p.spec.train_x};
  f[Split::val] = {std::vector<std::string>(15, "v"), {}, p.spec.val_x.topRows(15)};
  f[Split::test] = {std::vector<std::string>(15, "x"), {}, p.spec.val_x.bottomRows(15)};
  f[Split::val].labels.assign(p.spec.val_y.begin(), p.spec.val_y.begin() + 15);
  f[Split::test].labels.assign(p.spec.val_y.begin() + 15, p.spec.val_y.end());
  PipelineConfig c;
  c.grafr = c.select = false;
  const FeatureSplits g = graph_stage(f, c);
  for (Split s : kSplits) CHECK(g[s].x == f[s].x);
  CHECK(select_stage(f, c).mask == Mask(6, true));
  CHECK(select_stage(f, c).trace.empty());

  SUBCASE("held-out rows never reach the training features") {
    c.grafr = true;
    FeatureSplits changed = f;
    changed[Split::test].x.setConstant(100.0);
    changed[Split::val].x.setConstant(-100.0);
    CHECK(graph_stage(f, c)[Split::train].x == graph_stage(changed, c)[Split::train].x);
    CHECK(graph_stage(f, c)[Split::test].x != graph_stage(changed, c)[Split::test].x);
  }
}

TEST_CASE("feature-csv pipeline") {
  const fs::path dir = scratch("features");
  const fs::path csv = planted_csv(dir, 5);

  SUBCASE("artifacts, report and determinism") {
    PipelineConfig c = small_feature_run(csv, dir / "a");
    RunArtifacts art = run_pipeline(c);
    for (const char* f : {"metrics.csv", "roc.csv", "fitness_trace.csv", "manifest.txt", "hdlc.ctcn", "mask.txt",
                          "features_train.csv", "grafr_test.csv", "predictions.csv"})
      CHECK_MESSAGE(fs::exists(c.out / f), f);
    CHECK_FALSE(fs::exists(c.out / "FAILED"));
    CHECK(art.test.metrics.accuracy > 0.7);
    CHECK(std::count(art.mask.begin(), art.mask.end(), true) >= 3);

    const std::string metrics = slurp(c.out / "metrics.csv");
    CHECK(metrics.rfind("metric,value\naccuracy,", 0) == 0);
    std::ostringstream summary;
    report(c.out, summary);
    CHECK(summary.str().find(fmt::format("accuracy {:.4f}\n", art.test.metrics.accuracy)) != std::string::npos);
    CHECK(summary.str().find(fmt::format("f1 {:.4f}\n", art.test.metrics.f1)) != std::string::npos);
    CHECK(summary.str().find("selected_features ") != std::string::npos);
    CHECK(summary.str().find("time select ") != std::string::npos);

    // The manifest is itself a config that reproduces the run.
    PipelineConfig again = load_config(c.out / "manifest.txt");
    CHECK(config_hash(again) == config_hash(c));
    again.out = dir / "b";
    run_pipeline(again);
    for (const char* f : {"metrics.csv", "roc.csv", "hdlc.ctcn", "mask.txt", "fitness_trace.csv"})
      CHECK_MESSAGE(slurp(c.out / f) == slurp(again.out / f), f);
  }
  SUBCASE("every toggle combination runs") {
    for (bool grafr : {false, true})
      for (bool select : {false, true}) {
        PipelineConfig c = small_feature_run(csv, dir / fmt::format("t{}{}", grafr, select));
        c.grafr = grafr;
        c.select = select;
        RunArtifacts art = run_pipeline(c);
        CHECK(art.test.metrics.accuracy > 0.7);
        if (!select) CHECK(art.mask == Mask(20, true));
      }
  }
  SUBCASE("a failing stage leaves a FAILED marker and report refuses") {
    std::ofstream(dir / "broken.csv") << "id,label,f0\na,0,1\nb,1,oops\n";
    PipelineConfig c = small_feature_run(dir / "broken.csv", dir / "failed");
    CHECK_THROWS_WITH_AS(run_pipeline(c), doctest::Contains("stage ingest"), StageError);
    const std::string marker = slurp(c.out / "FAILED");
    CHECK(marker.find("stage ingest") != std::string::npos);
    CHECK(marker.find("broken.csv:3") != std::string::npos);
    CHECK(fs::exists(c.out / "manifest.txt"));
    std::ostringstream sink;
    CHECK_THROWS_WITH_AS(report(c.out, sink), doctest::Contains("stage ingest"), ReportError);
  }
  SUBCASE("report on a missing run") {
    std::ostringstream sink;
    CHECK_THROWS_AS(report(dir / "nothing", sink), ReportError);
  }
  fs::remove_all(dir);
}
