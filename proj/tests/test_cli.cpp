#include "ctcn/dataset.hpp"
#include "ctcn/toy.hpp"
#include "planted.hpp"

#include <doctest.h>
#include <fmt/format.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace ctcn;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE_MESSAGE(in, path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// Runs the CLI with stdout captured to `log`; returns the exit status.
int run_cli(const std::string& args, const fs::path& log) {
  const int status = std::system(fmt::format("\"{}\" {} > \"{}\" 2>&1", CTCN_CLI, args, log.string()).c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

struct Workspace {
  fs::path dir = fs::temp_directory_path() / "ctcn_test_cli";
  fs::path config = dir / "run.conf";

  Workspace() {
    fs::remove_all(dir);
    fs::create_directories(dir);
    auto p = ctcn::testing::planted_problem(9, 200, 12, 200);
    FeatureSet set{{}, p.spec.train_y, p.spec.train_x};
    for (std::size_t i = 0; i < set.labels.size(); ++i) set.ids.push_back(fmt::format("s{}", i));
    save_feature_csv(dir / "data.csv", set);
    std::ofstream(config) << "dataset.path = data.csv\ndataset.format = feature-csv\n"
                             "sca.pop = 6\nsca.iters = 6\nabhc.iters = 6\nfitness.epochs = 50\n"
                             "hdlc.filters = 4\nhdlc.widths = 8, 8, 4, 4, 2, 1\nhdlc.epochs = 10\nhdlc.batch = 16\n";
  }
  ~Workspace() { fs::remove_all(dir); }
  std::string base(const std::string& out) const {
    return fmt::format("--config \"{}\" --out \"{}\"", config.string(), (dir / out).string());
  }
};

}  // namespace

TEST_CASE("staged subcommands reproduce the pipeline") {
  Workspace w;
  const fs::path log = w.dir / "log.txt";
  REQUIRE(run_cli(w.base("whole") + " pipeline", log) == 0);
  CHECK(slurp(log).find("accuracy ") != std::string::npos);
  for (const char* stage : {"extract", "graph", "select", "train", "eval"})
    REQUIRE_MESSAGE(run_cli(w.base("staged") + " " + stage, log) == 0, stage, ": ", slurp(log));
  for (const char* f : {"grafr_test.csv", "mask.txt", "fitness_trace.csv", "hdlc.ctcn", "metrics.csv", "roc.csv"})
    CHECK_MESSAGE(slurp(w.dir / "whole" / f) == slurp(w.dir / "staged" / f), f);

  CHECK(run_cli("--out \"" + (w.dir / "whole").string() + "\" report", log) == 0);
  CHECK(slurp(log).rfind("metric", 0) == 0);
}

TEST_CASE("staged image run, starting from preprocess") {
  Workspace w;
  write_blob_dataset(w.dir / "images", 18, 18, 3, 16);
  std::ofstream(w.config) << "dataset.path = images\ndataset.classes = hem:0, all:1\n"
                             "image.size = 16\nclahe.tiles_y = 2\nclahe.tiles_x = 2\n"
                             "gmod.patch = 8\ngmod.dim = 8\ngmod.depth = 1\ngmod.heads = 2\ngmod.mlp = 8\n"
                             "smod.filters = 4, 4\nextractor.epochs = 1\n"
                             "sca.pop = 4\nsca.iters = 3\nabhc.iters = 3\nfitness.epochs = 20\n"
                             "hdlc.filters = 2\nhdlc.widths = 4, 4, 4, 2, 2, 1\nhdlc.epochs = 3\n";
  const fs::path log = w.dir / "log.txt";
  REQUIRE_MESSAGE(run_cli(w.base("whole") + " pipeline", log) == 0, slurp(log));
  for (const char* stage : {"preprocess", "extract", "graph", "select", "train", "eval"})
    REQUIRE_MESSAGE(run_cli(w.base("staged") + " " + stage, log) == 0, stage, ": ", slurp(log));
  CHECK(fs::exists(w.dir / "staged" / "preprocessed" / "index.csv"));
  for (const char* f : {"extractor.ctcn", "features_test.csv", "mask.txt", "hdlc.ctcn", "metrics.csv", "roc.csv"})
    CHECK_MESSAGE(slurp(w.dir / "whole" / f) == slurp(w.dir / "staged" / f), f);
}

TEST_CASE("overrides, errors and exit codes") {
  Workspace w;
  const fs::path log = w.dir / "log.txt";
  SUBCASE("overrides reach the manifest") {
    REQUIRE(run_cli(w.base("o") + " --seed 4 --pop 5 --set stage.grafr=false pipeline", log) == 0);
    const std::string manifest = slurp(w.dir / "o" / "manifest.txt");
    CHECK(manifest.find("\nseed = 4\n") != std::string::npos);
    CHECK(manifest.find("\nsca.pop = 5\n") != std::string::npos);
    CHECK(manifest.find("\nstage.grafr = false\n") != std::string::npos);
    CHECK_FALSE(fs::exists(w.dir / "o" / "grafr_test.csv"));
  }
  SUBCASE("configuration errors exit with 2") {
    CHECK(run_cli(w.base("e") + " --set nope=1 pipeline", log) == 2);
    CHECK(slurp(log).find("nope") != std::string::npos);
    CHECK(run_cli("--config \"" + (w.dir / "absent.conf").string() + "\" pipeline", log) == 2);
  }
  SUBCASE("a stage failure exits with 1 and report names the stage") {
    std::ofstream(w.dir / "data.csv") << "id,label,f0\na,0,1\n";
    CHECK(run_cli(w.base("f") + " pipeline", log) == 1);
    CHECK(fs::exists(w.dir / "f" / "FAILED"));
    CHECK(run_cli("--out \"" + (w.dir / "f").string() + "\" report", log) != 0);
    CHECK(slurp(log).find("stage ingest") != std::string::npos);
  }
}
