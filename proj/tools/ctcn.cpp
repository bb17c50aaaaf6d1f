#include "ctcn/pipeline.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

namespace fs = std::filesystem;
using namespace ctcn;

namespace {

struct Options {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::vector<std::string> settings;
  std::optional<std::size_t> pop, iters, abhc_iters;
  std::optional<double> alpha, abhc_p, beta_min, beta_max, lambda, threshold;
  bool diagnostics = false;
};

PipelineConfig resolve(const Options& o) {
  PipelineConfig c = o.config_path.empty() ? parse_config("") : load_config(o.config_path);
  auto set = [&](const char* key, const auto& value) {
    if (value) apply_setting(c, key, fmt::format("{}", *value));
  };
  set("seed", o.seed);
  set("sca.pop", o.pop);
  set("sca.iters", o.iters);
  set("sca.alpha", o.alpha);
  set("abhc.iters", o.abhc_iters);
  set("abhc.p", o.abhc_p);
  set("abhc.beta_min", o.beta_min);
  set("abhc.beta_max", o.beta_max);
  set("fitness.lambda", o.lambda);
  set("hdlc.threshold", o.threshold);
  if (!o.out.empty()) c.out = o.out;
  for (const auto& kv : o.settings) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError(fmt::format("--set expects key=value, got '{}'", kv));
    apply_setting(c, kv.substr(0, eq), kv.substr(eq + 1));
  }
  c.validate();
  fs::create_directories(c.out);
  return c;
}

std::string stem(const PipelineConfig& c) { return c.grafr ? "grafr" : "features"; }

void write_index(const fs::path& dir, const ImageSplits& splits) {
  fs::create_directories(dir);
  std::ofstream index(dir / "index.csv", std::ios::binary);
  if (!index) throw std::runtime_error(fmt::format("cannot write {}", (dir / "index.csv").string()));
  index << "file,id,label,split\n";
  for (Split s : kSplits) {
    fs::create_directories(dir / split_name(s));
    for (std::size_t i = 0; i < splits[s].size(); ++i) {
      const auto file = fmt::format("{}/{:05}.png", split_name(s), i);
      write_png(dir / file, splits[s][i].image);
      index << fmt::format("{},{},{},{}\n", file, splits[s][i].id, splits[s][i].label, split_name(s));
    }
  }
}

ImageSplits read_index(const fs::path& dir) {
  std::ifstream index(dir / "index.csv");
  if (!index) throw IngestError(fmt::format("{} not found; run `ctcn preprocess` first", (dir / "index.csv").string()));
  ImageSplits out;
  std::string line;
  std::getline(index, line);
  while (std::getline(index, line)) {
    std::stringstream row(line);
    std::string file, id, label, split;
    std::getline(row, file, ',');
    std::getline(row, id, ',');
    std::getline(row, label, ',');
    std::getline(row, split, ',');
    const Split s = split == "train" ? Split::train : split == "val" ? Split::val : Split::test;
    out[s].push_back({id, read_image(dir / file), label == "1" ? 1 : 0});
  }
  return out;
}

// Runs one subcommand as a named stage; failures leave a FAILED marker.
int run_stage(const Options& o, const std::string& name, const std::function<void(const PipelineConfig&)>& body) {
  PipelineConfig config;
  try {
    config = resolve(o);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  std::vector<StageTiming> timings;
  try {
    fs::remove(config.out / "FAILED");
    timed_stage(name, timings, [&] { body(config); });
    return 0;
  } catch (const StageError& e) {
    write_failure(config.out, e);
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Leukemia detection pipeline: enhancement, transformer and convolutional features, "
               "graph reconstruction, metaheuristic feature selection, classification."};
  app.require_subcommand(1);
  Options o;
  app.add_option("--config", o.config_path, "Configuration file (key = value lines)");
  app.add_option("--seed", o.seed, "Root random seed");
  app.add_option("--out", o.out, "Output directory");
  app.add_option("--set", o.settings, "Override one configuration key: key=value");
  app.add_option("--pop", o.pop, "SCA population size");
  app.add_option("--iters", o.iters, "SCA iterations");
  app.add_option("--alpha", o.alpha, "SCA r1 amplitude");
  app.add_option("--abhc-iters", o.abhc_iters, "Hill-climbing iterations");
  app.add_option("--abhc-p", o.abhc_p, "Hill-climbing N schedule exponent");
  app.add_option("--beta-min", o.beta_min, "Hill-climbing minimum beta");
  app.add_option("--beta-max", o.beta_max, "Hill-climbing maximum beta");
  app.add_option("--lambda", o.lambda, "Fitness sparsity weight");
  app.add_option("--threshold", o.threshold, "Classification threshold");
  app.fallthrough();

  int status = 0;
  app.add_subcommand("preprocess", "Ingest, split, enhance, resize and balance the image dataset")->callback([&] {
    status = run_stage(o, "preprocess", [](const PipelineConfig& c) {
      ImageSplits splits = ingest_images(c);
      preprocess_splits(splits, c);
      if (c.augment) splits[Split::train] = augment_balance(splits[Split::train], Rng(c.seed).derive("augment"));
      write_index(c.out / "preprocessed", splits);
    });
  });
  app.add_subcommand("extract", "Train the feature extractor and write per-split feature CSVs")->callback([&] {
    status = run_stage(o, "extract", [](const PipelineConfig& c) {
      if (c.format == DatasetFormat::feature_csv) {
        save_splits(c.out, "features", ingest_features(c));
        return;
      }
      ExtractionOutcome e = extract_stage(read_index(c.out / "preprocessed"), c);
      save_container(c.out / "extractor.ctcn", e.extractor.named());
      save_splits(c.out, "features", e.features);
    });
  });
  auto* graph = app.add_subcommand("graph", "Graph-based feature reconstruction");
  graph->add_flag("--diagnostics", o.diagnostics, "Also write grafr_diagnostics.csv");
  graph->callback([&] {
    status = run_stage(o, "graph", [&](const PipelineConfig& c) {
      if (!c.grafr) throw ConfigError("stage.grafr is off");
      const FeatureSplits f = load_splits(c.out, "features");
      save_splits(c.out, "grafr", graph_stage(f, c));
      if (o.diagnostics) {
        std::ofstream out(c.out / "grafr_diagnostics.csv", std::ios::binary);
        write_grafr_diagnostics(out, graph_diagnostics(f[Split::train], c));
      }
    });
  });
  app.add_subcommand("select", "SCA + adaptive beta hill climbing feature selection")->callback([&] {
    status = run_stage(o, "select", [](const PipelineConfig& c) {
      const SelectionOutcome s = select_stage(load_splits(c.out, stem(c)), c);
      save_mask(c.out / "mask.txt", s.mask);
      std::ofstream out(c.out / "fitness_trace.csv", std::ios::binary);
      write_trace_csv(out, s.trace);
    });
  });
  app.add_subcommand("train", "Train the classifier on the selected features")->callback([&] {
    status = run_stage(o, "train", [](const PipelineConfig& c) {
      const FeatureSplits f = load_splits(c.out, stem(c));
      save_container(c.out / "hdlc.ctcn", train_stage(f[Split::train], load_mask(c.out / "mask.txt"), c).named());
    });
  });
  app.add_subcommand("eval", "Score the held-out split and write metrics.csv and roc.csv")->callback([&] {
    status = run_stage(o, "eval", [](const PipelineConfig& c) {
      const FeatureSplits f = load_splits(c.out, stem(c));
      const Classifier model = Classifier::from_records(load_container(c.out / "hdlc.ctcn"));
      save_evaluation(c.out, f[Split::test], evaluate(model, f[Split::test], c.threshold));
    });
  });
  app.add_subcommand("pipeline", "Run every enabled stage end to end")->callback([&] {
    PipelineConfig config;
    try {
      config = resolve(o);
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << '\n';
      status = 2;
      return;
    }
    try {
      run_pipeline(config);
      report(config.out, std::cout);
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << '\n';
      status = 1;
    }
  });
  app.add_subcommand("report", "Summarize a finished run directory")->callback([&] {
    try {
      report(o.out.empty() ? fs::path("run") : fs::path(o.out), std::cout);
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << '\n';
      status = 1;
    }
  });

  CLI11_PARSE(app, argc, argv);
  return status;
}
