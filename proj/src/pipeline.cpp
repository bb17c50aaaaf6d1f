#include "ctcn/pipeline.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>

namespace ctcn {

namespace fs = std::filesystem;

StageError::StageError(std::string stage, const std::string& cause)
    : std::runtime_error(fmt::format("stage {}: {}", stage, cause)), stage_(std::move(stage)) {}

namespace {

void log(const std::string& stage, const std::string& message) { fmt::print(stderr, "[{}] {}\n", stage, message); }

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error(fmt::format("cannot write {}", path.string()));
  return out;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ReportError(fmt::format("missing artifact {}", path.string()));
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::string class_counts(const std::vector<int>& labels) {
  const auto ones = std::count(labels.begin(), labels.end(), 1);
  return fmt::format("{} label0 / {} label1", static_cast<long>(labels.size()) - ones, ones);
}

std::vector<int> labels_of(const std::vector<LabeledImage>& images) {
  std::vector<int> out;
  for (const auto& i : images) out.push_back(i.label);
  return out;
}

void write_loss(const fs::path& path, const std::vector<double>& loss) {
  auto out = open_out(path);
  out << "epoch,loss\n";
  for (std::size_t e = 0; e < loss.size(); ++e) out << fmt::format("{},{}\n", e, loss[e]);
}

}  // namespace

Image preprocess_image(const Image& image, const PipelineConfig& config) {
  Image img = config.gmod.channels == 1 && image.channels == 3 ? to_grayscale(image) : image;
  if (config.enhance) img = sharpen(clahe(img, config.clahe));
  if (img.height != config.image_size || img.width != config.image_size)
    img = resize(img, config.image_size, config.image_size);
  return img;
}

void preprocess_splits(ImageSplits& splits, const PipelineConfig& config) {
  for (Split s : kSplits)
    for (auto& sample : splits[s]) sample.image = preprocess_image(sample.image, config);
}

ExtractionOutcome extract_stage(const ImageSplits& splits, const PipelineConfig& config) {
  Rng root = Rng(config.seed).derive("extractor");
  ExtractionOutcome out{{}, Extractor::init(config.gmod, config.smod, root), {}};
  Rng train_rng = root.derive("train");
  out.loss = train_extractor(out.extractor, splits[Split::train], config.extractor, train_rng);
  for (Split s : kSplits) {
    const auto& data = splits[s];
    ExtractedFeatures f = extract_features(out.extractor, data);
    FeatureSet& set = out.features[s];
    set.x.resize(f.global.rows(), f.global.cols() + f.spatial.cols());
    set.x << f.global, f.spatial;
    for (const auto& d : data) {
      set.ids.push_back(d.id);
      set.labels.push_back(d.label);
    }
  }
  return out;
}

FeatureSplits graph_stage(const FeatureSplits& features, const PipelineConfig& config) {
  if (!config.grafr) return features;
  // Training rows form the graph; held-out rows join it as query nodes, so
  // they never influence each other or the training features.
  const FeatureMatrix& train = features[Split::train].x;
  FeatureSplits out = features;
  out[Split::train].x = reconstruct_against(train, train, true);
  for (Split s : {Split::val, Split::test}) out[s].x = reconstruct_against(train, features[s].x, false);
  return out;
}

GrafrResult graph_diagnostics(const FeatureSet& train, const PipelineConfig& config) {
  const FeatureMatrix none(train.x.rows(), 0);
  return grafr_apply(train.x, none, std::min<std::size_t>(config.grafr_hidden, static_cast<std::size_t>(train.x.rows())));
}

SelectionOutcome select_stage(const FeatureSplits& features, const PipelineConfig& config) {
  const auto d = static_cast<std::size_t>(features[Split::train].x.cols());
  if (!config.select) return {Mask(d, true), {}};
  const FeatureScaler scaler = FeatureScaler::fit(features[Split::train].x);
  FitnessSpec spec;
  spec.train_x = scaler.apply(features[Split::train].x);
  spec.train_y = features[Split::train].labels;
  spec.val_x = scaler.apply(features[Split::val].x);
  spec.val_y = features[Split::val].labels;
  spec.lambda = config.lambda;
  spec.epochs = config.fitness_epochs;
  spec.learning_rate = config.fitness_learning_rate;
  const Objective objective = mask_objective(spec);

  SCAConfig sca = config.sca;
  sca.seed = Rng(config.seed).derive("select").seed();
  SearchResult global = sca_run(objective, d, sca);
  Rng rng = Rng(config.seed).derive("abhc");
  SearchResult local = abhc_refine(global.best, objective, config.abhc, rng, sca.iterations);

  SelectionOutcome out{local.best.mask, global.trace};
  out.trace.insert(out.trace.end(), local.trace.begin(), local.trace.end());
  const std::size_t need = std::min<std::size_t>(3, d);
  std::vector<std::size_t> order(d);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return local.best.position[static_cast<Eigen::Index>(a)] > local.best.position[static_cast<Eigen::Index>(b)];
  });
  for (std::size_t j : order) {
    if (static_cast<std::size_t>(std::count(out.mask.begin(), out.mask.end(), true)) >= need) break;
    out.mask[j] = true;
  }
  return out;
}

Classifier train_stage(const FeatureSet& train, const Mask& mask, const PipelineConfig& config,
                       std::vector<double>* loss) {
  Classifier c;
  c.scaler = FeatureScaler::fit(train.x);
  c.mask = mask;
  const FeatureMatrix x = select_columns(c.scaler.apply(train.x), mask);
  const Rng root = Rng(config.seed).derive("hdlc");
  Rng init = root.derive("init"), rng = root.derive("train");
  c.model = HDLCParams::init(static_cast<std::size_t>(x.cols()), config.hdlc, init);
  auto trace = train_hdlc(c.model, x, train.labels, config.train, rng);
  if (loss) *loss = std::move(trace);
  return c;
}

Evaluation evaluate(const Classifier& classifier, const FeatureSet& test, double threshold) {
  Evaluation e;
  e.probabilities = classifier.predict(test.x);
  e.metrics = metrics(confusion(e.probabilities, test.labels, threshold));
  e.roc = roc_auc(e.probabilities, test.labels);
  return e;
}

void save_mask(const fs::path& path, const Mask& mask) {
  auto out = open_out(path);
  for (bool b : mask) out << (b ? '1' : '0');
  out << '\n';
}

Mask load_mask(const fs::path& path) {
  std::ifstream in(path);
  std::string line;
  if (!in || !std::getline(in, line)) throw std::runtime_error(fmt::format("cannot read mask {}", path.string()));
  Mask mask;
  for (char c : line) {
    if (c != '0' && c != '1') throw std::runtime_error(fmt::format("{}: mask must contain only 0 and 1", path.string()));
    mask.push_back(c == '1');
  }
  return mask;
}

void save_splits(const fs::path& dir, const std::string& stem, const FeatureSplits& splits) {
  for (Split s : kSplits) save_feature_csv(dir / fmt::format("{}_{}.csv", stem, split_name(s)), splits[s]);
}

FeatureSplits load_splits(const fs::path& dir, const std::string& stem) {
  FeatureSplits out;
  for (Split s : kSplits) out[s] = load_feature_csv(dir / fmt::format("{}_{}.csv", stem, split_name(s)));
  return out;
}

void save_evaluation(const fs::path& dir, const FeatureSet& test, const Evaluation& eval) {
  {
    auto out = open_out(dir / "metrics.csv");
    write_metrics_csv(out, eval.metrics, eval.roc.auc);
  }
  {
    auto out = open_out(dir / "roc.csv");
    write_roc_csv(out, eval.roc);
  }
  auto out = open_out(dir / "predictions.csv");
  out << "id,label,probability\n";
  for (std::size_t i = 0; i < test.ids.size(); ++i)
    out << fmt::format("{},{},{}\n", test.ids[i], test.labels[i], eval.probabilities[i]);
}

void write_manifest(const fs::path& dir, const PipelineConfig& config, const std::vector<StageTiming>& timings,
                    const std::vector<std::string>& notes) {
  auto out = open_out(dir / "manifest.txt");
  out << "# Run manifest. The uncommented lines are the complete configuration;\n"
         "# `ctcn pipeline --config manifest.txt` repeats the run.\n";
  out << fmt::format("# config_hash = {}\n", config_hash(config));
  for (const auto& n : notes) out << "# " << n << '\n';
  for (const auto& t : timings) out << fmt::format("# timing.{} = {:.3f}\n", t.stage, t.seconds);
  out << canonical_text(config);
}

void write_failure(const fs::path& dir, const StageError& error) {
  auto out = open_out(dir / "FAILED");
  out << "stage " << error.stage() << '\n' << "cause " << error.what() << '\n';
}

namespace {

RunArtifacts downstream(const PipelineConfig& config, const FeatureSplits& extracted, std::vector<StageTiming>& timings,
                        std::vector<std::string>& notes) {
  const fs::path& dir = config.out;
  RunArtifacts art;
  art.dir = dir;
  const FeatureSplits features = timed_stage("graph", timings, [&] {
    auto f = graph_stage(extracted, config);
    if (config.grafr) save_splits(dir, "grafr", f);
    return f;
  });
  const SelectionOutcome selection = timed_stage("select", timings, [&] {
    auto s = select_stage(features, config);
    save_mask(dir / "mask.txt", s.mask);
    auto out = open_out(dir / "fitness_trace.csv");
    write_trace_csv(out, s.trace);
    return s;
  });
  art.mask = selection.mask;
  const auto selected = std::count(art.mask.begin(), art.mask.end(), true);
  notes.push_back(fmt::format("selected = {} of {}", selected, art.mask.size()));
  log("select", fmt::format("{} of {} features kept", selected, art.mask.size()));

  const Classifier classifier = timed_stage("train", timings, [&] {
    std::vector<double> loss;
    auto c = train_stage(features[Split::train], selection.mask, config, &loss);
    save_container(dir / "hdlc.ctcn", c.named());
    write_loss(dir / "hdlc_loss.csv", loss);
    return c;
  });
  art.test = timed_stage("eval", timings, [&] {
    auto e = evaluate(classifier, features[Split::test], config.threshold);
    save_evaluation(dir, features[Split::test], e);
    return e;
  });
  log("eval", fmt::format("test accuracy {:.4f}, F1 {:.4f}, AUC {:.4f}", art.test.metrics.accuracy,
                          art.test.metrics.f1, art.test.roc.auc));
  art.timings = timings;
  return art;
}

template <typename F>
auto guarded(const PipelineConfig& config, std::vector<StageTiming>& timings, std::vector<std::string>& notes, F&& body)
    -> decltype(body()) {
  try {
    return body();
  } catch (const StageError& e) {
    write_failure(config.out, e);
    notes.push_back(fmt::format("status = failed in stage {}", e.stage()));
    write_manifest(config.out, config, timings, notes);
    log(e.stage(), fmt::format("FAILED: {}", e.what()));
    throw;
  }
}

}  // namespace

RunArtifacts run_from_features(const PipelineConfig& config, const FeatureSplits& extracted,
                               std::vector<StageTiming> timings) {
  fs::create_directories(config.out);
  fs::remove(config.out / "FAILED");
  std::vector<std::string> notes;
  auto art = guarded(config, timings, notes, [&] { return downstream(config, extracted, timings, notes); });
  notes.push_back("status = ok");
  write_manifest(config.out, config, art.timings, notes);
  return art;
}

RunArtifacts run_pipeline(const PipelineConfig& config) {
  fs::create_directories(config.out);
  fs::remove(config.out / "FAILED");
  std::vector<StageTiming> timings;
  std::vector<std::string> notes;
  const fs::path& dir = config.out;

  auto art = guarded(config, timings, notes, [&] {
    timed_stage("config", timings, [&] { config.validate(); });
    FeatureSplits extracted;
    if (config.format == DatasetFormat::feature_csv) {
      extracted = timed_stage("ingest", timings, [&] { return ingest_features(config); });
    } else {
      ImageSplits splits = timed_stage("ingest", timings, [&] { return ingest_images(config); });
      timed_stage("preprocess", timings, [&] { preprocess_splits(splits, config); });
      if (config.augment)
        timed_stage("augment", timings, [&] {
          splits[Split::train] = augment_balance(splits[Split::train], Rng(config.seed).derive("augment"));
        });
      for (Split s : kSplits) {
        const auto counts = class_counts(labels_of(splits[s]));
        notes.push_back(fmt::format("count.{} = {}", split_name(s), counts));
        log("ingest", fmt::format("{}: {}", split_name(s), counts));
      }
      ExtractionOutcome ex = timed_stage("extract", timings, [&] {
        auto e = extract_stage(splits, config);
        save_container(dir / "extractor.ctcn", e.extractor.named());
        write_loss(dir / "extractor_loss.csv", e.loss);
        return e;
      });
      extracted = std::move(ex.features);
    }
    save_splits(dir, "features", extracted);
    return downstream(config, extracted, timings, notes);
  });
  notes.push_back("status = ok");
  write_manifest(dir, config, art.timings, notes);
  return art;
}

void report(const fs::path& dir, std::ostream& out) {
  if (fs::exists(dir / "FAILED")) {
    std::istringstream in(read_text(dir / "FAILED"));
    std::string line, stage = "unknown", cause;
    while (std::getline(in, line)) {
      if (line.rfind("stage ", 0) == 0) stage = line.substr(6);
      if (line.rfind("cause ", 0) == 0) cause = line.substr(6);
    }
    throw ReportError(fmt::format("run failed in stage {}: {}", stage, cause));
  }
  std::istringstream metrics_in(read_text(dir / "metrics.csv"));
  std::string line;
  std::getline(metrics_in, line);
  if (line != "metric,value") throw ReportError("metrics.csv: unexpected header");
  out << "metric     value\n";
  while (std::getline(metrics_in, line)) {
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw ReportError(fmt::format("metrics.csv: malformed row '{}'", line));
    double v = 0;
    const std::string text = line.substr(comma + 1);
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc()) throw ReportError(fmt::format("metrics.csv: malformed value '{}'", text));
    out << fmt::format("{} {:.4f}\n", line.substr(0, comma), v);
  }
  const Mask mask = [&] {
    try {
      return load_mask(dir / "mask.txt");
    } catch (const std::exception& e) {
      throw ReportError(e.what());
    }
  }();
  out << fmt::format("selected_features {} of {}\n", std::count(mask.begin(), mask.end(), true), mask.size());
  std::istringstream manifest(read_text(dir / "manifest.txt"));
  while (std::getline(manifest, line))
    if (line.rfind("# timing.", 0) == 0) {
      const auto eq = line.find(" = ");
      out << fmt::format("time {} {} s\n", line.substr(9, eq - 9), line.substr(eq + 3));
    }
}

}  // namespace ctcn
