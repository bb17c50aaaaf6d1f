#pragma once

#include "ctcn/config.hpp"
#include "ctcn/dataset.hpp"
#include "ctcn/extractor.hpp"
#include "ctcn/hdlc.hpp"
#include "ctcn/metrics.hpp"
#include "ctcn/selector.hpp"

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace ctcn {

/// A stage failure; what() reads "stage <name>: <cause>".
class StageError : public std::runtime_error {
 public:
  StageError(std::string stage, const std::string& cause);
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

class ReportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct StageTiming {
  std::string stage;
  double seconds = 0.0;
};

/// Stage A on one image: grayscale when the model is single-channel, then
/// CLAHE + sharpen when enhancement is on, then resize to image.size.
Image preprocess_image(const Image& image, const PipelineConfig& config);

/// Stage A over every split, then stage B (augment_balance) on train only.
void preprocess_splits(ImageSplits& splits, const PipelineConfig& config);

struct ExtractionOutcome {
  FeatureSplits features;  // columns: global then spatial
  Extractor extractor;
  std::vector<double> loss;
};

/// Stage C feature extraction. The extractor is initialized from
/// Rng(seed).derive("extractor") and trained on the train split only.
ExtractionOutcome extract_stage(const ImageSplits& splits, const PipelineConfig& config);

/// Stage C graph reconstruction over the training rows; validation and test
/// rows are reconstructed against the training nodes. Identity when
/// stage.grafr is off.
FeatureSplits graph_stage(const FeatureSplits& features, const PipelineConfig& config);

/// Similarity scores and hidden set of the training graph. Quadratic in the
/// number of training rows.
GrafrResult graph_diagnostics(const FeatureSet& train, const PipelineConfig& config);

struct SelectionOutcome {
  Mask mask;
  std::vector<TraceRow> trace;  // SCA rows, then AbHC rows
};

/// Stage D on train-standardized features: sca_run then abhc_refine, with
/// fitness trained on train and scored on val. When the result keeps fewer
/// than 3 columns, the highest SCA positions are added until 3 are kept.
/// All columns are kept when stage.select is off.
SelectionOutcome select_stage(const FeatureSplits& features, const PipelineConfig& config);

/// Stage E training: scaler fitted on train, selected columns, HDLC trained on train.
Classifier train_stage(const FeatureSet& train, const Mask& mask, const PipelineConfig& config,
                       std::vector<double>* loss = nullptr);

struct Evaluation {
  std::vector<double> probabilities;
  Metrics metrics;
  RocCurve roc;
};

Evaluation evaluate(const Classifier& classifier, const FeatureSet& test, double threshold);

struct RunArtifacts {
  std::filesystem::path dir;
  Mask mask;
  Evaluation test;
  std::vector<StageTiming> timings;
};

/// Every enabled stage in order, writing all artifacts under config.out. On a
/// stage failure a FAILED marker naming the stage is written and StageError
/// is thrown.
RunArtifacts run_pipeline(const PipelineConfig& config);

/// The stages after extraction, starting from already-extracted features.
RunArtifacts run_from_features(const PipelineConfig& config, const FeatureSplits& extracted,
                               std::vector<StageTiming> timings = {});

/// Artifact writers shared by the pipeline and the per-stage subcommands.
void save_mask(const std::filesystem::path& path, const Mask& mask);
Mask load_mask(const std::filesystem::path& path);
void save_splits(const std::filesystem::path& dir, const std::string& stem, const FeatureSplits& splits);
FeatureSplits load_splits(const std::filesystem::path& dir, const std::string& stem);
void save_evaluation(const std::filesystem::path& dir, const FeatureSet& test, const Evaluation& eval);
void write_manifest(const std::filesystem::path& dir, const PipelineConfig& config,
                    const std::vector<StageTiming>& timings, const std::vector<std::string>& notes);
void write_failure(const std::filesystem::path& dir, const StageError& error);

/// Runs `body` as stage `name`: records its wall time and wraps any exception
/// in a StageError.
template <typename F>
auto timed_stage(const std::string& name, std::vector<StageTiming>& timings, F&& body) -> decltype(body());

/// Human-readable summary of a finished run directory. Throws ReportError
/// when the run failed or artifacts are missing.
void report(const std::filesystem::path& dir, std::ostream& out);

}  // namespace ctcn

#include <chrono>

namespace ctcn {

template <typename F>
auto timed_stage(const std::string& name, std::vector<StageTiming>& timings, F&& body) -> decltype(body()) {
  const auto start = std::chrono::steady_clock::now();
  auto finish = [&] {
    timings.push_back({name, std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count()});
  };
  try {
    if constexpr (std::is_void_v<decltype(body())>) {
      body();
      finish();
    } else {
      auto result = body();
      finish();
      return result;
    }
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, e.what());
  }
}

}  // namespace ctcn
