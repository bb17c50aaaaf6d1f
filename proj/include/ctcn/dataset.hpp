#pragma once

#include "ctcn/config.hpp"
#include "ctcn/grafr.hpp"
#include "ctcn/preprocess.hpp"

#include <array>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

namespace ctcn {

class IngestError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Split { train = 0, val = 1, test = 2 };
inline constexpr std::array<Split, 3> kSplits{Split::train, Split::val, Split::test};
const char* split_name(Split s);

/// One file of an image-dir dataset; id is "<class>/<file name>".
struct SampleRef {
  std::string id;
  std::filesystem::path path;
  int label = 0;
};

/// Files of every configured class directory, classes in name order and files
/// in name order. A missing class directory or an empty class is an IngestError.
std::vector<SampleRef> scan_image_dir(const std::filesystem::path& root, const std::map<std::string, int>& classes);

/// Stratified assignment: per label, indices are shuffled with
/// Rng(seed).derive("split", label) and the first round(n * train) go to
/// train, the next round(n * val) to val, the rest to test. Every split must
/// receive at least one sample of each label.
std::vector<Split> stratified_split(const std::vector<int>& labels, double train, double val, std::uint64_t seed);

struct ImageSplits {
  std::array<std::vector<LabeledImage>, 3> parts;
  std::vector<LabeledImage>& operator[](Split s) { return parts[static_cast<std::size_t>(s)]; }
  const std::vector<LabeledImage>& operator[](Split s) const { return parts[static_cast<std::size_t>(s)]; }
};

/// Scans, splits and decodes an image-dir dataset. Within a split, samples
/// keep scan order.
ImageSplits ingest_images(const PipelineConfig& config);

struct FeatureSet {
  std::vector<std::string> ids;
  std::vector<int> labels;
  FeatureMatrix x;
};

struct FeatureSplits {
  std::array<FeatureSet, 3> parts;
  FeatureSet& operator[](Split s) { return parts[static_cast<std::size_t>(s)]; }
  const FeatureSet& operator[](Split s) const { return parts[static_cast<std::size_t>(s)]; }
};

/// Header `id,label,f0,...,f{d-1}`; labels 0 or 1. Errors name the source and line.
FeatureSet read_feature_csv(std::istream& in, const std::string& source);
FeatureSet load_feature_csv(const std::filesystem::path& path);
/// Values use the shortest representation that reads back exactly.
void write_feature_csv(std::ostream& out, const FeatureSet& set);
void save_feature_csv(const std::filesystem::path& path, const FeatureSet& set);

/// Reads a feature-csv dataset and splits it like ingest_images.
FeatureSplits ingest_features(const PipelineConfig& config);

FeatureSet subset(const FeatureSet& set, const std::vector<std::size_t>& rows);

}  // namespace ctcn
