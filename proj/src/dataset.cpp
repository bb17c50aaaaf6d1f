#include "ctcn/dataset.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace ctcn {

namespace fs = std::filesystem;

const char* split_name(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "?";
}

std::vector<SampleRef> scan_image_dir(const fs::path& root, const std::map<std::string, int>& classes) {
  if (!fs::is_directory(root)) throw IngestError(fmt::format("ingest: dataset directory {} not found", root.string()));
  std::vector<SampleRef> out;
  for (const auto& [name, label] : classes) {
    const fs::path dir = root / name;
    if (!fs::is_directory(dir)) throw IngestError(fmt::format("ingest: class directory '{}' missing under {}", name, root.string()));
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir))
      if (entry.is_regular_file()) files.push_back(entry.path());
    if (files.empty()) throw IngestError(fmt::format("ingest: class '{}' has no files", name));
    std::sort(files.begin(), files.end());
    for (auto& f : files) out.push_back({name + "/" + f.filename().string(), f, label});
  }
  return out;
}

std::vector<Split> stratified_split(const std::vector<int>& labels, double train, double val, std::uint64_t seed) {
  for (int l : labels)
    if (l != 0 && l != 1) throw IngestError(fmt::format("split: label {} is not 0 or 1", l));
  std::vector<Split> out(labels.size(), Split::test);
  const Rng root(seed);
  for (int label : {0, 1}) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] == label) idx.push_back(i);
    Rng rng = root.derive("split", static_cast<std::uint64_t>(label));
    for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[rng.index(i)]);
    const double n = static_cast<double>(idx.size());
    const auto n_train = static_cast<std::size_t>(std::llround(n * train));
    const auto n_val = static_cast<std::size_t>(std::llround(n * val));
    if (n_train == 0 || n_val == 0 || n_train + n_val >= idx.size())
      throw IngestError(fmt::format("split: label {} has {} samples, too few for train/val/test", label, idx.size()));
    for (std::size_t k = 0; k < idx.size(); ++k)
      out[idx[k]] = k < n_train ? Split::train : k < n_train + n_val ? Split::val : Split::test;
  }
  return out;
}

ImageSplits ingest_images(const PipelineConfig& config) {
  const auto refs = scan_image_dir(config.dataset_path, config.classes);
  std::vector<int> labels;
  for (const auto& r : refs) labels.push_back(r.label);
  const auto tags = stratified_split(labels, config.split_train, config.split_val, config.split_seed);
  ImageSplits out;
  for (std::size_t i = 0; i < refs.size(); ++i) {
    Image img;
    try {
      img = read_image(refs[i].path);
    } catch (const std::exception& e) {
      throw IngestError(fmt::format("ingest: cannot read {}: {}", refs[i].path.string(), e.what()));
    }
    out[tags[i]].push_back({refs[i].id, std::move(img), refs[i].label});
  }
  return out;
}

FeatureSet read_feature_csv(std::istream& in, const std::string& source) {
  std::string line;
  if (!std::getline(in, line)) throw IngestError(fmt::format("{}: empty feature file", source));
  std::vector<std::string> header;
  {
    std::stringstream s(line);
    for (std::string cell; std::getline(s, cell, ',');) header.push_back(cell);
  }
  if (header.size() < 3 || header[0] != "id" || header[1] != "label")
    throw IngestError(fmt::format("{}:1: header must be id,label,f0,...", source));
  const std::size_t d = header.size() - 2;
  for (std::size_t j = 0; j < d; ++j)
    if (header[j + 2] != fmt::format("f{}", j))
      throw IngestError(fmt::format("{}:1: column {} must be f{}, got '{}'", source, j + 2, j, header[j + 2]));

  FeatureSet set;
  std::vector<double> values;
  std::size_t number = 1;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream s(line);
    for (std::string cell; std::getline(s, cell, ',');) cells.push_back(cell);
    if (cells.size() != d + 2)
      throw IngestError(fmt::format("{}:{}: expected {} fields, got {}", source, number, d + 2, cells.size()));
    if (cells[1] != "0" && cells[1] != "1")
      throw IngestError(fmt::format("{}:{}: label '{}' is not 0 or 1", source, number, cells[1]));
    set.ids.push_back(cells[0]);
    set.labels.push_back(cells[1] == "1" ? 1 : 0);
    for (std::size_t j = 0; j < d; ++j) {
      const auto& c = cells[j + 2];
      double v = 0;
      auto [ptr, ec] = std::from_chars(c.data(), c.data() + c.size(), v);
      if (ec != std::errc() || ptr != c.data() + c.size() || c.empty() || !std::isfinite(v))
        throw IngestError(fmt::format("{}:{}: '{}' in column f{} is not a finite number", source, number, c, j));
      values.push_back(v);
    }
  }
  set.x = Eigen::Map<const FeatureMatrix>(values.data(), static_cast<Eigen::Index>(set.ids.size()),
                                          static_cast<Eigen::Index>(d));
  return set;
}

FeatureSet load_feature_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IngestError(fmt::format("cannot read {}", path.string()));
  return read_feature_csv(in, path.string());
}

void write_feature_csv(std::ostream& out, const FeatureSet& set) {
  std::string text = "id,label";
  for (Eigen::Index j = 0; j < set.x.cols(); ++j) text += fmt::format(",f{}", j);
  text += '\n';
  for (std::size_t i = 0; i < set.ids.size(); ++i) {
    text += fmt::format("{},{}", set.ids[i], set.labels[i]);
    for (Eigen::Index j = 0; j < set.x.cols(); ++j) text += fmt::format(",{}", set.x(static_cast<Eigen::Index>(i), j));
    text += '\n';
  }
  out << text;
}

void save_feature_csv(const fs::path& path, const FeatureSet& set) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IngestError(fmt::format("cannot write {}", path.string()));
  write_feature_csv(out, set);
}

FeatureSet subset(const FeatureSet& set, const std::vector<std::size_t>& rows) {
  FeatureSet out;
  out.x.resize(static_cast<Eigen::Index>(rows.size()), set.x.cols());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    out.ids.push_back(set.ids[rows[k]]);
    out.labels.push_back(set.labels[rows[k]]);
    out.x.row(static_cast<Eigen::Index>(k)) = set.x.row(static_cast<Eigen::Index>(rows[k]));
  }
  return out;
}

FeatureSplits ingest_features(const PipelineConfig& config) {
  const FeatureSet all = load_feature_csv(config.dataset_path);
  const auto tags = stratified_split(all.labels, config.split_train, config.split_val, config.split_seed);
  FeatureSplits out;
  for (Split s : kSplits) {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < tags.size(); ++i)
      if (tags[i] == s) rows.push_back(i);
    out[s] = subset(all, rows);
  }
  return out;
}

}  // namespace ctcn
