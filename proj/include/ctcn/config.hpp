#pragma once

#include "ctcn/gmod.hpp"
#include "ctcn/hdlc.hpp"
#include "ctcn/preprocess.hpp"
#include "ctcn/selector.hpp"
#include "ctcn/smod.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>

namespace ctcn {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class DatasetFormat { image_dir, feature_csv };

struct ExtractorTraining {
  std::size_t epochs = 3;
  double learning_rate = 0.05;
  std::size_t batch = 16;
};

/// Every knob of a run. Disabled stages are identity pass-throughs.
struct PipelineConfig {
  std::filesystem::path dataset_path;
  DatasetFormat format = DatasetFormat::image_dir;
  std::map<std::string, int> classes;  // directory name -> label

  double split_train = 0.7, split_val = 0.15, split_test = 0.15;
  std::uint64_t split_seed = 0;

  bool enhance = true;
  bool augment = true;
  bool grafr = true;
  bool select = true;

  std::size_t image_size = 32;
  ClaheConfig clahe;
  GModConfig gmod;
  SModConfig smod;
  ExtractorTraining extractor;
  std::size_t grafr_hidden = 0;  // 0: default_hidden_count

  SCAConfig sca;
  ABHCConfig abhc;
  double lambda = 0.01;
  std::size_t fitness_epochs = 200;
  double fitness_learning_rate = 0.5;

  HDLCConfig hdlc;
  TrainConfig train;
  double threshold = 0.5;

  std::uint64_t seed = 0;
  std::filesystem::path out = "run";

  /// Throws ConfigError when a value breaks an invariant.
  void validate() const;
};

/// Sets one key from its textual value. Unknown keys and malformed values are
/// ConfigErrors naming the key.
void apply_setting(PipelineConfig& config, const std::string& key, const std::string& value);

/// Flat `key = value` lines; `#` starts a comment; blank lines are ignored.
/// Relative dataset paths resolve against `base`.
PipelineConfig parse_config(const std::string& text, const std::filesystem::path& base = {});
PipelineConfig load_config(const std::filesystem::path& path);

/// Every key, one per line, in a fixed order. Parsing this text yields an
/// equivalent config.
std::string canonical_text(const PipelineConfig& config);

/// FNV-1a of canonical_text, as 16 hex digits.
std::string config_hash(const PipelineConfig& config);

}  // namespace ctcn
