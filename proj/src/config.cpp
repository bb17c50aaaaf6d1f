#include "ctcn/config.hpp"

#include <fmt/format.h>
#include <fmt/ranges.h>

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

namespace ctcn {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream in(s);
  for (std::string item; std::getline(in, item, sep);) out.push_back(trim(item));
  return out;
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T v{};
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end || text.empty())
    throw ConfigError(fmt::format("config: '{}' is not a valid value for {}", text, key));
  return v;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "on" || text == "1") return true;
  if (text == "false" || text == "off" || text == "0") return false;
  throw ConfigError(fmt::format("config: '{}' is not a boolean for {}", text, key));
}

std::vector<std::size_t> parse_sizes(const std::string& key, const std::string& text) {
  std::vector<std::size_t> out;
  for (const auto& item : split(text, ',')) out.push_back(parse_number<std::size_t>(key, item));
  return out;
}

struct Entry {
  const char* key;
  std::function<void(PipelineConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const PipelineConfig&)> get;
};

#define CTCN_NUMBER(KEY, FIELD)                                                                    \
  Entry {                                                                                          \
    KEY, [](PipelineConfig& c, const std::string& k,                                               \
            const std::string& v) { c.FIELD = parse_number<decltype(c.FIELD)>(k, v); },            \
        [](const PipelineConfig& c) { return fmt::format("{}", c.FIELD); }                         \
  }
#define CTCN_BOOL(KEY, FIELD)                                                                      \
  Entry {                                                                                          \
    KEY, [](PipelineConfig& c, const std::string& k, const std::string& v) { c.FIELD = parse_bool(k, v); }, \
        [](const PipelineConfig& c) { return std::string(c.FIELD ? "true" : "false"); }            \
  }

const std::vector<Entry>& entries() {
  static const std::vector<Entry> table{
      {"dataset.path", [](PipelineConfig& c, const std::string&, const std::string& v) { c.dataset_path = v; },
       [](const PipelineConfig& c) { return c.dataset_path.string(); }},
      {"dataset.format",
       [](PipelineConfig& c, const std::string& k, const std::string& v) {
         if (v == "image-dir") c.format = DatasetFormat::image_dir;
         else if (v == "feature-csv") c.format = DatasetFormat::feature_csv;
         else throw ConfigError(fmt::format("config: {} must be image-dir or feature-csv, got '{}'", k, v));
       },
       [](const PipelineConfig& c) {
         return std::string(c.format == DatasetFormat::image_dir ? "image-dir" : "feature-csv");
       }},
      {"dataset.classes",
       [](PipelineConfig& c, const std::string& k, const std::string& v) {
         c.classes.clear();
         for (const auto& item : split(v, ',')) {
           const auto colon = item.find(':');
           if (colon == std::string::npos) throw ConfigError(fmt::format("config: {} entry '{}' is not name:label", k, item));
           c.classes[trim(item.substr(0, colon))] = parse_number<int>(k, trim(item.substr(colon + 1)));
         }
       },
       [](const PipelineConfig& c) {
         std::vector<std::string> parts;
         for (const auto& [name, label] : c.classes) parts.push_back(fmt::format("{}:{}", name, label));
         return fmt::format("{}", fmt::join(parts, ","));
       }},
      CTCN_NUMBER("split.train", split_train),
      CTCN_NUMBER("split.val", split_val),
      CTCN_NUMBER("split.test", split_test),
      CTCN_NUMBER("split.seed", split_seed),
      CTCN_BOOL("stage.enhance", enhance),
      CTCN_BOOL("stage.augment", augment),
      CTCN_BOOL("stage.grafr", grafr),
      CTCN_BOOL("stage.select", select),
      CTCN_NUMBER("image.size", image_size),
      CTCN_NUMBER("clahe.clip", clahe.clip_limit),
      CTCN_NUMBER("clahe.tiles_y", clahe.tiles_y),
      CTCN_NUMBER("clahe.tiles_x", clahe.tiles_x),
      CTCN_NUMBER("gmod.channels", gmod.channels),
      CTCN_NUMBER("gmod.patch", gmod.patch),
      CTCN_NUMBER("gmod.dim", gmod.embed_dim),
      CTCN_NUMBER("gmod.depth", gmod.depth),
      CTCN_NUMBER("gmod.heads", gmod.heads),
      CTCN_NUMBER("gmod.mlp", gmod.mlp_hidden),
      {"smod.filters", [](PipelineConfig& c, const std::string& k, const std::string& v) { c.smod.filters = parse_sizes(k, v); },
       [](const PipelineConfig& c) { return fmt::format("{}", fmt::join(c.smod.filters, ",")); }},
      CTCN_NUMBER("smod.dropout", smod.dropout),
      CTCN_NUMBER("smod.bn_eps", smod.bn_eps),
      CTCN_NUMBER("extractor.epochs", extractor.epochs),
      CTCN_NUMBER("extractor.lr", extractor.learning_rate),
      CTCN_NUMBER("extractor.batch", extractor.batch),
      CTCN_NUMBER("grafr.hidden", grafr_hidden),
      CTCN_NUMBER("sca.pop", sca.population),
      CTCN_NUMBER("sca.iters", sca.iterations),
      CTCN_NUMBER("sca.alpha", sca.alpha),
      CTCN_NUMBER("abhc.iters", abhc.iterations),
      CTCN_NUMBER("abhc.p", abhc.p),
      CTCN_NUMBER("abhc.beta_min", abhc.beta_min),
      CTCN_NUMBER("abhc.beta_max", abhc.beta_max),
      CTCN_NUMBER("fitness.lambda", lambda),
      CTCN_NUMBER("fitness.epochs", fitness_epochs),
      CTCN_NUMBER("fitness.lr", fitness_learning_rate),
      CTCN_NUMBER("hdlc.filters", hdlc.filters),
      {"hdlc.widths", [](PipelineConfig& c, const std::string& k, const std::string& v) { c.hdlc.widths = parse_sizes(k, v); },
       [](const PipelineConfig& c) { return fmt::format("{}", fmt::join(c.hdlc.widths, ",")); }},
      CTCN_NUMBER("hdlc.epochs", train.epochs),
      CTCN_NUMBER("hdlc.lr", train.learning_rate),
      CTCN_NUMBER("hdlc.batch", train.batch),
      CTCN_NUMBER("hdlc.threshold", threshold),
      CTCN_NUMBER("seed", seed),
      {"out", [](PipelineConfig& c, const std::string&, const std::string& v) { c.out = v; },
       [](const PipelineConfig& c) { return c.out.string(); }},
  };
  return table;
}

#undef CTCN_NUMBER
#undef CTCN_BOOL

}  // namespace

void PipelineConfig::validate() const {
  if (dataset_path.empty()) throw ConfigError("config: dataset.path is required");
  for (double f : {split_train, split_val, split_test})
    if (!(f > 0.0)) throw ConfigError("config: split fractions must be positive");
  if (std::abs(split_train + split_val + split_test - 1.0) > 1e-6)
    throw ConfigError("config: split fractions must sum to 1");
  if (format == DatasetFormat::image_dir) {
    bool seen[2] = {false, false};
    for (const auto& [name, label] : classes) {
      if (label != 0 && label != 1) throw ConfigError(fmt::format("config: class '{}' has label {}", name, label));
      seen[label] = true;
    }
    if (!seen[0] || !seen[1]) throw ConfigError("config: dataset.classes must map classes to both labels 0 and 1");
  }
  if (image_size == 0) throw ConfigError("config: image.size must be positive");
  if (extractor.batch == 0 || train.batch == 0) throw ConfigError("config: batch sizes must be positive");
  if (threshold < 0.0 || threshold > 1.0) throw ConfigError("config: hdlc.threshold must lie in [0, 1]");
  try {
    gmod.validate();
    hdlc.validate();
  } catch (const ParameterError& e) {
    throw ConfigError(fmt::format("config: {}", e.what()));
  }
  if (gmod.height != image_size || gmod.width != image_size)
    throw ConfigError("config: transformer extents disagree with image.size");
  if (smod.filters.empty()) throw ConfigError("config: smod.filters must not be empty");
}

void apply_setting(PipelineConfig& config, const std::string& key, const std::string& value) {
  for (const auto& e : entries())
    if (key == e.key) {
      e.set(config, key, value);
      if (key == "image.size") config.gmod.height = config.gmod.width = config.image_size;
      return;
    }
  throw ConfigError(fmt::format("config: unknown key '{}'", key));
}

PipelineConfig parse_config(const std::string& text, const std::filesystem::path& base) {
  PipelineConfig config;
  config.gmod.height = config.gmod.width = config.image_size;
  std::istringstream in(text);
  std::size_t number = 0;
  for (std::string line; std::getline(in, line);) {
    ++number;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(fmt::format("config line {}: expected key = value", number));
    apply_setting(config, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  if (!base.empty() && !config.dataset_path.empty() && config.dataset_path.is_relative())
    config.dataset_path = std::filesystem::absolute(base / config.dataset_path).lexically_normal();
  return config;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("config: cannot read {}", path.string()));
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), path.parent_path());
}

std::string canonical_text(const PipelineConfig& config) {
  std::string out;
  for (const auto& e : entries()) out += fmt::format("{} = {}\n", e.key, e.get(config));
  return out;
}

std::string config_hash(const PipelineConfig& config) {
  return fmt::format("{:016x}", hash_label(canonical_text(config)));
}

}  // namespace ctcn
