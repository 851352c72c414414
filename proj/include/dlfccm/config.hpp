#pragma once

#include "dlfccm/corpus.hpp"
#include "dlfccm/encoder.hpp"
#include "dlfccm/judgment.hpp"
#include "dlfccm/pipeline.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>

namespace dlfccm {

struct PathsConfig {
  std::filesystem::path data_dir = "data";
  std::filesystem::path checkpoint_dir = "checkpoints";
  std::filesystem::path export_dir = "exports";
};

/// Everything one CLI invocation needs. Component seeds are not configured
/// directly; reseed() derives them from the root seed.
struct RunConfig {
  std::uint64_t seed = 1;
  corpus::GenSpec corpus;
  int n_pairs = 1000;
  EncoderConfig encoder;
  PretrainConfig pretrain;
  Stage2Config stage2;
  Ablation ablation = Ablation::none;
  PathsConfig paths;

  RunConfig() { reseed(seed); }

  void reseed(std::uint64_t root);
  void validate() const;

  std::uint64_t match_model_seed() const { return derive_seed(seed, "match.model"); }
  std::uint64_t split_seed() const { return derive_seed(seed, "split"); }

  /// Stage-2 settings with the ablation flags applied.
  Stage2Config stage2_config() const;
};

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// INI-style text: [section] headers with key = value lines, '#' or ';' comments.
/// Keys missing from the text keep their current value in `base`; unknown
/// sections or keys are errors.
RunConfig parse_config(std::istream& in, RunConfig base = {});
RunConfig load_config(const std::filesystem::path& path, RunConfig base = {});

nlohmann::json to_json(const corpus::GenSpec& s);
nlohmann::json to_json(const EncoderConfig& c);
EncoderConfig encoder_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const PretrainConfig& c);
nlohmann::json to_json(const Stage2Config& c);
nlohmann::json to_json(const RunConfig& c);

}  // namespace dlfccm
