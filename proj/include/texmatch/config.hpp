#pragma once

#include "texmatch/data.hpp"
#include "texmatch/eval.hpp"
#include "texmatch/training.hpp"

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace texmatch {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Everything a CLI run depends on. The text form is INI-like:
///
///   [section]
///   key = value      # comments start with '#' or ';'
///
/// Sections: run, synth, loss, encoder, head, train, eval, ablate. Unknown
/// sections or keys are errors, so a typo never silently falls back to a
/// default.
struct RunConfig {
  // [run]
  std::uint64_t seed = 1;
  Index threads = 1;
  bool deterministic = false;
  std::string data;            ///< image directory; empty = synthesize from [synth]
  double train_fraction = 2.0 / 3.0;
  Index train_per_class = 10;  ///< 0 = keep every image
  Index test_per_class = 6;

  SynthConfig synth;  ///< synth.seed is ignored; run.seed drives generation
  LossConfig loss;
  EncoderConfig encoder;
  MatcherHeadConfig head;
  TrainConfig train;  ///< train.seed, loss, encoder and head are filled from the fields above

  // [eval]
  MatchMode mode = MatchMode::pairwise;
  bool log_axes = false;
  bool score_dump = true;

  // [ablate]
  std::vector<std::uint64_t> ablate_seeds{1, 2, 3};

  void validate() const;
  /// TrainConfig with the shared sections and the run seed copied in.
  TrainConfig resolved_train() const;
  SynthConfig resolved_synth() const;
};

RunConfig parse_config(std::string_view text);
RunConfig load_config(const std::filesystem::path& path);

/// Applies one `section.key=value` override.
void apply_override(RunConfig& cfg, std::string_view assignment);
void set_value(RunConfig& cfg, std::string_view section, std::string_view key, std::string_view value);

/// Every key in a fixed order, numbers in shortest round-trip form, so that
/// parse_config(resolved_text(c)) reproduces c exactly.
std::string resolved_text(const RunConfig& cfg);

struct RunData {
  Dataset train;
  Dataset test;
};

/// Loads run.data (or synthesizes from [synth] with `seed`), splits classes
/// open-world with `seed` and trims each side to its per-class count.
RunData prepare_data(const RunConfig& cfg, std::uint64_t seed);

/// 64-bit FNV-1a of the resolved text, as 16 hex digits.
std::string config_digest(const RunConfig& cfg);
std::uint64_t fnv1a64(std::string_view bytes);

}  // namespace texmatch
