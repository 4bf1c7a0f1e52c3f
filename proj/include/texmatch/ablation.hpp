#pragma once

#include "texmatch/config.hpp"
#include "texmatch/report.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace texmatch {

/// The four rows of the ablation table, in table order.
///   random_offline  random encoder init, Stage 2, Euclidean scores
///   ssim_offline    Stage 1 with 1 - SSIM, Stage 2, Euclidean scores
///   reldn_offline   Stage 1 relational + denoising, Stage 2, Euclidean scores
///   reldn_e2m       the same model as reldn_offline, scored by its pairwise head
enum class Arm { random_offline, ssim_offline, reldn_offline, reldn_e2m };
inline constexpr std::array<Arm, 4> kArms{Arm::random_offline, Arm::ssim_offline, Arm::reldn_offline, Arm::reldn_e2m};

std::string_view to_string(Arm a);
/// Table label, e.g. "random-init + offline".
std::string_view arm_label(Arm a);

struct ArmResult {
  double eer = 0;
  double auc = 0;
};

struct SeedResult {
  std::uint64_t seed = 0;
  std::array<ArmResult, 4> arms{};
  /// Held-out (test classes) reconstruction SSIM of the two Stage-1 models and
  /// of the untrained autoencoder they start from.
  double ssim_untrained = 0;
  double ssim_ssim_only = 0;
  double ssim_reldn = 0;
  double seconds = 0;
  std::vector<VariantResult> variants;  ///< full score sets and DET curves
};

struct AblationResult {
  std::vector<SeedResult> seeds;
  std::array<ArmResult, 4> median{};
  double median_ssim_untrained = 0;
  double median_ssim_reldn = 0;
  /// (a) each pretrained offline arm <= random offline; (b) E2M <= best offline;
  /// (c) E2M < 0.25. All on median EER.
  bool pretrained_beats_random = false;
  bool e2m_beats_offline = false;
  bool e2m_below_quarter = false;
  double wall_seconds = 0;
  Index workers = 1;

  bool all_orderings() const { return pretrained_beats_random && e2m_beats_offline && e2m_below_quarter; }
};

/// One seed: synthesize, split 20/10 classes (with the default config), train
/// the two Stage-1 models and three Stage-2 models, score all four arms.
SeedResult run_ablation_seed(const RunConfig& cfg, std::uint64_t seed);

/// Seeds run concurrently on up to `workers` threads; each seed is computed
/// exactly as it would be alone, so results do not depend on `workers`.
AblationResult run_ablation(const RunConfig& cfg, Index workers,
                            const std::function<void(const SeedResult&)>& on_seed = {});

/// Median of the values; mean of the middle two for even counts.
double median(std::vector<double> values);

/// ablation.csv (per seed and arm), ablation_median.csv (the table),
/// ablation.txt (readable summary with the ordering checks), timing.txt (wall
/// clock, the only non-reproducible file) and one report directory per seed.
void emit_ablation_report(const AblationResult& result, const std::map<std::string, std::string>& meta,
                          const std::filesystem::path& dir, const ReportOptions& options);

std::string ablation_table(const AblationResult& result);

}  // namespace texmatch
