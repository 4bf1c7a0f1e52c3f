#pragma once

#include "texmatch/eval.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace texmatch {

struct VariantResult {
  std::string name;  ///< used in file names; [A-Za-z0-9_.-] only
  ScoreSet scores;
  DetCurve det;
};

struct ReportOptions {
  bool log_axes = false;  ///< DET plot on log-log axes (rates floored at 1e-4)
  bool score_dump = true; ///< write scores_<variant>.tsv
};

/// Writes into `dir`:
///   metrics.csv          variant,eer_percent,auc
///   det_<variant>.csv    threshold,far,frr (one row per curve point)
///   det.svg              one polyline per variant
///   scores_<variant>.tsv label<TAB>score, label 0 = genuine, 1 = imposter
///   run.txt              sorted key=value run metadata
/// Numbers use the shortest round-trip decimal form, so identical inputs give
/// identical bytes.
void emit_report(const std::map<std::string, std::string>& meta, const std::vector<VariantResult>& variants,
                 const std::filesystem::path& dir, const ReportOptions& options = {});

std::string metrics_csv(const std::vector<VariantResult>& variants);
std::string det_csv(const DetCurve& det);
std::string det_svg(const std::vector<VariantResult>& variants, bool log_axes);
std::string score_dump(const ScoreSet& scores);

/// Writes text to a file, throwing std::runtime_error on failure.
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace texmatch
