#pragma once

#include "texmatch/data.hpp"
#include "texmatch/models.hpp"

#include <limits>
#include <string_view>
#include <vector>

namespace texmatch {

/// Dissimilarity scores: lower means more alike.
struct ScoreSet {
  std::vector<double> genuine;
  std::vector<double> imposter;

  /// Both lists nonempty and finite.
  void validate() const;
};

enum class MatchMode { pairwise, offline };

std::string_view to_string(MatchMode m);
MatchMode parse_match_mode(std::string_view s);

struct ErrorRates {
  double far = 0;
  double frr = 0;
};

/// Accept iff score < threshold.
ErrorRates far_frr(const ScoreSet& scores, double threshold);

struct EerPoint {
  double eer = 0;
  double threshold = 0;
  double far = 0;
  double frr = 0;
};

/// Sweeps every distinct score and every midpoint between neighbouring distinct
/// scores, takes the threshold minimizing |FAR - FRR| (smallest on ties) and
/// reports (FAR + FRR) / 2 there.
EerPoint eer(const ScoreSet& scores);

struct DetPoint {
  double threshold = 0;
  double far = 0;
  double frr = 0;
};

struct DetCurve {
  /// Ascending thresholds: every distinct score, then +inf. Starts at
  /// (FAR 0, FRR 1) and ends at (FAR 1, FRR 0).
  std::vector<DetPoint> points;
  EerPoint eer;
  double auc = 0;
};

DetCurve det_curve(const ScoreSet& scores);

/// Trapezoidal area under FRR(FAR).
double auc(const DetCurve& det);

/// Scores every unordered pair of distinct images once, in (i, j) index order.
/// Embeddings are computed once in eval mode. Pairwise mode runs the matcher
/// head on embedding pairs; offline mode uses Euclidean embedding distance.
/// Results do not depend on `threads`.
ScoreSet all_vs_all_scores(Matcher<float>& model, const Dataset& test, MatchMode mode, Index threads = 1);

/// N x embed_dim, row-major, eval mode.
RowMatrix<float> embed_dataset(Matcher<float>& model, const Dataset& data, Index threads = 1);

double euclidean(const float* a, const float* b, Index n);

}  // namespace texmatch
