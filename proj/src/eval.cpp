#include "texmatch/eval.hpp"

#include "texmatch/layers.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <thread>

namespace texmatch {

namespace {

constexpr std::size_t kEmbedChunk = 16;
constexpr std::size_t kPairChunk = 512;

// Runs job(chunk) for chunk in [0, n_chunks) on up to `threads` workers.
// Each chunk writes disjoint output, so the result is worker-count invariant.
template <typename Job>
void run_chunks(std::size_t n_chunks, Index threads, Job job) {
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(std::max<Index>(threads, 1)), n_chunks);
  if (workers <= 1) {
    for (std::size_t c = 0; c < n_chunks; ++c) job(c);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t c = next++; c < n_chunks; c = next++) job(c);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

// Counts of scores strictly below t in a sorted list.
std::size_t count_below(const std::vector<double>& sorted, double t) {
  return static_cast<std::size_t>(std::lower_bound(sorted.begin(), sorted.end(), t) - sorted.begin());
}

struct Sorted {
  std::vector<double> genuine, imposter, distinct;
};

Sorted sorted_scores(const ScoreSet& s) {
  s.validate();
  Sorted out{s.genuine, s.imposter, {}};
  std::sort(out.genuine.begin(), out.genuine.end());
  std::sort(out.imposter.begin(), out.imposter.end());
  out.distinct.reserve(out.genuine.size() + out.imposter.size());
  std::merge(out.genuine.begin(), out.genuine.end(), out.imposter.begin(), out.imposter.end(),
             std::back_inserter(out.distinct));
  out.distinct.erase(std::unique(out.distinct.begin(), out.distinct.end()), out.distinct.end());
  return out;
}

ErrorRates rates(const Sorted& s, double t) {
  const double far = static_cast<double>(count_below(s.imposter, t)) / static_cast<double>(s.imposter.size());
  const double frr =
      static_cast<double>(s.genuine.size() - count_below(s.genuine, t)) / static_cast<double>(s.genuine.size());
  return {far, frr};
}

}  // namespace

void ScoreSet::validate() const {
  if (genuine.empty() || imposter.empty()) throw std::invalid_argument("score set needs genuine and imposter scores");
  for (double v : genuine) {
    if (!std::isfinite(v)) throw std::invalid_argument("non-finite genuine score");
  }
  for (double v : imposter) {
    if (!std::isfinite(v)) throw std::invalid_argument("non-finite imposter score");
  }
}

std::string_view to_string(MatchMode m) { return m == MatchMode::pairwise ? "pairwise" : "offline"; }

MatchMode parse_match_mode(std::string_view s) {
  if (s == "pairwise") return MatchMode::pairwise;
  if (s == "offline") return MatchMode::offline;
  throw std::invalid_argument("unknown mode '" + std::string(s) + "' (expected pairwise, offline)");
}

ErrorRates far_frr(const ScoreSet& scores, double threshold) {
  scores.validate();
  std::size_t fa = 0, fr = 0;
  for (double v : scores.imposter) fa += v < threshold;
  for (double v : scores.genuine) fr += !(v < threshold);
  return {static_cast<double>(fa) / static_cast<double>(scores.imposter.size()),
          static_cast<double>(fr) / static_cast<double>(scores.genuine.size())};
}

EerPoint eer(const ScoreSet& scores) {
  const Sorted s = sorted_scores(scores);
  EerPoint best;
  double best_gap = std::numeric_limits<double>::infinity();
  auto consider = [&](double t) {
    const ErrorRates r = rates(s, t);
    const double gap = std::abs(r.far - r.frr);
    if (gap < best_gap || (gap == best_gap && t < best.threshold)) {
      best_gap = gap;
      best = {(r.far + r.frr) / 2, t, r.far, r.frr};
    }
  };
  for (std::size_t i = 0; i < s.distinct.size(); ++i) {
    consider(s.distinct[i]);
    if (i + 1 < s.distinct.size()) consider(s.distinct[i] + (s.distinct[i + 1] - s.distinct[i]) / 2);
  }
  return best;
}

DetCurve det_curve(const ScoreSet& scores) {
  const Sorted s = sorted_scores(scores);
  DetCurve det;
  det.points.reserve(s.distinct.size() + 1);
  for (double t : s.distinct) {
    const ErrorRates r = rates(s, t);
    det.points.push_back({t, r.far, r.frr});
  }
  det.points.push_back({std::numeric_limits<double>::infinity(), 1.0, 0.0});
  det.eer = eer(scores);
  det.auc = auc(det);
  return det;
}

double auc(const DetCurve& det) {
  if (det.points.empty()) throw std::invalid_argument("empty DET curve");
  // Endpoint extension: the curve is anchored at (0, 1) and (1, 0).
  double area = 0;
  double far = 0, frr = 1;
  auto step = [&](double f, double r) {
    area += (f - far) * (r + frr) / 2;
    far = f;
    frr = r;
  };
  for (const auto& p : det.points) step(p.far, p.frr);
  step(1.0, 0.0);
  return area;
}

double euclidean(const float* a, const float* b, Index n) {
  double acc = 0;
  for (Index k = 0; k < n; ++k) {
    const double d = static_cast<double>(a[k]) - static_cast<double>(b[k]);
    acc += d * d;
  }
  return std::sqrt(acc);
}

RowMatrix<float> embed_dataset(Matcher<float>& model, const Dataset& data, Index threads) {
  model.set_mode(Mode::eval);
  const std::size_t n = data.size();
  const Index dim = model.head_config().embed_dim;
  RowMatrix<float> out(static_cast<Index>(n), dim);
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  const std::size_t chunks = (n + kEmbedChunk - 1) / kEmbedChunk;
  run_chunks(chunks, threads, [&](std::size_t c) {
    NoGradGuard guard;
    const std::size_t start = c * kEmbedChunk, count = std::min(kEmbedChunk, n - start);
    const auto e = model.embed(make_image_batch<float>(data, std::span(idx).subspan(start, count)));
    out.middleRows(static_cast<Index>(start), static_cast<Index>(count)) =
        ConstMatrixMap<float>(e.value().data(), static_cast<Index>(count), dim);
  });
  return out;
}

ScoreSet all_vs_all_scores(Matcher<float>& model, const Dataset& test, MatchMode mode, Index threads) {
  const std::size_t n = test.size();
  const auto classes = test.classes();
  if (classes.size() < 2) throw std::invalid_argument("all-vs-all needs at least 2 test classes");
  bool has_genuine = false;
  for (std::size_t i = 0; i < n && !has_genuine; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (test.samples[i].class_id == test.samples[j].class_id) {
        has_genuine = true;
        break;
      }
    }
  }
  if (!has_genuine) throw std::invalid_argument("all-vs-all needs a test class with at least 2 images");

  const RowMatrix<float> emb = embed_dataset(model, test, threads);
  const Index dim = emb.cols();

  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  pairs.reserve(n * (n - 1) / 2);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) pairs.emplace_back(i, j);
  }
  std::vector<double> score(pairs.size());
  const std::size_t chunks = (pairs.size() + kPairChunk - 1) / kPairChunk;
  run_chunks(chunks, threads, [&](std::size_t c) {
    const std::size_t start = c * kPairChunk, count = std::min(kPairChunk, pairs.size() - start);
    if (mode == MatchMode::offline) {
      for (std::size_t k = start; k < start + count; ++k) {
        score[k] = euclidean(emb.row(static_cast<Index>(pairs[k].first)).data(),
                             emb.row(static_cast<Index>(pairs[k].second)).data(), dim);
      }
      return;
    }
    NoGradGuard guard;
    Array<float> a(static_cast<Index>(count) * dim), b(static_cast<Index>(count) * dim);
    for (std::size_t k = 0; k < count; ++k) {
      const auto [i, j] = pairs[start + k];
      a.segment(static_cast<Index>(k) * dim, dim) = emb.row(static_cast<Index>(i)).transpose().array();
      b.segment(static_cast<Index>(k) * dim, dim) = emb.row(static_cast<Index>(j)).transpose().array();
    }
    const Shape shape{static_cast<Index>(count), dim};
    const auto s = model.score_embeddings(Tensor<float>::from(shape, std::move(a)), Tensor<float>::from(shape, std::move(b)));
    for (std::size_t k = 0; k < count; ++k) score[start + k] = static_cast<double>(s.value()[static_cast<Index>(k)]);
  });

  ScoreSet out;
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    const bool same = test.samples[pairs[k].first].class_id == test.samples[pairs[k].second].class_id;
    (same ? out.genuine : out.imposter).push_back(score[k]);
  }
  return out;
}

}  // namespace texmatch
