#include "texmatch/eval.hpp"
#include "texmatch/reference.hpp"
#include "texmatch/report.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

using namespace texmatch;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

ScoreSet random_scores(std::uint64_t key, int ng, int ni, double shift) {
  Rng r = Rng(41, Stream::test).derive(key);
  ScoreSet s;
  for (int i = 0; i < ng; ++i) s.genuine.push_back(r.normal());
  for (int i = 0; i < ni; ++i) s.imposter.push_back(r.normal() + shift);
  return s;
}

}  // namespace

TEST_SUITE("eval") {

TEST_CASE("separated scores give zero EER and zero AUC") {
  const ScoreSet s{{0.1, 0.2, 0.3}, {0.7, 0.8}};
  const EerPoint e = eer(s);
  CHECK(e.eer == 0.0);
  CHECK(e.threshold > 0.3);
  CHECK(e.threshold <= 0.7);
  CHECK(det_curve(s).auc == doctest::Approx(0.0).scale(1));
}

TEST_CASE("identical distributions give EER one half") {
  const ScoreSet s{{0.5, 0.5, 0.5, 0.5}, {0.5, 0.5}};
  CHECK(eer(s).eer == doctest::Approx(0.5));
  const ScoreSet flipped{{0.9, 0.8}, {0.1, 0.2}};
  CHECK(eer(flipped).eer == doctest::Approx(1.0));
}

TEST_CASE("far and frr count strict acceptance below the threshold") {
  const ScoreSet s{{0.1, 0.4, 0.6}, {0.3, 0.5, 0.9, 1.0}};
  const ErrorRates r = far_frr(s, 0.5);
  CHECK(r.frr == doctest::Approx(1.0 / 3.0));
  CHECK(r.far == doctest::Approx(0.25));
  const ErrorRates at = far_frr(s, 0.4);  // 0.4 itself is rejected
  CHECK(at.frr == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("DET curve runs from (0, 1) to (1, 0) with monotone rates") {
  const ScoreSet s = random_scores(1, 40, 200, 1.0);
  const DetCurve d = det_curve(s);
  REQUIRE(d.points.size() >= 2);
  CHECK(d.points.front().far == 0.0);
  CHECK(d.points.front().frr == 1.0);
  CHECK(d.points.back().far == 1.0);
  CHECK(d.points.back().frr == 0.0);
  CHECK(d.points.back().threshold == std::numeric_limits<double>::infinity());
  for (std::size_t i = 1; i < d.points.size(); ++i) {
    CHECK(d.points[i].threshold > d.points[i - 1].threshold);
    CHECK(d.points[i].far >= d.points[i - 1].far);
    CHECK(d.points[i].frr <= d.points[i - 1].frr);
  }
  CHECK(d.auc == doctest::Approx(auc(d)));
}

TEST_CASE("metrics agree with the brute-force references") {
  for (std::uint64_t k = 0; k < 10; ++k) {
    const ScoreSet s = random_scores(10 + k, 30 + static_cast<int>(k), 90, 0.2 * static_cast<double>(k));
    const EerPoint a = eer(s), b = reference::eer(s);
    CHECK(a.eer == doctest::Approx(b.eer).epsilon(1e-12));
    CHECK(a.threshold == doctest::Approx(b.threshold).epsilon(1e-12));
    CHECK(det_curve(s).auc == doctest::Approx(reference::det_auc_grid(s, 200000)).epsilon(1e-3).scale(1e-4));
  }
}

TEST_CASE("score sets must be nonempty and finite") {
  CHECK_THROWS(ScoreSet{{}, {1.0}}.validate());
  CHECK_THROWS(ScoreSet{{std::nan("")}, {1.0}}.validate());
  CHECK_THROWS(eer(ScoreSet{{1.0}, {}}));
  CHECK(parse_match_mode("offline") == MatchMode::offline);
  CHECK_THROWS(parse_match_mode("both"));
}

TEST_CASE("all-vs-all scores every unordered pair once, independent of threads") {
  SynthConfig sc;
  sc.n_classes = 4;
  sc.imgs_per_class = 3;
  sc.height = 8;
  sc.width = 16;
  sc.max_shift = 2;
  const Dataset d = generate_synthetic(sc);
  EncoderConfig ec;
  ec.channels = {2, 4};
  ec.height = 8;
  ec.width = 16;
  Rng init(1, Stream::init);
  auto m = build_matcher<float>(ec, MatcherHeadConfig{8, 4}, init);
  for (MatchMode mode : {MatchMode::pairwise, MatchMode::offline}) {
    const ScoreSet one = all_vs_all_scores(m, d, mode, 1);
    const ScoreSet three = all_vs_all_scores(m, d, mode, 3);
    CHECK(one.genuine.size() == 4 * 3);
    CHECK(one.imposter.size() == 66 - 12);
    CHECK(one.genuine == three.genuine);
    CHECK(one.imposter == three.imposter);
  }
  const auto e = embed_dataset(m, d);
  CHECK(e.rows() == 12);
  CHECK(e.cols() == 8);
  const ScoreSet off = all_vs_all_scores(m, d, MatchMode::offline);
  CHECK(off.genuine[0] == doctest::Approx(euclidean(e.row(0).data(), e.row(1).data(), 8)));
}

TEST_CASE("reports are byte-identical for identical inputs") {
  const ScoreSet s = random_scores(3, 20, 60, 1.5);
  std::vector<VariantResult> v{{"pairwise", s, det_curve(s)}};
  const fs::path a = fs::temp_directory_path() / "texmatch_test_report_a";
  const fs::path b = fs::temp_directory_path() / "texmatch_test_report_b";
  fs::remove_all(a);
  fs::remove_all(b);
  const std::map<std::string, std::string> meta{{"seed", "1"}, {"mode", "pairwise"}};
  emit_report(meta, v, a);
  emit_report(meta, v, b);
  for (const char* f : {"metrics.csv", "det_pairwise.csv", "det.svg", "scores_pairwise.tsv", "run.txt"}) {
    REQUIRE(fs::exists(a / f));
    CHECK(slurp(a / f) == slurp(b / f));
  }
  CHECK(slurp(a / "metrics.csv").rfind("variant,eer_percent,auc\n", 0) == 0);
  CHECK(score_dump(s).rfind("0\t", 0) == 0);
  fs::remove_all(a);
  fs::remove_all(b);
}

}  // TEST_SUITE
