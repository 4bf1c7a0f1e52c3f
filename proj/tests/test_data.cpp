#include "texmatch/data.hpp"

#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <limits>
#include <set>

using namespace texmatch;
namespace fs = std::filesystem;

namespace {

SynthConfig small_synth(Index classes, Index per_class) {
  SynthConfig s;
  s.n_classes = classes;
  s.imgs_per_class = per_class;
  s.height = 32;
  s.width = 128;
  return s;
}

// Smallest MSE over cyclic horizontal shifts, so the per-sample shift does not count as a difference.
double aligned_mse(const ImageSample& a, const ImageSample& b, Index h, Index w, Index max_shift) {
  double best = std::numeric_limits<double>::infinity();
  for (Index s = -max_shift; s <= max_shift; ++s) {
    double acc = 0;
    for (Index i = 0; i < h; ++i)
      for (Index j = 0; j < w; ++j) {
        const double d = a.pixels[i * w + j] - b.pixels[i * w + ((j + s) % w + w) % w];
        acc += d * d;
      }
    best = std::min(best, acc / static_cast<double>(h * w));
  }
  return best;
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) : path(fs::temp_directory_path() / ("texmatch_test_" + tag)) {
    fs::remove_all(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_SUITE("data") {

TEST_CASE("synthetic data is deterministic and in range") {
  const SynthConfig s = small_synth(4, 3);
  const Dataset a = generate_synthetic(s), b = generate_synthetic(s);
  REQUIRE(a.size() == 12);
  CHECK(a.classes() == std::vector<Index>{0, 1, 2, 3});
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a.samples[i].class_id == b.samples[i].class_id);
    CHECK((a.samples[i].pixels == b.samples[i].pixels).all());
    CHECK(a.samples[i].pixels.size() == 32 * 128);
    CHECK(a.samples[i].pixels.minCoeff() >= 0.0f);
    CHECK(a.samples[i].pixels.maxCoeff() <= 1.0f);
  }
  SynthConfig other = s;
  other.seed = 2;
  CHECK_FALSE((generate_synthetic(other).samples[0].pixels == a.samples[0].pixels).all());
}

TEST_CASE("images of one class are closer than images of different classes") {
  SynthConfig s = small_synth(20, 2);
  const Dataset d = generate_synthetic(s);
  double intra = 0, inter = 0;
  Index n_intra = 0, n_inter = 0;
  for (Index c = 0; c < 20; ++c) {
    const auto& a = d.samples[static_cast<std::size_t>(2 * c)];
    intra += aligned_mse(a, d.samples[static_cast<std::size_t>(2 * c + 1)], 32, 128, s.max_shift);
    ++n_intra;
    const Index o = (c + 1) % 20;
    inter += aligned_mse(a, d.samples[static_cast<std::size_t>(2 * o)], 32, 128, s.max_shift);
    ++n_inter;
  }
  MESSAGE("mean intra " << intra / n_intra << ", inter " << inter / n_inter);
  CHECK(intra / n_intra < inter / n_inter);
}

TEST_CASE("synth config validation") {
  SynthConfig s;
  s.n_classes = 1;
  CHECK_THROWS_AS(s.validate(), DataError);
  s = SynthConfig{};
  s.max_shift = s.width;
  CHECK_THROWS_AS(s.validate(), DataError);
  s = SynthConfig{};
  s.orientation_band = -1;
  CHECK_THROWS_AS(s.validate(), DataError);
}

TEST_CASE("PGM directory round trip quantizes to 8 bits") {
  const Dataset d = generate_synthetic(small_synth(3, 2));
  TempDir tmp("pgm");
  write_directory(d, tmp.path);
  CHECK(fs::exists(tmp.path / "manifest.tsv"));
  const Dataset back = load_directory(tmp.path, 32, 128);
  REQUIRE(back.size() == d.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    CHECK(back.samples[i].class_id == d.samples[i].class_id);
    const Array<float> q = d.samples[i].pixels.unaryExpr([](float v) { return quantize8(v); });
    CHECK((back.samples[i].pixels == q).all());
  }
  CHECK_THROWS_AS(load_directory(tmp.path, 64, 512), DataError);

  fs::remove(tmp.path / "manifest.tsv");
  CHECK(load_directory(tmp.path, 32, 128).size() == d.size());
  CHECK_THROWS_AS(load_directory(tmp.path / "missing"), DataError);
}

TEST_CASE("open-world split is class-disjoint") {
  const Dataset d = generate_synthetic(small_synth(30, 2));
  const auto [train, test] = open_world_split(d, 2.0 / 3.0, 5);
  const auto tc = train.classes(), vc = test.classes();
  CHECK(tc.size() == 20);
  CHECK(vc.size() == 10);
  std::set<Index> all(tc.begin(), tc.end());
  for (Index c : vc) CHECK(all.insert(c).second);
  CHECK(train.size() + test.size() == d.size());

  const auto again = open_world_split(d, 2.0 / 3.0, 5);
  CHECK(again.first.classes() == tc);
  CHECK(open_world_split(d, 2.0 / 3.0, 6).first.classes() != tc);

  CHECK_THROWS_AS(open_world_split(generate_synthetic(small_synth(3, 2)), 2.0 / 3.0, 1), DataError);
  CHECK_THROWS_AS(open_world_split(d, 1.0, 1), DataError);
}

TEST_CASE("limit_per_class keeps the first images of each class") {
  const Dataset d = generate_synthetic(small_synth(4, 5));
  const Dataset l = limit_per_class(d, 2);
  CHECK(l.size() == 8);
  CHECK(l.samples[1].sample_id == d.samples[1].sample_id);
  CHECK(limit_per_class(d, 10).size() == 20);
  CHECK_THROWS_AS(limit_per_class(d, 0), DataError);
}

TEST_CASE("pair batches are balanced and labelled by class") {
  const Dataset d = generate_synthetic(small_synth(5, 4));
  Rng rng(1, Stream::pairs);
  for (int rep = 0; rep < 50; ++rep) {
    const PairIndices p = sample_pair_indices(d, 16, rng);
    REQUIRE(p.y.size() == 16);
    for (std::size_t i = 0; i < 16; ++i) {
      const bool same = d.samples[p.a[i]].class_id == d.samples[p.b[i]].class_id;
      CHECK(p.y[i] == (i < 8 ? 0 : 1));
      CHECK(same == (p.y[i] == 0));
      CHECK(p.a[i] != p.b[i]);
    }
  }
  CHECK_THROWS_AS(sample_pair_indices(d, 7, rng), DataError);

  const auto batch = sample_pair_batch<float>(d, 4, rng);
  CHECK(batch.a.shape() == Shape{4, 1, 32, 128});
  CHECK(batch.y.value()[0] == 0.0f);
  CHECK(batch.y.value()[3] == 1.0f);
}

}  // TEST_SUITE
