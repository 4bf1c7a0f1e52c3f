#include "texmatch/config.hpp"

#include <doctest.h>

#include <string>

using namespace texmatch;

namespace {

std::string error_of(std::string_view text) {
  try {
    parse_config(text);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST_SUITE("config") {

TEST_CASE("resolved text parses back to the same configuration") {
  RunConfig c;
  c.seed = 17;
  c.loss.alpha = 0.1;  // not exactly representable
  c.train.adam.lr = 3e-4;
  c.encoder.channels = {4, 8, 16, 32, 64, 1024};
  c.ablate_seeds = {5, 9};
  c.mode = MatchMode::offline;
  const std::string text = resolved_text(c);
  const RunConfig back = parse_config(text);
  CHECK(resolved_text(back) == text);
  CHECK(back.loss.alpha == 0.1);
  CHECK(back.train.adam.lr == 3e-4);
  CHECK(back.encoder.channels == c.encoder.channels);
  CHECK(config_digest(back) == config_digest(c));
  CHECK(config_digest(back).size() == 16);
}

TEST_CASE("an empty file gives the defaults") {
  CHECK(resolved_text(parse_config("")) == resolved_text(RunConfig{}));
  CHECK(resolved_text(parse_config("# only a comment\n\n[run]\n")) == resolved_text(RunConfig{}));
}

TEST_CASE("values, comments and whitespace") {
  const RunConfig c = parse_config(
      "[run]\n"
      "seed = 9   # trailing comment\n"
      "  threads=2\n"
      "; another comment\n"
      "[train]\n"
      "objective = ssim_only\n"
      "[eval]\n"
      "log_axes = true\n");
  CHECK(c.seed == 9);
  CHECK(c.threads == 2);
  CHECK(c.train.objective == Objective::ssim_only);
  CHECK(c.log_axes);
  CHECK(c.resolved_train().seed == 9);
  CHECK(c.resolved_synth().seed == 9);
}

TEST_CASE("unknown keys and sections are errors with a line number") {
  const std::string e = error_of("[run]\nseed = 1\nsede = 2\n");
  CHECK(e.find("line 3") != std::string::npos);
  CHECK(e.find("sede") != std::string::npos);
  CHECK(error_of("[nope]\nx = 1\n").find("unknown config section") != std::string::npos);
  CHECK(error_of("seed = 1\n").find("outside") != std::string::npos);
  CHECK(error_of("[run\n").find("unterminated") != std::string::npos);
  CHECK(error_of("[run]\nseed\n").find("key = value") != std::string::npos);
}

TEST_CASE("bad values are rejected") {
  CHECK_FALSE(error_of("[run]\nseed = abc\n").empty());
  CHECK_FALSE(error_of("[run]\nthreads = 0\n").empty());
  CHECK_FALSE(error_of("[loss]\nalpha = 2\n").empty());
  CHECK_FALSE(error_of("[eval]\nlog_axes = maybe\n").empty());
  CHECK_FALSE(error_of("[train]\nobjective = l1\n").empty());
  CHECK_FALSE(error_of("[train]\nbatch_size = 3\n").empty());
  CHECK_FALSE(error_of("[encoder]\nwidth = 256\n").empty());  // differs from synth.width
}

TEST_CASE("overrides") {
  RunConfig c;
  apply_override(c, "loss.noise_sigma=0");
  apply_override(c, "train.init = random");
  apply_override(c, "ablate.seeds=4,5,6");
  CHECK(c.loss.noise_sigma == 0.0);
  CHECK(c.train.init == EncoderInit::random);
  CHECK(c.ablate_seeds == std::vector<std::uint64_t>{4, 5, 6});
  CHECK_THROWS_AS(apply_override(c, "loss.noise_sigma"), ConfigError);
  CHECK_THROWS_AS(apply_override(c, "noise_sigma=1"), ConfigError);
  CHECK_THROWS_AS(apply_override(c, "loss.sigma=1"), ConfigError);
  CHECK(config_digest(c) != config_digest(RunConfig{}));
}

TEST_CASE("FNV-1a reference values") {
  CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
}

TEST_CASE("prepare_data splits and trims") {
  RunConfig c;
  c.synth.n_classes = 6;
  c.synth.imgs_per_class = 5;
  c.synth.height = c.encoder.height = 16;
  c.synth.width = c.encoder.width = 64;
  c.encoder.channels = {2, 4};
  c.train_per_class = 3;
  c.test_per_class = 2;
  const RunData d = prepare_data(c, 1);
  CHECK(d.train.classes().size() == 4);
  CHECK(d.test.classes().size() == 2);
  CHECK(d.train.size() == 12);
  CHECK(d.test.size() == 4);
}

}  // TEST_SUITE
