#include "texmatch/models.hpp"
#include "texmatch/ops.hpp"

#include <doctest.h>

#include <cmath>

using namespace texmatch;

namespace {

template <typename S>
Tensor<S> images(Index n, Index h, Index w, std::uint64_t key) {
  Rng r = Rng(31, Stream::test).derive(key);
  Array<S> a(n * h * w);
  for (auto& v : a) v = static_cast<S>(r.uniform());
  return Tensor<S>::from({n, 1, h, w}, a);
}

EncoderConfig small_encoder() {
  EncoderConfig cfg;
  cfg.channels = {2, 4};
  cfg.height = 8;
  cfg.width = 16;
  return cfg;
}

}  // namespace

TEST_SUITE("models") {

TEST_CASE("default autoencoder and matcher shapes") {
  const EncoderConfig cfg;
  Rng init(1, Stream::init);
  auto ae = build_autoencoder<float>(cfg, init);
  const auto x = images<float>(4, 64, 512, 1);
  {
    NoGradGuard g;
    const auto code = ae.encode(x);
    CHECK(code.shape() == Shape{4, 256, 1, 8});
    const auto y = ae.forward(x);
    CHECK(y.shape() == Shape{4, 1, 64, 512});
    CHECK(y.value().minCoeff() > 0.0f);
    CHECK(y.value().maxCoeff() < 1.0f);
  }
  CHECK(cfg.bottleneck_extent() == std::pair<Index, Index>{1, 8});

  Rng init2(1, Stream::init);
  auto m = build_matcher<float>(cfg, MatcherHeadConfig{}, init2);
  NoGradGuard g;
  CHECK(m.embed(x).shape() == Shape{4, 512});
  CHECK(m.forward(x, x).shape() == Shape{4});
}

TEST_CASE("encoder config validation") {
  EncoderConfig cfg;
  cfg.validate();
  cfg.channels = {16, 32, 64, 128, 256, 512};
  CHECK_THROWS_AS(cfg.validate(), ShapeError);
  cfg = EncoderConfig{};
  cfg.width = 500;
  CHECK_THROWS_AS(cfg.validate(), ShapeError);
  cfg = EncoderConfig{};
  cfg.decoder_kernel = 3;
  CHECK_THROWS_AS(cfg.validate(), ShapeError);
}

TEST_CASE("matcher score is symmetric in its two inputs") {
  Rng init(2, Stream::init);
  auto m = build_matcher<double>(small_encoder(), MatcherHeadConfig{8, 4}, init);
  m.set_mode(Mode::eval);
  const auto a = images<double>(3, 8, 16, 2), b = images<double>(3, 8, 16, 3);
  NoGradGuard g;
  const auto ab = m.forward(a, b), ba = m.forward(b, a);
  for (Index i = 0; i < 3; ++i) {
    CHECK(ab.value()[i] == ba.value()[i]);
    CHECK(ab.value()[i] > 0.0);
    CHECK(ab.value()[i] < 1.0);
  }
  CHECK_THROWS_AS(m.forward(a, images<double>(2, 8, 16, 4)), ShapeError);
  CHECK_THROWS_AS(m.embed(images<double>(2, 8, 8, 5)), ShapeError);
}

TEST_CASE("the shared encoder accumulates gradients from both branches") {
  Rng init(3, Stream::init);
  auto m = build_matcher<double>(small_encoder(), MatcherHeadConfig{8, 4}, init);
  const auto a = images<double>(2, 8, 16, 6), b = images<double>(2, 8, 16, 7);
  const auto w = m.store().at("encoder.block1.conv.weight");

  m.store().zero_grad();
  backward(sum(m.forward(a, b)));
  const Array<double> both = w.grad();

  auto one_branch = [&](bool first) {
    m.store().zero_grad();
    Tensor<double> ea, eb;
    if (first) {
      ea = m.embed(a);
      eb = detach(m.embed(b));
    } else {
      ea = detach(m.embed(a));
      eb = m.embed(b);
    }
    backward(sum(m.score_embeddings(ea, eb)));
    return Array<double>(w.grad());
  };
  const Array<double> ga = one_branch(true), gb = one_branch(false);
  CHECK((both.abs() > 0).any());
  CHECK(((both - (ga + gb)).abs() <= 1e-12 * (1.0 + both.abs())).all());
}

TEST_CASE("parameter store names are unique and stable") {
  Rng init(4, Stream::init);
  auto ae = build_autoencoder<double>(small_encoder(), init);
  const auto& e = ae.store().entries();
  REQUIRE(!e.empty());
  CHECK(e.front().name == "encoder.block1.conv.weight");
  CHECK(ae.store().contains("encoder.block2.bn.running_var"));
  CHECK_FALSE(ae.store().at("encoder.block2.bn.running_var").requires_grad());
  CHECK_THROWS(ae.store().at("no.such.tensor"));
}

TEST_CASE("parameter and FLOP counts follow the layer formulas") {
  ConvSpec s;
  s.in_channels = 16;
  s.out_channels = 32;
  CHECK(conv_params(s) == 16 * 32 * 9 + 32);
  CHECK(conv_flops(s, 10, 20) == 2 * 16 * 32 * 9 * 10 * 20);
  CHECK(fc_params(256, 512) == 256 * 512 + 512);
  CHECK(fc_flops(256, 512) == 2 * 256 * 512);

  // Hand count for the default geometry: conv + BN (2 per channel) + PReLU (1 per channel) per block.
  const Index blocks = (1 * 8 * 9 + 8 + 24) + (8 * 16 * 9 + 16 + 48) + (16 * 32 * 9 + 32 + 96) +
                       (32 * 64 * 9 + 64 + 192) + (64 * 128 * 9 + 128 + 384) + (128 * 256 * 9 + 256 + 768);
  const Index head = (256 * 512 + 512 + 512) + (512 * 128 + 128 + 128) + (128 + 1);
  const Index conv_macs = 32768 * 1 * 8 * 9 + 8192 * 8 * 16 * 9 + 2048 * 16 * 32 * 9 + 512 * 32 * 64 * 9 +
                          128 * 64 * 128 * 9 + 32 * 128 * 256 * 9;
  const Index fc_macs = 256 * 512 + 512 * 128 + 128;
  const Complexity c = count_params_flops(EncoderConfig{}, MatcherHeadConfig{});
  CHECK(c.params == blocks + head);
  CHECK(c.params == 592937);
  CHECK(c.flops == 2 * (conv_macs + fc_macs));
  CHECK(c.flops == 99483904);
  MESSAGE("default matcher: " << c.params << " parameters, " << c.flops << " FLOPs per image");

  Rng init(5, Stream::init);
  const auto m = build_matcher<float>(EncoderConfig{}, MatcherHeadConfig{}, init);
  CHECK(m.store().learnable_count() == c.params);
  CHECK(count_params_flops(m).params == c.params);
}

}  // TEST_SUITE
