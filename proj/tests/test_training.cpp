#include "texmatch/ops.hpp"
#include "texmatch/reference.hpp"
#include "texmatch/training.hpp"

#include <doctest.h>

#include <cmath>
#include <limits>

using namespace texmatch;

namespace {

Dataset tiny(Index classes, Index per_class) {
  SynthConfig sc;
  sc.n_classes = classes;
  sc.imgs_per_class = per_class;
  sc.height = 16;
  sc.width = 32;
  sc.min_wavelength = 4;
  sc.max_wavelength = 16;
  sc.noise_cell = 4;
  sc.max_shift = 4;
  return generate_synthetic(sc);
}

TrainConfig tiny_config() {
  TrainConfig t;
  t.batch_size = 4;
  t.stage1_epochs = 2;
  t.stage2_epochs = 2;
  t.encoder.channels = {2, 4};
  t.encoder.height = 16;
  t.encoder.width = 32;
  t.head = {8, 4};
  t.loss.ssim_window = 7;
  return t;
}

double epoch_mean(const std::vector<LogRecord>& log, Index epoch) {
  double s = 0;
  int n = 0;
  for (const auto& r : log)
    if (r.epoch == epoch) s += r.loss, ++n;
  return s / n;
}

}  // namespace

TEST_SUITE("training") {

TEST_CASE("Adam follows the textbook update") {
  const AdamConfig ac{0.05, 0.9, 0.999, 1e-8};
  Tensor<double> w = Tensor<double>::parameter({1}, Array<double>::Constant(1, 3.0));
  Adam<double> opt({w}, ac);
  const auto ref = reference::adam_quadratic(3.0, -1.0, 200, ac.lr, ac.beta1, ac.beta2, ac.eps);
  for (int t = 0; t < 200; ++t) {
    opt.zero_grad();
    const auto d = w + Tensor<double>::scalar(1.0);
    backward(sum(d * d));
    opt.step();
    CHECK(w.value()[0] == doctest::Approx(ref[static_cast<std::size_t>(t)]).epsilon(1e-10));
  }
  CHECK(opt.steps() == 200);
}

TEST_CASE("objective and init names round trip") {
  for (auto o : {Objective::ssim_only, Objective::relational, Objective::relational_denoising})
    CHECK(parse_objective(to_string(o)) == o);
  for (auto i : {EncoderInit::random, EncoderInit::from_checkpoint}) CHECK(parse_encoder_init(to_string(i)) == i);
  CHECK_THROWS_AS(parse_objective("l2"), std::invalid_argument);
}

TEST_CASE("stage 1 is deterministic for a seed and logs every step") {
  const Dataset d = tiny(3, 4);
  TrainConfig cfg = tiny_config();
  int calls = 0;
  cfg.on_epoch = [&](int stage, Index, double loss) {
    CHECK(stage == 1);
    CHECK(std::isfinite(loss));
    ++calls;
  };
  const TrainResult a = pretrain_stage1(cfg, d), b = pretrain_stage1(cfg, d);
  CHECK(calls == 4);
  REQUIRE(a.log.size() == 6);  // 12 images / batch 4, two epochs
  CHECK(a.log.back().step == 6);
  CHECK(format_log(a.log) == format_log(b.log));
  CHECK(a.checkpoint.serialize() == b.checkpoint.serialize());
  CHECK(format_log(a.log).rfind("1\t1\t", 0) == 0);

  cfg.seed = 2;
  CHECK(format_log(pretrain_stage1(cfg, d).log) != format_log(a.log));
}

TEST_CASE("stage 1 loss goes down") {
  const Dataset d = tiny(3, 4);
  TrainConfig cfg = tiny_config();
  cfg.stage1_epochs = 15;
  cfg.adam.lr = 3e-3;
  cfg.objective = Objective::ssim_only;
  const TrainResult r = pretrain_stage1(cfg, d);
  CHECK(epoch_mean(r.log, 15) < 0.8 * epoch_mean(r.log, 1));
}

TEST_CASE("non-finite input stops training with a numeric error") {
  Dataset d = tiny(2, 4);
  d.samples[0].pixels[5] = std::numeric_limits<float>::quiet_NaN();
  TrainConfig cfg = tiny_config();
  cfg.stage1_epochs = 1;
  CHECK_THROWS_AS(pretrain_stage1(cfg, d), NumericError);
}

TEST_CASE("training rejects bad configurations") {
  const Dataset d = tiny(2, 4);
  TrainConfig cfg = tiny_config();
  cfg.batch_size = 3;
  CHECK_THROWS_AS(pretrain_stage1(cfg, d), std::invalid_argument);
  cfg = tiny_config();
  cfg.encoder.width = 64;
  CHECK_THROWS_AS(pretrain_stage1(cfg, d), std::invalid_argument);
  cfg = tiny_config();
  cfg.init = EncoderInit::from_checkpoint;
  CHECK_THROWS_AS(train_stage2(cfg, d, nullptr), std::invalid_argument);
}

TEST_CASE("stage 2 starts from the stage-1 encoder and trains the whole network") {
  const Dataset d = tiny(3, 4);
  TrainConfig cfg = tiny_config();
  const TrainResult s1 = pretrain_stage1(cfg, d);
  cfg.init = EncoderInit::from_checkpoint;
  cfg.stage2_epochs = 2;
  const TrainResult s2 = train_stage2(cfg, d, &s1.checkpoint);
  const TrainResult again = train_stage2(cfg, d, &s1.checkpoint);
  CHECK(s2.checkpoint.serialize() == again.checkpoint.serialize());
  CHECK_FALSE(s2.log.empty());

  const auto* before = s1.checkpoint.find("encoder.block1.conv.weight");
  const auto* after = s2.checkpoint.find("encoder.block1.conv.weight");
  REQUIRE(before);
  REQUIRE(after);
  CHECK(before->payload != after->payload);  // fine-tuned, not frozen
  CHECK(s2.checkpoint.find("head.fc2.bias"));
  CHECK_FALSE(s2.checkpoint.find("decoder.out.conv.weight"));

  auto m = load_matcher(s2.checkpoint, cfg.encoder, cfg.head);
  CHECK(m.store().learnable_count() == count_params_flops(cfg.encoder, cfg.head).params);
}

TEST_CASE("reconstruction SSIM is in range") {
  const Dataset d = tiny(2, 4);
  TrainConfig cfg = tiny_config();
  const TrainResult r = pretrain_stage1(cfg, d);
  auto ae = load_autoencoder(r.checkpoint, cfg.encoder);
  const double s = reconstruction_ssim(ae, d, cfg.loss);
  CHECK(s > -1.0);
  CHECK(s < 1.0);
}

}  // TEST_SUITE
