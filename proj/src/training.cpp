#include "texmatch/training.hpp"

#include "texmatch/number_format.hpp"
#include "texmatch/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace texmatch {

std::string_view to_string(Objective o) {
  switch (o) {
    case Objective::ssim_only: return "ssim_only";
    case Objective::relational: return "relational";
    case Objective::relational_denoising: return "relational_denoising";
  }
  return "?";
}

std::string_view to_string(EncoderInit i) { return i == EncoderInit::random ? "random" : "from_checkpoint"; }

Objective parse_objective(std::string_view s) {
  if (s == "ssim_only") return Objective::ssim_only;
  if (s == "relational") return Objective::relational;
  if (s == "relational_denoising") return Objective::relational_denoising;
  throw std::invalid_argument("unknown objective '" + std::string(s) +
                              "' (expected ssim_only, relational, relational_denoising)");
}

EncoderInit parse_encoder_init(std::string_view s) {
  if (s == "random") return EncoderInit::random;
  if (s == "from_checkpoint") return EncoderInit::from_checkpoint;
  throw std::invalid_argument("unknown init '" + std::string(s) + "' (expected random, from_checkpoint)");
}

void TrainConfig::validate() const {
  if (batch_size < 2 || batch_size % 2 != 0) throw std::invalid_argument("batch_size must be even and >= 2");
  if (stage1_epochs < 0 || stage2_epochs < 0) throw std::invalid_argument("epoch counts must be non-negative");
  if (stage2_steps_per_epoch < 0) throw std::invalid_argument("stage2_steps_per_epoch must be non-negative");
  if (eval_every < 0) throw std::invalid_argument("eval_every must be non-negative");
  loss.validate();
  encoder.validate();
}

namespace {

std::string channels_str(const EncoderConfig& cfg) {
  std::string s;
  for (std::size_t i = 0; i < cfg.channels.size(); ++i) s += (i ? "," : "") + std::to_string(cfg.channels[i]);
  return s;
}

std::map<std::string, std::string> base_metadata(const TrainConfig& cfg, int stage, Index steps) {
  auto meta = cfg.metadata;
  meta["stage"] = std::to_string(stage);
  meta["seed"] = std::to_string(cfg.seed);
  meta["step"] = std::to_string(steps);
  meta["encoder.channels"] = channels_str(cfg.encoder);
  meta["encoder.height"] = std::to_string(cfg.encoder.height);
  meta["encoder.width"] = std::to_string(cfg.encoder.width);
  return meta;
}

void check_finite(double loss, int stage, Index epoch, Index step) {
  if (!std::isfinite(loss)) {
    std::ostringstream os;
    os << "stage " << stage << " loss became non-finite (" << loss << ") at epoch " << epoch << ", step " << step
       << "; lower the learning rate";
    throw NumericError(os.str());
  }
}

void check_geometry(const TrainConfig& cfg, const Dataset& data) {
  if (data.height != cfg.encoder.height || data.width != cfg.encoder.width) {
    std::ostringstream os;
    os << "dataset images are " << data.height << "x" << data.width << " but the encoder expects "
       << cfg.encoder.height << "x" << cfg.encoder.width;
    throw std::invalid_argument(os.str());
  }
}

Tensor<float> stage1_loss(Objective objective, const Tensor<float>& clean, const Tensor<float>& recon,
                          const LossConfig& loss) {
  switch (objective) {
    case Objective::ssim_only: return ssim_loss(clean, recon, loss);
    case Objective::relational: return relational_loss(clean, recon, loss);
    case Objective::relational_denoising: return denoising_relational_loss(clean, recon, loss);
  }
  throw std::logic_error("unhandled objective");
}

double validation_bce(Matcher<float>& model, const Dataset& validation, const PairIndices& pairs) {
  NoGradGuard guard;
  model.set_mode(Mode::eval);
  double total = 0;
  const std::size_t chunk = 16;
  for (std::size_t i = 0; i < pairs.y.size(); i += chunk) {
    const std::size_t n = std::min(chunk, pairs.y.size() - i);
    PairIndices part;
    part.a.assign(pairs.a.begin() + static_cast<std::ptrdiff_t>(i), pairs.a.begin() + static_cast<std::ptrdiff_t>(i + n));
    part.b.assign(pairs.b.begin() + static_cast<std::ptrdiff_t>(i), pairs.b.begin() + static_cast<std::ptrdiff_t>(i + n));
    part.y.assign(pairs.y.begin() + static_cast<std::ptrdiff_t>(i), pairs.y.begin() + static_cast<std::ptrdiff_t>(i + n));
    const auto batch = make_pair_batch<float>(validation, part);
    total += static_cast<double>(bce_loss(model.forward(batch.a, batch.b), batch.y).item()) * static_cast<double>(n);
  }
  model.set_mode(Mode::train);
  return total / static_cast<double>(pairs.y.size());
}

void report_epoch(const TrainConfig& cfg, int stage, Index epoch, const std::vector<LogRecord>& log) {
  if (!cfg.on_epoch) return;
  double sum = 0;
  Index n = 0;
  for (auto it = log.rbegin(); it != log.rend() && it->epoch == epoch; ++it, ++n) sum += it->loss;
  cfg.on_epoch(stage, epoch, n ? sum / static_cast<double>(n) : 0.0);
}

}  // namespace

TrainResult pretrain_stage1(const TrainConfig& cfg, const Dataset& train, const Dataset* validation) {
  cfg.validate();
  check_geometry(cfg, train);
  if (train.size() < 2) throw std::invalid_argument("stage 1 needs at least 2 training images");

  Rng init(cfg.seed, Stream::init);
  Rng shuffle(cfg.seed, Stream::shuffle);
  Rng noise(cfg.seed, Stream::noise);
  auto model = build_autoencoder<float>(cfg.encoder, init);
  Adam<float> adam(model.store().learnable(), cfg.adam);
  model.set_mode(Mode::train);

  TrainResult result;
  std::vector<std::size_t> order(train.size());
  Index step = 0;
  for (Index epoch = 1; epoch <= cfg.stage1_epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = order.size() - 1; i > 0; --i) {
      std::swap(order[i], order[static_cast<std::size_t>(shuffle.below(i + 1))]);
    }
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t n = std::min(static_cast<std::size_t>(cfg.batch_size), order.size() - start);
      if (n < 2) break;
      const auto clean = make_image_batch<float>(train, std::span(order).subspan(start, n));
      const auto input = cfg.objective == Objective::relational_denoising
                             ? corrupt(clean, cfg.loss.noise_sigma, noise)
                             : clean;
      const auto loss = stage1_loss(cfg.objective, clean, model.forward(input), cfg.loss);
      ++step;
      const double value = loss.item();
      check_finite(value, 1, epoch, step);
      adam.zero_grad();
      backward(loss);
      adam.step();
      result.log.push_back({epoch, step, value});
    }
    if (validation && cfg.eval_every > 0 && epoch % cfg.eval_every == 0) {
      result.evals.push_back({epoch, reconstruction_ssim(model, *validation, cfg.loss)});
      model.set_mode(Mode::train);
    }
    report_epoch(cfg, 1, epoch, result.log);
  }
  auto meta = base_metadata(cfg, 1, step);
  meta["decoder.kernel"] = std::to_string(cfg.encoder.decoder_kernel);
  meta["objective"] = std::string(to_string(cfg.objective));
  result.checkpoint = make_checkpoint(model.store(), std::move(meta));
  return result;
}

TrainResult train_stage2(const TrainConfig& cfg, const Dataset& train, const Checkpoint* init_ckpt,
                         const Dataset* validation) {
  cfg.validate();
  check_geometry(cfg, train);
  if (cfg.init == EncoderInit::from_checkpoint && !init_ckpt) {
    throw std::invalid_argument("stage 2 with init=from_checkpoint needs a stage-1 checkpoint");
  }
  Rng init(cfg.seed, Stream::init);
  Rng pairs(cfg.seed, Stream::pairs);
  auto model = build_matcher<float>(cfg.encoder, cfg.head, init,
                                    cfg.init == EncoderInit::from_checkpoint ? init_ckpt : nullptr);
  Adam<float> adam(model.store().learnable(), cfg.adam);
  model.set_mode(Mode::train);

  PairIndices validation_pairs;
  if (validation && cfg.eval_every > 0) {
    Rng vr(cfg.seed, Stream::test);
    validation_pairs = sample_pair_indices(*validation, 64, vr);
  }

  const Index steps_per_epoch =
      cfg.stage2_steps_per_epoch > 0
          ? cfg.stage2_steps_per_epoch
          : (static_cast<Index>(train.size()) + cfg.batch_size - 1) / cfg.batch_size;
  TrainResult result;
  Index step = 0;
  for (Index epoch = 1; epoch <= cfg.stage2_epochs; ++epoch) {
    for (Index s = 0; s < steps_per_epoch; ++s) {
      const auto batch = sample_pair_batch<float>(train, cfg.batch_size, pairs);
      const auto loss = bce_loss(model.forward(batch.a, batch.b), batch.y);
      ++step;
      const double value = loss.item();
      check_finite(value, 2, epoch, step);
      adam.zero_grad();
      backward(loss);
      adam.step();
      result.log.push_back({epoch, step, value});
    }
    if (validation && cfg.eval_every > 0 && epoch % cfg.eval_every == 0) {
      result.evals.push_back({epoch, validation_bce(model, *validation, validation_pairs)});
    }
    report_epoch(cfg, 2, epoch, result.log);
  }
  auto meta = base_metadata(cfg, 2, step);
  meta["init"] = std::string(to_string(cfg.init));
  meta["head.embed_dim"] = std::to_string(cfg.head.embed_dim);
  meta["head.hidden"] = std::to_string(cfg.head.hidden);
  if (init_ckpt && cfg.init == EncoderInit::from_checkpoint) {
    auto it = init_ckpt->metadata.find("objective");
    if (it != init_ckpt->metadata.end()) meta["stage1.objective"] = it->second;
  }
  result.checkpoint = make_checkpoint(model.store(), std::move(meta));
  return result;
}

std::string format_log(const std::vector<LogRecord>& log) {
  std::string out;
  for (const auto& r : log) {
    out += std::to_string(r.epoch) + '\t' + std::to_string(r.step) + '\t' + format_number(r.loss) + '\n';
  }
  return out;
}

Autoencoder<float> load_autoencoder(const Checkpoint& ckpt, const EncoderConfig& cfg) {
  Rng init(0, Stream::init);
  auto model = build_autoencoder<float>(cfg, init);
  load_into(ckpt, model.store(), LoadScope::all);
  return model;
}

Matcher<float> load_matcher(const Checkpoint& ckpt, const EncoderConfig& cfg, const MatcherHeadConfig& head) {
  Rng init(0, Stream::init);
  auto model = build_matcher<float>(cfg, head, init);
  load_into(ckpt, model.store(), LoadScope::all);
  return model;
}

double reconstruction_ssim(Autoencoder<float>& model, const Dataset& data, const LossConfig& loss,
                           Index batch_size) {
  if (data.size() == 0) throw std::invalid_argument("reconstruction_ssim on an empty dataset");
  NoGradGuard guard;
  model.set_mode(Mode::eval);
  std::vector<std::size_t> idx(data.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  double total = 0;
  for (std::size_t start = 0; start < idx.size(); start += static_cast<std::size_t>(batch_size)) {
    const std::size_t n = std::min(static_cast<std::size_t>(batch_size), idx.size() - start);
    const auto x = make_image_batch<float>(data, std::span(idx).subspan(start, n));
    total += ssim(x, model.forward(x), loss) * static_cast<double>(n);
  }
  return total / static_cast<double>(data.size());
}

}  // namespace texmatch
