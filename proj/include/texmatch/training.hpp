#pragma once

#include "texmatch/checkpoint.hpp"
#include "texmatch/data.hpp"
#include "texmatch/losses.hpp"
#include "texmatch/models.hpp"
#include "texmatch/optim.hpp"

#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace texmatch {

/// Stage-1 objective: 1 - SSIM alone, the relational loss, or the relational
/// loss on a reconstruction of a noise-corrupted input.
enum class Objective { ssim_only, relational, relational_denoising };

/// Stage-2 encoder initialization.
enum class EncoderInit { random, from_checkpoint };

std::string_view to_string(Objective o);
std::string_view to_string(EncoderInit i);
Objective parse_objective(std::string_view s);
EncoderInit parse_encoder_init(std::string_view s);

struct TrainConfig {
  Index batch_size = 32;
  Index stage1_epochs = 60;
  Index stage2_epochs = 30;
  /// Stage-2 pair batches per epoch; 0 means ceil(train images / batch_size).
  Index stage2_steps_per_epoch = 0;
  Objective objective = Objective::relational_denoising;
  EncoderInit init = EncoderInit::from_checkpoint;
  std::uint64_t seed = 1;
  /// Evaluate on the validation set every this many epochs (0 = never).
  Index eval_every = 0;

  LossConfig loss;
  AdamConfig adam;
  EncoderConfig encoder;
  MatcherHeadConfig head;
  /// Copied into every checkpoint this config produces (e.g. a config digest).
  std::map<std::string, std::string> metadata;
  /// Called after every epoch with the stage (1 or 2) and the epoch's mean loss.
  std::function<void(int stage, Index epoch, double mean_loss)> on_epoch;

  void validate() const;
};

/// One optimizer step; serialized as `epoch<TAB>step<TAB>loss`.
struct LogRecord {
  Index epoch = 0;
  Index step = 0;  ///< global, 1-based
  double loss = 0;
};

/// Validation metric at the end of an epoch: mean reconstruction SSIM (Stage 1)
/// or mean BCE on fixed validation pairs (Stage 2).
struct EvalRecord {
  Index epoch = 0;
  double value = 0;
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<LogRecord> log;
  std::vector<EvalRecord> evals;
};

/// Shuffled mini-batches of the whole training set each epoch. A trailing batch
/// with fewer than 2 images is dropped (batch norm needs two).
TrainResult pretrain_stage1(const TrainConfig& cfg, const Dataset& train, const Dataset* validation = nullptr);

/// Balanced pair batches, BCE, whole-network fine-tuning. `init` is required
/// when cfg.init == EncoderInit::from_checkpoint and ignored otherwise.
TrainResult train_stage2(const TrainConfig& cfg, const Dataset& train, const Checkpoint* init,
                         const Dataset* validation = nullptr);

/// Writes the log in its line format.
std::string format_log(const std::vector<LogRecord>& log);

Autoencoder<float> load_autoencoder(const Checkpoint& ckpt, const EncoderConfig& cfg);
Matcher<float> load_matcher(const Checkpoint& ckpt, const EncoderConfig& cfg, const MatcherHeadConfig& head);

/// Mean SSIM between images and their eval-mode reconstructions.
double reconstruction_ssim(Autoencoder<float>& model, const Dataset& data, const LossConfig& loss,
                           Index batch_size = 16);

}  // namespace texmatch
