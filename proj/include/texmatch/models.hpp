#pragma once

#include "texmatch/checkpoint.hpp"
#include "texmatch/layers.hpp"
#include "texmatch/rng.hpp"
#include "texmatch/tensor.hpp"

#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace texmatch {

/// Convolutional encoder geometry. Each entry of `channels` is one
/// conv(3x3, pad 1) -> BN -> PReLU -> avgpool(2x2) block.
struct EncoderConfig {
  std::vector<Index> channels{8, 16, 32, 64, 128, 256};
  Index height = 64;
  Index width = 512;
  /// Decoder transposed convs are stride 2 with a 2x2 kernel (pad 0, tiles do
  /// not overlap) or a 4x4 kernel (pad 1, neighbouring tiles overlap).
  Index decoder_kernel = 4;

  Index depth() const { return static_cast<Index>(channels.size()); }
  Index top_channels() const { return channels.back(); }
  /// Spatial extent of the bottleneck: input / 2^depth.
  std::pair<Index, Index> bottleneck_extent() const;
  /// Six-block encoders must end in 256 or 1024 channels; shallower ones are
  /// allowed for small test models. Input extents must divide by 2^depth.
  void validate() const;
};

struct MatcherHeadConfig {
  Index embed_dim = 512;
  Index hidden = 128;
};

/// Every tensor of a model under a stable hierarchical name, e.g.
/// `encoder.block3.conv.weight` or `encoder.block3.bn.running_var`.
template <typename Scalar>
class ParameterStore {
 public:
  struct Entry {
    std::string name;
    Tensor<Scalar> tensor;
    bool learnable;
  };

  Tensor<Scalar> add(std::string name, Tensor<Scalar> tensor, bool learnable);
  const Tensor<Scalar>& at(std::string_view name) const;
  bool contains(std::string_view name) const;

  const std::vector<Entry>& entries() const { return entries_; }
  std::vector<Tensor<Scalar>> learnable() const;
  Index learnable_count() const;
  void zero_grad();

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

template <typename Scalar>
class Encoder {
 public:
  Encoder() = default;
  Encoder(const EncoderConfig& cfg, ParameterStore<Scalar>& store, Rng& init);

  /// N x 1 x H x W -> N x C_top x H/2^d x W/2^d.
  Tensor<Scalar> forward(const Tensor<Scalar>& x);
  void set_mode(Mode mode);
  const std::vector<ConvSpec>& specs() const { return specs_; }

 private:
  struct Block {
    Tensor<Scalar> weight, bias, slope;
    BatchNormState<Scalar> bn;
  };
  std::vector<ConvSpec> specs_;
  std::vector<Block> blocks_;
};

template <typename Scalar>
class Decoder {
 public:
  Decoder() = default;
  Decoder(const EncoderConfig& cfg, ParameterStore<Scalar>& store, Rng& init);

  /// Bottleneck -> N x 1 x H x W in (0, 1).
  Tensor<Scalar> forward(const Tensor<Scalar>& code);
  void set_mode(Mode mode);

 private:
  struct Block {
    Tensor<Scalar> weight, bias, slope;
    BatchNormState<Scalar> bn;
    ConvSpec spec;
  };
  std::vector<Block> blocks_;
  Tensor<Scalar> out_weight_, out_bias_;
  ConvSpec out_spec_;
};

/// Stage-1 model: encoder parameters (theta) and decoder parameters (phi).
template <typename Scalar>
class Autoencoder {
 public:
  Autoencoder(const EncoderConfig& cfg, Rng& init);

  Tensor<Scalar> forward(const Tensor<Scalar>& x);
  Tensor<Scalar> encode(const Tensor<Scalar>& x) { return encoder_.forward(x); }
  void set_mode(Mode mode);

  const EncoderConfig& config() const { return cfg_; }
  ParameterStore<Scalar>& store() { return store_; }
  const ParameterStore<Scalar>& store() const { return store_; }

 private:
  EncoderConfig cfg_;
  ParameterStore<Scalar> store_;
  Encoder<Scalar> encoder_;
  Decoder<Scalar> decoder_;
};

/// Stage-2 model. One physical encoder serves both pair members, so gradients
/// from the two branches accumulate into the same tensors.
template <typename Scalar>
class Matcher {
 public:
  Matcher(const EncoderConfig& cfg, const MatcherHeadConfig& head, Rng& init);

  /// Branch embedding: encoder -> TEL -> FC -> PReLU, shape N x embed_dim.
  Tensor<Scalar> embed(const Tensor<Scalar>& x);
  /// Dissimilarity in (0, 1) from two embedding batches, shape N.
  Tensor<Scalar> score_embeddings(const Tensor<Scalar>& a, const Tensor<Scalar>& b);
  /// Dissimilarity per pair (probability of "different class"), shape N.
  Tensor<Scalar> forward(const Tensor<Scalar>& a, const Tensor<Scalar>& b);
  void set_mode(Mode mode);

  const EncoderConfig& config() const { return cfg_; }
  const MatcherHeadConfig& head_config() const { return head_; }
  ParameterStore<Scalar>& store() { return store_; }
  const ParameterStore<Scalar>& store() const { return store_; }

 private:
  EncoderConfig cfg_;
  MatcherHeadConfig head_;
  ParameterStore<Scalar> store_;
  Encoder<Scalar> encoder_;
  Tensor<Scalar> embed_w_, embed_b_, embed_slope_;
  Tensor<Scalar> fc1_w_, fc1_b_, head_slope_, fc2_w_, fc2_b_;
};

template <typename Scalar>
Autoencoder<Scalar> build_autoencoder(const EncoderConfig& cfg, Rng& init);

/// Head is always freshly initialized from `init`; the encoder is copied from
/// `stage1` when given (names and shapes must match).
template <typename Scalar>
Matcher<Scalar> build_matcher(const EncoderConfig& cfg, const MatcherHeadConfig& head, Rng& init,
                              const Checkpoint* stage1 = nullptr);

struct Complexity {
  Index params = 0;
  Index flops = 0;
};

Index conv_params(const ConvSpec& spec);
Index conv_flops(const ConvSpec& spec, Index out_h, Index out_w);
Index fc_params(Index in, Index out);
Index fc_flops(Index in, Index out);

/// Learnable scalars of the matcher, and 2 x MACs of its conv/FC layers for one
/// input image through encoder, TEL, embedding FC and head.
Complexity count_params_flops(const EncoderConfig& cfg, const MatcherHeadConfig& head);

template <typename Scalar>
Complexity count_params_flops(const Matcher<Scalar>& matcher);

}  // namespace texmatch
