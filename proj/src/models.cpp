#include "texmatch/models.hpp"

#include "texmatch/ops.hpp"

#include <cmath>
#include <sstream>

namespace texmatch {

namespace {

template <typename Scalar>
Array<Scalar> uniform_init(Index count, double bound, Rng& rng) {
  Array<Scalar> a(count);
  for (Index i = 0; i < count; ++i) a[i] = static_cast<Scalar>(rng.uniform(-bound, bound));
  return a;
}

// Weights and bias drawn from U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
template <typename Scalar>
std::pair<Tensor<Scalar>, Tensor<Scalar>> init_affine(const Shape& weight_shape, Index bias_count, double fan_in,
                                                      Rng& rng) {
  const double bound = 1.0 / std::sqrt(fan_in);
  auto w = Tensor<Scalar>::parameter(weight_shape, uniform_init<Scalar>(weight_shape.numel(), bound, rng));
  auto b = Tensor<Scalar>::parameter(Shape{bias_count}, uniform_init<Scalar>(bias_count, bound, rng));
  return {w, b};
}

template <typename Scalar>
Tensor<Scalar> prelu_slopes(Index channels) {
  return Tensor<Scalar>::parameter(Shape{channels}, Array<Scalar>::Constant(channels, Scalar(0.25)));
}

template <typename Scalar>
void register_bn(ParameterStore<Scalar>& store, const std::string& prefix, const BatchNormState<Scalar>& bn) {
  store.add(prefix + ".weight", bn.gamma, true);
  store.add(prefix + ".bias", bn.beta, true);
  store.add(prefix + ".running_mean", bn.running_mean, false);
  store.add(prefix + ".running_var", bn.running_var, false);
}

ConvSpec encoder_conv(Index in, Index out) {
  ConvSpec s;
  s.in_channels = in;
  s.out_channels = out;
  s.kernel = {3, 3};
  s.padding = {1, 1};
  return s;
}

ConvSpec decoder_convt(Index in, Index out, Index k) {
  ConvSpec s;
  s.in_channels = in;
  s.out_channels = out;
  s.kernel = {k, k};
  s.stride = {2, 2};
  s.padding = {(k - 2) / 2, (k - 2) / 2};
  s.transposed = true;
  return s;
}

}  // namespace

std::pair<Index, Index> EncoderConfig::bottleneck_extent() const {
  const Index f = Index{1} << depth();
  return {height / f, width / f};
}

void EncoderConfig::validate() const {
  if (channels.empty()) throw ShapeError("encoder needs at least one block");
  if (decoder_kernel != 2 && decoder_kernel != 4) throw ShapeError("decoder_kernel must be 2 or 4");
  for (Index c : channels) {
    if (c < 1) throw ShapeError("encoder channel counts must be positive");
  }
  if (depth() > 16) throw ShapeError("encoder depth too large");
  if (depth() == 6 && top_channels() != 256 && top_channels() != 1024) {
    throw ShapeError("six-block encoder must end in 256 or 1024 channels, got " + std::to_string(top_channels()));
  }
  const Index f = Index{1} << depth();
  if (height < 1 || width < 1 || height % f != 0 || width % f != 0) {
    std::ostringstream os;
    os << "input " << height << "x" << width << " is not divisible by 2^" << depth();
    throw ShapeError(os.str());
  }
}

// ---------------------------------------------------------------------------

template <typename Scalar>
Tensor<Scalar> ParameterStore<Scalar>::add(std::string name, Tensor<Scalar> tensor, bool learnable) {
  if (index_.count(name)) throw std::logic_error("duplicate parameter name " + name);
  index_.emplace(name, entries_.size());
  entries_.push_back({std::move(name), tensor, learnable});
  return tensor;
}

template <typename Scalar>
const Tensor<Scalar>& ParameterStore<Scalar>::at(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) throw std::out_of_range("no parameter named " + std::string(name));
  return entries_[it->second].tensor;
}

template <typename Scalar>
bool ParameterStore<Scalar>::contains(std::string_view name) const {
  return index_.count(std::string(name)) > 0;
}

template <typename Scalar>
std::vector<Tensor<Scalar>> ParameterStore<Scalar>::learnable() const {
  std::vector<Tensor<Scalar>> out;
  for (const auto& e : entries_) {
    if (e.learnable) out.push_back(e.tensor);
  }
  return out;
}

template <typename Scalar>
Index ParameterStore<Scalar>::learnable_count() const {
  Index n = 0;
  for (const auto& e : entries_) {
    if (e.learnable) n += e.tensor.numel();
  }
  return n;
}

template <typename Scalar>
void ParameterStore<Scalar>::zero_grad() {
  for (auto& e : entries_) {
    if (e.learnable) e.tensor.zero_grad();
  }
}

// ---------------------------------------------------------------------------

template <typename Scalar>
Encoder<Scalar>::Encoder(const EncoderConfig& cfg, ParameterStore<Scalar>& store, Rng& init) {
  cfg.validate();
  Index in = 1;
  for (Index i = 0; i < cfg.depth(); ++i) {
    const Index out = cfg.channels[static_cast<std::size_t>(i)];
    const ConvSpec spec = encoder_conv(in, out);
    const std::string prefix = "encoder.block" + std::to_string(i + 1);
    Block b;
    std::tie(b.weight, b.bias) = init_affine<Scalar>(Shape{out, in, 3, 3}, out, static_cast<double>(in * 9), init);
    b.bn = BatchNormState<Scalar>::create(out);
    b.slope = prelu_slopes<Scalar>(out);
    store.add(prefix + ".conv.weight", b.weight, true);
    store.add(prefix + ".conv.bias", b.bias, true);
    register_bn(store, prefix + ".bn", b.bn);
    store.add(prefix + ".prelu.weight", b.slope, true);
    specs_.push_back(spec);
    blocks_.push_back(std::move(b));
    in = out;
  }
}

template <typename Scalar>
Tensor<Scalar> Encoder<Scalar>::forward(const Tensor<Scalar>& x) {
  Tensor<Scalar> h = x;
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    Block& b = blocks_[i];
    h = conv2d(h, b.weight, b.bias, specs_[i]);
    h = batchnorm2d(h, b.bn);
    h = prelu(h, b.slope);
    h = avgpool2d(h, {2, 2});
  }
  return h;
}

template <typename Scalar>
void Encoder<Scalar>::set_mode(Mode mode) {
  for (auto& b : blocks_) b.bn.mode = mode;
}

template <typename Scalar>
Decoder<Scalar>::Decoder(const EncoderConfig& cfg, ParameterStore<Scalar>& store, Rng& init) {
  cfg.validate();
  const Index d = cfg.depth();
  for (Index i = 0; i < d; ++i) {
    const Index in = cfg.channels[static_cast<std::size_t>(d - 1 - i)];
    const Index out = i + 1 < d ? cfg.channels[static_cast<std::size_t>(d - 2 - i)] : cfg.channels.front();
    const std::string prefix = "decoder.block" + std::to_string(i + 1);
    Block b;
    const Index k = cfg.decoder_kernel;
    b.spec = decoder_convt(in, out, k);
    // A stride-2 kxk transposed conv feeds each output pixel (k/2)^2 taps per input channel.
    std::tie(b.weight, b.bias) =
        init_affine<Scalar>(Shape{in, out, k, k}, out, static_cast<double>(in * (k / 2) * (k / 2)), init);
    b.bn = BatchNormState<Scalar>::create(out);
    b.slope = prelu_slopes<Scalar>(out);
    store.add(prefix + ".convt.weight", b.weight, true);
    store.add(prefix + ".convt.bias", b.bias, true);
    register_bn(store, prefix + ".bn", b.bn);
    store.add(prefix + ".prelu.weight", b.slope, true);
    blocks_.push_back(std::move(b));
  }
  const Index last = cfg.channels.front();
  out_spec_ = encoder_conv(last, 1);
  std::tie(out_weight_, out_bias_) =
      init_affine<Scalar>(Shape{1, last, 3, 3}, 1, static_cast<double>(last * 9), init);
  store.add("decoder.out.conv.weight", out_weight_, true);
  store.add("decoder.out.conv.bias", out_bias_, true);
}

template <typename Scalar>
Tensor<Scalar> Decoder<Scalar>::forward(const Tensor<Scalar>& code) {
  Tensor<Scalar> h = code;
  for (auto& b : blocks_) {
    h = conv_transpose2d(h, b.weight, b.bias, b.spec);
    h = batchnorm2d(h, b.bn);
    h = prelu(h, b.slope);
  }
  return sigmoid(conv2d(h, out_weight_, out_bias_, out_spec_));
}

template <typename Scalar>
void Decoder<Scalar>::set_mode(Mode mode) {
  for (auto& b : blocks_) b.bn.mode = mode;
}

template <typename Scalar>
Autoencoder<Scalar>::Autoencoder(const EncoderConfig& cfg, Rng& init) : cfg_(cfg) {
  encoder_ = Encoder<Scalar>(cfg_, store_, init);
  decoder_ = Decoder<Scalar>(cfg_, store_, init);
}

template <typename Scalar>
Tensor<Scalar> Autoencoder<Scalar>::forward(const Tensor<Scalar>& x) {
  if (x.shape().rank() != 4 || x.dim(1) != 1 || x.dim(2) != cfg_.height || x.dim(3) != cfg_.width) {
    throw ShapeError("autoencoder expects N x 1 x " + std::to_string(cfg_.height) + " x " +
                     std::to_string(cfg_.width) + " input, got " + x.shape().str());
  }
  return decoder_.forward(encoder_.forward(x));
}

template <typename Scalar>
void Autoencoder<Scalar>::set_mode(Mode mode) {
  encoder_.set_mode(mode);
  decoder_.set_mode(mode);
}

// ---------------------------------------------------------------------------

template <typename Scalar>
Matcher<Scalar>::Matcher(const EncoderConfig& cfg, const MatcherHeadConfig& head, Rng& init)
    : cfg_(cfg), head_(head) {
  if (head.embed_dim < 1 || head.hidden < 1) throw ShapeError("matcher head extents must be positive");
  encoder_ = Encoder<Scalar>(cfg_, store_, init);
  const Index top = cfg_.top_channels(), e = head_.embed_dim, hid = head_.hidden;
  std::tie(embed_w_, embed_b_) = init_affine<Scalar>(Shape{top, e}, e, static_cast<double>(top), init);
  embed_slope_ = prelu_slopes<Scalar>(e);
  std::tie(fc1_w_, fc1_b_) = init_affine<Scalar>(Shape{e, hid}, hid, static_cast<double>(e), init);
  head_slope_ = prelu_slopes<Scalar>(hid);
  std::tie(fc2_w_, fc2_b_) = init_affine<Scalar>(Shape{hid, 1}, 1, static_cast<double>(hid), init);
  store_.add("embed.fc.weight", embed_w_, true);
  store_.add("embed.fc.bias", embed_b_, true);
  store_.add("embed.prelu.weight", embed_slope_, true);
  store_.add("head.fc1.weight", fc1_w_, true);
  store_.add("head.fc1.bias", fc1_b_, true);
  store_.add("head.prelu.weight", head_slope_, true);
  store_.add("head.fc2.weight", fc2_w_, true);
  store_.add("head.fc2.bias", fc2_b_, true);
}

template <typename Scalar>
Tensor<Scalar> Matcher<Scalar>::embed(const Tensor<Scalar>& x) {
  if (x.shape().rank() != 4 || x.dim(1) != 1 || x.dim(2) != cfg_.height || x.dim(3) != cfg_.width) {
    throw ShapeError("matcher expects N x 1 x " + std::to_string(cfg_.height) + " x " +
                     std::to_string(cfg_.width) + " input, got " + x.shape().str());
  }
  auto energy = texture_energy(encoder_.forward(x));
  return prelu(fully_connected(energy, embed_w_, embed_b_), embed_slope_);
}

template <typename Scalar>
Tensor<Scalar> Matcher<Scalar>::score_embeddings(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("embedding batches differ: " + a.shape().str() + " vs " + b.shape().str());
  }
  auto diff = abs(a - b);
  auto h = prelu(fully_connected(diff, fc1_w_, fc1_b_), head_slope_);
  auto s = sigmoid(fully_connected(h, fc2_w_, fc2_b_));
  return reshape(s, Shape{a.dim(0)});
}

template <typename Scalar>
Tensor<Scalar> Matcher<Scalar>::forward(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  if (a.shape().rank() < 1 || b.shape().rank() < 1 || a.dim(0) != b.dim(0)) {
    throw ShapeError("pair batches differ in size: " + a.shape().str() + " vs " + b.shape().str());
  }
  return score_embeddings(embed(a), embed(b));
}

template <typename Scalar>
void Matcher<Scalar>::set_mode(Mode mode) {
  encoder_.set_mode(mode);
}

template <typename Scalar>
Autoencoder<Scalar> build_autoencoder(const EncoderConfig& cfg, Rng& init) {
  return Autoencoder<Scalar>(cfg, init);
}

template <typename Scalar>
Matcher<Scalar> build_matcher(const EncoderConfig& cfg, const MatcherHeadConfig& head, Rng& init,
                              const Checkpoint* stage1) {
  Matcher<Scalar> m(cfg, head, init);
  if (stage1) {
    // Collect every offender first so the message is complete.
    std::vector<std::string> offenders;
    for (const auto& e : m.store().entries()) {
      if (e.name.rfind("encoder.", 0) != 0) continue;
      const CheckpointTensor* t = stage1->find(e.name);
      if (!t) {
        offenders.push_back(e.name + " (missing)");
        continue;
      }
      std::vector<std::int64_t> expected(e.tensor.shape().dims().begin(), e.tensor.shape().dims().end());
      if (t->shape != expected) offenders.push_back(e.name + " (shape)");
    }
    for (const auto& t : stage1->tensors) {
      if (t.name.rfind("encoder.", 0) == 0 && !m.store().contains(t.name)) offenders.push_back(t.name + " (unexpected)");
    }
    if (!offenders.empty()) {
      std::string msg = "stage-1 checkpoint does not match encoder config:";
      for (const auto& o : offenders) msg += " " + o;
      throw CheckpointError(msg);
    }
    load_into(*stage1, m.store(), LoadScope::encoder_only);
  }
  return m;
}

// ---------------------------------------------------------------------------

Index conv_params(const ConvSpec& spec) {
  return spec.in_channels * spec.out_channels * spec.kernel.first * spec.kernel.second + spec.out_channels;
}

Index conv_flops(const ConvSpec& spec, Index out_h, Index out_w) {
  if (spec.transposed) {
    // Every input pixel scatters into kh*kw outputs per output channel; out_h/out_w
    // here are the transposed-conv output extents.
    const Index in_h = (out_h + 2 * spec.padding.first - spec.kernel.first) / spec.stride.first + 1;
    const Index in_w = (out_w + 2 * spec.padding.second - spec.kernel.second) / spec.stride.second + 1;
    return 2 * in_h * in_w * spec.in_channels * spec.out_channels * spec.kernel.first * spec.kernel.second;
  }
  return 2 * out_h * out_w * spec.in_channels * spec.out_channels * spec.kernel.first * spec.kernel.second;
}

Index fc_params(Index in, Index out) { return in * out + out; }

Index fc_flops(Index in, Index out) { return 2 * in * out; }

Complexity count_params_flops(const EncoderConfig& cfg, const MatcherHeadConfig& head) {
  cfg.validate();
  Complexity c;
  Index in = 1, h = cfg.height, w = cfg.width;
  for (Index out : cfg.channels) {
    const ConvSpec spec = encoder_conv(in, out);
    c.params += conv_params(spec) + 2 * out /* BN */ + out /* PReLU */;
    c.flops += conv_flops(spec, h, w);
    h /= 2;
    w /= 2;
    in = out;
  }
  c.params += fc_params(in, head.embed_dim) + head.embed_dim;
  c.flops += fc_flops(in, head.embed_dim);
  c.params += fc_params(head.embed_dim, head.hidden) + head.hidden;
  c.flops += fc_flops(head.embed_dim, head.hidden);
  c.params += fc_params(head.hidden, 1);
  c.flops += fc_flops(head.hidden, 1);
  return c;
}

template <typename Scalar>
Complexity count_params_flops(const Matcher<Scalar>& matcher) {
  Complexity c = count_params_flops(matcher.config(), matcher.head_config());
  const Index stored = matcher.store().learnable_count();
  if (stored != c.params) {
    throw std::logic_error("parameter count mismatch: analytic " + std::to_string(c.params) + ", stored " +
                           std::to_string(stored));
  }
  return c;
}

#define TEXMATCH_INSTANTIATE(S)                                                                          \
  template class ParameterStore<S>;                                                                      \
  template class Encoder<S>;                                                                             \
  template class Decoder<S>;                                                                             \
  template class Autoencoder<S>;                                                                         \
  template class Matcher<S>;                                                                             \
  template Autoencoder<S> build_autoencoder<S>(const EncoderConfig&, Rng&);                              \
  template Matcher<S> build_matcher<S>(const EncoderConfig&, const MatcherHeadConfig&, Rng&,             \
                                       const Checkpoint*);                                               \
  template Complexity count_params_flops<S>(const Matcher<S>&);

TEXMATCH_INSTANTIATE(float)
TEXMATCH_INSTANTIATE(double)

#undef TEXMATCH_INSTANTIATE

}  // namespace texmatch
