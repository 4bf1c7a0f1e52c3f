#pragma once

#include "texmatch/rng.hpp"
#include "texmatch/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <vector>

namespace texmatch {

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ImageSample {
  Index class_id = 0;
  Index sample_id = 0;
  Array<float> pixels;  ///< row-major H x W, values in [0, 1]
};

struct Dataset {
  Index height = 64;
  Index width = 512;
  std::vector<ImageSample> samples;

  std::size_t size() const { return samples.size(); }
  /// Sorted distinct class ids.
  std::vector<Index> classes() const;
};

/// Per class: a few oriented sinusoids, each a band of orientations and
/// wavelengths around a class centre, plus smooth band-limited noise, all fixed
/// by (seed, class). Per sample: each component's orientation, wavelength and
/// phase are redrawn inside the class bands, then a cyclic horizontal shift and
/// a little pixel noise, fixed by (seed, class, sample).
struct SynthConfig {
  Index n_classes = 30;
  Index imgs_per_class = 10;
  Index height = 64;
  Index width = 512;
  std::uint64_t seed = 1;

  Index min_components = 2;
  Index max_components = 4;
  double min_wavelength = 24.0;  ///< pixels, along the component direction
  double max_wavelength = 96.0;
  double class_mean_spread = 0.0; ///< class mean brightness uniform in 0.5 +- spread
  double contrast = 0.22;        ///< std of the texture signal around the class mean
  double noise_mix = 0.1;        ///< weight of the class noise field relative to the sinusoids
  Index noise_cell = 32;         ///< coarse-grid spacing of the noise field, pixels
  double orientation_band = 0.3; ///< radians, per-sample orientation uniform in centre +- band
  double wavelength_band = 0.3;  ///< per-sample wavelength = centre * exp(uniform +- band)
  double phase_jitter = 0.3;     ///< radians, uniform +-
  Index max_shift = 16;          ///< pixels, cyclic, uniform in [-max_shift, max_shift]
  double pixel_noise = 0.02;

  void validate() const;
};

Dataset generate_synthetic(const SynthConfig& cfg);

/// 8-bit quantization used by the PGM writer and reader: round(v * 255) / 255.
float quantize8(float v);

/// Writes `<root>/<class_id>/<sample_id>.pgm` (binary P5) and `<root>/manifest.tsv`.
void write_directory(const Dataset& data, const std::filesystem::path& root);

/// Reads the layout produced by write_directory. When manifest.tsv is absent the
/// numeric class directories are scanned in order. Every image must be
/// height x width; nothing is resized.
Dataset load_directory(const std::filesystem::path& root, Index height = 64, Index width = 512);

/// Class-disjoint split; round(fraction * classes) classes go to the train side.
std::pair<Dataset, Dataset> open_world_split(const Dataset& data, double train_fraction, std::uint64_t seed);

/// Keeps the first `per_class` samples (in dataset order) of every class.
Dataset limit_per_class(const Dataset& data, Index per_class);

/// Index form of a balanced pair batch: first half genuine (y = 0), second half
/// imposter (y = 1).
struct PairIndices {
  std::vector<std::size_t> a, b;
  std::vector<int> y;
};

PairIndices sample_pair_indices(const Dataset& data, Index batch_size, Rng& rng);

template <typename Scalar>
struct PairBatch {
  Tensor<Scalar> a, b;  ///< N x 1 x H x W
  Tensor<Scalar> y;     ///< N, 0 = same class, 1 = different
};

template <typename Scalar>
Tensor<Scalar> make_image_batch(const Dataset& data, std::span<const std::size_t> indices);

template <typename Scalar>
PairBatch<Scalar> make_pair_batch(const Dataset& data, const PairIndices& pairs);

template <typename Scalar>
PairBatch<Scalar> sample_pair_batch(const Dataset& data, Index batch_size, Rng& rng) {
  return make_pair_batch<Scalar>(data, sample_pair_indices(data, batch_size, rng));
}

}  // namespace texmatch
