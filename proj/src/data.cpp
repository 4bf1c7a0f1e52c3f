#include "texmatch/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

namespace texmatch {

namespace fs = std::filesystem;

std::vector<Index> Dataset::classes() const {
  std::set<Index> ids;
  for (const auto& s : samples) ids.insert(s.class_id);
  return {ids.begin(), ids.end()};
}

void SynthConfig::validate() const {
  if (n_classes < 2) throw DataError("synthetic dataset needs at least 2 classes");
  if (imgs_per_class < 2) throw DataError("synthetic dataset needs at least 2 images per class");
  if (height < 1 || width < 1) throw DataError("image extents must be positive");
  if (min_components < 1 || max_components < min_components) throw DataError("bad component range");
  if (!(min_wavelength > 0) || max_wavelength < min_wavelength) throw DataError("bad wavelength range");
  if (class_mean_spread < 0 || class_mean_spread > 0.5) throw DataError("class_mean_spread must lie in [0, 0.5]");
  if (contrast < 0 || noise_mix < 0 || phase_jitter < 0 || pixel_noise < 0) {
    throw DataError("texture recipe weights must be non-negative");
  }
  if (orientation_band < 0 || wavelength_band < 0) {
    throw DataError("band widths must be non-negative");
  }
  if (noise_cell < 1) throw DataError("noise_cell must be positive");
  if (max_shift < 0 || max_shift >= width) throw DataError("max_shift must lie in [0, width)");
}

namespace {

struct Component {
  double theta;       // orientation centre, radians
  double wavelength;  // centre, pixels
  double amplitude;
  double phase;
};

struct Recipe {
  double mean;
  std::vector<Component> components;
  Eigen::ArrayXXd noise;  // H x W, unit variance
};

// Smooth random field: Gaussian values on a coarse grid, bilinearly
// interpolated, cyclic horizontally so it survives the horizontal shift.
Eigen::ArrayXXd noise_field(Index h, Index w, Index cell, Rng& rng) {
  const Index gh = h / cell + 2;
  const Index gw = std::max<Index>(1, w / cell);
  Eigen::ArrayXXd grid(gh, gw);
  for (Index i = 0; i < gh; ++i) {
    for (Index j = 0; j < gw; ++j) grid(i, j) = rng.normal();
  }
  Eigen::ArrayXXd out(h, w);
  for (Index y = 0; y < h; ++y) {
    const double gy = static_cast<double>(y) / static_cast<double>(cell);
    const Index y0 = static_cast<Index>(gy);
    const double fy = gy - static_cast<double>(y0);
    for (Index x = 0; x < w; ++x) {
      const double gx = static_cast<double>(x) * static_cast<double>(gw) / static_cast<double>(w);
      const Index x0 = static_cast<Index>(gx) % gw;
      const Index x1 = (x0 + 1) % gw;
      const double fx = gx - std::floor(gx);
      const double top = (1 - fx) * grid(y0, x0) + fx * grid(y0, x1);
      const double bottom = (1 - fx) * grid(y0 + 1, x0) + fx * grid(y0 + 1, x1);
      out(y, x) = (1 - fy) * top + fy * bottom;
    }
  }
  const double mu = out.mean();
  const double sd = std::sqrt((out - mu).square().mean());
  return sd > 0 ? Eigen::ArrayXXd((out - mu) / sd) : Eigen::ArrayXXd(out - mu);
}

Recipe make_recipe(const SynthConfig& cfg, Rng& rng) {
  Recipe r;
  r.mean = rng.uniform(0.5 - cfg.class_mean_spread, 0.5 + cfg.class_mean_spread);
  const Index k = cfg.min_components + static_cast<Index>(rng.below(
                                           static_cast<std::uint64_t>(cfg.max_components - cfg.min_components + 1)));
  const double log_lo = std::log(cfg.min_wavelength), log_hi = std::log(cfg.max_wavelength);
  for (Index i = 0; i < k; ++i) {
    Component c;
    c.theta = rng.uniform(0.0, std::numbers::pi);
    c.wavelength = std::exp(rng.uniform(log_lo, log_hi));
    c.amplitude = rng.uniform(0.5, 1.0);
    c.phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    r.components.push_back(c);
  }
  r.noise = noise_field(cfg.height, cfg.width, cfg.noise_cell, rng);
  return r;
}

Array<float> render(const SynthConfig& cfg, const Recipe& recipe, Rng& rng) {
  const Index h = cfg.height, w = cfg.width;
  struct Drawn {
    double kx, ky, amplitude, phase;
  };
  std::vector<Drawn> comps;
  double norm = 0;
  for (const auto& c : recipe.components) {
    const double theta = c.theta + rng.uniform(-cfg.orientation_band, cfg.orientation_band);
    const double wavelength = c.wavelength * std::exp(rng.uniform(-cfg.wavelength_band, cfg.wavelength_band));
    const double omega = 2.0 * std::numbers::pi / wavelength;
    comps.push_back({omega * std::cos(theta), omega * std::sin(theta), c.amplitude,
                     c.phase + rng.uniform(-cfg.phase_jitter, cfg.phase_jitter)});
    norm += c.amplitude * c.amplitude / 2;
  }
  norm = std::sqrt(norm);
  const Index shift = static_cast<Index>(rng.below(static_cast<std::uint64_t>(2 * cfg.max_shift + 1))) - cfg.max_shift;
  const double mix_norm = std::sqrt(1.0 + cfg.noise_mix * cfg.noise_mix);

  Eigen::ArrayXXd base(h, w);
  for (Index y = 0; y < h; ++y) {
    for (Index x = 0; x < w; ++x) {
      double s = 0;
      for (const auto& c : comps) {
        s += c.amplitude * std::sin(c.kx * static_cast<double>(x) + c.ky * static_cast<double>(y) + c.phase);
      }
      base(y, x) = (s / norm + cfg.noise_mix * recipe.noise(y, x)) / mix_norm;
    }
  }
  Array<float> out(h * w);
  for (Index y = 0; y < h; ++y) {
    for (Index x = 0; x < w; ++x) {
      const Index src = ((x - shift) % w + w) % w;
      const double v = recipe.mean + cfg.contrast * base(y, src) + cfg.pixel_noise * rng.normal();
      out[y * w + x] = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
  }
  return out;
}

std::string read_token(std::istream& in, const fs::path& file) {
  std::string tok;
  while (in >> std::ws && in.peek() == '#') {
    std::string comment;
    std::getline(in, comment);
  }
  if (!(in >> tok)) throw DataError("truncated PGM header in " + file.string());
  return tok;
}

Index parse_index(const std::string& s, const std::string& what) {
  Index v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) throw DataError("invalid " + what + ": '" + s + "'");
  return v;
}

Array<float> read_pgm(const fs::path& file, Index height, Index width) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw DataError("cannot open image " + file.string());
  if (read_token(in, file) != "P5") throw DataError("not a binary PGM (P5): " + file.string());
  const Index w = parse_index(read_token(in, file), "PGM width in " + file.string());
  const Index h = parse_index(read_token(in, file), "PGM height in " + file.string());
  const Index maxval = parse_index(read_token(in, file), "PGM maxval in " + file.string());
  if (maxval != 255) throw DataError("PGM must be 8-bit (maxval 255): " + file.string());
  if (h != height || w != width) {
    std::ostringstream os;
    os << "image " << file.string() << " is " << h << "x" << w << ", expected " << height << "x" << width;
    throw DataError(os.str());
  }
  in.get();  // single whitespace after maxval
  std::vector<unsigned char> buf(static_cast<std::size_t>(h * w));
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (in.gcount() != static_cast<std::streamsize>(buf.size())) throw DataError("truncated PGM data in " + file.string());
  Array<float> out(h * w);
  for (Index i = 0; i < h * w; ++i) out[i] = static_cast<float>(buf[static_cast<std::size_t>(i)]) / 255.0f;
  return out;
}

}  // namespace

Dataset generate_synthetic(const SynthConfig& cfg) {
  cfg.validate();
  Dataset d;
  d.height = cfg.height;
  d.width = cfg.width;
  const Rng root(cfg.seed, Stream::data);
  for (Index c = 0; c < cfg.n_classes; ++c) {
    Rng class_rng = root.derive(static_cast<std::uint64_t>(2 * c));
    const Recipe recipe = make_recipe(cfg, class_rng);
    const Rng sample_root = root.derive(static_cast<std::uint64_t>(2 * c + 1));
    for (Index s = 0; s < cfg.imgs_per_class; ++s) {
      Rng sample_rng = sample_root.derive(static_cast<std::uint64_t>(s));
      d.samples.push_back({c, s, render(cfg, recipe, sample_rng)});
    }
  }
  return d;
}

float quantize8(float v) {
  const long q = std::lround(std::clamp(static_cast<double>(v), 0.0, 1.0) * 255.0);
  return static_cast<float>(q) / 255.0f;
}

void write_directory(const Dataset& data, const fs::path& root) {
  fs::create_directories(root);
  std::ofstream manifest(root / "manifest.tsv", std::ios::binary | std::ios::trunc);
  if (!manifest) throw DataError("cannot write " + (root / "manifest.tsv").string());
  for (const auto& s : data.samples) {
    const std::string rel = std::to_string(s.class_id) + "/" + std::to_string(s.sample_id) + ".pgm";
    fs::create_directories(root / std::to_string(s.class_id));
    std::ofstream out(root / rel, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write image " + (root / rel).string());
    out << "P5\n" << data.width << " " << data.height << "\n255\n";
    std::vector<unsigned char> buf(static_cast<std::size_t>(s.pixels.size()));
    for (Index i = 0; i < s.pixels.size(); ++i) {
      buf[static_cast<std::size_t>(i)] =
          static_cast<unsigned char>(std::lround(std::clamp(static_cast<double>(s.pixels[i]), 0.0, 1.0) * 255.0));
    }
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!out) throw DataError("failed writing image " + (root / rel).string());
    manifest << s.class_id << '\t' << rel << '\n';
  }
}

Dataset load_directory(const fs::path& root, Index height, Index width) {
  if (!fs::is_directory(root)) throw DataError("dataset directory not found: " + root.string());
  Dataset d;
  d.height = height;
  d.width = width;
  std::map<Index, Index> next_sample;
  auto add = [&](Index class_id, const fs::path& file) {
    const Index sample_id = next_sample[class_id]++;
    d.samples.push_back({class_id, sample_id, read_pgm(file, height, width)});
  };

  const fs::path manifest = root / "manifest.tsv";
  if (fs::exists(manifest)) {
    std::ifstream in(manifest);
    std::string line;
    Index lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      const auto tab = line.find('\t');
      if (tab == std::string::npos) {
        throw DataError(manifest.string() + ":" + std::to_string(lineno) + ": expected class_id<TAB>path");
      }
      add(parse_index(line.substr(0, tab), "class id in " + manifest.string()), root / line.substr(tab + 1));
    }
  } else {
    std::vector<std::pair<Index, fs::path>> class_dirs;
    for (const auto& entry : fs::directory_iterator(root)) {
      if (!entry.is_directory()) continue;
      class_dirs.emplace_back(parse_index(entry.path().filename().string(), "class directory name"), entry.path());
    }
    std::sort(class_dirs.begin(), class_dirs.end());
    for (const auto& [id, dir] : class_dirs) {
      std::vector<fs::path> files;
      for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".pgm") files.push_back(entry.path());
      }
      if (files.empty()) throw DataError("class directory has no .pgm images: " + dir.string());
      std::sort(files.begin(), files.end());
      for (const auto& f : files) add(id, f);
    }
  }
  if (d.samples.empty()) throw DataError("no images found under " + root.string());
  return d;
}

std::pair<Dataset, Dataset> open_world_split(const Dataset& data, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0 && train_fraction < 1)) throw DataError("train fraction must lie in (0, 1)");
  std::vector<Index> ids = data.classes();
  const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(ids.size())));
  if (n_train < 2 || ids.size() - n_train < 2) {
    throw DataError("open-world split needs at least 2 classes per side (" + std::to_string(ids.size()) +
                    " classes, fraction " + std::to_string(train_fraction) + ")");
  }
  Rng rng(seed, Stream::split);
  for (std::size_t i = ids.size() - 1; i > 0; --i) {
    std::swap(ids[i], ids[static_cast<std::size_t>(rng.below(i + 1))]);
  }
  const std::set<Index> train_ids(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_train));
  Dataset train, test;
  train.height = test.height = data.height;
  train.width = test.width = data.width;
  for (const auto& s : data.samples) (train_ids.count(s.class_id) ? train : test).samples.push_back(s);
  return {std::move(train), std::move(test)};
}

Dataset limit_per_class(const Dataset& data, Index per_class) {
  if (per_class < 1) throw DataError("per-class limit must be positive");
  Dataset out;
  out.height = data.height;
  out.width = data.width;
  std::map<Index, Index> taken;
  for (const auto& s : data.samples) {
    if (taken[s.class_id]++ < per_class) out.samples.push_back(s);
  }
  return out;
}

PairIndices sample_pair_indices(const Dataset& data, Index batch_size, Rng& rng) {
  if (batch_size < 2 || batch_size % 2 != 0) throw DataError("pair batch size must be even and >= 2");
  std::map<Index, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < data.samples.size(); ++i) by_class[data.samples[i].class_id].push_back(i);
  if (by_class.size() < 2) throw DataError("pair sampling needs at least 2 classes");

  // Genuine pairs uniform over all unordered same-class pairs: weight each class
  // by its number of ordered pairs, then draw two distinct members.
  std::vector<const std::vector<std::size_t>*> groups;
  std::vector<std::uint64_t> cumulative;
  std::uint64_t total = 0;
  for (const auto& [id, members] : by_class) {
    const std::uint64_t m = members.size();
    if (m < 2) continue;
    total += m * (m - 1);
    groups.push_back(&members);
    cumulative.push_back(total);
  }
  if (total == 0) throw DataError("pair sampling needs a class with at least 2 samples");

  PairIndices p;
  const Index half = batch_size / 2;
  for (Index i = 0; i < half; ++i) {
    const std::uint64_t r = rng.below(total);
    const auto g = static_cast<std::size_t>(std::upper_bound(cumulative.begin(), cumulative.end(), r) - cumulative.begin());
    const auto& members = *groups[g];
    const std::uint64_t m = members.size();
    const std::uint64_t first = rng.below(m);
    std::uint64_t second = rng.below(m - 1);
    if (second >= first) ++second;
    p.a.push_back(members[first]);
    p.b.push_back(members[second]);
    p.y.push_back(0);
  }
  const std::uint64_t n = data.samples.size();
  for (Index i = 0; i < half; ++i) {
    std::size_t a, b;
    do {
      a = static_cast<std::size_t>(rng.below(n));
      b = static_cast<std::size_t>(rng.below(n));
    } while (data.samples[a].class_id == data.samples[b].class_id);
    p.a.push_back(a);
    p.b.push_back(b);
    p.y.push_back(1);
  }
  return p;
}

template <typename Scalar>
Tensor<Scalar> make_image_batch(const Dataset& data, std::span<const std::size_t> indices) {
  const Index hw = data.height * data.width;
  Array<Scalar> v(static_cast<Index>(indices.size()) * hw);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const auto& px = data.samples.at(indices[i]).pixels;
    if (px.size() != hw) throw DataError("sample has wrong pixel count");
    v.segment(static_cast<Index>(i) * hw, hw) = px.template cast<Scalar>();
  }
  return Tensor<Scalar>::from(Shape{static_cast<Index>(indices.size()), 1, data.height, data.width}, std::move(v));
}

template <typename Scalar>
PairBatch<Scalar> make_pair_batch(const Dataset& data, const PairIndices& pairs) {
  PairBatch<Scalar> out;
  out.a = make_image_batch<Scalar>(data, pairs.a);
  out.b = make_image_batch<Scalar>(data, pairs.b);
  Array<Scalar> y(static_cast<Index>(pairs.y.size()));
  for (std::size_t i = 0; i < pairs.y.size(); ++i) y[static_cast<Index>(i)] = static_cast<Scalar>(pairs.y[i]);
  out.y = Tensor<Scalar>::from(Shape{static_cast<Index>(pairs.y.size())}, std::move(y));
  return out;
}

template Tensor<float> make_image_batch<float>(const Dataset&, std::span<const std::size_t>);
template Tensor<double> make_image_batch<double>(const Dataset&, std::span<const std::size_t>);
template PairBatch<float> make_pair_batch<float>(const Dataset&, const PairIndices&);
template PairBatch<double> make_pair_batch<double>(const Dataset&, const PairIndices&);

}  // namespace texmatch
