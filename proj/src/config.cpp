#include "texmatch/config.hpp"

#include "texmatch/number_format.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

namespace texmatch {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string where(std::string_view section, std::string_view key) {
  return std::string(section) + "." + std::string(key);
}

template <typename T>
T parse_integer(std::string_view v, std::string_view section, std::string_view key) {
  T out{};
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || v.empty()) {
    throw ConfigError(where(section, key) + ": expected an integer, got '" + std::string(v) + "'");
  }
  return out;
}

double parse_double(std::string_view v, std::string_view section, std::string_view key) {
  double out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || v.empty()) {
    throw ConfigError(where(section, key) + ": expected a number, got '" + std::string(v) + "'");
  }
  return out;
}

bool parse_bool(std::string_view v, std::string_view section, std::string_view key) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError(where(section, key) + ": expected true or false, got '" + std::string(v) + "'");
}

template <typename T>
std::vector<T> parse_list(std::string_view v, std::string_view section, std::string_view key) {
  std::vector<T> out;
  while (true) {
    const auto comma = v.find(',');
    out.push_back(parse_integer<T>(trim(v.substr(0, comma)), section, key));
    if (comma == std::string_view::npos) break;
    v.remove_prefix(comma + 1);
  }
  return out;
}

template <typename T>
std::string join(const std::vector<T>& xs) {
  std::string s;
  for (std::size_t i = 0; i < xs.size(); ++i) s += (i ? "," : "") + std::to_string(xs[i]);
  return s;
}

std::string bool_str(bool b) { return b ? "true" : "false"; }

struct Field {
  const char* section;
  const char* key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, std::string_view)> set;
};

#define TM_INT(SEC, KEY, MEMBER)                                                   \
  Field {                                                                          \
    SEC, KEY, [](const RunConfig& c) { return std::to_string(c.MEMBER); },         \
        [](RunConfig& c, std::string_view v) {                                     \
          c.MEMBER = parse_integer<decltype(c.MEMBER)>(v, SEC, KEY);               \
        }                                                                          \
  }
#define TM_DBL(SEC, KEY, MEMBER)                                                                     \
  Field {                                                                                            \
    SEC, KEY, [](const RunConfig& c) { return format_number(c.MEMBER); },                            \
        [](RunConfig& c, std::string_view v) { c.MEMBER = parse_double(v, SEC, KEY); }               \
  }
#define TM_BOOL(SEC, KEY, MEMBER)                                                                    \
  Field {                                                                                            \
    SEC, KEY, [](const RunConfig& c) { return bool_str(c.MEMBER); },                                 \
        [](RunConfig& c, std::string_view v) { c.MEMBER = parse_bool(v, SEC, KEY); }                 \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      TM_INT("run", "seed", seed),
      TM_INT("run", "threads", threads),
      TM_BOOL("run", "deterministic", deterministic),
      Field{"run", "data", [](const RunConfig& c) { return c.data; },
            [](RunConfig& c, std::string_view v) { c.data = std::string(v); }},
      TM_DBL("run", "train_fraction", train_fraction),
      TM_INT("run", "train_per_class", train_per_class),
      TM_INT("run", "test_per_class", test_per_class),

      TM_INT("synth", "n_classes", synth.n_classes),
      TM_INT("synth", "imgs_per_class", synth.imgs_per_class),
      TM_INT("synth", "height", synth.height),
      TM_INT("synth", "width", synth.width),
      TM_INT("synth", "min_components", synth.min_components),
      TM_INT("synth", "max_components", synth.max_components),
      TM_DBL("synth", "min_wavelength", synth.min_wavelength),
      TM_DBL("synth", "max_wavelength", synth.max_wavelength),
      TM_DBL("synth", "class_mean_spread", synth.class_mean_spread),
      TM_DBL("synth", "contrast", synth.contrast),
      TM_DBL("synth", "noise_mix", synth.noise_mix),
      TM_INT("synth", "noise_cell", synth.noise_cell),
      TM_DBL("synth", "orientation_band", synth.orientation_band),
      TM_DBL("synth", "wavelength_band", synth.wavelength_band),
      TM_DBL("synth", "phase_jitter", synth.phase_jitter),
      TM_INT("synth", "max_shift", synth.max_shift),
      TM_DBL("synth", "pixel_noise", synth.pixel_noise),

      TM_DBL("loss", "alpha", loss.alpha),
      TM_INT("loss", "ssim_window", loss.ssim_window),
      TM_DBL("loss", "ssim_sigma", loss.ssim_sigma),
      TM_DBL("loss", "ssim_c1", loss.ssim_c1),
      TM_DBL("loss", "ssim_c2", loss.ssim_c2),
      TM_BOOL("loss", "gram_normalize", loss.gram_normalize),
      TM_DBL("loss", "noise_sigma", loss.noise_sigma),

      Field{"encoder", "channels", [](const RunConfig& c) { return join(c.encoder.channels); },
            [](RunConfig& c, std::string_view v) { c.encoder.channels = parse_list<Index>(v, "encoder", "channels"); }},
      TM_INT("encoder", "height", encoder.height),
      TM_INT("encoder", "width", encoder.width),
      TM_INT("encoder", "decoder_kernel", encoder.decoder_kernel),

      TM_INT("head", "embed_dim", head.embed_dim),
      TM_INT("head", "hidden", head.hidden),

      TM_INT("train", "batch_size", train.batch_size),
      TM_INT("train", "stage1_epochs", train.stage1_epochs),
      TM_INT("train", "stage2_epochs", train.stage2_epochs),
      TM_INT("train", "stage2_steps_per_epoch", train.stage2_steps_per_epoch),
      Field{"train", "objective", [](const RunConfig& c) { return std::string(to_string(c.train.objective)); },
            [](RunConfig& c, std::string_view v) {
              try {
                c.train.objective = parse_objective(v);
              } catch (const std::invalid_argument& e) {
                throw ConfigError(std::string("train.objective: ") + e.what());
              }
            }},
      Field{"train", "init", [](const RunConfig& c) { return std::string(to_string(c.train.init)); },
            [](RunConfig& c, std::string_view v) {
              try {
                c.train.init = parse_encoder_init(v);
              } catch (const std::invalid_argument& e) {
                throw ConfigError(std::string("train.init: ") + e.what());
              }
            }},
      TM_INT("train", "eval_every", train.eval_every),
      TM_DBL("train", "lr", train.adam.lr),
      TM_DBL("train", "beta1", train.adam.beta1),
      TM_DBL("train", "beta2", train.adam.beta2),
      TM_DBL("train", "eps", train.adam.eps),

      Field{"eval", "mode", [](const RunConfig& c) { return std::string(to_string(c.mode)); },
            [](RunConfig& c, std::string_view v) {
              try {
                c.mode = parse_match_mode(v);
              } catch (const std::invalid_argument& e) {
                throw ConfigError(std::string("eval.mode: ") + e.what());
              }
            }},
      TM_BOOL("eval", "log_axes", log_axes),
      TM_BOOL("eval", "score_dump", score_dump),

      Field{"ablate", "seeds", [](const RunConfig& c) { return join(c.ablate_seeds); },
            [](RunConfig& c, std::string_view v) { c.ablate_seeds = parse_list<std::uint64_t>(v, "ablate", "seeds"); }},
  };
  return table;
}

#undef TM_INT
#undef TM_DBL
#undef TM_BOOL

}  // namespace

void set_value(RunConfig& cfg, std::string_view section, std::string_view key, std::string_view value) {
  bool known_section = false;
  for (const auto& f : fields()) {
    if (section != f.section) continue;
    known_section = true;
    if (key == f.key) {
      f.set(cfg, value);
      return;
    }
  }
  if (!known_section) throw ConfigError("unknown config section [" + std::string(section) + "]");
  throw ConfigError("unknown config key " + where(section, key));
}

void apply_override(RunConfig& cfg, std::string_view assignment) {
  const auto eq = assignment.find('=');
  const auto dot = assignment.substr(0, eq).find('.');
  if (eq == std::string_view::npos || dot == std::string_view::npos) {
    throw ConfigError("override must look like section.key=value, got '" + std::string(assignment) + "'");
  }
  set_value(cfg, trim(assignment.substr(0, dot)), trim(assignment.substr(dot + 1, eq - dot - 1)),
            trim(assignment.substr(eq + 1)));
}

RunConfig parse_config(std::string_view text) {
  RunConfig cfg;
  std::string section;
  Index line_no = 0;
  std::istringstream in{std::string(text)};
  std::string raw;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line = raw;
    const auto hash = line.find_first_of("#;");
    if (hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    try {
      if (line.front() == '[') {
        if (line.back() != ']') throw ConfigError("unterminated section header");
        section = std::string(trim(line.substr(1, line.size() - 2)));
        continue;
      }
      const auto eq = line.find('=');
      if (eq == std::string_view::npos) throw ConfigError("expected key = value");
      if (section.empty()) throw ConfigError("key outside of any [section]");
      set_value(cfg, section, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError("config line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  cfg.validate();
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_config(ss.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::string resolved_text(const RunConfig& cfg) {
  std::string out;
  std::string section;
  for (const auto& f : fields()) {
    if (section != f.section) {
      if (!section.empty()) out += "\n";
      section = f.section;
      out += "[" + section + "]\n";
    }
    out += std::string(f.key) + " = " + f.get(cfg) + "\n";
  }
  return out;
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string config_digest(const RunConfig& cfg) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fnv1a64(resolved_text(cfg))));
  return buf;
}

TrainConfig RunConfig::resolved_train() const {
  TrainConfig t = train;
  t.seed = seed;
  t.loss = loss;
  t.encoder = encoder;
  t.head = head;
  return t;
}

SynthConfig RunConfig::resolved_synth() const {
  SynthConfig s = synth;
  s.seed = seed;
  return s;
}

void RunConfig::validate() const {
  try {
    if (threads < 1) throw ConfigError("run.threads must be >= 1");
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ConfigError("run.train_fraction must lie in (0, 1)");
    if (train_per_class < 0) throw ConfigError("run.train_per_class must be >= 0");
    if (test_per_class < 2) throw ConfigError("run.test_per_class must be >= 2");
    if (ablate_seeds.empty()) throw ConfigError("ablate.seeds must not be empty");
    if (head.embed_dim < 1 || head.hidden < 1) throw ConfigError("head dimensions must be positive");
    if (encoder.height != synth.height || encoder.width != synth.width) {
      throw ConfigError("encoder and synth image extents differ");
    }
    if (!(train.adam.lr > 0.0) || !(train.adam.eps > 0.0)) throw ConfigError("train.lr and train.eps must be positive");
    if (!(train.adam.beta1 >= 0.0 && train.adam.beta1 < 1.0) || !(train.adam.beta2 >= 0.0 && train.adam.beta2 < 1.0)) {
      throw ConfigError("Adam betas must lie in [0, 1)");
    }
    resolved_synth().validate();
    resolved_train().validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
}

RunData prepare_data(const RunConfig& cfg, std::uint64_t seed) {
  RunConfig c = cfg;
  c.seed = seed;
  const Dataset data =
      c.data.empty() ? generate_synthetic(c.resolved_synth()) : load_directory(c.data, c.encoder.height, c.encoder.width);
  auto [train, test] = open_world_split(data, c.train_fraction, seed);
  if (c.train_per_class > 0) train = limit_per_class(train, c.train_per_class);
  if (c.test_per_class > 0) test = limit_per_class(test, c.test_per_class);
  return {std::move(train), std::move(test)};
}

}  // namespace texmatch
