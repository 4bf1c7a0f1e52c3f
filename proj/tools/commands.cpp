#include "commands.hpp"

#include "texmatch/ablation.hpp"
#include "texmatch/number_format.hpp"
#include "texmatch/reference.hpp"
#include "texmatch/report.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <fstream>
#include <iostream>
#include <iterator>

namespace texmatch::cli {

namespace fs = std::filesystem;

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string hex_digest(const std::vector<std::uint8_t>& bytes) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(
                    fnv1a64(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()))));
  return buf;
}

TrainConfig train_config(const RunConfig& cfg, std::ostream& log) {
  TrainConfig t = cfg.resolved_train();
  t.metadata["config.digest"] = config_digest(cfg);
  t.on_epoch = [&log](int stage, Index epoch, double loss) {
    log << "stage " << stage << " epoch " << epoch << " mean loss " << format_number(loss) << "\n" << std::flush;
  };
  return t;
}

std::map<std::string, std::string> run_meta(const RunConfig& cfg, const std::string& command) {
  return {{"command", command}, {"config.digest", config_digest(cfg)}, {"seed", std::to_string(cfg.seed)}};
}

void write_meta(const fs::path& path, const std::map<std::string, std::string>& meta) {
  std::string text;
  for (const auto& [k, v] : meta) text += k + "=" + v + "\n";
  write_text(path, text);
}

}  // namespace

RunConfig resolve(const CommonOptions& common, const std::vector<std::string>& extra_overrides) {
  RunConfig cfg = common.config.empty() ? RunConfig{} : load_config(common.config);
  for (const auto& o : common.overrides) apply_override(cfg, o);
  for (const auto& o : extra_overrides) apply_override(cfg, o);
  if (common.seed) cfg.seed = *common.seed;
  if (common.threads) cfg.threads = *common.threads;
  if (common.deterministic) cfg.deterministic = true;
  if (cfg.deterministic) cfg.threads = 1;
  cfg.validate();
  return cfg;
}

void write_resolved(const RunConfig& cfg, const fs::path& out) {
  fs::create_directories(out);
  write_text(out / "resolved_config.ini", resolved_text(cfg));
}

int cmd_synth(const RunConfig& cfg, const fs::path& out, std::ostream& log) {
  const Dataset d = generate_synthetic(cfg.resolved_synth());
  write_directory(d, out);
  write_resolved(cfg, out);
  log << "wrote " << d.size() << " images (" << cfg.synth.n_classes << " classes) to " << out.string() << "\n";
  return kOk;
}

int cmd_pretrain(const RunConfig& cfg, const fs::path& out, std::ostream& log) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto [train, test] = prepare_data(cfg, cfg.seed);
  const TrainConfig t = train_config(cfg, log);
  log << "stage 1 (" << to_string(t.objective) << ") on " << train.size() << " images\n";
  const TrainResult r = pretrain_stage1(t, train);

  Rng init(cfg.seed, Stream::init);
  auto untrained = build_autoencoder<float>(t.encoder, init);
  auto trained = load_autoencoder(r.checkpoint, t.encoder);
  const double before = reconstruction_ssim(untrained, test, t.loss);
  const double after = reconstruction_ssim(trained, test, t.loss);

  write_resolved(cfg, out);
  r.checkpoint.save(out / "stage1.ckpt");
  write_text(out / "stage1_log.tsv", format_log(r.log));
  write_text(out / "summary.txt", "objective=" + std::string(to_string(t.objective)) +
                                      "\nheldout_ssim_untrained=" + format_number(before) +
                                      "\nheldout_ssim=" + format_number(after) + "\n");
  log << "held-out SSIM " << format_number(before) << " -> " << format_number(after) << " ("
      << format_number(seconds_since(t0)) << " s)\n";
  return kOk;
}

int cmd_train(const RunConfig& cfg, const fs::path& checkpoint, const fs::path& out, std::ostream& log) {
  const auto t0 = std::chrono::steady_clock::now();
  const TrainConfig t = train_config(cfg, log);
  std::optional<Checkpoint> init;
  if (t.init == EncoderInit::from_checkpoint) {
    if (checkpoint.empty()) throw ConfigError("train.init=from_checkpoint needs --checkpoint <stage-1 checkpoint>");
    init = Checkpoint::load(checkpoint);
  }
  const auto [train, test] = prepare_data(cfg, cfg.seed);
  log << "stage 2 (init " << to_string(t.init) << ") on " << train.size() << " images\n";
  TrainResult r = train_stage2(t, train, init ? &*init : nullptr);
  if (init) r.checkpoint.metadata["stage1.digest"] = hex_digest(init->serialize());

  write_resolved(cfg, out);
  r.checkpoint.save(out / "stage2.ckpt");
  write_text(out / "stage2_log.tsv", format_log(r.log));
  log << "final loss " << format_number(r.log.empty() ? 0.0 : r.log.back().loss) << " ("
      << format_number(seconds_since(t0)) << " s)\n";
  return kOk;
}

int cmd_eval(const RunConfig& cfg, const fs::path& checkpoint, const fs::path& out, std::ostream& log) {
  if (checkpoint.empty()) throw ConfigError("eval needs --checkpoint <stage-2 checkpoint>");
  const Checkpoint ckpt = Checkpoint::load(checkpoint);
  auto model = load_matcher(ckpt, cfg.encoder, cfg.head);
  const auto [train, test] = prepare_data(cfg, cfg.seed);

  VariantResult v;
  v.name = std::string(to_string(cfg.mode));
  v.scores = all_vs_all_scores(model, test, cfg.mode, cfg.threads);
  v.det = det_curve(v.scores);

  auto meta = run_meta(cfg, "eval");
  meta["checkpoint.digest"] = hex_digest(ckpt.serialize());
  meta["mode"] = v.name;
  meta["genuine"] = std::to_string(v.scores.genuine.size());
  meta["imposter"] = std::to_string(v.scores.imposter.size());
  write_resolved(cfg, out);
  emit_report(meta, {v}, out, ReportOptions{cfg.log_axes, cfg.score_dump});
  log << v.name << ": EER " << format_number(100.0 * v.det.eer.eer) << " %, DET-AUC " << format_number(v.det.auc)
      << " (" << v.scores.genuine.size() << " genuine, " << v.scores.imposter.size() << " imposter)\n";
  return kOk;
}

int cmd_ablate(const RunConfig& cfg, const fs::path& out, std::ostream& log) {
  write_resolved(cfg, out);
  const AblationResult r = run_ablation(cfg, cfg.threads, [&log](const SeedResult& s) {
    log << "seed " << s.seed << " done in " << format_number(s.seconds) << " s:";
    for (Arm a : kArms) log << " " << to_string(a) << "=" << format_number(100.0 * s.arms[static_cast<std::size_t>(a)].eer);
    log << "\n" << std::flush;
  });
  emit_ablation_report(r, run_meta(cfg, "ablate"), out, ReportOptions{cfg.log_axes, cfg.score_dump});
  log << ablation_table(r);
  log << "orderings " << (r.all_orderings() ? "hold" : "DO NOT all hold") << "; wall clock "
      << format_number(r.wall_seconds) << " s\n";
  return kOk;
}

int cmd_verify(std::uint64_t seed, bool inject_gradient_fault, std::ostream& log) {
  reference::SuiteOptions o;
  o.seed = seed;
  o.inject_gradient_fault = inject_gradient_fault;
  using Suite = std::vector<reference::CheckResult> (*)(const reference::SuiteOptions&);
  const std::vector<std::pair<const char*, Suite>> suites = {
      {"gradient", reference::gradient_suite},     {"loss-identity", reference::loss_identity_suite},
      {"metric-oracle", reference::metric_suite},  {"protocol", reference::protocol_suite},
      {"layer-oracle", reference::oracle_suite},   {"checkpoint", reference::checkpoint_suite},
  };
  bool ok = true;
  for (const auto& [name, fn] : suites) {
    const auto results = fn(o);
    std::size_t passed = 0;
    for (const auto& r : results) passed += r.passed;
    log << name << ": " << passed << "/" << results.size() << " passed\n";
    for (const auto& r : results) {
      if (!r.passed) log << "  FAIL " << r.name << ": " << r.detail << "\n";
    }
    ok = ok && passed == results.size();
  }
  log << (ok ? "verify: all suites passed\n" : "verify: FAILED\n");
  return ok ? kOk : kVerifyFailed;
}

int run(int argc, char** argv) {
  CLI::App app{"Texture-aware two-stage matcher: pretraining, pairwise training, open-world evaluation"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");

  CommonOptions common;
  auto add_common = [&common](CLI::App* sub) {
    sub->add_option("--config", common.config, "INI config file")->check(CLI::ExistingFile);
    sub->add_option("--seed", common.seed, "Run seed (overrides run.seed)");
    sub->add_option("--out", common.out, "Output directory")->required();
    sub->add_option("--threads", common.threads, "Worker threads (overrides run.threads)")->check(CLI::PositiveNumber);
    sub->add_flag("--deterministic", common.deterministic, "Single-threaded, bitwise reproducible");
    sub->add_option("--set", common.overrides, "Config override section.key=value (repeatable)");
  };

  std::string data, objective, sigma, mode, init, checkpoint;
  auto add_data = [&data](CLI::App* sub) { sub->add_option("--data", data, "Image directory (overrides run.data)"); };

  auto* synth = app.add_subcommand("synth", "Write a synthetic texture dataset");
  add_common(synth);
  auto* pretrain = app.add_subcommand("pretrain", "Stage 1: autoencoder pretraining");
  add_common(pretrain);
  add_data(pretrain);
  pretrain->add_option("--objective", objective, "ssim_only | relational | relational_denoising");
  pretrain->add_option("--sigma", sigma, "Corruption std for relational_denoising");
  auto* train = app.add_subcommand("train", "Stage 2: end-to-end pairwise training");
  add_common(train);
  add_data(train);
  train->add_option("--init", init, "random | from_checkpoint");
  train->add_option("--checkpoint", checkpoint, "Stage-1 checkpoint for from_checkpoint init");
  auto* eval = app.add_subcommand("eval", "All-vs-all evaluation on the held-out classes");
  add_common(eval);
  add_data(eval);
  eval->add_option("--mode", mode, "pairwise | offline");
  eval->add_option("--checkpoint", checkpoint, "Stage-2 checkpoint")->required();
  auto* ablate = app.add_subcommand("ablate", "Four-arm ablation over the configured seeds");
  add_common(ablate);
  add_data(ablate);

  auto* verify = app.add_subcommand("verify", "Gradient, loss-identity, metric and checkpoint self-checks");
  std::uint64_t verify_seed = 7;
  std::string fault;
  verify->add_option("--seed", verify_seed, "Seed for the random cases");
  verify->add_option("--inject-fault", fault)->group("")->check(CLI::IsMember({"gradient"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (verify->parsed()) return cmd_verify(verify_seed, fault == "gradient", std::cout);

    std::vector<std::string> extra;
    if (!data.empty()) extra.push_back("run.data=" + data);
    if (!objective.empty()) extra.push_back("train.objective=" + objective);
    if (!sigma.empty()) extra.push_back("loss.noise_sigma=" + sigma);
    if (!mode.empty()) extra.push_back("eval.mode=" + mode);
    if (!init.empty()) extra.push_back("train.init=" + init);
    const RunConfig cfg = resolve(common, extra);
    const fs::path out = common.out;

    if (synth->parsed()) return cmd_synth(cfg, out, std::cerr);
    if (pretrain->parsed()) return cmd_pretrain(cfg, out, std::cerr);
    if (train->parsed()) return cmd_train(cfg, checkpoint, out, std::cerr);
    if (eval->parsed()) return cmd_eval(cfg, checkpoint, out, std::cerr);
    if (ablate->parsed()) return cmd_ablate(cfg, out, std::cerr);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid argument: " << e.what() << "\n";
    return kUsage;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntime;
  }
  return kUsage;
}

}  // namespace texmatch::cli
