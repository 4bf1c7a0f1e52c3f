#include "texmatch/ablation.hpp"

#include "texmatch/number_format.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <exception>
#include <mutex>
#include <thread>

namespace texmatch {

std::string_view to_string(Arm a) {
  switch (a) {
    case Arm::random_offline: return "random_offline";
    case Arm::ssim_offline: return "ssim_offline";
    case Arm::reldn_offline: return "reldn_offline";
    case Arm::reldn_e2m: return "reldn_e2m";
  }
  return "?";
}

std::string_view arm_label(Arm a) {
  switch (a) {
    case Arm::random_offline: return "random-init + offline";
    case Arm::ssim_offline: return "pretrained (1-SSIM) + offline";
    case Arm::reldn_offline: return "pretrained (relational+denoising) + offline";
    case Arm::reldn_e2m: return "pretrained (relational+denoising) + end-to-end pairwise";
  }
  return "?";
}

double median(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("median of an empty list");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

namespace {

double now_seconds() {
  return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count();
}

double stage1_ssim(const Checkpoint& ckpt, const TrainConfig& t, const Dataset& test) {
  auto ae = load_autoencoder(ckpt, t.encoder);
  return reconstruction_ssim(ae, test, t.loss);
}

}  // namespace

SeedResult run_ablation_seed(const RunConfig& cfg, std::uint64_t seed) {
  const double t0 = now_seconds();
  RunConfig c = cfg;
  c.seed = seed;
  const auto [train, test] = prepare_data(c, seed);

  SeedResult r;
  r.seed = seed;
  const TrainConfig base = c.resolved_train();
  {
    Rng init(seed, Stream::init);
    auto untrained = build_autoencoder<float>(base.encoder, init);
    r.ssim_untrained = reconstruction_ssim(untrained, test, base.loss);
  }

  TrainConfig s1 = base;
  s1.objective = Objective::ssim_only;
  const Checkpoint ssim_ckpt = pretrain_stage1(s1, train).checkpoint;
  r.ssim_ssim_only = stage1_ssim(ssim_ckpt, s1, test);

  s1.objective = Objective::relational_denoising;
  const Checkpoint reldn_ckpt = pretrain_stage1(s1, train).checkpoint;
  r.ssim_reldn = stage1_ssim(reldn_ckpt, s1, test);

  auto stage2 = [&](const Checkpoint* init) {
    TrainConfig t = base;
    t.init = init ? EncoderInit::from_checkpoint : EncoderInit::random;
    return load_matcher(train_stage2(t, train, init).checkpoint, t.encoder, t.head);
  };
  auto score = [&](Matcher<float>& m, MatchMode mode, Arm arm) {
    VariantResult v;
    v.name = std::string(to_string(arm));
    v.scores = all_vs_all_scores(m, test, mode);
    v.det = det_curve(v.scores);
    r.arms[static_cast<std::size_t>(arm)] = {v.det.eer.eer, v.det.auc};
    r.variants.push_back(std::move(v));
  };

  {
    auto m = stage2(nullptr);
    score(m, MatchMode::offline, Arm::random_offline);
  }
  {
    auto m = stage2(&ssim_ckpt);
    score(m, MatchMode::offline, Arm::ssim_offline);
  }
  {
    auto m = stage2(&reldn_ckpt);
    score(m, MatchMode::offline, Arm::reldn_offline);
    score(m, MatchMode::pairwise, Arm::reldn_e2m);
  }
  r.seconds = now_seconds() - t0;
  return r;
}

AblationResult run_ablation(const RunConfig& cfg, Index workers, const std::function<void(const SeedResult&)>& on_seed) {
  cfg.validate();
  const double t0 = now_seconds();
  const auto& seeds = cfg.ablate_seeds;
  AblationResult out;
  out.workers = std::clamp<Index>(workers, 1, static_cast<Index>(seeds.size()));
  out.seeds.resize(seeds.size());

  std::atomic<std::size_t> next{0};
  std::mutex mu;
  std::exception_ptr error;
  auto work = [&] {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= seeds.size()) return;
      try {
        SeedResult r = run_ablation_seed(cfg, seeds[i]);
        std::lock_guard lock(mu);
        if (on_seed) on_seed(r);
        out.seeds[i] = std::move(r);
      } catch (...) {
        std::lock_guard lock(mu);
        if (!error) error = std::current_exception();
        next = seeds.size();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  for (Index w = 1; w < out.workers; ++w) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);

  for (std::size_t a = 0; a < kArms.size(); ++a) {
    std::vector<double> eers, aucs;
    for (const auto& s : out.seeds) {
      eers.push_back(s.arms[a].eer);
      aucs.push_back(s.arms[a].auc);
    }
    out.median[a] = {median(eers), median(aucs)};
  }
  std::vector<double> su, sr;
  for (const auto& s : out.seeds) {
    su.push_back(s.ssim_untrained);
    sr.push_back(s.ssim_reldn);
  }
  out.median_ssim_untrained = median(su);
  out.median_ssim_reldn = median(sr);

  auto m = [&](Arm a) { return out.median[static_cast<std::size_t>(a)].eer; };
  out.pretrained_beats_random =
      m(Arm::ssim_offline) <= m(Arm::random_offline) && m(Arm::reldn_offline) <= m(Arm::random_offline);
  const double best_offline = std::min({m(Arm::random_offline), m(Arm::ssim_offline), m(Arm::reldn_offline)});
  out.e2m_beats_offline = m(Arm::reldn_e2m) <= best_offline;
  out.e2m_below_quarter = m(Arm::reldn_e2m) < 0.25;
  out.wall_seconds = now_seconds() - t0;
  return out;
}

std::string ablation_table(const AblationResult& result) {
  std::string out;
  char line[256];
  std::snprintf(line, sizeof(line), "%-56s %10s %10s\n", "variant (median over seeds)", "EER %", "DET-AUC");
  out += line;
  for (Arm a : kArms) {
    const auto& r = result.median[static_cast<std::size_t>(a)];
    std::snprintf(line, sizeof(line), "%-56s %10.2f %10.4f\n", std::string(arm_label(a)).c_str(), 100.0 * r.eer, r.auc);
    out += line;
  }
  return out;
}

void emit_ablation_report(const AblationResult& result, const std::map<std::string, std::string>& meta,
                          const std::filesystem::path& dir, const ReportOptions& options) {
  std::filesystem::create_directories(dir);
  std::string per_seed = "seed,arm,eer_percent,auc\n";
  for (const auto& s : result.seeds) {
    for (Arm a : kArms) {
      const auto& r = s.arms[static_cast<std::size_t>(a)];
      per_seed += std::to_string(s.seed) + "," + std::string(to_string(a)) + "," + format_number(100.0 * r.eer) + "," +
                  format_number(r.auc) + "\n";
    }
    auto seed_meta = meta;
    seed_meta["seed"] = std::to_string(s.seed);
    emit_report(seed_meta, s.variants, dir / ("seed_" + std::to_string(s.seed)), options);
  }
  // Wall clock goes only into timing.txt; everything else is reproducible.
  std::string ssim = "seed,untrained,ssim_only,relational_denoising\n";
  for (const auto& s : result.seeds) {
    ssim += std::to_string(s.seed) + "," + format_number(s.ssim_untrained) + "," + format_number(s.ssim_ssim_only) +
            "," + format_number(s.ssim_reldn) + "\n";
  }

  std::string seeds;
  for (const auto& s : result.seeds) seeds += (seeds.empty() ? "" : ";") + std::to_string(s.seed);
  std::string med = "arm,label,seeds,eer_percent,auc\n";
  for (Arm a : kArms) {
    const auto& r = result.median[static_cast<std::size_t>(a)];
    med += std::string(to_string(a)) + "," + std::string(arm_label(a)) + "," + seeds + "," +
           format_number(100.0 * r.eer) + "," + format_number(r.auc) + "\n";
  }
  write_text(dir / "ablation.csv", per_seed);
  write_text(dir / "ablation_median.csv", med);
  write_text(dir / "stage1_ssim.csv", ssim);

  std::string txt = ablation_table(result);
  auto flag = [](bool b) { return b ? "yes" : "NO"; };
  txt += "\n";
  txt += std::string("pretrained offline <= random offline: ") + flag(result.pretrained_beats_random) + "\n";
  txt += std::string("end-to-end <= best offline:          ") + flag(result.e2m_beats_offline) + "\n";
  txt += std::string("end-to-end EER < 0.25:               ") + flag(result.e2m_below_quarter) + "\n";
  txt += "held-out SSIM (median): untrained " + format_number(result.median_ssim_untrained) +
         ", relational+denoising " + format_number(result.median_ssim_reldn) + "\n";
  write_text(dir / "ablation.txt", txt);

  char buf[128];
  std::snprintf(buf, sizeof(buf), "wall clock %.1f s with %lld worker(s)\n", result.wall_seconds,
                static_cast<long long>(result.workers));
  std::string timing = buf;
  for (const auto& s : result.seeds) {
    std::snprintf(buf, sizeof(buf), "  seed %llu: %.1f s\n", static_cast<unsigned long long>(s.seed), s.seconds);
    timing += buf;
  }
  write_text(dir / "timing.txt", timing);
}

}  // namespace texmatch
