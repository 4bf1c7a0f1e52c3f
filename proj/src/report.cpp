#include "texmatch/report.hpp"

#include "texmatch/number_format.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace texmatch {

namespace fs = std::filesystem;

namespace {

void check_name(const std::string& name) {
  if (name.empty()) throw std::invalid_argument("variant name is empty");
  for (char c : name) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_' ||
                    c == '-' || c == '.';
    if (!ok) throw std::invalid_argument("variant name '" + name + "' has characters unsafe for file names");
  }
}

constexpr const char* kPalette[] = {"#1b6ca8", "#d1495b", "#2e933c", "#edae49", "#6d597a", "#00798c"};

}  // namespace

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

std::string metrics_csv(const std::vector<VariantResult>& variants) {
  std::string out = "variant,eer_percent,auc\n";
  for (const auto& v : variants) {
    out += v.name + "," + format_number(100.0 * v.det.eer.eer) + "," + format_number(v.det.auc) + "\n";
  }
  return out;
}

std::string det_csv(const DetCurve& det) {
  std::string out = "threshold,far,frr\n";
  for (const auto& p : det.points) {
    out += (std::isinf(p.threshold) ? std::string("inf") : format_number(p.threshold)) + "," + format_number(p.far) +
           "," + format_number(p.frr) + "\n";
  }
  return out;
}

std::string score_dump(const ScoreSet& scores) {
  std::string out;
  for (double s : scores.genuine) out += "0\t" + format_number(s) + "\n";
  for (double s : scores.imposter) out += "1\t" + format_number(s) + "\n";
  return out;
}

std::string det_svg(const std::vector<VariantResult>& variants, bool log_axes) {
  const double size = 400, margin = 50;
  const double floor = 1e-4;
  auto map = [&](double v) {
    if (!log_axes) return v;
    return (std::log10(std::max(v, floor)) - std::log10(floor)) / -std::log10(floor);
  };
  auto px = [&](double far) { return margin + size * map(far); };
  auto py = [&](double frr) { return margin + size * (1 - map(frr)); };

  std::string out;
  const std::string total = format_number(size + 2 * margin);
  out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + total + "\" height=\"" + total + "\">\n";
  out += "<rect x=\"" + format_number(margin) + "\" y=\"" + format_number(margin) + "\" width=\"" +
         format_number(size) + "\" height=\"" + format_number(size) + "\" fill=\"none\" stroke=\"#888\"/>\n";
  out += "<text x=\"" + format_number(margin + size / 2) + "\" y=\"" + format_number(size + 1.7 * margin) +
         "\" text-anchor=\"middle\" font-size=\"12\">FAR" + (log_axes ? " (log)" : "") + "</text>\n";
  out += "<text x=\"14\" y=\"" + format_number(margin + size / 2) + "\" font-size=\"12\" transform=\"rotate(-90 14 " +
         format_number(margin + size / 2) + ")\" text-anchor=\"middle\">FRR" + (log_axes ? " (log)" : "") +
         "</text>\n";
  for (std::size_t i = 0; i < variants.size(); ++i) {
    const auto& v = variants[i];
    const char* color = kPalette[i % std::size(kPalette)];
    out += "<polyline fill=\"none\" stroke=\"" + std::string(color) + "\" stroke-width=\"1.5\" data-variant=\"" +
           v.name + "\" points=\"";
    out += format_number(px(0)) + "," + format_number(py(1));
    for (const auto& p : v.det.points) out += " " + format_number(px(p.far)) + "," + format_number(py(p.frr));
    out += "\"/>\n";
    out += "<text x=\"" + format_number(margin + size - 5) + "\" y=\"" +
           format_number(margin + 15 + 14 * static_cast<double>(i)) + "\" text-anchor=\"end\" font-size=\"11\" fill=\"" +
           color + "\">" + v.name + "</text>\n";
  }
  out += "</svg>\n";
  return out;
}

void emit_report(const std::map<std::string, std::string>& meta, const std::vector<VariantResult>& variants,
                 const fs::path& dir, const ReportOptions& options) {
  for (const auto& v : variants) check_name(v.name);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create report directory " + dir.string() + ": " + ec.message());
  std::string run;
  for (const auto& [k, v] : meta) run += k + "=" + v + "\n";
  write_text(dir / "run.txt", run);
  write_text(dir / "metrics.csv", metrics_csv(variants));
  for (const auto& v : variants) {
    write_text(dir / ("det_" + v.name + ".csv"), det_csv(v.det));
    if (options.score_dump) write_text(dir / ("scores_" + v.name + ".tsv"), score_dump(v.scores));
  }
  write_text(dir / "det.svg", det_svg(variants, options.log_axes));
}

}  // namespace texmatch
