#include "gatlab/metrics.hpp"

#include "text_util.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

namespace gatlab {

double tpr(std::span<const int> predicted, std::span<const int> truth) {
  if (predicted.empty()) throw ContractViolation("tpr of an empty sample set");
  if (predicted.size() != truth.size()) {
    throw ContractViolation("tpr: predicted and true index counts differ");
  }
  std::size_t tp = 0;
  for (std::size_t k = 0; k < predicted.size(); ++k) {
    if (predicted[k] == truth[k]) ++tp;
  }
  // TP + FN is the sample count: every sample has exactly one relevant node.
  return static_cast<double>(tp) / static_cast<double>(predicted.size());
}

ErrorStats error_stats(std::span<const double> y_hat, std::span<const double> y) {
  if (y_hat.empty()) throw ContractViolation("error_stats of an empty sample set");
  if (y_hat.size() != y.size()) {
    throw ContractViolation("error_stats: prediction and target counts differ");
  }
  const auto m = static_cast<double>(y_hat.size());
  ErrorStats s;
  double abs_sum = 0.0;
  double signed_sum = 0.0;
  for (std::size_t k = 0; k < y_hat.size(); ++k) {
    const double e = y_hat[k] - y[k];
    abs_sum += std::abs(e);
    signed_sum += e;
    s.max_error = std::max(s.max_error, std::abs(e));
  }
  s.me = abs_sum / m;
  s.me_signed = signed_sum / m;
  double sq = 0.0;
  for (std::size_t k = 0; k < y_hat.size(); ++k) {
    const double d = std::abs(y_hat[k] - y[k]) - s.me;
    sq += d * d;
  }
  s.variance = sq / m;
  return s;
}

int ConfidenceHistogram::bin_of(double alpha) {
  int bin = 0;
  for (int k = 1; k < kBins; ++k) {
    if (alpha > static_cast<double>(k) / kBins) bin = k;
  }
  return bin;
}

ConfidenceHistogram confidence_histogram(std::span<const AttentionRow> rows,
                                         std::span<const int> truth,
                                         std::span<const int> predicted) {
  if (rows.size() != truth.size() || rows.size() != predicted.size()) {
    throw ContractViolation("confidence_histogram: input lengths differ");
  }
  ConfidenceHistogram h;
  std::array<std::size_t, ConfidenceHistogram::kBins> counts{};
  for (std::size_t k = 0; k < rows.size(); ++k) {
    if (predicted[k] != truth[k]) continue;
    ++counts[static_cast<std::size_t>(
        ConfidenceHistogram::bin_of(rows[k].weight_of(truth[k])))];
    ++h.population;
  }
  if (h.population > 0) {
    for (int b = 0; b < ConfidenceHistogram::kBins; ++b) {
      h.rel_freq[static_cast<std::size_t>(b)] =
          static_cast<double>(counts[static_cast<std::size_t>(b)]) /
          static_cast<double>(h.population);
    }
  }
  return h;
}

bool RunMetrics::finite() const {
  return std::isfinite(me) && std::isfinite(tpr) && std::isfinite(max_error) &&
         std::isfinite(variance);
}

double quantile(std::span<const double> values, double q) {
  if (values.empty()) throw ContractViolation("quantile of an empty set");
  std::vector<double> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return v[lo] + frac * (v[hi] - v[lo]);
}

BoxStats box_stats(std::span<const double> values) {
  if (values.empty()) throw ContractViolation("box_stats of an empty set");
  BoxStats b;
  b.q1 = quantile(values, 0.25);
  b.median = quantile(values, 0.5);
  b.q3 = quantile(values, 0.75);
  const auto [mn, mx] = std::minmax_element(values.begin(), values.end());
  b.min = *mn;
  b.max = *mx;
  const double lo_fence = b.q1 - 1.5 * b.iqr();
  const double hi_fence = b.q3 + 1.5 * b.iqr();
  b.whisker_low = b.q1;
  b.whisker_high = b.q3;
  for (double v : values) {
    if (v < lo_fence || v > hi_fence) {
      b.outliers.push_back(v);
    } else {
      b.whisker_low = std::min(b.whisker_low, v);
      b.whisker_high = std::max(b.whisker_high, v);
    }
  }
  std::sort(b.outliers.begin(), b.outliers.end());
  return b;
}

SweepSummary summarize_sweep(
    const std::vector<std::pair<std::string, std::vector<RunMetrics>>>& sweeps) {
  SweepSummary summary;
  for (const auto& [label, runs] : sweeps) {
    SweepEntry e;
    e.label = label;
    e.runs = runs;
    std::vector<double> me, tp, mx;
    for (const RunMetrics& r : runs) {
      if (!r.finite()) {
        ++e.failed;
        continue;
      }
      me.push_back(r.me);
      tp.push_back(r.tpr);
      mx.push_back(r.max_error);
    }
    if (me.empty()) {
      throw ContractViolation("sweep '" + label + "' has no successful run");
    }
    e.me = box_stats(me);
    e.tpr = box_stats(tp);
    e.mean_max_error =
        std::accumulate(mx.begin(), mx.end(), 0.0) / static_cast<double>(mx.size());
    summary.entries.push_back(std::move(e));
  }
  return summary;
}

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  return os;
}

void finish(std::ofstream& os, const std::filesystem::path& path) {
  os.flush();
  if (!os) throw IoError("write failed for " + path.string());
}

}  // namespace

void write_sweep_csv(const std::filesystem::path& path,
                     std::span<const RunMetrics> runs) {
  auto os = open_out(path);
  os << "idx,me,tpr,max_error,variance\n";
  for (std::size_t k = 0; k < runs.size(); ++k) {
    const RunMetrics& r = runs[k];
    os << k << ',' << detail::format_real(r.me) << ',' << detail::format_real(r.tpr)
       << ',' << detail::format_real(r.max_error) << ','
       << detail::format_real(r.variance) << '\n';
  }
  finish(os, path);
}

std::vector<RunMetrics> read_sweep_csv(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  std::vector<RunMetrics> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = detail::split(line, ',');
    if (line_no == 1) {
      if (f.size() != 5 || detail::trim(f[0]) != "idx") {
        throw ParseError("expected header idx,me,tpr,max_error,variance", line_no);
      }
      continue;
    }
    if (f.size() != 5) throw ParseError("expected 5 columns", line_no);
    RunMetrics r;
    const auto me = detail::parse_real(f[1]);
    const auto tp = detail::parse_real(f[2]);
    const auto mx = detail::parse_real(f[3]);
    const auto var = detail::parse_real(f[4]);
    if (!me || !tp || !mx || !var) throw ParseError("non-numeric field", line_no);
    r.me = *me;
    r.tpr = *tp;
    r.max_error = *mx;
    r.variance = *var;
    r.me_signed = std::numeric_limits<double>::quiet_NaN();
    out.push_back(r);
  }
  return out;
}

void write_histogram_csv(const std::filesystem::path& path,
                         const ConfidenceHistogram& h) {
  auto os = open_out(path);
  os << "bin_center,rel_freq\n";
  for (int b = 0; b < ConfidenceHistogram::kBins; ++b) {
    os << fmt::format("{:.2f}", ConfidenceHistogram::center(b)) << ','
       << detail::format_real(h.rel_freq[static_cast<std::size_t>(b)]) << '\n';
  }
  finish(os, path);
}

// ---------------------------------------------------------------------------
// SVG output. Plain hand-written markup; coordinates are rounded to 0.01 px
// so files are stable across runs.

namespace {

constexpr std::array<const char*, 6> kPalette = {
    "#1f77b4", "#17becf", "#333333", "#d62728", "#ff7f0e", "#2ca02c"};

struct Panel {
  double x0, y0, width, height;  // pixel frame
  double lo, hi;                 // value range on the y axis

  double y(double v) const {
    const double span = hi > lo ? hi - lo : 1.0;
    return y0 + height - (v - lo) / span * height;
  }
};

std::string px(double v) { return fmt::format("{:.2f}", v); }

void axis(std::string& svg, const Panel& p, const std::string& label) {
  svg += fmt::format(
      R"svg(<rect x="{}" y="{}" width="{}" height="{}" fill="none" stroke="#999"/>)svg"
      "\n",
      px(p.x0), px(p.y0), px(p.width), px(p.height));
  for (int k = 0; k <= 4; ++k) {
    const double v = p.lo + (p.hi - p.lo) * k / 4.0;
    const double yy = p.y(v);
    svg += fmt::format(
        R"svg(<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="#ddd" stroke-dasharray="3,3"/>)svg"
        "\n",
        px(p.x0), px(yy), px(p.x0 + p.width), px(yy));
    svg += fmt::format(
        R"svg(<text x="{}" y="{}" font-size="10" text-anchor="end">{:.3g}</text>)svg"
        "\n",
        px(p.x0 - 4), px(yy + 3), v);
  }
  svg += fmt::format(
      R"svg(<text x="{}" y="{}" font-size="12" text-anchor="middle" transform="rotate(-90 {} {})">{}</text>)svg"
      "\n",
      px(p.x0 - 40), px(p.y0 + p.height / 2), px(p.x0 - 40),
      px(p.y0 + p.height / 2), label);
}

std::pair<double, double> value_range(const SweepSummary& s, bool me) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const auto& e : s.entries) {
    for (const auto& r : e.runs) {
      if (!r.finite()) continue;
      const double v = me ? r.me : r.tpr;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  if (!std::isfinite(lo)) return {0.0, 1.0};
  if (!me) return {std::min(lo, 0.0), std::max(hi, 1.0)};
  if (hi - lo < 1e-12) hi = lo + 1.0;
  return {std::min(lo, 0.0), hi * 1.05};
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  auto os = open_out(path);
  os << text;
  finish(os, path);
}

}  // namespace

void write_line_plot_svg(const std::filesystem::path& path,
                         const SweepSummary& summary) {
  const double width = 900, height = 420;
  std::string svg = fmt::format(
      R"svg(<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" font-family="sans-serif">)svg"
      "\n",
      width, height);
  std::size_t max_runs = 1;
  for (const auto& e : summary.entries) max_runs = std::max(max_runs, e.runs.size());

  for (int panel = 0; panel < 2; ++panel) {
    const bool me = panel == 0;
    const auto [lo, hi] = value_range(summary, me);
    const Panel p{70, 20.0 + panel * 190.0, 700, 160, lo, hi};
    axis(svg, p, me ? "ME" : "TPR");
    const auto x = [&](std::size_t idx) {
      return p.x0 + (max_runs > 1 ? static_cast<double>(idx) /
                                        static_cast<double>(max_runs - 1)
                                  : 0.5) *
                        p.width;
    };
    for (std::size_t k = 0; k < summary.entries.size(); ++k) {
      const auto& e = summary.entries[k];
      std::string points;
      for (std::size_t idx = 0; idx < e.runs.size(); ++idx) {
        const auto& r = e.runs[idx];
        if (!r.finite()) continue;
        points += px(x(idx)) + "," + px(p.y(me ? r.me : r.tpr)) + " ";
      }
      svg += fmt::format(
          R"svg(<polyline points="{}" fill="none" stroke="{}" stroke-width="1"/>)svg"
          "\n",
          points, kPalette[k % kPalette.size()]);
    }
  }
  svg += fmt::format(
      R"svg(<text x="{}" y="{}" font-size="12" text-anchor="middle">initialization e</text>)svg"
      "\n",
      px(70 + 350), px(height - 20));
  for (std::size_t k = 0; k < summary.entries.size(); ++k) {
    const double ly = 30 + 18.0 * static_cast<double>(k);
    svg += fmt::format(
        R"svg(<rect x="790" y="{}" width="12" height="12" fill="{}"/><text x="808" y="{}" font-size="11">{}</text>)svg"
        "\n",
        px(ly), kPalette[k % kPalette.size()], px(ly + 10),
        summary.entries[k].label);
  }
  svg += "</svg>\n";
  write_text(path, svg);
}

void write_boxplot_svg(const std::filesystem::path& path,
                       const SweepSummary& summary) {
  const double width = 160.0 + 110.0 * static_cast<double>(summary.entries.size());
  const double height = 460;
  std::string svg = fmt::format(
      R"svg(<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" font-family="sans-serif">)svg"
      "\n",
      px(width), height);
  for (int panel = 0; panel < 2; ++panel) {
    const bool me = panel == 0;
    const auto [lo, hi] = value_range(summary, me);
    const Panel p{70, 20.0 + panel * 200.0, width - 100, 170, lo, hi};
    axis(svg, p, me ? "ME" : "TPR");
    const double slot = p.width / static_cast<double>(std::max<std::size_t>(1, summary.entries.size()));
    for (std::size_t k = 0; k < summary.entries.size(); ++k) {
      const auto& e = summary.entries[k];
      const BoxStats& b = me ? e.me : e.tpr;
      const double cx = p.x0 + slot * (static_cast<double>(k) + 0.5);
      const double half = slot * 0.24;
      const char* color = kPalette[k % kPalette.size()];
      svg += fmt::format(
          R"svg(<line x1="{0}" y1="{1}" x2="{0}" y2="{2}" stroke="#000"/>)svg"
          "\n",
          px(cx), px(p.y(b.whisker_low)), px(p.y(b.q1)));
      svg += fmt::format(
          R"svg(<line x1="{0}" y1="{1}" x2="{0}" y2="{2}" stroke="#000"/>)svg"
          "\n",
          px(cx), px(p.y(b.q3)), px(p.y(b.whisker_high)));
      svg += fmt::format(
          R"svg(<rect x="{}" y="{}" width="{}" height="{}" fill="{}" fill-opacity="0.6" stroke="#000"/>)svg"
          "\n",
          px(cx - half), px(p.y(b.q3)), px(2 * half),
          px(std::max(0.0, p.y(b.q1) - p.y(b.q3))), color);
      svg += fmt::format(
          R"svg(<line x1="{0}" y1="{2}" x2="{1}" y2="{2}" stroke="#000" stroke-width="2"/>)svg"
          "\n",
          px(cx - half), px(cx + half), px(p.y(b.median)));
      for (double o : b.outliers) {
        svg += fmt::format(
            R"svg(<circle cx="{}" cy="{}" r="2" fill="none" stroke="#000"/>)svg"
            "\n",
            px(cx), px(p.y(o)));
      }
      if (panel == 1) {
        svg += fmt::format(
            R"svg(<text x="{}" y="{}" font-size="11" text-anchor="middle">{}</text>)svg"
            "\n",
            px(cx), px(p.y0 + p.height + 16), e.label);
      }
    }
  }
  svg += "</svg>\n";
  write_text(path, svg);
}

void write_histogram_svg(
    const std::filesystem::path& path,
    const std::vector<std::pair<std::string, ConfidenceHistogram>>& histograms) {
  const double width = 520, height = 260;
  std::string svg = fmt::format(
      R"svg(<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" font-family="sans-serif">)svg"
      "\n",
      width, height);
  const Panel p{60, 20, 340, 190, 0.0, 1.0};
  axis(svg, p, "relative frequency");
  const double bin_w = p.width / ConfidenceHistogram::kBins;
  const double bar_w = bin_w / static_cast<double>(std::max<std::size_t>(1, histograms.size()));
  for (std::size_t k = 0; k < histograms.size(); ++k) {
    const auto& h = histograms[k].second;
    for (int b = 0; b < ConfidenceHistogram::kBins; ++b) {
      const double f = h.rel_freq[static_cast<std::size_t>(b)];
      if (f <= 0.0) continue;
      svg += fmt::format(
          R"svg(<rect x="{}" y="{}" width="{}" height="{}" fill="{}" fill-opacity="0.7"/>)svg"
          "\n",
          px(p.x0 + b * bin_w + static_cast<double>(k) * bar_w), px(p.y(f)),
          px(bar_w), px(p.y0 + p.height - p.y(f)), kPalette[k % kPalette.size()]);
    }
    svg += fmt::format(
        R"svg(<rect x="420" y="{}" width="12" height="12" fill="{}"/><text x="438" y="{}" font-size="11">{}</text>)svg"
        "\n",
        px(30 + 18.0 * static_cast<double>(k)), kPalette[k % kPalette.size()],
        px(40 + 18.0 * static_cast<double>(k)), histograms[k].first);
  }
  for (int b = 0; b <= ConfidenceHistogram::kBins; b += 2) {
    svg += fmt::format(
        R"svg(<text x="{}" y="{}" font-size="10" text-anchor="middle">{:.1f}</text>)svg"
        "\n",
        px(p.x0 + b * bin_w), px(p.y0 + p.height + 14), b / 10.0);
  }
  svg += fmt::format(
      R"svg(<text x="{}" y="{}" font-size="12" text-anchor="middle">attention on true node</text>)svg"
      "\n",
      px(p.x0 + p.width / 2), px(height - 8));
  svg += "</svg>\n";
  write_text(path, svg);
}

}  // namespace gatlab
