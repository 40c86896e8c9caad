#pragma once

#include "gatlab/model.hpp"

#include <array>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace gatlab {

// Fraction of samples whose predicted node equals the true node.
// Throws ContractViolation on empty or mismatched input.
double tpr(std::span<const int> predicted, std::span<const int> truth);

struct ErrorStats {
  double me = 0.0;         // mean |y_hat - y|
  double variance = 0.0;   // population variance of |y_hat - y|
  double max_error = 0.0;  // max |y_hat - y|
  double me_signed = 0.0;  // mean (y_hat - y)
};

ErrorStats error_stats(std::span<const double> y_hat, std::span<const double> y);

// Ten right-closed bins of width 0.1 over [0, 1]; 0 falls into the first.
struct ConfidenceHistogram {
  static constexpr int kBins = 10;
  std::array<double, kBins> rel_freq{};
  std::size_t population = 0;

  bool empty() const { return population == 0; }
  static double center(int bin) { return 0.05 + 0.1 * bin; }
  static int bin_of(double alpha);
};

// Histogram of the weight each row puts on its true node, counted only where
// predicted == truth.
ConfidenceHistogram confidence_histogram(std::span<const AttentionRow> rows,
                                         std::span<const int> truth,
                                         std::span<const int> predicted);

// Per-run numbers as written to sweep CSVs.
struct RunMetrics {
  double me = 0.0;
  double tpr = 0.0;
  double max_error = 0.0;
  double variance = 0.0;
  double me_signed = 0.0;

  bool finite() const;
};

// Quantiles by linear interpolation between order statistics (the median of
// an even count is the mean of the two middle values). Whiskers reach the
// most extreme points within 1.5 IQR of the box.
struct BoxStats {
  double q1 = 0.0, median = 0.0, q3 = 0.0;
  double whisker_low = 0.0, whisker_high = 0.0;
  double min = 0.0, max = 0.0;
  std::vector<double> outliers;

  double iqr() const { return q3 - q1; }
};

double quantile(std::span<const double> values, double q);
BoxStats box_stats(std::span<const double> values);

struct SweepEntry {
  std::string label;
  std::vector<RunMetrics> runs;  // indexed by seed; non-finite = failed run
  BoxStats me;
  BoxStats tpr;
  double mean_max_error = 0.0;
  int failed = 0;
};

struct SweepSummary {
  std::vector<SweepEntry> entries;
};

// Failed runs are kept in `runs` but excluded from the statistics. Throws
// ContractViolation if some entry has no successful run.
SweepSummary summarize_sweep(
    const std::vector<std::pair<std::string, std::vector<RunMetrics>>>& sweeps);

// CSV "idx,me,tpr,max_error,variance", one row per seed index.
void write_sweep_csv(const std::filesystem::path& path,
                     std::span<const RunMetrics> runs);
std::vector<RunMetrics> read_sweep_csv(const std::filesystem::path& path);

// CSV "bin_center,rel_freq".
void write_histogram_csv(const std::filesystem::path& path,
                         const ConfidenceHistogram& h);

// ME and TPR against seed index, one polyline per entry.
void write_line_plot_svg(const std::filesystem::path& path,
                         const SweepSummary& summary);
// ME and TPR boxplots, one box per entry.
void write_boxplot_svg(const std::filesystem::path& path,
                       const SweepSummary& summary);
// Bar chart of one or more confidence histograms.
void write_histogram_svg(
    const std::filesystem::path& path,
    const std::vector<std::pair<std::string, ConfidenceHistogram>>& histograms);

}  // namespace gatlab
