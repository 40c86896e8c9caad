#include "gatlab/metrics.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>

using namespace gatlab;

namespace {

std::filesystem::path temp_dir() {
  const auto dir = std::filesystem::temp_directory_path() / "gatlab_test_metrics";
  std::filesystem::create_directories(dir);
  return dir;
}

AttentionRow row(std::vector<int> nodes, std::vector<double> alpha) {
  AttentionRow r;
  r.nodes = std::move(nodes);
  r.alpha = Eigen::Map<const Eigen::VectorXd>(alpha.data(), static_cast<Eigen::Index>(alpha.size()));
  return r;
}

}  // namespace

TEST(Tpr, Examples) {
  const std::vector<int> truth = {1, 2, 1, 2};
  EXPECT_EQ(tpr(truth, truth), 1.0);
  const std::vector<int> none = {2, 1, 2, 1};
  EXPECT_EQ(tpr(none, truth), 0.0);

  std::vector<int> p(1000, 1), t(1000, 1);
  for (int k = 497; k < 1000; ++k) p[static_cast<std::size_t>(k)] = 2;
  EXPECT_DOUBLE_EQ(tpr(p, t), 0.497);

  EXPECT_THROW(tpr(std::vector<int>{}, std::vector<int>{}), ContractViolation);
  EXPECT_THROW(tpr(std::vector<int>{1}, std::vector<int>{1, 2}), ContractViolation);
}

TEST(ErrorStats, Examples) {
  const std::vector<double> y = {1.0, 1.0};
  const ErrorStats a = error_stats(std::vector<double>{1.1, 0.7}, y);
  EXPECT_NEAR(a.me, 0.2, 1e-15);
  EXPECT_NEAR(a.variance, 0.01, 1e-15);
  EXPECT_NEAR(a.max_error, 0.3, 1e-15);
  EXPECT_NEAR(a.me_signed, -0.1, 1e-15);

  const ErrorStats b = error_stats(std::vector<double>{0.3}, std::vector<double>{0.5});
  EXPECT_NEAR(b.me, 0.2, 1e-15);
  EXPECT_NEAR(b.me_signed, -0.2, 1e-15);
  EXPECT_EQ(b.variance, 0.0);

  const ErrorStats exact = error_stats(y, y);
  EXPECT_EQ(exact.me, 0.0);
  EXPECT_EQ(exact.max_error, 0.0);
}

TEST(ErrorStats, PermutationInvariant) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n;
  std::vector<double> yh(200), y(200);
  for (std::size_t k = 0; k < y.size(); ++k) {
    yh[k] = n(rng);
    y[k] = n(rng);
  }
  const ErrorStats a = error_stats(yh, y);
  std::vector<std::size_t> idx(y.size());
  for (std::size_t k = 0; k < idx.size(); ++k) idx[k] = k;
  std::shuffle(idx.begin(), idx.end(), rng);
  std::vector<double> yh2, y2;
  for (std::size_t k : idx) {
    yh2.push_back(yh[k]);
    y2.push_back(y[k]);
  }
  const ErrorStats b = error_stats(yh2, y2);
  EXPECT_NEAR(a.me, b.me, 1e-14);
  EXPECT_NEAR(a.variance, b.variance, 1e-14);
  EXPECT_EQ(a.max_error, b.max_error);
}

TEST(Histogram, BinEdges) {
  EXPECT_EQ(ConfidenceHistogram::bin_of(0.0), 0);
  EXPECT_EQ(ConfidenceHistogram::bin_of(0.05), 0);
  EXPECT_EQ(ConfidenceHistogram::bin_of(0.1), 0);
  EXPECT_EQ(ConfidenceHistogram::bin_of(0.1000001), 1);
  EXPECT_EQ(ConfidenceHistogram::bin_of(0.95), 9);
  EXPECT_EQ(ConfidenceHistogram::bin_of(1.0), 9);
  EXPECT_DOUBLE_EQ(ConfidenceHistogram::center(0), 0.05);
  EXPECT_DOUBLE_EQ(ConfidenceHistogram::center(9), 0.95);
}

TEST(Histogram, CountsTruePositivesOnly) {
  const std::vector<AttentionRow> rows = {
      row({1, 2}, {0.95, 0.05}),  // TP, top bin
      row({1, 2}, {0.45, 0.55}),  // miss
      row({1, 2}, {0.3, 0.7}),    // TP on node 2, bin 6
      row({1, 2}, {0.98, 0.02}),  // TP, top bin
  };
  const std::vector<int> truth = {1, 1, 2, 1};
  const std::vector<int> predicted = {1, 2, 2, 1};
  const ConfidenceHistogram h = confidence_histogram(rows, truth, predicted);
  EXPECT_EQ(h.population, 3u);
  EXPECT_DOUBLE_EQ(h.rel_freq[9], 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(h.rel_freq[6], 1.0 / 3.0);
  double total = 0;
  for (double f : h.rel_freq) total += f;
  EXPECT_NEAR(total, 1.0, 1e-15);
}

TEST(Histogram, EmptyWhenNoTruePositives) {
  const std::vector<AttentionRow> rows = {row({1, 2}, {0.4, 0.6})};
  const ConfidenceHistogram h =
      confidence_histogram(rows, std::vector<int>{1}, std::vector<int>{2});
  EXPECT_TRUE(h.empty());
  for (double f : h.rel_freq) EXPECT_EQ(f, 0.0);
}

TEST(BoxStats, QuantileExamples) {
  const std::vector<double> two = {0.4, 1.0};
  EXPECT_DOUBLE_EQ(quantile(two, 0.5), 0.7);
  const std::vector<double> same(20, 0.993);
  const BoxStats s = box_stats(same);
  EXPECT_EQ(s.iqr(), 0.0);
  EXPECT_EQ(s.median, 0.993);
  EXPECT_TRUE(s.outliers.empty());

  const std::vector<double> five = {5, 1, 3, 2, 4};
  EXPECT_EQ(quantile(five, 0.5), 3.0);
  EXPECT_EQ(quantile(five, 0.25), 2.0);
  EXPECT_EQ(quantile(five, 0.0), 1.0);
  EXPECT_EQ(quantile(five, 1.0), 5.0);
  EXPECT_THROW(quantile(std::vector<double>{}, 0.5), ContractViolation);
}

TEST(BoxStats, WhiskersAndOutliers) {
  const std::vector<double> v = {1, 2, 3, 4, 5, 6, 7, 8, 100};
  const BoxStats s = box_stats(v);
  EXPECT_EQ(s.median, 5.0);
  EXPECT_EQ(s.q1, 3.0);
  EXPECT_EQ(s.q3, 7.0);
  EXPECT_EQ(s.whisker_low, 1.0);
  EXPECT_EQ(s.whisker_high, 8.0);
  ASSERT_EQ(s.outliers.size(), 1u);
  EXPECT_EQ(s.outliers[0], 100.0);
  EXPECT_EQ(s.max, 100.0);
}

TEST(Sweep, SummaryExcludesFailedRuns) {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  std::vector<RunMetrics> runs = {{0.1, 1.0, 0.2, 0.0, 0.1},
                                  {0.3, 0.5, 0.6, 0.0, 0.3},
                                  {nan, nan, nan, nan, nan}};
  const SweepSummary s = summarize_sweep({{"a", runs}});
  ASSERT_EQ(s.entries.size(), 1u);
  EXPECT_EQ(s.entries[0].failed, 1);
  EXPECT_EQ(s.entries[0].runs.size(), 3u);
  EXPECT_DOUBLE_EQ(s.entries[0].me.median, 0.2);
  EXPECT_DOUBLE_EQ(s.entries[0].tpr.median, 0.75);
  EXPECT_DOUBLE_EQ(s.entries[0].mean_max_error, 0.4);

  EXPECT_THROW(summarize_sweep({{"dead", {{nan, nan, nan, nan, nan}}}}), ContractViolation);
}

TEST(Sweep, CsvRoundTrip) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u;
  std::vector<RunMetrics> runs(20);
  for (RunMetrics& r : runs) r = {u(rng), u(rng), u(rng), u(rng), u(rng)};
  const auto path = temp_dir() / "sweep.csv";
  write_sweep_csv(path, runs);
  const auto back = read_sweep_csv(path);
  ASSERT_EQ(back.size(), runs.size());
  for (std::size_t k = 0; k < runs.size(); ++k) {
    EXPECT_EQ(back[k].me, runs[k].me);
    EXPECT_EQ(back[k].tpr, runs[k].tpr);
    EXPECT_EQ(back[k].max_error, runs[k].max_error);
    EXPECT_EQ(back[k].variance, runs[k].variance);
  }
  std::ifstream is(path);
  std::string header;
  std::getline(is, header);
  EXPECT_EQ(header.rfind("idx,me,tpr,max_error,variance", 0), 0u);
}

TEST(Plots, WritersProduceSvg) {
  const auto dir = temp_dir();
  std::vector<RunMetrics> a = {{0.1, 1.0, 0.2, 0.0, 0.1}, {0.2, 0.9, 0.3, 0.0, 0.2}};
  std::vector<RunMetrics> b = {{0.4, 0.5, 0.9, 0.1, 0.4}, {0.5, 0.6, 1.0, 0.1, 0.5}};
  const SweepSummary s = summarize_sweep({{"a", a}, {"b", b}});
  write_boxplot_svg(dir / "box.svg", s);
  write_line_plot_svg(dir / "lines.svg", s);
  ConfidenceHistogram h;
  h.rel_freq[9] = 1.0;
  h.population = 4;
  write_histogram_svg(dir / "hist.svg", {{"a", h}});
  write_histogram_csv(dir / "hist.csv", h);
  for (const char* f : {"box.svg", "lines.svg", "hist.svg"}) {
    std::ifstream is(dir / f);
    const std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    EXPECT_NE(text.find("<svg"), std::string::npos) << f;
    EXPECT_NE(text.find("</svg>"), std::string::npos) << f;
  }
  std::ifstream is(dir / "hist.csv");
  std::string line;
  int lines = 0;
  while (std::getline(is, line)) ++lines;
  EXPECT_EQ(lines, 11);
}
