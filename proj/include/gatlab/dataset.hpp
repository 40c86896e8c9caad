#pragma once

// Synthetic relevance dataset on a graph whose node 0 is the query node.
//
// Each sample draws one scalar feature per node from the experiment's value
// range, moves the smallest draw to node 0, and labels the neighbor of node 0
// with the largest relevance sin(x_j - x_0) as the single relevant node r.
// The regression target of node 0 is x_r - x_0; other nodes carry no target.

#include "gatlab/graph.hpp"
#include "gatlab/types.hpp"

#include <cstdint>
#include <filesystem>
#include <numbers>
#include <string>
#include <vector>

namespace gatlab {

enum class ExperimentKind { kI, kII };

std::string to_string(ExperimentKind kind);
// Accepts "I"/"II" (also "1"/"2"); throws std::invalid_argument otherwise.
ExperimentKind parse_experiment(const std::string& name);

struct ExperimentSpec {
  ExperimentKind kind = ExperimentKind::kI;
  double range_lo = 0.0;
  double range_hi = 0.5 * std::numbers::pi;
  int latent_dim = 1;
  int m_train = 20000;
  int m_test = 20000;
  std::uint64_t seed = 0;
  int node_count = 3;

  // Value range and latent dimension fixed by the experiment kind.
  static ExperimentSpec make(ExperimentKind kind, std::uint64_t seed = 0,
                             int m_train = 20000, int m_test = 20000);

  // Throws std::invalid_argument when the range or latent dimension does
  // not match the kind, or when counts are not positive.
  void validate() const;
};

struct Sample {
  Eigen::VectorXd x;           // one feature per node (d = 1)
  Eigen::VectorXd y;           // y(0) = x(r) - x(0); other entries unused, 0
  Eigen::VectorXd alpha_true;  // one-hot at r over node indices
  int relevant = -1;           // r

  friend bool operator==(const Sample&, const Sample&) = default;
};

class GenerationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr double kRelevanceGap = 1e-6;
inline constexpr int kMaxResamples = 1000;

double relevance(double x_i, double x_j);

// Labels an already drawn feature vector. Returns false when the two most
// relevant neighbors of node 0 are closer than kRelevanceGap.
bool label_sample(const Graph& graph, const Eigen::VectorXd& x, Sample& out);

// `count` samples from an RNG stream identified by (spec.seed, stream).
std::vector<Sample> generate(const ExperimentSpec& spec, const Graph& graph,
                             int count, std::uint64_t stream);

struct DatasetSplits {
  std::vector<Sample> train;
  std::vector<Sample> test;
};

// Train uses stream 0 and test stream 1, so the splits never share draws.
DatasetSplits generate_splits(const ExperimentSpec& spec, const Graph& graph);

// CSV: header "m,x_0,...,x_{n-1},r_index,y_0", then one row per sample with
// 17 significant digits. An empty file loads as an empty list.
void save_samples(const std::vector<Sample>& samples,
                  const std::filesystem::path& path);
std::vector<Sample> load_samples(const std::filesystem::path& path);

}  // namespace gatlab
