#pragma once

#include "gatlab/dataset.hpp"
#include "gatlab/gradients.hpp"
#include "gatlab/loss.hpp"
#include "gatlab/metrics.hpp"
#include "gatlab/model.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace gatlab {

enum class OptimizerKind { kAdam, kSgd };

std::string to_string(OptimizerKind k);
OptimizerKind parse_optimizer(const std::string& name);

struct TrainConfig {
  int epochs = 200;
  int batch_size = 64;
  double learning_rate = 1e-2;
  OptimizerKind optimizer = OptimizerKind::kAdam;
  // Drives parameter initialization and batch shuffling.
  std::uint64_t seed = 0;
  LossKind loss = LossKind::kAbsolute;
  bool audit = false;
  int audit_samples = 256;

  void validate() const;
};

// Adam with bias correction; plain gradient descent when kSgd.
class Optimizer {
 public:
  Optimizer(OptimizerKind kind, double learning_rate, const ModelParams& shape);
  void step(ModelParams& params, const ModelParams& grad);

 private:
  OptimizerKind kind_;
  double lr_;
  double beta1_ = 0.9;
  double beta2_ = 0.999;
  double eps_ = 1e-8;
  long long t_ = 0;
  ModelParams m_;
  ModelParams v_;
};

// Inference of node 0 on every sample, with the attention rows kept so that
// metrics and histograms come from exactly what the model produced.
struct Evaluation {
  std::vector<double> predictions;
  std::vector<double> targets;
  std::vector<int> predicted;  // attention argmax
  std::vector<int> truth;
  std::vector<AttentionRow> attention;
  RunMetrics metrics;
  ConfidenceHistogram histogram;
};

Evaluation evaluate(const ModelParams& params, const VariantConfig& cfg,
                    const Graph& graph, std::span<const Sample> samples);

struct RunResult {
  VariantConfig cfg;
  TrainConfig train;
  ModelParams params;
  double initial_loss = 0.0;        // training loss before the first update
  std::vector<double> loss_trace;   // mean batch loss per epoch
  RunMetrics metrics;               // test split
  ConfidenceHistogram histogram;    // test split
  std::vector<AuditRecord> audit;
  bool failed = false;
  int failed_epoch = -1;
};

// Trains on splits.train and reports on splits.test. A non-finite loss stops
// the run and marks it failed; metrics are then NaN.
RunResult train(const VariantConfig& cfg, const Graph& graph,
                const DatasetSplits& splits, const TrainConfig& tc,
                const std::optional<ModelParams>& warm_start = std::nullopt);

// One run per seed 0..seeds-1 (tc.seed is ignored), results ordered by seed.
// Runs are independent, so `threads` only changes wall time.
std::vector<RunResult> sweep(const VariantConfig& cfg, const Graph& graph,
                             const DatasetSplits& splits, const TrainConfig& tc,
                             int seeds, int threads = 0);

// ---------------------------------------------------------------------------
// key=value run configuration.

struct RunConfig {
  ExperimentKind experiment = ExperimentKind::kI;
  Variant variant = Variant::kGatV2;
  std::uint64_t data_seed = 0;
  int m_train = 20000;
  int m_test = 20000;
  int nodes = 3;
  std::optional<int> d_prime;  // defaults to the experiment's latent dim
  double leaky_slope = kDefaultLeakySlope;
  bool separate_neighbor_transform = false;
  TrainConfig train;
  std::filesystem::path out_dir = "out";

  // Recognised keys: experiment, variant, seed, data_seed, epochs, batch, lr,
  // optimizer, loss, m_train, m_test, nodes, dprime, slope,
  // separate_neighbor_transform, out_dir, audit, audit_samples.
  // Throws std::invalid_argument on unknown keys or bad values.
  void set(const std::string& key, const std::string& value);

  ExperimentSpec experiment_spec() const;
  VariantConfig variant_config() const;
  // Rejects combinations such as d' = 1 for experiment II.
  void validate() const;
};

// '#' starts a comment; blank lines are skipped.
RunConfig load_run_config(const std::filesystem::path& path);

}  // namespace gatlab
