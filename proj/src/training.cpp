#include "gatlab/training.hpp"

#include "text_util.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <thread>

namespace gatlab {

std::string to_string(OptimizerKind k) {
  return k == OptimizerKind::kAdam ? "adam" : "sgd";
}

OptimizerKind parse_optimizer(const std::string& name) {
  if (name == "adam") return OptimizerKind::kAdam;
  if (name == "sgd") return OptimizerKind::kSgd;
  throw std::invalid_argument("unknown optimizer '" + name + "'");
}

void TrainConfig::validate() const {
  if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("learning rate must be > 0");
  if (audit && audit_samples < 1) {
    throw std::invalid_argument("audit needs at least one probe sample");
  }
}

Optimizer::Optimizer(OptimizerKind kind, double learning_rate,
                     const ModelParams& shape)
    : kind_(kind), lr_(learning_rate), m_(shape), v_(shape) {
  m_.for_each([](std::string_view, Tensor& t) { t.setZero(); });
  v_.for_each([](std::string_view, Tensor& t) { t.setZero(); });
}

void Optimizer::step(ModelParams& params, const ModelParams& grad) {
  std::vector<Tensor*> p, m, v;
  std::vector<const Tensor*> g;
  params.for_each([&](std::string_view, Tensor& t) { p.push_back(&t); });
  m_.for_each([&](std::string_view, Tensor& t) { m.push_back(&t); });
  v_.for_each([&](std::string_view, Tensor& t) { v.push_back(&t); });
  grad.for_each([&](std::string_view, const Tensor& t) { g.push_back(&t); });

  if (kind_ == OptimizerKind::kSgd) {
    for (std::size_t k = 0; k < p.size(); ++k) *p[k] -= lr_ * *g[k];
    return;
  }
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t k = 0; k < p.size(); ++k) {
    *m[k] = beta1_ * *m[k] + (1.0 - beta1_) * *g[k];
    *v[k] = beta2_ * *v[k] + (1.0 - beta2_) * g[k]->cwiseAbs2();
    p[k]->array() -= lr_ * (m[k]->array() / c1) /
                     ((v[k]->array() / c2).sqrt() + eps_);
  }
}

Evaluation evaluate(const ModelParams& params, const VariantConfig& cfg,
                    const Graph& graph, std::span<const Sample> samples) {
  Evaluation ev;
  const std::size_t m = samples.size();
  ev.predictions.reserve(m);
  ev.targets.reserve(m);
  ev.predicted.reserve(m);
  ev.truth.reserve(m);
  ev.attention.reserve(m);
  Eigen::MatrixXd features;
  for (const Sample& s : samples) {
    features = s.x;
    auto node = predict_node<double>(params, cfg, graph, features, 0);
    ev.predictions.push_back(node.prediction(0));
    ev.targets.push_back(s.y(0));
    ev.predicted.push_back(node.attention.argmax());
    ev.truth.push_back(s.relevant);
    ev.attention.push_back(std::move(node.attention));
  }
  if (m > 0) {
    const ErrorStats es = error_stats(ev.predictions, ev.targets);
    ev.metrics.me = es.me;
    ev.metrics.variance = es.variance;
    ev.metrics.max_error = es.max_error;
    ev.metrics.me_signed = es.me_signed;
    ev.metrics.tpr = tpr(ev.predicted, ev.truth);
    ev.histogram = confidence_histogram(ev.attention, ev.truth, ev.predicted);
  }
  return ev;
}

RunResult train(const VariantConfig& cfg, const Graph& graph,
                const DatasetSplits& splits, const TrainConfig& tc,
                const std::optional<ModelParams>& warm_start) {
  cfg.validate();
  tc.validate();
  if (splits.train.empty() || splits.test.empty()) {
    throw ContractViolation("train: empty train or test split");
  }

  RunResult result;
  result.cfg = cfg;
  result.train = tc;
  result.params = warm_start ? *warm_start : init_params(cfg, tc.seed);
  result.initial_loss = batch_loss(result.params, cfg, graph, splits.train, tc.loss);

  std::optional<GradientAudit> audit;
  if (tc.audit) {
    const auto probe_count = std::min<std::size_t>(
        static_cast<std::size_t>(tc.audit_samples), splits.train.size());
    audit.emplace(cfg, graph,
                  std::vector<Sample>(splits.train.begin(),
                                      splits.train.begin() +
                                          static_cast<std::ptrdiff_t>(probe_count)),
                  tc.loss);
    result.audit.push_back((*audit)(0, result.params));
  }

  std::seed_seq seq{static_cast<std::uint32_t>(tc.seed),
                    static_cast<std::uint32_t>(tc.seed >> 32), 0x5bu};
  std::mt19937_64 rng(seq);
  std::vector<std::size_t> order(splits.train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  Optimizer opt(tc.optimizer, tc.learning_rate, result.params);
  ad::Tape tape;
  std::vector<const Sample*> batch;
  batch.reserve(static_cast<std::size_t>(tc.batch_size));

  for (int epoch = 1; epoch <= tc.epochs && !result.failed; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(tc.batch_size)) {
      const std::size_t stop =
          std::min(order.size(), start + static_cast<std::size_t>(tc.batch_size));
      batch.clear();
      for (std::size_t k = start; k < stop; ++k) batch.push_back(&splits.train[order[k]]);

      tape.clear();
      const ParamVars vars = bind_params(tape, result.params, cfg);
      const ad::Var root = build_batch_loss(tape, vars, cfg, graph, batch, tc.loss);
      const double value = tape.scalar(root);
      if (!std::isfinite(value)) {
        result.failed = true;
        result.failed_epoch = epoch;
        break;
      }
      tape.backward(root);
      opt.step(result.params, collect_gradients(tape, vars, result.params));
      epoch_loss += value;
      ++batches;
    }
    if (result.failed) break;
    result.loss_trace.push_back(epoch_loss / static_cast<double>(batches));
    if (audit) result.audit.push_back((*audit)(epoch, result.params));
  }

  if (result.failed) {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    result.metrics = RunMetrics{nan, nan, nan, nan, nan};
    return result;
  }
  const Evaluation ev = evaluate(result.params, cfg, graph, splits.test);
  result.metrics = ev.metrics;
  result.histogram = ev.histogram;
  return result;
}

std::vector<RunResult> sweep(const VariantConfig& cfg, const Graph& graph,
                             const DatasetSplits& splits, const TrainConfig& tc,
                             int seeds, int threads) {
  if (seeds < 1) throw std::invalid_argument("sweep needs at least one seed");
  std::vector<RunResult> results(static_cast<std::size_t>(seeds));
  std::atomic<int> next{0};
  const auto worker = [&] {
    for (int e = next++; e < seeds; e = next++) {
      TrainConfig run_tc = tc;
      run_tc.seed = static_cast<std::uint64_t>(e);
      results[static_cast<std::size_t>(e)] = train(cfg, graph, splits, run_tc);
    }
  };
  int n = threads > 0 ? threads
                      : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  n = std::min(n, seeds);
  if (n <= 1) {
    worker();
    return results;
  }
  std::vector<std::jthread> pool;
  pool.reserve(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) pool.emplace_back(worker);
  pool.clear();  // joins
  return results;
}

// ---------------------------------------------------------------------------

namespace {

int to_int(const std::string& key, const std::string& value) {
  const auto v = detail::parse_int(value);
  if (!v) throw std::invalid_argument(key + ": expected an integer, got '" + value + "'");
  return static_cast<int>(*v);
}

double to_real(const std::string& key, const std::string& value) {
  const auto v = detail::parse_real(value);
  if (!v) throw std::invalid_argument(key + ": expected a number, got '" + value + "'");
  return *v;
}

bool to_bool(const std::string& key, const std::string& value) {
  if (value == "1" || value == "true" || value == "on" || value == "yes") return true;
  if (value == "0" || value == "false" || value == "off" || value == "no") return false;
  throw std::invalid_argument(key + ": expected a boolean, got '" + value + "'");
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
  if (key == "experiment") {
    experiment = parse_experiment(value);
  } else if (key == "variant") {
    variant = parse_variant(value);
  } else if (key == "seed") {
    train.seed = static_cast<std::uint64_t>(to_int(key, value));
  } else if (key == "data_seed") {
    data_seed = static_cast<std::uint64_t>(to_int(key, value));
  } else if (key == "epochs") {
    train.epochs = to_int(key, value);
  } else if (key == "batch") {
    train.batch_size = to_int(key, value);
  } else if (key == "lr") {
    train.learning_rate = to_real(key, value);
  } else if (key == "optimizer") {
    train.optimizer = parse_optimizer(value);
  } else if (key == "loss") {
    train.loss = parse_loss(value);
  } else if (key == "m_train") {
    m_train = to_int(key, value);
  } else if (key == "m_test") {
    m_test = to_int(key, value);
  } else if (key == "nodes") {
    nodes = to_int(key, value);
  } else if (key == "dprime") {
    d_prime = to_int(key, value);
  } else if (key == "slope") {
    leaky_slope = to_real(key, value);
  } else if (key == "separate_neighbor_transform") {
    separate_neighbor_transform = to_bool(key, value);
  } else if (key == "out_dir") {
    out_dir = value;
  } else if (key == "audit") {
    train.audit = to_bool(key, value);
  } else if (key == "audit_samples") {
    train.audit_samples = to_int(key, value);
  } else {
    throw std::invalid_argument("unknown config key '" + key + "'");
  }
}

ExperimentSpec RunConfig::experiment_spec() const {
  ExperimentSpec s = ExperimentSpec::make(experiment, data_seed, m_train, m_test);
  s.node_count = nodes;
  return s;
}

VariantConfig RunConfig::variant_config() const {
  VariantConfig c =
      VariantConfig::make(variant, d_prime.value_or(experiment_spec().latent_dim));
  c.leaky_slope = leaky_slope;
  c.separate_neighbor_transform = separate_neighbor_transform;
  return c;
}

void RunConfig::validate() const {
  const ExperimentSpec spec = experiment_spec();
  if (d_prime && *d_prime != spec.latent_dim) {
    throw std::invalid_argument(
        "experiment " + to_string(experiment) + " requires the latent dimension d' = " +
        std::to_string(spec.latent_dim) + ", got " + std::to_string(*d_prime));
  }
  spec.validate();
  variant_config().validate();
  train.validate();
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open config " + path.string());
  RunConfig cfg;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto text = detail::trim(line);
    if (text.empty()) continue;
    const auto eq = text.find('=');
    if (eq == std::string_view::npos) throw ParseError("expected key=value", line_no);
    try {
      cfg.set(std::string(detail::trim(text.substr(0, eq))),
              std::string(detail::trim(text.substr(eq + 1))));
    } catch (const std::invalid_argument& e) {
      throw ParseError(e.what(), line_no);
    }
  }
  return cfg;
}

}  // namespace gatlab
