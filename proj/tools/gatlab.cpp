// gatlab command-line driver.
//
//   gatlab gen-data      --experiment I --seed 7 --m 20000 --out data.csv
//   gatlab train         --variant gat-theta-n --experiment II --seed 3
//   gatlab sweep         --variant gatv2 --variant gat-theta-n-plus --seeds 20
//   gatlab grad-check    --trials 100
//   gatlab analyze-signs --checkpoint ckpt.txt --data data.csv
//   gatlab report        --sweep gatv2=out/sweep_II/gatv2.csv --out-dir out/report
//
// Exit codes: 0 success, 1 validation error, 2 I/O error, 3 tolerance breach.

#include "gatlab/training.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace {

using namespace gatlab;

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitIo = 2;
constexpr int kExitTolerance = 3;

std::filesystem::path default_out_dir() {
  if (const char* env = std::getenv("GATLAB_OUT_DIR"); env && *env) return env;
  return "out";
}

// Flags that map one-to-one onto RunConfig keys. They are applied on top of
// --config so the command line always wins.
struct RunFlags {
  std::string config;
  std::vector<std::pair<CLI::Option*, std::string>> bound;
  std::map<std::string, std::string> values;

  void add(CLI::App* app, const std::string& flag, const std::string& key,
           const std::string& help) {
    bound.emplace_back(app->add_option(flag, values[key], help), key);
  }

  RunConfig resolve() const {
    RunConfig cfg;
    cfg.out_dir = default_out_dir();
    if (!config.empty()) {
      if (!std::filesystem::exists(config)) throw IoError("config not found: " + config);
      cfg = load_run_config(config);
    }
    for (const auto& [opt, key] : bound) {
      if (opt->count() > 0) cfg.set(key, values.at(key));
    }
    cfg.validate();
    return cfg;
  }
};

void add_run_flags(CLI::App* app, RunFlags& f, bool with_seed) {
  app->add_option("--config", f.config, "key=value config file (flags override it)");
  f.add(app, "--experiment", "experiment", "I or II");
  if (with_seed) f.add(app, "--seed", "seed", "initialization and shuffling seed");
  f.add(app, "--data-seed", "data_seed", "dataset seed");
  f.add(app, "--m-train", "m_train", "training samples");
  f.add(app, "--m-test", "m_test", "test samples");
  f.add(app, "--nodes", "nodes", "star graph node count");
  f.add(app, "--dprime", "dprime", "latent dimension (fixed by the experiment)");
  f.add(app, "--slope", "slope", "LeakyReLU negative slope");
  f.add(app, "--separate-neighbor-transform", "separate_neighbor_transform",
        "own neighbor transform for theta-r variants (0/1)");
  f.add(app, "--epochs", "epochs", "training epochs");
  f.add(app, "--batch", "batch", "mini-batch size");
  f.add(app, "--lr", "lr", "learning rate");
  f.add(app, "--optimizer", "optimizer", "adam or sgd");
  f.add(app, "--loss", "loss", "absolute or signed");
  f.add(app, "--audit", "audit", "record the per-epoch gradient audit (0/1)");
  f.add(app, "--audit-samples", "audit_samples", "probe samples for the audit");
  f.add(app, "--out-dir", "out_dir", "output directory (default $GATLAB_OUT_DIR or ./out)");
}

std::string run_stem(const RunConfig& cfg) {
  return fmt::format("{}_exp{}_seed{}", to_string(cfg.variant), to_string(cfg.experiment),
                     cfg.train.seed);
}

std::string real(double v) { return fmt::format("{:.17g}", v); }

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  return os;
}

void print_row_header() {
  fmt::print("{:<18} {:>7} {:>9} {:>9} {:>9} {:>9}\n", "variant", "TPR", "ME", "var",
             "max_err", "ME_signed");
}

void print_row(const std::string& label, const RunMetrics& m) {
  fmt::print("{:<18} {:>7.4f} {:>9.5f} {:>9.5f} {:>9.5f} {:>9.5f}\n", label, m.tpr, m.me,
             m.variance, m.max_error, m.me_signed);
}

// ---------------------------------------------------------------------------

struct GenDataArgs {
  std::string experiment = "I";
  std::uint64_t seed = 0;
  int m = 20000;
  int nodes = 3;
  int stream = 0;
  std::string out;
};

int cmd_gen_data(const GenDataArgs& a) {
  ExperimentSpec spec = ExperimentSpec::make(parse_experiment(a.experiment), a.seed, a.m, 1);
  spec.node_count = a.nodes;
  spec.validate();
  if (a.stream < 0) throw std::invalid_argument("--stream must be >= 0");
  const std::filesystem::path out =
      a.out.empty() ? default_out_dir() / fmt::format("data_exp{}_seed{}.csv",
                                                      to_string(spec.kind), a.seed)
                    : std::filesystem::path(a.out);
  const Graph graph = star_graph(spec.node_count);
  const std::vector<Sample> samples =
      generate(spec, graph, a.m, static_cast<std::uint64_t>(a.stream));
  if (out.has_parent_path()) std::filesystem::create_directories(out.parent_path());
  save_samples(samples, out);

  double lo = samples.front().x.minCoeff();
  double hi = samples.front().x.maxCoeff();
  for (const Sample& s : samples) {
    lo = std::min(lo, s.x.minCoeff());
    hi = std::max(hi, s.x.maxCoeff());
  }
  fmt::print("wrote {} samples to {}\n", samples.size(), out.string());
  fmt::print("value range [{:.6f}, {:.6f}] within [{:.6f}, {:.6f}]\n", lo, hi,
             spec.range_lo, spec.range_hi);
  return kExitOk;
}

// ---------------------------------------------------------------------------

void write_run_outputs(const RunResult& r, const RunConfig& cfg,
                       const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    auto os = open_out(dir / "summary.csv");
    os << "variant,experiment,seed,tpr,me,me_signed,variance,max_error,initial_loss,"
          "final_loss,failed,failed_epoch\n";
    const double final_loss = r.loss_trace.empty()
                                  ? std::numeric_limits<double>::quiet_NaN()
                                  : r.loss_trace.back();
    os << to_string(cfg.variant) << ',' << to_string(cfg.experiment) << ','
       << cfg.train.seed << ',' << real(r.metrics.tpr) << ',' << real(r.metrics.me) << ','
       << real(r.metrics.me_signed) << ',' << real(r.metrics.variance) << ','
       << real(r.metrics.max_error) << ',' << real(r.initial_loss) << ','
       << real(final_loss) << ',' << (r.failed ? 1 : 0) << ',' << r.failed_epoch << '\n';
  }
  {
    auto os = open_out(dir / "loss.csv");
    os << "epoch,loss\n";
    for (std::size_t e = 0; e < r.loss_trace.size(); ++e) {
      os << e + 1 << ',' << real(r.loss_trace[e]) << '\n';
    }
  }
  if (!r.audit.empty()) {
    auto os = open_out(dir / "audit.csv");
    os << "epoch,fraction_dead,central_fraction_dead,grad_theta_r_norm\n";
    for (const AuditRecord& a : r.audit) {
      os << a.epoch << ',' << real(a.fraction_dead) << ',' << real(a.central_fraction_dead)
         << ',' << real(a.grad_theta_r_norm) << '\n';
    }
  }
  if (!r.failed) {
    write_histogram_csv(dir / "histogram.csv", r.histogram);
    write_histogram_svg(dir / "histogram.svg", {{to_string(cfg.variant), r.histogram}});
  }
  save_checkpoint(Checkpoint{r.cfg, r.params, cfg.train.seed}, dir / "checkpoint.txt");
}

int cmd_train(const RunFlags& flags) {
  const RunConfig cfg = flags.resolve();
  const ExperimentSpec spec = cfg.experiment_spec();
  const Graph graph = star_graph(spec.node_count);
  const DatasetSplits splits = generate_splits(spec, graph);
  const RunResult r = train(cfg.variant_config(), graph, splits, cfg.train);

  const std::filesystem::path dir = cfg.out_dir / ("train_" + run_stem(cfg));
  write_run_outputs(r, cfg, dir);

  print_row_header();
  print_row(to_string(cfg.variant), r.metrics);
  if (r.failed) fmt::print("run failed: non-finite loss in epoch {}\n", r.failed_epoch);
  fmt::print("outputs in {}\n", dir.string());
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct SweepArgs {
  std::vector<std::string> variants;
  int seeds = 20;
  int threads = 0;
};

int cmd_sweep(const RunFlags& flags, const SweepArgs& a) {
  if (a.seeds < 1) throw std::invalid_argument("--seeds must be >= 1");
  RunConfig cfg = flags.resolve();
  std::vector<Variant> variants;
  for (const std::string& name : a.variants) variants.push_back(parse_variant(name));
  if (variants.empty()) variants.push_back(cfg.variant);

  const ExperimentSpec spec = cfg.experiment_spec();
  const Graph graph = star_graph(spec.node_count);
  const DatasetSplits splits = generate_splits(spec, graph);
  const std::filesystem::path dir =
      cfg.out_dir / fmt::format("sweep_exp{}", to_string(cfg.experiment));

  std::vector<std::pair<std::string, std::vector<RunMetrics>>> all;
  for (Variant v : variants) {
    cfg.variant = v;
    cfg.validate();
    const std::vector<RunResult> runs =
        sweep(cfg.variant_config(), graph, splits, cfg.train, a.seeds, a.threads);
    std::vector<RunMetrics> metrics;
    std::filesystem::create_directories(dir / "checkpoints");
    for (const RunResult& r : runs) {
      metrics.push_back(r.metrics);
      save_checkpoint(Checkpoint{r.cfg, r.params, r.train.seed},
                      dir / "checkpoints" /
                          fmt::format("{}_seed{}.txt", to_string(v), r.train.seed));
    }
    write_sweep_csv(dir / (to_string(v) + ".csv"), metrics);
    all.emplace_back(to_string(v), std::move(metrics));
  }

  const SweepSummary summary = summarize_sweep(all);
  write_boxplot_svg(dir / "boxplot.svg", summary);
  write_line_plot_svg(dir / "lines.svg", summary);
  fmt::print("{:<18} {:>6} {:>10} {:>10} {:>10} {:>10} {:>7}\n", "variant", "seeds",
             "med_TPR", "IQR_TPR", "med_ME", "IQR_ME", "failed");
  for (const SweepEntry& e : summary.entries) {
    fmt::print("{:<18} {:>6} {:>10.4f} {:>10.4f} {:>10.5f} {:>10.5f} {:>7}\n", e.label,
               e.runs.size(), e.tpr.median, e.tpr.iqr(), e.me.median, e.me.iqr(), e.failed);
  }
  fmt::print("outputs in {}\n", dir.string());
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct GradCheckArgs {
  std::uint64_t seed = 0;
  int trials = 100;
  std::vector<int> dprimes{1, 2, 4};
  double tolerance = 1e-4;
  double step = 1e-5;
};

int cmd_grad_check(const GradCheckArgs& a) {
  if (a.trials < 1) throw std::invalid_argument("--trials must be >= 1");
  if (a.dprimes.empty()) throw std::invalid_argument("--dprime needs at least one value");
  for (int d : a.dprimes) {
    if (d < 1) throw std::invalid_argument("--dprime values must be >= 1");
  }
  if (!(a.step > 0.0)) throw std::invalid_argument("--step must be > 0");

  struct Row {
    double analytic = 0.0, autodiff = 0.0, fd = 0.0, worst = 0.0;
    bool has_analytic = false;
  };
  std::vector<std::string> order;
  std::map<std::string, Row> rows;
  for (int k = 0; k < a.trials; ++k) {
    const int dp = a.dprimes[static_cast<std::size_t>(k) % a.dprimes.size()];
    const GradCheckTrial trial = random_trial(a.seed + static_cast<std::uint64_t>(k), dp);
    for (const GradCheck& c : check_trial(trial, a.step)) {
      if (!rows.contains(c.parameter)) order.push_back(c.parameter);
      Row& row = rows[c.parameter];
      row.autodiff += c.autodiff.norm() / a.trials;
      row.fd += c.finite_difference.norm() / a.trials;
      if (c.analytic.size() > 0) {
        row.has_analytic = true;
        row.analytic += c.analytic.norm() / a.trials;
      }
      row.worst = std::max(row.worst, c.max_rel_error);
    }
  }

  fmt::print("{} trials, d' cycling over {{{}}}, mean gradient norms\n", a.trials,
             fmt::join(a.dprimes, ","));
  fmt::print("{:<10} {:>14} {:>14} {:>14} {:>12}\n", "parameter", "analytic", "autodiff",
             "finite_diff", "max_rel_err");
  double worst = 0.0;
  for (const std::string& name : order) {
    const Row& r = rows[name];
    fmt::print("{:<10} {:>14} {:>14.6e} {:>14.6e} {:>12.3e}\n", name,
               r.has_analytic ? fmt::format("{:.6e}", r.analytic) : std::string("-"),
               r.autodiff, r.fd, r.worst);
    worst = std::max(worst, r.worst);
  }
  const bool ok = worst <= a.tolerance;
  fmt::print("max relative error {:.3e} {} tolerance {:.1e}\n", worst, ok ? "within" : "EXCEEDS",
             a.tolerance);
  return ok ? kExitOk : kExitTolerance;
}

// ---------------------------------------------------------------------------

struct SignArgs {
  std::string checkpoint;
  std::string data;
  int limit = 0;
};

int cmd_analyze_signs(const SignArgs& a) {
  if (a.limit < 0) throw std::invalid_argument("--limit must be >= 0");
  if (!std::filesystem::exists(a.checkpoint)) {
    throw IoError("checkpoint not found: " + a.checkpoint);
  }
  if (!std::filesystem::exists(a.data)) throw IoError("data file not found: " + a.data);
  const Checkpoint ckpt = load_checkpoint(a.checkpoint);
  std::vector<Sample> samples = load_samples(a.data);
  if (samples.empty()) throw std::invalid_argument("data file has no samples");
  if (a.limit > 0 && static_cast<std::size_t>(a.limit) < samples.size()) {
    samples.resize(static_cast<std::size_t>(a.limit));
  }
  const Graph graph = star_graph(static_cast<int>(samples.front().x.size()));
  const SignSummary s = analyze_signs(ckpt.params, ckpt.cfg, graph, samples);

  fmt::print("variant {}  d'={}  samples {}\n", to_string(ckpt.cfg.variant),
             ckpt.cfg.d_prime, s.samples);
  fmt::print("{:<6} {:<10} {:>10}\n", "node", "component", "dead_rate");
  for (Eigen::Index i = 0; i < s.dead_rate.rows(); ++i) {
    for (Eigen::Index t = 0; t < s.dead_rate.cols(); ++t) {
      fmt::print("{:<6} {:<10} {:>10.4f}\n", i, t, s.dead_rate(i, t));
    }
  }
  fmt::print("fraction_dead {:.4f}\n", s.fraction_dead);
  fmt::print("central components dead on every sample: {} of {}\n",
             s.central_components_dead_everywhere, ckpt.cfg.d_prime);
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct ReportArgs {
  std::vector<std::string> sweeps;  // label=path
  std::string out_dir;
};

int cmd_report(const ReportArgs& a) {
  if (a.sweeps.empty()) throw std::invalid_argument("report needs at least one --sweep");
  std::vector<std::pair<std::string, std::vector<RunMetrics>>> all;
  for (const std::string& spec : a.sweeps) {
    const auto eq = spec.find('=');
    std::string label;
    std::filesystem::path path;
    if (eq == std::string::npos) {
      path = spec;
      label = path.stem().string();
    } else {
      label = spec.substr(0, eq);
      path = spec.substr(eq + 1);
    }
    if (!std::filesystem::exists(path)) throw IoError("sweep CSV not found: " + path.string());
    all.emplace_back(label, read_sweep_csv(path));
  }
  const SweepSummary summary = summarize_sweep(all);
  const std::filesystem::path dir =
      a.out_dir.empty() ? default_out_dir() / "report" : std::filesystem::path(a.out_dir);
  write_boxplot_svg(dir / "boxplot.svg", summary);
  write_line_plot_svg(dir / "lines.svg", summary);
  fmt::print("{:<18} {:>6} {:>10} {:>10} {:>10} {:>10} {:>12}\n", "label", "runs", "med_TPR",
             "IQR_TPR", "med_ME", "IQR_ME", "mean_maxerr");
  for (const SweepEntry& e : summary.entries) {
    fmt::print("{:<18} {:>6} {:>10.4f} {:>10.4f} {:>10.5f} {:>10.5f} {:>12.5f}\n", e.label,
               e.runs.size() - static_cast<std::size_t>(e.failed), e.tpr.median, e.tpr.iqr(),
               e.me.median, e.me.iqr(), e.mean_max_error);
  }
  fmt::print("outputs in {}\n", dir.string());
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gatlab: one-layer graph attention experiments"};
  app.require_subcommand(1);

  GenDataArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "generate a dataset CSV");
  gen_cmd->add_option("--experiment", gen.experiment, "I or II")->capture_default_str();
  gen_cmd->add_option("--seed", gen.seed, "dataset seed")->capture_default_str();
  gen_cmd->add_option("--m", gen.m, "sample count")->capture_default_str();
  gen_cmd->add_option("--nodes", gen.nodes, "star graph node count")->capture_default_str();
  gen_cmd->add_option("--stream", gen.stream, "0 = train stream, 1 = test stream")
      ->capture_default_str();
  gen_cmd->add_option("--out", gen.out, "output CSV path");

  RunFlags train_flags;
  auto* train_cmd = app.add_subcommand("train", "train one variant and evaluate it");
  train_cmd->add_option("--variant", train_flags.values["variant"],
                        "gatv2 | gat-theta-n | gat-theta-r | gat-theta-n-plus | gat-theta-r-plus");
  train_flags.bound.emplace_back(train_cmd->get_option("--variant"), "variant");
  add_run_flags(train_cmd, train_flags, true);

  RunFlags sweep_flags;
  SweepArgs sweep_args;
  auto* sweep_cmd = app.add_subcommand("sweep", "train seeds 0..E-1 per variant");
  sweep_cmd->add_option("--variant", sweep_args.variants, "variant name, repeatable");
  sweep_cmd->add_option("--seeds", sweep_args.seeds, "number of seeds E")
      ->capture_default_str();
  sweep_cmd->add_option("--threads", sweep_args.threads, "worker threads (0 = all cores)")
      ->capture_default_str();
  add_run_flags(sweep_cmd, sweep_flags, false);

  GradCheckArgs gc;
  auto* gc_cmd = app.add_subcommand("grad-check", "analytic vs autodiff vs finite differences");
  gc_cmd->add_option("--seed", gc.seed, "first trial seed")->capture_default_str();
  gc_cmd->add_option("--trials", gc.trials, "number of random instances")
      ->capture_default_str();
  gc_cmd->add_option("--dprime", gc.dprimes, "latent dimensions to cycle through")
      ->capture_default_str();
  gc_cmd->add_option("--tol", gc.tolerance, "max relative error")->capture_default_str();
  gc_cmd->add_option("--step", gc.step, "central difference step")->capture_default_str();

  SignArgs signs;
  auto* sign_cmd = app.add_subcommand("analyze-signs", "sign-condition report for a checkpoint");
  sign_cmd->add_option("--checkpoint", signs.checkpoint, "checkpoint written by train")
      ->required();
  sign_cmd->add_option("--data", signs.data, "dataset CSV written by gen-data")->required();
  sign_cmd->add_option("--limit", signs.limit, "use only the first N samples (0 = all)")
      ->capture_default_str();

  ReportArgs report;
  auto* report_cmd = app.add_subcommand("report", "boxplots and line plots from sweep CSVs");
  report_cmd->add_option("--sweep", report.sweeps, "label=path of a sweep CSV, repeatable")
      ->required();
  report_cmd->add_option("--out-dir", report.out_dir, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitValidation;
  }

  try {
    if (*gen_cmd) return cmd_gen_data(gen);
    if (*train_cmd) return cmd_train(train_flags);
    if (*sweep_cmd) return cmd_sweep(sweep_flags, sweep_args);
    if (*gc_cmd) return cmd_grad_check(gc);
    if (*sign_cmd) return cmd_analyze_signs(signs);
    if (*report_cmd) return cmd_report(report);
  } catch (const IoError& e) {
    fmt::print(stderr, "I/O error: {}\n", e.what());
    return kExitIo;
  } catch (const std::filesystem::filesystem_error& e) {
    fmt::print(stderr, "I/O error: {}\n", e.what());
    return kExitIo;
  } catch (const ParseError& e) {
    fmt::print(stderr, "malformed input: {}\n", e.what());
    return kExitValidation;
  } catch (const std::invalid_argument& e) {
    fmt::print(stderr, "invalid configuration: {}\n", e.what());
    return kExitValidation;
  } catch (const std::logic_error& e) {
    fmt::print(stderr, "invalid configuration: {}\n", e.what());
    return kExitValidation;
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kExitValidation;
  }
  return kExitValidation;
}
