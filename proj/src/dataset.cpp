#include "gatlab/dataset.hpp"

#include "text_util.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>

namespace gatlab {

std::string to_string(ExperimentKind kind) {
  return kind == ExperimentKind::kI ? "I" : "II";
}

ExperimentKind parse_experiment(const std::string& name) {
  if (name == "I" || name == "1" || name == "i") return ExperimentKind::kI;
  if (name == "II" || name == "2" || name == "ii") return ExperimentKind::kII;
  throw std::invalid_argument("unknown experiment '" + name +
                              "' (expected I or II)");
}

ExperimentSpec ExperimentSpec::make(ExperimentKind kind, std::uint64_t seed,
                                    int m_train, int m_test) {
  ExperimentSpec s;
  s.kind = kind;
  s.range_lo = 0.0;
  s.range_hi = kind == ExperimentKind::kI ? 0.5 * std::numbers::pi
                                          : std::numbers::pi;
  s.latent_dim = kind == ExperimentKind::kI ? 1 : 2;
  s.m_train = m_train;
  s.m_test = m_test;
  s.seed = seed;
  return s;
}

void ExperimentSpec::validate() const {
  const ExperimentSpec ref = make(kind);
  if (range_lo != ref.range_lo || range_hi != ref.range_hi) {
    throw std::invalid_argument("value range does not match experiment " +
                                to_string(kind));
  }
  if (latent_dim != ref.latent_dim) {
    throw std::invalid_argument(
        "experiment " + to_string(kind) + " requires latent dimension " +
        std::to_string(ref.latent_dim) + ", got " + std::to_string(latent_dim));
  }
  if (m_train < 1 || m_test < 1) {
    throw std::invalid_argument("sample counts must be positive");
  }
  if (node_count < 2) throw std::invalid_argument("need at least 2 nodes");
}

double relevance(double x_i, double x_j) { return std::sin(x_j - x_i); }

bool label_sample(const Graph& graph, const Eigen::VectorXd& x, Sample& out) {
  const int n = graph.node_count();
  int best = -1;
  double best_rel = -std::numeric_limits<double>::infinity();
  double second_rel = -std::numeric_limits<double>::infinity();
  for (int j : graph.neighbors(0)) {
    if (j == 0) continue;
    const double r = relevance(x(0), x(j));
    if (r > best_rel) {
      second_rel = best_rel;
      best_rel = r;
      best = j;
    } else if (r > second_rel) {
      second_rel = r;
    }
  }
  if (best < 0) {
    throw ContractViolation("node 0 has no neighbors besides itself");
  }
  if (best_rel - second_rel < kRelevanceGap) return false;

  out.x = x;
  out.y = Eigen::VectorXd::Zero(n);
  out.y(0) = x(best) - x(0);
  out.alpha_true = Eigen::VectorXd::Zero(n);
  out.alpha_true(best) = 1.0;
  out.relevant = best;
  return true;
}

std::vector<Sample> generate(const ExperimentSpec& spec, const Graph& graph,
                             int count, std::uint64_t stream) {
  if (count < 0) throw std::invalid_argument("negative sample count");
  std::seed_seq seq{static_cast<std::uint32_t>(spec.seed),
                    static_cast<std::uint32_t>(spec.seed >> 32),
                    static_cast<std::uint32_t>(stream), 0x5a17u};
  std::mt19937_64 rng(seq);
  std::uniform_real_distribution<double> draw(spec.range_lo, spec.range_hi);

  const int n = graph.node_count();
  std::vector<Sample> out;
  out.reserve(static_cast<std::size_t>(count));
  Eigen::VectorXd x(n);
  for (int m = 0; m < count; ++m) {
    Sample s;
    int attempts = 0;
    while (true) {
      for (int k = 0; k < n; ++k) x(k) = draw(rng);
      Eigen::Index lowest = 0;
      x.minCoeff(&lowest);
      std::swap(x(0), x(lowest));
      if (label_sample(graph, x, s)) break;
      if (++attempts >= kMaxResamples) {
        throw GenerationError("could not draw a sample with a unique most "
                              "relevant neighbor after " +
                              std::to_string(kMaxResamples) + " attempts");
      }
    }
    out.push_back(std::move(s));
  }
  return out;
}

DatasetSplits generate_splits(const ExperimentSpec& spec, const Graph& graph) {
  spec.validate();
  if (graph.node_count() != spec.node_count) {
    throw std::invalid_argument("graph size does not match experiment spec");
  }
  return {generate(spec, graph, spec.m_train, 0),
          generate(spec, graph, spec.m_test, 1)};
}

void save_samples(const std::vector<Sample>& samples,
                  const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  if (samples.empty()) return;

  const auto n = samples.front().x.size();
  std::string line = "m";
  for (Eigen::Index k = 0; k < n; ++k) line += ",x_" + std::to_string(k);
  line += ",r_index,y_0\n";
  os << line;
  for (std::size_t m = 0; m < samples.size(); ++m) {
    const Sample& s = samples[m];
    if (s.x.size() != n) throw ShapeError("samples differ in node count");
    line = std::to_string(m);
    for (Eigen::Index k = 0; k < n; ++k) {
      line += ',';
      line += detail::format_real(s.x(k));
    }
    line += ',' + std::to_string(s.relevant) + ',' + detail::format_real(s.y(0));
    line += '\n';
    os << line;
  }
  if (!os) throw IoError("write failed for " + path.string());
}

std::vector<Sample> load_samples(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());

  std::vector<Sample> out;
  std::string line;
  std::size_t line_no = 0;
  std::size_t columns = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = detail::split(line, ',');
    if (columns == 0) {
      if (fields.size() < 4 || detail::trim(fields.front()) != "m") {
        throw ParseError("expected header starting with 'm'", line_no);
      }
      columns = fields.size();
      continue;
    }
    if (fields.size() != columns) {
      throw ParseError("expected " + std::to_string(columns) +
                           " columns, found " + std::to_string(fields.size()),
                       line_no);
    }
    const auto n = static_cast<Eigen::Index>(columns - 3);
    Eigen::VectorXd x(n);
    for (Eigen::Index k = 0; k < n; ++k) {
      const auto v = detail::parse_real(fields[static_cast<std::size_t>(k + 1)]);
      if (!v) throw ParseError("non-numeric feature x_" + std::to_string(k), line_no);
      x(k) = *v;
    }
    const auto r = detail::parse_int(fields[columns - 2]);
    if (!r || *r < 0 || *r >= n) {
      throw ParseError("invalid r_index", line_no);
    }
    const auto y0 = detail::parse_real(fields[columns - 1]);
    if (!y0) throw ParseError("non-numeric y_0", line_no);

    Sample s;
    s.x = std::move(x);
    s.y = Eigen::VectorXd::Zero(n);
    s.y(0) = *y0;
    s.alpha_true = Eigen::VectorXd::Zero(n);
    s.alpha_true(*r) = 1.0;
    s.relevant = static_cast<int>(*r);
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace gatlab
