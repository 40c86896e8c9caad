#include "gatlab/model.hpp"

#include "text_util.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <stdexcept>

namespace gatlab {

std::string to_string(Variant v) {
  switch (v) {
    case Variant::kGatV2: return "gatv2";
    case Variant::kThetaN: return "gat-theta-n";
    case Variant::kThetaR: return "gat-theta-r";
    case Variant::kThetaNPlus: return "gat-theta-n-plus";
    case Variant::kThetaRPlus: return "gat-theta-r-plus";
  }
  return "unknown";
}

Variant parse_variant(std::string_view name) {
  for (Variant v : kAllVariants) {
    if (to_string(v) == name) return v;
  }
  throw std::invalid_argument(
      "unknown variant '" + std::string(name) +
      "' (expected gatv2, gat-theta-n, gat-theta-r, gat-theta-n-plus or "
      "gat-theta-r-plus)");
}

std::string to_string(Activation a) {
  return a == Activation::kSoftplus ? "softplus" : "leaky_relu";
}

Activation parse_activation(std::string_view name) {
  if (name == "leaky_relu") return Activation::kLeakyRelu;
  if (name == "softplus") return Activation::kSoftplus;
  throw std::invalid_argument("unknown activation '" + std::string(name) + "'");
}

void VariantConfig::validate() const {
  if (d < 1 || d_prime < 1) {
    throw std::invalid_argument("dimensions must be positive");
  }
  if (!(leaky_slope >= 0.0 && leaky_slope < 1.0)) {
    throw std::invalid_argument("leaky slope must lie in [0, 1)");
  }
  if (separate_neighbor_transform && !uses_theta_r_update()) {
    throw std::invalid_argument(
        "separate_neighbor_transform applies to Theta_R variants only");
  }
}

ModelParams zero_params(const VariantConfig& cfg) {
  cfg.validate();
  const int dp = cfg.d_prime;
  const int in = cfg.d + 1;
  ModelParams p;
  p.a = Tensor::Zero(dp, 1);
  p.theta_l = Tensor::Zero(dp, in);
  p.theta_r = Tensor::Zero(dp, in);
  if (cfg.uses_theta_n()) p.theta_n = Tensor::Zero(dp, in);
  if (cfg.separate_neighbor_transform) p.theta_j = Tensor::Zero(dp, in);
  p.b = Tensor::Zero(dp, 1);
  if (cfg.has_head()) {
    p.phi_w = Tensor::Zero(cfg.d, dp);
    p.phi_b = Tensor::Zero(cfg.d, 1);
  }
  return p;
}

ModelParams init_params(const VariantConfig& cfg, std::uint64_t seed) {
  ModelParams p = zero_params(cfg);
  std::seed_seq seq{static_cast<std::uint32_t>(seed),
                    static_cast<std::uint32_t>(seed >> 32), 0x1217u};
  std::mt19937_64 rng(seq);
  p.for_each([&rng](std::string_view name, Tensor& m) {
    if (name == "b" || name == "phi_b") return;
    // Theta matrices carry their bias in column 0; like a framework Linear
    // layer, the bias starts at zero and only the weight block is drawn.
    const bool augmented = name.starts_with("theta");
    const Eigen::Index first = augmented ? 1 : 0;
    const double fan = static_cast<double>(m.rows() + m.cols() - first);
    std::uniform_real_distribution<double> draw(-std::sqrt(6.0 / fan),
                                                std::sqrt(6.0 / fan));
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = first; c < m.cols(); ++c) m(r, c) = draw(rng);
    }
  });
  return p;
}

ModelParams subtraction_solution(double sharpness) {
  ModelParams p = zero_params(VariantConfig::make(Variant::kThetaN, 1));
  p.a(0, 0) = sharpness;
  p.theta_l << 0.0, 1.0;
  p.theta_n << 0.0, -1.0;
  return p;
}

std::vector<int> attention_domain(const Graph& graph, int i,
                                  const VariantConfig& cfg) {
  std::vector<int> nodes = graph.neighbors(i);
  if (cfg.excludes_query()) {
    std::erase(nodes, i);
    if (nodes.empty()) {
      throw ContractViolation("node " + std::to_string(i) +
                              " has no neighbors besides itself");
    }
  } else if (nodes.empty()) {
    throw ContractViolation("node " + std::to_string(i) + " has no neighbors");
  }
  return nodes;
}

std::vector<ad::Var> ParamVars::leaves() const {
  std::vector<ad::Var> out;
  for (ad::Var v : {a, theta_l, theta_r, theta_n, theta_j, b, phi_w, phi_b}) {
    if (v.valid()) out.push_back(v);
  }
  return out;
}

ParamVars bind_params(ad::Tape& tape, const ModelParams& p,
                      const VariantConfig& cfg, bool detach_update_path) {
  ParamVars v;
  v.a = tape.variable(p.a);
  v.theta_l = tape.variable(p.theta_l);
  v.theta_r = tape.variable(p.theta_r);
  if (cfg.uses_theta_n()) v.theta_n = tape.variable(p.theta_n);
  if (cfg.separate_neighbor_transform) v.theta_j = tape.variable(p.theta_j);
  v.b = tape.variable(p.b);
  if (cfg.has_head()) {
    v.phi_w = tape.variable(p.phi_w);
    v.phi_b = tape.variable(p.phi_b);
  }
  v.theta_r_update = detach_update_path && cfg.uses_theta_r_update()
                         ? tape.constant(p.theta_r)
                         : v.theta_r;
  return v;
}

TapeNodeOutput build_node(ad::Tape& tape, const ParamVars& vars,
                          const VariantConfig& cfg, const Graph& graph,
                          const Eigen::MatrixXd& features, int i) {
  TapeNodeOutput out;
  out.nodes = attention_domain(graph, i, cfg);

  const ad::Var h_i = tape.constant(augment<double>(features, i));
  const ad::Var query = ad::matvec(vars.theta_r, h_i);

  std::vector<ad::Var> scores;
  std::vector<ad::Var> messages;
  scores.reserve(out.nodes.size());
  messages.reserve(out.nodes.size());
  for (int j : out.nodes) {
    const ad::Var h_j = j == i ? h_i : tape.constant(augment<double>(features, j));
    const ad::Var key = ad::matvec(vars.theta_l, h_j);
    const ad::Var pre = query + key;
    const ad::Var act = cfg.activation() == Activation::kSoftplus
                            ? ad::softplus(pre)
                            : ad::leaky_relu(pre, cfg.leaky_slope);
    scores.push_back(ad::dot(vars.a, act));
    messages.push_back(cfg.separate_neighbor_transform
                           ? ad::matvec(vars.theta_j, h_j)
                           : key);
  }
  out.attention = ad::softmax(tape.stack(scores));

  ad::Var acc = vars.b;
  for (std::size_t k = 0; k < messages.size(); ++k) {
    acc = acc + ad::scale(ad::index(out.attention, static_cast<int>(k)),
                          messages[k]);
  }
  if (cfg.uses_theta_n()) acc = acc + ad::matvec(vars.theta_n, h_i);
  if (cfg.uses_theta_r_update()) acc = acc + ad::matvec(vars.theta_r_update, h_i);
  out.updated = acc;

  out.prediction =
      cfg.has_head()
          ? ad::matvec(vars.phi_w, ad::leaky_relu(acc, cfg.leaky_slope)) + vars.phi_b
          : acc;
  return out;
}

ModelParams collect_gradients(const ad::Tape& tape, const ParamVars& vars,
                              const ModelParams& shape) {
  ModelParams g = shape;
  const auto take = [&tape](Tensor& dst, ad::Var v) {
    if (v.valid()) dst = tape.grad(v);
  };
  take(g.a, vars.a);
  take(g.theta_l, vars.theta_l);
  take(g.theta_r, vars.theta_r);
  take(g.theta_n, vars.theta_n);
  take(g.theta_j, vars.theta_j);
  take(g.b, vars.b);
  take(g.phi_w, vars.phi_w);
  take(g.phi_b, vars.phi_b);
  return g;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os << "# gatlab-checkpoint variant=" << to_string(ckpt.cfg.variant)
     << " d=" << ckpt.cfg.d << " dprime=" << ckpt.cfg.d_prime
     << " slope=" << detail::format_real(ckpt.cfg.leaky_slope)
     << " seed=" << ckpt.seed << " separate_neighbor_transform="
     << (ckpt.cfg.separate_neighbor_transform ? 1 : 0);
  if (ckpt.cfg.activation_override) {
    os << " activation=" << to_string(*ckpt.cfg.activation_override);
  }
  os << '\n';
  ckpt.params.for_each([&os](std::string_view name, const Tensor& m) {
    os << name << '=';
    bool first = true;
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) {
        if (!first) os << ',';
        os << detail::format_real(m(r, c));
        first = false;
      }
    }
    os << '\n';
  });
  if (!os) throw IoError("write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint " + path.string());

  std::string line;
  if (!std::getline(is, line)) throw ParseError("empty checkpoint", 1);
  const std::string_view prefix = "# gatlab-checkpoint";
  if (line.rfind(prefix, 0) != 0) {
    throw ParseError("missing checkpoint header", 1);
  }
  std::map<std::string, std::string, std::less<>> header;
  for (auto tok : detail::split(std::string_view(line).substr(prefix.size()), ' ')) {
    if (tok.empty()) continue;
    const auto eq = tok.find('=');
    if (eq == std::string_view::npos) throw ParseError("bad header token", 1);
    header.emplace(std::string(tok.substr(0, eq)), std::string(tok.substr(eq + 1)));
  }
  const auto field = [&header](const char* key) -> const std::string& {
    auto it = header.find(key);
    if (it == header.end()) {
      throw ParseError(std::string("header lacks '") + key + "'", 1);
    }
    return it->second;
  };

  Checkpoint ckpt;
  try {
    ckpt.cfg.variant = parse_variant(field("variant"));
  } catch (const std::invalid_argument& e) {
    throw ParseError(e.what(), 1);
  }
  const auto d = detail::parse_int(field("d"));
  const auto dp = detail::parse_int(field("dprime"));
  const auto slope = detail::parse_real(field("slope"));
  const auto seed = detail::parse_int(field("seed"));
  if (!d || !dp || !slope || !seed) throw ParseError("non-numeric header field", 1);
  ckpt.cfg.d = static_cast<int>(*d);
  ckpt.cfg.d_prime = static_cast<int>(*dp);
  ckpt.cfg.leaky_slope = *slope;
  ckpt.seed = static_cast<std::uint64_t>(*seed);
  if (auto it = header.find("separate_neighbor_transform"); it != header.end()) {
    ckpt.cfg.separate_neighbor_transform = it->second == "1";
  }
  if (auto it = header.find("activation"); it != header.end()) {
    try {
      ckpt.cfg.activation_override = parse_activation(it->second);
    } catch (const std::invalid_argument& e) {
      throw ParseError(e.what(), 1);
    }
  }
  try {
    ckpt.params = zero_params(ckpt.cfg);
  } catch (const std::invalid_argument& e) {
    throw ParseError(e.what(), 1);
  }

  std::map<std::string, std::vector<double>, std::less<>> values;
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError("expected name=values", line_no);
    std::vector<double> vals;
    for (auto tok : detail::split(std::string_view(line).substr(eq + 1), ',')) {
      const auto v = detail::parse_real(tok);
      if (!v) throw ParseError("non-numeric value", line_no);
      vals.push_back(*v);
    }
    values.emplace(line.substr(0, eq), std::move(vals));
  }

  ckpt.params.for_each([&values](std::string_view name, Tensor& m) {
    auto it = values.find(name);
    if (it == values.end()) {
      throw ParseError("checkpoint lacks tensor '" + std::string(name) + "'", 0);
    }
    if (static_cast<Eigen::Index>(it->second.size()) != m.size()) {
      throw ParseError("tensor '" + std::string(name) + "' has " +
                           std::to_string(it->second.size()) + " values, expected " +
                           std::to_string(m.size()),
                       0);
    }
    std::size_t k = 0;
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = it->second[k++];
    }
  });
  return ckpt;
}

}  // namespace gatlab
