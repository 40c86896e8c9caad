#include "gatlab/dataset.hpp"
#include "gatlab/model.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>

using namespace gatlab;

namespace {

Eigen::MatrixXd column(std::initializer_list<double> v) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(v.size()), 1);
  Eigen::Index k = 0;
  for (double d : v) m(k++, 0) = d;
  return m;
}

ModelParams random_params(const VariantConfig& cfg, std::uint64_t seed) {
  ModelParams p = zero_params(cfg);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.5, 1.5);
  p.for_each([&](std::string_view, Eigen::MatrixXd& m) {
    for (Eigen::Index k = 0; k < m.size(); ++k) m(k) = u(rng);
  });
  return p;
}

// Straight transcription of the layer equations with explicit loops, kept
// independent of the library's evaluation path.
Eigen::VectorXd reference_update(const ModelParams& p, const VariantConfig& cfg,
                                 const Graph& g, const Eigen::MatrixXd& x, int i) {
  const int dp = cfg.d_prime;
  const auto act = [&](double v) {
    return cfg.activation() == Activation::kSoftplus ? std::log1p(std::exp(v))
                                                      : (v >= 0 ? v : cfg.leaky_slope * v);
  };
  const auto lin = [&](const Eigen::MatrixXd& w, int node, int t) {
    return w(t, 0) + w(t, 1) * x(node, 0);
  };
  std::vector<int> domain;
  for (int j : g.neighbors(i)) {
    if (cfg.variant != Variant::kGatV2 && j == i) continue;
    domain.push_back(j);
  }
  std::vector<double> e;
  for (int j : domain) {
    double s = 0;
    for (int t = 0; t < dp; ++t) s += p.a(t, 0) * act(lin(p.theta_r, i, t) + lin(p.theta_l, j, t));
    e.push_back(s);
  }
  const double mx = *std::max_element(e.begin(), e.end());
  double z = 0;
  for (double& v : e) z += (v = std::exp(v - mx));
  Eigen::VectorXd h(dp);
  for (int t = 0; t < dp; ++t) {
    double acc = p.b(t, 0);
    for (std::size_t k = 0; k < domain.size(); ++k) acc += e[k] / z * lin(p.theta_l, domain[k], t);
    if (cfg.uses_theta_n()) acc += lin(p.theta_n, i, t);
    if (cfg.uses_theta_r_update()) acc += lin(p.theta_r, i, t);
    h(t) = acc;
  }
  return h;
}

}  // namespace

TEST(Score, Examples) {
  const VariantConfig cfg = VariantConfig::make(Variant::kGatV2, 1);
  ModelParams p = zero_params(cfg);
  p.a << 1.0;
  p.theta_r << 0.0, 0.0;
  p.theta_l << 0.0, 1.0;
  EXPECT_DOUBLE_EQ(score<double>(p, Eigen::VectorXd::Constant(1, 0.3),
                                 Eigen::VectorXd::Constant(1, 0.5), cfg),
                   0.5);
  EXPECT_DOUBLE_EQ(score<double>(p, Eigen::VectorXd::Constant(1, 0.3),
                                 Eigen::VectorXd::Constant(1, -0.5), cfg),
                   -0.1);

  ModelParams q = random_params(VariantConfig::make(Variant::kGatV2, 3), 1);
  q.a.setZero();
  EXPECT_EQ(score<double>(q, Eigen::VectorXd::Constant(1, 0.7),
                          Eigen::VectorXd::Constant(1, -2.0),
                          VariantConfig::make(Variant::kGatV2, 3)),
            0.0);
}

TEST(Score, SoftplusVariantsUseSoftplus) {
  const VariantConfig cfg = VariantConfig::make(Variant::kThetaNPlus, 1);
  ModelParams p = zero_params(cfg);
  p.a << 1.0;
  p.theta_l << 0.0, 1.0;
  EXPECT_NEAR(score<double>(p, Eigen::VectorXd::Zero(1), Eigen::VectorXd::Zero(1), cfg),
              std::log(2.0), 1e-15);
  EXPECT_EQ(VariantConfig::make(Variant::kThetaRPlus, 1).activation(), Activation::kSoftplus);
  EXPECT_EQ(VariantConfig::make(Variant::kThetaN, 1).activation(), Activation::kLeakyRelu);
  VariantConfig swapped = VariantConfig::make(Variant::kGatV2, 1);
  swapped.activation_override = Activation::kSoftplus;
  EXPECT_EQ(swapped.activation(), Activation::kSoftplus);
}

TEST(Attention, Examples) {
  const VariantConfig cfg = VariantConfig::make(Variant::kGatV2, 1);
  ModelParams p = random_params(cfg, 3);
  // Equal features on both neighbors give equal scores.
  const Graph two(3, {{0, 1}, {0, 2}});
  const auto row = attention<double>(p, 0, two, column({0.2, 0.8, 0.8}), cfg);
  EXPECT_DOUBLE_EQ(row.alpha(0), 0.5);
  EXPECT_DOUBLE_EQ(row.alpha(1), 0.5);

  const auto single = attention<double>(p, 1, star_graph(3), column({0.2, 0.8, 0.1}), cfg);
  ASSERT_EQ(single.nodes, std::vector<int>{0});
  EXPECT_DOUBLE_EQ(single.alpha(0), 1.0);

  Eigen::VectorXd s(2);
  s << std::log(2.0), 0.0;
  const Eigen::VectorXd a = softmax<double>(s);
  EXPECT_NEAR(a(0), 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(a(1), 1.0 / 3.0, 1e-15);
}

TEST(Attention, DomainPerVariant) {
  const Graph g = star_graph(3);
  EXPECT_EQ(attention_domain(g, 0, VariantConfig::make(Variant::kGatV2, 1)),
            (std::vector<int>{0, 1, 2}));
  EXPECT_EQ(attention_domain(g, 0, VariantConfig::make(Variant::kThetaN, 1)),
            (std::vector<int>{1, 2}));
  EXPECT_EQ(attention_domain(g, 1, VariantConfig::make(Variant::kThetaR, 1)),
            (std::vector<int>{0}));
  const Graph lonely(2, {{0, 0}, {1, 0}});
  EXPECT_THROW(attention_domain(lonely, 0, VariantConfig::make(Variant::kThetaN, 1)),
               ContractViolation);
}

TEST(Attention, RowsSumToOne) {
  for (Variant v : kAllVariants) {
    const VariantConfig cfg = VariantConfig::make(v, 2);
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const ModelParams p = random_params(cfg, seed);
      const auto fwd = forward<double>(p, cfg, star_graph(4),
                                       column({0.1, 1.2, -0.4, 2.0}));
      for (const auto& row : fwd.attention) {
        EXPECT_NEAR(row.alpha.sum(), 1.0, 1e-12);
        EXPECT_TRUE((row.alpha.array() > 0).all());
      }
    }
  }
}

TEST(Update, GatV2SingleNeighborAndIdenticalFeatures) {
  const VariantConfig cfg = VariantConfig::make(Variant::kGatV2, 2);
  ModelParams p = random_params(cfg, 4);
  p.b.setZero();
  const Graph one(2, {{0, 1}});
  const Eigen::MatrixXd x = column({0.3, -0.9});
  Eigen::VectorXd h1(2);
  h1 << 1.0, -0.9;
  EXPECT_TRUE(update_gatv2<double>(p, 0, one, x, cfg).isApprox(p.theta_l * h1, 1e-15));

  p = random_params(cfg, 5);
  const Eigen::MatrixXd same = column({0.6, 0.6, 0.6});
  Eigen::VectorXd h(2);
  h << 1.0, 0.6;
  const Eigen::VectorXd expected = p.b.col(0) + p.theta_l * h;
  EXPECT_LE((update_gatv2<double>(p, 0, star_graph(3), same, cfg) - expected).norm(), 1e-14);
}

TEST(Update, MatchesIndependentEvaluation) {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (Variant v : kAllVariants) {
    for (int dp : {1, 2, 3}) {
      const VariantConfig cfg = VariantConfig::make(v, dp);
      for (std::uint64_t seed = 0; seed < 25; ++seed) {
        const ModelParams p = random_params(cfg, seed * 7 + static_cast<std::uint64_t>(dp));
        const Graph g = star_graph(3);
        const Eigen::MatrixXd x = column({u(rng), u(rng), u(rng)});
        for (int i = 0; i < 3; ++i) {
          const Eigen::VectorXd got = update<double>(p, i, g, x, cfg);
          const Eigen::VectorXd want = reference_update(p, cfg, g, x, i);
          EXPECT_LE((got - want).cwiseAbs().maxCoeff(), 1e-12) << to_string(v);
        }
      }
    }
  }
}

TEST(Update, ThetaNComputesSubtraction) {
  const VariantConfig cfg = VariantConfig::make(Variant::kThetaN, 1);
  ModelParams p = zero_params(cfg);
  p.a << 0.7;
  p.theta_n << 0.0, -1.0;
  p.theta_l << 0.0, 1.0;
  const Graph g(2, {{0, 0}, {0, 1}, {1, 0}});
  for (double xi : {0.0, 0.4, 1.1}) {
    for (double xj : {0.2, 1.5, 3.0}) {
      EXPECT_NEAR(update_theta_n<double>(p, 0, g, column({xi, xj}), cfg)(0), xj - xi, 1e-15);
    }
  }
}

TEST(Update, ThetaNWithoutQueryTermIsQueryIndependent) {
  const VariantConfig cfg = VariantConfig::make(Variant::kThetaN, 2);
  ModelParams p = random_params(cfg, 8);
  p.theta_n.setZero();
  p.theta_r.setZero();
  const Graph g = star_graph(3);
  const Eigen::VectorXd h1 = update<double>(p, 0, g, column({0.1, 0.5, 0.9}), cfg);
  const Eigen::VectorXd h2 = update<double>(p, 0, g, column({-3.0, 0.5, 0.9}), cfg);
  EXPECT_LE((h1 - h2).norm(), 1e-15);
}

TEST(Update, ThetaRMatchesThetaNWithSameMatrix) {
  const VariantConfig n_cfg = VariantConfig::make(Variant::kThetaN, 1);
  const VariantConfig r_cfg = VariantConfig::make(Variant::kThetaR, 1);
  ModelParams pn = zero_params(n_cfg);
  pn.a << 2.0;
  pn.theta_n << 0.0, -1.0;
  pn.theta_r << 0.0, -1.0;
  pn.theta_l << 0.0, 1.0;
  ModelParams pr = zero_params(r_cfg);
  pr.a = pn.a;
  pr.theta_r = pn.theta_r;
  pr.theta_l = pn.theta_l;
  const Graph g = star_graph(3);
  const Eigen::MatrixXd x = column({0.2, 0.7, 1.3});
  EXPECT_DOUBLE_EQ(update<double>(pn, 0, g, x, n_cfg)(0), update<double>(pr, 0, g, x, r_cfg)(0));
}

TEST(Update, ThetaRQueryTermCarriesBiasColumn) {
  const VariantConfig cfg = VariantConfig::make(Variant::kThetaR, 1);
  ModelParams p = zero_params(cfg);
  p.theta_r << 0.25, 3.0;
  EXPECT_DOUBLE_EQ(update<double>(p, 0, star_graph(3), column({0.0, 1.0, 2.0}), cfg)(0), 0.25);
}

TEST(Update, SeparateNeighborTransform) {
  VariantConfig cfg = VariantConfig::make(Variant::kThetaR, 1);
  cfg.separate_neighbor_transform = true;
  ModelParams p = random_params(cfg, 12);
  ASSERT_EQ(p.theta_j.size(), 2);
  const Graph g = star_graph(3);
  const Eigen::MatrixXd x = column({0.2, 0.7, 1.3});
  const Eigen::VectorXd before = update<double>(p, 0, g, x, cfg);
  p.theta_j(0, 1) += 1.0;
  EXPECT_NE(update<double>(p, 0, g, x, cfg)(0), before(0));
  EXPECT_THROW(
      [] {
        VariantConfig bad = VariantConfig::make(Variant::kThetaN, 1);
        bad.separate_neighbor_transform = true;
        bad.validate();
      }(),
      std::invalid_argument);
}

TEST(Head, Examples) {
  const VariantConfig cfg = VariantConfig::make(Variant::kGatV2, 2);
  ModelParams p = zero_params(cfg);
  p.phi_w << 1.0, 0.0;
  Eigen::VectorXd h(2);
  h << 0.4, -0.5;
  EXPECT_DOUBLE_EQ(head<double>(p, h, cfg)(0), 0.4);

  p.phi_w.setZero();
  p.phi_b << -0.3;
  EXPECT_DOUBLE_EQ(head<double>(p, h, cfg)(0), -0.3);

  const VariantConfig one = VariantConfig::make(Variant::kGatV2, 1);
  const ModelParams q = zero_params(one);
  EXPECT_EQ(q.phi_w.size(), 0);
  EXPECT_EQ(head<double>(q, Eigen::VectorXd::Constant(1, 0.77), one)(0), 0.77);
}

TEST(Forward, ZeroParamsPredictHeadBias) {
  for (Variant v : kAllVariants) {
    for (int dp : {1, 2}) {
      const VariantConfig cfg = VariantConfig::make(v, dp);
      ModelParams p = zero_params(cfg);
      if (cfg.has_head()) p.phi_b << 0.125;
      const auto fwd = forward<double>(p, cfg, star_graph(3), column({0.3, 1.0, 0.2}));
      for (int i = 0; i < 3; ++i) {
        EXPECT_EQ(fwd.predictions(i, 0), cfg.has_head() ? 0.125 : 0.0);
      }
    }
  }
}

TEST(Forward, NeighborPermutationInvariance) {
  for (Variant v : kAllVariants) {
    const VariantConfig cfg = VariantConfig::make(v, 2);
    const ModelParams p = random_params(cfg, 21);
    const Graph g = star_graph(4);
    const Eigen::MatrixXd x = column({0.1, 0.9, 0.4, 1.3});
    // Relabel peripheral nodes 1 -> 3 -> 2 -> 1; the star is unchanged.
    const Eigen::MatrixXd y = column({0.1, 0.4, 1.3, 0.9});
    const Eigen::VectorXd hx = update<double>(p, 0, g, x, cfg);
    const Eigen::VectorXd hy = update<double>(p, 0, g, y, cfg);
    EXPECT_LE((hx - hy).norm(), 1e-14) << to_string(v);
  }
}

TEST(Forward, TapeMatchesDenseEvaluation) {
  for (Variant v : kAllVariants) {
    for (int dp : {1, 2}) {
      const VariantConfig cfg = VariantConfig::make(v, dp);
      const ModelParams p = random_params(cfg, 31 + static_cast<std::uint64_t>(dp));
      const Graph g = star_graph(3);
      const Eigen::MatrixXd x = column({0.3, 1.1, 0.6});
      ad::Tape tape;
      const ParamVars vars = bind_params(tape, p, cfg);
      for (int i = 0; i < 3; ++i) {
        const TapeNodeOutput out = build_node(tape, vars, cfg, g, x, i);
        const auto dense = predict_node<double>(p, cfg, g, x, i);
        EXPECT_LE((Eigen::VectorXd(tape.value(out.prediction)) - dense.prediction).norm(), 1e-14);
        EXPECT_LE((Eigen::VectorXd(tape.value(out.attention)) - dense.attention.alpha).norm(), 1e-14);
        EXPECT_EQ(out.nodes, dense.attention.nodes);
      }
    }
  }
}

TEST(Params, AllocationFollowsVariant) {
  EXPECT_EQ(zero_params(VariantConfig::make(Variant::kGatV2, 1)).theta_n.size(), 0);
  EXPECT_EQ(zero_params(VariantConfig::make(Variant::kThetaN, 2)).theta_n.rows(), 2);
  EXPECT_EQ(zero_params(VariantConfig::make(Variant::kThetaN, 2)).phi_w.cols(), 2);
  EXPECT_EQ(zero_params(VariantConfig::make(Variant::kThetaR, 1)).phi_w.size(), 0);
  EXPECT_EQ(zero_params(VariantConfig::make(Variant::kGatV2, 1)).parameter_count(), 6u);
}

TEST(Params, InitIsSeededAndBiasFree) {
  const VariantConfig cfg = VariantConfig::make(Variant::kThetaNPlus, 2);
  const ModelParams a = init_params(cfg, 17);
  const ModelParams b = init_params(cfg, 17);
  const ModelParams c = init_params(cfg, 18);
  EXPECT_TRUE(a.theta_l == b.theta_l && a.a == b.a && a.phi_w == b.phi_w);
  EXPECT_FALSE(a.theta_l == c.theta_l);
  EXPECT_TRUE(a.b.isZero());
  EXPECT_TRUE(a.phi_b.isZero());
  EXPECT_TRUE(a.theta_l.col(0).isZero());
  EXPECT_TRUE(a.theta_r.col(0).isZero());
  EXPECT_TRUE(a.theta_n.col(0).isZero());
  const double bound = std::sqrt(6.0 / 3.0);
  EXPECT_LE(a.theta_l.cwiseAbs().maxCoeff(), bound);
  EXPECT_GT(a.theta_l.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Params, ParseVariantNames) {
  for (Variant v : kAllVariants) EXPECT_EQ(parse_variant(to_string(v)), v);
  EXPECT_EQ(to_string(Variant::kThetaNPlus), "gat-theta-n-plus");
  EXPECT_THROW(parse_variant("gat"), std::invalid_argument);
}

TEST(Checkpoint, RoundTripIsBitwise) {
  const auto dir = std::filesystem::temp_directory_path() / "gatlab_test_model";
  std::filesystem::create_directories(dir);
  VariantConfig cfg = VariantConfig::make(Variant::kThetaR, 2);
  cfg.separate_neighbor_transform = true;
  cfg.activation_override = Activation::kSoftplus;
  cfg.leaky_slope = 0.15;
  const Checkpoint ckpt{cfg, random_params(cfg, 77), 123};
  save_checkpoint(ckpt, dir / "ckpt.txt");
  const Checkpoint back = load_checkpoint(dir / "ckpt.txt");
  EXPECT_EQ(back.cfg.variant, cfg.variant);
  EXPECT_EQ(back.cfg.d_prime, 2);
  EXPECT_EQ(back.cfg.leaky_slope, 0.15);
  EXPECT_TRUE(back.cfg.separate_neighbor_transform);
  EXPECT_EQ(back.cfg.activation_override, Activation::kSoftplus);
  EXPECT_EQ(back.seed, 123u);
  std::vector<Eigen::MatrixXd> want, got;
  ckpt.params.for_each([&](std::string_view, const Eigen::MatrixXd& m) { want.push_back(m); });
  back.params.for_each([&](std::string_view, const Eigen::MatrixXd& m) { got.push_back(m); });
  ASSERT_EQ(want.size(), got.size());
  for (std::size_t k = 0; k < want.size(); ++k) EXPECT_TRUE(want[k] == got[k]);

  EXPECT_THROW(load_checkpoint(dir / "nope.txt"), IoError);
}

TEST(Representability, ThetaNSolvesExperimentOneGatV2CannotOnGrid) {
  const ExperimentSpec spec = ExperimentSpec::make(ExperimentKind::kI, 3, 200, 1);
  const Graph g = star_graph(3);
  const auto samples = generate(spec, g, 200, 0);

  const VariantConfig n_cfg = VariantConfig::make(Variant::kThetaN, 1);
  const ModelParams exact = subtraction_solution(1e6);
  double worst = 0.0;
  for (const Sample& s : samples) {
    const Eigen::MatrixXd x = s.x;
    worst = std::max(worst, std::abs(predict_node<double>(exact, n_cfg, g, x, 0).prediction(0) - s.y(0)));
  }
  EXPECT_LE(worst, 1e-9);

  // Coarse grid over GATv2 (d' = 1); the output bias is set to its MAE-optimal
  // value (the median residual) for every grid point.
  const VariantConfig cfg = VariantConfig::make(Variant::kGatV2, 1);
  const std::vector<double> grid = {-4.0, -1.0, 0.0, 1.0, 4.0};
  double floor = 1e9;
  ModelParams p = zero_params(cfg);
  std::vector<double> residual(samples.size());
  for (double a : grid)
    for (double r0 : grid)
      for (double r1 : grid)
        for (double l0 : grid)
          for (double l1 : grid) {
            p.a << a;
            p.theta_r << r0, r1;
            p.theta_l << l0, l1;
            for (std::size_t m = 0; m < samples.size(); ++m) {
              const Eigen::MatrixXd x = samples[m].x;
              residual[m] = samples[m].y(0) - update_gatv2<double>(p, 0, g, x, cfg)(0);
            }
            std::vector<double> sorted = residual;
            std::nth_element(sorted.begin(), sorted.begin() + sorted.size() / 2, sorted.end());
            const double b = sorted[sorted.size() / 2];
            double mae = 0;
            for (double e : residual) mae += std::abs(e - b);
            floor = std::min(floor, mae / static_cast<double>(residual.size()));
          }
  // Documented floor: no grid point comes within 0.1 of the target, while the
  // subtraction solution above is exact.
  EXPECT_GE(floor, 0.1);
}
