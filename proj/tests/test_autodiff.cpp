#include "gatlab/autodiff.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <numbers>
#include <random>

namespace ad = gatlab::ad;
using gatlab::Tensor;

namespace {

Tensor col(std::initializer_list<double> v) {
  Tensor t(static_cast<Eigen::Index>(v.size()), 1);
  Eigen::Index k = 0;
  for (double x : v) t(k++) = x;
  return t;
}

// Random entries bounded away from zero so abs/leaky kinks are never hit.
Tensor random_tensor(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols) {
  std::uniform_real_distribution<double> mag(0.1, 1.5);
  std::bernoulli_distribution neg(0.5);
  Tensor t(rows, cols);
  for (Eigen::Index k = 0; k < t.size(); ++k) t(k) = neg(rng) ? -mag(rng) : mag(rng);
  return t;
}

using Builder = std::function<ad::Var(ad::Tape&, const std::vector<ad::Var>&)>;

double evaluate(const Builder& build, const std::vector<Tensor>& inputs) {
  ad::Tape tape;
  std::vector<ad::Var> vars;
  for (const Tensor& t : inputs) vars.push_back(tape.variable(t));
  return tape.scalar(build(tape, vars));
}

// Worst relative error of tape gradients against central differences.
double fd_mismatch(const Builder& build, std::vector<Tensor> inputs, double step = 1e-5) {
  ad::Tape tape;
  std::vector<ad::Var> vars;
  for (const Tensor& t : inputs) vars.push_back(tape.variable(t));
  tape.backward(build(tape, vars));
  const std::vector<Tensor> grads = ad::gradients(tape, vars);

  double worst = 0.0;
  for (std::size_t v = 0; v < inputs.size(); ++v) {
    for (Eigen::Index k = 0; k < inputs[v].size(); ++k) {
      const double keep = inputs[v](k);
      inputs[v](k) = keep + step;
      const double up = evaluate(build, inputs);
      inputs[v](k) = keep - step;
      const double down = evaluate(build, inputs);
      inputs[v](k) = keep;
      const double fd = (up - down) / (2 * step);
      const double g = grads[v](k);
      worst = std::max(worst, std::abs(fd - g) /
                                  std::max({std::abs(fd), std::abs(g), 1e-8}));
    }
  }
  return worst;
}

}  // namespace

TEST(Autodiff, ForwardExamples) {
  ad::Tape tape;
  const ad::Var m = tape.constant(Tensor{{0.0, 1.0}});
  const ad::Var v = tape.constant(col({1.0, 0.5}));
  EXPECT_DOUBLE_EQ(tape.scalar(ad::matvec(m, v)), 0.5);
  EXPECT_DOUBLE_EQ(tape.scalar(ad::leaky_relu(tape.constant(-1.0), 0.2)), -0.2);
  EXPECT_NEAR(tape.scalar(ad::softplus(tape.constant(0.0))), std::log(2.0), 1e-15);
}

TEST(Autodiff, ScalarDerivatives) {
  ad::Tape tape;
  ad::Var x = tape.variable(Tensor::Constant(1, 1, 0.0));
  tape.backward(ad::softplus(x));
  EXPECT_DOUBLE_EQ(tape.grad(x)(0), 0.5);

  tape.clear();
  x = tape.variable(Tensor::Constant(1, 1, -3.0));
  tape.backward(ad::leaky_relu(x, 0.2));
  EXPECT_DOUBLE_EQ(tape.grad(x)(0), 0.2);

  // Positive branch at exactly zero.
  tape.clear();
  x = tape.variable(Tensor::Constant(1, 1, 0.0));
  tape.backward(ad::leaky_relu(x, 0.2));
  EXPECT_DOUBLE_EQ(tape.grad(x)(0), 1.0);
}

TEST(Autodiff, SoftmaxExamples) {
  ad::Tape tape;
  const auto s1 = tape.value(ad::softmax(tape.constant(col({0.0, 0.0}))));
  EXPECT_DOUBLE_EQ(s1(0), 0.5);
  EXPECT_DOUBLE_EQ(s1(1), 0.5);
  for (double c : {-700.0, 0.0, 3.5, 800.0}) {
    EXPECT_DOUBLE_EQ(tape.value(ad::softmax(tape.constant(col({c}))))(0), 1.0);
  }
  const auto s3 = tape.value(ad::softmax(tape.constant(col({std::log(2.0), 0.0}))));
  EXPECT_NEAR(s3(0), 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(s3(1), 1.0 / 3.0, 1e-15);
}

TEST(Autodiff, SoftmaxIsPositiveAndNormalized) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-30.0, 30.0);
  ad::Tape tape;
  for (int trial = 0; trial < 200; ++trial) {
    Tensor s(1 + trial % 7, 1);
    for (Eigen::Index k = 0; k < s.size(); ++k) s(k) = u(rng);
    const auto y = tape.value(ad::softmax(tape.constant(s)));
    EXPECT_TRUE((y.array() > 0.0).all());
    EXPECT_NEAR(y.sum(), 1.0, 1e-12);
  }
}

TEST(Autodiff, SoftmaxWeightedSumMatchesFiniteDifferences) {
  std::mt19937_64 rng(5);
  const Builder f = [](ad::Tape&, const std::vector<ad::Var>& v) {
    return ad::dot(ad::softmax(v[0]), v[1]);
  };
  for (int trial = 0; trial < 100; ++trial) {
    EXPECT_LE(fd_mismatch(f, {random_tensor(rng, 2, 1), random_tensor(rng, 2, 1)}), 1e-6);
  }
}

TEST(Autodiff, EveryOpMatchesFiniteDifferences) {
  struct Case {
    const char* name;
    std::vector<std::pair<int, int>> shapes;
    Builder build;
  };
  // Each op is closed with a fixed random projection so every output entry
  // carries a distinct weight into the scalar root.
  const auto project = [](ad::Tape& t, ad::Var y) {
    const auto v = t.value(y);
    Tensor w(v.rows(), v.cols());
    for (Eigen::Index k = 0; k < w.size(); ++k) w(k) = 0.3 + 0.17 * static_cast<double>(k);
    return ad::sum(ad::scale(1.0, y)) + ad::dot(t.constant(w), y);
  };
  const std::vector<Case> cases = {
      {"add", {{3, 1}, {3, 1}}, [&](ad::Tape& t, const auto& v) { return project(t, v[0] + v[1]); }},
      {"sub", {{3, 1}, {3, 1}}, [&](ad::Tape& t, const auto& v) { return project(t, v[0] - v[1]); }},
      {"matvec", {{2, 3}, {3, 1}}, [&](ad::Tape& t, const auto& v) { return project(t, ad::matvec(v[0], v[1])); }},
      {"scale", {{1, 1}, {3, 1}}, [&](ad::Tape& t, const auto& v) { return project(t, ad::scale(v[0], v[1])); }},
      {"scale_const", {{3, 1}}, [&](ad::Tape& t, const auto& v) { return project(t, ad::scale(-1.7, v[0])); }},
      {"dot", {{4, 1}, {4, 1}}, [&](ad::Tape&, const auto& v) { return ad::dot(v[0], v[1]); }},
      {"leaky_relu", {{4, 1}}, [&](ad::Tape& t, const auto& v) { return project(t, ad::leaky_relu(v[0], 0.2)); }},
      {"softplus", {{4, 1}}, [&](ad::Tape& t, const auto& v) { return project(t, ad::softplus(v[0])); }},
      {"abs", {{4, 1}}, [&](ad::Tape& t, const auto& v) { return project(t, ad::abs(v[0])); }},
      {"square", {{4, 1}}, [&](ad::Tape& t, const auto& v) { return project(t, ad::square(v[0])); }},
      {"sum", {{2, 3}}, [&](ad::Tape&, const auto& v) { return ad::sum(ad::square(v[0])); }},
      {"stack_index", {{1, 1}, {1, 1}}, [&](ad::Tape& t, const auto& v) {
         const ad::Var parts[] = {v[0], ad::square(v[1]), v[0]};
         const ad::Var s = t.stack(parts);
         return project(t, s) + ad::square(ad::index(s, 1));
       }},
      {"softmax", {{3, 1}}, [&](ad::Tape& t, const auto& v) { return project(t, ad::softmax(v[0])); }},
  };
  for (const Case& c : cases) {
    double worst = 0.0;
    for (int seed = 0; seed < 100; ++seed) {
      std::mt19937_64 rng(static_cast<std::uint64_t>(seed));
      std::vector<Tensor> inputs;
      for (auto [r, k] : c.shapes) inputs.push_back(random_tensor(rng, r, k));
      worst = std::max(worst, fd_mismatch(c.build, inputs));
    }
    EXPECT_LE(worst, 1e-4) << c.name;
  }
}

TEST(Autodiff, SharedOperandAccumulates) {
  ad::Tape tape;
  const ad::Var x = tape.variable(Tensor::Constant(1, 1, 3.0));
  // x*x + x -> 2x + 1
  tape.backward(ad::scale(x, x) + x);
  EXPECT_DOUBLE_EQ(tape.grad(x)(0), 7.0);
}

TEST(Autodiff, Errors) {
  ad::Tape tape;
  const ad::Var v = tape.variable(col({1.0, 2.0}));
  EXPECT_THROW(tape.backward(v), gatlab::ContractViolation);
  EXPECT_THROW(tape.softmax(tape.constant(Tensor(0, 1))), gatlab::ContractViolation);
  EXPECT_THROW(v + tape.constant(col({1.0, 2.0, 3.0})), gatlab::ShapeError);
  EXPECT_THROW(ad::matvec(tape.constant(Tensor::Zero(2, 3)), v), gatlab::ShapeError);
  EXPECT_THROW(ad::dot(v, tape.constant(col({1.0}))), gatlab::ShapeError);
}

TEST(Autodiff, DeterministicAndReusable) {
  const auto run = [](ad::Tape& tape) {
    const ad::Var w = tape.variable(Tensor{{0.3, -1.2}, {0.7, 0.05}});
    const ad::Var x = tape.variable(col({0.4, -2.0}));
    const ad::Var root = ad::sum(ad::softplus(ad::matvec(w, x)));
    tape.backward(root);
    return std::pair{tape.scalar(root), Tensor(tape.grad(w))};
  };
  ad::Tape a;
  ad::Tape b;
  const auto first = run(a);
  a.clear();
  const auto again = run(a);
  const auto other = run(b);
  EXPECT_EQ(first.first, again.first);
  EXPECT_EQ(first.first, other.first);
  EXPECT_TRUE(first.second == again.second);
  EXPECT_TRUE(first.second == other.second);
}
