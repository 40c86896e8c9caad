#pragma once

#include <cmath>

namespace gatlab {

// Negative slope used by every LeakyReLU in the library unless overridden.
inline constexpr double kDefaultLeakySlope = 0.2;

template <typename Scalar>
Scalar leaky_relu(Scalar x, Scalar slope) {
  return x >= Scalar(0) ? x : slope * x;
}

// Subgradient at exactly 0 is taken from the positive branch.
template <typename Scalar>
Scalar leaky_relu_derivative(Scalar x, Scalar slope) {
  return x >= Scalar(0) ? Scalar(1) : slope;
}

// ln(1 + e^x), evaluated without overflow for large |x|.
template <typename Scalar>
Scalar softplus(Scalar x) {
  using std::exp;
  using std::log1p;
  return x > Scalar(0) ? x + log1p(exp(-x)) : log1p(exp(x));
}

template <typename Scalar>
Scalar sigmoid(Scalar x) {
  using std::exp;
  if (x >= Scalar(0)) return Scalar(1) / (Scalar(1) + exp(-x));
  const Scalar e = exp(x);
  return e / (Scalar(1) + e);
}

}  // namespace gatlab
