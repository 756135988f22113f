/* Copyright 2026 The SegPL Authors

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

        https://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#ifndef SEGPL_TESTS_ORACLES_HPP_
#define SEGPL_TESTS_ORACLES_HPP_

// Reference computations that share no code with the library.

#include <cmath>
#include <functional>
#include <numbers>

namespace segpl::oracle {

/// KL(N(mu, sigma) || N(mu_b, sigma_b)) by composite Simpson quadrature of
/// p log(p / q) over mu +- 12 sigma.
inline double kl_quadrature(double mu, double sigma, double mu_b, double sigma_b,
                            int intervals = 4000) {
  const double lo = mu - 12.0 * sigma, hi = mu + 12.0 * sigma;
  const double h = (hi - lo) / intervals;
  auto log_normal = [](double x, double m, double s) {
    const double z = (x - m) / s;
    return -0.5 * z * z - std::log(s) - 0.5 * std::log(2.0 * std::numbers::pi);
  };
  auto f = [&](double x) {
    const double lp = log_normal(x, mu, sigma);
    return std::exp(lp) * (lp - log_normal(x, mu_b, sigma_b));
  };
  double acc = f(lo) + f(hi);
  for (int i = 1; i < intervals; ++i) acc += (i % 2 ? 4.0 : 2.0) * f(lo + i * h);
  return acc * h / 3.0;
}

/// Soft Dice of one channel: 1 - (2 sum py + 1) / (sum p + sum y + 1).
template <typename It>
double dice_channel(It p, It y, std::size_t n) {
  double py = 0.0, sp = 0.0, sy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    py += static_cast<double>(p[i]) * y[i];
    sp += p[i];
    sy += y[i];
  }
  return 1.0 - (2.0 * py + 1.0) / (sp + sy + 1.0);
}

/// Relative error with a floor on the denominator.
inline double rel_error(double a, double b, double floor = 1e-6) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

/// Central difference of f at a float coordinate. The step is taken in
/// float and the realised difference used as the denominator, so rounding
/// of the perturbed input does not bias the estimate.
inline double central_difference(float& x, const std::function<double()>& f, float h) {
  const float o = x;
  const float up = o + h, down = o - h;
  x = up;
  const double a = f();
  x = down;
  const double b = f();
  x = o;
  return (a - b) / (static_cast<double>(up) - static_cast<double>(down));
}

}  // namespace segpl::oracle

#endif  // SEGPL_TESTS_ORACLES_HPP_
