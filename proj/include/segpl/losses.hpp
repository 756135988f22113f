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

#ifndef SEGPL_LOSSES_HPP_
#define SEGPL_LOSSES_HPP_

#include <cmath>
#include <vector>

#include "segpl/em.hpp"
#include "segpl/error.hpp"
#include "segpl/segcore.hpp"

namespace segpl {

/// Dice smoothing constant; makes an empty prediction of an empty target perfect.
inline constexpr double kDiceSmooth = 1.0;

struct LossBreakdown {
  double supervised = 0.0;
  double unsupervised = 0.0;
  double kl = 0.0;
  double total = 0.0;
  double alpha_effective = 0.0;
};

/// Gradients of a loss with respect to its differentiable inputs.
struct LossGradients {
  Tensor<float> prob_labelled;
  Tensor<float> prob_unlabelled;
  std::vector<float> mu;
  std::vector<float> log_sigma;
};

/// Soft Dice loss, 1 - (2 sum(p y) + s) / (sum p + sum y + s) per (image,
/// channel), averaged over images and channels. Writes dL/dp into `grad`
/// (scaled by `grad_scale`) when non-null.
inline double dice_loss(const Tensor<float>& prob, const Tensor<float>& target,
                        Tensor<float>* grad = nullptr, double grad_scale = 1.0) {
  detail::require_same_shape(prob.shape(), target.shape(), "dice shape mismatch");
  const int count = prob.n() * prob.c();
  if (grad) *grad = Tensor<float>(prob.shape());
  if (count == 0) return 0.0;
  double total = 0.0;
  for (int b = 0; b < prob.n(); ++b) {
    for (int k = 0; k < prob.c(); ++k) {
      auto p = prob.plane(b, k);
      auto y = target.plane(b, k);
      double inter = 0.0, sum = 0.0;
      for (std::size_t i = 0; i < p.size(); ++i) {
        inter += double(p[i]) * y[i];
        sum += double(p[i]) + y[i];
      }
      const double num = 2.0 * inter + kDiceSmooth;
      const double den = sum + kDiceSmooth;
      total += 1.0 - num / den;
      if (grad) {
        auto g = grad->plane(b, k);
        const double scale = grad_scale / count;
        for (std::size_t i = 0; i < p.size(); ++i) {
          g[i] = static_cast<float>(-scale * (2.0 * y[i] * den - num) / (den * den));
        }
      }
    }
  }
  return total / count;
}

inline double dice_loss(const ProbMap& prob, const MaskBatch& target,
                        Tensor<float>* grad = nullptr) {
  return dice_loss(prob.tensor(), target.tensor(), grad);
}

/// KL(N(mu, sigma) || N(mu_beta, sigma_beta)) in closed form.
inline double kl_gaussian(double mu, double log_sigma, const PriorConfig& prior) {
  const double sigma2 = std::exp(2.0 * log_sigma);
  const double sb = prior.sigma_beta;
  const double d = mu - prior.mu_beta;
  const double kl = std::log(sb) - log_sigma + (sigma2 + d * d) / (2.0 * sb * sb) - 0.5;
  if (!std::isfinite(kl)) {
    throw NumericError("non-finite KL for mu=" + std::to_string(mu) +
                       ", log_sigma=" + std::to_string(log_sigma));
  }
  return kl;
}

/// Partial derivatives of kl_gaussian with respect to mu and log_sigma.
inline std::pair<double, double> kl_gaussian_grad(double mu, double log_sigma,
                                                  const PriorConfig& prior) {
  const double sb2 = prior.sigma_beta * prior.sigma_beta;
  return {(mu - prior.mu_beta) / sb2, std::exp(2.0 * log_sigma) / sb2 - 1.0};
}

/// Supervised Dice on labelled images plus alpha times Dice of unlabelled
/// predictions against their (gradient-free) pseudo-labels.
inline LossBreakdown segpl_loss(const ProbMap& prob_l, const MaskBatch& y_l,
                                const ProbMap& prob_u, const PseudoLabelBatch& y_pseudo,
                                double alpha, LossGradients* grads = nullptr) {
  if (!(alpha >= 0.0)) throw ConfigError("alpha must be >= 0");
  if (prob_l.shape().n < 1) throw ShapeError("labelled batch is empty");
  LossBreakdown out;
  out.alpha_effective = alpha;
  out.supervised = dice_loss(prob_l.tensor(), y_l.tensor(),
                             grads ? &grads->prob_labelled : nullptr);
  if (prob_u.shape().n > 0) {
    out.unsupervised = dice_loss(prob_u.tensor(), y_pseudo.masks.tensor(),
                                 grads ? &grads->prob_unlabelled : nullptr, alpha);
  } else if (grads) {
    grads->prob_unlabelled = Tensor<float>(prob_u.shape());
  }
  out.total = out.supervised + alpha * out.unsupervised;
  return out;
}

/// segpl_loss with the learned threshold, plus the KL of the threshold
/// posterior to the prior averaged over images and classes (single-sample
/// ELBO estimate).
inline LossBreakdown segpl_vi_loss(const ProbMap& prob_l, const MaskBatch& y_l,
                                   const ProbMap& prob_u, const PseudoLabelBatch& y_pseudo,
                                   double alpha, const ThresholdHeadOutput& posterior,
                                   const PriorConfig& prior, double kl_weight = 1.0,
                                   LossGradients* grads = nullptr) {
  prior.validate();
  LossBreakdown out = segpl_loss(prob_l, y_l, prob_u, y_pseudo, alpha, grads);
  const std::size_t count = posterior.mu.size();
  if (grads) {
    grads->mu.assign(count, 0.0f);
    grads->log_sigma.assign(count, 0.0f);
  }
  if (count > 0) {
    double kl = 0.0;
    for (std::size_t i = 0; i < count; ++i) {
      kl += kl_gaussian(posterior.mu[i], posterior.log_sigma[i], prior);
      if (grads) {
        const auto [gm, gs] = kl_gaussian_grad(posterior.mu[i], posterior.log_sigma[i], prior);
        grads->mu[i] = static_cast<float>(kl_weight * gm / count);
        grads->log_sigma[i] = static_cast<float>(kl_weight * gs / count);
      }
    }
    out.kl = kl_weight * kl / count;
  }
  out.total += out.kl;
  return out;
}

}  // namespace segpl

#endif  // SEGPL_LOSSES_HPP_
