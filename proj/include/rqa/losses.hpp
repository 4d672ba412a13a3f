#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

#include "rqa/common.hpp"
#include "rqa/model.hpp"

namespace rqa {

enum class LossVariant { l2, contrastive, triplet };

inline const char* to_string(LossVariant v) {
  switch (v) {
    case LossVariant::l2: return "l2";
    case LossVariant::contrastive: return "contrastive";
    case LossVariant::triplet: return "triplet";
  }
  return "unknown";
}

inline LossVariant loss_from_string(const std::string& s) {
  if (s == "l2") return LossVariant::l2;
  if (s == "contrastive") return LossVariant::contrastive;
  if (s == "triplet") return LossVariant::triplet;
  throw ConfigError("unknown loss: '" + s + "'");
}

struct LossConfig {
  LossVariant variant = LossVariant::l2;
  double eta = 2.0;     // contrastive scale; 2 is the score-difference bound
  double mu = 0.5;      // triplet margin
  double gamma = 0.0;   // Frobenius weight
  double gamma_i = 0.0; // manifold-regularization weight; 0 disables
  double sigma = 1.0;   // neighbor kernel bandwidth
  int k = 10;           // neighbors per labeled sample

  void validate() const {
    if (eta <= 0.0) throw ConfigError("eta must be > 0");
    if (mu < 0.0) throw ConfigError("mu must be >= 0");
    if (gamma < 0.0) throw ConfigError("gamma must be >= 0");
    if (gamma_i < 0.0) throw ConfigError("gamma_i must be >= 0");
    if (sigma <= 0.0) throw ConfigError("sigma must be > 0");
    if (k < 1) throw ConfigError("k must be >= 1");
  }
};

struct LossValue1 {
  double value = 0.0;
  double d = 0.0;  // d value / d f
};

// 1/2 (f - y)^2
inline LossValue1 l2_loss(double f, double y) {
  if (y != 1.0 && y != -1.0) {
    throw std::invalid_argument("l2_loss: label must be +1 or -1");
  }
  return {0.5 * (f - y) * (f - y), f - y};
}

struct LossValue2 {
  double value = 0.0;
  double d1 = 0.0;
  double d2 = 0.0;
};

// Pairwise loss over score difference delta = f1 - f2. Same-class pairs
// (y = 1) pull the difference to zero; cross-class pairs (y = 0, f1 the
// positive sample) decay as the positive outscores the negative.
inline LossValue2 contrastive_loss(double f1, double f2, int y, double eta) {
  if (eta <= 0.0) throw std::invalid_argument("contrastive_loss: eta must be > 0");
  if (y != 0 && y != 1) {
    throw std::invalid_argument("contrastive_loss: y must be 0 or 1");
  }
  const double delta = f1 - f2;
  double value, d_delta;
  if (y == 1) {
    value = (2.0 / eta) * delta * delta;
    d_delta = (4.0 / eta) * delta;
  } else {
    const double e = std::exp(-(2.77 / eta) * delta);
    value = 2.0 * eta * e;
    d_delta = -2.0 * 2.77 * e;
  }
  return {value, d_delta, -d_delta};
}

struct LossValue3 {
  double value = 0.0;
  double da = 0.0;
  double dp = 0.0;
  double dn = 0.0;
};

// max(0, |fa - fp| - (fa - fn) + mu). One-sided in the negative sample: only
// a negative scoring too close to the anchor is penalized. Subgradient 0 at
// the hinge boundary and at fa = fp.
inline LossValue3 triplet_loss(double fa, double fp, double fn, double mu) {
  if (mu < 0.0) throw std::invalid_argument("triplet_loss: mu must be >= 0");
  const double rho = std::abs(fa - fp) - (fa - fn) + mu;
  if (rho <= 0.0) return {0.0, 0.0, 0.0, 0.0};
  const double sign = fa > fp ? 1.0 : (fa < fp ? -1.0 : 0.0);
  return {rho, sign - 1.0, -sign, 1.0};
}

// gamma_i * omega * (f_labeled - f_unlabeled)^2; ties a labeled sample's
// score to an unlabeled near-neighbor's score.
inline LossValue2 mr_penalty(double f_labeled, double f_unlabeled, double omega,
                             double gamma_i) {
  const double diff = f_labeled - f_unlabeled;
  const double d = 2.0 * gamma_i * omega * diff;
  return {gamma_i * omega * diff * diff, d, -d};
}

// (gamma/2) * sum of squared weight-matrix entries; biases and the attention
// kernel are not penalized. When `grads` is given, gamma * W is accumulated
// into the matching blocks.
inline double frobenius_reg(const ModelParams& params, double gamma,
                            Gradients* grads = nullptr) {
  if (gamma < 0.0) throw std::invalid_argument("frobenius_reg: gamma must be >= 0");
  double sq = frobenius_squared(params.cascade_weight) +
              frobenius_squared(params.hidden_weight) +
              dot(params.output_weight, params.output_weight);
  if (grads && gamma != 0.0) {
    add_scaled(grads->cascade_weight.data, gamma, params.cascade_weight.data);
    add_scaled(grads->hidden_weight.data, gamma, params.hidden_weight.data);
    add_scaled(grads->output_weight, gamma, params.output_weight);
  }
  return 0.5 * gamma * sq;
}

}  // namespace rqa
