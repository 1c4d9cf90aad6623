#pragma once

#include <cmath>
#include <string>

#include "caal/common.hpp"

namespace caal {

// Training objectives for heteroscedastic regression. Every objective is a
// per-sample strategy: a loss value split into a mean-fit component and a
// variance-calibration component, plus the gradient each component sends to
// the two head outputs and a routing flag for the trunk.

enum class ObjectiveId {
  Nll,                // joint Gaussian negative log-likelihood
  DecoupledMseSgNll,  // MSE + lambda * NLL with stop-gradient residual
  BetaNll,            // NLL reweighted by a detached variance power
  Faithful,           // MSE + NLL confined to the variance head
  NaturalGaussian,    // NLL over Gaussian natural parameters (eta1, eta2)
};

struct ObjectiveKind {
  ObjectiveId id = ObjectiveId::DecoupledMseSgNll;
  double lambda = 0.1;    // variance-branch weight, DecoupledMseSgNll only
  double beta_nll = 0.5;  // detached-weight exponent in [0, 1], BetaNll only
};

inline const char* objective_name(ObjectiveId id) {
  switch (id) {
    case ObjectiveId::Nll: return "nll";
    case ObjectiveId::DecoupledMseSgNll: return "decoupled";
    case ObjectiveId::BetaNll: return "beta_nll";
    case ObjectiveId::Faithful: return "faithful";
    case ObjectiveId::NaturalGaussian: return "natural";
  }
  return "unknown";
}

inline ObjectiveId parse_objective_id(const std::string& name) {
  if (name == "nll") return ObjectiveId::Nll;
  if (name == "decoupled") return ObjectiveId::DecoupledMseSgNll;
  if (name == "beta_nll") return ObjectiveId::BetaNll;
  if (name == "faithful") return ObjectiveId::Faithful;
  if (name == "natural") return ObjectiveId::NaturalGaussian;
  throw ConfigError("unknown objective kind: " + name);
}

inline void validate_objective(const ObjectiveKind& k) {
  if (k.lambda < 0.0) throw ConfigError("objective: lambda must be >= 0");
  if (k.beta_nll < 0.0 || k.beta_nll > 1.0) throw ConfigError("objective: beta_nll must be in [0, 1]");
}

// How the two raw head outputs of the network map to a predictive Gaussian.
// All objectives except NaturalGaussian use mean + variance logit.
enum class HeadMapping { MeanLogVar, NaturalParams };

inline HeadMapping head_mapping(const ObjectiveKind& k) {
  return k.id == ObjectiveId::NaturalGaussian ? HeadMapping::NaturalParams : HeadMapping::MeanLogVar;
}

// Per-sample loss with its gradient routing.
//
// The total loss is loss_mean + loss_var. `d_mu_*` are derivatives with
// respect to the first predictive parameter (mu; eta1 under NaturalParams),
// `d_var` with respect to the second (sigma^2; eta2 under NaturalParams).
// d_mu_var is identically 0 for objectives whose variance residual is
// stop-gradiented. var_to_trunk = false means the variance branch must not
// backpropagate past the variance head into shared features.
struct PerSampleLoss {
  double loss = 0.0;
  double loss_mean = 0.0;
  double loss_var = 0.0;
  double d_mu_mean = 0.0;
  double d_mu_var = 0.0;
  double d_var = 0.0;
  bool var_to_trunk = true;
};

namespace detail {
inline void require_positive_variance(double sigma2) {
  if (!(sigma2 > 0.0)) {
    throw NumericError("objective: sigma2 must be positive, got " + std::to_string(sigma2));
  }
}
}  // namespace detail

// loss = 1/2 log s2 + (y - mu)^2 / (2 s2)
inline PerSampleLoss eval_nll(double mu, double sigma2, double y) {
  detail::require_positive_variance(sigma2);
  const double res = y - mu;
  PerSampleLoss out;
  out.loss_var = 0.5 * std::log(sigma2) + res * res / (2.0 * sigma2);
  out.loss = out.loss_var;
  out.d_mu_var = -res / sigma2;
  out.d_var = 0.5 / sigma2 - res * res / (2.0 * sigma2 * sigma2);
  return out;
}

// loss = (y - mu)^2 + lambda * [ (y - sg(mu))^2 / (2 s2) + 1/2 log s2 ]
// The variance residual treats mu as a constant, so the variance component
// contributes no gradient to mu; it still reaches the trunk.
inline PerSampleLoss eval_decoupled(double mu, double sigma2, double y, double lambda) {
  detail::require_positive_variance(sigma2);
  if (lambda < 0.0) throw ConfigError("eval_decoupled: lambda must be >= 0");
  const double res = y - mu;
  PerSampleLoss out;
  out.loss_mean = res * res;
  out.loss_var = lambda * (0.5 * res * res / sigma2 + 0.5 * std::log(sigma2));
  out.loss = out.loss_mean + out.loss_var;
  out.d_mu_mean = -2.0 * res;
  out.d_mu_var = 0.0;  // stop-gradient on the residual
  out.d_var = lambda * (0.5 / sigma2 - res * res / (2.0 * sigma2 * sigma2));
  return out;
}

// loss = sg(s2)^beta * [ (y - mu)^2 / (2 s2) + 1/2 log s2 ]; the weight is a
// detached constant during differentiation.
inline PerSampleLoss eval_beta_nll(double mu, double sigma2, double y, double beta_nll) {
  detail::require_positive_variance(sigma2);
  if (beta_nll < 0.0 || beta_nll > 1.0) throw ConfigError("eval_beta_nll: beta_nll must be in [0, 1]");
  const double res = y - mu;
  const double w = std::pow(sigma2, beta_nll);
  PerSampleLoss out;
  out.loss_var = w * (res * res / (2.0 * sigma2) + 0.5 * std::log(sigma2));
  out.loss = out.loss_var;
  out.d_mu_var = w * (-res / sigma2);
  out.d_var = w * (0.5 / sigma2 - res * res / (2.0 * sigma2 * sigma2));
  return out;
}

// Same value as eval_decoupled with lambda = 1, but the variance branch is
// confined to the variance head: no gradient to the trunk or the mean head.
inline PerSampleLoss eval_faithful(double mu, double sigma2, double y) {
  PerSampleLoss out = eval_decoupled(mu, sigma2, y, 1.0);
  out.var_to_trunk = false;
  return out;
}

// Gaussian NLL over natural parameters with mu = -eta1/(2 eta2) and
// s2 = -1/(2 eta2). Gradients are taken with respect to (eta1, eta2) and flow
// through both heads and the trunk.
inline PerSampleLoss eval_natural(double eta1, double eta2, double y) {
  if (!(eta2 < 0.0)) {
    throw NumericError("eval_natural: eta2 must be negative, got " + std::to_string(eta2));
  }
  const double s = -1.0 / (2.0 * eta2);
  const double mu = eta1 * s;
  const double res = y - mu;
  PerSampleLoss out;
  out.loss_var = 0.5 * std::log(s) + res * res / (2.0 * s);
  out.loss = out.loss_var;
  // dmu/deta1 = s, dmu/deta2 = 2 eta1 s^2, ds/deta2 = 2 s^2
  out.d_mu_var = -res;
  out.d_var = -2.0 * eta1 * s * res + s - res * res;
  return out;
}

// Dispatch on the configured kind. `first`/`second` are (mu, sigma2), or
// (eta1, eta2) under NaturalGaussian.
inline PerSampleLoss eval_objective(const ObjectiveKind& k, double first, double second, double y) {
  switch (k.id) {
    case ObjectiveId::Nll: return eval_nll(first, second, y);
    case ObjectiveId::DecoupledMseSgNll: return eval_decoupled(first, second, y, k.lambda);
    case ObjectiveId::BetaNll: return eval_beta_nll(first, second, y, k.beta_nll);
    case ObjectiveId::Faithful: return eval_faithful(first, second, y);
    case ObjectiveId::NaturalGaussian: return eval_natural(first, second, y);
  }
  throw ConfigError("eval_objective: unknown objective kind");
}

}  // namespace caal
