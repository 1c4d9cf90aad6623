#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "caal/common.hpp"
#include "caal/net.hpp"
#include "caal/rng.hpp"

namespace caal {

struct TrainSchedule {
  int max_epochs = 100;
  int batch_size = 128;
  double lr0 = 1e-4;
  int plateau_patience = 10;
  double lr_factor = 0.5;
  double min_lr = 1e-7;
  int early_stop_patience = 20;
  double weight_decay = 1e-4;
  std::uint64_t seed = 0;
};

inline void validate_schedule(const TrainSchedule& s) {
  if (s.max_epochs < 0) throw ConfigError("schedule: max_epochs must be >= 0");
  if (s.batch_size < 1) throw ConfigError("schedule: batch_size must be >= 1");
  if (!(s.lr0 > 0.0)) throw ConfigError("schedule: lr0 must be > 0");
  if (!(s.lr_factor > 0.0 && s.lr_factor < 1.0)) throw ConfigError("schedule: lr_factor must be in (0, 1)");
  if (s.min_lr > s.lr0) throw ConfigError("schedule: min_lr must be <= lr0");
  if (s.plateau_patience < 1 || s.early_stop_patience < 1) {
    throw ConfigError("schedule: patiences must be >= 1");
  }
  if (s.weight_decay < 0.0) throw ConfigError("schedule: weight_decay must be >= 0");
}

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long step = 0;
  std::vector<std::vector<double>> m;  // mirrors visit_params order
  std::vector<std::vector<double>> v;
};

inline AdamState make_adam_state(const HeteroNet& net) {
  AdamState st;
  net.visit_params([&](const std::vector<double>& p) {
    st.m.emplace_back(p.size(), 0.0);
    st.v.emplace_back(p.size(), 0.0);
  });
  return st;
}

// Bias-corrected Adam with decoupled weight decay: the decay term is added to
// the update directly and never enters the moment accumulators.
inline void adam_update(std::span<double> p, std::span<const double> g, std::span<double> m,
                        std::span<double> v, long step, double lr, double weight_decay,
                        double beta1, double beta2, double eps) {
  if (p.size() != g.size() || p.size() != m.size() || p.size() != v.size()) {
    throw ConfigError("adam_update: mismatched array sizes");
  }
  if (!(lr > 0.0)) throw ConfigError("adam_update: lr must be > 0");
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step));
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!std::isfinite(g[i])) throw NumericError("adam_update: non-finite gradient");
    m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
    v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
    const double m_hat = m[i] / bc1;
    const double v_hat = v[i] / bc2;
    p[i] -= lr * m_hat / (std::sqrt(v_hat) + eps) + lr * weight_decay * p[i];
  }
}

inline void adam_step(HeteroNet& net, Gradients& grads, AdamState& state, double lr,
                      double weight_decay) {
  ++state.step;
  std::size_t slot = 0;
  std::vector<std::vector<double>*> params;
  net.visit_params([&](std::vector<double>& p) { params.push_back(&p); });
  grads.visit([&](std::vector<double>& g) {
    adam_update(*params[slot], g, state.m[slot], state.v[slot], state.step, lr, weight_decay,
                state.beta1, state.beta2, state.eps);
    ++slot;
  });
}

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double lr = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  int best_epoch = -1;
  double best_val_loss = std::numeric_limits<double>::infinity();
};

struct TrainResult {
  HeteroNet net;  // best-validation snapshot
  TrainHistory history;
};

// Seeded mini-batch training with plateau LR decay and early stopping. The
// returned network is the best-validation-loss snapshot, not the final state.
inline TrainResult train_member(HeteroNet net, std::span<const Sample> train,
                                std::span<const Sample> val, const ObjectiveKind& objective,
                                const TrainSchedule& schedule) {
  validate_schedule(schedule);
  validate_objective(objective);
  if (train.empty()) throw ConfigError("train_member: training set must be non-empty");
  if (val.empty()) throw ConfigError("train_member: validation set must be non-empty");

  TrainResult result;
  result.net = net;
  if (schedule.max_epochs == 0) return result;

  Rng rng(schedule.seed);
  AdamState adam = make_adam_state(net);
  double lr = schedule.lr0;
  int plateau_count = 0;
  int early_count = 0;

  std::vector<std::size_t> order(train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::vector<Sample> batch;

  for (int epoch = 1; epoch <= schedule.max_epochs; ++epoch) {
    rng.shuffle(order);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += schedule.batch_size) {
      const std::size_t end = std::min(order.size(), start + schedule.batch_size);
      batch.clear();
      for (std::size_t i = start; i < end; ++i) batch.push_back(train[order[i]]);
      BackwardResult bw = backward(net, batch, objective);
      epoch_loss += bw.mean_loss * static_cast<double>(batch.size());
      adam_step(net, bw.grads, adam, lr, schedule.weight_decay);
    }
    epoch_loss /= static_cast<double>(train.size());
    const double val_loss = mean_loss(net, val, objective);
    result.history.epochs.push_back({epoch, epoch_loss, val_loss, lr});

    if (val_loss < result.history.best_val_loss) {
      result.history.best_val_loss = val_loss;
      result.history.best_epoch = epoch;
      result.net = net;
      plateau_count = 0;
      early_count = 0;
    } else {
      ++plateau_count;
      ++early_count;
      if (plateau_count >= schedule.plateau_patience) {
        lr = std::max(lr * schedule.lr_factor, schedule.min_lr);
        plateau_count = 0;
      }
      if (early_count >= schedule.early_stop_patience) break;
    }
  }
  return result;
}

}  // namespace caal
