#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "caal/common.hpp"
#include "caal/objective.hpp"
#include "caal/rng.hpp"

namespace caal {

enum class Activation { Gelu, Identity };

// Exact GELU, x * Phi(x). Smooth everywhere, so central finite differences
// converge cleanly against the analytic gradients.
inline double gelu(double x) {
  return 0.5 * x * (1.0 + std::erf(x * 0.7071067811865475244));
}

inline double gelu_grad(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x * 0.7071067811865475244));
  const double pdf = 0.3989422804014326779 * std::exp(-0.5 * x * x);
  return cdf + x * pdf;
}

inline double softplus(double x) {
  return x > 30.0 ? x : std::log1p(std::exp(x));
}

inline double logistic(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

constexpr double kVarianceFloor = 1e-6;

struct DenseLayer {
  std::size_t in_dim = 0;
  std::size_t out_dim = 0;
  std::vector<double> weights;  // row-major [out_dim][in_dim]
  std::vector<double> bias;     // [out_dim]
  Activation activation = Activation::Identity;
};

struct NetConfig {
  std::size_t input_dim = 1;
  std::vector<std::size_t> trunk_widths = {64, 64};  // GELU layers
  std::size_t head_hidden = 0;  // optional GELU layer inside each head; 0 = linear head
};

inline void validate_net_config(const NetConfig& cfg) {
  if (cfg.input_dim == 0) throw ConfigError("net: input_dim must be >= 1");
  if (cfg.trunk_widths.empty()) throw ConfigError("net: trunk must have at least one layer");
  for (std::size_t w : cfg.trunk_widths) {
    if (w == 0) throw ConfigError("net: trunk widths must be >= 1");
  }
}

// Shared trunk plus two scalar heads. The mean head emits mu (eta1 under the
// natural parameterisation), the variance head emits the variance logit r
// (mapped to eta2 under the natural parameterisation). The three blocks are
// disjoint parameter partitions.
struct HeteroNet {
  std::vector<DenseLayer> trunk;
  std::vector<DenseLayer> mean_head;
  std::vector<DenseLayer> var_head;

  std::size_t input_dim() const { return trunk.empty() ? 0 : trunk.front().in_dim; }
  std::size_t hidden_dim() const { return trunk.empty() ? 0 : trunk.back().out_dim; }

  // Declared parameter order: trunk, mean head, var head; weights before bias
  // within each layer. Serialization, Adam state and gradient containers all
  // follow this order.
  template <class F>
  void visit_params(F&& f) {
    for (auto* block : {&trunk, &mean_head, &var_head}) {
      for (auto& layer : *block) {
        f(layer.weights);
        f(layer.bias);
      }
    }
  }

  template <class F>
  void visit_params(F&& f) const {
    for (auto* block : {&trunk, &mean_head, &var_head}) {
      for (const auto& layer : *block) {
        f(layer.weights);
        f(layer.bias);
      }
    }
  }

  std::size_t num_params() const {
    std::size_t n = 0;
    visit_params([&](const std::vector<double>& p) { n += p.size(); });
    return n;
  }
};

namespace detail {

inline DenseLayer make_layer(std::size_t in_dim, std::size_t out_dim, Activation act, Rng& rng) {
  DenseLayer layer;
  layer.in_dim = in_dim;
  layer.out_dim = out_dim;
  layer.activation = act;
  layer.weights.resize(in_dim * out_dim);
  layer.bias.assign(out_dim, 0.0);
  const double bound = std::sqrt(6.0 / static_cast<double>(in_dim + out_dim));
  for (double& w : layer.weights) w = rng.uniform(-bound, bound);
  return layer;
}

inline std::vector<DenseLayer> make_head(std::size_t in_dim, std::size_t head_hidden, Rng& rng) {
  std::vector<DenseLayer> head;
  if (head_hidden > 0) {
    head.push_back(make_layer(in_dim, head_hidden, Activation::Gelu, rng));
    head.push_back(make_layer(head_hidden, 1, Activation::Identity, rng));
  } else {
    head.push_back(make_layer(in_dim, 1, Activation::Identity, rng));
  }
  return head;
}

}  // namespace detail

inline HeteroNet init_hetero_net(const NetConfig& cfg, std::uint64_t seed) {
  validate_net_config(cfg);
  Rng rng(seed);
  HeteroNet net;
  std::size_t in_dim = cfg.input_dim;
  for (std::size_t width : cfg.trunk_widths) {
    net.trunk.push_back(detail::make_layer(in_dim, width, Activation::Gelu, rng));
    in_dim = width;
  }
  net.mean_head = detail::make_head(in_dim, cfg.head_hidden, rng);
  net.var_head = detail::make_head(in_dim, cfg.head_hidden, rng);
  return net;
}

struct LayerTrace {
  std::vector<double> pre;   // W a_in + b
  std::vector<double> post;  // activation(pre)
};

struct ForwardTrace {
  std::vector<LayerTrace> trunk;
  std::vector<LayerTrace> mean_head;
  std::vector<LayerTrace> var_head;
  std::vector<double> hidden;  // trunk output
  double mu = 0.0;             // predictive mean
  double r = 0.0;              // raw variance-head output
  double sigma2 = 0.0;         // predictive variance, > 0
  double eta1 = 0.0;           // populated under NaturalParams
  double eta2 = 0.0;
};

namespace detail {

inline void run_layer(const DenseLayer& layer, std::span<const double> in, LayerTrace& trace,
                      const char* block, std::size_t layer_index) {
  if (in.size() != layer.in_dim) {
    throw DataError(std::string("forward: ") + block + " layer " + std::to_string(layer_index) +
                    " expects input dim " + std::to_string(layer.in_dim) + ", got " +
                    std::to_string(in.size()));
  }
  trace.pre.assign(layer.out_dim, 0.0);
  for (std::size_t o = 0; o < layer.out_dim; ++o) {
    const double* w = layer.weights.data() + o * layer.in_dim;
    double acc = layer.bias[o];
    for (std::size_t i = 0; i < layer.in_dim; ++i) acc += w[i] * in[i];
    trace.pre[o] = acc;
  }
  trace.post.resize(layer.out_dim);
  for (std::size_t o = 0; o < layer.out_dim; ++o) {
    const double v = layer.activation == Activation::Gelu ? gelu(trace.pre[o]) : trace.pre[o];
    if (!std::isfinite(v)) {
      throw NumericError(std::string("forward: non-finite activation in ") + block + " layer " +
                         std::to_string(layer_index));
    }
    trace.post[o] = v;
  }
}

inline double run_block(const std::vector<DenseLayer>& block, std::span<const double> input,
                        std::vector<LayerTrace>& traces, const char* name) {
  traces.resize(block.size());
  std::span<const double> cur = input;
  for (std::size_t l = 0; l < block.size(); ++l) {
    run_layer(block[l], cur, traces[l], name, l);
    cur = traces[l].post;
  }
  return cur.empty() ? 0.0 : cur[0];
}

}  // namespace detail

inline ForwardTrace forward(const HeteroNet& net, std::span<const double> x,
                            HeadMapping mapping = HeadMapping::MeanLogVar) {
  ForwardTrace trace;
  trace.trunk.resize(net.trunk.size());
  std::span<const double> cur = x;
  for (std::size_t l = 0; l < net.trunk.size(); ++l) {
    detail::run_layer(net.trunk[l], cur, trace.trunk[l], "trunk", l);
    cur = trace.trunk[l].post;
  }
  trace.hidden.assign(cur.begin(), cur.end());

  const double mean_out = detail::run_block(net.mean_head, trace.hidden, trace.mean_head, "mean_head");
  trace.r = detail::run_block(net.var_head, trace.hidden, trace.var_head, "var_head");

  if (mapping == HeadMapping::MeanLogVar) {
    trace.mu = mean_out;
    trace.sigma2 = softplus(trace.r) + kVarianceFloor;
  } else {
    trace.eta1 = mean_out;
    trace.eta2 = -softplus(trace.r) - kVarianceFloor;  // keeps eta2 strictly negative
    trace.sigma2 = -1.0 / (2.0 * trace.eta2);
    trace.mu = trace.eta1 * trace.sigma2;
  }
  return trace;
}

struct LayerGrads {
  std::vector<double> d_weights;
  std::vector<double> d_bias;
};

struct Gradients {
  std::vector<LayerGrads> trunk;
  std::vector<LayerGrads> mean_head;
  std::vector<LayerGrads> var_head;

  // Same traversal order as HeteroNet::visit_params.
  template <class F>
  void visit(F&& f) {
    for (auto* block : {&trunk, &mean_head, &var_head}) {
      for (auto& lg : *block) {
        f(lg.d_weights);
        f(lg.d_bias);
      }
    }
  }
};

inline Gradients zero_gradients_like(const HeteroNet& net) {
  Gradients g;
  auto fill = [](const std::vector<DenseLayer>& block, std::vector<LayerGrads>& out) {
    out.resize(block.size());
    for (std::size_t l = 0; l < block.size(); ++l) {
      out[l].d_weights.assign(block[l].weights.size(), 0.0);
      out[l].d_bias.assign(block[l].bias.size(), 0.0);
    }
  };
  fill(net.trunk, g.trunk);
  fill(net.mean_head, g.mean_head);
  fill(net.var_head, g.var_head);
  return g;
}

// Which additive loss component to backpropagate. VarOnly exposes the
// stop-gradient routing for direct testing.
enum class LossComponent { Both, MeanOnly, VarOnly };

struct Sample {
  std::vector<double> x;
  double y = 0.0;
};

struct BackwardResult {
  Gradients grads;     // mean over the batch
  double mean_loss = 0.0;
};

namespace detail {

// Backprops a head given d(loss)/d(head output); accumulates parameter grads
// and returns d(loss)/d(head input).
inline std::vector<double> backprop_block(const std::vector<DenseLayer>& block,
                                          const std::vector<LayerTrace>& traces,
                                          std::span<const double> block_input, double d_out,
                                          std::vector<LayerGrads>& grads) {
  std::vector<double> d_post(1, d_out);
  for (std::size_t li = block.size(); li-- > 0;) {
    const DenseLayer& layer = block[li];
    const LayerTrace& tr = traces[li];
    std::span<const double> in = li == 0 ? block_input : std::span<const double>(traces[li - 1].post);
    std::vector<double> d_pre(layer.out_dim);
    for (std::size_t o = 0; o < layer.out_dim; ++o) {
      d_pre[o] = layer.activation == Activation::Gelu ? d_post[o] * gelu_grad(tr.pre[o]) : d_post[o];
    }
    for (std::size_t o = 0; o < layer.out_dim; ++o) {
      double* dw = grads[li].d_weights.data() + o * layer.in_dim;
      for (std::size_t i = 0; i < layer.in_dim; ++i) dw[i] += d_pre[o] * in[i];
      grads[li].d_bias[o] += d_pre[o];
    }
    std::vector<double> d_in(layer.in_dim, 0.0);
    for (std::size_t o = 0; o < layer.out_dim; ++o) {
      const double* w = layer.weights.data() + o * layer.in_dim;
      for (std::size_t i = 0; i < layer.in_dim; ++i) d_in[i] += w[i] * d_pre[o];
    }
    d_post = std::move(d_in);
  }
  return d_post;
}

}  // namespace detail

// Mean-over-batch gradients with routing exactly as the objective prescribes:
// the mean head receives d_mu_mean + d_mu_var (the latter is 0 under
// stop-gradient), the variance head receives d_var chained through the
// variance-logit mapping, and the variance branch reaches the trunk only when
// the objective allows it.
inline BackwardResult backward(const HeteroNet& net, std::span<const Sample> batch,
                               const ObjectiveKind& objective,
                               LossComponent component = LossComponent::Both) {
  if (batch.empty()) throw ConfigError("backward: batch must be non-empty");
  const HeadMapping mapping = head_mapping(objective);

  BackwardResult result;
  result.grads = zero_gradients_like(net);

  for (const Sample& sample : batch) {
    ForwardTrace trace = forward(net, sample.x, mapping);
    const double first = mapping == HeadMapping::MeanLogVar ? trace.mu : trace.eta1;
    const double second = mapping == HeadMapping::MeanLogVar ? trace.sigma2 : trace.eta2;
    const PerSampleLoss psl = eval_objective(objective, first, second, sample.y);

    double d_mu = 0.0;
    double d_second = 0.0;
    switch (component) {
      case LossComponent::Both:
        result.mean_loss += psl.loss;
        d_mu = psl.d_mu_mean + psl.d_mu_var;
        d_second = psl.d_var;
        break;
      case LossComponent::MeanOnly:
        result.mean_loss += psl.loss_mean;
        d_mu = psl.d_mu_mean;
        break;
      case LossComponent::VarOnly:
        result.mean_loss += psl.loss_var;
        d_mu = psl.d_mu_var;
        d_second = psl.d_var;
        break;
    }

    std::vector<double> d_hidden(trace.hidden.size(), 0.0);

    std::vector<double> from_mean = detail::backprop_block(net.mean_head, trace.mean_head,
                                                           trace.hidden, d_mu, result.grads.mean_head);
    for (std::size_t i = 0; i < d_hidden.size(); ++i) d_hidden[i] += from_mean[i];

    if (component != LossComponent::MeanOnly) {
      // d(sigma2)/dr = logistic(r); d(eta2)/dr = -logistic(r)
      const double chain = mapping == HeadMapping::MeanLogVar ? logistic(trace.r) : -logistic(trace.r);
      std::vector<double> from_var = detail::backprop_block(net.var_head, trace.var_head, trace.hidden,
                                                            d_second * chain, result.grads.var_head);
      if (psl.var_to_trunk) {
        for (std::size_t i = 0; i < d_hidden.size(); ++i) d_hidden[i] += from_var[i];
      }
    }

    // Trunk backprop from the combined hidden gradient.
    std::vector<double> d_post = std::move(d_hidden);
    for (std::size_t li = net.trunk.size(); li-- > 0;) {
      const DenseLayer& layer = net.trunk[li];
      const LayerTrace& tr = trace.trunk[li];
      std::span<const double> in =
          li == 0 ? std::span<const double>(sample.x) : std::span<const double>(trace.trunk[li - 1].post);
      std::vector<double> d_pre(layer.out_dim);
      for (std::size_t o = 0; o < layer.out_dim; ++o) {
        d_pre[o] = layer.activation == Activation::Gelu ? d_post[o] * gelu_grad(tr.pre[o]) : d_post[o];
      }
      for (std::size_t o = 0; o < layer.out_dim; ++o) {
        double* dw = result.grads.trunk[li].d_weights.data() + o * layer.in_dim;
        for (std::size_t i = 0; i < layer.in_dim; ++i) dw[i] += d_pre[o] * in[i];
        result.grads.trunk[li].d_bias[o] += d_pre[o];
      }
      std::vector<double> d_in(layer.in_dim, 0.0);
      for (std::size_t o = 0; o < layer.out_dim; ++o) {
        const double* w = layer.weights.data() + o * layer.in_dim;
        for (std::size_t i = 0; i < layer.in_dim; ++i) d_in[i] += w[i] * d_pre[o];
      }
      d_post = std::move(d_in);
    }
  }

  const double inv_n = 1.0 / static_cast<double>(batch.size());
  result.mean_loss *= inv_n;
  result.grads.visit([&](std::vector<double>& g) {
    for (double& v : g) v *= inv_n;
  });
  return result;
}

// Mean objective loss over a set, no gradients.
inline double mean_loss(const HeteroNet& net, std::span<const Sample> data,
                        const ObjectiveKind& objective) {
  if (data.empty()) throw ConfigError("mean_loss: data must be non-empty");
  const HeadMapping mapping = head_mapping(objective);
  double total = 0.0;
  for (const Sample& sample : data) {
    ForwardTrace trace = forward(net, sample.x, mapping);
    const double first = mapping == HeadMapping::MeanLogVar ? trace.mu : trace.eta1;
    const double second = mapping == HeadMapping::MeanLogVar ? trace.sigma2 : trace.eta2;
    total += eval_objective(objective, first, second, sample.y).loss;
  }
  return total / static_cast<double>(data.size());
}

}  // namespace caal
