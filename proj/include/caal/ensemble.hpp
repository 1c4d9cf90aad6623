#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "caal/common.hpp"
#include "caal/net.hpp"
#include "caal/optim.hpp"

namespace caal {

struct EnsembleConfig {
  NetConfig net;
  std::size_t members = 5;
  ObjectiveKind objective;
  TrainSchedule schedule;  // schedule.seed is ignored; per-member seeds are derived
};

struct Ensemble {
  std::vector<HeteroNet> members;
  std::vector<std::uint64_t> member_seeds;
  ObjectiveKind objective;
  NetConfig net_config;

  std::size_t size() const { return members.size(); }
};

// Trains M independently initialised members on identical data. Each member
// seed drives both its weight init and its shuffling stream.
inline Ensemble train_ensemble(std::span<const Sample> train, std::span<const Sample> val,
                               const EnsembleConfig& config,
                               std::span<const std::uint64_t> member_seeds) {
  if (config.members < 1) throw ConfigError("ensemble: members must be >= 1");
  if (member_seeds.size() != config.members) {
    throw ConfigError("ensemble: need exactly one seed per member");
  }
  std::set<std::uint64_t> distinct(member_seeds.begin(), member_seeds.end());
  if (distinct.size() != member_seeds.size()) {
    throw ConfigError("ensemble: member seeds must be pairwise distinct");
  }
  validate_objective(config.objective);

  Ensemble ens;
  ens.objective = config.objective;
  ens.net_config = config.net;
  ens.member_seeds.assign(member_seeds.begin(), member_seeds.end());
  for (std::size_t m = 0; m < config.members; ++m) {
    HeteroNet net = init_hetero_net(config.net, derive_seed(member_seeds[m], 1));
    TrainSchedule schedule = config.schedule;
    schedule.seed = derive_seed(member_seeds[m], 2);
    ens.members.push_back(train_member(std::move(net), train, val, config.objective, schedule).net);
  }
  return ens;
}

// Per-input ensemble aggregate: predictive mean, mixture-variance split into
// the disagreement (epistemic) and mean-member-variance (aleatoric) parts,
// plus the raw per-member pairs.
struct PredictiveSummary {
  double mean = 0.0;
  double epi = 0.0;
  double ale = 0.0;
  std::vector<std::pair<double, double>> per_member;  // (mu_m, sigma2_m)
};

// epi = mean(mu^2) - mean(mu)^2, clamped at 0 against cancellation;
// ale = mean(sigma2). epi + ale is the total mixture variance.
inline PredictiveSummary summarize(std::vector<std::pair<double, double>> per_member) {
  if (per_member.empty()) throw ConfigError("summarize: need at least one member prediction");
  PredictiveSummary out;
  const double inv_m = 1.0 / static_cast<double>(per_member.size());
  double sum_mu = 0.0, sum_mu2 = 0.0, sum_s2 = 0.0;
  for (const auto& [mu, s2] : per_member) {
    sum_mu += mu;
    sum_mu2 += mu * mu;
    sum_s2 += s2;
  }
  out.mean = sum_mu * inv_m;
  out.epi = std::max(0.0, sum_mu2 * inv_m - out.mean * out.mean);
  out.ale = sum_s2 * inv_m;
  out.per_member = std::move(per_member);
  return out;
}

inline PredictiveSummary predict(const Ensemble& ens, std::span<const double> x) {
  const HeadMapping mapping = head_mapping(ens.objective);
  std::vector<std::pair<double, double>> per_member;
  per_member.reserve(ens.size());
  for (const HeteroNet& net : ens.members) {
    ForwardTrace trace = forward(net, x, mapping);
    per_member.emplace_back(trace.mu, trace.sigma2);
  }
  return summarize(std::move(per_member));
}

// Layer-normalises a vector to zero mean / unit variance across components
// (population variance, 1e-6 stabiliser).
inline std::vector<double> layer_norm(std::span<const double> h) {
  std::vector<double> out(h.size());
  if (h.empty()) return out;
  double mean = 0.0;
  for (double v : h) mean += v;
  mean /= static_cast<double>(h.size());
  double var = 0.0;
  for (double v : h) var += (v - mean) * (v - mean);
  var /= static_cast<double>(h.size());
  const double inv = 1.0 / std::sqrt(var + 1e-6);
  for (std::size_t i = 0; i < h.size(); ++i) out[i] = (h[i] - mean) * inv;
  return out;
}

// Pool embedding: member-averaged layer-normalised trunk output.
inline std::vector<double> embed(const Ensemble& ens, std::span<const double> x) {
  const HeadMapping mapping = head_mapping(ens.objective);
  std::vector<double> z;
  for (std::size_t m = 0; m < ens.size(); ++m) {
    ForwardTrace trace = forward(ens.members[m], x, mapping);
    std::vector<double> normed = layer_norm(trace.hidden);
    if (m == 0) {
      z = std::move(normed);
    } else {
      for (std::size_t i = 0; i < z.size(); ++i) z[i] += normed[i];
    }
  }
  const double inv_m = 1.0 / static_cast<double>(ens.size());
  for (double& v : z) v *= inv_m;
  return z;
}

// ---------------------------------------------------------------------------
// Snapshot format: versioned text header (architecture dims, member count,
// seeds, objective) followed by one flat hexfloat parameter array per member
// in declared order. Hexfloat round-trips bit-exactly.
// ---------------------------------------------------------------------------

inline void save_ensemble(const Ensemble& ens, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("save_ensemble: cannot open " + path);
  out << "caal_ensemble v1\n";
  out << "objective " << objective_name(ens.objective.id) << ' '
      << format_double(ens.objective.lambda) << ' ' << format_double(ens.objective.beta_nll) << '\n';
  out << "input_dim " << ens.net_config.input_dim << '\n';
  out << "trunk";
  for (std::size_t w : ens.net_config.trunk_widths) out << ' ' << w;
  out << '\n';
  out << "head_hidden " << ens.net_config.head_hidden << '\n';
  out << "members " << ens.size() << '\n';
  out << "seeds";
  for (std::uint64_t s : ens.member_seeds) out << ' ' << format_u64(s);
  out << '\n';
  char buf[64];
  for (std::size_t m = 0; m < ens.size(); ++m) {
    out << "member " << m << ' ' << ens.members[m].num_params() << '\n';
    ens.members[m].visit_params([&](const std::vector<double>& p) {
      for (double v : p) {
        std::snprintf(buf, sizeof(buf), "%a", v);
        out << buf << '\n';
      }
    });
  }
  if (!out) throw IoError("save_ensemble: write failed for " + path);
}

inline Ensemble load_ensemble(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("load_ensemble: cannot open " + path);
  auto fail = [&](const std::string& what) -> DataError {
    return DataError("load_ensemble: " + what + " in " + path);
  };

  std::string line, word;
  if (!std::getline(in, line) || line != "caal_ensemble v1") throw fail("bad magic/version");

  Ensemble ens;
  std::size_t members = 0;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    ls >> word;
    if (word == "objective") {
      std::string name;
      ls >> name >> ens.objective.lambda >> ens.objective.beta_nll;
      ens.objective.id = parse_objective_id(name);
    } else if (word == "input_dim") {
      ls >> ens.net_config.input_dim;
    } else if (word == "trunk") {
      ens.net_config.trunk_widths.clear();
      std::size_t w;
      while (ls >> w) ens.net_config.trunk_widths.push_back(w);
    } else if (word == "head_hidden") {
      ls >> ens.net_config.head_hidden;
    } else if (word == "members") {
      ls >> members;
    } else if (word == "seeds") {
      std::uint64_t s;
      while (ls >> s) ens.member_seeds.push_back(s);
      break;
    } else {
      throw fail("unexpected header field '" + word + "'");
    }
  }
  if (members == 0 || ens.member_seeds.size() != members) throw fail("inconsistent member count");

  for (std::size_t m = 0; m < members; ++m) {
    std::size_t index = 0, count = 0;
    if (!(in >> word >> index >> count) || word != "member" || index != m) {
      throw fail("missing member block " + std::to_string(m));
    }
    HeteroNet net = init_hetero_net(ens.net_config, 0);
    if (net.num_params() != count) throw fail("parameter count mismatch");
    net.visit_params([&](std::vector<double>& p) {
      for (double& v : p) {
        if (!(in >> word)) throw fail("truncated parameter data");
        v = std::strtod(word.c_str(), nullptr);
      }
    });
    ens.members.push_back(std::move(net));
  }
  return ens;
}

}  // namespace caal
