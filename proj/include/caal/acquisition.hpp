#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "caal/common.hpp"
#include "caal/ensemble.hpp"
#include "caal/rng.hpp"

namespace caal {

enum class StrategyId { Random, Confidence, Ale, Alm, Qbc, Bald, Caal, Coreset, Lcmd, Badge };

struct StrategyKind {
  StrategyId id = StrategyId::Caal;
  double beta = 1.0;  // CAAL gate exponent, >= 0
};

inline const char* strategy_name(StrategyId id) {
  switch (id) {
    case StrategyId::Random: return "random";
    case StrategyId::Confidence: return "confidence";
    case StrategyId::Ale: return "ale";
    case StrategyId::Alm: return "alm";
    case StrategyId::Qbc: return "qbc";
    case StrategyId::Bald: return "bald";
    case StrategyId::Caal: return "caal";
    case StrategyId::Coreset: return "coreset";
    case StrategyId::Lcmd: return "lcmd";
    case StrategyId::Badge: return "badge";
  }
  return "unknown";
}

inline StrategyId parse_strategy_id(const std::string& name) {
  for (StrategyId id : {StrategyId::Random, StrategyId::Confidence, StrategyId::Ale, StrategyId::Alm,
                        StrategyId::Qbc, StrategyId::Bald, StrategyId::Caal, StrategyId::Coreset,
                        StrategyId::Lcmd, StrategyId::Badge}) {
    if (name == strategy_name(id)) return id;
  }
  throw ConfigError("unknown strategy kind: " + name);
}

inline void validate_strategy(const StrategyKind& k) {
  if (k.beta < 0.0) throw ConfigError("strategy: beta must be >= 0");
}

// Score-based strategies rank candidates; the rest select via embeddings.
inline bool is_score_based(StrategyId id) {
  switch (id) {
    case StrategyId::Coreset:
    case StrategyId::Lcmd:
    case StrategyId::Badge:
      return false;
    default:
      return true;
  }
}

// v_i -> (v_i - min) / (max - min + 1e-6). Outputs land in [0, 1); a constant
// list maps to all zeros through the epsilon denominator.
inline std::vector<double> minmax_normalize(std::span<const double> values) {
  if (values.empty()) throw ConfigError("minmax_normalize: empty list");
  const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
  const double lo = *lo_it;
  const double denom = *hi_it - lo + 1e-6;
  std::vector<double> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) out[i] = (values[i] - lo) / denom;
  return out;
}

// Everything the acquisition strategies consume about the current unlabelled
// pool. Normalisation is computed over this pool only.
struct PoolStats {
  std::vector<PredictiveSummary> summaries;
  std::vector<std::vector<double>> embeddings;
  std::vector<double> epi_norm;
  std::vector<double> ale_norm;
};

inline PoolStats compute_pool_stats(const Ensemble& ens, std::span<const std::vector<double>> pool_x) {
  PoolStats stats;
  stats.summaries.reserve(pool_x.size());
  stats.embeddings.reserve(pool_x.size());
  std::vector<double> epi(pool_x.size()), ale(pool_x.size());
  for (std::size_t i = 0; i < pool_x.size(); ++i) {
    stats.summaries.push_back(predict(ens, pool_x[i]));
    stats.embeddings.push_back(embed(ens, pool_x[i]));
    epi[i] = stats.summaries[i].epi;
    ale[i] = stats.summaries[i].ale;
  }
  if (!pool_x.empty()) {
    stats.epi_norm = minmax_normalize(epi);
    stats.ale_norm = minmax_normalize(ale);
  }
  return stats;
}

// One finite score per candidate. Random draws from `rng`; geometric
// strategies have no pointwise score and are rejected here.
inline std::vector<double> score(const StrategyKind& strategy, const PoolStats& stats, Rng* rng = nullptr) {
  validate_strategy(strategy);
  const std::size_t n = stats.summaries.size();
  std::vector<double> out(n);
  switch (strategy.id) {
    case StrategyId::Random: {
      if (rng == nullptr) throw ConfigError("score: Random needs a seeded rng");
      for (double& v : out) v = rng->uniform();
      break;
    }
    case StrategyId::Confidence:
      for (std::size_t i = 0; i < n; ++i) out[i] = 1.0 - stats.ale_norm[i];
      break;
    case StrategyId::Ale:
      for (std::size_t i = 0; i < n; ++i) out[i] = stats.summaries[i].ale;
      break;
    case StrategyId::Alm:
      for (std::size_t i = 0; i < n; ++i) out[i] = stats.summaries[i].epi + stats.summaries[i].ale;
      break;
    case StrategyId::Qbc:
      for (std::size_t i = 0; i < n; ++i) out[i] = stats.summaries[i].epi;
      break;
    case StrategyId::Bald:
      // 1/2 log(epi + ale) - 1/(2M) sum_m log sigma2_m
      for (std::size_t i = 0; i < n; ++i) {
        const PredictiveSummary& s = stats.summaries[i];
        double mean_log = 0.0;
        for (const auto& [mu, s2] : s.per_member) mean_log += std::log(s2);
        mean_log /= static_cast<double>(s.per_member.size());
        out[i] = 0.5 * std::log(s.epi + s.ale) - 0.5 * mean_log;
      }
      break;
    case StrategyId::Caal:
      // epistemic potential gated by confidence: u_epi * (1 - u_ale)^beta
      for (std::size_t i = 0; i < n; ++i) {
        out[i] = stats.epi_norm[i] * std::pow(1.0 - stats.ale_norm[i], strategy.beta);
      }
      break;
    default:
      throw ConfigError(std::string("score: strategy '") + strategy_name(strategy.id) +
                        "' selects via embeddings, not scores");
  }
  return out;
}

// Indices of the B largest scores, ties broken by lowest index. Returned in
// selection order (descending score).
inline std::vector<std::size_t> select_top_b(std::span<const double> scores, std::size_t b) {
  if (b > scores.size()) {
    throw ConfigError("select_top_b: budget " + std::to_string(b) + " exceeds pool size " +
                      std::to_string(scores.size()));
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t c) {
    if (scores[a] != scores[c]) return scores[a] > scores[c];
    return a < c;
  });
  order.resize(b);
  return order;
}

namespace detail {
inline double sq_dist(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return acc;
}
}  // namespace detail

// Greedy farthest-first traversal. Covered set starts as the labelled
// embeddings; each pick maximises the distance to the nearest covered point,
// ties broken by lowest pool index. With nothing covered the first pick is
// index 0.
inline std::vector<std::size_t> kcenter_greedy(std::span<const std::vector<double>> pool,
                                               std::span<const std::vector<double>> labelled,
                                               std::size_t b) {
  if (pool.empty()) throw ConfigError("kcenter_greedy: pool is empty");
  if (b > pool.size()) {
    throw ConfigError("kcenter_greedy: budget " + std::to_string(b) + " exceeds pool size " +
                      std::to_string(pool.size()));
  }
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> nearest(pool.size(), kInf);
  for (std::size_t i = 0; i < pool.size(); ++i) {
    for (const auto& l : labelled) nearest[i] = std::min(nearest[i], detail::sq_dist(pool[i], l));
  }
  std::vector<bool> taken(pool.size(), false);
  std::vector<std::size_t> picks;
  picks.reserve(b);
  for (std::size_t round = 0; round < b; ++round) {
    std::size_t best = pool.size();
    double best_dist = -kInf;
    for (std::size_t i = 0; i < pool.size(); ++i) {
      if (taken[i]) continue;
      // nearest[i] == inf means nothing is covered yet: lowest index wins.
      const double d = labelled.empty() && picks.empty() ? 0.0 : nearest[i];
      if (best == pool.size() || d > best_dist) {
        best = i;
        best_dist = d;
      }
    }
    taken[best] = true;
    picks.push_back(best);
    for (std::size_t i = 0; i < pool.size(); ++i) {
      if (!taken[i]) nearest[i] = std::min(nearest[i], detail::sq_dist(pool[i], pool[best]));
    }
  }
  return picks;
}

struct KMeansResult {
  std::vector<std::size_t> assignments;
  std::vector<std::vector<double>> centroids;
};

// Lloyd iterations with k-means++ seeding; at most 100 iterations or until
// the largest centroid shift drops below 1e-6. Empty clusters are reseeded at
// the point farthest from its assigned centroid.
inline KMeansResult kmeans(std::span<const std::vector<double>> points, std::size_t k,
                           std::uint64_t seed) {
  const std::size_t n = points.size();
  if (k == 0) throw ConfigError("kmeans: k must be >= 1");
  if (k > n) {
    throw ConfigError("kmeans: k " + std::to_string(k) + " exceeds point count " + std::to_string(n));
  }
  Rng rng(seed);

  // k-means++ seeding
  std::vector<std::size_t> centers;
  std::vector<bool> chosen(n, false);
  auto pick_lowest_unchosen = [&]() {
    for (std::size_t i = 0; i < n; ++i) {
      if (!chosen[i]) return i;
    }
    return std::size_t{0};
  };
  centers.push_back(rng.index(n));
  chosen[centers[0]] = true;
  std::vector<double> d2(n);
  for (std::size_t i = 0; i < n; ++i) d2[i] = detail::sq_dist(points[i], points[centers[0]]);
  while (centers.size() < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (!chosen[i]) total += d2[i];
    }
    std::size_t next;
    if (total > 0.0) {
      const double u = rng.uniform() * total;
      double acc = 0.0;
      next = pick_lowest_unchosen();
      for (std::size_t i = 0; i < n; ++i) {
        if (chosen[i]) continue;
        acc += d2[i];
        if (acc > u) {
          next = i;
          break;
        }
      }
    } else {
      next = pick_lowest_unchosen();  // all remaining points coincide with a center
    }
    chosen[next] = true;
    centers.push_back(next);
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], detail::sq_dist(points[i], points[next]));
    }
  }

  KMeansResult result;
  result.centroids.reserve(k);
  for (std::size_t c : centers) result.centroids.push_back(points[c]);
  result.assignments.assign(n, 0);
  const std::size_t dim = points.empty() ? 0 : points[0].size();

  for (int iter = 0; iter < 100; ++iter) {
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t best = 0;
      double best_d = detail::sq_dist(points[i], result.centroids[0]);
      for (std::size_t c = 1; c < k; ++c) {
        const double d = detail::sq_dist(points[i], result.centroids[c]);
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      result.assignments[i] = best;
    }

    std::vector<std::vector<double>> sums(k, std::vector<double>(dim, 0.0));
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t c = result.assignments[i];
      ++counts[c];
      for (std::size_t j = 0; j < dim; ++j) sums[c][j] += points[i][j];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] > 0) {
        for (std::size_t j = 0; j < dim; ++j) sums[c][j] /= static_cast<double>(counts[c]);
      } else {
        // reseed at the point farthest from its own centroid, lowest index on ties
        std::size_t far = 0;
        double far_d = -1.0;
        for (std::size_t i = 0; i < n; ++i) {
          const double d = detail::sq_dist(points[i], result.centroids[result.assignments[i]]);
          if (d > far_d) {
            far_d = d;
            far = i;
          }
        }
        sums[c] = points[far];
      }
    }

    double shift = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      shift = std::max(shift, std::sqrt(detail::sq_dist(sums[c], result.centroids[c])));
    }
    result.centroids = std::move(sums);
    if (shift < 1e-6) break;
  }

  // Final assignment against the converged centroids.
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t best = 0;
    double best_d = detail::sq_dist(points[i], result.centroids[0]);
    for (std::size_t c = 1; c < k; ++c) {
      const double d = detail::sq_dist(points[i], result.centroids[c]);
      if (d < best_d) {
        best_d = d;
        best = c;
      }
    }
    result.assignments[i] = best;
  }
  return result;
}

// One representative per cluster: the assigned point nearest to its centroid,
// lowest index on ties. Exact geometric ties (a two-point cluster puts both
// members equidistant from the centroid) are recognised up to 1e-12 relative
// so rounding cannot flip the tie-break under uniform rescaling.
inline std::vector<std::size_t> nearest_to_centroids(std::span<const std::vector<double>> points,
                                                     const KMeansResult& km) {
  const std::size_t k = km.centroids.size();
  std::vector<std::size_t> rep(k, points.size());
  std::vector<double> rep_d(k, std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < points.size(); ++i) {
    const std::size_t c = km.assignments[i];
    const double d = detail::sq_dist(points[i], km.centroids[c]);
    if (rep[c] == points.size() || d < rep_d[c] - 1e-12 * std::max(d, rep_d[c])) {
      rep_d[c] = d;
      rep[c] = i;
    }
  }
  std::vector<std::size_t> out;
  out.reserve(k);
  for (std::size_t c = 0; c < k; ++c) {
    if (rep[c] < points.size()) out.push_back(rep[c]);
  }
  return out;
}

// LCMD-style selection: k-means with k = B, then cluster representatives.
// Coincident points can collapse clusters; the result is topped up by lowest
// index so the selection always has exactly B members.
inline std::vector<std::size_t> select_lcmd(std::span<const std::vector<double>> points, std::size_t b,
                                            std::uint64_t seed) {
  std::vector<std::size_t> reps = nearest_to_centroids(points, kmeans(points, b, seed));
  if (reps.size() < b) {
    std::vector<bool> in(points.size(), false);
    for (std::size_t r : reps) in[r] = true;
    for (std::size_t i = 0; i < points.size() && reps.size() < b; ++i) {
      if (!in[i]) {
        in[i] = true;
        reps.push_back(i);
      }
    }
  }
  return reps;
}

// BADGE proxy: embeddings weighted by sqrt(epistemic uncertainty), clustered
// with k-means++ into B groups, representatives returned.
inline std::vector<std::size_t> badge_select(std::span<const std::vector<double>> embeddings,
                                             std::span<const double> epi, std::size_t b,
                                             std::uint64_t seed) {
  if (embeddings.size() != epi.size()) throw ConfigError("badge_select: size mismatch");
  std::vector<std::vector<double>> g(embeddings.size());
  for (std::size_t i = 0; i < embeddings.size(); ++i) {
    g[i] = embeddings[i];
    const double w = std::sqrt(std::max(0.0, epi[i]));
    for (double& v : g[i]) v *= w;
  }
  return select_lcmd(g, b, seed);
}

}  // namespace caal
