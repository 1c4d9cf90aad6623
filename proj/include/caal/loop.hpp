#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "caal/acquisition.hpp"
#include "caal/bench.hpp"
#include "caal/common.hpp"
#include "caal/data.hpp"
#include "caal/ensemble.hpp"
#include "caal/rng.hpp"

namespace caal {

// ---------------------------------------------------------------------------
// Oracle: y = f(x) + eps, eps ~ N(0, sigma_data(x)^2), or a lookup table of
// already-realized labels. Each noisy draw is keyed on (seed, query index),
// so recreating the oracle and replaying the same query sequence reproduces
// the same labels bit for bit.
// ---------------------------------------------------------------------------

class Oracle {
 public:
  static constexpr std::size_t kNoRow = static_cast<std::size_t>(-1);

  static Oracle synthetic(std::function<double(std::span<const double>)> f,
                          std::function<double(std::span<const double>)> sigma, std::uint64_t seed) {
    Oracle o;
    o.f_ = std::move(f);
    o.sigma_ = std::move(sigma);
    o.seed_ = seed;
    return o;
  }

  // Synthetic oracle whose noise-free values are tabulated per dataset row.
  static Oracle synthetic_table(std::vector<double> noise_free,
                                std::function<double(std::span<const double>)> sigma,
                                std::uint64_t seed) {
    Oracle o;
    o.table_ = std::move(noise_free);
    o.sigma_ = std::move(sigma);
    o.seed_ = seed;
    return o;
  }

  static Oracle lookup(std::vector<double> labels) {
    Oracle o;
    o.table_ = std::move(labels);
    o.is_lookup_ = true;
    return o;
  }

  bool is_lookup() const { return is_lookup_; }

  double query(std::span<const double> x, std::size_t row = kNoRow) {
    double base;
    if (f_) {
      base = f_(x);
    } else {
      if (row == kNoRow || row >= table_.size()) {
        throw DataError("oracle: no stored label for row " +
                        (row == kNoRow ? std::string("<none>") : std::to_string(row)));
      }
      base = table_[row];
    }
    if (is_lookup_) return base;  // noise already realized in the stored label
    const double sd = sigma_ ? sigma_(x) : 0.0;
    if (sd < 0.0) throw DataError("oracle: sigma_data must be >= 0");
    const double g = Rng(derive_seed(seed_, static_cast<std::uint64_t>(queries_++))).normal();
    return base + sd * g;
  }

  long queries_made() const { return queries_; }

 private:
  std::function<double(std::span<const double>)> f_;
  std::function<double(std::span<const double>)> sigma_;
  std::vector<double> table_;
  bool is_lookup_ = false;
  std::uint64_t seed_ = 0;
  long queries_ = 0;
};

// ---------------------------------------------------------------------------
// Group (scenario) aggregation
// ---------------------------------------------------------------------------

struct GroupIndex {
  std::vector<int> group_of;                       // per candidate position
  std::vector<int> group_ids;                      // unique, first-appearance order
  std::vector<std::vector<std::size_t>> members;   // candidate positions per group
};

inline GroupIndex build_group_index(std::span<const int> group_of) {
  GroupIndex idx;
  idx.group_of.assign(group_of.begin(), group_of.end());
  for (std::size_t i = 0; i < group_of.size(); ++i) {
    const int g = group_of[i];
    std::size_t slot = idx.group_ids.size();
    for (std::size_t k = 0; k < idx.group_ids.size(); ++k) {
      if (idx.group_ids[k] == g) {
        slot = k;
        break;
      }
    }
    if (slot == idx.group_ids.size()) {
      idx.group_ids.push_back(g);
      idx.members.emplace_back();
    }
    idx.members[slot].push_back(i);
  }
  return idx;
}

// Group score = arithmetic mean of member sample scores.
inline std::vector<double> aggregate_group_scores(std::span<const double> sample_scores,
                                                  const GroupIndex& idx) {
  if (sample_scores.size() != idx.group_of.size()) {
    throw DataError("aggregate_group_scores: score/index length mismatch");
  }
  std::vector<double> out(idx.group_ids.size(), 0.0);
  for (std::size_t g = 0; g < idx.members.size(); ++g) {
    if (idx.members[g].empty()) throw DataError("aggregate_group_scores: empty group");
    for (std::size_t pos : idx.members[g]) out[g] += sample_scores[pos];
    out[g] /= static_cast<double>(idx.members[g].size());
  }
  return out;
}

// Group embedding = mean of member sample embeddings.
inline std::vector<std::vector<double>> aggregate_group_embeddings(
    std::span<const std::vector<double>> embeddings, const GroupIndex& idx) {
  std::vector<std::vector<double>> out;
  out.reserve(idx.members.size());
  for (const auto& members : idx.members) {
    if (members.empty()) throw DataError("aggregate_group_embeddings: empty group");
    std::vector<double> acc(embeddings[members[0]].size(), 0.0);
    for (std::size_t pos : members) {
      for (std::size_t j = 0; j < acc.size(); ++j) acc[j] += embeddings[pos][j];
    }
    for (double& v : acc) v /= static_cast<double>(members.size());
    out.push_back(std::move(acc));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Experiment configuration
// ---------------------------------------------------------------------------

struct SplitConfig {
  double val_fraction = 0.1;
  double test_fraction = 0.1;
  std::size_t initial_labelled = 10;  // in selection units
};

struct DataSourceConfig {
  bool from_csv = false;
  SyntheticSpec synthetic;
  std::string csv_path;
  CsvSchema schema;
};

struct LoopConfig {
  int rounds = 10;         // T
  std::size_t batch = 10;  // B, in selection units
  bool group_level = false;
  std::uint64_t base_seed = 0;
  bool until_exhausted = false;
  bool dump_scores = false;
};

struct ExperimentConfig {
  DataSourceConfig data;
  SplitConfig split;
  NetConfig net;
  std::size_t members = 5;
  TrainSchedule schedule;
  ObjectiveKind objective;
  StrategyKind strategy;
  LoopConfig loop;
  std::string output_dir;  // used for per-round score dumps only
};

struct ExperimentResult {
  std::vector<RoundRecord> records;
  LearningCurve curve;
  Ensemble final_ensemble;
  std::vector<std::string> score_dump_paths;
};

namespace detail {

struct LoopState {
  std::vector<std::size_t> labelled;  // dataset rows, insertion order
  std::vector<std::size_t> pool;      // dataset rows, ascending
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
  std::vector<double> realized;       // labels by row; NaN = never queried
};

inline std::vector<Sample> make_samples(const Dataset& ds, const Standardizer& std_r,
                                        std::span<const std::size_t> rows,
                                        const std::vector<double>& labels) {
  std::vector<Sample> out;
  out.reserve(rows.size());
  for (std::size_t r : rows) {
    out.push_back({std_r.apply(ds.row(r)), labels[r]});
  }
  return out;
}

inline void write_score_dump(const std::string& path, const Dataset& ds,
                             std::span<const std::size_t> pool, const PoolStats& stats,
                             std::span<const double> sample_scores,
                             const std::vector<bool>& selected) {
  std::ofstream out(path);
  if (!out) throw IoError("score dump: cannot open " + path);
  out << "candidate_id,group_id,epi,ale,epi_norm,ale_norm,score,selected\n";
  for (std::size_t i = 0; i < pool.size(); ++i) {
    out << pool[i] << ',' << ds.group_id[pool[i]] << ',' << format_double(stats.summaries[i].epi)
        << ',' << format_double(stats.summaries[i].ale) << ',' << format_double(stats.epi_norm[i])
        << ',' << format_double(stats.ale_norm[i]) << ','
        << format_double(sample_scores.empty() ? 0.0 : sample_scores[i]) << ','
        << (selected[i] ? 1 : 0) << '\n';
  }
  if (!out) throw IoError("score dump: write failed for " + path);
}

}  // namespace detail

inline void validate_experiment(const ExperimentConfig& cfg) {
  validate_net_config(cfg.net);
  validate_schedule(cfg.schedule);
  validate_objective(cfg.objective);
  validate_strategy(cfg.strategy);
  if (cfg.members < 1) throw ConfigError("experiment: members must be >= 1");
  if (cfg.loop.rounds < 0) throw ConfigError("experiment: rounds must be >= 0");
  if (cfg.loop.batch < 1) throw ConfigError("experiment: batch must be >= 1");
  if (cfg.split.initial_labelled < 1) throw ConfigError("experiment: initial_labelled must be >= 1");
  if (!(cfg.split.val_fraction > 0.0 && cfg.split.test_fraction > 0.0 &&
        cfg.split.val_fraction + cfg.split.test_fraction < 1.0)) {
    throw ConfigError("experiment: val/test fractions must be positive and sum below 1");
  }
  if (!cfg.data.from_csv) validate_synthetic_spec(cfg.data.synthetic);
}

// Pool-based acquisition driver. Per round: score the pool with the current
// ensemble, select B units, query the oracle, apply the set update, retrain
// from scratch on the grown labelled set (member seeds hashed from
// (base_seed, round, member)), evaluate on the fixed test set. Round 0
// evaluates the initial model before any querying.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  validate_experiment(cfg);
  const std::uint64_t base = cfg.loop.base_seed;

  Dataset ds;
  std::function<double(std::span<const double>)> sigma;
  if (cfg.data.from_csv) {
    ds = load_csv(cfg.data.csv_path, cfg.data.schema);
  } else {
    SyntheticData syn = generate_synthetic(cfg.data.synthetic);
    ds = std::move(syn.data);
    sigma = std::move(syn.sigma_data);
  }

  // Scenario-level split: shuffle whole groups into test/val/train.
  const GroupIndex all_groups = build_group_index(ds.group_id);
  const std::size_t n_groups = all_groups.group_ids.size();
  std::vector<std::size_t> group_order(n_groups);
  std::iota(group_order.begin(), group_order.end(), 0);
  Rng split_rng(derive_seed(base, 0x73706c6974ull));  // "split"
  split_rng.shuffle(group_order);

  const std::size_t n_test = std::max<std::size_t>(1, static_cast<std::size_t>(
      std::llround(cfg.split.test_fraction * static_cast<double>(n_groups))));
  const std::size_t n_val = std::max<std::size_t>(1, static_cast<std::size_t>(
      std::llround(cfg.split.val_fraction * static_cast<double>(n_groups))));
  if (n_test + n_val >= n_groups) throw ConfigError("experiment: not enough groups for splits");

  detail::LoopState st;
  st.realized.assign(ds.n, std::numeric_limits<double>::quiet_NaN());
  std::vector<std::size_t> train_rows;
  for (std::size_t k = 0; k < n_groups; ++k) {
    const auto& rows = all_groups.members[group_order[k]];
    auto* dest = k < n_test ? &st.test : (k < n_test + n_val ? &st.val : &train_rows);
    dest->insert(dest->end(), rows.begin(), rows.end());
  }
  std::sort(st.test.begin(), st.test.end());
  std::sort(st.val.begin(), st.val.end());

  // Initial labelled set: the first initial_labelled selection units of the
  // (group-shuffled) training rows.
  if (cfg.loop.group_level) {
    const GroupIndex train_groups = build_group_index([&] {
      std::vector<int> ids;
      for (std::size_t r : train_rows) ids.push_back(ds.group_id[r]);
      return ids;
    }());
    if (cfg.split.initial_labelled >= train_groups.group_ids.size()) {
      throw ConfigError("experiment: initial_labelled consumes the whole training pool");
    }
    for (std::size_t g = 0; g < train_groups.group_ids.size(); ++g) {
      auto* dest = g < cfg.split.initial_labelled ? &st.labelled : &st.pool;
      for (std::size_t pos : train_groups.members[g]) dest->push_back(train_rows[pos]);
    }
  } else {
    if (cfg.split.initial_labelled >= train_rows.size()) {
      throw ConfigError("experiment: initial_labelled consumes the whole training pool");
    }
    st.labelled.assign(train_rows.begin(), train_rows.begin() + cfg.split.initial_labelled);
    st.pool.assign(train_rows.begin() + cfg.split.initial_labelled, train_rows.end());
  }
  std::sort(st.labelled.begin(), st.labelled.end());
  std::sort(st.pool.begin(), st.pool.end());

  const std::size_t pool_units_at_start =
      cfg.loop.group_level ? build_group_index([&] {
        std::vector<int> ids;
        for (std::size_t r : st.pool) ids.push_back(ds.group_id[r]);
        return ids;
      }()).group_ids.size()
                           : st.pool.size();
  if (!cfg.loop.until_exhausted && cfg.loop.batch > pool_units_at_start) {
    throw ConfigError("experiment: batch exceeds the initial pool size");
  }

  Oracle oracle = cfg.data.from_csv
                      ? Oracle::lookup(ds.targets)
                      : Oracle::synthetic_table(ds.targets, sigma, derive_seed(base, 0x6f7261636cull));

  auto realize = [&](std::span<const std::size_t> rows) {
    for (std::size_t r : rows) st.realized[r] = oracle.query(ds.row(r), r);
  };
  realize(st.labelled);
  realize(st.val);

  // Test targets in original space; synthetic test labels are noise-free.
  std::vector<double> test_true;
  test_true.reserve(st.test.size());
  for (std::size_t r : st.test) test_true.push_back(inverse_transform(ds.target_transform, ds.targets[r]));

  const std::size_t total_train_rows = st.labelled.size() + st.pool.size();

  ExperimentResult result;
  if (cfg.loop.dump_scores && !cfg.output_dir.empty()) {
    std::filesystem::create_directories(cfg.output_dir);
  }

  Standardizer std_r;
  Ensemble ens;
  auto retrain_and_evaluate = [&](int round, std::size_t budget_used, double mean_epi,
                                  double mean_ale) {
    std_r.fit(ds, st.labelled);
    const std::vector<Sample> train_s = detail::make_samples(ds, std_r, st.labelled, st.realized);
    const std::vector<Sample> val_s = detail::make_samples(ds, std_r, st.val, st.realized);

    EnsembleConfig ec{cfg.net, cfg.members, cfg.objective, cfg.schedule};
    std::vector<std::uint64_t> seeds(cfg.members);
    const std::uint64_t round_base = derive_seed(base, 0x747261696eull);  // "train"
    for (std::size_t m = 0; m < cfg.members; ++m) {
      seeds[m] = derive_seed(round_base, static_cast<std::uint64_t>(round), m);
    }
    ens = train_ensemble(train_s, val_s, ec, seeds);

    std::vector<double> pred;
    pred.reserve(st.test.size());
    for (std::size_t r : st.test) {
      pred.push_back(inverse_transform(ds.target_transform, predict(ens, std_r.apply(ds.row(r))).mean));
    }
    RoundRecord rec;
    rec.round = round;
    rec.n_labelled = st.labelled.size();
    rec.budget_used = budget_used;
    rec.mean_epi_selected = mean_epi;
    rec.mean_ale_selected = mean_ale;
    rec.test_r2 = r_squared(test_true, pred);
    rec.test_rmse = rmse(test_true, pred);
    result.records.push_back(rec);
  };

  const double nan = std::numeric_limits<double>::quiet_NaN();
  retrain_and_evaluate(0, 0, nan, nan);

  for (int round = 1; cfg.loop.until_exhausted || round <= cfg.loop.rounds; ++round) {
    if (st.pool.empty()) break;

    // Pool statistics under the current ensemble.
    std::vector<std::vector<double>> pool_x;
    pool_x.reserve(st.pool.size());
    for (std::size_t r : st.pool) pool_x.push_back(std_r.apply(ds.row(r)));
    const PoolStats stats = compute_pool_stats(ens, pool_x);

    std::vector<int> pool_groups;
    pool_groups.reserve(st.pool.size());
    for (std::size_t r : st.pool) pool_groups.push_back(ds.group_id[r]);
    const GroupIndex grp = build_group_index(pool_groups);
    const std::size_t units = cfg.loop.group_level ? grp.group_ids.size() : st.pool.size();
    const std::size_t b = std::min<std::size_t>(cfg.loop.batch, units);

    std::vector<double> sample_scores;
    std::vector<std::size_t> unit_picks;
    const std::uint64_t round_seed = derive_seed(base, 0x61637175ull, static_cast<std::uint64_t>(round));
    if (is_score_based(cfg.strategy.id)) {
      Rng acq_rng(round_seed);
      sample_scores = score(cfg.strategy, stats, &acq_rng);
      if (cfg.loop.group_level) {
        unit_picks = select_top_b(aggregate_group_scores(sample_scores, grp), b);
      } else {
        unit_picks = select_top_b(sample_scores, b);
      }
    } else {
      std::vector<std::vector<double>> unit_embeddings =
          cfg.loop.group_level ? aggregate_group_embeddings(stats.embeddings, grp) : stats.embeddings;
      if (cfg.strategy.id == StrategyId::Coreset) {
        std::vector<std::vector<double>> labelled_emb;
        labelled_emb.reserve(st.labelled.size());
        for (std::size_t r : st.labelled) labelled_emb.push_back(embed(ens, std_r.apply(ds.row(r))));
        if (cfg.loop.group_level) {
          std::vector<int> lab_groups;
          for (std::size_t r : st.labelled) lab_groups.push_back(ds.group_id[r]);
          labelled_emb = aggregate_group_embeddings(labelled_emb, build_group_index(lab_groups));
        }
        unit_picks = kcenter_greedy(unit_embeddings, labelled_emb, b);
      } else if (cfg.strategy.id == StrategyId::Lcmd) {
        unit_picks = select_lcmd(unit_embeddings, b, round_seed);
      } else {
        std::vector<double> epi(stats.summaries.size());
        for (std::size_t i = 0; i < epi.size(); ++i) epi[i] = stats.summaries[i].epi;
        std::vector<double> unit_epi =
            cfg.loop.group_level ? aggregate_group_scores(epi, grp) : std::move(epi);
        unit_picks = badge_select(unit_embeddings, unit_epi, b, round_seed);
      }
    }

    // Expand selected units to dataset rows.
    std::vector<std::size_t> picked_positions;  // positions into st.pool
    if (cfg.loop.group_level) {
      for (std::size_t u : unit_picks) {
        picked_positions.insert(picked_positions.end(), grp.members[u].begin(), grp.members[u].end());
      }
    } else {
      picked_positions = unit_picks;
    }
    std::sort(picked_positions.begin(), picked_positions.end());

    double mean_epi = 0.0, mean_ale = 0.0;
    std::vector<bool> selected_flag(st.pool.size(), false);
    std::vector<std::size_t> picked_rows;
    picked_rows.reserve(picked_positions.size());
    for (std::size_t pos : picked_positions) {
      selected_flag[pos] = true;
      picked_rows.push_back(st.pool[pos]);
      mean_epi += stats.summaries[pos].epi;
      mean_ale += stats.summaries[pos].ale;
    }
    mean_epi /= static_cast<double>(picked_positions.size());
    mean_ale /= static_cast<double>(picked_positions.size());

    if (cfg.loop.dump_scores && !cfg.output_dir.empty()) {
      char name[32];
      std::snprintf(name, sizeof(name), "round_%03d_scores.csv", round);
      const std::string path = (std::filesystem::path(cfg.output_dir) / name).string();
      detail::write_score_dump(path, ds, st.pool, stats, sample_scores, selected_flag);
      result.score_dump_paths.push_back(path);
    }

    // Set update: query the oracle for every selected row, then move rows.
    realize(picked_rows);
    st.labelled.insert(st.labelled.end(), picked_rows.begin(), picked_rows.end());
    std::sort(st.labelled.begin(), st.labelled.end());
    std::vector<std::size_t> next_pool;
    next_pool.reserve(st.pool.size() - picked_rows.size());
    for (std::size_t pos = 0; pos < st.pool.size(); ++pos) {
      if (!selected_flag[pos]) next_pool.push_back(st.pool[pos]);
    }
    st.pool = std::move(next_pool);

    retrain_and_evaluate(round, unit_picks.size(), mean_epi, mean_ale);
    if (!cfg.loop.until_exhausted && round >= cfg.loop.rounds) break;
  }

  result.curve.records = result.records;
  for (const RoundRecord& r : result.records) {
    result.curve.budget_fraction.push_back(static_cast<double>(r.n_labelled) /
                                           static_cast<double>(total_train_rows));
  }
  result.final_ensemble = std::move(ens);
  return result;
}

}  // namespace caal
