#pragma once

#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "caal/common.hpp"
#include "caal/loop.hpp"

namespace caal {

// JSON experiment configs are the primary interface: sweeps and compare runs
// stay reproducible artifacts. Unknown keys are rejected so that typos fail
// loudly instead of silently using defaults.

namespace detail {

using nlohmann::json;

inline void check_keys(const json& j, std::initializer_list<const char*> allowed,
                       const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : allowed) {
      if (it.key() == k) {
        ok = true;
        break;
      }
    }
    if (!ok) throw ConfigError("config: unknown key '" + it.key() + "' in " + where);
  }
}

template <class T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: bad value for '") + key + "': " + e.what());
  }
}

template <class T>
T require(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) throw ConfigError("config: missing key '" + std::string(key) + "' in " + where);
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: bad value for '") + key + "': " + e.what());
  }
}

}  // namespace detail

inline ExperimentConfig parse_experiment_config(const nlohmann::json& j) {
  using detail::get_or;
  using detail::require;
  detail::check_keys(j, {"data", "model", "objective", "strategy", "loop", "output_dir"}, "root");

  ExperimentConfig cfg;

  const auto& data = j.at("data");
  detail::check_keys(data,
                     {"source", "family", "n", "seed", "group_size", "noise_base", "noise_band",
                      "path", "features", "target", "group_column", "transform", "val_fraction",
                      "test_fraction", "initial_labelled"},
                     "data");
  const std::string source = get_or<std::string>(data, "source", "synthetic");
  if (source == "synthetic") {
    cfg.data.from_csv = false;
    cfg.data.synthetic.family = parse_synthetic(get_or<std::string>(data, "family", "hetero_sine_1d"));
    cfg.data.synthetic.n = require<std::size_t>(data, "n", "data");
    cfg.data.synthetic.seed = get_or<std::uint64_t>(data, "seed", 0);
    cfg.data.synthetic.group_size = get_or<std::size_t>(data, "group_size", 25);
    cfg.data.synthetic.noise_base = get_or<double>(data, "noise_base", 0.05);
    cfg.data.synthetic.noise_band = get_or<double>(data, "noise_band", 0.45);
  } else if (source == "csv") {
    cfg.data.from_csv = true;
    cfg.data.csv_path = require<std::string>(data, "path", "data");
    cfg.data.schema.feature_columns = require<std::vector<std::string>>(data, "features", "data");
    cfg.data.schema.target_column = require<std::string>(data, "target", "data");
    cfg.data.schema.group_column = get_or<std::string>(data, "group_column", "");
    cfg.data.schema.transform = parse_transform(get_or<std::string>(data, "transform", "identity"));
  } else {
    throw ConfigError("config: data.source must be 'synthetic' or 'csv'");
  }
  cfg.split.val_fraction = get_or<double>(data, "val_fraction", 0.1);
  cfg.split.test_fraction = get_or<double>(data, "test_fraction", 0.1);
  cfg.split.initial_labelled = require<std::size_t>(data, "initial_labelled", "data");

  const auto& model = j.at("model");
  detail::check_keys(model, {"trunk", "head_hidden", "members", "schedule"}, "model");
  cfg.net.trunk_widths = get_or<std::vector<std::size_t>>(model, "trunk", {64, 64});
  cfg.net.head_hidden = get_or<std::size_t>(model, "head_hidden", 0);
  cfg.members = get_or<std::size_t>(model, "members", 5);
  if (model.contains("schedule")) {
    const auto& s = model.at("schedule");
    detail::check_keys(s,
                       {"max_epochs", "batch_size", "lr0", "plateau_patience", "lr_factor", "min_lr",
                        "early_stop_patience", "weight_decay"},
                       "model.schedule");
    cfg.schedule.max_epochs = get_or<int>(s, "max_epochs", 100);
    cfg.schedule.batch_size = get_or<int>(s, "batch_size", 128);
    cfg.schedule.lr0 = get_or<double>(s, "lr0", 1e-4);
    cfg.schedule.plateau_patience = get_or<int>(s, "plateau_patience", 10);
    cfg.schedule.lr_factor = get_or<double>(s, "lr_factor", 0.5);
    cfg.schedule.min_lr = get_or<double>(s, "min_lr", 1e-7);
    cfg.schedule.early_stop_patience = get_or<int>(s, "early_stop_patience", 20);
    cfg.schedule.weight_decay = get_or<double>(s, "weight_decay", 1e-4);
  }

  if (j.contains("objective")) {
    const auto& o = j.at("objective");
    detail::check_keys(o, {"kind", "lambda", "beta_nll"}, "objective");
    cfg.objective.id = parse_objective_id(get_or<std::string>(o, "kind", "decoupled"));
    cfg.objective.lambda = get_or<double>(o, "lambda", 0.1);
    cfg.objective.beta_nll = get_or<double>(o, "beta_nll", 0.5);
  }

  if (j.contains("strategy")) {
    const auto& s = j.at("strategy");
    detail::check_keys(s, {"kind", "beta"}, "strategy");
    cfg.strategy.id = parse_strategy_id(get_or<std::string>(s, "kind", "caal"));
    cfg.strategy.beta = get_or<double>(s, "beta", 1.0);
  }

  const auto& l = j.at("loop");
  detail::check_keys(l,
                     {"rounds", "batch", "T", "B", "group_level", "base_seed", "until_exhausted",
                      "dump_scores"},
                     "loop");
  // T/B are accepted as synonyms for rounds/batch
  if (l.contains("T") && l.contains("rounds")) throw ConfigError("config: give loop.T or loop.rounds, not both");
  if (l.contains("B") && l.contains("batch")) throw ConfigError("config: give loop.B or loop.batch, not both");
  cfg.loop.rounds = l.contains("T") ? require<int>(l, "T", "loop") : require<int>(l, "rounds", "loop");
  cfg.loop.batch = l.contains("B") ? require<std::size_t>(l, "B", "loop")
                                   : require<std::size_t>(l, "batch", "loop");
  cfg.loop.group_level = get_or<bool>(l, "group_level", false);
  cfg.loop.base_seed = get_or<std::uint64_t>(l, "base_seed", 0);
  cfg.loop.until_exhausted = get_or<bool>(l, "until_exhausted", false);
  cfg.loop.dump_scores = get_or<bool>(l, "dump_scores", false);

  cfg.output_dir = get_or<std::string>(j, "output_dir", "");

  // Fail on inconsistencies now, before any run starts.
  validate_experiment(cfg);
  return cfg;
}

struct LoadedConfig {
  ExperimentConfig experiment;
  nlohmann::json raw;
  std::uint64_t hash = 0;  // over the canonical serialization, for provenance
};

inline LoadedConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("config: cannot open " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  LoadedConfig out;
  try {
    out.raw = nlohmann::json::parse(buf.str());
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: malformed JSON in ") + path + ": " + e.what());
  }
  out.experiment = parse_experiment_config(out.raw);
  out.hash = fnv1a(out.raw.dump());
  return out;
}

}  // namespace caal
