#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "caal/config.hpp"
#include "caal/loop.hpp"

namespace caal {
namespace cli {

inline const char* error_kind(int code) {
  switch (code) {
    case kExitConfig: return "config";
    case kExitData: return "data";
    case kExitNumeric: return "numeric";
    case kExitIo: return "io";
    default: return "error";
  }
}

namespace detail {

// CAAL_OUTPUT_ROOT reroots relative output directories.
inline std::string resolve_output_dir(const std::string& configured) {
  const char* root = std::getenv("CAAL_OUTPUT_ROOT");
  if (root == nullptr || *root == '\0' || configured.empty()) return configured;
  std::filesystem::path p(configured);
  if (p.is_absolute()) return configured;
  return (std::filesystem::path(root) / p).string();
}

inline void write_curve_outputs(const ExperimentResult& result, const std::string& dir,
                                const Ensemble& ens) {
  std::filesystem::create_directories(dir);
  emit_curve(result.records, (std::filesystem::path(dir) / "learning_curve.csv").string());
  save_ensemble(ens, (std::filesystem::path(dir) / "ensemble.txt").string());
}

struct BestMetrics {
  double r2 = 0.0;
  double rmse = 0.0;
};

inline BestMetrics best_of(const std::vector<RoundRecord>& records) {
  BestMetrics best{records.front().test_r2, records.front().test_rmse};
  for (const RoundRecord& r : records) {
    best.r2 = std::max(best.r2, r.test_r2);
    best.rmse = std::min(best.rmse, r.test_rmse);
  }
  return best;
}

// Grouping spec for chi: groups separated by ';', species by ','; species may
// be named (per the CSV header) or 0-based indices. Unlisted species each
// form their own group.
inline std::vector<std::vector<std::size_t>> parse_grouping(
    const std::string& spec, const std::vector<std::string>& names) {
  auto index_of = [&](const std::string& token) -> std::size_t {
    for (std::size_t i = 0; i < names.size(); ++i) {
      if (names[i] == token) return i;
    }
    char* end = nullptr;
    const long v = std::strtol(token.c_str(), &end, 10);
    if (end != token.c_str() && *end == '\0' && v >= 0 && static_cast<std::size_t>(v) < names.size()) {
      return static_cast<std::size_t>(v);
    }
    throw ConfigError("chi: unknown species '" + token + "' in grouping");
  };

  std::vector<std::vector<std::size_t>> groups;
  std::vector<bool> used(names.size(), false);
  std::stringstream gs(spec);
  std::string group;
  while (std::getline(gs, group, ';')) {
    if (group.empty()) continue;
    std::vector<std::size_t> members;
    std::stringstream ms(group);
    std::string token;
    while (std::getline(ms, token, ',')) {
      if (token.empty()) continue;
      const std::size_t idx = index_of(token);
      if (used[idx]) throw ConfigError("chi: species '" + token + "' listed twice in grouping");
      used[idx] = true;
      members.push_back(idx);
    }
    if (!members.empty()) groups.push_back(std::move(members));
  }
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (!used[i]) groups.push_back({i});
  }
  return groups;
}

}  // namespace detail

inline int cmd_run(const std::string& config_path, bool dump_scores, std::ostream& out) {
  LoadedConfig loaded = load_config_file(config_path);
  ExperimentConfig cfg = loaded.experiment;
  if (dump_scores) cfg.loop.dump_scores = true;
  cfg.output_dir = detail::resolve_output_dir(cfg.output_dir);
  if (cfg.output_dir.empty()) throw ConfigError("run: output_dir is required");

  ExperimentResult result = run_experiment(cfg);
  detail::write_curve_outputs(result, cfg.output_dir, result.final_ensemble);
  const detail::BestMetrics best = detail::best_of(result.records);
  out << "run complete: rounds=" << result.records.size() - 1
      << " n_labelled=" << result.records.back().n_labelled << " best_r2=" << format_double(best.r2)
      << " best_rmse=" << format_double(best.rmse) << " outputs=" << cfg.output_dir << '\n';
  return kExitOk;
}

inline int cmd_sweep(const std::string& config_path, const std::string& param,
                     const std::vector<double>& values, std::ostream& out) {
  if (param != "beta" && param != "lambda") {
    throw ConfigError("sweep: param must be 'beta' or 'lambda'");
  }
  if (values.empty()) throw ConfigError("sweep: need at least one value");
  std::set<double> distinct(values.begin(), values.end());
  if (distinct.size() != values.size()) throw ConfigError("sweep: duplicate values rejected");

  LoadedConfig loaded = load_config_file(config_path);
  const std::string base_dir = detail::resolve_output_dir(loaded.experiment.output_dir);
  if (base_dir.empty()) throw ConfigError("sweep: output_dir is required");
  std::filesystem::create_directories(base_dir);

  std::ofstream summary(std::filesystem::path(base_dir) / "sweep_summary.csv");
  if (!summary) throw IoError("sweep: cannot open summary file under " + base_dir);
  summary << param << ",best_r2,best_rmse,config_hash\n";

  for (double value : values) {
    ExperimentConfig cfg = loaded.experiment;
    if (param == "beta") {
      cfg.strategy.beta = value;
    } else {
      cfg.objective.lambda = value;
    }
    const std::string sub = param + "_" + format_double(value);
    cfg.output_dir = (std::filesystem::path(base_dir) / sub).string();

    ExperimentResult result = run_experiment(cfg);
    detail::write_curve_outputs(result, cfg.output_dir, result.final_ensemble);
    const detail::BestMetrics best = detail::best_of(result.records);
    summary << format_double(value) << ',' << format_double(best.r2) << ','
            << format_double(best.rmse) << ',' << format_u64(loaded.hash) << '\n';
    out << "sweep " << param << '=' << format_double(value) << " best_r2=" << format_double(best.r2)
        << " best_rmse=" << format_double(best.rmse) << '\n';
  }
  if (!summary) throw IoError("sweep: summary write failed");
  return kExitOk;
}

inline int cmd_compare(const std::string& config_path, const std::vector<std::string>& strategies,
                       std::ostream& out) {
  if (strategies.empty()) throw ConfigError("compare: need at least one strategy");
  std::set<std::string> distinct(strategies.begin(), strategies.end());
  if (distinct.size() != strategies.size()) throw ConfigError("compare: duplicate strategies rejected");

  LoadedConfig loaded = load_config_file(config_path);
  const std::string base_dir = detail::resolve_output_dir(loaded.experiment.output_dir);
  if (base_dir.empty()) throw ConfigError("compare: output_dir is required");
  std::filesystem::create_directories(base_dir);

  std::ofstream summary(std::filesystem::path(base_dir) / "compare_summary.csv");
  if (!summary) throw IoError("compare: cannot open summary file under " + base_dir);
  summary << "strategy,best_r2,best_rmse,config_hash\n";

  for (const std::string& name : strategies) {
    ExperimentConfig cfg = loaded.experiment;
    cfg.strategy.id = parse_strategy_id(name);
    cfg.output_dir = (std::filesystem::path(base_dir) / name).string();

    ExperimentResult result = run_experiment(cfg);
    detail::write_curve_outputs(result, cfg.output_dir, result.final_ensemble);
    const detail::BestMetrics best = detail::best_of(result.records);
    summary << name << ',' << format_double(best.r2) << ',' << format_double(best.rmse) << ','
            << format_u64(loaded.hash) << '\n';
    out << "compare " << name << " best_r2=" << format_double(best.r2)
        << " best_rmse=" << format_double(best.rmse) << '\n';
  }
  if (!summary) throw IoError("compare: summary write failed");
  return kExitOk;
}

inline int cmd_chi(const std::string& population_csv, const std::string& grouping, std::ostream& out) {
  ParticlePopulation pop = load_population_csv(population_csv);
  if (!grouping.empty()) {
    pop = merge_species(pop, detail::parse_grouping(grouping, pop.species_names));
  }
  const ChiResult res = mixing_state_index(pop);
  out << "chi = " << format_double(res.chi) << '\n';
  out << "d_alpha = " << format_double(res.d_alpha) << '\n';
  out << "d_gamma = " << format_double(res.d_gamma) << '\n';
  if (res.degenerate_single_species) {
    out << "warning: single effective species in bulk; chi reported as 1\n";
  }
  return kExitOk;
}

inline int cmd_vr(const std::string& diameters_csv, std::ostream& out) {
  std::ifstream in(diameters_csv);
  if (!in) throw IoError("vr: cannot open " + diameters_csv);
  std::string line;
  if (!std::getline(in, line)) throw DataError("vr: empty file " + diameters_csv);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "Dp,Dc") throw DataError("vr: expected header 'Dp,Dc', got '" + line + "'");
  std::vector<double> dp, dc;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw DataError("vr: row " + std::to_string(row) + ": missing comma");
    dp.push_back(caal::detail::parse_strict_double(line.substr(0, comma), row, "Dp"));
    dc.push_back(caal::detail::parse_strict_double(line.substr(comma + 1), row, "Dc"));
  }
  out << "vr = " << format_double(coating_volume_ratio(dp, dc)) << '\n';
  return kExitOk;
}

inline int run_cli(std::vector<std::string> args, std::ostream& out = std::cout,
                   std::ostream& err = std::cerr) {
  CLI::App app{"confidence-aware active learning for heteroscedastic regression"};
  app.require_subcommand(1);

  std::string config_path;
  bool dump_scores = false;
  auto* run = app.add_subcommand("run", "run one experiment from a JSON config");
  run->add_option("config", config_path, "experiment config (JSON)")->required();
  run->add_flag("--dump-scores", dump_scores, "write per-round acquisition score CSVs");

  std::string sweep_param;
  std::vector<double> sweep_values;
  auto* sweep = app.add_subcommand("sweep", "run the config once per hyperparameter value");
  sweep->add_option("config", config_path, "experiment config (JSON)")->required();
  sweep->add_option("--param", sweep_param, "beta or lambda")->required();
  sweep->add_option("--values", sweep_values, "values to sweep")->required()->delimiter(',');

  std::vector<std::string> compare_strategies;
  auto* compare = app.add_subcommand("compare", "run the config once per strategy");
  compare->add_option("config", config_path, "experiment config (JSON)")->required();
  compare->add_option("--strategies", compare_strategies, "strategy names")->required()->delimiter(',');

  std::string grouping;
  auto* chi = app.add_subcommand("chi", "mixing-state index of a particle population CSV");
  chi->add_option("population", config_path, "population CSV (header = species names)")->required();
  chi->add_option("--grouping", grouping, "species groups, e.g. 'BC;SO4,NO3,NH4,OA'");

  auto* vr = app.add_subcommand("vr", "coating volume ratio from a Dp,Dc diameter CSV");
  vr->add_option("diameters", config_path, "CSV with header Dp,Dc")->required();

  try {
    std::vector<const char*> argv;
    argv.push_back("caal");
    for (const std::string& a : args) argv.push_back(a.c_str());
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "caal-error code=" << kExitConfig << " kind=config message=\"" << e.what() << "\"\n";
    return kExitConfig;
  }

  try {
    if (run->parsed()) return cmd_run(config_path, dump_scores, out);
    if (sweep->parsed()) return cmd_sweep(config_path, sweep_param, sweep_values, out);
    if (compare->parsed()) return cmd_compare(config_path, compare_strategies, out);
    if (chi->parsed()) return cmd_chi(config_path, grouping, out);
    if (vr->parsed()) return cmd_vr(config_path, out);
    throw ConfigError("no subcommand selected");
  } catch (const Error& e) {
    err << "caal-error code=" << e.exit_code << " kind=" << error_kind(e.exit_code) << " message=\""
        << e.what() << "\"\n";
    return e.exit_code;
  } catch (const std::exception& e) {
    err << "caal-error code=1 kind=internal message=\"" << e.what() << "\"\n";
    return 1;
  }
}

}  // namespace cli
}  // namespace caal
