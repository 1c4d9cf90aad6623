#pragma once

#include <cmath>
#include <fstream>
#include <functional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "caal/aerosol.hpp"
#include "caal/common.hpp"
#include "caal/rng.hpp"

namespace caal {

// ---------------------------------------------------------------------------
// Target transforms
// ---------------------------------------------------------------------------

enum class TransformKind { Identity, LogitBounded, LogPositive };

constexpr double kClipEps = 1e-6;

inline const char* transform_name(TransformKind k) {
  switch (k) {
    case TransformKind::Identity: return "identity";
    case TransformKind::LogitBounded: return "logit_bounded";
    case TransformKind::LogPositive: return "log_positive";
  }
  return "unknown";
}

inline TransformKind parse_transform(const std::string& name) {
  if (name == "identity") return TransformKind::Identity;
  if (name == "logit_bounded") return TransformKind::LogitBounded;
  if (name == "log_positive") return TransformKind::LogPositive;
  throw ConfigError("unknown target transform: " + name);
}

// LogitBounded clips to [eps, 1-eps] before the logit, so any value in [0, 1]
// is accepted; LogPositive requires y > 0.
inline double transform_target(TransformKind kind, double y) {
  switch (kind) {
    case TransformKind::Identity:
      return y;
    case TransformKind::LogitBounded: {
      const double c = std::min(1.0 - kClipEps, std::max(kClipEps, y));
      return std::log(c / (1.0 - c));
    }
    case TransformKind::LogPositive:
      if (!(y > 0.0)) throw DataError("transform: log_positive requires y > 0, got " + std::to_string(y));
      return std::log(y);
  }
  throw ConfigError("transform_target: unknown kind");
}

inline double inverse_transform(TransformKind kind, double z) {
  switch (kind) {
    case TransformKind::Identity:
      return z;
    case TransformKind::LogitBounded:
      return 1.0 / (1.0 + std::exp(-z));
    case TransformKind::LogPositive:
      return std::exp(z);
  }
  throw ConfigError("inverse_transform: unknown kind");
}

// ---------------------------------------------------------------------------
// Dataset
// ---------------------------------------------------------------------------

struct Dataset {
  std::size_t n = 0;
  std::size_t d = 0;
  std::vector<double> features;  // row-major [n][d]
  std::vector<double> targets;   // transformed space
  std::vector<int> group_id;     // contiguous blocks
  std::vector<std::string> feature_names;
  TransformKind target_transform = TransformKind::Identity;

  std::span<const double> row(std::size_t i) const {
    return {features.data() + i * d, d};
  }
};

inline void validate_dataset(const Dataset& ds) {
  if (ds.features.size() != ds.n * ds.d || ds.targets.size() != ds.n || ds.group_id.size() != ds.n) {
    throw DataError("dataset: inconsistent shapes");
  }
  for (double v : ds.features) {
    if (!std::isfinite(v)) throw DataError("dataset: non-finite feature value");
  }
  for (double v : ds.targets) {
    if (!std::isfinite(v)) throw DataError("dataset: non-finite target value");
  }
  // group ids must form contiguous runs
  std::vector<bool> closed;
  int current = ds.n > 0 ? ds.group_id[0] : 0;
  std::vector<int> seen;
  for (std::size_t i = 1; i < ds.n; ++i) {
    if (ds.group_id[i] == current) continue;
    seen.push_back(current);
    current = ds.group_id[i];
    for (int g : seen) {
      if (g == current) throw DataError("dataset: group " + std::to_string(g) + " is not contiguous");
    }
  }
}

// ---------------------------------------------------------------------------
// Synthetic generators. Targets are noise-free f values (in transformed
// space); the closed-form sigma_data handle describes the oracle noise that a
// querying loop will add.
// ---------------------------------------------------------------------------

enum class SyntheticFamily { HeteroSine1D, NoiseBand2D, MixingStateToy };

inline const char* synthetic_name(SyntheticFamily f) {
  switch (f) {
    case SyntheticFamily::HeteroSine1D: return "hetero_sine_1d";
    case SyntheticFamily::NoiseBand2D: return "noise_band_2d";
    case SyntheticFamily::MixingStateToy: return "mixing_state_toy";
  }
  return "unknown";
}

inline SyntheticFamily parse_synthetic(const std::string& name) {
  if (name == "hetero_sine_1d") return SyntheticFamily::HeteroSine1D;
  if (name == "noise_band_2d") return SyntheticFamily::NoiseBand2D;
  if (name == "mixing_state_toy") return SyntheticFamily::MixingStateToy;
  throw ConfigError("unknown synthetic family: " + name);
}

struct SyntheticSpec {
  SyntheticFamily family = SyntheticFamily::HeteroSine1D;
  std::size_t n = 1000;
  std::uint64_t seed = 0;
  std::size_t group_size = 25;   // samples per scenario block
  double noise_base = 0.05;      // sigma outside the band
  double noise_band = 0.45;      // added sigma inside the band
};

inline void validate_synthetic_spec(const SyntheticSpec& spec) {
  if (spec.n < 1) throw ConfigError("synthetic: n must be >= 1");
  if (spec.group_size < 1) throw ConfigError("synthetic: group_size must be >= 1");
  if (spec.noise_base < 0.0 || spec.noise_band < 0.0) {
    throw ConfigError("synthetic: noise parameters must be >= 0");
  }
}

struct SyntheticData {
  Dataset data;
  std::function<double(std::span<const double>)> sigma_data;  // noise std in transformed space
  double f_bound = 0.0;  // documented bound on |f| in transformed space
};

namespace detail {

// Deterministic toy population: interpolates between a one-species-per-
// particle external mixture (alpha = 0) and a uniform internal mixture
// (alpha = 1) over a fixed bulk composition. chi is then a smooth function of
// alpha alone; mass is a nuisance feature.
inline ParticlePopulation toy_population(double alpha, double total_mass) {
  constexpr std::size_t n_particles = 20;
  constexpr std::size_t n_species = 3;
  constexpr double bulk[n_species] = {0.5, 0.3, 0.2};
  ParticlePopulation pop;
  pop.n_particles = n_particles;
  pop.n_species = n_species;
  pop.masses.resize(n_particles * n_species);
  const double per_particle = total_mass / static_cast<double>(n_particles);
  for (std::size_t i = 0; i < n_particles; ++i) {
    const std::size_t own = i % n_species;
    for (std::size_t a = 0; a < n_species; ++a) {
      const double frac = alpha * bulk[a] + (1.0 - alpha) * (a == own ? 1.0 : 0.0);
      pop.masses[i * n_species + a] = frac * per_particle;
    }
  }
  return pop;
}

}  // namespace detail

inline SyntheticData generate_synthetic(const SyntheticSpec& spec) {
  validate_synthetic_spec(spec);
  Rng rng(derive_seed(spec.seed, 0x5379'6e74u));
  SyntheticData out;
  Dataset& ds = out.data;
  ds.n = spec.n;
  ds.group_id.resize(spec.n);
  for (std::size_t i = 0; i < spec.n; ++i) {
    ds.group_id[i] = static_cast<int>(i / spec.group_size);
  }
  const double base = spec.noise_base;
  const double band = spec.noise_band;

  switch (spec.family) {
    case SyntheticFamily::HeteroSine1D: {
      ds.d = 1;
      ds.feature_names = {"x"};
      ds.target_transform = TransformKind::Identity;
      ds.features.resize(spec.n);
      ds.targets.resize(spec.n);
      for (std::size_t i = 0; i < spec.n; ++i) {
        const double x = rng.uniform(-3.0, 3.0);
        ds.features[i] = x;
        ds.targets[i] = std::sin(2.0 * x) + 0.3 * x;
      }
      out.sigma_data = [base, band](std::span<const double> x) {
        return base + band * (x[0] >= 0.5 && x[0] <= 1.5 ? 1.0 : 0.0);
      };
      out.f_bound = 1.9;  // |sin| + 0.3 * 3
      break;
    }
    case SyntheticFamily::NoiseBand2D: {
      ds.d = 2;
      ds.feature_names = {"x1", "x2"};
      ds.target_transform = TransformKind::Identity;
      ds.features.resize(spec.n * 2);
      ds.targets.resize(spec.n);
      for (std::size_t i = 0; i < spec.n; ++i) {
        const double x1 = rng.uniform(-3.0, 3.0);
        const double x2 = rng.uniform(-3.0, 3.0);
        ds.features[2 * i] = x1;
        ds.features[2 * i + 1] = x2;
        ds.targets[i] = std::sin(2.0 * x1) + 0.3 * x2;
      }
      out.sigma_data = [base, band](std::span<const double> x) {
        const double r = std::sqrt(x[0] * x[0] + x[1] * x[1]);
        return base + band * (r >= 1.0 && r <= 2.0 ? 1.0 : 0.0);
      };
      out.f_bound = 1.9;
      break;
    }
    case SyntheticFamily::MixingStateToy: {
      ds.d = 2;
      ds.feature_names = {"alpha", "log_mass"};
      ds.target_transform = TransformKind::LogitBounded;
      ds.features.resize(spec.n * 2);
      ds.targets.resize(spec.n);
      for (std::size_t i = 0; i < spec.n; ++i) {
        const double alpha = rng.uniform();
        const double log_mass = rng.uniform(-1.0, 1.0);
        ds.features[2 * i] = alpha;
        ds.features[2 * i + 1] = log_mass;
        const ChiResult chi = mixing_state_index(detail::toy_population(alpha, std::exp(log_mass)));
        ds.targets[i] = transform_target(TransformKind::LogitBounded, chi.chi);
      }
      out.sigma_data = [base, band](std::span<const double> x) {
        return base + band * (x[0] >= 0.4 && x[0] <= 0.6 ? 1.0 : 0.0);
      };
      out.f_bound = std::log((1.0 - kClipEps) / kClipEps) + 1e-9;  // logit of the clip bound
      break;
    }
  }
  validate_dataset(ds);
  return out;
}

// ---------------------------------------------------------------------------
// CSV ingestion
// ---------------------------------------------------------------------------

struct CsvSchema {
  std::vector<std::string> feature_columns;
  std::string target_column;
  std::string group_column;  // empty: every row is its own group
  TransformKind transform = TransformKind::Identity;
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream ls(line);
  while (std::getline(ls, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.push_back("");
  return cells;
}

inline double parse_strict_double(const std::string& cell, std::size_t row, const std::string& col) {
  char* end = nullptr;
  const double v = std::strtod(cell.c_str(), &end);
  if (end == cell.c_str() || *end != '\0') {
    throw DataError("csv: row " + std::to_string(row) + ": unparseable cell '" + cell +
                    "' in column " + col);
  }
  if (!std::isfinite(v)) {
    throw DataError("csv: row " + std::to_string(row) + ": non-finite value in column " + col);
  }
  return v;
}

}  // namespace detail

inline Dataset load_csv(const std::string& path, const CsvSchema& schema) {
  if (schema.feature_columns.empty()) throw ConfigError("csv schema: no feature columns");
  if (schema.target_column.empty()) throw ConfigError("csv schema: no target column");
  std::ifstream in(path);
  if (!in) throw IoError("load_csv: cannot open " + path);

  std::string line;
  if (!std::getline(in, line)) throw DataError("load_csv: empty file " + path);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const std::vector<std::string> header = detail::split_csv_line(line);

  auto column_of = [&](const std::string& name) {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == name) return i;
    }
    throw DataError("load_csv: missing column '" + name + "' in " + path);
  };

  std::vector<std::size_t> feature_cols;
  for (const auto& name : schema.feature_columns) feature_cols.push_back(column_of(name));
  const std::size_t target_col = column_of(schema.target_column);
  const bool has_group = !schema.group_column.empty();
  const std::size_t group_col = has_group ? column_of(schema.group_column) : 0;

  Dataset ds;
  ds.d = feature_cols.size();
  ds.feature_names = schema.feature_columns;
  ds.target_transform = schema.transform;

  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::vector<std::string> cells = detail::split_csv_line(line);
    if (cells.size() != header.size()) {
      throw DataError("load_csv: row " + std::to_string(row) + " has " + std::to_string(cells.size()) +
                      " cells, expected " + std::to_string(header.size()));
    }
    for (std::size_t j = 0; j < feature_cols.size(); ++j) {
      ds.features.push_back(
          detail::parse_strict_double(cells[feature_cols[j]], row, schema.feature_columns[j]));
    }
    const double raw_target = detail::parse_strict_double(cells[target_col], row, schema.target_column);
    ds.targets.push_back(transform_target(schema.transform, raw_target));
    if (has_group) {
      const double g = detail::parse_strict_double(cells[group_col], row, schema.group_column);
      ds.group_id.push_back(static_cast<int>(g));
    } else {
      ds.group_id.push_back(static_cast<int>(ds.n));
    }
    ++ds.n;
  }
  if (ds.n == 0) throw DataError("load_csv: no data rows in " + path);
  validate_dataset(ds);
  return ds;
}

// Writes the parsed (transformed) representation back out; load(save(ds)) is
// idempotent.
inline void save_csv(const Dataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("save_csv: cannot open " + path);
  for (std::size_t j = 0; j < ds.feature_names.size(); ++j) {
    out << ds.feature_names[j] << ',';
  }
  out << "target,group\n";
  for (std::size_t i = 0; i < ds.n; ++i) {
    for (std::size_t j = 0; j < ds.d; ++j) out << format_double(ds.features[i * ds.d + j]) << ',';
    out << format_double(ds.targets[i]) << ',' << ds.group_id[i] << '\n';
  }
  if (!out) throw IoError("save_csv: write failed for " + path);
}

// ---------------------------------------------------------------------------
// Feature standardisation (refit on the labelled set each round)
// ---------------------------------------------------------------------------

struct Standardizer {
  std::vector<double> mean;
  std::vector<double> sd;

  void fit(const Dataset& ds, std::span<const std::size_t> rows) {
    if (rows.empty()) throw ConfigError("standardizer: cannot fit on an empty set");
    mean.assign(ds.d, 0.0);
    sd.assign(ds.d, 0.0);
    for (std::size_t r : rows) {
      for (std::size_t j = 0; j < ds.d; ++j) mean[j] += ds.features[r * ds.d + j];
    }
    for (double& m : mean) m /= static_cast<double>(rows.size());
    for (std::size_t r : rows) {
      for (std::size_t j = 0; j < ds.d; ++j) {
        const double dv = ds.features[r * ds.d + j] - mean[j];
        sd[j] += dv * dv;
      }
    }
    for (double& s : sd) {
      s = std::sqrt(s / static_cast<double>(rows.size()));
      if (s < 1e-12) s = 1.0;  // constant feature
    }
  }

  std::vector<double> apply(std::span<const double> x) const {
    std::vector<double> out(x.size());
    for (std::size_t j = 0; j < x.size(); ++j) out[j] = (x[j] - mean[j]) / sd[j];
    return out;
  }
};

}  // namespace caal
