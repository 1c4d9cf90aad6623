#pragma once

#include <cmath>
#include <fstream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "caal/common.hpp"

namespace caal {

// Shannon-entropy mixing-state diagnostics for particle populations, plus the
// black-carbon coating volume ratio. Pure closed-form functions; they double
// as oracles and synthetic-target generators elsewhere in the library.

struct ParticlePopulation {
  std::size_t n_particles = 0;
  std::size_t n_species = 0;
  std::vector<double> masses;  // row-major [n_particles][n_species], >= 0
  std::vector<std::string> species_names;

  double mass(std::size_t i, std::size_t a) const { return masses[i * n_species + a]; }
};

inline void validate_population(const ParticlePopulation& pop) {
  if (pop.n_particles < 1 || pop.n_species < 1) {
    throw DataError("population: need at least one particle and one species");
  }
  if (pop.masses.size() != pop.n_particles * pop.n_species) {
    throw DataError("population: mass matrix shape mismatch");
  }
  for (std::size_t i = 0; i < pop.n_particles; ++i) {
    double row = 0.0;
    for (std::size_t a = 0; a < pop.n_species; ++a) {
      const double m = pop.mass(i, a);
      if (m < 0.0 || !std::isfinite(m)) {
        throw DataError("population: particle " + std::to_string(i) + " has a negative or non-finite mass");
      }
      row += m;
    }
    if (!(row > 0.0)) {
      throw DataError("population: particle " + std::to_string(i) + " has zero total mass");
    }
  }
}

struct ChiResult {
  double chi = 0.0;      // (D_alpha - 1) / (D_gamma - 1), in [0, 1]
  double d_alpha = 1.0;  // exp of mass-weighted mean per-particle entropy
  double d_gamma = 1.0;  // exp of bulk entropy
  double h_alpha = 0.0;
  double h_gamma = 0.0;
  std::vector<double> per_particle_h;
  // Single effective species in the bulk: the affine ratio is 0/0 and the
  // population is trivially internally mixed, reported as chi = 1.
  bool degenerate_single_species = false;
};

namespace detail {
// 0 * ln 0 := 0 throughout the entropy sums.
inline double neg_p_log_p(double p) { return p > 0.0 ? -p * std::log(p) : 0.0; }
}  // namespace detail

// Per-particle entropies H_i = -sum_a p_i^a ln p_i^a, mass-weighted average
// H_alpha, bulk entropy H_gamma over column totals, diversities D = e^H, and
// chi = (D_alpha - 1) / (D_gamma - 1).
inline ChiResult mixing_state_index(const ParticlePopulation& pop) {
  validate_population(pop);
  ChiResult out;
  out.per_particle_h.resize(pop.n_particles);

  std::vector<double> row_total(pop.n_particles, 0.0);
  std::vector<double> col_total(pop.n_species, 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < pop.n_particles; ++i) {
    for (std::size_t a = 0; a < pop.n_species; ++a) {
      const double m = pop.mass(i, a);
      row_total[i] += m;
      col_total[a] += m;
    }
    total += row_total[i];
  }

  for (std::size_t i = 0; i < pop.n_particles; ++i) {
    double h = 0.0;
    for (std::size_t a = 0; a < pop.n_species; ++a) {
      h += detail::neg_p_log_p(pop.mass(i, a) / row_total[i]);
    }
    out.per_particle_h[i] = h;
    out.h_alpha += (row_total[i] / total) * h;
  }
  for (std::size_t a = 0; a < pop.n_species; ++a) {
    out.h_gamma += detail::neg_p_log_p(col_total[a] / total);
  }
  out.d_alpha = std::exp(out.h_alpha);
  out.d_gamma = std::exp(out.h_gamma);

  if (out.d_gamma > 1.0) {
    out.chi = (out.d_alpha - 1.0) / (out.d_gamma - 1.0);
  } else {
    out.chi = 1.0;
    out.degenerate_single_species = true;
  }
  return out;
}

// Column-merge preprocessing for grouped indices (e.g. treating every
// non-absorbing species as one component). `groups` partitions the original
// columns; unlisted columns are dropped only if absent from every group, which
// is rejected to avoid silent mass loss.
inline ParticlePopulation merge_species(const ParticlePopulation& pop,
                                        const std::vector<std::vector<std::size_t>>& groups) {
  validate_population(pop);
  if (groups.empty()) throw ConfigError("merge_species: need at least one group");
  std::vector<bool> seen(pop.n_species, false);
  for (const auto& g : groups) {
    if (g.empty()) throw ConfigError("merge_species: empty group");
    for (std::size_t a : g) {
      if (a >= pop.n_species) throw ConfigError("merge_species: species index out of range");
      if (seen[a]) throw ConfigError("merge_species: species listed twice");
      seen[a] = true;
    }
  }
  for (std::size_t a = 0; a < pop.n_species; ++a) {
    if (!seen[a]) throw ConfigError("merge_species: species " + std::to_string(a) + " not assigned to a group");
  }

  ParticlePopulation merged;
  merged.n_particles = pop.n_particles;
  merged.n_species = groups.size();
  merged.masses.assign(pop.n_particles * groups.size(), 0.0);
  for (std::size_t i = 0; i < pop.n_particles; ++i) {
    for (std::size_t g = 0; g < groups.size(); ++g) {
      double acc = 0.0;
      for (std::size_t a : groups[g]) acc += pop.mass(i, a);
      merged.masses[i * merged.n_species + g] = acc;
    }
  }
  return merged;
}

// Population-mean coating volume ratio: sum Dp^3 / sum Dc^3 - 1, with Dp the
// coated diameter and Dc the core diameter.
inline double coating_volume_ratio(std::span<const double> dp, std::span<const double> dc) {
  if (dp.size() != dc.size()) throw DataError("coating_volume_ratio: diameter lists differ in length");
  if (dp.empty()) throw DataError("coating_volume_ratio: empty diameter lists");
  double sum_p = 0.0, sum_c = 0.0;
  for (std::size_t i = 0; i < dp.size(); ++i) {
    if (!(dc[i] > 0.0)) throw DataError("coating_volume_ratio: core diameter must be positive");
    if (dp[i] < dc[i]) {
      throw DataError("coating_volume_ratio: coated diameter below core diameter at row " +
                      std::to_string(i));
    }
    sum_p += dp[i] * dp[i] * dp[i];
    sum_c += dc[i] * dc[i] * dc[i];
  }
  return sum_p / sum_c - 1.0;
}

// CSV: one row per particle, one column per species mass, header row of
// species names.
inline ParticlePopulation load_population_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("load_population_csv: cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw DataError("load_population_csv: empty file " + path);

  ParticlePopulation pop;
  {
    std::istringstream hs(line);
    std::string cell;
    while (std::getline(hs, cell, ',')) pop.species_names.push_back(cell);
  }
  pop.n_species = pop.species_names.size();
  if (pop.n_species == 0) throw DataError("load_population_csv: no columns in " + path);

  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string cell;
    std::size_t col = 0;
    while (std::getline(ls, cell, ',')) {
      char* end = nullptr;
      const double v = std::strtod(cell.c_str(), &end);
      if (end == cell.c_str() || *end != '\0' || !std::isfinite(v)) {
        throw DataError("load_population_csv: row " + std::to_string(row) + ": bad cell '" + cell + "'");
      }
      pop.masses.push_back(v);
      ++col;
    }
    if (col != pop.n_species) {
      throw DataError("load_population_csv: row " + std::to_string(row) + " has " +
                      std::to_string(col) + " columns, expected " + std::to_string(pop.n_species));
    }
    ++pop.n_particles;
  }
  validate_population(pop);
  return pop;
}

}  // namespace caal
