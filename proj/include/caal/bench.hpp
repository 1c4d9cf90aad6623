#pragma once

#include <cmath>
#include <fstream>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "caal/common.hpp"

namespace caal {

// R^2 = 1 - SS_res / SS_tot. Undefined for constant y_true.
inline double r_squared(std::span<const double> y_true, std::span<const double> y_pred) {
  if (y_true.size() != y_pred.size()) throw DataError("r_squared: length mismatch");
  if (y_true.size() < 2) throw DataError("r_squared: need at least two points");
  double mean = 0.0;
  for (double v : y_true) mean += v;
  mean /= static_cast<double>(y_true.size());
  double ss_res = 0.0, ss_tot = 0.0;
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    ss_res += (y_true[i] - y_pred[i]) * (y_true[i] - y_pred[i]);
    ss_tot += (y_true[i] - mean) * (y_true[i] - mean);
  }
  if (!(ss_tot > 0.0)) throw NumericError("r_squared: y_true is constant, R^2 undefined");
  return 1.0 - ss_res / ss_tot;
}

inline double rmse(std::span<const double> y_true, std::span<const double> y_pred) {
  if (y_true.size() != y_pred.size()) throw DataError("rmse: length mismatch");
  if (y_true.empty()) throw DataError("rmse: empty inputs");
  double acc = 0.0;
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    acc += (y_true[i] - y_pred[i]) * (y_true[i] - y_pred[i]);
  }
  return std::sqrt(acc / static_cast<double>(y_true.size()));
}

// One acquisition round. n_labelled is the training-set size of the model the
// record evaluates; budget_used counts the units (samples or groups) queried
// at this round, 0 for the initial record. Selection means are NaN when
// nothing was selected.
struct RoundRecord {
  int round = 0;
  std::size_t n_labelled = 0;
  std::size_t budget_used = 0;
  double mean_epi_selected = std::numeric_limits<double>::quiet_NaN();
  double mean_ale_selected = std::numeric_limits<double>::quiet_NaN();
  double test_r2 = 0.0;
  double test_rmse = 0.0;
};

struct LearningCurve {
  std::vector<RoundRecord> records;
  std::vector<double> budget_fraction;  // labelled fraction of the full training data, per record
  double r2_full = std::numeric_limits<double>::quiet_NaN();
  double rmse_full = std::numeric_limits<double>::quiet_NaN();
};

inline void validate_curve(const LearningCurve& curve) {
  if (curve.records.size() != curve.budget_fraction.size()) {
    throw DataError("learning_curve: record/budget length mismatch");
  }
  for (std::size_t i = 1; i < curve.budget_fraction.size(); ++i) {
    if (!(curve.budget_fraction[i] > curve.budget_fraction[i - 1])) {
      throw DataError("learning_curve: budget must be strictly increasing");
    }
  }
}

struct MatchResult {
  bool matched = false;
  double fraction = std::numeric_limits<double>::quiet_NaN();
  double labeling_saved = std::numeric_limits<double>::quiet_NaN();
};

// Smallest budget fraction whose R^2 reaches the reference; labeling saved is
// its complement. Unmatched curves report matched = false (the "N/A" case).
inline MatchResult data_to_match(const LearningCurve& curve, double reference_r2) {
  if (curve.records.empty()) throw DataError("data_to_match: empty curve");
  validate_curve(curve);
  MatchResult out;
  for (std::size_t i = 0; i < curve.records.size(); ++i) {
    if (curve.records[i].test_r2 >= reference_r2) {
      out.matched = true;
      out.fraction = curve.budget_fraction[i];
      out.labeling_saved = 1.0 - out.fraction;
      return out;
    }
  }
  return out;
}

inline void emit_curve(std::span<const RoundRecord> records, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("emit_curve: cannot open " + path);
  out << "round,n_labelled,r2,rmse,mean_epi_selected,mean_ale_selected\n";
  for (const RoundRecord& r : records) {
    out << r.round << ',' << r.n_labelled << ',' << format_double(r.test_r2) << ','
        << format_double(r.test_rmse) << ',' << format_double(r.mean_epi_selected) << ','
        << format_double(r.mean_ale_selected) << '\n';
  }
  if (!out) throw IoError("emit_curve: write failed for " + path);
}

}  // namespace caal
