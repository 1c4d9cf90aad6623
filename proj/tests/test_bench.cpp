#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "caal/bench.hpp"
#include "caal/rng.hpp"

using namespace caal;
using Catch::Approx;

namespace {

// Two-pass reference: center first, then accumulate.
double r2_two_pass(const std::vector<double>& t, const std::vector<double>& p) {
  double mean = 0.0;
  for (double v : t) mean += v;
  mean /= static_cast<double>(t.size());
  double res = 0.0, tot = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    res += (t[i] - p[i]) * (t[i] - p[i]);
    tot += (t[i] - mean) * (t[i] - mean);
  }
  return 1.0 - res / tot;
}

LearningCurve curve_from(const std::vector<double>& budgets, const std::vector<double>& r2s) {
  LearningCurve curve;
  for (std::size_t i = 0; i < budgets.size(); ++i) {
    RoundRecord rec;
    rec.round = static_cast<int>(i);
    rec.n_labelled = static_cast<std::size_t>(budgets[i] * 1000);
    rec.test_r2 = r2s[i];
    curve.records.push_back(rec);
    curve.budget_fraction.push_back(budgets[i]);
  }
  return curve;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("r-squared and rmse", "[bench]") {
  SECTION("perfect prediction") {
    const std::vector<double> y = {1.0, 2.0, 3.0};
    REQUIRE(r_squared(y, y) == Approx(1.0));
    REQUIRE(rmse(y, y) == Approx(0.0).margin(1e-15));
  }
  SECTION("predicting the mean gives zero r-squared") {
    const std::vector<double> y = {1.0, 2.0, 3.0};
    const std::vector<double> p = {2.0, 2.0, 2.0};
    REQUIRE(r_squared(y, p) == Approx(0.0).margin(1e-15));
  }
  SECTION("hand-evaluated point") {
    const std::vector<double> y = {0.0, 1.0, 2.0};
    const std::vector<double> p = {0.0, 1.0, 1.0};
    REQUIRE(rmse(y, p) == Approx(std::sqrt(1.0 / 3.0)).epsilon(1e-12));
    REQUIRE(r_squared(y, p) == Approx(0.5).epsilon(1e-12));
  }
  SECTION("agrees with an independent two-pass computation") {
    Rng rng(3);
    for (int trial = 0; trial < 200; ++trial) {
      const std::size_t n = 2 + rng.index(50);
      std::vector<double> y(n), p(n);
      for (std::size_t i = 0; i < n; ++i) {
        y[i] = rng.uniform(-5, 5);
        p[i] = rng.uniform(-5, 5);
      }
      if (std::abs(*std::max_element(y.begin(), y.end()) -
                   *std::min_element(y.begin(), y.end())) < 1e-9) {
        continue;
      }
      REQUIRE(r_squared(y, p) == Approx(r2_two_pass(y, p)).margin(1e-12));
    }
  }
  SECTION("constant targets rejected for r-squared") {
    const std::vector<double> y = {2.0, 2.0, 2.0};
    const std::vector<double> p = {1.0, 2.0, 3.0};
    REQUIRE_THROWS_AS(r_squared(y, p), NumericError);
  }
  SECTION("length mismatch rejected") {
    const std::vector<double> y = {1.0, 2.0};
    const std::vector<double> p = {1.0};
    REQUIRE_THROWS_AS(r_squared(y, p), DataError);
    REQUIRE_THROWS_AS(rmse(y, p), DataError);
  }
}

TEST_CASE("data-to-match accounting", "[bench]") {
  SECTION("first crossing wins") {
    const LearningCurve curve = curve_from({0.2, 0.5, 1.0}, {0.5, 0.7, 0.8});
    const MatchResult m = data_to_match(curve, 0.6966);
    REQUIRE(m.matched);
    REQUIRE(m.fraction == Approx(0.5));
    REQUIRE(m.labeling_saved == Approx(0.5));
  }
  SECTION("unreached reference reports not matched") {
    const LearningCurve curve = curve_from({0.2, 0.5, 1.0}, {0.1, 0.2, 0.3});
    REQUIRE_FALSE(data_to_match(curve, 0.6966).matched);
  }
  SECTION("reference met at round zero") {
    const LearningCurve curve = curve_from({0.2, 0.5, 1.0}, {0.7, 0.8, 0.9});
    const MatchResult m = data_to_match(curve, 0.7);
    REQUIRE(m.fraction == Approx(0.2));
    REQUIRE(m.labeling_saved == Approx(0.8));
  }
  SECTION("improving a curve point never increases the matched fraction") {
    Rng rng(17);
    for (int trial = 0; trial < 200; ++trial) {
      const std::size_t n = 2 + rng.index(8);
      std::vector<double> budgets(n), r2s(n);
      double b = rng.uniform(0.01, 0.2);
      for (std::size_t i = 0; i < n; ++i) {
        budgets[i] = b;
        b += rng.uniform(0.01, 0.2);
        r2s[i] = rng.uniform(0.0, 1.0);
      }
      const double ref = rng.uniform(0.0, 1.0);
      const MatchResult before = data_to_match(curve_from(budgets, r2s), ref);
      std::vector<double> improved = r2s;
      improved[rng.index(n)] += rng.uniform(0.0, 0.5);
      const MatchResult after = data_to_match(curve_from(budgets, improved), ref);
      if (before.matched) {
        REQUIRE(after.matched);
        REQUIRE(after.fraction <= before.fraction + 1e-12);
      }
    }
  }
  SECTION("non-increasing budgets rejected") {
    LearningCurve curve = curve_from({0.5, 0.5}, {0.1, 0.2});
    REQUIRE_THROWS_AS(data_to_match(curve, 0.5), DataError);
  }
}

TEST_CASE("learning curve emission", "[bench]") {
  const std::string path = (std::filesystem::temp_directory_path() / "caal_curve.csv").string();
  SECTION("empty history writes only the header") {
    emit_curve(std::vector<RoundRecord>{}, path);
    REQUIRE(read_file(path) == "round,n_labelled,r2,rmse,mean_epi_selected,mean_ale_selected\n");
  }
  SECTION("one row per record, re-emission is byte identical") {
    std::vector<RoundRecord> records;
    Rng rng(5);
    for (int i = 0; i < 21; ++i) {
      RoundRecord r;
      r.round = i;
      r.n_labelled = 100 + 10 * i;
      r.budget_used = i == 0 ? 0 : 10;
      r.test_r2 = rng.uniform(0, 1);
      r.test_rmse = rng.uniform(0, 1);
      r.mean_epi_selected = i == 0 ? std::numeric_limits<double>::quiet_NaN() : rng.uniform(0, 1);
      r.mean_ale_selected = i == 0 ? std::numeric_limits<double>::quiet_NaN() : rng.uniform(0, 1);
      records.push_back(r);
    }
    emit_curve(records, path);
    const std::string first = read_file(path);
    std::size_t lines = 0;
    for (char c : first) lines += c == '\n';
    REQUIRE(lines == 22);  // header + 21 rows
    emit_curve(records, path);
    REQUIRE(read_file(path) == first);
  }
  std::filesystem::remove(path);
}
