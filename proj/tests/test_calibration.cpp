#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numbers>
#include <string>
#include <vector>

#include "gradvar/calibration.hpp"
#include "gradvar/rng.hpp"

using namespace gradvar;

namespace {

EvalPair pair_of(double obs, double mean, double var) {
  return EvalPair{obs, mean, var};
}

bool same_bits(double a, double b) {
  return std::memcmp(&a, &b, sizeof(double)) == 0;
}

// obs = mean + sqrt(var) * standard normal: exactly calibrated by
// construction, with heteroscedastic variances.
std::vector<EvalPair> calibrated(std::size_t n, std::uint64_t seed) {
  Rng r(seed);
  std::vector<EvalPair> ps;
  ps.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double mean = r.uniform(-2.0, 2.0);
    const double s = 0.5 + r.uniform();
    ps.push_back(pair_of(mean + s * r.gaussian(), mean, s * s));
  }
  return ps;
}

} // namespace

TEST_CASE("z-scores") {
  std::vector<EvalPair> ps = {pair_of(1.0, 1.0, 0.5), pair_of(3.0, 1.0, 4.0),
                              pair_of(-2.0, 1.0, 9.0)};
  std::vector<double> z = z_scores(ps);
  CHECK(z[0] == 0.0);
  CHECK(z[1] == 1.0);
  CHECK(z[2] == -1.0);

  SUBCASE("non-positive variance lists offending indices") {
    ps.push_back(pair_of(0.0, 0.0, 0.0));
    ps.push_back(pair_of(0.0, 0.0, -1.0));
    try {
      z_scores(ps);
      FAIL("expected invalid_argument");
    } catch (const std::invalid_argument& e) {
      const std::string msg = e.what();
      CHECK(msg.find("3") != std::string::npos);
      CHECK(msg.find("4") != std::string::npos);
    }
  }
}

TEST_CASE("hand-checked summary values") {
  SUBCASE("rmv of variances one and four") {
    std::vector<EvalPair> ps = {pair_of(0.0, 0.0, 1.0), pair_of(0.0, 0.0, 4.0)};
    CalibrationReport r = compute_report(ps, 1);
    CHECK(r.rmv == std::sqrt(2.5));
  }
  SUBCASE("cv of standard deviations one and three") {
    std::vector<EvalPair> ps = {pair_of(0.0, 0.0, 1.0), pair_of(0.0, 0.0, 9.0)};
    CalibrationReport r = compute_report(ps, 1);
    CHECK(r.cv == 0.5);
  }
  SUBCASE("homoscedastic cv is exactly zero") {
    std::vector<EvalPair> ps;
    for (int i = 0; i < 7; ++i)
      ps.push_back(pair_of(0.1 * i, 0.0, 0.09));
    CHECK(compute_report(ps, 3).cv == 0.0);
  }
  SUBCASE("nll of unit-variance residuals") {
    const double half_ln_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
    std::vector<EvalPair> zero = {pair_of(2.0, 2.0, 1.0)};
    CHECK(compute_report(zero, 1).nll ==
          doctest::Approx(half_ln_2pi).epsilon(1e-12));
    std::vector<EvalPair> one = {pair_of(3.0, 2.0, 1.0)};
    CHECK(compute_report(one, 1).nll ==
          doctest::Approx(half_ln_2pi + 0.5).epsilon(1e-12));
  }
  SUBCASE("matched single bin gives zero ence") {
    std::vector<EvalPair> ps = {pair_of(2.0, 0.0, 4.0), pair_of(-2.0, 0.0, 4.0)};
    CalibrationReport r = compute_report(ps, 1);
    CHECK(r.rmse == r.rmv);
    CHECK(r.ence == 0.0);
  }
}

TEST_CASE("binning layout") {
  SUBCASE("one bin reproduces the global summary") {
    std::vector<EvalPair> ps = calibrated(50, 3);
    CalibrationReport r = compute_report(ps, 1);
    REQUIRE(r.bins.size() == 1);
    CHECK(r.bins[0].rmv == doctest::Approx(r.rmv).epsilon(1e-15));
    CHECK(r.bins[0].rmse == doctest::Approx(r.rmse).epsilon(1e-15));
    CHECK(r.bins[0].count == 50);
  }
  SUBCASE("one pair per bin takes the sorted variances") {
    std::vector<EvalPair> ps = {pair_of(0, 0, 4.0), pair_of(0, 0, 1.0),
                                pair_of(0, 0, 9.0)};
    std::vector<ReliabilityBin> bins = reliability_bins(ps, 3);
    REQUIRE(bins.size() == 3);
    CHECK(bins[0].rmv == 1.0);
    CHECK(bins[1].rmv == 2.0);
    CHECK(bins[2].rmv == 3.0);
    for (const ReliabilityBin& b : bins) CHECK(b.count == 1);
  }
  SUBCASE("remainder spreads one per bin from the front") {
    std::vector<EvalPair> ps = calibrated(23, 4);
    std::vector<ReliabilityBin> bins = reliability_bins(ps, 5);
    REQUIRE(bins.size() == 5);
    CHECK(bins[0].count == 5);
    CHECK(bins[1].count == 5);
    CHECK(bins[2].count == 5);
    CHECK(bins[3].count == 4);
    CHECK(bins[4].count == 4);
  }
  SUBCASE("bins ordered by increasing rmv") {
    std::vector<EvalPair> ps = calibrated(1000, 5);
    std::vector<ReliabilityBin> bins = reliability_bins(ps, 10);
    for (std::size_t i = 1; i < bins.size(); ++i)
      CHECK(bins[i - 1].rmv <= bins[i].rmv);
  }
  SUBCASE("invalid bin counts") {
    std::vector<EvalPair> ps = calibrated(5, 6);
    CHECK_THROWS_AS(reliability_bins(ps, 6), std::invalid_argument);
    CHECK_THROWS_AS(reliability_bins(ps, 0), std::invalid_argument);
    CHECK_THROWS_AS(compute_report(ps, 6), std::invalid_argument);
  }
}

TEST_CASE("calibrated synthetic data scores as calibrated") {
  std::vector<EvalPair> ps = calibrated(100000, 2026);
  CalibrationReport r = compute_report(ps, 10);
  CHECK(r.rzv > 0.99);
  CHECK(r.rzv < 1.01);
  CHECK(r.ence < 0.03);
  CHECK(std::abs(r.mean_z) < 0.02);
  for (const ReliabilityBin& b : r.bins) {
    CHECK(b.rmse / b.rmv > 0.9);
    CHECK(b.rmse / b.rmv < 1.1);
  }
}

TEST_CASE("variance scaling by four") {
  std::vector<EvalPair> ps = calibrated(500, 11);
  std::vector<EvalPair> scaled = ps;
  for (EvalPair& p : scaled) p.predicted_var *= 4.0;
  CalibrationReport a = compute_report(ps, 10);
  CalibrationReport b = compute_report(scaled, 10);
  CHECK(same_bits(b.rmv, 2.0 * a.rmv));
  CHECK(same_bits(b.cv, a.cv));
  CHECK(same_bits(b.rzv, 0.5 * a.rzv));
  CHECK(same_bits(b.mean_z, 0.5 * a.mean_z));
  CHECK(same_bits(b.mae, a.mae));
  CHECK(same_bits(b.rmse, a.rmse));
}

TEST_CASE("report invariant under permutation") {
  std::vector<EvalPair> ps = calibrated(301, 12);
  std::vector<EvalPair> shuffled = ps;
  Rng r(99);
  for (std::size_t i = shuffled.size(); i > 1; --i)
    std::swap(shuffled[i - 1], shuffled[r.below(i)]);
  CalibrationReport a = compute_report(ps, 10);
  CalibrationReport b = compute_report(shuffled, 10);
  CHECK(same_bits(a.mae, b.mae));
  CHECK(same_bits(a.rmse, b.rmse));
  CHECK(same_bits(a.nll, b.nll));
  CHECK(same_bits(a.rzv, b.rzv));
  CHECK(same_bits(a.mean_z, b.mean_z));
  CHECK(same_bits(a.ence, b.ence));
  CHECK(same_bits(a.cv, b.cv));
  CHECK(same_bits(a.rmv, b.rmv));
  REQUIRE(a.bins.size() == b.bins.size());
  for (std::size_t i = 0; i < a.bins.size(); ++i) {
    CHECK(same_bits(a.bins[i].rmv, b.bins[i].rmv));
    CHECK(same_bits(a.bins[i].rmse, b.bins[i].rmse));
    CHECK(a.bins[i].count == b.bins[i].count);
  }
}

TEST_CASE("serialized forms") {
  std::vector<EvalPair> ps = calibrated(40, 13);
  CalibrationReport r = compute_report(ps, 4);
  nlohmann::json j = report_to_json(r);
  CHECK(j.at("rmv").get<double>() == r.rmv);
  CHECK(j.at("bins").size() == 4);
  CHECK(j.at("bins")[2].at("bin").get<int>() == 2);

  std::string csv = bins_to_csv(r.bins);
  CHECK(csv.rfind("bin,rmv,rmse,count\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);
}
