#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace gradvar {

struct EvalPair {
  double observed = 0.0;
  double predicted_mean = 0.0;
  double predicted_var = 0.0; // total predictive variance
};

/// z_n = (observed_n - mean_n) / sqrt(var_n), in input order. Throws
/// std::invalid_argument listing the offending indices when any variance
/// is non-positive or any field non-finite.
std::vector<double> z_scores(std::span<const EvalPair> pairs);

struct ReliabilityBin {
  double rmv = 0.0;   // sqrt(mean predicted variance in the bin)
  double rmse = 0.0;  // sqrt(mean squared residual in the bin)
  std::size_t count = 0;
};

/// K equal-count bins by increasing variance. When N is not a multiple of
/// K the extra elements go one per bin starting from the first, so counts
/// differ by at most one. Ordering inside the sort is by the full pair
/// content, which makes the table invariant under input permutation.
std::vector<ReliabilityBin> reliability_bins(std::span<const EvalPair> pairs,
                                             int k);

struct CalibrationReport {
  double mae = 0.0;
  double rmse = 0.0;
  double nll = 0.0;    // mean Gaussian negative log likelihood
  double rzv = 0.0;    // root z-score variance, about the empirical mean z
  double mean_z = 0.0; // bias diagnostic
  double ence = 0.0;   // (1/K) sum |RMV_k - RMSE_k| / RMV_k
  double cv = 0.0;     // population std of sqrt(var) over its mean
  double rmv = 0.0;    // sqrt(mean variance)
  std::vector<ReliabilityBin> bins;
};

CalibrationReport compute_report(std::span<const EvalPair> pairs, int k = 10);

nlohmann::json report_to_json(const CalibrationReport& r);
std::string bins_to_csv(std::span<const ReliabilityBin> bins);

} // namespace gradvar
