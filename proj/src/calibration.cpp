#include "gradvar/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>

#include "gradvar/io_util.hpp"

namespace gradvar {
namespace {

void validate_pairs(std::span<const EvalPair> pairs) {
  if (pairs.empty()) throw std::invalid_argument("no evaluation pairs");
  std::vector<std::size_t> bad;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const EvalPair& p = pairs[i];
    if (!(p.predicted_var > 0.0) || !std::isfinite(p.predicted_var) ||
        !std::isfinite(p.observed) || !std::isfinite(p.predicted_mean))
      bad.push_back(i);
  }
  if (bad.empty()) return;
  std::string msg = "non-positive or non-finite predictive variance at index";
  const std::size_t shown = std::min<std::size_t>(bad.size(), 10);
  for (std::size_t i = 0; i < shown; ++i)
    msg += (i ? ", " : " ") + std::to_string(bad[i]);
  if (bad.size() > shown)
    msg += " (+" + std::to_string(bad.size() - shown) + " more)";
  throw std::invalid_argument(msg);
}

// Content-keyed total order: any permutation of the input sorts to the
// same sequence, so every downstream sum is bit-identical.
std::vector<std::size_t> canonical_order(std::span<const EvalPair> pairs) {
  std::vector<std::size_t> idx(pairs.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    const EvalPair& pa = pairs[a];
    const EvalPair& pb = pairs[b];
    if (pa.predicted_var != pb.predicted_var)
      return pa.predicted_var < pb.predicted_var;
    if (pa.observed != pb.observed) return pa.observed < pb.observed;
    return pa.predicted_mean < pb.predicted_mean;
  });
  return idx;
}

// Running mean and centered second moment; exactly zero spread for
// constant input, which keeps CV of homoscedastic data at 0.
struct Welford {
  double mean = 0.0;
  double m2 = 0.0;
  std::size_t n = 0;

  void add(double x) {
    ++n;
    const double d = x - mean;
    mean += d / static_cast<double>(n);
    m2 += d * (x - mean);
  }
  double pop_var() const { return m2 / static_cast<double>(n); }
};

} // namespace

std::vector<double> z_scores(std::span<const EvalPair> pairs) {
  validate_pairs(pairs);
  std::vector<double> z;
  z.reserve(pairs.size());
  for (const EvalPair& p : pairs)
    z.push_back((p.observed - p.predicted_mean) / std::sqrt(p.predicted_var));
  return z;
}

std::vector<ReliabilityBin> reliability_bins(std::span<const EvalPair> pairs,
                                             int k) {
  validate_pairs(pairs);
  if (k < 1) throw std::invalid_argument("bin count must be at least 1");
  if (static_cast<std::size_t>(k) > pairs.size())
    throw std::invalid_argument("more bins than evaluation pairs");
  const std::vector<std::size_t> idx = canonical_order(pairs);

  const std::size_t n = pairs.size();
  const std::size_t base = n / static_cast<std::size_t>(k);
  const std::size_t rem = n % static_cast<std::size_t>(k);
  std::vector<ReliabilityBin> bins;
  bins.reserve(static_cast<std::size_t>(k));
  std::size_t at = 0;
  for (std::size_t b = 0; b < static_cast<std::size_t>(k); ++b) {
    const std::size_t count = base + (b < rem ? 1 : 0);
    double var_sum = 0.0;
    double err_sum = 0.0;
    for (std::size_t i = 0; i < count; ++i, ++at) {
      const EvalPair& p = pairs[idx[at]];
      const double r = p.observed - p.predicted_mean;
      var_sum += p.predicted_var;
      err_sum += r * r;
    }
    ReliabilityBin bin;
    bin.count = count;
    bin.rmv = std::sqrt(var_sum / static_cast<double>(count));
    bin.rmse = std::sqrt(err_sum / static_cast<double>(count));
    bins.push_back(bin);
  }
  return bins;
}

CalibrationReport compute_report(std::span<const EvalPair> pairs, int k) {
  validate_pairs(pairs);
  if (k < 1) throw std::invalid_argument("bin count must be at least 1");
  if (static_cast<std::size_t>(k) > pairs.size())
    throw std::invalid_argument("more bins than evaluation pairs");
  const std::vector<std::size_t> idx = canonical_order(pairs);
  const double n = static_cast<double>(pairs.size());

  double abs_sum = 0.0;
  double sq_sum = 0.0;
  double var_sum = 0.0;
  double nll_sum = 0.0;
  Welford z_acc;
  Welford s_acc;
  for (std::size_t i : idx) {
    const EvalPair& p = pairs[i];
    const double r = p.observed - p.predicted_mean;
    const double v = p.predicted_var;
    abs_sum += std::abs(r);
    sq_sum += r * r;
    var_sum += v;
    nll_sum += 0.5 * (r * r / v + std::log(v) +
                      std::log(2.0 * std::numbers::pi));
    z_acc.add(r / std::sqrt(v));
    s_acc.add(std::sqrt(v));
  }

  CalibrationReport rep;
  rep.mae = abs_sum / n;
  rep.rmse = std::sqrt(sq_sum / n);
  rep.nll = nll_sum / n;
  rep.mean_z = z_acc.mean;
  rep.rzv = std::sqrt(z_acc.pop_var());
  rep.cv = std::sqrt(s_acc.pop_var()) / s_acc.mean;
  rep.rmv = std::sqrt(var_sum / n);
  rep.bins = reliability_bins(pairs, k);
  double ence = 0.0;
  for (const ReliabilityBin& b : rep.bins)
    ence += std::abs(b.rmv - b.rmse) / b.rmv;
  rep.ence = ence / static_cast<double>(k);
  return rep;
}

nlohmann::json report_to_json(const CalibrationReport& r) {
  nlohmann::json j;
  j["mae"] = r.mae;
  j["rmse"] = r.rmse;
  j["nll"] = r.nll;
  j["rzv"] = r.rzv;
  j["mean_z"] = r.mean_z;
  j["ence"] = r.ence;
  j["cv"] = r.cv;
  j["rmv"] = r.rmv;
  nlohmann::json bins = nlohmann::json::array();
  for (std::size_t i = 0; i < r.bins.size(); ++i) {
    nlohmann::json b;
    b["bin"] = i;
    b["rmv"] = r.bins[i].rmv;
    b["rmse"] = r.bins[i].rmse;
    b["count"] = r.bins[i].count;
    bins.push_back(b);
  }
  j["bins"] = bins;
  return j;
}

std::string bins_to_csv(std::span<const ReliabilityBin> bins) {
  std::string out = "bin,rmv,rmse,count\n";
  for (std::size_t i = 0; i < bins.size(); ++i) {
    out += std::to_string(i);
    out += ',';
    out += fmt_g17(bins[i].rmv);
    out += ',';
    out += fmt_g17(bins[i].rmse);
    out += ',';
    out += std::to_string(bins[i].count);
    out += '\n';
  }
  return out;
}

} // namespace gradvar
