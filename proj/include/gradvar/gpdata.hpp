#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace gradvar {

/// Squared-exponential kernel k(a,b) = alpha^2 exp(-(a-b)^2 / (2 ell^2)),
/// plus a same-index diagonal term alpha^2 * jitter on the function block.
struct KernelSpec {
  double alpha = 0.2;
  double ell = 0.5;
  double jitter = 1e-4;

  void validate() const;
};

/// Covariances between function values and slopes at two points:
///   k     = cov(f(a), f(b))
///   dk_db = cov(f(a), f'(b))
///   dk_da = cov(f'(a), f(b))
///   d2k   = cov(f'(a), f'(b))
struct KernelBlock {
  double k;
  double dk_db;
  double dk_da;
  double d2k;
};

KernelBlock kernel_block(const KernelSpec& spec, double a, double b,
                         bool same_index);

/// Dense row-major symmetric 2N x 2N covariance of (f(x_1..N), f'(x_1..N)).
/// Exposed for the positive-definiteness and symmetry checks.
std::vector<double> joint_covariance(std::span<const double> points,
                                     const KernelSpec& spec);

/// In-place lower-triangular Cholesky of a row-major n x n matrix; the upper
/// triangle is left untouched. Returns false when a pivot is not positive.
bool cholesky(std::vector<double>& a, std::size_t n);

/// One joint realization of a GP and its derivative at the given points.
struct JointSample {
  std::vector<double> value;
  std::vector<double> slope;
};

/// Draws (f(x_i), f'(x_i)) from the joint Gaussian. The Gaussian variates
/// are drawn before factorization, so the realization depends only on
/// (points, spec, seed), not on how much stabilizing jitter the Cholesky
/// needed. Throws std::runtime_error if factorization fails even at the
/// largest jitter level.
JointSample sample_joint(std::span<const double> points,
                         const KernelSpec& spec, std::uint64_t seed);

struct GroundTruth {
  double energy;
  double force;
};

/// Noise-free toy curve y(x) = x + 0.3 sin(2 pi x) + 0.1 sin(4 pi x) and its
/// force -y'(x).
GroundTruth ground_truth(double x);

struct DataRow {
  std::vector<double> x;
  double energy = 0.0;
  std::vector<double> force;
};

/// Rows plus free-form metadata, written as "# key=value" comment lines.
/// Metadata order is preserved so a load/save round trip is byte-identical.
struct Dataset {
  int dim = 1;
  std::vector<DataRow> rows;
  std::vector<std::pair<std::string, std::string>> metadata;

  const std::string* find_meta(const std::string& key) const;
};

/// n samples with x uniform on [lo, hi), energies y(x)+eta(x) and forces
/// -(y'(x)+eta'(x)) from one joint noise realization.
Dataset generate_dataset(int n, double lo, double hi, const KernelSpec& spec,
                         std::uint64_t seed);

std::string dataset_to_csv(const Dataset& ds);
Dataset dataset_from_csv(const std::string& text);
void save_dataset(const std::string& path, const Dataset& ds);
Dataset load_dataset(const std::string& path);

} // namespace gradvar
