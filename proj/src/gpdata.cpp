#include "gradvar/gpdata.hpp"

#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "gradvar/io_util.hpp"
#include "gradvar/rng.hpp"

namespace gradvar {

void KernelSpec::validate() const {
  if (!(alpha > 0.0)) throw std::invalid_argument("kernel: alpha must be > 0");
  if (!(ell > 0.0)) throw std::invalid_argument("kernel: ell must be > 0");
  if (!(jitter >= 0.0)) throw std::invalid_argument("kernel: jitter must be >= 0");
}

KernelBlock kernel_block(const KernelSpec& spec, double a, double b,
                         bool same_index) {
  const double d = a - b;
  const double l2 = spec.ell * spec.ell;
  const double e = spec.alpha * spec.alpha * std::exp(-d * d / (2.0 * l2));
  KernelBlock blk;
  blk.k = e + (same_index ? spec.alpha * spec.alpha * spec.jitter : 0.0);
  blk.dk_db = d / l2 * e;
  blk.dk_da = -blk.dk_db;
  blk.d2k = (1.0 / l2 - d * d / (l2 * l2)) * e;
  return blk;
}

std::vector<double> joint_covariance(std::span<const double> points,
                                     const KernelSpec& spec) {
  const std::size_t n = points.size();
  const std::size_t m = 2 * n;
  std::vector<double> c(m * m);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      KernelBlock blk = kernel_block(spec, points[i], points[j], i == j);
      c[i * m + j] = blk.k;
      c[i * m + (n + j)] = blk.dk_db;
      c[(n + i) * m + j] = blk.dk_da;
      c[(n + i) * m + (n + j)] = blk.d2k;
    }
  }
  return c;
}

bool cholesky(std::vector<double>& a, std::size_t n) {
  for (std::size_t j = 0; j < n; ++j) {
    double d = a[j * n + j];
    for (std::size_t k = 0; k < j; ++k) d -= a[j * n + k] * a[j * n + k];
    if (!(d > 0.0)) return false;
    const double ljj = std::sqrt(d);
    a[j * n + j] = ljj;
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a[i * n + j];
      for (std::size_t k = 0; k < j; ++k) s -= a[i * n + k] * a[j * n + k];
      a[i * n + j] = s / ljj;
    }
  }
  return true;
}

JointSample sample_joint(std::span<const double> points,
                         const KernelSpec& spec, std::uint64_t seed) {
  spec.validate();
  if (points.empty())
    throw std::invalid_argument("sample_joint: need at least one point");
  const std::size_t n = points.size();
  const std::size_t m = 2 * n;
  const std::vector<double> cov = joint_covariance(points, spec);

  Rng rng(seed);
  std::vector<double> z(m);
  for (double& v : z) v = rng.gaussian();

  std::vector<double> l;
  bool ok = false;
  double extra = 0.0; // dimensionless, applied relative to alpha^2 like jitter
  for (;;) {
    l = cov;
    if (extra > 0.0) {
      const double bump = extra * spec.alpha * spec.alpha;
      for (std::size_t i = 0; i < m; ++i) l[i * m + i] += bump;
    }
    if (cholesky(l, m)) {
      ok = true;
      break;
    }
    extra = extra == 0.0 ? 1e-10 : extra * 10.0;
    if (extra > 1e-4) break;
  }
  if (!ok)
    throw std::runtime_error(
        "sample_joint: covariance not positive definite even with jitter 1e-4");

  JointSample out;
  out.value.resize(n);
  out.slope.resize(n);
  for (std::size_t i = 0; i < m; ++i) {
    double s = 0.0;
    for (std::size_t k = 0; k <= i; ++k) s += l[i * m + k] * z[k];
    (i < n ? out.value[i] : out.slope[i - n]) = s;
  }
  return out;
}

GroundTruth ground_truth(double x) {
  constexpr double pi = std::numbers::pi;
  GroundTruth gt;
  gt.energy = x + 0.3 * std::sin(2.0 * pi * x) + 0.1 * std::sin(4.0 * pi * x);
  gt.force = -(1.0 + 0.6 * pi * std::cos(2.0 * pi * x) +
               0.4 * pi * std::cos(4.0 * pi * x));
  return gt;
}

const std::string* Dataset::find_meta(const std::string& key) const {
  for (const auto& [k, v] : metadata)
    if (k == key) return &v;
  return nullptr;
}

Dataset generate_dataset(int n, double lo, double hi, const KernelSpec& spec,
                         std::uint64_t seed) {
  spec.validate();
  if (n < 1) throw std::invalid_argument("generate_dataset: n must be >= 1");
  if (!(lo < hi)) throw std::invalid_argument("generate_dataset: need lo < hi");

  Rng rx(derive_seed(seed, 0));
  std::vector<double> xs(n);
  for (double& x : xs) x = rx.uniform(lo, hi);

  JointSample noise = sample_joint(xs, spec, derive_seed(seed, 1));

  Dataset ds;
  ds.dim = 1;
  ds.rows.resize(n);
  for (int i = 0; i < n; ++i) {
    GroundTruth gt = ground_truth(xs[i]);
    ds.rows[i].x = {xs[i]};
    ds.rows[i].energy = gt.energy + noise.value[i];
    // force observation shares the realization: -(y' + eta')
    ds.rows[i].force = {gt.force - noise.slope[i]};
  }
  ds.metadata = {
      {"generator", "gp-toy"},
      {"seed", std::to_string(seed)},
      {"alpha", fmt_g17(spec.alpha)},
      {"ell", fmt_g17(spec.ell)},
      {"jitter", fmt_g17(spec.jitter)},
      {"d", "1"},
  };
  return ds;
}

std::string dataset_to_csv(const Dataset& ds) {
  std::ostringstream out;
  for (const auto& [k, v] : ds.metadata) out << "# " << k << "=" << v << "\n";
  for (int d = 0; d < ds.dim; ++d) out << "x" << d << ",";
  out << "energy";
  for (int d = 0; d < ds.dim; ++d) out << ",f" << d;
  out << "\n";
  for (const DataRow& row : ds.rows) {
    for (int d = 0; d < ds.dim; ++d) out << fmt_g17(row.x[d]) << ",";
    out << fmt_g17(row.energy);
    for (int d = 0; d < ds.dim; ++d) out << "," << fmt_g17(row.force[d]);
    out << "\n";
  }
  return out.str();
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  fields.push_back(cur);
  return fields;
}

double parse_double(const std::string& s, int line_no) {
  const char* begin = s.c_str();
  char* end = nullptr;
  const double v = std::strtod(begin, &end);
  if (end == begin || !std::isfinite(v))
    throw std::runtime_error("dataset: bad numeric field '" + s + "' on line " +
                             std::to_string(line_no));
  return v;
}

} // namespace

Dataset dataset_from_csv(const std::string& text) {
  Dataset ds;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::string body = line.substr(1);
      if (!body.empty() && body.front() == ' ') body.erase(0, 1);
      const std::size_t eq = body.find('=');
      if (eq == std::string::npos)
        ds.metadata.emplace_back(body, "");
      else
        ds.metadata.emplace_back(body.substr(0, eq), body.substr(eq + 1));
      continue;
    }
    std::vector<std::string> fields = split_csv_line(line);
    if (!have_header) {
      // header: x0,...,x{D-1},energy,f0,...,f{D-1}
      int energy_col = -1;
      for (std::size_t i = 0; i < fields.size(); ++i)
        if (fields[i] == "energy") energy_col = static_cast<int>(i);
      if (energy_col < 1 ||
          fields.size() != static_cast<std::size_t>(2 * energy_col + 1))
        throw std::runtime_error(
            "dataset: header must be x0,..,energy,f0,.. (line " +
            std::to_string(line_no) + ")");
      ds.dim = energy_col;
      have_header = true;
      continue;
    }
    if (fields.size() != static_cast<std::size_t>(2 * ds.dim + 1))
      throw std::runtime_error("dataset: wrong field count on line " +
                               std::to_string(line_no));
    DataRow row;
    row.x.resize(ds.dim);
    row.force.resize(ds.dim);
    for (int d = 0; d < ds.dim; ++d) row.x[d] = parse_double(fields[d], line_no);
    row.energy = parse_double(fields[ds.dim], line_no);
    for (int d = 0; d < ds.dim; ++d)
      row.force[d] = parse_double(fields[ds.dim + 1 + d], line_no);
    ds.rows.push_back(std::move(row));
  }
  if (!have_header) throw std::runtime_error("dataset: missing header line");
  if (ds.rows.empty()) throw std::runtime_error("dataset: no data rows");
  return ds;
}

void save_dataset(const std::string& path, const Dataset& ds) {
  write_file(path, dataset_to_csv(ds));
}

Dataset load_dataset(const std::string& path) {
  return dataset_from_csv(read_file(path));
}

} // namespace gradvar
