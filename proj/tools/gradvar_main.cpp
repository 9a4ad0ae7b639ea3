#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"

#include "gradvar/calibration.hpp"
#include "gradvar/ensemble.hpp"
#include "gradvar/gpdata.hpp"
#include "gradvar/io_util.hpp"
#include "gradvar/oracle.hpp"
#include "gradvar/potential.hpp"
#include "gradvar/svg.hpp"
#include "gradvar/training.hpp"

namespace fs = std::filesystem;
using namespace gradvar;

namespace {

std::vector<int> parse_hidden(const std::string& s) {
  std::vector<int> out;
  std::size_t at = 0;
  while (at <= s.size()) {
    const std::size_t comma = std::min(s.find(',', at), s.size());
    const std::string piece = s.substr(at, comma - at);
    char* end = nullptr;
    const long v = std::strtol(piece.c_str(), &end, 10);
    if (end == piece.c_str() || *end != '\0' || v < 1)
      throw std::invalid_argument("--hidden expects positive integers, got '" +
                                  piece + "'");
    out.push_back(static_cast<int>(v));
    at = comma + 1;
    if (comma == s.size()) break;
  }
  if (out.empty()) throw std::invalid_argument("--hidden must not be empty");
  return out;
}

TrainConfig load_train_config(const std::string& path) {
  if (path.empty()) return TrainConfig{};
  return train_config_from_json(nlohmann::json::parse(read_file(path)));
}

// Head of the data trains, the tail validates; a zero fraction validates
// on the training rows themselves (the tiny-toy setting).
std::pair<Dataset, Dataset> split_train_val(const Dataset& all,
                                            double val_frac) {
  if (!(val_frac >= 0.0) || val_frac >= 1.0)
    throw std::invalid_argument("--val-frac must lie in [0, 1)");
  const std::size_t n = all.rows.size();
  std::size_t n_val =
      static_cast<std::size_t>(std::floor(val_frac * static_cast<double>(n) + 0.5));
  if (n_val >= n) n_val = n - 1;
  if (n_val == 0) return {all, all};
  Dataset train = all;
  Dataset val = all;
  train.rows.assign(all.rows.begin(),
                    all.rows.begin() + static_cast<std::ptrdiff_t>(n - n_val));
  val.rows.assign(all.rows.begin() + static_cast<std::ptrdiff_t>(n - n_val),
                  all.rows.end());
  return {train, val};
}

int thread_limit(int members) {
  unsigned hw = std::thread::hardware_concurrency();
  if (hw == 0) hw = 1;
  long limit = static_cast<long>(hw);
  if (const char* env = std::getenv("GRADVAR_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || v < 1)
      throw std::invalid_argument("GRADVAR_THREADS must be a positive integer");
    limit = v;
  }
  return static_cast<int>(std::min<long>(members, limit));
}

std::vector<Checkpoint> train_members(const ModelSpec& spec,
                                      const TrainConfig& base,
                                      const Dataset& train, const Dataset& val,
                                      int members) {
  std::vector<std::optional<TrainResult>> results(members);
  std::vector<std::exception_ptr> errors(members);
  std::atomic<int> next{0};
  const auto work = [&]() {
    for (int i = next.fetch_add(1); i < members; i = next.fetch_add(1)) {
      try {
        TrainConfig cfg = base;
        cfg.seed = base.seed + static_cast<std::uint64_t>(i);
        results[static_cast<std::size_t>(i)].emplace(
            train_model(spec, cfg, train, val));
      } catch (...) {
        errors[static_cast<std::size_t>(i)] = std::current_exception();
      }
    }
  };
  const int threads = thread_limit(members);
  if (threads <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(threads));
    for (int t = 0; t < threads; ++t) pool.emplace_back(work);
    for (std::thread& t : pool) t.join();
  }
  for (const std::exception_ptr& e : errors)
    if (e) std::rethrow_exception(e);
  std::vector<Checkpoint> out;
  out.reserve(static_cast<std::size_t>(members));
  for (std::optional<TrainResult>& r : results)
    out.push_back(Checkpoint{std::move(r->model), std::move(r->meta)});
  return out;
}

std::vector<std::string> write_members(const fs::path& dir,
                                       const std::vector<Checkpoint>& members) {
  fs::create_directories(dir);
  std::vector<std::string> names;
  for (std::size_t i = 0; i < members.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "member_%03zu.json", i);
    save_checkpoint((dir / name).string(), members[i].model,
                    members[i].training);
    names.emplace_back(name);
  }
  save_manifest((dir / "manifest.json").string(), names,
                members.front().model);
  return names;
}

// Input points from any CSV that carries x0..x{dim-1} columns; extra
// columns (energies, forces) are ignored.
std::vector<std::vector<double>> read_points(const std::string& path,
                                             int dim) {
  const CsvTable t = parse_csv_table(read_file(path));
  std::vector<int> cols;
  for (int d = 0; d < dim; ++d)
    cols.push_back(t.column("x" + std::to_string(d)));
  std::vector<std::vector<double>> points;
  points.reserve(t.rows.size());
  for (const std::vector<double>& row : t.rows) {
    std::vector<double> x(dim);
    for (int d = 0; d < dim; ++d)
      x[static_cast<std::size_t>(d)] = row[static_cast<std::size_t>(cols[d])];
    points.push_back(std::move(x));
  }
  if (points.empty()) throw std::runtime_error("no input points in " + path);
  return points;
}

std::string prediction_csv(const std::vector<std::vector<double>>& points,
                           const std::vector<PredictiveDist>& dists, int dim,
                           bool with_total) {
  std::string out;
  for (int d = 0; d < dim; ++d) out += "x" + std::to_string(d) + ",";
  out += "e_mean,e_alea,e_epis";
  if (with_total) out += ",e_total";
  for (int d = 0; d < dim; ++d) {
    const std::string f = "f" + std::to_string(d);
    out += "," + f + "_mean," + f + "_alea," + f + "_epis";
    if (with_total) out += "," + f + "_total";
  }
  out += "\n";
  for (std::size_t i = 0; i < points.size(); ++i) {
    const PredictiveDist& p = dists[i];
    for (int d = 0; d < dim; ++d)
      out += fmt_g17(points[i][static_cast<std::size_t>(d)]) + ",";
    out += fmt_g17(p.energy_mean) + "," + fmt_g17(p.energy_var_alea) + "," +
           fmt_g17(p.energy_var_epis);
    if (with_total)
      out += "," + fmt_g17(p.energy_var_alea + p.energy_var_epis);
    for (int d = 0; d < dim; ++d) {
      const std::size_t dd = static_cast<std::size_t>(d);
      out += "," + fmt_g17(p.force_mean[dd]) + "," +
             fmt_g17(p.force_var_alea[dd]) + "," +
             fmt_g17(p.force_var_epis[dd]);
      if (with_total)
        out += "," + fmt_g17(p.force_var_alea[dd] + p.force_var_epis[dd]);
    }
    out += "\n";
  }
  return out;
}

struct PairedEval {
  std::vector<EvalPair> energy;
  std::vector<EvalPair> force; // component-wise over all rows and dims
};

PairedEval pair_up(const std::string& pred_path, const std::string& obs_path) {
  const CsvTable pred = parse_csv_table(read_file(pred_path));
  const Dataset obs = load_dataset(obs_path);
  if (pred.rows.size() != obs.rows.size())
    throw std::invalid_argument("prediction and observation row counts differ");
  const int dim = obs.dim;
  std::vector<int> xc;
  for (int d = 0; d < dim; ++d)
    xc.push_back(pred.column("x" + std::to_string(d)));
  const int em = pred.column("e_mean");
  const int ea = pred.column("e_alea");
  const int ee = pred.column("e_epis");
  std::vector<int> fm, fa, fe;
  for (int d = 0; d < dim; ++d) {
    const std::string f = "f" + std::to_string(d);
    fm.push_back(pred.column(f + "_mean"));
    fa.push_back(pred.column(f + "_alea"));
    fe.push_back(pred.column(f + "_epis"));
  }
  PairedEval out;
  for (std::size_t i = 0; i < pred.rows.size(); ++i) {
    const std::vector<double>& row = pred.rows[i];
    const DataRow& o = obs.rows[i];
    for (int d = 0; d < dim; ++d)
      if (row[static_cast<std::size_t>(xc[d])] != o.x[static_cast<std::size_t>(d)])
        throw std::invalid_argument("prediction and observation x disagree at row " +
                                    std::to_string(i));
    out.energy.push_back(EvalPair{o.energy, row[static_cast<std::size_t>(em)],
                                  row[static_cast<std::size_t>(ea)] +
                                      row[static_cast<std::size_t>(ee)]});
    for (int d = 0; d < dim; ++d) {
      const std::size_t dd = static_cast<std::size_t>(d);
      out.force.push_back(EvalPair{
          o.force[dd], row[static_cast<std::size_t>(fm[d])],
          row[static_cast<std::size_t>(fa[d])] +
              row[static_cast<std::size_t>(fe[d])]});
    }
  }
  return out;
}

void write_reliability_svg(const std::string& path,
                           const std::vector<ReliabilityBin>& bins,
                           const std::string& target) {
  double hi = 0.0;
  std::vector<double> xs, ys;
  for (const ReliabilityBin& b : bins) {
    xs.push_back(b.rmv);
    ys.push_back(b.rmse);
    hi = std::max({hi, b.rmv, b.rmse});
  }
  hi *= 1.08;
  SvgFigure fig;
  const int panel =
      fig.add_panel(90, 50, 640, 380, 0.0, hi, 0.0, hi,
                    "reliability diagram (" + target + ")",
                    "root mean predicted variance",
                    "empirical root mean squared error");
  const std::vector<double> ixs = {0.0, hi};
  fig.line(panel, ixs, ixs, "#888888", 1.0, "6,4");
  if (xs.size() >= 2) fig.line(panel, xs, ys, "#1f77b4", 1.5);
  fig.points(panel, xs, ys, 3.0, "#1f77b4");
  fig.legend(panel, {{"perfect calibration", "#888888",
                      SvgFigure::LegendEntry::kLine},
                     {"uncertainty bins", "#1f77b4",
                      SvgFigure::LegendEntry::kPoint}});
  write_file(path, fig.finish());
}

// ---- subcommands ----

struct GenDataArgs {
  int n = 20;
  double lo = -1.0;
  double hi = 1.0;
  double alpha = 0.2;
  double ell = 0.5;
  double jitter = 1e-4;
  std::uint64_t seed = 7;
  std::string out;
};

int run_gen_data(const GenDataArgs& a) {
  KernelSpec k;
  k.alpha = a.alpha;
  k.ell = a.ell;
  k.jitter = a.jitter;
  save_dataset(a.out, generate_dataset(a.n, a.lo, a.hi, k, a.seed));
  return 0;
}

struct TrainArgs {
  std::string data;
  std::string out;
  std::string config;
  std::string noise = "colored";
  std::string hidden = "64,64";
  double val_frac = 0.2;
  std::int64_t seed = -1; // <0 keeps the config seed
};

ModelSpec spec_for(const Dataset& ds, const TrainArgs& a) {
  ModelSpec spec;
  spec.input_dim = ds.dim;
  spec.hidden = parse_hidden(a.hidden);
  spec.noise_model = noise_model_from_string(a.noise);
  return spec;
}

TrainConfig config_for(const TrainArgs& a) {
  TrainConfig cfg = load_train_config(a.config);
  if (a.seed >= 0) cfg.seed = static_cast<std::uint64_t>(a.seed);
  return cfg;
}

int run_train(const TrainArgs& a) {
  const Dataset all = load_dataset(a.data);
  const auto [train, val] = split_train_val(all, a.val_frac);
  TrainResult res = train_model(spec_for(all, a), config_for(a), train, val);
  save_checkpoint(a.out, res.model, res.meta);
  return 0;
}

struct TrainEnsembleArgs {
  TrainArgs base;
  int members = 5;
  std::string out_dir;
};

int run_train_ensemble(const TrainEnsembleArgs& a) {
  const Dataset all = load_dataset(a.base.data);
  const auto [train, val] = split_train_val(all, a.base.val_frac);
  std::vector<Checkpoint> members = train_members(
      spec_for(all, a.base), config_for(a.base), train, val, a.members);
  write_members(a.out_dir, members);
  return 0;
}

struct PredictArgs {
  std::string manifest;
  std::string input;
  std::string out;
  bool total = false;
};

int run_predict(const PredictArgs& a) {
  const Ensemble e = load_ensemble(a.manifest);
  const int dim = e.spec().input_dim;
  const std::vector<std::vector<double>> points = read_points(a.input, dim);
  std::vector<PredictiveDist> dists;
  dists.reserve(points.size());
  for (const std::vector<double>& x : points) dists.push_back(e.aggregate(x));
  write_file(a.out, prediction_csv(points, dists, dim, a.total));
  return 0;
}

struct EvaluateArgs {
  std::string pred;
  std::string obs;
  std::string out;
  int bins = 10;
};

int run_evaluate(const EvaluateArgs& a) {
  const PairedEval pairs = pair_up(a.pred, a.obs);
  nlohmann::json j;
  j["energy"] = report_to_json(compute_report(pairs.energy, a.bins));
  j["force"] = report_to_json(compute_report(pairs.force, a.bins));
  write_file(a.out, j.dump(2) + "\n");
  return 0;
}

struct ReliabilityArgs {
  std::string pred;
  std::string obs;
  std::string target = "energy";
  int bins = 10;
  std::string out_csv;
  std::string out_svg;
};

int run_reliability(const ReliabilityArgs& a) {
  if (a.target != "energy" && a.target != "force")
    throw std::invalid_argument("--target must be energy or force");
  const PairedEval pairs = pair_up(a.pred, a.obs);
  const std::vector<EvalPair>& chosen =
      a.target == "energy" ? pairs.energy : pairs.force;
  const std::vector<ReliabilityBin> bins = reliability_bins(chosen, a.bins);
  write_file(a.out_csv, bins_to_csv(bins));
  write_reliability_svg(a.out_svg, bins, a.target);
  return 0;
}

struct VerifyArgs {
  int n = 100000;
  std::uint64_t seed = 1;
  std::string out;
};

int run_verify(const VerifyArgs& a) {
  const std::vector<VerifyCheck> checks = run_verify_suite(a.n, a.seed);
  bool all = true;
  std::printf("%-46s %15s %15s %12s %s\n", "check", "closed form", "empirical",
              "tolerance", "result");
  for (const VerifyCheck& c : checks) {
    std::printf("%-46s %15.6g %15.6g %12.4g %s\n", c.name.c_str(),
                c.closed_form, c.empirical, c.tolerance,
                c.pass ? "pass" : "FAIL");
    all = all && c.pass;
  }
  if (!a.out.empty())
    write_file(a.out, verify_to_json(checks).dump(2) + "\n");
  return all ? 0 : 2;
}

struct ToyFigureArgs {
  std::string out_dir;
  int n = 20;
  int members = 10;
  int grid_n = 301;
  double grid_lo = -1.5;
  double grid_hi = 1.5;
  std::uint64_t data_seed = 7;
  std::string hidden = "64,64";
  std::string config;
};

int run_toy_figure(const ToyFigureArgs& a) {
  if (a.grid_n < 2 || !(a.grid_hi > a.grid_lo))
    throw std::invalid_argument("bad prediction grid");
  fs::create_directories(a.out_dir);
  const fs::path dir(a.out_dir);

  KernelSpec k; // alpha 0.2, ell 0.5 defaults
  const Dataset ds = generate_dataset(a.n, -1.0, 1.0, k, a.data_seed);
  save_dataset((dir / "train.csv").string(), ds);

  ModelSpec spec;
  spec.input_dim = 1;
  spec.hidden = parse_hidden(a.hidden);
  const TrainConfig cfg = load_train_config(a.config);
  // The 20-point set is too small to hold rows back; validation reuses it.
  std::vector<Checkpoint> members =
      train_members(spec, cfg, ds, ds, a.members);
  write_members(dir, members);
  const Ensemble ens(std::move(members));

  std::vector<std::vector<double>> points;
  std::vector<PredictiveDist> dists;
  for (int i = 0; i < a.grid_n; ++i) {
    const double x = a.grid_lo + (a.grid_hi - a.grid_lo) * i / (a.grid_n - 1);
    points.push_back({x});
    dists.push_back(ens.aggregate(points.back()));
  }
  write_file((dir / "predictions.csv").string(),
             prediction_csv(points, dists, 1, true));

  // Figure: energy and force panels with truth, ensemble mean, one-sigma
  // aleatoric and total bands, and the training observations.
  std::vector<double> xs(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) xs[i] = points[i][0];
  struct Series {
    std::vector<double> truth, mean, alo, ahi, tlo, thi;
    std::vector<double> obs_x, obs_y;
    double lo = 0.0, hi = 0.0;
  };
  const auto series = [&](bool energy) {
    Series s;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      const PredictiveDist& p = dists[i];
      const double mean = energy ? p.energy_mean : p.force_mean[0];
      const double alea = energy ? p.energy_var_alea : p.force_var_alea[0];
      const double tot =
          alea + (energy ? p.energy_var_epis : p.force_var_epis[0]);
      const GroundTruth gt = ground_truth(xs[i]);
      s.truth.push_back(energy ? gt.energy : gt.force);
      s.mean.push_back(mean);
      s.alo.push_back(mean - std::sqrt(alea));
      s.ahi.push_back(mean + std::sqrt(alea));
      s.tlo.push_back(mean - std::sqrt(tot));
      s.thi.push_back(mean + std::sqrt(tot));
    }
    for (const DataRow& r : ds.rows) {
      s.obs_x.push_back(r.x[0]);
      s.obs_y.push_back(energy ? r.energy : r.force[0]);
    }
    s.lo = s.tlo[0];
    s.hi = s.thi[0];
    for (double v : s.tlo) s.lo = std::min(s.lo, v);
    for (double v : s.thi) s.hi = std::max(s.hi, v);
    for (double v : s.truth) {
      s.lo = std::min(s.lo, v);
      s.hi = std::max(s.hi, v);
    }
    for (double v : s.obs_y) {
      s.lo = std::min(s.lo, v);
      s.hi = std::max(s.hi, v);
    }
    const double pad = 0.08 * (s.hi - s.lo);
    s.lo -= pad;
    s.hi += pad;
    return s;
  };

  SvgFigure fig;
  const Series es = series(true);
  const Series fsr = series(false);
  const int ep = fig.add_panel(65, 50, 310, 370, a.grid_lo, a.grid_hi, es.lo,
                               es.hi, "energy", "x", "energy");
  const int fp = fig.add_panel(465, 50, 310, 370, a.grid_lo, a.grid_hi,
                               fsr.lo, fsr.hi, "force", "x", "force");
  const auto draw = [&fig](int panel, const Series& s,
                           const std::vector<double>& grid) {
    fig.band(panel, grid, s.tlo, s.thi, "#1f77b4", 0.18);
    fig.band(panel, grid, s.alo, s.ahi, "#ff7f0e", 0.30);
    fig.line(panel, grid, s.truth, "#2ca02c", 1.5, "5,3");
    fig.line(panel, grid, s.mean, "#1f77b4", 1.8);
    fig.points(panel, s.obs_x, s.obs_y, 2.5, "#d62728");
  };
  draw(ep, es, xs);
  draw(fp, fsr, xs);
  fig.legend(ep, {{"ensemble mean", "#1f77b4", SvgFigure::LegendEntry::kLine},
                  {"true function", "#2ca02c", SvgFigure::LegendEntry::kLine},
                  {"±1σ aleatoric", "#ff7f0e", SvgFigure::LegendEntry::kBand},
                  {"±1σ total", "#1f77b4", SvgFigure::LegendEntry::kBand},
                  {"training data", "#d62728",
                   SvgFigure::LegendEntry::kPoint}});
  write_file((dir / "figure.svg").string(), fig.finish());
  return 0;
}

bool numeric_failure(const std::exception& e) {
  const std::string msg = e.what();
  return msg.find("training aborted") != std::string::npos ||
         msg.find("not positive definite") != std::string::npos;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"colored-noise uncertainty toolkit for energy and force "
               "regression"};
  app.require_subcommand(1);

  GenDataArgs gen;
  CLI::App* gen_cmd =
      app.add_subcommand("gen-data", "sample a noisy toy dataset to CSV");
  gen_cmd->add_option("--n", gen.n, "number of rows")->check(CLI::PositiveNumber);
  gen_cmd->add_option("--lo", gen.lo, "lower x bound");
  gen_cmd->add_option("--hi", gen.hi, "upper x bound");
  gen_cmd->add_option("--alpha", gen.alpha, "noise amplitude");
  gen_cmd->add_option("--ell", gen.ell, "noise length scale");
  gen_cmd->add_option("--jitter", gen.jitter, "white diagonal fraction");
  gen_cmd->add_option("--seed", gen.seed, "random seed");
  gen_cmd->add_option("--out", gen.out, "output CSV path")->required();

  TrainArgs train;
  CLI::App* train_cmd =
      app.add_subcommand("train", "train one model to a checkpoint");
  const auto add_train_flags = [](CLI::App* cmd, TrainArgs& a) {
    cmd->add_option("--data", a.data, "training dataset CSV")->required();
    cmd->add_option("--config", a.config, "TrainConfig JSON path");
    cmd->add_option("--noise", a.noise, "vanilla | white | colored");
    cmd->add_option("--hidden", a.hidden, "comma-separated layer widths");
    cmd->add_option("--val-frac", a.val_frac,
                    "tail fraction held out for validation");
    cmd->add_option("--seed", a.seed, "override the config seed");
  };
  add_train_flags(train_cmd, train);
  train_cmd->add_option("--out", train.out, "checkpoint JSON path")->required();

  TrainEnsembleArgs ens;
  CLI::App* ens_cmd = app.add_subcommand(
      "train-ensemble", "train M members and write a manifest");
  add_train_flags(ens_cmd, ens.base);
  ens_cmd->add_option("--members", ens.members, "ensemble size")
      ->check(CLI::PositiveNumber);
  ens_cmd->add_option("--out-dir", ens.out_dir, "output directory")
      ->required();

  PredictArgs pred;
  CLI::App* pred_cmd = app.add_subcommand(
      "predict", "ensemble predictions with uncertainty columns");
  pred_cmd->add_option("--manifest", pred.manifest, "ensemble manifest path")
      ->required();
  pred_cmd->add_option("--input", pred.input, "CSV with x columns")
      ->required();
  pred_cmd->add_option("--out", pred.out, "prediction CSV path")->required();
  pred_cmd->add_flag("--total", pred.total, "append total-variance columns");

  EvaluateArgs eval;
  CLI::App* eval_cmd = app.add_subcommand(
      "evaluate", "calibration reports for energy and forces");
  eval_cmd->add_option("--pred", eval.pred, "prediction CSV")->required();
  eval_cmd->add_option("--obs", eval.obs, "observation dataset CSV")
      ->required();
  eval_cmd->add_option("--out", eval.out, "report JSON path")->required();
  eval_cmd->add_option("--bins", eval.bins, "reliability bin count")
      ->check(CLI::PositiveNumber);

  ReliabilityArgs rel;
  CLI::App* rel_cmd = app.add_subcommand(
      "reliability", "reliability bin table and diagram");
  rel_cmd->add_option("--pred", rel.pred, "prediction CSV")->required();
  rel_cmd->add_option("--obs", rel.obs, "observation dataset CSV")->required();
  rel_cmd->add_option("--target", rel.target, "energy | force");
  rel_cmd->add_option("--bins", rel.bins, "bin count")
      ->check(CLI::PositiveNumber);
  rel_cmd->add_option("--out-csv", rel.out_csv, "bin table CSV path")
      ->required();
  rel_cmd->add_option("--out-svg", rel.out_svg, "diagram SVG path")
      ->required();

  VerifyArgs ver;
  CLI::App* ver_cmd = app.add_subcommand(
      "verify", "first-principles Monte-Carlo checks of the noise model");
  ver_cmd->add_option("--n", ver.n, "realizations per check")
      ->check(CLI::PositiveNumber);
  ver_cmd->add_option("--seed", ver.seed, "random seed");
  ver_cmd->add_option("--out", ver.out, "also write the table as JSON");

  ToyFigureArgs toy;
  CLI::App* toy_cmd = app.add_subcommand(
      "toy-figure", "end-to-end toy pipeline with uncertainty bands");
  toy_cmd->add_option("--out-dir", toy.out_dir, "output directory")
      ->required();
  toy_cmd->add_option("--n", toy.n, "training points")
      ->check(CLI::PositiveNumber);
  toy_cmd->add_option("--members", toy.members, "ensemble size")
      ->check(CLI::PositiveNumber);
  toy_cmd->add_option("--grid-n", toy.grid_n, "prediction grid size");
  toy_cmd->add_option("--grid-lo", toy.grid_lo, "grid lower bound");
  toy_cmd->add_option("--grid-hi", toy.grid_hi, "grid upper bound");
  toy_cmd->add_option("--seed", toy.data_seed, "dataset seed");
  toy_cmd->add_option("--hidden", toy.hidden, "comma-separated layer widths");
  toy_cmd->add_option("--config", toy.config, "TrainConfig JSON path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (gen_cmd->parsed()) return run_gen_data(gen);
    if (train_cmd->parsed()) return run_train(train);
    if (ens_cmd->parsed()) return run_train_ensemble(ens);
    if (pred_cmd->parsed()) return run_predict(pred);
    if (eval_cmd->parsed()) return run_evaluate(eval);
    if (rel_cmd->parsed()) return run_reliability(rel);
    if (ver_cmd->parsed()) return run_verify(ver);
    if (toy_cmd->parsed()) return run_toy_figure(toy);
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numeric failure: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    if (numeric_failure(e)) {
      std::fprintf(stderr, "numeric failure: %s\n", e.what());
      return 2;
    }
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}
