#include "maxid/study.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "maxid/errors.hpp"

namespace maxid {

namespace {

using nlohmann::json;

// Fixed-slot dispatch: task i writes only its own outputs, so the results
// are identical for any worker count.
void parallel_for(int n_tasks, int workers,
                  const std::function<void(int)>& body) {
  workers = std::max(1, std::min(workers, n_tasks));
  if (workers == 1) {
    for (int i = 0; i < n_tasks; ++i) body(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (int i = next.fetch_add(1); i < n_tasks; i = next.fetch_add(1)) {
        body(i);
      }
    });
  }
  for (auto& t : pool) t.join();
}

double quantile_sorted(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) return std::nan("");
  const double pos = q * (static_cast<double>(sorted.size()) - 1.0);
  const size_t lo = static_cast<size_t>(pos);
  const size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double w = pos - static_cast<double>(lo);
  return (1.0 - w) * sorted[lo] + w * sorted[hi];
}

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

}  // namespace

std::string to_string(StudyScenario s) {
  switch (s) {
    case StudyScenario::table1:
      return "table1";
    case StudyScenario::recovery:
      return "recovery";
    case StudyScenario::diagnostics:
      return "diagnostics";
  }
  throw InvalidParameters("unknown scenario");
}

StudyScenario study_scenario_from_string(const std::string& s) {
  if (s == "table1") return StudyScenario::table1;
  if (s == "recovery") return StudyScenario::recovery;
  if (s == "diagnostics") return StudyScenario::diagnostics;
  throw ConfigError("unknown study scenario: " + s);
}

std::string StudyCell::label() const {
  std::ostringstream os;
  os << to_string(family) << "_a" << alpha << "_b" << beta << "_l" << lambda
     << "_D" << D;
  return os.str();
}

void StudyConfig::validate() const {
  if (replicates < 1) throw InvalidParameters("replicates must be >= 1");
  if (n < 2) throw InvalidParameters("n must be >= 2");
  if (grid.empty()) throw InvalidParameters("empty study grid");
  if (workers < 1) throw InvalidParameters("workers must be >= 1");
  for (const auto& c : grid) {
    c.measure();
    c.corr().validate();
    if (c.D < 2) throw InvalidParameters("cell dimension must be >= 2");
  }
}

// ---------------------------------------------------------------------------
// Aggregation
// ---------------------------------------------------------------------------

std::vector<CellAggregate> aggregate_records(
    const std::vector<StudyCell>& grid, int replicates,
    const std::vector<ReplicateRecord>& raw,
    const std::vector<double>& p_truth) {
  std::vector<CellAggregate> cells(grid.size());
  for (size_t ci = 0; ci < grid.size(); ++ci) {
    cells[ci].cell = grid[ci];
    cells[ci].p_truth =
        ci < p_truth.size() ? p_truth[ci] : std::nan("");
  }
  std::vector<std::map<std::string, std::vector<double>>> buckets(grid.size());
  for (const auto& rec : raw) {
    auto& cell = cells.at(rec.cell_index);
    if (!rec.ok) {
      ++cell.n_failed;
      continue;
    }
    ++cell.n_ok;
    for (const auto& [k, v] : rec.values) buckets[rec.cell_index][k].push_back(v);
  }
  for (size_t ci = 0; ci < grid.size(); ++ci) {
    auto& cell = cells[ci];
    cell.failed = cell.n_failed > 0.1 * replicates;
    for (auto& [k, vals] : buckets[ci]) {
      std::sort(vals.begin(), vals.end());
      double mean = 0.0;
      for (double v : vals) mean += v;
      mean /= static_cast<double>(vals.size());
      cell.stats[k + ".mean"] = mean;
      cell.stats[k + ".median"] = quantile_sorted(vals, 0.5);
      cell.stats[k + ".q25"] = quantile_sorted(vals, 0.25);
      cell.stats[k + ".q75"] = quantile_sorted(vals, 0.75);
    }
  }
  return cells;
}

void StudyReport::write(const std::string& dir) const {
  namespace fs = std::filesystem;
  fs::create_directories(dir);

  json j;
  j["scenario"] = scenario;
  j["seed"] = seed;
  j["replicates"] = replicates;
  j["n"] = n;
  j["cells"] = json::array();
  for (const auto& c : cells) {
    json jc;
    jc["label"] = c.cell.label();
    jc["family"] = to_string(c.cell.family);
    jc["alpha"] = c.cell.alpha;
    jc["beta"] = c.cell.beta;
    jc["lambda"] = c.cell.lambda;
    jc["nu"] = c.cell.nu;
    jc["D"] = c.cell.D;
    jc["n_ok"] = c.n_ok;
    jc["n_failed"] = c.n_failed;
    jc["failed"] = c.failed;
    if (std::isfinite(c.p_truth)) jc["p_truth"] = c.p_truth;
    jc["stats"] = c.stats;
    j["cells"].push_back(jc);
  }
  std::ofstream jf(fs::path(dir) / "report.json");
  jf << j.dump(2) << "\n";

  // union of value keys, sorted, for a rectangular raw.csv
  std::set<std::string> keys;
  for (const auto& r : raw) {
    for (const auto& [k, v] : r.values) keys.insert(k);
  }
  std::ofstream cf(fs::path(dir) / "raw.csv");
  cf << "cell_index,replicate,ok,error";
  for (const auto& k : keys) cf << "," << k;
  cf << "\n";
  for (const auto& r : raw) {
    std::string err = r.error;
    std::replace(err.begin(), err.end(), ',', ';');
    std::replace(err.begin(), err.end(), '\n', ' ');
    cf << r.cell_index << "," << r.replicate << "," << (r.ok ? 1 : 0) << ","
       << err;
    for (const auto& k : keys) {
      auto it = r.values.find(k);
      cf << ",";
      if (it != r.values.end()) cf << fmt(it->second);
    }
    cf << "\n";
  }
}

// ---------------------------------------------------------------------------
// Table 1 study
// ---------------------------------------------------------------------------

namespace {

RngStream replicate_stream(std::uint64_t seed, int cell, int rep) {
  return RngStream(seed,
                   (static_cast<std::uint64_t>(cell + 1) << 32) +
                       static_cast<std::uint64_t>(rep));
}

ParamVector cell_template(const StudyCell& cell) {
  ParamVector tmpl;
  tmpl.family = cell.family;
  tmpl.alpha = cell.family == MeasureFamily::M3 ? 1.0 : cell.alpha;
  tmpl.alpha_free = cell.family != MeasureFamily::M3;
  tmpl.beta = cell.beta > 0 ? cell.beta : 0.5;
  tmpl.beta_free = true;
  tmpl.lambda = cell.lambda;
  tmpl.lambda_free = true;
  tmpl.nu = cell.nu;
  tmpl.nu_free = false;
  return tmpl;
}

}  // namespace

StudyReport run_table1(const StudyConfig& cfg) {
  cfg.validate();
  if (cfg.scenario != StudyScenario::table1) {
    throw InvalidParameters("config scenario is not table1");
  }
  const SiteConfig probe = SiteConfig::regular_grid(6, 0.0, 1.0);

  StudyReport report;
  report.scenario = to_string(cfg.scenario);
  report.seed = cfg.seed;
  report.replicates = cfg.replicates;
  report.n = cfg.n;

  const int n_cells = static_cast<int>(cfg.grid.size());
  std::vector<double> p_truth(n_cells);
  for (int ci = 0; ci < n_cells; ++ci) {
    RngStream rng(cfg.seed, static_cast<std::uint64_t>(ci));
    p_truth[ci] = joint_exceed_prob(cfg.grid[ci].measure(),
                                    cfg.grid[ci].corr(), probe,
                                    cfg.prob_level, rng, cfg.fit.quad,
                                    std::min(cfg.mvn_target, 1e-3))
                      .prob;
  }

  const int total = n_cells * cfg.replicates;
  report.raw.resize(total);

  parallel_for(total, cfg.workers, [&](int task) {
    const int ci = task / cfg.replicates;
    const int rep = task % cfg.replicates;
    const StudyCell& cell = cfg.grid[ci];
    ReplicateRecord rec;
    rec.cell_index = ci;
    rec.replicate = rep;
    try {
      RngStream rng = replicate_stream(cfg.seed, ci, rep);
      RngStream site_rng = rng.child(1);
      const SiteConfig sites = SiteConfig::uniform_random(cell.D, site_rng);
      const MaxIdProcess proc(cell.measure(), cell.corr(), sites);
      SimulationConfig sc;
      sc.n_replicates = cfg.n;
      sc.rng = rng.child(2);
      const Eigen::MatrixXd data = simulate_exact(proc, sc);

      FitConfig fc = cfg.fit;
      fc.cutoff = cfg.cutoff;
      fc.compute_godambe = false;
      const auto [free_fit, fixed_fit] =
          fit_pairwise(data, sites, cell_template(cell), fc);

      RngStream p_rng1 = rng.child(3);
      RngStream p_rng2 = rng.child(4);
      const double p1 =
          joint_exceed_prob(fixed_fit.psi.measure(), fixed_fit.psi.corr(),
                            probe, cfg.prob_level, p_rng1, fc.quad,
                            cfg.mvn_target)
              .prob;
      const double p2 =
          joint_exceed_prob(free_fit.psi.measure(), free_fit.psi.corr(),
                            probe, cfg.prob_level, p_rng2, fc.quad,
                            cfg.mvn_target)
              .prob;

      const double p = p_truth[ci];
      rec.values["pl_fixed"] = fixed_fit.pl_value;
      rec.values["pl_free"] = free_fit.pl_value;
      rec.values["dpl"] = free_fit.pl_value - fixed_fit.pl_value;
      rec.values["beta_hat"] = free_fit.psi.beta;
      rec.values["lambda_hat_free"] = free_fit.psi.lambda;
      rec.values["lambda_hat_fixed"] = fixed_fit.psi.lambda;
      if (free_fit.psi.alpha_free) {
        rec.values["alpha_hat"] = free_fit.psi.alpha;
      }
      rec.values["p_hat_fixed"] = p1;
      rec.values["p_hat_free"] = p2;
      rec.values["relerr_fixed"] = std::abs(p1 - p) / p;
      rec.values["relerr_free"] = std::abs(p2 - p) / p;
      rec.values["under_fixed"] = (p1 < p - 0.04) ? 1.0 : 0.0;
      rec.ok = true;
    } catch (const std::exception& e) {
      rec.ok = false;
      rec.error = e.what();
    }
    report.raw[task] = std::move(rec);
  });

  report.cells =
      aggregate_records(cfg.grid, cfg.replicates, report.raw, p_truth);
  return report;
}

// ---------------------------------------------------------------------------
// Recovery study
// ---------------------------------------------------------------------------

StudyReport run_recovery(const StudyConfig& cfg) {
  cfg.validate();
  if (cfg.scenario != StudyScenario::recovery) {
    throw InvalidParameters("config scenario is not recovery");
  }
  StudyReport report;
  report.scenario = to_string(cfg.scenario);
  report.seed = cfg.seed;
  report.replicates = cfg.replicates;
  report.n = cfg.n;

  const int n_cells = static_cast<int>(cfg.grid.size());
  const int total = n_cells * cfg.replicates;
  report.raw.resize(total);

  parallel_for(total, cfg.workers, [&](int task) {
    const int ci = task / cfg.replicates;
    const int rep = task % cfg.replicates;
    const StudyCell& cell = cfg.grid[ci];
    ReplicateRecord rec;
    rec.cell_index = ci;
    rec.replicate = rep;
    try {
      RngStream rng = replicate_stream(cfg.seed, ci, rep);
      RngStream site_rng = rng.child(1);
      const SiteConfig sites = SiteConfig::uniform_random(cell.D, site_rng);
      const MaxIdProcess proc(cell.measure(), cell.corr(), sites);
      SimulationConfig sc;
      sc.n_replicates = cfg.n;
      sc.rng = rng.child(2);
      const Eigen::MatrixXd data = simulate_exact(proc, sc);

      FitConfig fc = cfg.fit;
      fc.cutoff = cfg.cutoff;
      fc.compute_godambe = false;
      const FitResult fit =
          fit_pairwise_single(data, sites, cell_template(cell), fc);

      rec.values["beta_hat"] = fit.psi.beta;
      rec.values["lambda_hat"] = fit.psi.lambda;
      if (fit.psi.alpha_free) rec.values["alpha_hat"] = fit.psi.alpha;
      rec.values["pl"] = fit.pl_value;
      rec.ok = true;
    } catch (const std::exception& e) {
      rec.ok = false;
      rec.error = e.what();
    }
    report.raw[task] = std::move(rec);
  });

  report.cells = aggregate_records(cfg.grid, cfg.replicates, report.raw, {});
  return report;
}

// ---------------------------------------------------------------------------
// Extremal-coefficient diagnostics
// ---------------------------------------------------------------------------

std::vector<ExtremalCurvePoint> empirical_extremal_coefficient(
    const Eigen::MatrixXd& data, bool rank_transform,
    const std::vector<double>& levels, const std::vector<int>& subset,
    const std::vector<GevMargin>* margins, double block_scale) {
  const Eigen::Index n = data.rows();
  const Eigen::Index d = data.cols();
  if (n < 20) throw InvalidParameters("need n >= 20 replicates for CIs");
  if (levels.empty()) throw InvalidParameters("no levels requested");

  Eigen::MatrixXd frechet;
  if (margins != nullptr) {
    if (static_cast<Eigen::Index>(margins->size()) != d) {
      throw InvalidParameters("one margin per column required");
    }
    frechet.resize(n, d);
    for (Eigen::Index j = 0; j < d; ++j) {
      for (Eigen::Index i = 0; i < n; ++i) {
        frechet(i, j) = to_frechet(data(i, j), (*margins)[j], block_scale);
      }
    }
  } else if (rank_transform) {
    frechet = empirical_to_frechet(data);
  } else {
    frechet = data;
  }

  std::vector<int> cols(subset);
  if (cols.empty()) {
    cols.resize(d);
    for (Eigen::Index j = 0; j < d; ++j) cols[j] = static_cast<int>(j);
  }
  for (int j : cols) {
    if (j < 0 || j >= d) throw InvalidParameters("subset index out of range");
  }

  std::vector<ExtremalCurvePoint> curve;
  for (double z : levels) {
    if (!(z > 0.0)) throw InvalidParameters("levels must be positive");
    long count = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      bool all_below = true;
      for (int j : cols) {
        if (!(frechet(i, j) <= z)) {
          all_below = false;
          break;
        }
      }
      if (all_below) ++count;
    }
    const double p = static_cast<double>(count) / static_cast<double>(n);
    if (p <= 0.0 || p >= 1.0) continue;  // EmptyLevel: point omitted
    ExtremalCurvePoint pt;
    pt.z = z;
    pt.p_hat = p;
    pt.theta = -z * std::log(p);
    // delta method: Var(-z log p_hat) = z^2 p(1-p) / (n p^2)
    const double half =
        1.96 * z * std::sqrt(p * (1.0 - p) / static_cast<double>(n)) / p;
    pt.ci_lo = pt.theta - half;
    pt.ci_hi = pt.theta + half;
    curve.push_back(pt);
  }
  return curve;
}

DiagnosticTable model_vs_empirical_report(
    const std::vector<MaxIdProcess>& models,
    const std::vector<std::string>& labels, const Eigen::MatrixXd& data,
    const std::vector<std::vector<int>>& subsets,
    const std::vector<double>& levels, RngStream& rng,
    const QuadratureSpec& spec) {
  if (models.size() != labels.size()) {
    throw InvalidParameters("one label per model required");
  }
  for (const auto& m : models) {
    if (m.sites().size() != data.cols()) {
      throw InvalidParameters("model sites and data columns must match");
    }
  }

  DiagnosticTable table;
  table.model_labels = labels;
  table.subsets = subsets;
  for (size_t si = 0; si < subsets.size(); ++si) {
    const auto& subset = subsets[si];
    const auto emp =
        empirical_extremal_coefficient(data, false, levels, subset);
    for (double z : levels) {
      DiagnosticRow row;
      row.subset_index = static_cast<int>(si);
      row.z = z;
      for (const auto& pt : emp) {
        if (pt.z == z) {
          row.emp_theta = pt.theta;
          row.emp_lo = pt.ci_lo;
          row.emp_hi = pt.ci_hi;
          row.emp_usable = true;
          break;
        }
      }
      for (size_t mi = 0; mi < models.size(); ++mi) {
        RngStream child = rng.child(1000 * si + 10 * mi);
        row.fitted.push_back(theta_level(models[mi], subset, z, child, spec));
      }
      table.rows.push_back(std::move(row));
    }
  }
  return table;
}

void DiagnosticTable::write_csv(const std::string& path) const {
  std::ofstream f(path);
  f << "subset,z,emp_theta,emp_lo,emp_hi,emp_usable";
  for (const auto& l : model_labels) f << ",theta_" << l;
  f << "\n";
  for (const auto& r : rows) {
    f << r.subset_index << "," << fmt(r.z) << ",";
    if (r.emp_usable) {
      f << fmt(r.emp_theta) << "," << fmt(r.emp_lo) << "," << fmt(r.emp_hi);
    } else {
      f << ",,";
    }
    f << "," << (r.emp_usable ? 1 : 0);
    for (double v : r.fitted) f << "," << fmt(v);
    f << "\n";
  }
}

}  // namespace maxid
