// maxid: command-line frontend for the max-id spatial extremes library.
//
// Exit codes: 0 ok, 2 configuration/input error, 3 numerical failure,
// 4 partial results (some fit variants failed, outputs preserved).

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "maxid/errors.hpp"
#include "maxid/fit.hpp"
#include "maxid/io.hpp"
#include "maxid/margins.hpp"
#include "maxid/model.hpp"
#include "maxid/simulate.hpp"
#include "maxid/study.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace maxid;

namespace {

constexpr const char* kVersion = "maxid 1.0.0";

// ---------------------------------------------------------------------------
// Shared plumbing
// ---------------------------------------------------------------------------

std::uint64_t resolve_seed(std::optional<std::uint64_t> cli_seed) {
  if (cli_seed) return *cli_seed;
  if (const char* env = std::getenv("MAXID_SEED")) {
    try {
      return std::stoull(env);
    } catch (const std::exception&) {
      throw ConfigError("MAXID_SEED is not an unsigned integer");
    }
  }
  return 1;
}

RunManifest start_manifest(const std::string& command, const json& config,
                           std::uint64_t seed,
                           const std::vector<std::string>& inputs) {
  RunManifest m;
  m.command = command;
  m.config_hash = string_digest(config.dump());
  m.seed = seed;
  m.version = kVersion;
  m.started_at = iso8601_now();
  for (const auto& p : inputs) m.input_digests[p] = file_digest(p);
  return m;
}

void finish_manifest(RunManifest& m, const std::string& out_dir) {
  m.finished_at = iso8601_now();
  m.write((fs::path(out_dir) / "manifest.json").string());
}

// days since 1970-01-01 for a proleptic Gregorian date
long civil_to_days(int y, int m, int d) {
  y -= m <= 2;
  const long era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153u * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<long>(doe) - 719468;
}

struct ParsedDate {
  long days;
  int month;
};

ParsedDate parse_date(const std::string& s, const std::string& where) {
  int y = 0, m = 0, d = 0;
  char sep1 = 0, sep2 = 0;
  std::istringstream is(s);
  if (!(is >> y >> sep1 >> m >> sep2 >> d) || sep1 != '-' || sep2 != '-' ||
      m < 1 || m > 12 || d < 1 || d > 31) {
    throw ParseError(where + ": cannot parse date '" + s +
                     "' (expected YYYY-MM-DD)");
  }
  return {civil_to_days(y, m, d), m};
}

SiteConfig read_sites_csv(const std::string& path) {
  const CsvTable t = read_csv_table(path);
  const int xi = t.col_index("x");
  const int yi = t.col_index("y");
  if (xi < 0 || yi < 0) {
    throw ParseError(path + ": sites CSV needs columns id,x,y");
  }
  Eigen::MatrixX2d coords(t.values.rows(), 2);
  for (Eigen::Index i = 0; i < t.values.rows(); ++i) {
    coords(i, 0) = t.values(i, xi);
    coords(i, 1) = t.values(i, yi);
    if (std::isnan(coords(i, 0)) || std::isnan(coords(i, 1))) {
      throw ParseError(path + ": missing coordinate for site " +
                       t.row_labels[i]);
    }
  }
  return SiteConfig(t.row_labels, coords);
}

// reorder data columns to match the site ordering
Eigen::MatrixXd align_columns(const CsvTable& data, const SiteConfig& sites,
                              const std::string& path) {
  Eigen::MatrixXd out(data.values.rows(), sites.size());
  for (int j = 0; j < sites.size(); ++j) {
    const int c = data.col_index(sites.ids()[j]);
    if (c < 0) {
      throw MissingSite(path + ": no column for site " + sites.ids()[j]);
    }
    out.col(j) = data.values.col(c);
  }
  return out;
}

ParamVector param_vector_from_json(const json& root) {
  // accept both a bare model JSON and a fit output wrapping it in "params"
  const json& j = root.contains("params") ? root.at("params") : root;
  ParamVector p;
  const json& meas = j.at("measure");
  p.family = measure_family_from_string(meas.at("family").get<std::string>());
  p.alpha = meas.value("alpha", p.family == MeasureFamily::M2 ? 1.0 : 1.0);
  p.beta = meas.value("beta", 0.0);
  std::set<std::string> fixed_m;
  if (meas.contains("fixed")) {
    for (const auto& f : meas["fixed"]) fixed_m.insert(f.get<std::string>());
  }
  p.alpha_free =
      p.family != MeasureFamily::M3 && fixed_m.count("alpha") == 0;
  p.beta_free = fixed_m.count("beta") == 0;
  const json& corr = j.at("corr");
  p.lambda = corr.value("lambda", 0.5);
  p.nu = corr.value("nu", 1.0);
  std::set<std::string> fixed_c;
  if (corr.contains("fixed")) {
    for (const auto& f : corr["fixed"]) fixed_c.insert(f.get<std::string>());
  }
  p.lambda_free = fixed_c.count("lambda") == 0;
  p.nu_free = fixed_c.count("nu") == 0 && corr.contains("nu_free") &&
              corr["nu_free"].get<bool>();
  // nu defaults to fixed unless nu_free is set; the paper's studies fix it
  if (!corr.contains("nu_free") && fixed_c.count("nu") == 0) p.nu_free = false;
  p.validate();
  return p;
}

json param_vector_to_json(const ParamVector& p) {
  json j;
  j["measure"] = {{"family", to_string(p.family)},
                  {"alpha", p.alpha},
                  {"beta", p.beta}};
  j["corr"] = {{"lambda", p.lambda}, {"nu", p.nu}};
  json free = json::array();
  if (p.alpha_free) free.push_back("alpha");
  if (p.beta_free) free.push_back("beta");
  if (p.lambda_free) free.push_back("lambda");
  if (p.nu_free) free.push_back("nu");
  j["free"] = free;
  return j;
}

json load_json(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open " + path);
  try {
    json j;
    f >> j;
    return j;
  } catch (const std::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// blockmax
// ---------------------------------------------------------------------------

struct BlockmaxOpts {
  std::string input;
  std::string out_dir;
  std::vector<double> scales = {1, 7, 30, 182};
  std::vector<int> months;  // empty = all
};

int cmd_blockmax(const BlockmaxOpts& opt) {
  CsvTable raw = read_csv_table(opt.input);

  // long format (date,site,value) is pivoted to wide first
  if (raw.columns.size() == 2 && raw.col_index("value") >= 0) {
    throw ParseError(opt.input +
                     ": long input must have string site ids in a wide "
                     "pivot; use columns date,<site>,...");
  }

  const Eigen::Index n_rows = raw.values.rows();
  if (n_rows == 0) throw ParseError(opt.input + ": no data rows");

  std::vector<ParsedDate> dates(n_rows);
  for (Eigen::Index i = 0; i < n_rows; ++i) {
    dates[i] = parse_date(raw.row_labels[i],
                          opt.input + ":" + std::to_string(i + 2));
  }

  std::set<int> months(opt.months.begin(), opt.months.end());
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < n_rows; ++i) {
    if (months.empty() || months.count(dates[i].month)) keep.push_back(i);
  }
  if (keep.empty()) {
    throw EmptyAfterFilter("no rows left after the season filter");
  }

  fs::create_directories(opt.out_dir);
  const long day0 = dates[keep.front()].days;
  const long day_end = dates[keep.back()].days;

  json cfg{{"input", opt.input},
           {"scales", opt.scales},
           {"months", opt.months}};
  RunManifest manifest = start_manifest("blockmax", cfg, 0, {opt.input});

  for (double scale_d : opt.scales) {
    const long scale = static_cast<long>(scale_d);
    if (scale < 1) throw ConfigError("block scales must be >= 1 day");
    const long n_blocks = (day_end - day0) / scale + 1;

    // expected in-season day count per block over the observed span
    std::vector<int> expected(n_blocks, 0);
    for (long d = day0; d <= day_end; ++d) {
      // month of day d: reuse stored months where the row exists; otherwise
      // derive from the serial day (cheap linear scan is fine at this size)
      long rem = d - civil_to_days(1970, 1, 1);
      (void)rem;
      // derive civil month from serial day
      long z = d + 719468;
      const long era = (z >= 0 ? z : z - 146096) / 146097;
      const unsigned doe = static_cast<unsigned>(z - era * 146097);
      const unsigned yoe =
          (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
      const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
      const unsigned mp = (5 * doy + 2) / 153;
      const int month = static_cast<int>(mp + (mp < 10 ? 3 : -9));
      if (months.empty() || months.count(month)) {
        expected[(d - day0) / scale] += 1;
      }
    }

    CsvTable out;
    out.label_name = "block_index";
    out.columns = raw.columns;
    const Eigen::Index d = static_cast<Eigen::Index>(raw.columns.size());
    Eigen::MatrixXd maxima =
        Eigen::MatrixXd::Constant(n_blocks, d, -std::numeric_limits<double>::infinity());
    Eigen::MatrixXi present = Eigen::MatrixXi::Zero(n_blocks, d);
    for (Eigen::Index i : keep) {
      const long b = (dates[i].days - day0) / scale;
      for (Eigen::Index j = 0; j < d; ++j) {
        const double v = raw.values(i, j);
        if (std::isnan(v)) continue;
        maxima(b, j) = std::max(maxima(b, j), v);
        present(b, j) += 1;
      }
    }
    Eigen::MatrixXd vals(n_blocks, d);
    for (long b = 0; b < n_blocks; ++b) {
      for (Eigen::Index j = 0; j < d; ++j) {
        const bool enough =
            expected[b] > 0 && present(b, j) > 0.5 * expected[b];
        vals(b, j) = enough ? maxima(b, j) : std::nan("");
      }
      out.row_labels.push_back(std::to_string(b));
    }
    out.values = vals;
    std::ostringstream name;
    name << "blockmax_" << scale << ".csv";
    const std::string path = (fs::path(opt.out_dir) / name.str()).string();
    write_csv_table(path, out);
    manifest.outputs.push_back(path);
  }
  finish_manifest(manifest, opt.out_dir);
  return 0;
}

// ---------------------------------------------------------------------------
// margins / transform
// ---------------------------------------------------------------------------

struct MarginsOpts {
  std::vector<std::string> inputs;
  std::vector<double> scales;
  std::string out;
};

int cmd_margins(const MarginsOpts& opt) {
  if (opt.inputs.empty()) throw ConfigError("no input CSVs");
  if (opt.scales.size() != opt.inputs.size()) {
    throw ConfigError("need one --scale per input CSV");
  }
  std::vector<CsvTable> tables;
  for (const auto& p : opt.inputs) tables.push_back(read_csv_table(p));
  for (size_t k = 1; k < tables.size(); ++k) {
    for (const auto& id : tables[0].columns) {
      if (tables[k].col_index(id) < 0) {
        throw MissingSite(opt.inputs[k] + ": missing site " + id);
      }
    }
  }

  BlockSpec blocks;
  const double base = opt.scales[0];
  for (size_t k = 0; k < opt.scales.size(); ++k) {
    std::ostringstream lab;
    lab << "b" << opt.scales[k];
    blocks.labels.push_back(lab.str());
    blocks.sizes.push_back(opt.scales[k] / base);
  }
  blocks.validate();

  json out;
  out["blocks"] = {{"labels", blocks.labels}, {"sizes", blocks.sizes}};
  out["base_scale"] = base;
  json sites = json::object();
  for (const auto& id : tables[0].columns) {
    std::vector<std::vector<double>> series(tables.size());
    for (size_t k = 0; k < tables.size(); ++k) {
      const int c = tables[k].col_index(id);
      for (Eigen::Index i = 0; i < tables[k].values.rows(); ++i) {
        const double v = tables[k].values(i, c);
        if (!std::isnan(v)) series[k].push_back(v);
      }
    }
    const GevFitResult fit = fit_gev_joint(series, blocks);
    sites[id] = {{"mu", fit.margin.mu},
                 {"sigma", fit.margin.sigma},
                 {"xi", fit.margin.xi},
                 {"theta", fit.margin.theta},
                 {"converged", fit.converged},
                 {"theta_identifiable", fit.theta_identifiable},
                 {"loglik", fit.loglik}};
  }
  out["sites"] = sites;

  std::ofstream f(opt.out);
  if (!f) throw ConfigError("cannot write " + opt.out);
  f << out.dump(2) << "\n";
  return 0;
}

struct TransformOpts {
  std::string data;
  std::string margins;
  double scale = 1.0;
  std::string out_dir;
};

int cmd_transform(const TransformOpts& opt) {
  const CsvTable data = read_csv_table(opt.data);
  const json mj = load_json(opt.margins);
  const double base = mj.value("base_scale", 1.0);
  const double factor = opt.scale / base;

  fs::create_directories(opt.out_dir);
  fs::create_directories(fs::path(opt.out_dir) / "qq");

  json cfg{{"data", opt.data}, {"margins", opt.margins}, {"scale", opt.scale}};
  RunManifest manifest =
      start_manifest("transform", cfg, 0, {opt.data, opt.margins});

  CsvTable out = data;
  for (size_t j = 0; j < data.columns.size(); ++j) {
    const std::string& id = data.columns[j];
    if (!mj.at("sites").contains(id)) {
      throw MissingSite(opt.margins + ": no margin for site " + id);
    }
    const json& sm = mj["sites"][id];
    GevMargin m{sm.at("mu"), sm.at("sigma"), sm.at("xi"), sm.at("theta")};
    std::vector<double> obs;
    for (Eigen::Index i = 0; i < data.values.rows(); ++i) {
      const double z = data.values(i, j);
      if (std::isnan(z)) {
        out.values(i, j) = std::nan("");
      } else {
        out.values(i, j) = to_frechet(z, m, factor);
        obs.push_back(z);
      }
    }
    // QQ table: sorted observations against fitted quantiles at the same
    // plotting positions
    std::sort(obs.begin(), obs.end());
    const GevMargin scaled = rescale_gev(m, factor);
    CsvTable qq;
    qq.label_name = "rank";
    qq.columns = {"empirical", "fitted"};
    qq.values.resize(static_cast<Eigen::Index>(obs.size()), 2);
    for (size_t i = 0; i < obs.size(); ++i) {
      qq.row_labels.push_back(std::to_string(i + 1));
      qq.values(static_cast<Eigen::Index>(i), 0) = obs[i];
      qq.values(static_cast<Eigen::Index>(i), 1) = gev_quantile(
          scaled, (static_cast<double>(i) + 1.0) / (obs.size() + 1.0));
    }
    const std::string qq_path =
        (fs::path(opt.out_dir) / "qq" / (id + ".csv")).string();
    write_csv_table(qq_path, qq);
    manifest.outputs.push_back(qq_path);
  }
  const std::string out_path =
      (fs::path(opt.out_dir) / "frechet.csv").string();
  write_csv_table(out_path, out);
  manifest.outputs.push_back(out_path);
  finish_manifest(manifest, opt.out_dir);
  return 0;
}

// ---------------------------------------------------------------------------
// fit
// ---------------------------------------------------------------------------

struct FitOpts {
  std::string data;
  std::string sites;
  std::string model;  // optional JSON with starting values / fixed flags
  std::vector<std::string> variants = {"schlather", "extremal_t", "m3", "m2"};
  double cutoff = 0.5;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
};

ParamVector variant_template(const std::string& variant,
                             const std::optional<json>& model) {
  ParamVector p;
  p.lambda = 0.5;
  p.lambda_free = true;
  p.nu = 1.0;
  p.nu_free = false;
  if (model) {
    const ParamVector m = param_vector_from_json(*model);
    p.lambda = m.lambda;
    p.lambda_free = m.lambda_free;
    p.nu = m.nu;
    p.nu_free = m.nu_free;
  }
  if (variant == "schlather") {
    p.family = MeasureFamily::M3;
    p.beta = 0.0;
    p.beta_free = false;
  } else if (variant == "extremal_t") {
    p.family = MeasureFamily::M2;
    p.alpha = 2.0;
    p.alpha_free = true;
    p.beta = 0.0;
    p.beta_free = false;
  } else if (variant == "m3") {
    p.family = MeasureFamily::M3;
    p.beta = 0.5;
    p.beta_free = true;
  } else if (variant == "m2") {
    p.family = MeasureFamily::M2;
    p.alpha = 2.0;
    p.alpha_free = true;
    p.beta = 0.5;
    p.beta_free = true;
  } else {
    throw ConfigError("unknown model variant: " + variant);
  }
  return p;
}

int cmd_fit(const FitOpts& opt) {
  if (!(opt.cutoff > 0.0)) {
    throw ConfigError("--cutoff must be positive (no pairs otherwise)");
  }
  const std::uint64_t seed = resolve_seed(opt.seed);
  const SiteConfig sites = read_sites_csv(opt.sites);
  const CsvTable table = read_csv_table(opt.data);
  const Eigen::MatrixXd data = align_columns(table, sites, opt.data);

  std::optional<json> model;
  std::vector<std::string> inputs = {opt.data, opt.sites};
  if (!opt.model.empty()) {
    model = load_json(opt.model);
    inputs.push_back(opt.model);
  }

  const PairWeights weights(sites, opt.cutoff);
  const double total_pairs = sites.size() * (sites.size() - 1) / 2.0;

  fs::create_directories(opt.out_dir);
  json cfg{{"data", opt.data},
           {"sites", opt.sites},
           {"variants", opt.variants},
           {"cutoff", opt.cutoff},
           {"seed", seed}};
  RunManifest manifest = start_manifest("fit", cfg, seed, inputs);
  manifest.notes["retained_pair_fraction"] =
      std::to_string(weights.weight_sum() / total_pairs);

  FitConfig fc;
  fc.cutoff = opt.cutoff;

  struct Row {
    std::string variant;
    double pl;
    double clic;
    int n_free;
  };
  std::vector<Row> rows;
  int n_failed = 0;
  for (const auto& variant : opt.variants) {
    const std::string path =
        (fs::path(opt.out_dir) / ("fit_" + variant + ".json")).string();
    try {
      const ParamVector tmpl = variant_template(variant, model);
      const FitResult fit = fit_pairwise_single(data, sites, tmpl, fc);
      json j;
      j["variant"] = variant;
      j["params"] = param_vector_to_json(fit.psi);
      j["pl_value"] = fit.pl_value;
      j["clic_star"] = fit.clic_star;
      j["converged"] = fit.converged;
      j["beta_boundary"] = fit.beta_boundary;
      j["n_function_evals"] = fit.n_function_evals;
      j["seed"] = seed;
      j["cutoff"] = opt.cutoff;
      j["n_active_pairs"] = weights.n_active();
      const auto names = fit.psi.free_names();
      json se = json::object(), ci = json::object();
      std::vector<double> vals;
      ParamVector psi = fit.psi;
      // natural-scale values in free_names order
      for (const auto& n : names) {
        if (n == "alpha") vals.push_back(psi.alpha);
        if (n == "beta") vals.push_back(psi.beta);
        if (n == "lambda") vals.push_back(psi.lambda);
        if (n == "nu") vals.push_back(psi.nu);
      }
      for (size_t k = 0; k < names.size() && k < fit.std_errors.size(); ++k) {
        se[names[k]] = fit.std_errors[k];
        ci[names[k]] = {vals[k] - 1.96 * fit.std_errors[k],
                        vals[k] + 1.96 * fit.std_errors[k]};
      }
      j["std_errors"] = se;
      j["ci95"] = ci;
      if (fit.J_hat.size() > 0) {
        json jm = json::array(), km = json::array();
        for (Eigen::Index r = 0; r < fit.J_hat.rows(); ++r) {
          json jr = json::array(), kr = json::array();
          for (Eigen::Index c = 0; c < fit.J_hat.cols(); ++c) {
            jr.push_back(fit.J_hat(r, c));
            kr.push_back(fit.K_hat(r, c));
          }
          jm.push_back(jr);
          km.push_back(kr);
        }
        j["J_hat"] = jm;
        j["K_hat"] = km;
      }
      std::ofstream f(path);
      f << j.dump(2) << "\n";
      manifest.outputs.push_back(path);
      rows.push_back({variant, fit.pl_value, fit.clic_star,
                      fit.psi.n_free()});
    } catch (const Error& e) {
      ++n_failed;
      json j{{"variant", variant}, {"error", e.what()}};
      std::ofstream f(path);
      f << j.dump(2) << "\n";
      std::cerr << "fit variant " << variant << " failed: " << e.what()
                << "\n";
    }
  }

  std::sort(rows.begin(), rows.end(),
            [](const Row& a, const Row& b) { return a.clic < b.clic; });
  const std::string cmp_path =
      (fs::path(opt.out_dir) / "comparison.csv").string();
  {
    std::ofstream f(cmp_path);
    f << "rank,variant,pl_value,n_free,clic_star\n";
    for (size_t r = 0; r < rows.size(); ++r) {
      f << (r + 1) << "," << rows[r].variant << ","
        << std::setprecision(17) << rows[r].pl << "," << rows[r].n_free << ","
        << std::setprecision(17) << rows[r].clic << "\n";
    }
  }
  manifest.outputs.push_back(cmp_path);
  finish_manifest(manifest, opt.out_dir);
  if (n_failed > 0 && rows.empty()) return 3;
  if (n_failed > 0) return 4;
  return 0;
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

struct SimulateOpts {
  std::string model;
  std::string sites;
  int grid = 0;  // alternative to --sites: per-side count on [0,1]^2
  int n = 100;
  std::string mode = "exact";
  double epsilon = 0.0;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
};

int cmd_simulate(const SimulateOpts& opt) {
  const std::uint64_t seed = resolve_seed(opt.seed);
  const json mj = load_json(opt.model);
  const ParamVector psi = param_vector_from_json(mj);

  std::vector<std::string> inputs = {opt.model};
  std::optional<SiteConfig> sites;
  if (!opt.sites.empty()) {
    sites = read_sites_csv(opt.sites);
    inputs.push_back(opt.sites);
  } else if (opt.grid >= 2) {
    sites = SiteConfig::regular_grid(opt.grid, 0.0, 1.0);
  } else {
    throw ConfigError("need --sites or --grid >= 2");
  }

  const MaxIdProcess proc(psi.measure(), psi.corr(), *sites);
  SimulationConfig sc;
  sc.n_replicates = opt.n;
  sc.rng = RngStream(seed, 0);
  if (opt.mode == "exact") {
    sc.mode = SimulationMode::exact_elliptical;
  } else if (opt.mode == "truncated") {
    sc.mode = SimulationMode::epsilon_truncated;
    sc.epsilon = opt.epsilon;
  } else {
    throw ConfigError("--mode must be exact or truncated");
  }

  const Eigen::MatrixXd z = sc.mode == SimulationMode::exact_elliptical
                                ? simulate_exact(proc, sc)
                                : simulate_truncated(proc, sc);

  fs::create_directories(opt.out_dir);
  json cfg{{"model", opt.model}, {"mode", opt.mode},
           {"n", opt.n},         {"epsilon", opt.epsilon},
           {"grid", opt.grid},   {"seed", seed}};
  RunManifest manifest = start_manifest("simulate", cfg, seed, inputs);

  CsvTable out;
  out.label_name = "replicate";
  out.columns = sites->ids();
  out.values = z;
  for (int i = 0; i < opt.n; ++i) out.row_labels.push_back(std::to_string(i));
  const std::string path = (fs::path(opt.out_dir) / "sim.csv").string();
  write_csv_table(path, out);
  manifest.outputs.push_back(path);
  finish_manifest(manifest, opt.out_dir);
  return 0;
}

// ---------------------------------------------------------------------------
// diagnose
// ---------------------------------------------------------------------------

struct DiagnoseOpts {
  std::string data;
  std::string sites;
  std::vector<std::string> models;
  std::vector<double> levels = {1, 2, 5, 10, 20, 50};
  int subset_size = 5;
  int n_subsets = 3;
  bool rank_transform = false;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
};

int cmd_diagnose(const DiagnoseOpts& opt) {
  if (opt.models.empty()) throw ConfigError("need at least one --model");
  const std::uint64_t seed = resolve_seed(opt.seed);
  const SiteConfig sites = read_sites_csv(opt.sites);
  const CsvTable table = read_csv_table(opt.data);
  Eigen::MatrixXd data = align_columns(table, sites, opt.data);
  if (opt.rank_transform) data = empirical_to_frechet(data);

  std::vector<MaxIdProcess> procs;
  std::vector<std::string> labels;
  std::vector<std::string> inputs = {opt.data, opt.sites};
  for (const auto& mp : opt.models) {
    const ParamVector psi = param_vector_from_json(load_json(mp));
    procs.emplace_back(psi.measure(), psi.corr(), sites);
    labels.push_back(fs::path(mp).stem().string());
    inputs.push_back(mp);
  }

  const int d = sites.size();
  const int subset_size = std::min(opt.subset_size, d);
  RngStream rng(seed, 0);
  std::vector<std::vector<int>> subsets;
  if (subset_size >= d) {
    std::vector<int> all(d);
    for (int j = 0; j < d; ++j) all[j] = j;
    subsets.push_back(all);
  } else {
    RngStream pick = rng.child(1);
    for (int s = 0; s < opt.n_subsets; ++s) {
      std::vector<int> idx(d);
      for (int j = 0; j < d; ++j) idx[j] = j;
      // partial Fisher-Yates
      for (int j = 0; j < subset_size; ++j) {
        const int k =
            j + static_cast<int>(pick.uniform() * (d - j));
        std::swap(idx[j], idx[std::min(k, d - 1)]);
      }
      idx.resize(subset_size);
      std::sort(idx.begin(), idx.end());
      subsets.push_back(idx);
    }
  }

  RngStream theta_rng = rng.child(2);
  const DiagnosticTable diag = model_vs_empirical_report(
      procs, labels, data, subsets, opt.levels, theta_rng);

  fs::create_directories(opt.out_dir);
  fs::create_directories(fs::path(opt.out_dir) / "curves");
  json cfg{{"data", opt.data},     {"models", opt.models},
           {"levels", opt.levels}, {"subset_size", subset_size},
           {"n_subsets", opt.n_subsets}, {"seed", seed}};
  RunManifest manifest = start_manifest("diagnose", cfg, seed, inputs);

  const std::string curve_path =
      (fs::path(opt.out_dir) / "curves" / "extremal_coefficients.csv")
          .string();
  diag.write_csv(curve_path);
  manifest.outputs.push_back(curve_path);

  // subset membership, for joining against the curves file
  const std::string subset_path =
      (fs::path(opt.out_dir) / "curves" / "subsets.csv").string();
  {
    std::ofstream f(subset_path);
    f << "subset,site_index,site_id\n";
    for (size_t s = 0; s < subsets.size(); ++s) {
      for (int j : subsets[s]) {
        f << s << "," << j << "," << sites.ids()[j] << "\n";
      }
    }
  }
  manifest.outputs.push_back(subset_path);
  finish_manifest(manifest, opt.out_dir);
  return 0;
}

// ---------------------------------------------------------------------------
// study
// ---------------------------------------------------------------------------

struct StudyOpts {
  std::string config;
  std::optional<std::uint64_t> seed;
  int threads = 0;
  std::string out_dir;
};

int cmd_study(const StudyOpts& opt) {
  const json cj = load_json(opt.config);
  StudyConfig cfg;
  cfg.scenario =
      study_scenario_from_string(cj.at("scenario").get<std::string>());
  cfg.replicates = cj.value("replicates", 50);
  cfg.n = cj.value("n", 50);
  cfg.seed = opt.seed ? *opt.seed : cj.value("seed", std::uint64_t{1});
  cfg.workers = opt.threads > 0
                    ? opt.threads
                    : cj.value("workers",
                               static_cast<int>(std::max(
                                   1u, std::thread::hardware_concurrency())));
  cfg.cutoff = cj.value("cutoff", 0.5);
  cfg.prob_level = cj.value("prob_level", 0.99);
  cfg.mvn_target = cj.value("mvn_target", 1e-3);
  if (cj.contains("fit")) {
    const json& fj = cj["fit"];
    cfg.fit.beta_init = fj.value("beta_init", cfg.fit.beta_init);
    cfg.fit.multistart = fj.value("multistart", cfg.fit.multistart);
    cfg.fit.nm.tol = fj.value("nm_tol", cfg.fit.nm.tol);
    cfg.fit.nm.max_iter = fj.value("nm_max_iter", cfg.fit.nm.max_iter);
    cfg.fit.nm.restarts = fj.value("nm_restarts", cfg.fit.nm.restarts);
    cfg.fit.quad.rel_tol = fj.value("quad_rel_tol", cfg.fit.quad.rel_tol);
  }
  if (!cj.contains("grid")) throw ConfigError("study config needs a grid");
  for (const auto& gj : cj["grid"]) {
    StudyCell cell;
    cell.family =
        measure_family_from_string(gj.value("family", std::string("M3")));
    cell.alpha = gj.value("alpha", 1.0);
    cell.beta = gj.value("beta", 0.0);
    cell.lambda = gj.value("lambda", 0.5);
    cell.nu = gj.value("nu", 1.0);
    cell.D = gj.value("D", 30);
    cfg.grid.push_back(cell);
  }

  StudyReport report;
  if (cfg.scenario == StudyScenario::table1) {
    report = run_table1(cfg);
  } else if (cfg.scenario == StudyScenario::recovery) {
    report = run_recovery(cfg);
  } else {
    throw ConfigError("use the diagnose command for the diagnostics scenario");
  }

  fs::create_directories(opt.out_dir);
  RunManifest manifest = start_manifest("study", cj, cfg.seed, {opt.config});
  report.write(opt.out_dir);
  manifest.outputs.push_back((fs::path(opt.out_dir) / "report.json").string());
  manifest.outputs.push_back((fs::path(opt.out_dir) / "raw.csv").string());
  finish_manifest(manifest, opt.out_dir);

  int failed_cells = 0;
  for (const auto& c : report.cells) failed_cells += c.failed ? 1 : 0;
  if (failed_cells == static_cast<int>(report.cells.size())) return 3;
  if (failed_cells > 0) return 4;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"max-infinitely divisible spatial extremes toolkit"};
  app.require_subcommand(1);

  BlockmaxOpts bm;
  auto* sb = app.add_subcommand("blockmax", "calendar block maxima per scale");
  sb->add_option("--input", bm.input, "wide CSV: date,<site ids...>")
      ->required();
  sb->add_option("--out-dir", bm.out_dir)->required();
  sb->add_option("--scales", bm.scales, "block lengths in days");
  sb->add_option("--months", bm.months, "season filter (month numbers)");

  MarginsOpts mg;
  auto* sm = app.add_subcommand("margins", "joint GEV fit across scales");
  sm->add_option("--inputs", mg.inputs, "per-scale block-maxima CSVs")
      ->required();
  sm->add_option("--scales", mg.scales, "block sizes matching --inputs")
      ->required();
  sm->add_option("--out", mg.out, "margins JSON")->required();

  TransformOpts tr;
  auto* st = app.add_subcommand("transform", "data scale -> unit Frechet");
  st->add_option("--data", tr.data)->required();
  st->add_option("--margins", tr.margins)->required();
  st->add_option("--scale", tr.scale, "block size of the data")->required();
  st->add_option("--out-dir", tr.out_dir)->required();

  FitOpts ft;
  auto* sf = app.add_subcommand("fit", "pairwise-likelihood dependence fit");
  sf->add_option("--data", ft.data, "Frechet-scale CSV")->required();
  sf->add_option("--sites", ft.sites, "sites CSV: id,x,y")->required();
  sf->add_option("--model", ft.model, "model JSON with starting values");
  sf->add_option("--variants", ft.variants,
                 "subset of schlather,extremal_t,m3,m2");
  sf->add_option("--cutoff", ft.cutoff, "pair distance cutoff");
  sf->add_option("--seed", ft.seed);
  sf->add_option("--out-dir", ft.out_dir)->required();

  SimulateOpts si;
  auto* ss = app.add_subcommand("simulate", "simulate the max-id process");
  ss->add_option("--model", si.model, "model JSON")->required();
  ss->add_option("--sites", si.sites, "sites CSV");
  ss->add_option("--grid", si.grid, "per-side regular grid on [0,1]^2");
  ss->add_option("--n", si.n, "replicates");
  ss->add_option("--mode", si.mode, "exact | truncated");
  ss->add_option("--epsilon", si.epsilon, "truncation level (truncated mode)");
  ss->add_option("--seed", si.seed);
  ss->add_option("--out-dir", si.out_dir)->required();

  DiagnoseOpts dg;
  auto* sd = app.add_subcommand("diagnose",
                                "empirical vs fitted extremal coefficients");
  sd->add_option("--data", dg.data, "Frechet-scale CSV")->required();
  sd->add_option("--sites", dg.sites)->required();
  sd->add_option("--model", dg.models, "fitted model JSONs")->required();
  sd->add_option("--levels", dg.levels, "Frechet levels");
  sd->add_option("--subset-size", dg.subset_size);
  sd->add_option("--n-subsets", dg.n_subsets);
  sd->add_flag("--rank", dg.rank_transform, "rank-transform the data first");
  sd->add_option("--seed", dg.seed);
  sd->add_option("--out-dir", dg.out_dir)->required();

  StudyOpts su;
  auto* s7 = app.add_subcommand("study", "simulation studies");
  s7->add_option("--config", su.config, "study config JSON")->required();
  s7->add_option("--seed", su.seed, "seed override");
  s7->add_option("--threads", su.threads, "worker count (default: cores)");
  s7->add_option("--out-dir", su.out_dir)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (*sb) return cmd_blockmax(bm);
    if (*sm) return cmd_margins(mg);
    if (*st) return cmd_transform(tr);
    if (*sf) return cmd_fit(ft);
    if (*ss) return cmd_simulate(si);
    if (*sd) return cmd_diagnose(dg);
    if (*s7) return cmd_study(su);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const MissingSite& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const EmptyAfterFilter& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const InvalidParameters& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 2;
}
