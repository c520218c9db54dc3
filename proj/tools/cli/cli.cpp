#include "cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "covtest/error.hpp"
#include "covtest/mc.hpp"
#include "covtest/oracle.hpp"
#include "covtest/stats.hpp"
#include "output.hpp"

namespace covtest::cli {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitCheckFailed = 1;
constexpr int kExitInvalid = 2;
constexpr int kExitIo = 3;

// Invalid user input; the message names the offending flag.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Options shared by every subcommand. Execution settings (workers, output
// directory) never influence a payload and are kept out of the config.
struct Common {
  std::uint64_t seed = 1;
  std::optional<int> workers;
  std::string out_dir = "covtest-out";
  int resolved_workers = 1;
};

struct OutputFile {
  std::string name;
  std::string bytes;
};

struct RunResult {
  std::string subcommand;
  std::vector<std::string> argv;  // canonical, fully resolved
  json config;
  std::vector<OutputFile> files;  // first one is echoed to stdout
  int exit_code = kExitOk;
  std::string diagnostics;
};

std::string fmt(double v) { return format_double(v); }

void require_alpha(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw ConfigError("invalid --alpha: must lie in (0, 1), got " + fmt(alpha));
  }
}

void require_positive(long long v, const char* flag, long long minimum = 1) {
  if (v < minimum) {
    throw ConfigError(std::string("invalid ") + flag + ": must be at least " +
                      std::to_string(minimum) + ", got " + std::to_string(v));
  }
}

// Removes representation noise from a + i * step (0.1 + 2 * 0.1 etc.).
double tidy(double v) {
  if (v == 0.0) return 0.0;
  const double scale = std::pow(10.0, 12 - std::ceil(std::log10(std::abs(v))));
  return std::round(v * scale) / scale;
}

std::vector<double> parse_grid(const std::string& text) {
  std::vector<double> values;
  const auto number = [&](const std::string& s) {
    try {
      std::size_t used = 0;
      const double v = std::stod(s, &used);
      if (used != s.size() || !std::isfinite(v)) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception&) {
      throw ConfigError("invalid --grid: cannot parse '" + s + "' as a number");
    }
  };
  if (text.find(':') != std::string::npos) {
    std::vector<std::string> parts;
    std::stringstream ss(text);
    for (std::string part; std::getline(ss, part, ':');) parts.push_back(part);
    if (parts.size() != 3) throw ConfigError("invalid --grid: expected start:step:stop");
    const double a = number(parts[0]), step = number(parts[1]), b = number(parts[2]);
    if (!(step > 0.0) || b < a) {
      throw ConfigError("invalid --grid: need step > 0 and stop >= start");
    }
    const double count = std::floor((b - a) / step + 1e-9) + 1.0;
    if (count > 10000) throw ConfigError("invalid --grid: more than 10000 points");
    for (int i = 0; i < static_cast<int>(count); ++i) values.push_back(tidy(a + step * i));
  } else {
    std::stringstream ss(text);
    for (std::string part; std::getline(ss, part, ',');) values.push_back(number(part));
  }
  if (values.empty()) throw ConfigError("invalid --grid: no values");
  return values;
}

std::string join_grid(const std::vector<double>& grid) {
  std::string s;
  for (std::size_t i = 0; i < grid.size(); ++i) s += (i ? "," : "") + fmt(grid[i]);
  return s;
}

void add_common(CLI::App* sub, Common& common) {
  sub->add_option("--seed", common.seed, "Master seed");
  sub->add_option("--workers", common.workers,
                  "Worker threads (default: $COVTEST_WORKERS or 1); never changes results");
  sub->add_option("--out", common.out_dir, "Output directory for payload files and manifest");
}

int resolve_workers(const Common& common, const Environment& env) {
  if (common.workers) {
    require_positive(*common.workers, "--workers");
    return *common.workers;
  }
  if (env.workers && !env.workers->empty()) {
    try {
      std::size_t used = 0;
      const int w = std::stoi(*env.workers, &used);
      if (used == env.workers->size() && w >= 1) return w;
    } catch (const std::exception&) {
    }
    throw ConfigError("invalid COVTEST_WORKERS: expected a positive integer, got '" +
                      *env.workers + "'");
  }
  return 1;
}

std::vector<std::string> common_argv(const Common& c) {
  return {"--seed", std::to_string(c.seed)};
}

std::string json_text(const json& j) { return j.dump(2) + "\n"; }

// ---------------------------------------------------------------------------
// calibrate

struct CalibrateArgs {
  std::string stat = "tn";
  long long n = 0;
  long long p = 0;
  double alpha = 0.05;
  long long reps = 100000;
};

Statistic parse_single_stat(const std::string& name) {
  const auto s = parse_statistic(name);
  if (!s) throw ConfigError("invalid --stat: expected tn or clrt, got '" + name + "'");
  return *s;
}

RunResult cmd_calibrate(const CalibrateArgs& a, const Common& c) {
  const Statistic stat = parse_single_stat(a.stat);
  require_positive(a.n, "--n", 2);
  require_positive(a.p, "--p");
  require_alpha(a.alpha);
  require_positive(a.reps, "--reps", 100);
  if (stat == Statistic::CLR && a.p >= a.n) {
    throw Error(ErrorCode::RequiresPLessThanN, "--stat clrt needs p < n");
  }
  const double t =
      calibrate_null_threshold(stat, a.n, a.p, a.alpha, a.reps, c.seed, c.resolved_workers);

  RunResult r;
  r.subcommand = "calibrate";
  r.config = {{"statistic", std::string(to_string(stat))}, {"n", a.n}, {"p", a.p},
              {"alpha", a.alpha}, {"reps", a.reps}, {"seed", c.seed}};
  json payload = r.config;
  payload["threshold"] = t;
  r.argv = {"calibrate", "--stat", std::string(to_string(stat)), "--n", std::to_string(a.n),
            "--p", std::to_string(a.p), "--alpha", fmt(a.alpha), "--reps", std::to_string(a.reps)};
  for (auto& s : common_argv(c)) r.argv.push_back(s);
  r.files.push_back({"calibrate.json", json_text(payload)});
  return r;
}

// ---------------------------------------------------------------------------
// power

struct PowerArgs {
  std::string preset;
  std::string model;
  std::optional<long long> n;
  std::optional<long long> p;
  double alpha = 0.05;
  std::optional<long long> reps;
  std::string stat = "both";
  std::string grid;
  std::string threshold = "calibrated";
  long long cal_reps = 100000;
  bool svg = false;
};

struct Preset {
  const char* model;
  const char* grid;
};

std::optional<Preset> find_preset(const std::string& name) {
  if (name == "fig1") return Preset{"equi", "0.01:0.01:0.12"};
  if (name == "fig2") return Preset{"tridiag", "0.025:0.025:0.3"};
  return std::nullopt;
}

CovarianceModel make_model(const std::string& kind, Index p, Index n, double param) {
  if (kind == "equi") return CovarianceModel::equi_correlation(p, param);
  if (kind == "tridiag") return CovarianceModel::tridiagonal(p, param);
  if (kind == "spike") return CovarianceModel::rank_one_spike(p, n, param);
  if (kind == "identity") return CovarianceModel::identity(p);
  throw ConfigError("invalid --model: expected equi, tridiag, spike or identity, got '" + kind +
                    "'");
}

RunResult cmd_power(PowerArgs a, const Common& c) {
  if (!a.preset.empty()) {
    const auto preset = find_preset(a.preset);
    if (!preset) throw ConfigError("invalid --preset: expected fig1 or fig2, got '" + a.preset + "'");
    if (a.model.empty()) a.model = preset->model;
    if (a.grid.empty()) a.grid = preset->grid;
    if (!a.p) a.p = 40;
    if (!a.n) a.n = 80;
  }
  if (a.model.empty()) throw ConfigError("invalid --model: required unless --preset is given");
  if (!a.n) throw ConfigError("invalid --n: required");
  if (!a.p) throw ConfigError("invalid --p: required");
  const long long reps = a.reps.value_or(5000);
  require_positive(*a.n, "--n", 2);
  require_positive(*a.p, "--p");
  require_alpha(a.alpha);
  require_positive(reps, "--reps");

  std::vector<Statistic> stats;
  if (a.stat == "both") {
    stats = {Statistic::Tn, Statistic::CLR};
  } else {
    stats = {parse_single_stat(a.stat)};
  }
  ThresholdMode mode;
  if (a.threshold == "calibrated") {
    mode = ThresholdMode::Calibrated;
    require_positive(a.cal_reps, "--cal-reps", 100);
  } else if (a.threshold == "asymptotic") {
    mode = ThresholdMode::Asymptotic;
  } else {
    throw ConfigError("invalid --threshold: expected calibrated or asymptotic, got '" +
                      a.threshold + "'");
  }

  std::vector<double> grid;
  if (a.model == "identity") {
    grid = {0.0};
  } else {
    if (a.grid.empty()) throw ConfigError("invalid --grid: required for --model " + a.model);
    grid = parse_grid(a.grid);
  }

  SimulationPlan plan;
  plan.n = *a.n;
  plan.p = *a.p;
  plan.alpha = a.alpha;
  plan.replicates = reps;
  plan.seed = c.seed;
  plan.statistics = stats;
  plan.threshold_mode = mode;
  plan.calibration_replicates = a.cal_reps;
  plan.workers = c.resolved_workers;
  for (double v : grid) plan.grid.push_back(make_model(a.model, plan.p, plan.n, v));
  plan.validate();

  RunResult r;
  r.subcommand = "power";
  r.config = {{"preset", a.preset.empty() ? json(nullptr) : json(a.preset)},
              {"model", a.model},
              {"n", plan.n},
              {"p", plan.p},
              {"alpha", plan.alpha},
              {"reps", plan.replicates},
              {"stat", a.stat},
              {"grid", grid},
              {"threshold", std::string(to_string(mode))},
              {"cal_reps", mode == ThresholdMode::Calibrated ? json(a.cal_reps) : json(nullptr)},
              {"seed", c.seed},
              {"svg", a.svg}};
  r.argv = {"power", "--model", a.model, "--n", std::to_string(plan.n), "--p",
            std::to_string(plan.p), "--alpha", fmt(plan.alpha), "--reps", std::to_string(reps),
            "--stat", a.stat, "--threshold", std::string(to_string(mode)), "--cal-reps",
            std::to_string(a.cal_reps)};
  if (a.model != "identity") {
    r.argv.push_back("--grid");
    r.argv.push_back(join_grid(grid));
  }
  if (!a.preset.empty()) {
    r.argv.push_back("--preset");
    r.argv.push_back(a.preset);
  }
  if (a.svg) r.argv.push_back("--svg");
  for (auto& s : common_argv(c)) r.argv.push_back(s);

  const PowerCurve curve = power_curve(plan);

  std::ostringstream csv;
  csv << "# covtest power schema_version=" << kCsvSchemaVersion << '\n'
      << "# config=" << r.config.dump() << '\n'
      << "# thresholds";
  for (std::size_t s = 0; s < stats.size(); ++s) {
    csv << ' ' << to_string(stats[s]) << '=' << fmt(curve.thresholds[s]);
  }
  csv << '\n'
      << "model,param,frob_dist,stat,reps,rejections,power,se,ci_lo,ci_hi,threshold_source\n";
  for (std::size_t s = 0; s < stats.size(); ++s) {
    for (const auto& pt : curve.points) {
      const auto& e = pt.estimates[s];
      csv << csv_field(to_string(pt.kind)) << ',' << fmt(pt.parameter) << ','
          << fmt(pt.frobenius) << ',' << to_string(stats[s]) << ',' << e.replicates << ','
          << e.rejections << ',' << fmt(e.estimate) << ',' << fmt(e.standard_error) << ','
          << fmt(e.ci_low) << ',' << fmt(e.ci_high) << ',' << to_string(mode) << '\n';
    }
  }
  r.files.push_back({"power.csv", csv.str()});
  if (a.svg) {
    std::string title = a.model + " (p=" + std::to_string(plan.p) + ", n=" +
                        std::to_string(plan.n) + ", R=" + std::to_string(reps) + ")";
    r.files.push_back({"power.svg", render_power_svg(curve, title, r.config.dump())});
  }
  return r;
}

// ---------------------------------------------------------------------------
// verify

struct VerifyArgs {
  std::vector<std::string> only;
  std::optional<long long> reps;
  bool inject_fault = false;
};

RunResult cmd_verify(const VerifyArgs& a, const Common& c) {
  SuiteOptions options;
  for (const auto& item : a.only) {
    std::stringstream ss(item);
    for (std::string name; std::getline(ss, name, ',');) {
      if (!name.empty()) options.only.push_back(name);
    }
  }
  const auto known = suite_check_names();
  for (const auto& name : options.only) {
    if (std::find(known.begin(), known.end(), name) == known.end()) {
      std::string list;
      for (const auto& k : known) list += (list.empty() ? "" : ", ") + k;
      throw ConfigError("invalid --only: unknown check '" + name + "' (known: " + list + ")");
    }
  }
  if (a.reps) {
    require_positive(*a.reps, "--reps", 2);
    options.replicates = *a.reps;
  }
  options.inject_fault = a.inject_fault;
  options.seed = c.seed;

  const auto reports = run_verification_suite(options);

  RunResult r;
  r.subcommand = "verify";
  r.config = {{"only", options.only},
              {"reps", a.reps ? json(*a.reps) : json(nullptr)},
              {"inject_fault", a.inject_fault},
              {"seed", c.seed}};
  r.argv = {"verify"};
  if (!options.only.empty()) {
    std::string joined;
    for (const auto& n : options.only) joined += (joined.empty() ? "" : ",") + n;
    r.argv.push_back("--only");
    r.argv.push_back(joined);
  }
  if (a.reps) {
    r.argv.push_back("--reps");
    r.argv.push_back(std::to_string(*a.reps));
  }
  if (a.inject_fault) r.argv.push_back("--inject-fault");
  for (auto& s : common_argv(c)) r.argv.push_back(s);

  json list = json::array();
  std::vector<std::string> failed;
  for (const auto& rep : reports) {
    json comparisons = json::array();
    for (const auto& cmp : rep.comparisons) {
      comparisons.push_back({{"label", cmp.label},
                             {"analytic", cmp.analytic},
                             {"oracle", cmp.oracle},
                             {"scale", cmp.scale},
                             {"tolerance_kind", std::string(to_string(cmp.kind))},
                             {"tolerance", cmp.tolerance},
                             {"pass", cmp.pass}});
    }
    list.push_back({{"name", rep.name},
                    {"pass", rep.pass},
                    {"replicates", rep.replicates},
                    {"comparisons", comparisons}});
    if (!rep.pass) failed.push_back(rep.name);
  }
  json payload = {{"schema_version", kManifestSchemaVersion},
                  {"config", r.config},
                  {"all_pass", failed.empty()},
                  {"reports", list}};
  r.files.push_back({"verify.json", json_text(payload)});
  if (!failed.empty()) {
    r.exit_code = kExitCheckFailed;
    std::string names;
    for (const auto& f : failed) names += (names.empty() ? "" : ", ") + f;
    r.diagnostics = "verification failed: " + names + "\n";
  }
  return r;
}

// ---------------------------------------------------------------------------
// divergence

struct DivergenceArgs {
  std::optional<long long> p;
  std::optional<long long> n;
  std::optional<double> b;
  bool find_b = false;
  std::optional<double> beta_minus_alpha;
};

RunResult cmd_divergence(const DivergenceArgs& a, const Common& c) {
  if (!a.p) throw ConfigError("invalid --p: required");
  if (!a.n) throw ConfigError("invalid --n: required");
  require_positive(*a.p, "--p", 2);
  require_positive(*a.n, "--n");

  RunResult r;
  r.subcommand = "divergence";
  r.argv = {"divergence", "--p", std::to_string(*a.p), "--n", std::to_string(*a.n)};
  json payload = {{"schema_version", kManifestSchemaVersion}, {"p", *a.p}, {"n", *a.n}};
  double b = 0.0;
  if (a.find_b) {
    if (!a.beta_minus_alpha) throw ConfigError("invalid --beta-minus-alpha: required with --find-b");
    const double gap = *a.beta_minus_alpha;
    if (!(gap > 0.0 && gap < 1.0)) {
      throw ConfigError("invalid --beta-minus-alpha: must lie in (0, 1), got " + fmt(gap));
    }
    b = find_lower_bound_constant(*a.p, *a.n, gap);
    r.config = {{"p", *a.p}, {"n", *a.n}, {"find_b", true}, {"beta_minus_alpha", gap}};
    r.argv.insert(r.argv.end(), {"--find-b", "--beta-minus-alpha", fmt(gap)});
    payload["beta_minus_alpha"] = gap;
    payload["bound_4_beta_alpha_sq"] = 4.0 * gap * gap;
    payload["feasible_b"] = b;
  } else {
    if (!a.b) throw ConfigError("invalid --b: required unless --find-b is given");
    b = *a.b;
    r.config = {{"p", *a.p}, {"n", *a.n}, {"b", b}};
    r.argv.insert(r.argv.end(), {"--b", fmt(b)});
  }
  const auto in = DivergenceInputs::make(*a.p, *a.n, b);
  const double log_value = log_chisq_divergence(in);
  payload["b"] = b;
  payload["divergence"] = std::exp(log_value);
  payload["divergence_minus_one"] = std::expm1(log_value);
  r.files.push_back({"divergence.json", json_text(payload)});
  (void)c;
  return r;
}

// ---------------------------------------------------------------------------
// apply

struct ApplyArgs {
  std::string data;
  double alpha = 0.05;
  std::string stat = "both";
  std::string threshold = "asymptotic";
  long long cal_reps = 100000;
};

Matrix parse_data(const std::string& text, const std::string& path) {
  std::vector<std::vector<double>> rows;
  std::stringstream lines(text);
  std::size_t line_no = 0;
  for (std::string line; std::getline(lines, line);) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::stringstream fields(line);
    std::vector<double> row;
    for (std::string f; fields >> f;) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(f, &used));
        if (used != f.size()) throw std::invalid_argument(f);
      } catch (const std::exception&) {
        throw ConfigError("invalid --data: " + path + ":" + std::to_string(line_no) +
                          ": cannot parse '" + f + "'");
      }
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw ConfigError("invalid --data: " + path + ":" + std::to_string(line_no) + " has " +
                        std::to_string(row.size()) + " values, expected " +
                        std::to_string(rows.front().size()));
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ConfigError("invalid --data: " + path + " holds no rows");
  Matrix m(static_cast<Index>(rows.size()), static_cast<Index>(rows.front().size()));
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j) m(i, j) = rows[i][j];
  return m;
}

RunResult cmd_apply(const ApplyArgs& a, const Common& c) {
  if (a.data.empty()) throw ConfigError("invalid --data: required");
  require_alpha(a.alpha);
  std::string text;
  try {
    text = read_file(a.data);
  } catch (const std::exception& e) {
    throw IoError(e.what());
  }
  const DataMatrix data(parse_data(text, a.data));
  std::vector<Statistic> stats;
  if (a.stat == "both") {
    stats = {Statistic::Tn};
    if (data.p() < data.n()) stats.push_back(Statistic::CLR);
  } else {
    stats = {parse_single_stat(a.stat)};
  }
  const bool calibrated = a.threshold == "calibrated";
  if (!calibrated && a.threshold != "asymptotic") {
    throw ConfigError("invalid --threshold: expected calibrated or asymptotic, got '" +
                      a.threshold + "'");
  }
  if (calibrated) require_positive(a.cal_reps, "--cal-reps", 100);

  RunResult r;
  r.subcommand = "apply";
  r.config = {{"data", a.data}, {"alpha", a.alpha}, {"stat", a.stat},
              {"threshold", a.threshold}, {"cal_reps", calibrated ? json(a.cal_reps) : json(nullptr)},
              {"seed", c.seed}};
  r.argv = {"apply", "--data", a.data, "--alpha", fmt(a.alpha), "--stat", a.stat,
            "--threshold", a.threshold, "--cal-reps", std::to_string(a.cal_reps)};
  for (auto& s : common_argv(c)) r.argv.push_back(s);

  std::vector<double> cal;
  if (calibrated) {
    cal = calibrate_null_thresholds(stats, data.n(), data.p(), a.alpha, a.cal_reps,
                                    derive_seed(c.seed, kCalibrationSeedTag), c.resolved_workers);
  }
  json tests = json::array();
  for (std::size_t s = 0; s < stats.size(); ++s) {
    ThresholdSource source = AsymptoticThreshold{};
    if (calibrated) source = CalibratedThreshold{cal[s]};
    const TestOutcome o = stats[s] == Statistic::Tn ? test_psi(data, a.alpha, source)
                                                    : test_clr(data, a.alpha, source);
    tests.push_back({{"statistic", std::string(to_string(stats[s]))},
                     {"value", o.statistic},
                     {"standardized", o.standardized},
                     {"threshold", o.threshold},
                     {"threshold_source", std::string(threshold_source_name(o.threshold_source))},
                     {"reject", o.reject}});
  }
  json payload = {{"schema_version", kManifestSchemaVersion},
                  {"config", r.config},
                  {"data_fnv1a64", hex64(fnv1a64(text))},
                  {"n", data.n()},
                  {"p", data.p()},
                  {"tests", tests}};
  r.files.push_back({"apply.json", json_text(payload)});
  return r;
}

// ---------------------------------------------------------------------------

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

void emit(const RunResult& r, const Common& c, std::ostream& out, std::ostream& err) {
  std::error_code ec;
  fs::create_directories(c.out_dir, ec);
  if (ec) throw IoError("cannot create output directory " + c.out_dir + ": " + ec.message());
  json outputs = json::array();
  for (const auto& f : r.files) {
    write_file(fs::path(c.out_dir) / f.name, f.bytes);
    outputs.push_back({{"file", f.name},
                       {"bytes", f.bytes.size()},
                       {"fnv1a64", hex64(fnv1a64(f.bytes))}});
  }
  // The timestamp lives only here, never inside a payload or its hash.
  json manifest = {{"schema_version", kManifestSchemaVersion},
                   {"tool", "covtest"},
                   {"subcommand", r.subcommand},
                   {"argv", r.argv},
                   {"config", r.config},
                   {"seed", c.seed},
                   {"execution", {{"workers", c.resolved_workers}, {"out", c.out_dir}}},
                   {"outputs", outputs},
                   {"created_at", utc_timestamp()}};
  write_file(fs::path(c.out_dir) / (r.subcommand + ".manifest.json"), json_text(manifest));
  if (!r.files.empty()) out << r.files.front().bytes;
  err << r.diagnostics;
}

// covtest --from-manifest FILE [--workers N] [--out DIR]
int replay(const std::vector<std::string>& args, std::ostream& out, std::ostream& err,
           const Environment& env) {
  std::string manifest_path;
  std::optional<std::string> workers;
  std::optional<std::string> out_dir;
  for (std::size_t i = 0; i < args.size(); ++i) {
    const auto value = [&]() -> std::string {
      if (i + 1 >= args.size()) throw ConfigError("invalid " + args[i] + ": missing value");
      return args[++i];
    };
    if (args[i] == "--from-manifest") {
      manifest_path = value();
    } else if (args[i] == "--workers") {
      workers = value();
    } else if (args[i] == "--out") {
      out_dir = value();
    } else {
      throw ConfigError("invalid " + args[i] +
                        ": only --workers and --out may accompany --from-manifest");
    }
  }
  json manifest;
  try {
    manifest = json::parse(read_file(manifest_path));
  } catch (const json::exception& e) {
    throw ConfigError("invalid --from-manifest: " + std::string(e.what()));
  } catch (const std::exception& e) {
    throw IoError(e.what());
  }
  if (!manifest.contains("argv") || !manifest["argv"].is_array() ||
      manifest.value("schema_version", 0) != kManifestSchemaVersion) {
    throw ConfigError("invalid --from-manifest: not a covtest manifest (schema " +
                      std::to_string(kManifestSchemaVersion) + ")");
  }
  std::vector<std::string> argv = manifest["argv"].get<std::vector<std::string>>();
  if (workers) argv.insert(argv.end(), {"--workers", *workers});
  if (out_dir) argv.insert(argv.end(), {"--out", *out_dir});
  return run(argv, out, err, env);
}

}  // namespace

Environment environment_from_process() {
  Environment env;
  if (const char* w = std::getenv("COVTEST_WORKERS")) env.workers = std::string(w);
  return env;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err,
        const Environment& env) {
  try {
    if (std::find(args.begin(), args.end(), "--from-manifest") != args.end()) {
      return replay(args, out, err, env);
    }

    CLI::App app{"Tests of H0: Sigma = I for high-dimensional Gaussian data", "covtest"};
    app.require_subcommand(1);
    Common common;

    CalibrateArgs cal;
    auto* sc = app.add_subcommand("calibrate", "Simulated null threshold of one statistic");
    sc->add_option("--stat", cal.stat, "tn or clrt");
    sc->add_option("--n", cal.n, "Sample size")->required();
    sc->add_option("--p", cal.p, "Dimension")->required();
    sc->add_option("--alpha", cal.alpha, "Level");
    sc->add_option("--reps", cal.reps, "Null replicates (>= 100)");
    add_common(sc, common);

    PowerArgs pow;
    auto* sp = app.add_subcommand("power", "Monte Carlo power curve (CSV, optional SVG)");
    sp->add_option("--preset", pow.preset, "fig1 (equi-correlation) or fig2 (tridiagonal)");
    sp->add_option("--model", pow.model, "equi, tridiag, spike or identity");
    sp->add_option("--n", pow.n, "Sample size");
    sp->add_option("--p", pow.p, "Dimension");
    sp->add_option("--alpha", pow.alpha, "Level");
    sp->add_option("--reps", pow.reps, "Replicates per grid point (default 5000)");
    sp->add_option("--stat", pow.stat, "tn, clrt or both");
    sp->add_option("--grid", pow.grid, "start:step:stop or a comma list of model parameters");
    sp->add_option("--threshold", pow.threshold, "calibrated or asymptotic");
    sp->add_option("--cal-reps", pow.cal_reps, "Null replicates for calibration");
    sp->add_flag("--svg", pow.svg, "Also write power.svg");
    add_common(sp, common);

    VerifyArgs ver;
    auto* sv = app.add_subcommand("verify", "Run the moment-identity verification suite");
    sv->add_option("--only", ver.only, "Comma-separated check names");
    sv->add_option("--reps", ver.reps, "Override every Monte Carlo size");
    sv->add_flag("--inject-fault", ver.inject_fault)->group("");
    add_common(sv, common);

    DivergenceArgs div;
    auto* sd = app.add_subcommand("divergence", "Chi-square divergence of the random-sign prior");
    sd->add_option("--p", div.p, "Dimension");
    sd->add_option("--n", div.n, "Sample size");
    sd->add_option("--b", div.b, "Separation constant b");
    sd->add_flag("--find-b", div.find_b, "Search the largest admissible b");
    sd->add_option("--beta-minus-alpha", div.beta_minus_alpha, "Target power gap for --find-b");
    add_common(sd, common);

    ApplyArgs apl;
    auto* sa = app.add_subcommand("apply", "Apply the tests to a whitespace-delimited n x p file");
    sa->add_option("--data", apl.data, "Data file")->required();
    sa->add_option("--alpha", apl.alpha, "Level");
    sa->add_option("--stat", apl.stat, "tn, clrt or both");
    sa->add_option("--threshold", apl.threshold, "asymptotic or calibrated");
    sa->add_option("--cal-reps", apl.cal_reps, "Null replicates for calibration");
    add_common(sa, common);

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
      app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
      out << app.help();
      return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
      out << app.help("", CLI::AppFormatMode::All);
      return kExitOk;
    } catch (const CLI::ParseError& e) {
      err << "error: " << e.what() << "\n";
      return kExitInvalid;
    }
    common.resolved_workers = resolve_workers(common, env);
    RunResult result;
    if (sc->parsed()) result = cmd_calibrate(cal, common);
    else if (sp->parsed()) result = cmd_power(pow, common);
    else if (sv->parsed()) result = cmd_verify(ver, common);
    else if (sd->parsed()) result = cmd_divergence(div, common);
    else result = cmd_apply(apl, common);
    emit(result, common, out, err);
    return result.exit_code;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitIo;
  }
}

}  // namespace covtest::cli
