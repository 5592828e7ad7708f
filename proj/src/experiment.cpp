#include "cfqp/experiment.hpp"

#include "cfqp/log.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace cfqp {

const std::vector<std::string>& config_keys()
{
  static const std::vector<std::string> keys{
    // data
    "csv", "group_column", "response_column", "feature_columns", "delimiter", "group_count",
    "synthetic", "proportions", "shifts", "scales", "features", "coefficients", "noise", "slope",
    "n", "n_test", "test_fraction",
    // method
    "alpha", "alpha_lo", "alpha_hi", "level_lo", "level_hi", "smoothing", "kernel", "bandwidth",
    "grid_size", "sigma", "methods", "max_iterations", "polish_sweeps",
    // protocol
    "repetitions", "calibration_fraction", "seed", "output", "predictions",
  };
  return keys;
}

namespace {

std::string join(const std::vector<std::string>& parts, const std::string& sep)
{
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i)
    out += (i ? sep : "") + parts[i];
  return out;
}

std::string trim(const std::string& s)
{
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos)
    return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::size_t edit_distance(const std::string& a, const std::string& b)
{
  std::vector<std::size_t> row(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j)
    row[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    std::size_t diag = row[0];
    row[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t up = row[j];
      row[j] = std::min({ row[j] + 1, row[j - 1] + 1, diag + (a[i - 1] == b[j - 1] ? 0 : 1) });
      diag = up;
    }
  }
  return row[b.size()];
}

std::vector<std::string> split_list(const std::string& text)
{
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ','))
    if (auto t = trim(item); !t.empty())
      out.push_back(t);
  return out;
}

// Collects problems while reading typed values out of the key/value map.
class Reader
{
public:
  Reader(const ConfigValues& values, std::vector<std::string>& problems)
    : values_(values)
    , problems_(problems)
  {}

  bool has(const std::string& key) const { return values_.count(key) > 0; }
  std::string text(const std::string& key, std::string fallback = {}) const
  {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
  }

  std::optional<double> number(const std::string& key)
  {
    if (!has(key))
      return {};
    double v = 0.0;
    if (!parse_number(text(key), v)) {
      problems_.push_back(key + ": '" + text(key) + "' is not a number");
      return {};
    }
    return v;
  }

  std::optional<std::uint64_t> count(const std::string& key)
  {
    if (!has(key))
      return {};
    const std::string t = text(key);
    std::uint64_t v = 0;
    auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (t.empty() || ec != std::errc() || ptr != t.data() + t.size()) {
      problems_.push_back(key + ": '" + t + "' is not a non-negative integer");
      return {};
    }
    return v;
  }

  std::optional<std::vector<double>> numbers(const std::string& key)
  {
    if (!has(key))
      return {};
    std::vector<double> out;
    for (const auto& item : split_list(text(key))) {
      double v = 0.0;
      if (!parse_number(item, v)) {
        problems_.push_back(key + ": '" + item + "' is not a number");
        return {};
      }
      out.push_back(v);
    }
    return out;
  }

  std::optional<bool> flag(const std::string& key)
  {
    if (!has(key))
      return {};
    const std::string t = text(key);
    if (t == "true" || t == "1" || t == "yes")
      return true;
    if (t == "false" || t == "0" || t == "no")
      return false;
    problems_.push_back(key + ": '" + t + "' is not a boolean");
    return {};
  }

  //! "auto" (or absent) yields nullopt.
  std::optional<double> number_or_auto(const std::string& key)
  {
    if (!has(key) || text(key) == "auto")
      return {};
    return number(key);
  }

  void problem(std::string msg) { problems_.push_back(std::move(msg)); }

private:
  const ConfigValues& values_;
  std::vector<std::string>& problems_;
};

bool in_open_unit(double v) { return v > 0.0 && v < 1.0; }

} // namespace

ConfigError::ConfigError(std::vector<std::string> problems)
  : Error(ErrorKind::config, "invalid configuration:\n  " + join(problems, "\n  "))
  , problems_(std::move(problems))
{}

ConfigValues parse_config_text(const std::string& text)
{
  ConfigValues values;
  std::vector<std::string> problems;
  std::stringstream ss(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(ss, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos)
      line.erase(hash);
    line = trim(line);
    if (line.empty())
      continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      problems.push_back("line " + std::to_string(line_no) + ": expected 'key = value'");
      continue;
    }
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) {
      problems.push_back("line " + std::to_string(line_no) + ": missing key");
      continue;
    }
    if (values.count(key))
      problems.push_back("line " + std::to_string(line_no) + ": duplicate key '" + key + "'");
    values[key] = trim(line.substr(eq + 1));
  }
  if (!problems.empty())
    throw ConfigError(std::move(problems));
  return values;
}

ConfigValues read_config_file(const std::filesystem::path& path)
{
  std::ifstream in(path);
  if (!in)
    throw Error(ErrorKind::missing_file, "cannot open config file '" + path.string() + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

PipelineOptions ExperimentConfig::pipeline_options() const
{
  PipelineOptions o;
  o.alpha = alpha;
  if (alpha_lo && alpha_hi)
    o.tails = std::make_pair(*alpha_lo, *alpha_hi);
  o.smoothing.method = smoothing;
  o.smoothing.grid_size = grid_size;
  o.jitter_sigma = sigma;
  return o;
}

ExperimentConfig validate_config(const ConfigValues& values, bool require_source)
{
  std::vector<std::string> problems;
  Reader rd(values, problems);
  ExperimentConfig cfg;

  const auto& keys = config_keys();
  for (const auto& [key, value] : values) {
    if (std::find(keys.begin(), keys.end(), key) != keys.end())
      continue;
    std::string best;
    std::size_t best_d = 4;
    for (const auto& k : keys)
      if (auto d = edit_distance(key, k); d < best_d) {
        best_d = d;
        best = k;
      }
    problems.push_back("unknown key '" + key + "'" +
                       (best.empty() ? "" : " (did you mean '" + best + "'?)"));
  }

  // data source
  if (rd.has("csv"))
    cfg.csv = rd.text("csv");
  cfg.synthetic = rd.flag("synthetic").value_or(false);
  if (require_source && (cfg.csv.has_value() == cfg.synthetic))
    problems.push_back("exactly one data source must be given: csv = <path> or synthetic = true");
  if (cfg.csv && !std::filesystem::exists(*cfg.csv))
    problems.push_back("csv: file '" + cfg.csv->string() + "' does not exist");
  if (cfg.csv) {
    cfg.schema.group_column = rd.text("group_column", "group");
    cfg.schema.response_column = rd.text("response_column", "y");
    cfg.schema.feature_columns = split_list(rd.text("feature_columns"));
  }
  if (rd.has("delimiter")) {
    const std::string d = rd.text("delimiter");
    if (d == "tab" || d == "\\t")
      cfg.schema.delimiter = '\t';
    else if (d.size() == 1)
      cfg.schema.delimiter = d[0];
    else
      problems.push_back("delimiter: expected a single character or 'tab'");
  }
  if (auto k = rd.count("group_count"))
    cfg.schema.declared_group_count = static_cast<int>(*k);

  if (auto v = rd.numbers("proportions"))
    cfg.scenario.proportions = *v;
  if (auto v = rd.numbers("shifts"))
    cfg.scenario.shifts = *v;
  if (auto v = rd.numbers("scales"))
    cfg.scenario.scales = *v;
  if (auto v = rd.numbers("coefficients"))
    cfg.scenario.coefficients = *v;
  if (auto v = rd.count("features"))
    cfg.scenario.feature_count = *v;
  if (auto v = rd.number("slope"))
    cfg.scenario.heteroscedastic_slope = *v;
  if (rd.has("noise")) {
    const std::string t = rd.text("noise");
    if (t == "gaussian")
      cfg.scenario.noise = NoiseFamily::gaussian;
    else if (t == "lognormal")
      cfg.scenario.noise = NoiseFamily::lognormal;
    else
      problems.push_back("noise: expected 'gaussian' or 'lognormal', got '" + t + "'");
  }
  if (cfg.synthetic) {
    try {
      cfg.scenario.validate();
    } catch (const Error& e) {
      problems.push_back(std::string("synthetic scenario: ") + e.what());
    }
  }
  if (auto v = rd.count("n"))
    cfg.n = *v;
  if (auto v = rd.count("n_test"))
    cfg.n_test = *v;
  if (cfg.n < 4)
    problems.push_back("n: need at least 4 rows for training and calibration");
  if (cfg.n_test < 1)
    problems.push_back("n_test: must be >= 1");
  if (auto v = rd.number("test_fraction")) {
    cfg.test_fraction = *v;
    if (!in_open_unit(*v))
      problems.push_back("test_fraction: must lie in (0, 1)");
  }

  // method
  if (auto v = rd.number("alpha")) {
    cfg.alpha = *v;
    if (!in_open_unit(*v))
      problems.push_back("alpha: must lie in (0, 1), got " + rd.text("alpha"));
  }
  cfg.alpha_lo = rd.number("alpha_lo");
  cfg.alpha_hi = rd.number("alpha_hi");
  if (cfg.alpha_lo.has_value() != cfg.alpha_hi.has_value()) {
    problems.push_back("alpha_lo and alpha_hi must be given together");
  } else if (cfg.alpha_lo) {
    const double lo = *cfg.alpha_lo, hi = *cfg.alpha_hi;
    if (!in_open_unit(lo) || !in_open_unit(hi) || !(lo + hi < 1.0))
      problems.push_back("alpha_lo, alpha_hi: must lie in (0, 1) with alpha_lo + alpha_hi < 1");
    else if (rd.has("alpha") && std::abs(cfg.alpha - (lo + hi)) > 1e-12)
      problems.push_back("alpha: must equal alpha_lo + alpha_hi when both are given");
    else
      cfg.alpha = lo + hi;
  }
  {
    auto lo = rd.number("level_lo");
    auto hi = rd.number("level_hi");
    if (lo.has_value() != hi.has_value())
      problems.push_back("level_lo and level_hi must be given together");
    else if (lo) {
      if (!in_open_unit(*lo) || !in_open_unit(*hi) || !(*lo < *hi))
        problems.push_back("level_lo, level_hi: need 0 < level_lo < level_hi < 1");
      else
        cfg.levels = std::make_pair(*lo, *hi);
    }
  }
  if (rd.has("smoothing")) {
    try {
      cfg.smoothing.kind = parse_smoothing_kind(rd.text("smoothing"));
    } catch (const Error& e) {
      problems.push_back(std::string("smoothing: ") + e.what());
    }
  }
  if (rd.has("kernel")) {
    try {
      cfg.smoothing.kernel = parse_kernel(rd.text("kernel"));
    } catch (const Error& e) {
      problems.push_back(std::string("kernel: ") + e.what());
    }
  }
  if (auto h = rd.number_or_auto("bandwidth")) {
    if (!(*h > 0.0 && *h < 0.5))
      problems.push_back("bandwidth: must lie in (0, 0.5) or be 'auto'");
    else
      cfg.smoothing.bandwidth = *h;
  }
  if (auto m = rd.count("grid_size")) {
    cfg.grid_size = *m;
    if (*m < 16)
      problems.push_back("grid_size: must be >= 16");
  }
  if (auto s = rd.number_or_auto("sigma")) {
    if (*s < 0.0)
      problems.push_back("sigma: must be >= 0 or 'auto'");
    else
      cfg.sigma = *s;
  }
  if (rd.has("methods")) {
    cfg.methods.clear();
    for (const auto& name : split_list(rd.text("methods"))) {
      try {
        const Method m = parse_method(name);
        if (std::find(cfg.methods.begin(), cfg.methods.end(), m) == cfg.methods.end())
          cfg.methods.push_back(m);
      } catch (const Error& e) {
        problems.push_back(std::string("methods: ") + e.what());
      }
    }
    if (cfg.methods.empty())
      problems.push_back("methods: at least one of cfqp, cqr, unfair is required");
  }
  if (auto v = rd.count("max_iterations"))
    cfg.fit.max_iterations = *v;
  if (auto v = rd.count("polish_sweeps"))
    cfg.fit.polish_sweeps = *v;

  // protocol
  if (auto r = rd.count("repetitions")) {
    cfg.repetitions = *r;
    if (*r < 1)
      problems.push_back("repetitions: must be >= 1");
  }
  if (auto v = rd.number("calibration_fraction")) {
    cfg.calibration_fraction = *v;
    if (!in_open_unit(*v))
      problems.push_back("calibration_fraction: must lie in (0, 1)");
  }
  if (auto v = rd.count("seed"))
    cfg.seed = *v;
  if (rd.has("output")) {
    cfg.output = rd.text("output");
    if (cfg.output.empty())
      problems.push_back("output: must not be empty");
  }
  if (rd.has("predictions")) {
    cfg.predictions = rd.text("predictions");
    if (!std::filesystem::exists(*cfg.predictions))
      problems.push_back("predictions: file '" + cfg.predictions->string() + "' does not exist");
  }

  if (!problems.empty())
    throw ConfigError(std::move(problems));
  return cfg;
}

ExperimentConfig validate_config(const std::filesystem::path& path)
{
  return validate_config(read_config_file(path));
}

// ---------------------------------------------------------------------------

std::pair<double, double> mean_stderr(std::span<const double> values)
{
  if (values.empty())
    return { std::nan(""), std::nan("") };
  double sum = 0.0;
  for (double v : values)
    sum += v;
  const double n = static_cast<double>(values.size());
  const double mean = sum / n;
  if (values.size() < 2)
    return { mean, 0.0 };
  double ss = 0.0;
  for (double v : values)
    ss += (v - mean) * (v - mean);
  return { mean, std::sqrt(ss / (n - 1.0) / n) };
}

namespace {

std::string table_cell(std::pair<double, double> ms)
{
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3f ± %.3f", ms.first, ms.second);
  return buf;
}

struct Repetition
{
  std::vector<EvaluationReport> reports; // one per configured method
  std::string failure;
};

std::optional<std::pair<double, double>> fit_levels(const ExperimentConfig& cfg)
{
  if (cfg.levels)
    return cfg.levels;
  if (cfg.alpha_lo && cfg.alpha_hi)
    return std::make_pair(*cfg.alpha_lo, 1.0 - *cfg.alpha_hi);
  return {};
}

Repetition run_repetition(const ExperimentConfig& cfg,
                          const Dataset* data,
                          int group_count,
                          std::uint64_t seed)
{
  std::optional<Dataset> pool, test;
  if (cfg.synthetic) {
    pool.emplace(generate_synthetic(cfg.scenario, cfg.n, derive_seed(seed, "train")));
    test.emplace(generate_synthetic(cfg.scenario, cfg.n_test, derive_seed(seed, "test")));
  } else {
    const auto held_out = split(*data, cfg.test_fraction, derive_seed(seed, "test-split"));
    pool.emplace(data->subset(held_out.proper_training));
    test.emplace(data->subset(held_out.calibration));
  }
  const auto sp = split(*pool, cfg.calibration_fraction, derive_seed(seed, "split"));
  const auto pair =
    fit_pair(*pool, sp.proper_training, cfg.alpha, cfg.fit, derive_seed(seed, "fit"), fit_levels(cfg));

  const auto train_set = make_prediction_set(pair, *pool, sp.proper_training);
  const auto cal_set = make_prediction_set(pair, *pool, sp.calibration);
  IndexList all(test->size());
  for (std::size_t i = 0; i < all.size(); ++i)
    all[i] = i;
  const auto test_set = make_prediction_set(pair, *test, all);

  const auto opts = cfg.pipeline_options();
  Repetition rep;
  for (Method m : cfg.methods) {
    const auto res = run_method(m, train_set, cal_set, test_set, group_count, opts,
                                derive_seed(seed, "pipeline"));
    rep.reports.push_back(evaluate(res, test_set, group_count));
  }
  return rep;
}

ExperimentResult assemble(const ExperimentConfig& cfg,
                          int group_count,
                          const std::vector<Repetition>& reps)
{
  ExperimentResult out;
  out.group_count = group_count;
  out.repetitions = reps.size();
  for (Method m : cfg.methods)
    out.methods.push_back({ m, {}, {} });
  for (std::size_t r = 0; r < reps.size(); ++r) {
    if (!reps[r].failure.empty()) {
      ++out.failures;
      out.failure_messages.push_back("repetition " + std::to_string(r) + ": " + reps[r].failure);
      continue;
    }
    for (std::size_t k = 0; k < out.methods.size(); ++k) {
      out.methods[k].seeds.push_back(cfg.seed + r);
      out.methods[k].reports.push_back(reps[r].reports[k]);
    }
  }
  return out;
}

} // namespace

ExperimentResult run_experiment(const ExperimentConfig& cfg)
{
  std::optional<Dataset> data;
  int group_count = 0;
  if (cfg.synthetic) {
    group_count = static_cast<int>(cfg.scenario.proportions.size());
  } else if (cfg.csv) {
    data.emplace(load_csv(*cfg.csv, cfg.schema));
    group_count = data->group_count();
  } else {
    throw ConfigError({ "exactly one data source must be given: csv = <path> or synthetic = true" });
  }

  std::vector<Repetition> reps(cfg.repetitions);
  const auto count = static_cast<long>(cfg.repetitions);
  const Dataset* source = data ? &*data : nullptr;
#pragma omp parallel for schedule(dynamic)
  for (long r = 0; r < count; ++r) {
    auto& rep = reps[static_cast<std::size_t>(r)];
    try {
      rep = run_repetition(cfg, source, group_count, cfg.seed + static_cast<std::uint64_t>(r));
    } catch (const std::exception& e) {
      rep.failure = e.what();
      if (rep.failure.empty())
        rep.failure = "unknown error";
    }
  }

  auto out = assemble(cfg, group_count, reps);
  for (const auto& msg : out.failure_messages)
    warn(msg);
  if (out.failures * 10 > out.repetitions)
    throw Error(ErrorKind::runtime,
                std::to_string(out.failures) + " of " + std::to_string(out.repetitions) +
                  " repetitions failed (more than 10%)");
  return out;
}

ExperimentResult evaluate_predictions(const ExperimentConfig& cfg, std::istream& in)
{
  const CsvTable table = read_table(in, cfg.schema.delimiter);
  const std::size_t split_col = table.column("split");
  const std::size_t group_col = table.column("group");
  const std::size_t y_col = table.column("y");
  const std::size_t lo_col = table.column("q_lo");
  const std::size_t hi_col = table.column("q_hi");

  std::vector<std::string> raw_groups;
  for (const auto& row : table.rows)
    raw_groups.push_back(row[group_col]);
  const auto enc = encode_groups(raw_groups);
  const int group_count = static_cast<int>(enc.labels.size());

  PredictionSet train, cal, test;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const std::string& tag = table.rows[r][split_col];
    PredictionSet* dst = tag == "train" ? &train : tag == "cal" ? &cal : tag == "test" ? &test : nullptr;
    if (!dst)
      throw Error(ErrorKind::unparsable_cell,
                  "split must be train, cal or test; got '" + tag + "' at row " + std::to_string(r + 1),
                  r + 1, "split");
    dst->lower.push_back(table.number(r, lo_col));
    dst->upper.push_back(table.number(r, hi_col));
    dst->response.push_back(table.number(r, y_col));
    dst->group.push_back(enc.codes[r]);
  }

  Repetition rep;
  const auto opts = cfg.pipeline_options();
  for (Method m : cfg.methods) {
    const auto res = run_method(m, train, cal, test, group_count, opts, derive_seed(cfg.seed, "pipeline"));
    rep.reports.push_back(evaluate(res, test, group_count));
  }
  return assemble(cfg, group_count, { rep });
}

ExperimentResult evaluate_predictions(const ExperimentConfig& cfg)
{
  if (!cfg.predictions)
    throw ConfigError({ "predictions: a predictions file is required" });
  std::ifstream in(*cfg.predictions);
  if (!in)
    throw Error(ErrorKind::missing_file, "cannot open '" + cfg.predictions->string() + "'");
  return evaluate_predictions(cfg, in);
}

nlohmann::ordered_json ExperimentResult::summary() const
{
  nlohmann::ordered_json doc;
  doc["repetitions"] = repetitions;
  doc["failures"] = failures;
  doc["group_count"] = group_count;
  auto& methods_doc = doc["methods"];
  methods_doc = nlohmann::ordered_json::object();
  for (const auto& runs : methods) {
    auto column = [&](auto field) {
      std::vector<double> v;
      for (const auto& rep : runs.reports)
        v.push_back(field(rep));
      return mean_stderr(v);
    };
    const std::vector<std::pair<std::string, std::pair<double, double>>> stats{
      { "coverage", column([](const auto& r) { return r.coverage; }) },
      { "mean_length", column([](const auto& r) { return r.mean_length; }) },
      { "ks_lo", column([](const auto& r) { return r.ks_lo; }) },
      { "ks_hi", column([](const auto& r) { return r.ks_hi; }) },
      { "mae_lo", column([](const auto& r) { return r.mae_lo; }) },
      { "mae_hi", column([](const auto& r) { return r.mae_hi; }) },
      { "crossing_count", column([](const auto& r) { return static_cast<double>(r.crossing_count); }) },
      { "coverage_lo", column([](const auto& r) { return r.coverage_lo; }) },
      { "coverage_hi", column([](const auto& r) { return r.coverage_hi; }) },
    };
    nlohmann::ordered_json m;
    m["completed"] = runs.reports.size();
    for (const auto& [name, ms] : stats)
      m[name] = { { "mean", ms.first }, { "stderr", ms.second } };
    nlohmann::ordered_json per_group = nlohmann::ordered_json::array();
    const std::size_t k = runs.reports.empty() ? 0 : runs.reports.front().per_group_coverage.size();
    for (std::size_t s = 0; s < k; ++s) {
      const auto ms = column([s](const auto& r) { return r.per_group_coverage[s]; });
      per_group.push_back({ { "mean", ms.first }, { "stderr", ms.second } });
    }
    m["per_group_coverage"] = per_group;
    m["table_row"] = table_cell(stats[0].second) + " & " + table_cell(stats[1].second) + " & " +
                     table_cell(stats[2].second) + " & " + table_cell(stats[3].second);
    methods_doc[to_string(runs.method)] = m;
  }
  return doc;
}

std::string ExperimentResult::csv(Method m) const
{
  for (const auto& runs : methods) {
    if (runs.method != m)
      continue;
    std::string out = csv_header(group_count) + "\n";
    for (std::size_t i = 0; i < runs.reports.size(); ++i)
      out += csv_row(runs.seeds[i], runs.reports[i]) + "\n";
    return out;
  }
  throw Error(ErrorKind::invalid_argument, "method " + to_string(m) + " was not run");
}

void write_outputs(const ExperimentResult& result, const std::filesystem::path& output)
{
  if (output.has_parent_path())
    std::filesystem::create_directories(output.parent_path());
  auto write = [](const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out)
      throw Error(ErrorKind::runtime, "cannot write '" + path.string() + "'");
    out << text;
    if (!out)
      throw Error(ErrorKind::runtime, "write to '" + path.string() + "' failed");
  };
  write(output.string() + ".json", result.summary().dump(2) + "\n");
  for (const auto& runs : result.methods)
    write(output.string() + "_" + to_string(runs.method) + ".csv", result.csv(runs.method));
}

} // namespace cfqp
