#include "cfqp/experiment.hpp"
#include "cfqp/log.hpp"

#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace cfqp;

namespace {

struct QuietWarnings
{
  QuietWarnings() { set_warning_sink([](const std::string&) {}); }
  ~QuietWarnings() { set_warning_sink(nullptr); }
};

std::vector<std::string> problems_of(const ConfigValues& v, bool require_source = true)
{
  try {
    validate_config(v, require_source);
  } catch (const ConfigError& e) {
    return e.problems();
  }
  return {};
}

bool mentions(const std::vector<std::string>& problems, const std::string& needle)
{
  for (const auto& p : problems)
    if (p.find(needle) != std::string::npos)
      return true;
  return false;
}

ConfigValues small_synthetic()
{
  return { { "synthetic", "true" }, { "n", "400" },        { "n_test", "300" },
           { "repetitions", "1" },  { "shifts", "0, 3" },  { "seed", "11" } };
}

std::vector<std::vector<double>> parse_csv_numbers(const std::string& text)
{
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ','))
      row.push_back(std::stod(cell));
    rows.push_back(row);
  }
  return rows;
}

} // namespace

TEST_CASE("config text grammar")
{
  const auto v = parse_config_text("# comment\nalpha = 0.2   # trailing\n\n shifts = 0, 1 \n");
  CHECK(v.at("alpha") == "0.2");
  CHECK(v.at("shifts") == "0, 1");
  CHECK(v.size() == 2);
  CHECK_THROWS_AS(parse_config_text("alpha = 0.1\nalpha = 0.2\n"), ConfigError);
  CHECK_THROWS_AS(parse_config_text("just words\n"), ConfigError);
}

TEST_CASE("minimal synthetic config takes the defaults")
{
  const auto cfg = validate_config(ConfigValues{ { "synthetic", "true" } });
  CHECK(cfg.synthetic);
  CHECK(!cfg.csv);
  CHECK(cfg.alpha == 0.1);
  CHECK(cfg.repetitions == 200);
  CHECK(cfg.calibration_fraction == 0.5);
  CHECK(cfg.smoothing.kind == SmoothingMethod::Kind::kernel);
  CHECK(cfg.methods == std::vector<Method>{ Method::cfqp, Method::cqr });
  CHECK(!cfg.pipeline_options().tails);
}

TEST_CASE("data source must be unique")
{
  CHECK(mentions(problems_of(ConfigValues{}), "exactly one data source"));
  CHECK(mentions(problems_of(ConfigValues{ { "synthetic", "true" }, { "csv", "/nonexistent.csv" } }), "exactly one data source"));
  CHECK(problems_of({}, false).empty());
}

TEST_CASE("invalid values are all reported")
{
  const auto p = problems_of(ConfigValues{ { "synthetic", "true" }, { "alpha", "1.2" }, { "repetitions", "0" },
                               { "alpha_low", "0.05" }, { "smoothing", "spline" } });
  CHECK(p.size() == 4);
  CHECK(mentions(p, "alpha: must lie in (0, 1)"));
  CHECK(mentions(p, "repetitions"));
  CHECK(mentions(p, "did you mean 'alpha_lo'"));
  CHECK(mentions(p, "smoothing"));
}

TEST_CASE("asymmetric tails in the config")
{
  CHECK(mentions(problems_of(ConfigValues{ { "synthetic", "true" }, { "alpha_lo", "0.05" } }), "given together"));
  CHECK(mentions(problems_of(ConfigValues{ { "synthetic", "true" }, { "alpha_lo", "0.05" }, { "alpha_hi", "0.05" },
                               { "alpha", "0.2" } }),
                 "alpha_lo + alpha_hi"));
  const auto cfg = validate_config(ConfigValues{ { "synthetic", "true" }, { "alpha_lo", "0.02" }, { "alpha_hi", "0.08" } });
  CHECK(cfg.alpha == doctest::Approx(0.1));
  const auto opts = cfg.pipeline_options();
  REQUIRE(opts.tails);
  CHECK(opts.tails->first == 0.02);
  CHECK(opts.tails->second == 0.08);
}

TEST_CASE("auto values and smoothing options")
{
  const auto cfg = validate_config(ConfigValues{ { "synthetic", "true" }, { "sigma", "auto" }, { "bandwidth", "0.1" },
                                     { "smoothing", "local_linear" }, { "grid_size", "256" } });
  CHECK(!cfg.sigma);
  CHECK(cfg.smoothing.kind == SmoothingMethod::Kind::local_linear);
  CHECK(cfg.smoothing.bandwidth == 0.1);
  CHECK(cfg.grid_size == 256);
  CHECK(mentions(problems_of(ConfigValues{ { "synthetic", "true" }, { "bandwidth", "0.7" } }), "bandwidth"));
  CHECK(mentions(problems_of(ConfigValues{ { "synthetic", "true" }, { "sigma", "-1" } }), "sigma"));
}

TEST_CASE("config file round trip")
{
  const auto dir = std::filesystem::temp_directory_path() / "cfqp_experiment_test";
  std::filesystem::create_directories(dir);
  const auto path = dir / "run.cfg";
  {
    std::ofstream out(path);
    out << "synthetic = true\nalpha = 0.2\nmethods = cfqp, unfair\n";
  }
  const auto cfg = validate_config(path);
  CHECK(cfg.alpha == 0.2);
  CHECK(cfg.methods == std::vector<Method>{ Method::cfqp, Method::unfair });
  CHECK_THROWS_AS(read_config_file(dir / "missing.cfg"), Error);
  std::filesystem::remove_all(dir);
}

TEST_CASE("a repetition is reproducible byte for byte")
{
  QuietWarnings quiet;
  const auto cfg = validate_config(small_synthetic());
  const auto a = run_experiment(cfg);
  const auto b = run_experiment(cfg);
  CHECK(a.failures == 0);
  CHECK(a.csv(Method::cfqp) == b.csv(Method::cfqp));
  CHECK(a.csv(Method::cqr) == b.csv(Method::cqr));
  CHECK(a.summary().dump() == b.summary().dump());
  CHECK_THROWS_AS(a.csv(Method::unfair), Error);
}

TEST_CASE("summary agrees with the per-repetition rows")
{
  QuietWarnings quiet;
  auto v = small_synthetic();
  v["repetitions"] = "6";
  const auto res = run_experiment(validate_config(v));
  const auto summary = res.summary();
  for (Method m : { Method::cfqp, Method::cqr }) {
    const auto rows = parse_csv_numbers(res.csv(m));
    REQUIRE(rows.size() == 6);
    // columns: seed, coverage, mean_length, ks_lo, ...
    for (std::size_t r = 0; r < rows.size(); ++r)
      CHECK(rows[r][0] == static_cast<double>(11 + r));
    for (auto [col, name] : { std::pair{ 1, "coverage" }, { 2, "mean_length" }, { 3, "ks_lo" }, { 4, "ks_hi" } }) {
      double mean = 0;
      for (const auto& row : rows)
        mean += row[static_cast<std::size_t>(col)];
      mean /= 6.0;
      double ss = 0;
      for (const auto& row : rows)
        ss += (row[static_cast<std::size_t>(col)] - mean) * (row[static_cast<std::size_t>(col)] - mean);
      const double se = std::sqrt(ss / 5.0 / 6.0);
      const auto& entry = summary["methods"][to_string(m)][name];
      CHECK(std::abs(entry["mean"].get<double>() - mean) <= 1e-9);
      CHECK(std::abs(entry["stderr"].get<double>() - se) <= 1e-9);
    }
  }
}

TEST_CASE("cfqp is fairer than CQR on a shifted scenario")
{
  QuietWarnings quiet;
  auto v = small_synthetic();
  v["repetitions"] = "50";
  const auto s = run_experiment(validate_config(v)).summary();
  CHECK(s["methods"]["cfqp"]["ks_lo"]["mean"].get<double>() <
        s["methods"]["cqr"]["ks_lo"]["mean"].get<double>());
  CHECK(s["methods"]["cfqp"]["ks_hi"]["mean"].get<double>() <
        s["methods"]["cqr"]["ks_hi"]["mean"].get<double>());
}

TEST_CASE("outputs are written next to each other")
{
  QuietWarnings quiet;
  const auto dir = std::filesystem::temp_directory_path() / "cfqp_outputs_test";
  std::filesystem::remove_all(dir);
  const auto res = run_experiment(validate_config(small_synthetic()));
  write_outputs(res, dir / "res");
  CHECK(std::filesystem::exists(dir / "res.json"));
  CHECK(std::filesystem::exists(dir / "res_cfqp.csv"));
  CHECK(std::filesystem::exists(dir / "res_cqr.csv"));
  std::filesystem::remove_all(dir);
}

TEST_CASE("evaluate reads a predictions table")
{
  std::ostringstream text;
  text << "split,group,y,q_lo,q_hi\n";
  for (const char* tag : { "train", "cal", "test" })
    for (int i = 0; i < 40; ++i) {
      const int g = i % 2;
      const double c = 2.0 * g + 0.1 * i;
      text << tag << ',' << (g ? "b" : "a") << ',' << c + ((i * 7) % 5 - 2) * 0.5 << ',' << c - 1 << ','
           << c + 1 << '\n';
    }
  auto cfg = validate_config(ConfigValues{ { "methods", "cfqp, cqr, unfair" } }, false);
  std::istringstream in(text.str());
  const auto res = evaluate_predictions(cfg, in);
  CHECK(res.group_count == 2);
  CHECK(res.repetitions == 1);
  REQUIRE(res.methods.size() == 3);
  for (const auto& m : res.methods)
    CHECK(m.reports.size() == 1);

  std::istringstream bad("split,group,y,q_lo,q_hi\nvalid,a,1,0,2\n");
  try {
    evaluate_predictions(cfg, bad);
    FAIL("no error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::unparsable_cell);
  }
}
