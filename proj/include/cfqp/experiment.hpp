#pragma once

#include "cfqp/dataset.hpp"
#include "cfqp/error.hpp"
#include "cfqp/pipeline.hpp"
#include "cfqp/quantile_regression.hpp"

#include "json.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace cfqp {

// Config grammar: one `key = value` per line, `#` starts a comment, list
// values are comma separated. Keys are listed by config_keys().

struct ExperimentConfig
{
  // data source: exactly one of csv / synthetic
  std::optional<std::filesystem::path> csv;
  CsvSchema schema;
  bool synthetic = false;
  SyntheticConfig scenario;
  std::size_t n = 2000;
  std::size_t n_test = 2000;
  double test_fraction = 0.2;

  double alpha = 0.1;
  std::optional<double> alpha_lo;
  std::optional<double> alpha_hi;
  std::optional<std::pair<double, double>> levels;

  SmoothingMethod smoothing = SmoothingMethod::kernel_smoother();
  std::size_t grid_size = default_grid_size;
  std::optional<double> sigma;

  std::size_t repetitions = 200;
  double calibration_fraction = 0.5;
  std::uint64_t seed = 0;
  std::vector<Method> methods{ Method::cfqp, Method::cqr };
  FitOptions fit;

  //! <output>.json and <output>_<method>.csv
  std::filesystem::path output = "cfqp_results";
  //! eval subcommand input
  std::optional<std::filesystem::path> predictions;

  PipelineOptions pipeline_options() const;
};

using ConfigValues = std::map<std::string, std::string>;

const std::vector<std::string>& config_keys();

//! Thrown with every problem found, one message each.
class ConfigError : public Error
{
public:
  explicit ConfigError(std::vector<std::string> problems);
  const std::vector<std::string>& problems() const noexcept { return problems_; }

private:
  std::vector<std::string> problems_;
};

ConfigValues parse_config_text(const std::string& text);
ConfigValues read_config_file(const std::filesystem::path& path);

//! Resolves defaults and checks everything. `require_source` is false for the
//! eval subcommand, which reads predictions instead of data.
ExperimentConfig validate_config(const ConfigValues& values, bool require_source = true);
ExperimentConfig validate_config(const std::filesystem::path& path);

struct MethodRuns
{
  Method method;
  std::vector<std::uint64_t> seeds;
  std::vector<EvaluationReport> reports;
};

struct ExperimentResult
{
  int group_count = 0;
  std::size_t repetitions = 0;
  std::size_t failures = 0;
  std::vector<std::string> failure_messages;
  std::vector<MethodRuns> methods;

  nlohmann::ordered_json summary() const;
  std::string csv(Method m) const;
};

//! Repetition r uses seed + r; stages draw from derive_seed(seed + r, tag).
//! Repetitions run in parallel and are merged in order. Throws runtime when
//! more than 10% of them fail.
ExperimentResult run_experiment(const ExperimentConfig& config);

//! One pass of every configured method on a predictions table with columns
//! split (train | cal | test), group, y, q_lo, q_hi.
ExperimentResult evaluate_predictions(const ExperimentConfig& config, std::istream& in);
ExperimentResult evaluate_predictions(const ExperimentConfig& config);

void write_outputs(const ExperimentResult& result, const std::filesystem::path& output);

//! mean and standard error of the mean
std::pair<double, double> mean_stderr(std::span<const double> values);

} // namespace cfqp
