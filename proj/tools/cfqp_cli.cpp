#include "cfqp/dataset.hpp"
#include "cfqp/error.hpp"
#include "cfqp/experiment.hpp"

#include "CLI11.hpp"

#include <iostream>

namespace {

enum Exit
{
  ok = 0,
  validation = 1,
  runtime = 2
};

// Every config key doubles as a --key flag; flags override the file.
struct KeyOptions
{
  std::string config_path;
  std::map<std::string, std::string> flags;

  void attach(CLI::App& app)
  {
    app.add_option("-c,--config", config_path, "key = value config file");
    for (const auto& key : cfqp::config_keys())
      app.add_option("--" + key, flags[key], "config key '" + key + "'");
  }

  cfqp::ConfigValues resolve() const
  {
    cfqp::ConfigValues values;
    if (!config_path.empty())
      values = cfqp::read_config_file(config_path);
    for (const auto& [key, value] : flags)
      if (!value.empty())
        values[key] = value;
    return values;
  }
};

int report(const cfqp::Error& e)
{
  std::cerr << "error: " << e.what() << "\n";
  return e.kind() == cfqp::ErrorKind::runtime ? runtime : validation;
}

} // namespace

int main(int argc, char** argv)
{
  CLI::App app{ "Fair conformal quantile prediction experiments" };
  app.require_subcommand(1);

  KeyOptions run_opts, synth_opts, eval_opts;
  auto* run = app.add_subcommand("run", "repeated split / fit / synchronize / conformalize runs");
  run_opts.attach(*run);

  auto* synth = app.add_subcommand("synth", "write a synthetic dataset as CSV");
  synth_opts.attach(*synth);
  std::string synth_out;
  synth->add_option("-o,--out", synth_out, "CSV destination")->required();

  auto* eval = app.add_subcommand("eval", "metrics on a precomputed predictions CSV");
  eval_opts.attach(*eval);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? ok : validation;
  }

  try {
    if (*run) {
      const auto cfg = cfqp::validate_config(run_opts.resolve());
      const auto result = cfqp::run_experiment(cfg);
      cfqp::write_outputs(result, cfg.output);
      std::cout << result.summary().dump(2) << "\n";
    } else if (*synth) {
      auto values = synth_opts.resolve();
      values["synthetic"] = "true";
      values.erase("csv");
      const auto cfg = cfqp::validate_config(values);
      const auto data = cfqp::generate_synthetic(cfg.scenario, cfg.n, cfg.seed);
      cfqp::write_csv(data, synth_out, cfg.schema.delimiter);
    } else if (*eval) {
      const auto cfg = cfqp::validate_config(eval_opts.resolve(), false);
      const auto result = cfqp::evaluate_predictions(cfg);
      cfqp::write_outputs(result, cfg.output);
      std::cout << result.summary().dump(2) << "\n";
    }
  } catch (const cfqp::Error& e) {
    return report(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return runtime;
  }
  return ok;
}
