#include "cfqp/error.hpp"
#include "cfqp/log.hpp"
#include "cfqp/pipeline.hpp"

#include "doctest.h"
#include "oracles.hpp"

#include <random>

using namespace cfqp;

namespace {

struct QuietWarnings
{
  QuietWarnings() { set_warning_sink([](const std::string&) {}); }
  ~QuietWarnings() { set_warning_sink(nullptr); }
};

struct Splits
{
  PredictionSet train, cal, test;
};

Dataset one_group(const Dataset& d)
{
  std::vector<Observation> rows(d.observations().begin(), d.observations().end());
  for (auto& r : rows)
    r.group = 0;
  return Dataset(rows, 1);
}

Splits fitted(const SyntheticConfig& cfg, std::size_t n, std::size_t n_test, std::uint64_t seed,
              bool merge_groups = false, double alpha = 0.1)
{
  auto d = generate_synthetic(cfg, n, seed);
  auto t = generate_synthetic(cfg, n_test, seed + 1000);
  if (merge_groups) {
    d = one_group(d);
    t = one_group(t);
  }
  const int k = d.group_count();
  const auto s = split(d, 0.5, seed, k > 1);
  const auto pair = fit_pair(d, s.proper_training, alpha, {}, seed);
  IndexList all(t.size());
  for (std::size_t i = 0; i < all.size(); ++i)
    all[i] = i;
  return { make_prediction_set(pair, d, s.proper_training), make_prediction_set(pair, d, s.calibration),
           make_prediction_set(pair, t, all) };
}

// predictions drawn directly, no regression involved
Splits direct(int k, std::size_t n_per_group, std::uint64_t seed)
{
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z;
  Splits out;
  for (auto* ps : { &out.train, &out.cal, &out.test })
    for (int s = 0; s < k; ++s)
      for (std::size_t i = 0; i < n_per_group; ++i) {
        const double c = 3.0 * s + z(rng);
        ps->lower.push_back(c - 1.5);
        ps->upper.push_back(c + 1.5);
        ps->group.push_back(s);
        ps->response.push_back(c + 1.2 * z(rng));
      }
  return out;
}

} // namespace

TEST_CASE("method names round trip")
{
  for (Method m : { Method::cfqp, Method::cqr, Method::unfair })
    CHECK(parse_method(to_string(m)) == m);
  CHECK_THROWS_AS(parse_method("fair"), Error);
}

TEST_CASE("single group with zero jitter reproduces CQR exactly")
{
  QuietWarnings quiet;
  const auto sp = fitted(SyntheticConfig{}, 500, 300, 4, true);
  PipelineOptions opts;
  opts.jitter_sigma = 0.0;
  opts.smoothing.method = SmoothingMethod::empirical();
  const auto a = run_method(Method::cfqp, sp.train, sp.cal, sp.test, 1, opts, 9);
  const auto b = run_method(Method::cqr, sp.train, sp.cal, sp.test, 1, opts, 9);
  CHECK(a.calibration.margin == b.calibration.margin);
  REQUIRE(a.intervals.size() == b.intervals.size());
  for (std::size_t i = 0; i < a.intervals.size(); ++i) {
    CHECK(a.intervals[i].lower == b.intervals[i].lower);
    CHECK(a.intervals[i].upper == b.intervals[i].upper);
  }
  CHECK(evaluate(a, sp.test, 1).single_group);
}

TEST_CASE("unfair method applies no margin")
{
  const auto sp = direct(2, 100, 1);
  const auto r = run_method(Method::unfair, sp.train, sp.cal, sp.test, 2, {}, 0);
  CHECK(r.calibration.margin == 0.0);
  for (std::size_t i = 0; i < sp.test.size(); ++i) {
    CHECK(r.intervals[i].lower == sp.test.lower[i]);
    CHECK(r.intervals[i].upper == sp.test.upper[i]);
  }
}

TEST_CASE("CQR margin equals the order statistic of raw scores")
{
  const auto sp = direct(2, 150, 2);
  const auto r = run_method(Method::cqr, sp.train, sp.cal, sp.test, 2, {}, 0);
  std::vector<double> scores;
  for (std::size_t i = 0; i < sp.cal.size(); ++i)
    scores.push_back(std::max(sp.cal.lower[i] - sp.cal.response[i], sp.cal.response[i] - sp.cal.upper[i]));
  CHECK(r.calibration.margin == oracle::margin(scores, 1, 10));
}

TEST_CASE("cfqp is deterministic and serial equals parallel")
{
  const auto sp = direct(3, 200, 3);
  PipelineOptions opts;
  opts.exec = Execution::serial;
  const auto a = run_method(Method::cfqp, sp.train, sp.cal, sp.test, 3, opts, 17);
  opts.exec = Execution::parallel;
  const auto b = run_method(Method::cfqp, sp.train, sp.cal, sp.test, 3, opts, 17);
  const auto c = run_method(Method::cfqp, sp.train, sp.cal, sp.test, 3, opts, 17);
  CHECK(a.lower_endpoints == b.lower_endpoints);
  CHECK(a.upper_endpoints == b.upper_endpoints);
  CHECK(b.lower_endpoints == c.lower_endpoints);
  CHECK(a.calibration.margin == b.calibration.margin);

  const auto d = run_method(Method::cfqp, sp.train, sp.cal, sp.test, 3, opts, 18);
  CHECK(d.lower_endpoints != b.lower_endpoints);
}

TEST_CASE("cfqp removes the group gap that CQR keeps")
{
  const auto sp = direct(2, 1000, 5);
  const auto fair = evaluate(run_method(Method::cfqp, sp.train, sp.cal, sp.test, 2, {}, 1), sp.test, 2);
  const auto raw = evaluate(run_method(Method::cqr, sp.train, sp.cal, sp.test, 2, {}, 1), sp.test, 2);
  CHECK(raw.ks_lo > 0.7);
  CHECK(fair.ks_lo < 0.1);
  CHECK(fair.ks_hi < 0.1);
  // marginal coverage stays near 0.9 with 2000 calibration points
  CHECK(fair.coverage > 0.86);
  CHECK(fair.coverage < 0.94);
}

TEST_CASE("asymmetric tails keep each side's miscoverage")
{
  QuietWarnings quiet;
  SyntheticConfig cfg;
  cfg.shifts = { 0.0, 2.0 };
  cfg.scales = { 1.0, 2.0 };
  PipelineOptions opts;
  opts.tails = std::make_pair(0.05, 0.05);
  double below = 0, above = 0, total = 0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto sp = fitted(cfg, 2000, 2000, seed);
    const auto r = run_method(Method::cfqp, sp.train, sp.cal, sp.test, 2, opts, seed);
    CHECK(r.calibration.mode == ConformalCalibration::Mode::asymmetric);
    for (std::size_t i = 0; i < sp.test.size(); ++i) {
      below += sp.test.response[i] < r.intervals[i].lower;
      above += sp.test.response[i] > r.intervals[i].upper;
      total += 1;
    }
  }
  CHECK(below / total < 0.07);
  CHECK(above / total < 0.07);
  CHECK(below / total > 0.03);
  CHECK(above / total > 0.03);
}

TEST_CASE("prediction set validation")
{
  auto sp = direct(2, 20, 6);
  CHECK_THROWS_AS(run_method(Method::cqr, sp.train, sp.cal, sp.test, 0, {}, 0), Error);

  auto bad = sp.test;
  bad.group[3] = 2;
  CHECK_THROWS_AS(run_method(Method::cfqp, sp.train, sp.cal, bad, 2, {}, 0), Error);

  bad = sp.test;
  bad.lower.pop_back();
  try {
    run_method(Method::cfqp, sp.train, sp.cal, bad, 2, {}, 0);
    FAIL("no error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::dimension_mismatch);
  }

  bad = sp.cal;
  bad.response[0] = std::nan("");
  CHECK_THROWS_AS(run_method(Method::cqr, sp.train, bad, sp.test, 2, {}, 0), Error);

  PipelineOptions neg;
  neg.jitter_sigma = -1.0;
  CHECK_THROWS_AS(run_method(Method::cfqp, sp.train, sp.cal, sp.test, 2, neg, 0), Error);

  // group 1 missing from calibration
  bad = sp.cal;
  std::fill(bad.group.begin(), bad.group.end(), 0);
  try {
    run_method(Method::cfqp, sp.train, bad, sp.test, 2, {}, 0);
    FAIL("no error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::empty_group);
  }
}
