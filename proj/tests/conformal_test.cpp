#include "cfqp/conformal.hpp"
#include "cfqp/error.hpp"
#include "cfqp/log.hpp"

#include "doctest.h"
#include "oracles.hpp"

#include <algorithm>
#include <random>

using namespace cfqp;

namespace {

std::vector<double> normals(std::size_t n, std::uint64_t seed)
{
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z;
  std::vector<double> v(n);
  for (auto& x : v)
    x = z(rng);
  return v;
}

} // namespace

TEST_CASE("conformity score hand values")
{
  auto one = [](double lo, double hi, double y) {
    return conformity_scores(std::vector<double>{ lo }, std::vector<double>{ hi }, std::vector<double>{ y }).sorted[0];
  };
  CHECK(one(0, 1, 0.5) == std::max(0 - 0.5, 0.5 - 1));
  CHECK(one(0, 1, 0.5) == -0.5);
  CHECK(one(0, 1, 2) == std::max(0.0 - 2, 2.0 - 1));
  CHECK(one(0, 1, 2) == 1.0);
  CHECK(one(3, 3, 3) == 0.0);

  const auto s = conformity_scores(std::vector<double>{ 0, 0, 0 }, std::vector<double>{ 1, 1, 1 },
                                   std::vector<double>{ 2, -3, 0.5 });
  CHECK(s.sorted == std::vector<double>{ -0.5, 1, 3 });
  CHECK_THROWS_AS(conformity_scores(std::vector<double>{ 0 }, std::vector<double>{ 1, 2 }, std::vector<double>{ 0 }),
                  Error);
}

TEST_CASE("margin index arithmetic")
{
  std::vector<double> scores(99);
  for (std::size_t i = 0; i < scores.size(); ++i)
    scores[i] = static_cast<double>((i * 37) % 99); // a permutation of 0..98
  // ceil(0.9 * 100) = 90th smallest
  CHECK(conformal_margin(scores, 0.1) == oracle::margin(scores, 1, 10));
  CHECK(conformal_margin(scores, 0.1) == 89.0);
  CHECK(margin_rank(99, 0.1) == 90);

  const std::vector<double> nine{ 5, 3, 8, 1, 9, 2, 7, 4, 6 };
  CHECK(margin_rank(9, 0.1) == 9);
  CHECK(conformal_margin(nine, 0.1) == 9.0);
  CHECK(conformal_margin(nine, 0.1) == oracle::margin(nine, 1, 10));

  const std::vector<double> four{ 4, 1, 3, 2 };
  CHECK(conformal_margin(four, 0.05) == 4.0);

  CHECK_THROWS_AS(conformal_margin(std::vector<double>{}, 0.1), Error);
  CHECK_THROWS_AS(conformal_margin(four, 0.0), Error);
  CHECK_THROWS_AS(conformal_margin(four, 1.0), Error);
}

TEST_CASE("margin agrees with the integer oracle across sizes and levels")
{
  for (std::int64_t n = 1; n <= 120; ++n) {
    const auto s = normals(static_cast<std::size_t>(n), static_cast<std::uint64_t>(n));
    for (std::int64_t pct = 1; pct <= 99; ++pct)
      CHECK(conformal_margin(s, static_cast<double>(pct) / 100.0) == oracle::margin(s, pct, 100));
  }
}

TEST_CASE("margin is symmetric in the scores and monotone in the level")
{
  auto s = normals(200, 3);
  const double m = conformal_margin(s, 0.1);
  std::mt19937_64 rng(1);
  for (int i = 0; i < 20; ++i) {
    std::shuffle(s.begin(), s.end(), rng);
    CHECK(conformal_margin(s, 0.1) == m);
  }
  double prev = -1e300;
  for (int k = 99; k >= 1; --k) {
    const double v = conformal_margin(s, k / 100.0);
    CHECK(v >= prev);
    prev = v;
  }
}

TEST_CASE("symmetric intervals")
{
  ConformalCalibration cal;
  cal.margin = 0;
  auto iv = predict_interval(0, 1, cal);
  CHECK(iv.lower == 0.0);
  CHECK(iv.upper == 1.0);
  cal.margin = 0.25;
  iv = predict_interval(0, 1, cal);
  CHECK(iv.lower == 0 - 0.25);
  CHECK(iv.upper == 1 + 0.25);
  cal.margin = -0.1;
  iv = predict_interval(0, 1, cal);
  CHECK(iv.lower == doctest::Approx(0 + 0.1));
  CHECK(iv.upper == doctest::Approx(1 - 0.1));

  cal.mode = ConformalCalibration::Mode::asymmetric;
  try {
    predict_interval(0, 1, cal);
    FAIL("no error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::mode_mismatch);
  }
}

TEST_CASE("crossed intervals are kept as computed")
{
  ConformalCalibration cal;
  cal.margin = -1;
  const auto iv = predict_interval(0, 1, cal);
  CHECK(iv.lower == 1.0);
  CHECK(iv.upper == 0.0);
  CHECK(iv.crossed());
  CHECK(iv.length() == 0.0);
  CHECK(!iv.contains(0.5));
}

TEST_CASE("asymmetric calibration")
{
  SUBCASE("symmetric noise gives similar margins")
  {
    const auto y = normals(4000, 8);
    const std::vector<double> lo(y.size(), -1.0), hi(y.size(), 1.0);
    const auto cal = calibrate_asymmetric(lo, hi, y, 0.05, 0.05);
    CHECK(cal.mode == ConformalCalibration::Mode::asymmetric);
    // both estimate z_0.95 - 1 with sd about 0.05
    CHECK(std::abs(cal.margin_lo - cal.margin_hi) < 0.15);
    CHECK(std::abs(cal.margin_lo - 0.645) < 0.15);
  }
  SUBCASE("responses inside the band by delta")
  {
    const double delta = 0.3;
    std::vector<double> lo, hi, y;
    for (int i = 0; i < 9; ++i) {
      lo.push_back(i);
      hi.push_back(i + 2);
      y.push_back(i + (i % 2 ? delta : 2 - delta));
    }
    // odd rows sit delta above lo, even rows delta below hi
    const auto cal = calibrate_asymmetric(lo, hi, y, 0.1, 0.1);
    CHECK(cal.margin_lo == doctest::Approx(-delta));
    CHECK(cal.margin_hi == doctest::Approx(-delta));
  }
  SUBCASE("n = 9 at level 0.1 clamps to the largest lower-tail score")
  {
    const auto y = normals(9, 4);
    const std::vector<double> lo(9, 0.0), hi(9, 1.0);
    const auto cal = calibrate_asymmetric(lo, hi, y, 0.1, 0.3);
    std::vector<double> lower_scores(9);
    for (std::size_t i = 0; i < 9; ++i)
      lower_scores[i] = lo[i] - y[i];
    CHECK(cal.margin_lo == *std::max_element(lower_scores.begin(), lower_scores.end()));
    const auto iv = predict_interval_asymmetric(0, 1, cal);
    CHECK(iv.lower == 0 - cal.margin_lo);
    CHECK(iv.upper == 1 + cal.margin_hi);
    CHECK_THROWS_AS(predict_interval(0, 1, cal), Error);
  }
  CHECK_THROWS_AS(calibrate_asymmetric(std::vector<double>{ 0 }, std::vector<double>{ 1 }, std::vector<double>{ 0 },
                                       0.0, 0.1),
                  Error);
}

TEST_CASE("CQR baseline covers on synthetic data")
{
  set_warning_sink([](const std::string&) {});
  SyntheticConfig cfg;
  cfg.scales = { 1.0, 2.0 };
  double covered = 0, total = 0;
  for (std::uint64_t rep = 0; rep < 20; ++rep) {
    const auto d = generate_synthetic(cfg, 1500, rep);
    const auto train_cal = split(1000, 0.5, rep);
    IndexList test;
    for (Index i = 1000; i < 1500; ++i)
      test.push_back(i);
    const auto pair = fit_pair(d, train_cal.proper_training, 0.1, {}, rep);
    const auto ivs = cqr_baseline(pair, d, train_cal, 0.1, test);
    const auto again = cqr_baseline(pair, d, train_cal, 0.1, test);
    for (std::size_t i = 0; i < test.size(); ++i) {
      covered += ivs[i].contains(d[test[i]].response) ? 1 : 0;
      total += 1;
      CHECK(ivs[i].lower == again[i].lower);
    }
  }
  set_warning_sink(nullptr);
  // 10000 test points; binomial sd of the coverage is 0.003
  CHECK(covered / total >= 0.9 - 0.015);
}
