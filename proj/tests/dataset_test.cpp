#include "cfqp/dataset.hpp"
#include "cfqp/error.hpp"
#include "cfqp/log.hpp"
#include "cfqp/metrics.hpp"

#include "doctest.h"
#include "oracles.hpp"

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

using namespace cfqp;

namespace {

CsvSchema schema_xsy()
{
  CsvSchema s;
  s.group_column = "s";
  s.response_column = "y";
  return s;
}

ErrorKind kind_of(auto&& fn)
{
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an error");
  return ErrorKind::runtime;
}

} // namespace

TEST_CASE("load_csv parses a three-row file")
{
  std::istringstream in("x1,s,y\n1.5,0,2\n2.5,1,3\n3.5,1,4\n");
  const auto d = read_csv(in, schema_xsy());
  CHECK(d.size() == 3);
  CHECK(d.feature_count() == 1);
  CHECK(d.group_count() == 2);
  CHECK(d[2].features[0] == 3.5);
  CHECK(d[2].response == 4.0);
  CHECK(d.feature_names() == std::vector<std::string>{ "x1" });
}

TEST_CASE("load_csv names the unparsable cell")
{
  std::istringstream in("x1,s,y\n1,0,2\n2,1,abc\n");
  try {
    read_csv(in, schema_xsy());
    FAIL("no error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::unparsable_cell);
    CHECK(e.row() == std::optional<std::size_t>(2));
    CHECK(e.column() == "y");
    CHECK(std::string(e.what()).find("abc") != std::string::npos);
  }
}

TEST_CASE("load_csv re-encodes string labels densely")
{
  // hand re-encoding: lexical order a -> 0, b -> 1
  std::istringstream in("x1,s,y\n0,b,1\n1,a,2\n2,b,3\n3,a,4\n");
  const auto d = read_csv(in, schema_xsy());
  CHECK(d.group_count() == 2);
  CHECK(d.groups() == std::vector<int>{ 1, 0, 1, 0 });
  CHECK(d.group_labels() == std::vector<std::string>{ "a", "b" });
}

TEST_CASE("numeric labels sort numerically")
{
  std::istringstream in("x1,s,y\n0,10,1\n1,9,2\n2,10,3\n");
  const auto d = read_csv(in, schema_xsy());
  CHECK(d.group_labels() == std::vector<std::string>{ "9", "10" });
  CHECK(d.groups() == std::vector<int>{ 1, 0, 1 });
}

TEST_CASE("load_csv error kinds are distinct")
{
  CHECK(kind_of([] { load_csv("/nonexistent/file.csv", schema_xsy()); }) == ErrorKind::missing_file);
  CHECK(kind_of([] {
          std::istringstream in("");
          read_csv(in, schema_xsy());
        }) == ErrorKind::empty_file);
  CHECK(kind_of([] {
          std::istringstream in("x1,s,y\n");
          read_csv(in, schema_xsy());
        }) == ErrorKind::empty_file);
  CHECK(kind_of([] {
          std::istringstream in("x1,s,y\n1,0,2\n2,0,3\n");
          auto s = schema_xsy();
          s.declared_group_count = 2;
          read_csv(in, s);
        }) == ErrorKind::constant_group);
}

TEST_CASE("load_csv handles delimiter, quotes and byte order mark")
{
  std::istringstream in("\xEF\xBB\xBFx1;\"s\";y\n\"1.0\";\"g;1\";2\n");
  auto s = schema_xsy();
  s.delimiter = ';';
  const auto d = read_csv(in, s);
  CHECK(d.size() == 1);
  CHECK(d.group_labels()[0] == "g;1");
}

TEST_CASE("write_csv then load_csv round-trips")
{
  SyntheticConfig cfg;
  cfg.feature_count = 3;
  const auto d = generate_synthetic(cfg, 200, 5);
  std::stringstream buf;
  write_csv(d, buf);
  CsvSchema s;
  s.group_column = "group";
  s.response_column = "y";
  const auto back = read_csv(buf, s);
  REQUIRE(back.size() == d.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    CHECK(back[i].group == d[i].group);
    CHECK(back[i].response == doctest::Approx(d[i].response).epsilon(1e-12));
    for (std::size_t j = 0; j < 3; ++j)
      CHECK(back[i].features[j] == doctest::Approx(d[i].features[j]).epsilon(1e-12));
  }
}

TEST_CASE("split is a deterministic partition")
{
  const auto a = split(10, 0.5, 42);
  const auto b = split(10, 0.5, 42);
  CHECK(a.calibration.size() == 5);
  CHECK(a.proper_training.size() == 5);
  CHECK(a.calibration == b.calibration);
  std::set<Index> all(a.calibration.begin(), a.calibration.end());
  all.insert(a.proper_training.begin(), a.proper_training.end());
  CHECK(all.size() == 10);
  CHECK(*all.rbegin() == 9);

  CHECK_THROWS_AS(split(3, 0.9, 1), Error);
  CHECK_THROWS_AS(split(1, 0.5, 1), Error);
}

TEST_CASE("split partitions for many sizes and fractions")
{
  for (std::size_t n = 2; n < 60; ++n)
    for (double f : { 0.1, 0.3, 0.5, 0.77 }) {
      const std::size_t k = static_cast<std::size_t>(std::llround(f * static_cast<double>(n)));
      if (k == 0 || k >= n) {
        CHECK_THROWS(split(n, f, n));
        continue;
      }
      const auto s = split(n, f, n);
      CHECK(s.calibration.size() == k);
      CHECK(s.calibration.size() + s.proper_training.size() == n);
      std::vector<Index> both;
      std::set_intersection(s.calibration.begin(), s.calibration.end(), s.proper_training.begin(),
                            s.proper_training.end(), std::back_inserter(both));
      CHECK(both.empty());
    }
}

TEST_CASE("stratified split keeps every group on both sides")
{
  std::vector<Observation> rows;
  for (int i = 0; i < 100; ++i)
    rows.push_back({ { double(i) }, i < 4 ? 1 : 0, double(i) });
  const Dataset d(rows, 2);
  const auto s = split(d, 0.5, 3, true);
  const auto cal_groups = d.groups(s.calibration);
  const auto train_groups = d.groups(s.proper_training);
  CHECK(std::count(cal_groups.begin(), cal_groups.end(), 1) == 2);
  CHECK(std::count(train_groups.begin(), train_groups.end(), 1) == 2);
}

TEST_CASE("partition_by_group weights")
{
  set_warning_sink([](const std::string&) {});
  {
    const std::vector<int> g{ 0, 1, 0, 1 };
    const auto p = partition_by_group(g, 2);
    CHECK(p.weights == std::vector<double>{ 0.5, 0.5 });
  }
  {
    const std::vector<int> g{ 0, 0, 0, 1 };
    const auto p = partition_by_group(g, 2);
    // direct count: 3/4 and 1/4
    CHECK(p.weights[0] == 3.0 / 4.0);
    CHECK(p.weights[1] == 1.0 / 4.0);
    CHECK(p.per_group_indices[0] == IndexList{ 0, 1, 2 });
  }
  {
    const std::vector<int> g{ 0, 0, 0 };
    try {
      partition_by_group(g, 2);
      FAIL("no error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::empty_group);
      CHECK(std::string(e.what()) == "empty group 1");
    }
  }
  set_warning_sink(nullptr);
}

TEST_CASE("partition weights sum to one and match integer counts")
{
  set_warning_sink([](const std::string&) {});
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const int k = 1 + static_cast<int>(rng() % 5);
    const std::size_t n = static_cast<std::size_t>(k) + rng() % 200;
    std::vector<int> g(n);
    for (std::size_t i = 0; i < n; ++i)
      g[i] = i < static_cast<std::size_t>(k) ? static_cast<int>(i) : static_cast<int>(rng() % static_cast<unsigned>(k));
    const auto p = partition_by_group(g, k);
    double sum = 0;
    for (int s = 0; s < k; ++s) {
      const auto c = static_cast<double>(std::count(g.begin(), g.end(), s));
      CHECK(p.weights[static_cast<std::size_t>(s)] == c / static_cast<double>(n));
      sum += p.weights[static_cast<std::size_t>(s)];
    }
    CHECK(std::abs(sum - 1.0) <= 1e-12);
    CHECK(p.total() == n);
  }
  set_warning_sink(nullptr);
}

TEST_CASE("partition over a dataset index subset maps back to rows")
{
  std::vector<Observation> rows;
  for (int i = 0; i < 8; ++i)
    rows.push_back({ { 0.0 }, i % 2, double(i) });
  const Dataset d(rows, 2);
  set_warning_sink([](const std::string&) {});
  const IndexList idx{ 1, 2, 5, 6 };
  const auto p = partition_by_group(d, idx);
  CHECK(p.per_group_indices[0] == IndexList{ 2, 6 });
  CHECK(p.per_group_indices[1] == IndexList{ 1, 5 });
  const IndexList only_even{ 0, 2, 4 };
  CHECK_THROWS_WITH(partition_by_group(d, only_even), "empty group 1");
  set_warning_sink(nullptr);
}

TEST_CASE("small groups raise a warning")
{
  std::vector<std::string> seen;
  set_warning_sink([&](const std::string& m) { seen.push_back(m); });
  const std::vector<int> g{ 0, 0, 1 };
  partition_by_group(g, 2, 2);
  set_warning_sink(nullptr);
  REQUIRE(seen.size() == 1);
  CHECK(seen[0].find("group 1") != std::string::npos);
}

TEST_CASE("synthetic groups with equal parameters are indistinguishable")
{
  SyntheticConfig cfg;
  const auto d = generate_synthetic(cfg, 4000, 17);
  std::vector<double> a, b;
  for (const auto& o : d.observations())
    (o.group == 0 ? a : b).push_back(o.response);
  const double stat = ks_two_sample(a, b);
  const double ne = static_cast<double>(a.size() * b.size()) / static_cast<double>(a.size() + b.size());
  CHECK(oracle::kolmogorov_tail(std::sqrt(ne) * stat) > 0.01);
}

TEST_CASE("synthetic group shift shows in the response means")
{
  SyntheticConfig cfg;
  cfg.shifts = { 0.0, 5.0 };
  const auto d = generate_synthetic(cfg, 5000, 23);
  double sum[2] = { 0, 0 };
  double cnt[2] = { 0, 0 };
  for (const auto& o : d.observations()) {
    sum[o.group] += o.response;
    cnt[o.group] += 1;
  }
  const double diff = sum[1] / cnt[1] - sum[0] / cnt[0];
  CHECK(std::abs(diff - 5.0) <= 0.1);
}

TEST_CASE("synthetic config validation")
{
  SyntheticConfig cfg;
  cfg.proportions = { 0.6, 0.5 };
  CHECK_THROWS_AS(generate_synthetic(cfg, 10, 1), Error);
  cfg.proportions = { 0.5, 0.5 };
  cfg.scales = { 1.0, 0.0 };
  CHECK_THROWS_AS(generate_synthetic(cfg, 10, 1), Error);
  cfg.scales = { 1.0, 1.0 };
  CHECK(generate_synthetic(cfg, 10, 1).size() == 10);
  // deterministic
  const auto a = generate_synthetic(cfg, 50, 9);
  const auto b = generate_synthetic(cfg, 50, 9);
  CHECK(a.responses() == b.responses());
}
