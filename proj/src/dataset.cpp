#include "cfqp/dataset.hpp"

#include "cfqp/error.hpp"
#include "cfqp/log.hpp"
#include "cfqp/rng.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <sstream>
#include <unordered_map>

namespace cfqp {

// ---------------------------------------------------------------------------
// Dataset

Dataset::Dataset(std::vector<Observation> observations,
                 int group_count,
                 std::vector<std::string> feature_names,
                 std::vector<std::string> group_labels,
                 std::string response_name)
  : observations_(std::move(observations))
  , group_count_(group_count)
  , feature_count_(0)
  , feature_names_(std::move(feature_names))
  , group_labels_(std::move(group_labels))
  , response_name_(std::move(response_name))
{
  if (observations_.empty())
    throw Error(ErrorKind::invalid_argument, "dataset must be non-empty");
  if (group_count_ < 1)
    throw Error(ErrorKind::invalid_argument, "group count must be >= 1");

  feature_count_ = observations_.front().features.size();
  for (std::size_t i = 0; i < observations_.size(); ++i) {
    const auto& obs = observations_[i];
    if (obs.features.size() != feature_count_)
      throw Error(ErrorKind::dimension_mismatch,
                  "row " + std::to_string(i) + " has " +
                    std::to_string(obs.features.size()) + " features, expected " +
                    std::to_string(feature_count_));
    if (obs.group < 0 || obs.group >= group_count_)
      throw Error(ErrorKind::invalid_argument,
                  "row " + std::to_string(i) + " has group label " +
                    std::to_string(obs.group) + " outside [0, " +
                    std::to_string(group_count_) + ")");
    if (!std::isfinite(obs.response))
      throw Error(ErrorKind::invalid_argument,
                  "row " + std::to_string(i) + " has a non-finite response");
    for (double v : obs.features)
      if (!std::isfinite(v))
        throw Error(ErrorKind::invalid_argument,
                    "row " + std::to_string(i) + " has a non-finite feature");
  }

  if (feature_names_.empty())
    for (std::size_t j = 0; j < feature_count_; ++j)
      feature_names_.push_back("x" + std::to_string(j + 1));
  if (feature_names_.size() != feature_count_)
    throw Error(ErrorKind::dimension_mismatch, "feature name count mismatch");

  if (group_labels_.empty())
    for (int s = 0; s < group_count_; ++s)
      group_labels_.push_back(std::to_string(s));
  if (static_cast<int>(group_labels_.size()) != group_count_)
    throw Error(ErrorKind::dimension_mismatch, "group label count mismatch");
}

std::vector<double> Dataset::responses(std::span<const Index> indices) const
{
  std::vector<double> out;
  out.reserve(indices.size());
  for (Index i : indices)
    out.push_back(observations_.at(i).response);
  return out;
}

std::vector<int> Dataset::groups(std::span<const Index> indices) const
{
  std::vector<int> out;
  out.reserve(indices.size());
  for (Index i : indices)
    out.push_back(observations_.at(i).group);
  return out;
}

std::vector<double> Dataset::responses() const
{
  std::vector<double> out;
  out.reserve(size());
  for (const auto& obs : observations_)
    out.push_back(obs.response);
  return out;
}

std::vector<int> Dataset::groups() const
{
  std::vector<int> out;
  out.reserve(size());
  for (const auto& obs : observations_)
    out.push_back(obs.group);
  return out;
}

Dataset Dataset::subset(std::span<const Index> indices) const
{
  std::vector<Observation> rows;
  rows.reserve(indices.size());
  for (Index i : indices)
    rows.push_back(observations_.at(i));
  return Dataset(std::move(rows),
                 group_count_,
                 feature_names_,
                 group_labels_,
                 response_name_);
}

// ---------------------------------------------------------------------------
// CSV

namespace {

std::string trim(std::string_view s)
{
  auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos)
    return {};
  auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split_line(const std::string& line, char delimiter)
{
  std::vector<std::string> cells;
  std::string cell;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cell.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cell.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == delimiter) {
      cells.push_back(trim(cell));
      cell.clear();
    } else {
      cell.push_back(c);
    }
  }
  cells.push_back(trim(cell));
  return cells;
}

bool parse_double(const std::string& text, double& value)
{
  if (text.empty())
    return false;
  const char* begin = text.data();
  const char* end = text.data() + text.size();
  if (*begin == '+')
    ++begin;
  auto [ptr, ec] = std::from_chars(begin, end, value);
  return ec == std::errc() && ptr == end && std::isfinite(value);
}

std::size_t column_of(const std::vector<std::string>& header,
                      const std::string& name)
{
  auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end())
    throw Error(ErrorKind::invalid_argument,
                "column '" + name + "' not found in header",
                0,
                name);
  return static_cast<std::size_t>(it - header.begin());
}

} // namespace

CsvTable read_table(std::istream& in, char delimiter)
{
  CsvTable table;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!trim(line).empty()) {
      table.header = split_line(line, delimiter);
      break;
    }
  }
  if (table.header.empty())
    throw Error(ErrorKind::empty_file, "CSV input is empty");
  // strip a UTF-8 byte order mark
  auto& first = table.header[0];
  if (first.size() >= 3 && first.compare(0, 3, "\xEF\xBB\xBF") == 0)
    first = first.substr(3);

  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty())
      continue;
    auto cells = split_line(line, delimiter);
    const std::size_t data_row = table.rows.size() + 1;
    if (cells.size() != table.header.size())
      throw Error(ErrorKind::unparsable_cell,
                  "line " + std::to_string(line_no) + " has " +
                    std::to_string(cells.size()) + " cells, header has " +
                    std::to_string(table.header.size()),
                  data_row,
                  "");
    table.rows.push_back(std::move(cells));
  }
  if (table.rows.empty())
    throw Error(ErrorKind::empty_file, "CSV input has a header but no rows");
  return table;
}

std::size_t CsvTable::column(const std::string& name) const
{
  return column_of(header, name);
}

double CsvTable::number(std::size_t row, std::size_t col) const
{
  double v = 0.0;
  if (!parse_number(rows[row][col], v))
    throw Error(ErrorKind::unparsable_cell,
                "cannot parse '" + rows[row][col] + "' as a number at row " +
                  std::to_string(row + 1) + ", column '" + header[col] + "'",
                row + 1,
                header[col]);
  return v;
}

bool parse_number(const std::string& text, double& value)
{
  return parse_double(text, value);
}

GroupEncoding encode_groups(const std::vector<std::string>& raw)
{
  // Numeric labels sort numerically, others lexically.
  std::vector<std::string> labels = raw;
  std::sort(labels.begin(), labels.end());
  labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
  const bool numeric = std::all_of(labels.begin(), labels.end(), [](auto& l) {
    double v;
    return parse_double(l, v);
  });
  if (numeric)
    std::sort(labels.begin(), labels.end(), [](auto& a, auto& b) {
      double x = 0, y = 0;
      parse_double(a, x);
      parse_double(b, y);
      return x < y;
    });
  std::unordered_map<std::string, int> code;
  for (std::size_t s = 0; s < labels.size(); ++s)
    code[labels[s]] = static_cast<int>(s);
  GroupEncoding out;
  out.codes.reserve(raw.size());
  for (const auto& r : raw)
    out.codes.push_back(code.at(r));
  out.labels = std::move(labels);
  return out;
}

Dataset read_csv(std::istream& in, const CsvSchema& schema)
{
  if (schema.group_column.empty() || schema.response_column.empty())
    throw Error(ErrorKind::invalid_argument,
                "schema needs a group column and a response column");

  const CsvTable table = read_table(in, schema.delimiter);
  const auto& header = table.header;
  const std::size_t group_col = table.column(schema.group_column);
  const std::size_t response_col = table.column(schema.response_column);
  std::vector<std::size_t> feature_cols;
  std::vector<std::string> feature_names;
  if (schema.feature_columns.empty()) {
    for (std::size_t j = 0; j < header.size(); ++j)
      if (j != group_col && j != response_col) {
        feature_cols.push_back(j);
        feature_names.push_back(header[j]);
      }
  } else {
    for (const auto& name : schema.feature_columns) {
      feature_cols.push_back(table.column(name));
      feature_names.push_back(name);
    }
  }
  if (feature_cols.empty())
    throw Error(ErrorKind::invalid_argument, "schema selects no feature columns");

  std::vector<Observation> rows;
  std::vector<std::string> raw_groups;
  rows.reserve(table.rows.size());
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    Observation obs;
    obs.features.reserve(feature_cols.size());
    for (std::size_t col : feature_cols)
      obs.features.push_back(table.number(r, col));
    obs.response = table.number(r, response_col);
    if (table.rows[r][group_col].empty())
      throw Error(ErrorKind::unparsable_cell,
                  "empty group label at row " + std::to_string(r + 1),
                  r + 1,
                  header[group_col]);
    raw_groups.push_back(table.rows[r][group_col]);
    rows.push_back(std::move(obs));
  }

  auto enc = encode_groups(raw_groups);
  for (std::size_t i = 0; i < rows.size(); ++i)
    rows[i].group = enc.codes[i];

  const int k = static_cast<int>(enc.labels.size());
  if (schema.declared_group_count > 1 && k == 1)
    throw Error(ErrorKind::constant_group,
                "group column '" + schema.group_column +
                  "' is constant but " +
                  std::to_string(schema.declared_group_count) +
                  " groups were declared",
                1,
                schema.group_column);
  if (schema.declared_group_count > 0 && k != schema.declared_group_count)
    throw Error(ErrorKind::invalid_argument,
                "group column '" + schema.group_column + "' has " +
                  std::to_string(k) + " distinct values, " +
                  std::to_string(schema.declared_group_count) + " declared",
                0,
                schema.group_column);

  return Dataset(std::move(rows),
                 k,
                 std::move(feature_names),
                 std::move(enc.labels),
                 schema.response_column);
}

Dataset load_csv(const std::filesystem::path& path, const CsvSchema& schema)
{
  std::ifstream in(path);
  if (!in)
    throw Error(ErrorKind::missing_file,
                "cannot open CSV file '" + path.string() + "'");
  return read_csv(in, schema);
}

void write_csv(const Dataset& data, std::ostream& out, char delimiter)
{
  auto quote = [&](const std::string& s) {
    if (s.find(delimiter) == std::string::npos &&
        s.find('"') == std::string::npos)
      return s;
    std::string q = "\"";
    for (char c : s) {
      if (c == '"')
        q.push_back('"');
      q.push_back(c);
    }
    return q + "\"";
  };

  for (const auto& name : data.feature_names())
    out << quote(name) << delimiter;
  out << "group" << delimiter << quote(data.response_name()) << '\n';

  out << std::setprecision(17);
  for (const auto& obs : data.observations()) {
    for (double v : obs.features)
      out << v << delimiter;
    out << quote(data.group_labels()[static_cast<std::size_t>(obs.group)])
        << delimiter << obs.response << '\n';
  }
}

void write_csv(const Dataset& data,
               const std::filesystem::path& path,
               char delimiter)
{
  std::ofstream out(path);
  if (!out)
    throw Error(ErrorKind::runtime, "cannot write '" + path.string() + "'");
  write_csv(data, out, delimiter);
}

// ---------------------------------------------------------------------------
// Splits

namespace {

std::size_t calibration_size(std::size_t n, double fraction)
{
  if (!(fraction > 0.0 && fraction < 1.0))
    throw Error(ErrorKind::invalid_argument,
                "calibration fraction must lie in (0, 1)");
  return static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
}

} // namespace

SplitIndices split(std::size_t n, double calibration_fraction, std::uint64_t seed)
{
  if (n < 2)
    throw Error(ErrorKind::invalid_argument, "split needs at least 2 rows");
  const std::size_t n_cal = calibration_size(n, calibration_fraction);
  if (n_cal == 0 || n_cal >= n)
    throw Error(ErrorKind::invalid_argument,
                "calibration fraction " + std::to_string(calibration_fraction) +
                  " leaves an empty side for n = " + std::to_string(n));

  IndexList perm(n);
  std::iota(perm.begin(), perm.end(), Index{ 0 });
  Rng rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);

  SplitIndices out;
  out.calibration.assign(perm.begin(), perm.begin() + static_cast<long>(n_cal));
  out.proper_training.assign(perm.begin() + static_cast<long>(n_cal), perm.end());
  std::sort(out.calibration.begin(), out.calibration.end());
  std::sort(out.proper_training.begin(), out.proper_training.end());
  return out;
}

SplitIndices split(const Dataset& data,
                   double calibration_fraction,
                   std::uint64_t seed,
                   bool stratified)
{
  if (!stratified)
    return split(data.size(), calibration_fraction, seed);

  // Stratified: split each group on its own with the same fraction.
  std::vector<IndexList> by_group(static_cast<std::size_t>(data.group_count()));
  for (Index i = 0; i < data.size(); ++i)
    by_group[static_cast<std::size_t>(data[i].group)].push_back(i);

  SplitIndices out;
  Rng rng(seed);
  for (auto& members : by_group) {
    if (members.empty())
      continue;
    const std::size_t n_cal = calibration_size(members.size(), calibration_fraction);
    std::shuffle(members.begin(), members.end(), rng);
    out.calibration.insert(out.calibration.end(),
                           members.begin(),
                           members.begin() + static_cast<long>(n_cal));
    out.proper_training.insert(out.proper_training.end(),
                               members.begin() + static_cast<long>(n_cal),
                               members.end());
  }
  if (out.calibration.empty() || out.proper_training.empty())
    throw Error(ErrorKind::invalid_argument,
                "stratified split leaves an empty side");
  std::sort(out.calibration.begin(), out.calibration.end());
  std::sort(out.proper_training.begin(), out.proper_training.end());
  return out;
}

// ---------------------------------------------------------------------------
// Group partitions

std::size_t GroupPartition::total() const noexcept
{
  std::size_t n = 0;
  for (const auto& g : per_group_indices)
    n += g.size();
  return n;
}

GroupPartition partition_by_group(std::span<const int> groups,
                                  int group_count,
                                  std::size_t min_group_size)
{
  if (group_count < 1)
    throw Error(ErrorKind::invalid_argument, "group count must be >= 1");
  GroupPartition out;
  out.per_group_indices.resize(static_cast<std::size_t>(group_count));
  for (Index i = 0; i < groups.size(); ++i) {
    const int s = groups[i];
    if (s < 0 || s >= group_count)
      throw Error(ErrorKind::invalid_argument,
                  "unknown group label " + std::to_string(s));
    out.per_group_indices[static_cast<std::size_t>(s)].push_back(i);
  }
  const double total = static_cast<double>(groups.size());
  for (int s = 0; s < group_count; ++s) {
    const auto count = out.per_group_indices[static_cast<std::size_t>(s)].size();
    if (count == 0)
      throw Error(ErrorKind::empty_group, "empty group " + std::to_string(s));
    if (count < min_group_size)
      warn("group " + std::to_string(s) + " has only " + std::to_string(count) +
           " members (floor " + std::to_string(min_group_size) + ")");
    out.weights.push_back(static_cast<double>(count) / total);
  }
  return out;
}

GroupPartition partition_by_group(const Dataset& data,
                                  std::span<const Index> indices,
                                  std::size_t min_group_size)
{
  for (Index i : indices)
    if (i >= data.size())
      throw Error(ErrorKind::invalid_argument,
                  "index " + std::to_string(i) + " out of range");
  auto labels = data.groups(indices);
  GroupPartition local = partition_by_group(labels, data.group_count(), min_group_size);
  // Translate positions back to dataset row indices.
  for (auto& members : local.per_group_indices)
    for (auto& pos : members)
      pos = indices[pos];
  return local;
}

// ---------------------------------------------------------------------------
// Synthetic data

void SyntheticConfig::validate() const
{
  const std::size_t k = proportions.size();
  if (k < 2)
    throw Error(ErrorKind::invalid_argument, "synthetic scenario needs K >= 2 groups");
  if (shifts.size() != k || scales.size() != k)
    throw Error(ErrorKind::invalid_argument,
                "proportions, shifts and scales must have the same length");
  double sum = 0.0;
  for (double p : proportions) {
    if (!(p > 0.0))
      throw Error(ErrorKind::invalid_argument, "group proportions must be positive");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-9)
    throw Error(ErrorKind::invalid_argument, "group proportions must sum to 1");
  for (double s : scales)
    if (!(s > 0.0) || !std::isfinite(s))
      throw Error(ErrorKind::invalid_argument, "group scales must be positive");
  for (double d : shifts)
    if (!std::isfinite(d))
      throw Error(ErrorKind::invalid_argument, "group shifts must be finite");
  if (!coefficients.empty() && coefficients.size() != feature_count)
    throw Error(ErrorKind::invalid_argument,
                "coefficient count must equal the feature count");
  if (heteroscedastic_slope < 0.0 || !std::isfinite(heteroscedastic_slope))
    throw Error(ErrorKind::invalid_argument, "heteroscedastic slope must be >= 0");
}

Dataset generate_synthetic(const SyntheticConfig& config,
                           std::size_t n,
                           std::uint64_t seed)
{
  config.validate();
  if (n == 0)
    throw Error(ErrorKind::invalid_argument, "synthetic sample size must be > 0");

  const std::size_t p = config.feature_count;
  std::vector<double> beta = config.coefficients;
  if (beta.empty())
    beta.assign(p, p > 0 ? 1.0 / std::sqrt(static_cast<double>(p)) : 0.0);

  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::discrete_distribution<int> group_dist(config.proportions.begin(),
                                             config.proportions.end());
  const double lognormal_mean = std::exp(0.5);

  std::vector<Observation> rows(n);
  for (auto& obs : rows) {
    obs.group = group_dist(rng);
    obs.features.resize(p);
    double f = 0.0;
    for (std::size_t j = 0; j < p; ++j) {
      obs.features[j] = normal(rng);
      f += beta[j] * obs.features[j];
    }
    double eps = normal(rng);
    if (config.noise == NoiseFamily::lognormal)
      eps = std::exp(eps) - lognormal_mean;
    const auto s = static_cast<std::size_t>(obs.group);
    double scale = config.scales[s];
    if (p > 0)
      scale *= 1.0 + config.heteroscedastic_slope * std::abs(obs.features[0]);
    obs.response = f + config.shifts[s] + scale * eps;
  }
  return Dataset(std::move(rows), static_cast<int>(config.proportions.size()));
}

} // namespace cfqp
