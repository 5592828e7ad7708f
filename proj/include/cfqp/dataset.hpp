#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace cfqp {

using Index = std::size_t;
using IndexList = std::vector<Index>;

struct Observation
{
  std::vector<double> features;
  int group = 0;
  double response = 0.0;
};

//! Immutable (X, S, Y) sample with dense group labels 0..K-1.
class Dataset
{
public:
  Dataset(std::vector<Observation> observations,
          int group_count,
          std::vector<std::string> feature_names = {},
          std::vector<std::string> group_labels = {},
          std::string response_name = "y");

  std::size_t size() const noexcept { return observations_.size(); }
  std::size_t feature_count() const noexcept { return feature_count_; }
  int group_count() const noexcept { return group_count_; }

  const Observation& operator[](Index i) const { return observations_[i]; }
  std::span<const Observation> observations() const noexcept
  {
    return observations_;
  }

  const std::vector<std::string>& feature_names() const noexcept
  {
    return feature_names_;
  }
  //! Original label for each dense group id (sidecar of the re-encoding).
  const std::vector<std::string>& group_labels() const noexcept
  {
    return group_labels_;
  }
  const std::string& response_name() const noexcept { return response_name_; }

  std::vector<double> responses(std::span<const Index> indices) const;
  std::vector<int> groups(std::span<const Index> indices) const;
  std::vector<double> responses() const;
  std::vector<int> groups() const;

  //! Rows at `indices`, same schema.
  Dataset subset(std::span<const Index> indices) const;

private:
  std::vector<Observation> observations_;
  int group_count_;
  std::size_t feature_count_;
  std::vector<std::string> feature_names_;
  std::vector<std::string> group_labels_;
  std::string response_name_;
};

// ---------------------------------------------------------------------------
// CSV

struct CsvSchema
{
  std::string group_column;
  std::string response_column;
  //! Empty selects every remaining column in file order.
  std::vector<std::string> feature_columns;
  char delimiter = ',';
  //! When set, a file with fewer distinct groups is rejected.
  int declared_group_count = 0;
};

//! Header plus raw cells. Blank lines are skipped; ragged rows are rejected.
struct CsvTable
{
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  //! Throws if the header lacks `name`.
  std::size_t column(const std::string& name) const;
  //! Cell as a finite number; throws unparsable_cell naming row and column.
  double number(std::size_t row, std::size_t col) const;
};

CsvTable read_table(std::istream& in, char delimiter = ',');
bool parse_number(const std::string& text, double& value);

//! Dense codes 0..K-1 for raw group labels; `labels[code]` is the original.
struct GroupEncoding
{
  std::vector<int> codes;
  std::vector<std::string> labels;
};

GroupEncoding encode_groups(const std::vector<std::string>& raw);

Dataset load_csv(const std::filesystem::path& path, const CsvSchema& schema);
Dataset read_csv(std::istream& in, const CsvSchema& schema);

//! Writes features, group (original label) and response with round-trip
//! precision. Column names follow the dataset's names.
void write_csv(const Dataset& data, std::ostream& out, char delimiter = ',');
void write_csv(const Dataset& data,
               const std::filesystem::path& path,
               char delimiter = ',');

// ---------------------------------------------------------------------------
// Splits and group partitions

struct SplitIndices
{
  IndexList proper_training;
  IndexList calibration;
};

//! Uniform random split with |calibration| = round(fraction * n). With
//! `stratified`, the rounding is applied within each group instead.
SplitIndices split(const Dataset& data,
                   double calibration_fraction,
                   std::uint64_t seed,
                   bool stratified = false);
SplitIndices split(std::size_t n, double calibration_fraction, std::uint64_t seed);

struct GroupPartition
{
  std::vector<IndexList> per_group_indices;
  std::vector<double> weights;

  int group_count() const noexcept
  {
    return static_cast<int>(per_group_indices.size());
  }
  std::size_t total() const noexcept;
};

//! Groups `indices` by label, preserving order. Throws ErrorKind::empty_group
//! if some group of the dataset has no member among `indices`. Groups smaller
//! than `min_group_size` produce a warning.
GroupPartition partition_by_group(const Dataset& data,
                                  std::span<const Index> indices,
                                  std::size_t min_group_size = 10);
GroupPartition partition_by_group(std::span<const int> groups,
                                  int group_count,
                                  std::size_t min_group_size = 10);

// ---------------------------------------------------------------------------
// Synthetic scenarios

enum class NoiseFamily
{
  gaussian,
  lognormal
};

//! Y = f(X) + shift[s] + scale[s] * (1 + slope * |X_0|) * eps, X ~ N(0, I_p),
//! f(X) = coefficients . X. Lognormal noise is centred to mean zero.
struct SyntheticConfig
{
  std::vector<double> proportions{ 0.5, 0.5 };
  std::vector<double> shifts{ 0.0, 0.0 };
  std::vector<double> scales{ 1.0, 1.0 };
  std::size_t feature_count = 2;
  //! Empty means 1/sqrt(p) for every feature, so Var f(X) = 1.
  std::vector<double> coefficients;
  NoiseFamily noise = NoiseFamily::gaussian;
  double heteroscedastic_slope = 0.0;

  void validate() const;
};

Dataset generate_synthetic(const SyntheticConfig& config,
                           std::size_t n,
                           std::uint64_t seed);

} // namespace cfqp
