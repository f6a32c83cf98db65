#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace stratamatch {

enum class ColumnKind { numeric, binary, categorical };

std::string_view to_string(ColumnKind kind);

struct ColumnSchema {
  std::string name;
  ColumnKind kind = ColumnKind::numeric;
  // Categorical only. Ordered; the first entry is the reference level.
  std::vector<std::string> levels;

  friend bool operator==(const ColumnSchema&, const ColumnSchema&) = default;
};

// A typed, immutable value vector. Numeric and binary columns store doubles
// (binary values are exactly 0.0 or 1.0); categorical columns store indices
// into schema().levels.
class Column {
 public:
  static Column numeric(std::string name, std::vector<double> values);
  static Column binary(std::string name, std::vector<double> values);
  static Column categorical(std::string name, std::vector<std::string> levels,
                            std::vector<int> codes);
  // Builds a categorical column, collecting levels in first-appearance order.
  static Column categorical_from_text(std::string name,
                                      std::span<const std::string> values);

  [[nodiscard]] const ColumnSchema& schema() const noexcept { return schema_; }
  [[nodiscard]] const std::string& name() const noexcept { return schema_.name; }
  [[nodiscard]] ColumnKind kind() const noexcept { return schema_.kind; }
  [[nodiscard]] std::size_t size() const noexcept;

  // Numeric/binary value. Throws TypeMismatch on categorical columns.
  [[nodiscard]] double value(std::size_t row) const;
  [[nodiscard]] const std::vector<double>& values() const;
  // Categorical level index. Throws TypeMismatch on non-categorical columns.
  [[nodiscard]] int code(std::size_t row) const;
  [[nodiscard]] const std::vector<int>& codes() const;
  [[nodiscard]] const std::string& level(std::size_t row) const;

  // CSV cell text (17 significant digits for numerics).
  [[nodiscard]] std::string text(std::size_t row) const;

  [[nodiscard]] Column subset(std::span<const std::size_t> rows) const;
  [[nodiscard]] Column renamed(std::string name) const;

  friend bool operator==(const Column&, const Column&) = default;

 private:
  Column() = default;

  ColumnSchema schema_;
  std::vector<double> values_;
  std::vector<int> codes_;
};

// Immutable table. Each row carries a stable id that survives subsetting so
// that split pieces keep referring to rows of the original input.
class DataFrame {
 public:
  DataFrame() = default;
  // Row ids default to 0..n-1.
  explicit DataFrame(std::vector<Column> columns,
                     std::vector<std::size_t> row_ids = {});

  [[nodiscard]] std::size_t n_rows() const noexcept { return row_ids_.size(); }
  [[nodiscard]] std::size_t n_cols() const noexcept { return columns_.size(); }
  [[nodiscard]] const std::vector<Column>& columns() const noexcept { return columns_; }
  [[nodiscard]] const std::vector<std::size_t>& row_ids() const noexcept { return row_ids_; }

  [[nodiscard]] bool has_column(std::string_view name) const noexcept;
  // Throws UnknownColumn.
  [[nodiscard]] const Column& column(std::string_view name) const;
  [[nodiscard]] std::vector<std::string> column_names() const;

  [[nodiscard]] DataFrame subset(std::span<const std::size_t> rows) const;
  // Appends a column, or replaces one with the same name in place.
  [[nodiscard]] DataFrame with_column(Column column) const;
  [[nodiscard]] DataFrame without_column(std::string_view name) const;

  friend bool operator==(const DataFrame&, const DataFrame&) = default;

 private:
  std::vector<Column> columns_;
  std::vector<std::size_t> row_ids_;
};

// Name of the optional leading CSV column carrying row identity.
inline constexpr std::string_view kRowIdColumn = "row_id";

// Reads an RFC-4180 style CSV with a header row. Kinds not fixed by `schema`
// are inferred: all values in {0,1} -> binary, all numeric -> numeric,
// otherwise categorical with levels in first-appearance order. A leading
// "row_id" column is taken as row identity rather than data.
DataFrame load_csv(const std::filesystem::path& path,
                   std::span<const ColumnSchema> schema = {});
DataFrame read_csv(std::istream& in, std::span<const ColumnSchema> schema = {});

// Writes "row_id" followed by every column. Numerics use 17 significant digits.
void write_csv(const DataFrame& df, const std::filesystem::path& path);
void write_csv(const DataFrame& df, std::ostream& out);

// Splits one CSV record list out of raw text; exposed for the CSV writers of
// other modules and for tests.
std::vector<std::vector<std::string>> parse_csv_records(std::string_view text);
std::string csv_escape(std::string_view field);

// Shortest-roundtrip-safe decimal rendering with `significant` digits.
std::string format_number(double value, int significant = 17);

struct Formula {
  std::optional<std::string> lhs;
  std::vector<std::string> rhs_terms;

  [[nodiscard]] std::string to_text() const;

  friend bool operator==(const Formula&, const Formula&) = default;
};

// Grammar: IDENT? "~" IDENT ("+" IDENT)*  with optional whitespace.
// IDENT is [A-Za-z_.][A-Za-z0-9_.]*.
Formula parse_formula(std::string_view text);

// How one formula term expands into design-matrix columns. For categorical
// terms `levels` lists the levels observed in the rows the encoding was built
// from, in schema order; the first is the reference level.
struct TermEncoding {
  std::string name;
  ColumnKind kind = ColumnKind::numeric;
  std::vector<std::string> levels;

  friend bool operator==(const TermEncoding&, const TermEncoding&) = default;
};

std::vector<TermEncoding> encode_terms(const DataFrame& df,
                                       std::span<const std::string> terms);

struct DesignMatrix {
  Eigen::MatrixXd values;
  std::vector<std::string> column_labels;
  bool intercept = false;
};

// Numeric and binary terms map to one column each; a categorical term with L
// levels contributes L-1 indicators against its first level.
DesignMatrix design_matrix(const DataFrame& df, std::span<const std::string> terms,
                           bool intercept);
// Same, against a fixed encoding. Categorical values are matched to the
// catalog by level text; a value outside the catalog raises UnseenLevel.
DesignMatrix design_matrix(const DataFrame& df, std::span<const TermEncoding> encoding,
                           bool intercept);

std::vector<std::string> design_labels(std::span<const TermEncoding> encoding,
                                       bool intercept);

}  // namespace stratamatch
