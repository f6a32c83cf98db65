#include "stratamatch/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <iterator>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "stratamatch/error.hpp"

namespace stratamatch {

std::string_view to_string(ColumnKind kind) {
  switch (kind) {
    case ColumnKind::numeric: return "numeric";
    case ColumnKind::binary: return "binary";
    case ColumnKind::categorical: return "categorical";
  }
  return "unknown";
}

// ---------------------------------------------------------------------------
// Column

Column Column::numeric(std::string name, std::vector<double> values) {
  Column c;
  c.schema_ = {std::move(name), ColumnKind::numeric, {}};
  c.values_ = std::move(values);
  return c;
}

Column Column::binary(std::string name, std::vector<double> values) {
  for (double v : values) {
    if (v != 0.0 && v != 1.0) {
      throw Error(ErrorCode::TypeMismatch,
                  "binary column " + name + " holds value " + format_number(v));
    }
  }
  Column c;
  c.schema_ = {std::move(name), ColumnKind::binary, {}};
  c.values_ = std::move(values);
  return c;
}

Column Column::categorical(std::string name, std::vector<std::string> levels,
                           std::vector<int> codes) {
  std::unordered_set<std::string> seen;
  for (const auto& level : levels) {
    if (!seen.insert(level).second) {
      throw Error(ErrorCode::TypeMismatch,
                  "categorical column " + name + " repeats level " + level);
    }
  }
  for (int code : codes) {
    if (code < 0 || static_cast<std::size_t>(code) >= levels.size()) {
      throw Error(ErrorCode::TypeMismatch,
                  "categorical column " + name + " has out-of-range code");
    }
  }
  Column c;
  c.schema_ = {std::move(name), ColumnKind::categorical, std::move(levels)};
  c.codes_ = std::move(codes);
  return c;
}

Column Column::categorical_from_text(std::string name,
                                     std::span<const std::string> values) {
  std::vector<std::string> levels;
  std::unordered_map<std::string, int> index;
  std::vector<int> codes;
  codes.reserve(values.size());
  for (const auto& v : values) {
    auto [it, inserted] = index.try_emplace(v, static_cast<int>(levels.size()));
    if (inserted) levels.push_back(v);
    codes.push_back(it->second);
  }
  return categorical(std::move(name), std::move(levels), std::move(codes));
}

std::size_t Column::size() const noexcept {
  return kind() == ColumnKind::categorical ? codes_.size() : values_.size();
}

double Column::value(std::size_t row) const {
  return values().at(row);
}

const std::vector<double>& Column::values() const {
  if (kind() == ColumnKind::categorical) {
    throw Error(ErrorCode::TypeMismatch, "column " + name() + " is categorical");
  }
  return values_;
}

int Column::code(std::size_t row) const {
  return codes().at(row);
}

const std::vector<int>& Column::codes() const {
  if (kind() != ColumnKind::categorical) {
    throw Error(ErrorCode::TypeMismatch, "column " + name() + " is not categorical");
  }
  return codes_;
}

const std::string& Column::level(std::size_t row) const {
  return schema_.levels.at(static_cast<std::size_t>(code(row)));
}

std::string Column::text(std::size_t row) const {
  if (kind() == ColumnKind::categorical) return level(row);
  return format_number(values_.at(row));
}

Column Column::subset(std::span<const std::size_t> rows) const {
  Column c;
  c.schema_ = schema_;
  if (kind() == ColumnKind::categorical) {
    c.codes_.reserve(rows.size());
    for (auto r : rows) c.codes_.push_back(codes_.at(r));
  } else {
    c.values_.reserve(rows.size());
    for (auto r : rows) c.values_.push_back(values_.at(r));
  }
  return c;
}

Column Column::renamed(std::string name) const {
  Column c = *this;
  c.schema_.name = std::move(name);
  return c;
}

// ---------------------------------------------------------------------------
// DataFrame

DataFrame::DataFrame(std::vector<Column> columns, std::vector<std::size_t> row_ids)
    : columns_(std::move(columns)), row_ids_(std::move(row_ids)) {
  std::size_t n = columns_.empty() ? row_ids_.size() : columns_.front().size();
  std::unordered_set<std::string> names;
  for (const auto& c : columns_) {
    if (c.size() != n) {
      throw Error(ErrorCode::InvalidArgument,
                  "column " + c.name() + " has length " + std::to_string(c.size()) +
                      ", expected " + std::to_string(n));
    }
    if (!names.insert(c.name()).second) {
      throw Error(ErrorCode::InvalidArgument, "duplicate column name " + c.name());
    }
  }
  if (row_ids_.empty() && n > 0) {
    row_ids_.resize(n);
    for (std::size_t i = 0; i < n; ++i) row_ids_[i] = i;
  } else if (row_ids_.size() != n) {
    throw Error(ErrorCode::InvalidArgument, "row id vector length mismatch");
  }
}

bool DataFrame::has_column(std::string_view name) const noexcept {
  return std::any_of(columns_.begin(), columns_.end(),
                     [&](const Column& c) { return c.name() == name; });
}

const Column& DataFrame::column(std::string_view name) const {
  for (const auto& c : columns_) {
    if (c.name() == name) return c;
  }
  throw Error(ErrorCode::UnknownColumn, std::string(name));
}

std::vector<std::string> DataFrame::column_names() const {
  std::vector<std::string> names;
  names.reserve(columns_.size());
  for (const auto& c : columns_) names.push_back(c.name());
  return names;
}

DataFrame DataFrame::subset(std::span<const std::size_t> rows) const {
  std::vector<Column> cols;
  cols.reserve(columns_.size());
  for (const auto& c : columns_) cols.push_back(c.subset(rows));
  std::vector<std::size_t> ids;
  ids.reserve(rows.size());
  for (auto r : rows) ids.push_back(row_ids_.at(r));
  DataFrame out;
  out.columns_ = std::move(cols);
  out.row_ids_ = std::move(ids);
  return out;
}

DataFrame DataFrame::with_column(Column column) const {
  if (column.size() != n_rows()) {
    throw Error(ErrorCode::InvalidArgument,
                "column " + column.name() + " length does not match frame");
  }
  DataFrame out = *this;
  for (auto& c : out.columns_) {
    if (c.name() == column.name()) {
      c = std::move(column);
      return out;
    }
  }
  out.columns_.push_back(std::move(column));
  return out;
}

DataFrame DataFrame::without_column(std::string_view name) const {
  DataFrame out = *this;
  std::erase_if(out.columns_, [&](const Column& c) { return c.name() == name; });
  return out;
}

// ---------------------------------------------------------------------------
// CSV

std::string format_number(double value, int significant) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), value, std::chars_format::general,
                           significant);
  return std::string(buf, res.ptr);
}

std::vector<std::vector<std::string>> parse_csv_records(std::string_view text) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool in_quotes = false;
  bool field_started = false;
  bool record_open = false;

  auto end_field = [&] {
    record.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_record = [&] {
    end_field();
    records.push_back(std::move(record));
    record.clear();
    record_open = false;
  };

  for (std::size_t i = 0; i < text.size(); ++i) {
    char ch = text[i];
    if (in_quotes) {
      if (ch == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        field.push_back(ch);
      }
      continue;
    }
    switch (ch) {
      case '"':
        if (field_started) {
          throw Error(ErrorCode::SyntaxError, "stray quote inside unquoted CSV field");
        }
        in_quotes = true;
        field_started = true;
        record_open = true;
        break;
      case ',':
        end_field();
        record_open = true;
        break;
      case '\r':
        break;
      case '\n':
        if (record_open || !record.empty()) end_record();
        break;
      default:
        field.push_back(ch);
        field_started = true;
        record_open = true;
        break;
    }
  }
  if (in_quotes) throw Error(ErrorCode::SyntaxError, "unterminated quoted CSV field");
  if (record_open || !record.empty()) end_record();
  return records;
}

std::string csv_escape(std::string_view field) {
  if (field.find_first_of(",\"\r\n") == std::string_view::npos) {
    return std::string(field);
  }
  std::string out = "\"";
  for (char ch : field) {
    if (ch == '"') out.push_back('"');
    out.push_back(ch);
  }
  out.push_back('"');
  return out;
}

namespace {

std::optional<double> parse_double(std::string_view s) {
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  while (!s.empty() && s.back() == ' ') s.remove_suffix(1);
  if (s.empty()) return std::nullopt;
  if (s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

bool is_missing(std::string_view s) {
  return s.empty() || s == "NA";
}

const ColumnSchema* find_schema(std::span<const ColumnSchema> schema,
                                std::string_view name) {
  for (const auto& s : schema) {
    if (s.name == name) return &s;
  }
  return nullptr;
}

Column build_column(const std::string& name, const std::vector<std::string>& cells,
                    const ColumnSchema* declared) {
  for (std::size_t r = 0; r < cells.size(); ++r) {
    if (is_missing(cells[r])) {
      throw Error(ErrorCode::TypeMismatch,
                  "missing value in column " + name + " at data row " + std::to_string(r + 1));
    }
  }

  std::vector<double> numbers;
  bool all_numeric = true;
  numbers.reserve(cells.size());
  for (const auto& cell : cells) {
    auto v = parse_double(cell);
    if (!v) {
      all_numeric = false;
      break;
    }
    numbers.push_back(*v);
  }

  ColumnKind kind;
  if (declared) {
    kind = declared->kind;
  } else if (!all_numeric) {
    kind = ColumnKind::categorical;
  } else {
    bool all01 = std::all_of(numbers.begin(), numbers.end(),
                             [](double v) { return v == 0.0 || v == 1.0; });
    kind = (all01 && !numbers.empty()) ? ColumnKind::binary : ColumnKind::numeric;
  }

  switch (kind) {
    case ColumnKind::numeric:
    case ColumnKind::binary:
      if (!all_numeric) {
        throw Error(ErrorCode::TypeMismatch,
                    "column " + name + " declared " + std::string(to_string(kind)) +
                        " holds non-numeric values");
      }
      if (kind == ColumnKind::binary) return Column::binary(name, std::move(numbers));
      return Column::numeric(name, std::move(numbers));
    case ColumnKind::categorical:
      if (declared && !declared->levels.empty()) {
        std::unordered_map<std::string, int> index;
        for (std::size_t i = 0; i < declared->levels.size(); ++i) {
          index.emplace(declared->levels[i], static_cast<int>(i));
        }
        std::vector<int> codes;
        codes.reserve(cells.size());
        for (const auto& cell : cells) {
          auto it = index.find(cell);
          if (it == index.end()) {
            throw Error(ErrorCode::TypeMismatch,
                        "column " + name + " value " + cell + " is not a declared level");
          }
          codes.push_back(it->second);
        }
        return Column::categorical(name, declared->levels, std::move(codes));
      }
      return Column::categorical_from_text(name, cells);
  }
  throw Error(ErrorCode::InvalidArgument, "unreachable column kind");
}

}  // namespace

DataFrame read_csv(std::istream& in, std::span<const ColumnSchema> schema) {
  std::string text{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  auto records = parse_csv_records(text);
  if (records.empty()) throw Error(ErrorCode::EmptyFile, "no header row");

  const auto& header = records.front();
  const std::size_t width = header.size();
  for (std::size_t r = 1; r < records.size(); ++r) {
    if (records[r].size() != width) {
      throw Error(ErrorCode::RaggedRow,
                  "line " + std::to_string(r + 1) + " has " + std::to_string(records[r].size()) +
                      " fields, header has " + std::to_string(width));
    }
  }
  for (const auto& s : schema) {
    if (std::find(header.begin(), header.end(), s.name) == header.end()) {
      throw Error(ErrorCode::UnknownColumn, s.name);
    }
  }

  const std::size_t n = records.size() - 1;
  const bool has_ids = width > 0 && header.front() == kRowIdColumn;
  std::vector<std::size_t> row_ids;
  if (has_ids) {
    row_ids.reserve(n);
    for (std::size_t r = 1; r <= n; ++r) {
      const auto& cell = records[r].front();
      std::size_t id = 0;
      auto res = std::from_chars(cell.data(), cell.data() + cell.size(), id);
      if (res.ec != std::errc() || res.ptr != cell.data() + cell.size()) {
        throw Error(ErrorCode::TypeMismatch, "row_id " + cell + " is not an integer");
      }
      row_ids.push_back(id);
    }
  }

  std::vector<Column> columns;
  for (std::size_t c = has_ids ? 1 : 0; c < width; ++c) {
    std::vector<std::string> cells;
    cells.reserve(n);
    for (std::size_t r = 1; r <= n; ++r) cells.push_back(records[r][c]);
    columns.push_back(build_column(header[c], cells, find_schema(schema, header[c])));
  }
  if (columns.empty()) {
    return DataFrame({}, std::move(row_ids));
  }
  return DataFrame(std::move(columns), std::move(row_ids));
}

DataFrame load_csv(const std::filesystem::path& path, std::span<const ColumnSchema> schema) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  return read_csv(in, schema);
}

void write_csv(const DataFrame& df, std::ostream& out) {
  out << kRowIdColumn;
  for (const auto& c : df.columns()) out << ',' << csv_escape(c.name());
  out << '\n';
  for (std::size_t r = 0; r < df.n_rows(); ++r) {
    out << df.row_ids()[r];
    for (const auto& c : df.columns()) out << ',' << csv_escape(c.text(r));
    out << '\n';
  }
}

void write_csv(const DataFrame& df, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  write_csv(df, out);
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

// ---------------------------------------------------------------------------
// Formula

std::string Formula::to_text() const {
  std::string out;
  if (lhs) out = *lhs + " ";
  out += "~ ";
  for (std::size_t i = 0; i < rhs_terms.size(); ++i) {
    if (i) out += " + ";
    out += rhs_terms[i];
  }
  return out;
}

namespace {

class FormulaLexer {
 public:
  explicit FormulaLexer(std::string_view text) : text_(text) {}

  void skip_space() {
    while (pos_ < text_.size() && (text_[pos_] == ' ' || text_[pos_] == '\t' ||
                                   text_[pos_] == '\n' || text_[pos_] == '\r')) {
      ++pos_;
    }
  }
  bool at_end() {
    skip_space();
    return pos_ >= text_.size();
  }
  bool accept(char ch) {
    skip_space();
    if (pos_ < text_.size() && text_[pos_] == ch) {
      ++pos_;
      return true;
    }
    return false;
  }
  std::optional<std::string> ident() {
    skip_space();
    auto start_ok = [](char c) {
      return std::isalpha(static_cast<unsigned char>(c)) || c == '_' || c == '.';
    };
    auto body_ok = [&](char c) {
      return start_ok(c) || std::isdigit(static_cast<unsigned char>(c));
    };
    if (pos_ >= text_.size() || !start_ok(text_[pos_])) return std::nullopt;
    std::size_t start = pos_;
    while (pos_ < text_.size() && body_ok(text_[pos_])) ++pos_;
    return std::string(text_.substr(start, pos_ - start));
  }
  [[nodiscard]] std::size_t pos() const { return pos_; }

 private:
  std::string_view text_;
  std::size_t pos_ = 0;
};

}  // namespace

Formula parse_formula(std::string_view text) {
  FormulaLexer lex(text);
  Formula f;
  auto fail = [&](const std::string& what) {
    throw Error(ErrorCode::SyntaxError,
                what + " at offset " + std::to_string(lex.pos()) + " in \"" +
                    std::string(text) + "\"");
  };
  f.lhs = lex.ident();
  if (!lex.accept('~')) fail("expected '~'");
  do {
    auto term = lex.ident();
    if (!term) fail("expected a column name");
    if (std::find(f.rhs_terms.begin(), f.rhs_terms.end(), *term) != f.rhs_terms.end()) {
      throw Error(ErrorCode::DuplicateTerm, *term);
    }
    f.rhs_terms.push_back(std::move(*term));
  } while (lex.accept('+'));
  if (!lex.at_end()) fail("unexpected trailing text");
  return f;
}

// ---------------------------------------------------------------------------
// Design matrices

std::vector<TermEncoding> encode_terms(const DataFrame& df,
                                       std::span<const std::string> terms) {
  std::vector<TermEncoding> encoding;
  encoding.reserve(terms.size());
  for (const auto& t : terms) {
    const Column& col = df.column(t);
    const auto& schema = col.schema();
    if (schema.kind != ColumnKind::categorical) {
      encoding.push_back({schema.name, schema.kind, {}});
      continue;
    }
    // Only levels present in these rows, in schema order.
    std::vector<bool> seen(schema.levels.size(), false);
    for (int code : col.codes()) seen[static_cast<std::size_t>(code)] = true;
    std::vector<std::string> levels;
    for (std::size_t l = 0; l < seen.size(); ++l) {
      if (seen[l]) levels.push_back(schema.levels[l]);
    }
    encoding.push_back({schema.name, schema.kind, std::move(levels)});
  }
  return encoding;
}

std::vector<std::string> design_labels(std::span<const TermEncoding> encoding,
                                       bool intercept) {
  std::vector<std::string> labels;
  if (intercept) labels.emplace_back("(Intercept)");
  for (const auto& term : encoding) {
    if (term.kind == ColumnKind::categorical) {
      for (std::size_t l = 1; l < term.levels.size(); ++l) {
        labels.push_back(term.name + "=" + term.levels[l]);
      }
    } else {
      labels.push_back(term.name);
    }
  }
  return labels;
}

DesignMatrix design_matrix(const DataFrame& df, std::span<const std::string> terms,
                           bool intercept) {
  auto encoding = encode_terms(df, terms);
  return design_matrix(df, encoding, intercept);
}

DesignMatrix design_matrix(const DataFrame& df, std::span<const TermEncoding> encoding,
                           bool intercept) {
  DesignMatrix dm;
  dm.intercept = intercept;
  dm.column_labels = design_labels(encoding, intercept);
  const auto n = static_cast<Eigen::Index>(df.n_rows());
  dm.values = Eigen::MatrixXd::Zero(n, static_cast<Eigen::Index>(dm.column_labels.size()));

  Eigen::Index col = 0;
  if (intercept) dm.values.col(col++).setOnes();
  for (const auto& term : encoding) {
    const Column& source = df.column(term.name);
    if (term.kind != ColumnKind::categorical) {
      if (source.kind() == ColumnKind::categorical) {
        throw Error(ErrorCode::TypeMismatch,
                    "term " + term.name + " was encoded numeric but the column is categorical");
      }
      const auto& v = source.values();
      for (Eigen::Index r = 0; r < n; ++r) dm.values(r, col) = v[static_cast<std::size_t>(r)];
      ++col;
      continue;
    }
    // Categorical: map each cell's text onto the catalog.
    std::unordered_map<std::string, int> index;
    for (std::size_t l = 0; l < term.levels.size(); ++l) {
      index.emplace(term.levels[l], static_cast<int>(l));
    }
    std::vector<int> local_to_catalog;
    if (source.kind() == ColumnKind::categorical) {
      for (const auto& level : source.schema().levels) {
        auto it = index.find(level);
        local_to_catalog.push_back(it == index.end() ? -1 : it->second);
      }
    }
    for (Eigen::Index r = 0; r < n; ++r) {
      auto row = static_cast<std::size_t>(r);
      int level = -1;
      if (source.kind() == ColumnKind::categorical) {
        level = local_to_catalog[static_cast<std::size_t>(source.code(row))];
      } else {
        auto it = index.find(source.text(row));
        if (it != index.end()) level = it->second;
      }
      if (level < 0) {
        throw Error(ErrorCode::UnseenLevel, term.name + "=" + source.text(row));
      }
      if (level > 0) dm.values(r, col + level - 1) = 1.0;
    }
    if (!term.levels.empty()) col += static_cast<Eigen::Index>(term.levels.size()) - 1;
  }
  return dm;
}

}  // namespace stratamatch
