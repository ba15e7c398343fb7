#ifndef SIFOTL_TABLE_HPP
#define SIFOTL_TABLE_HPP

#include <sifotl/detail/csv.hpp>
#include <sifotl/detail/log.hpp>
#include <sifotl/detail/numfmt.hpp>
#include <sifotl/errors.hpp>

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <variant>
#include <vector>

namespace sifotl {

enum class DType { numeric, categorical, boolean, text };
enum class Role { feature, key, target_metric, quasi_identifier, excluded, ground_truth };

inline std::string_view to_string(DType d) {
    switch (d) {
    case DType::numeric: return "numeric";
    case DType::categorical: return "categorical";
    case DType::boolean: return "boolean";
    case DType::text: return "text";
    }
    return "?";
}

inline std::string_view to_string(Role r) {
    switch (r) {
    case Role::feature: return "feature";
    case Role::key: return "key";
    case Role::target_metric: return "target-metric";
    case Role::quasi_identifier: return "quasi-identifier";
    case Role::excluded: return "excluded";
    case Role::ground_truth: return "ground-truth";
    }
    return "?";
}

inline DType parse_dtype(std::string_view s) {
    if (s == "numeric") return DType::numeric;
    if (s == "categorical") return DType::categorical;
    if (s == "boolean") return DType::boolean;
    if (s == "text") return DType::text;
    throw ValidationError("unknown dtype: " + std::string(s));
}

inline Role parse_role(std::string_view s) {
    if (s == "feature") return Role::feature;
    if (s == "key") return Role::key;
    if (s == "target-metric") return Role::target_metric;
    if (s == "quasi-identifier") return Role::quasi_identifier;
    if (s == "excluded") return Role::excluded;
    if (s == "ground-truth") return Role::ground_truth;
    throw ValidationError("unknown role: " + std::string(s));
}

struct ColumnSchema {
    std::string name;
    DType dtype = DType::numeric;
    Role role = Role::feature;

    /// Feature and quasi-identifier columns feed models and the statistical screen.
    bool is_modeling_input() const { return role == Role::feature || role == Role::quasi_identifier; }
    bool is_textual() const { return dtype == DType::categorical || dtype == DType::text; }

    friend bool operator==(const ColumnSchema&, const ColumnSchema&) = default;
};

inline void to_json(nlohmann::json& j, const ColumnSchema& c) {
    j = nlohmann::json{{"name", c.name}, {"dtype", to_string(c.dtype)}, {"role", to_string(c.role)}};
}

inline void from_json(const nlohmann::json& j, ColumnSchema& c) {
    c.name = j.at("name").get<std::string>();
    c.dtype = parse_dtype(j.at("dtype").get<std::string>());
    c.role = j.contains("role") ? parse_role(j.at("role").get<std::string>()) : Role::feature;
}

/// Exactly one key column and exactly one numeric target-metric column; names unique.
inline void validate_schema(std::span<const ColumnSchema> schema) {
    std::set<std::string> names;
    int keys = 0;
    int targets = 0;
    for (const auto& c : schema) {
        if (c.name.empty()) throw ValidationError("schema: empty column name");
        if (!names.insert(c.name).second) throw ValidationError("schema: duplicate column '" + c.name + "'");
        if (c.role == Role::key) ++keys;
        if (c.role == Role::target_metric) {
            ++targets;
            if (c.dtype != DType::numeric) throw ValidationError("schema: target-metric column '" + c.name + "' must be numeric");
        }
    }
    if (keys != 1) throw ValidationError("schema: expected exactly one key column, found " + std::to_string(keys));
    if (targets != 1) throw ValidationError("schema: expected exactly one target-metric column, found " + std::to_string(targets));
}

/// A single typed cell; monostate is the explicit missing marker.
using Cell = std::variant<std::monostate, double, std::string>;

/// Column-major typed table. Numeric and boolean cells live in `numbers`,
/// categorical/text cells and every key column in `labels`.
class Table {
public:
    struct Column {
        std::vector<double> numbers;
        std::vector<std::string> labels;
        std::vector<std::uint8_t> missing;
    };

    Table() = default;

    explicit Table(std::vector<ColumnSchema> schema) : schema_(std::move(schema)), columns_(schema_.size()) {
        for (std::size_t i = 0; i < schema_.size(); ++i) {
            if (!index_.emplace(schema_[i].name, i).second)
                throw ValidationError("schema: duplicate column '" + schema_[i].name + "'");
        }
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return schema_.size(); }
    const std::vector<ColumnSchema>& schema() const { return schema_; }
    std::size_t parse_failures() const { return parse_failures_; }

    bool has_column(std::string_view name) const { return index_.contains(std::string(name)); }

    std::size_t column_index(std::string_view name) const {
        auto it = index_.find(std::string(name));
        if (it == index_.end()) throw ValidationError("unknown column: " + std::string(name));
        return it->second;
    }

    const ColumnSchema& column_schema(std::string_view name) const { return schema_[column_index(name)]; }
    const Column& column(std::size_t c) const { return columns_[c]; }
    const Column& column(std::string_view name) const { return columns_[column_index(name)]; }

    bool stores_labels(std::size_t c) const { return schema_[c].is_textual() || schema_[c].role == Role::key; }

    bool is_missing(std::size_t c, std::size_t r) const { return columns_[c].missing[r] != 0; }
    double number(std::size_t c, std::size_t r) const {
        return is_missing(c, r) ? std::numeric_limits<double>::quiet_NaN() : columns_[c].numbers[r];
    }
    const std::string& label(std::size_t c, std::size_t r) const { return columns_[c].labels[r]; }

    Cell cell(std::size_t c, std::size_t r) const {
        if (is_missing(c, r)) return std::monostate{};
        if (stores_labels(c)) return columns_[c].labels[r];
        return columns_[c].numbers[r];
    }

    /// Text rendering used for CSV export and duplicate detection.
    std::string cell_text(std::size_t c, std::size_t r) const {
        if (is_missing(c, r)) return {};
        if (stores_labels(c)) return columns_[c].labels[r];
        if (schema_[c].dtype == DType::boolean) return columns_[c].numbers[r] != 0.0 ? "true" : "false";
        return detail::format_double(columns_[c].numbers[r]);
    }

    std::size_t key_index() const { return role_index(Role::key); }
    std::size_t target_index() const { return role_index(Role::target_metric); }
    const std::string& key(std::size_t r) const { return columns_[key_index()].labels[r]; }

    std::size_t role_index(Role role) const {
        for (std::size_t i = 0; i < schema_.size(); ++i)
            if (schema_[i].role == role) return i;
        throw ValidationError("table has no column with role " + std::string(to_string(role)));
    }

    std::vector<std::size_t> columns_with_role(Role role) const {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < schema_.size(); ++i)
            if (schema_[i].role == role) out.push_back(i);
        return out;
    }

    void append_row(std::span<const Cell> cells) {
        if (cells.size() != schema_.size()) throw ValidationError("append_row: cell count does not match schema");
        for (std::size_t c = 0; c < schema_.size(); ++c) {
            auto& col = columns_[c];
            const bool labels = stores_labels(c);
            col.missing.push_back(0);
            if (labels) col.labels.emplace_back();
            else col.numbers.push_back(0.0);
            set(c, rows_, cells[c]);
        }
        ++rows_;
    }

    void set(std::size_t c, std::size_t r, const Cell& value) {
        auto& col = columns_[c];
        if (std::holds_alternative<std::monostate>(value)) {
            col.missing[r] = 1;
            return;
        }
        if (stores_labels(c)) {
            if (const auto* s = std::get_if<std::string>(&value)) col.labels[r] = *s;
            else col.labels[r] = detail::format_double(std::get<double>(value));
        } else {
            const auto* d = std::get_if<double>(&value);
            if (!d) throw ValidationError("column '" + schema_[c].name + "' expects a number");
            col.numbers[r] = *d;
        }
        col.missing[r] = 0;
    }

    void set_number(std::size_t c, std::size_t r, double v) { set(c, r, v); }
    void set_label(std::size_t c, std::size_t r, std::string v) { set(c, r, std::move(v)); }
    void set_missing(std::size_t c, std::size_t r) { columns_[c].missing[r] = 1; }

    std::vector<Cell> row_cells(std::size_t r) const {
        std::vector<Cell> out;
        out.reserve(schema_.size());
        for (std::size_t c = 0; c < schema_.size(); ++c) out.push_back(cell(c, r));
        return out;
    }

    /// Row index for every key; throws on duplicates.
    std::unordered_map<std::string, std::size_t> key_lookup() const {
        std::unordered_map<std::string, std::size_t> out;
        const auto k = key_index();
        out.reserve(rows_);
        for (std::size_t r = 0; r < rows_; ++r) {
            if (is_missing(k, r)) throw ValidationError("missing key value in row " + std::to_string(r + 1));
            if (!out.emplace(columns_[k].labels[r], r).second)
                throw ValidationError("duplicate key '" + columns_[k].labels[r] + "'");
        }
        return out;
    }

    /// Copy with every column whose role is in `roles` removed.
    Table without_roles(std::initializer_list<Role> roles) const {
        std::vector<ColumnSchema> kept_schema;
        std::vector<std::size_t> kept;
        for (std::size_t c = 0; c < schema_.size(); ++c) {
            if (std::find(roles.begin(), roles.end(), schema_[c].role) != roles.end()) continue;
            kept_schema.push_back(schema_[c]);
            kept.push_back(c);
        }
        Table out(std::move(kept_schema));
        for (std::size_t i = 0; i < kept.size(); ++i) out.columns_[i] = columns_[kept[i]];
        out.rows_ = rows_;
        out.parse_failures_ = parse_failures_;
        return out;
    }

    std::string to_csv() const {
        std::string out;
        detail::CsvRecord rec;
        for (const auto& c : schema_) rec.push_back(c.name);
        detail::append_csv_record(out, rec);
        for (std::size_t r = 0; r < rows_; ++r) {
            rec.clear();
            for (std::size_t c = 0; c < schema_.size(); ++c) rec.push_back(cell_text(c, r));
            detail::append_csv_record(out, rec);
        }
        return out;
    }

    void note_parse_failure() { ++parse_failures_; }

private:
    std::vector<ColumnSchema> schema_;
    std::vector<Column> columns_;
    std::unordered_map<std::string, std::size_t> index_;
    std::size_t rows_ = 0;
    std::size_t parse_failures_ = 0;
};

namespace detail {

inline std::string lower(std::string_view s) {
    std::string out(s);
    for (auto& ch : out) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    return out;
}

inline bool is_missing_token(std::string_view s) {
    if (s.empty()) return true;
    const auto l = lower(s);
    return l == "na" || l == "nan" || l == "null" || l == "none";
}

} // namespace detail

/// Parse CSV text against a declared schema. Header names must match the
/// schema names as a set; column order follows the schema.
inline Table parse_table(std::string_view csv_text, std::vector<ColumnSchema> schema) {
    validate_schema(schema);
    const auto records = detail::parse_csv(csv_text);
    if (records.empty()) throw ValidationError("csv: missing header row");
    const auto& header = records.front();

    std::vector<std::size_t> source(schema.size());
    {
        std::unordered_map<std::string, std::size_t> pos;
        for (std::size_t i = 0; i < header.size(); ++i) {
            if (!pos.emplace(header[i], i).second) throw ValidationError("csv: duplicate header '" + header[i] + "'");
        }
        if (header.size() != schema.size()) throw ValidationError("csv: header has " + std::to_string(header.size()) + " columns, schema declares " + std::to_string(schema.size()));
        for (std::size_t c = 0; c < schema.size(); ++c) {
            auto it = pos.find(schema[c].name);
            if (it == pos.end()) throw ValidationError("csv: header/schema mismatch, column '" + schema[c].name + "' not in header");
            source[c] = it->second;
        }
    }

    Table table(std::move(schema));
    std::vector<Cell> cells(table.cols());
    for (std::size_t r = 1; r < records.size(); ++r) {
        const auto& rec = records[r];
        if (rec.size() == 1 && rec[0].empty()) continue;
        if (rec.size() != header.size())
            throw ValidationError("csv: record " + std::to_string(r + 1) + " has " + std::to_string(rec.size()) + " fields, expected " + std::to_string(header.size()));
        for (std::size_t c = 0; c < table.cols(); ++c) {
            const std::string& raw = rec[source[c]];
            const auto& cs = table.schema()[c];
            if (table.stores_labels(c)) {
                cells[c] = raw.empty() ? Cell{} : Cell{raw};
            } else if (detail::is_missing_token(raw)) {
                cells[c] = std::monostate{};
            } else if (cs.dtype == DType::boolean) {
                const auto l = detail::lower(raw);
                if (l == "true" || l == "1" || l == "yes") cells[c] = 1.0;
                else if (l == "false" || l == "0" || l == "no") cells[c] = 0.0;
                else {
                    cells[c] = std::monostate{};
                    table.note_parse_failure();
                }
            } else {
                auto v = detail::parse_double(raw);
                if (v) cells[c] = *v;
                else {
                    cells[c] = std::monostate{};
                    table.note_parse_failure();
                }
            }
        }
        table.append_row(cells);
    }
    (void)table.key_lookup(); // duplicate / missing key check
    return table;
}

inline Table load_csv(const std::string& path, std::vector<ColumnSchema> schema) {
    auto table = parse_table(detail::read_file(path), std::move(schema));
    if (table.parse_failures() > 0)
        log_warning(path + ": " + std::to_string(table.parse_failures()) + " cell(s) failed to parse and were marked missing");
    return table;
}

/// Control/test tables aligned on the key column, plus the surrogate label.
struct PairedDataset {
    Table control;
    Table test;
    std::vector<std::size_t> control_rows; ///< matched rows, control order
    std::vector<std::size_t> test_rows;    ///< test row for each matched control row
    std::vector<std::uint8_t> surrogate;   ///< ỹ per matched row
    std::vector<std::string> unmatched_control;
    std::vector<std::string> unmatched_test;
    double tolerance = 1e-9;

    std::size_t size() const { return surrogate.size(); }
    std::size_t positives() const {
        std::size_t n = 0;
        for (auto v : surrogate) n += v;
        return n;
    }
};

/// Metric-difference indicator for one pair of metric cells. Missing on one
/// side only counts as a difference.
inline bool metric_differs(std::optional<double> control, std::optional<double> test, double tolerance) {
    if (!control && !test) return false;
    if (!control || !test) return true;
    return std::abs(*test - *control) > tolerance * std::max(1.0, std::abs(*control));
}

inline PairedDataset pair_tables(Table control, Table test, double tolerance = 1e-9) {
    if (!(tolerance >= 0.0)) throw ValidationError("pair_tables: tolerance must be nonnegative");
    const auto ck = control.key_index();
    const auto tk = test.key_index();
    if (control.schema()[ck].name != test.schema()[tk].name)
        throw ValidationError("pair_tables: key column differs between control and test");
    const auto ct = control.target_index();
    const auto tt = test.target_index();
    if (control.schema()[ct].name != test.schema()[tt].name)
        throw ValidationError("pair_tables: target-metric column differs between control and test");

    const auto test_keys = test.key_lookup();
    const auto control_keys = control.key_lookup();

    PairedDataset pair;
    pair.tolerance = tolerance;
    for (std::size_t r = 0; r < control.rows(); ++r) {
        auto it = test_keys.find(control.key(r));
        if (it == test_keys.end()) {
            pair.unmatched_control.push_back(control.key(r));
            continue;
        }
        const std::size_t tr = it->second;
        pair.control_rows.push_back(r);
        pair.test_rows.push_back(tr);
        auto value = [](const Table& t, std::size_t c, std::size_t row) -> std::optional<double> {
            if (t.is_missing(c, row)) return std::nullopt;
            return t.number(c, row);
        };
        pair.surrogate.push_back(metric_differs(value(control, ct, r), value(test, tt, tr), tolerance) ? 1 : 0);
    }
    for (std::size_t r = 0; r < test.rows(); ++r)
        if (!control_keys.contains(test.key(r))) pair.unmatched_test.push_back(test.key(r));

    if (pair.control_rows.empty()) throw ValidationError("pair_tables: zero matched keys");
    if (!pair.unmatched_control.empty() || !pair.unmatched_test.empty())
        log_info("pairing: " + std::to_string(pair.unmatched_control.size()) + " unmatched control key(s), " +
                 std::to_string(pair.unmatched_test.size()) + " unmatched test key(s) excluded from modeling");
    pair.control = std::move(control);
    pair.test = std::move(test);
    return pair;
}

} // namespace sifotl

#endif // SIFOTL_TABLE_HPP
