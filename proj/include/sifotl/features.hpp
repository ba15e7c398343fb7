#ifndef SIFOTL_FEATURES_HPP
#define SIFOTL_FEATURES_HPP

#include <sifotl/table.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace sifotl {

inline constexpr std::string_view missing_level = "(missing)";

/// One model input column: numeric (NaN = missing) or categorical codes.
struct FeatureColumn {
    std::string name;
    bool categorical = false;
    std::vector<double> values;
    std::vector<int> codes;
    std::vector<std::string> levels;

    std::string describe_value(std::size_t row) const {
        if (categorical) return levels[static_cast<std::size_t>(codes[row])];
        return std::isnan(values[row]) ? std::string(missing_level) : detail::format_double(values[row]);
    }
};

/// Typed feature matrix over a fixed row set.
struct FeatureMatrix {
    std::size_t rows = 0;
    std::vector<FeatureColumn> columns;

    std::size_t cols() const { return columns.size(); }

    std::vector<std::string> names() const {
        std::vector<std::string> out;
        for (const auto& c : columns) out.push_back(c.name);
        return out;
    }

    bool has(std::string_view name) const {
        return std::any_of(columns.begin(), columns.end(), [&](const auto& c) { return c.name == name; });
    }

    std::size_t index(std::string_view name) const {
        for (std::size_t i = 0; i < columns.size(); ++i)
            if (columns[i].name == name) return i;
        throw ValidationError("feature matrix has no column '" + std::string(name) + "'");
    }

    void add_numeric(std::string name, std::vector<double> values) {
        check_new(name, values.size());
        columns.push_back(FeatureColumn{std::move(name), false, std::move(values), {}, {}});
    }

    /// Levels are sorted so that codes do not depend on row order.
    void add_categorical(std::string name, const std::vector<std::string>& labels) {
        check_new(name, labels.size());
        FeatureColumn col{std::move(name), true, {}, {}, {}};
        std::map<std::string, int> index;
        for (const auto& l : labels) index.emplace(l, 0);
        int next = 0;
        for (auto& [level, code] : index) {
            code = next++;
            col.levels.push_back(level);
        }
        col.codes.reserve(labels.size());
        for (const auto& l : labels) col.codes.push_back(index.at(l));
        columns.push_back(std::move(col));
    }

private:
    void check_new(const std::string& name, std::size_t n) {
        if (columns.empty() && rows == 0) rows = n;
        if (n != rows) throw ValidationError("feature '" + name + "' has " + std::to_string(n) + " rows, expected " + std::to_string(rows));
        if (has(name)) throw ValidationError("duplicate feature name '" + name + "'");
    }
};

/// Modeling-input columns (feature and quasi-identifier roles) of `table`
/// restricted to `rows`. Key, target-metric, excluded and ground-truth columns
/// never enter.
inline FeatureMatrix base_feature_matrix(const Table& table, std::span<const std::size_t> rows) {
    FeatureMatrix m;
    m.rows = rows.size();
    for (std::size_t c = 0; c < table.cols(); ++c) {
        const auto& cs = table.schema()[c];
        if (!cs.is_modeling_input()) continue;
        if (cs.is_textual()) {
            std::vector<std::string> labels(rows.size());
            for (std::size_t i = 0; i < rows.size(); ++i)
                labels[i] = table.is_missing(c, rows[i]) ? std::string(missing_level) : table.label(c, rows[i]);
            m.add_categorical(cs.name, labels);
        } else {
            std::vector<double> values(rows.size());
            for (std::size_t i = 0; i < rows.size(); ++i) values[i] = table.number(c, rows[i]);
            m.add_numeric(cs.name, std::move(values));
        }
    }
    return m;
}

/// Dense numeric design matrix, column-major; NaN marks missing.
struct DenseMatrix {
    std::vector<std::string> names;
    std::size_t rows = 0;
    std::vector<double> data;

    std::size_t cols() const { return names.size(); }
    double at(std::size_t r, std::size_t c) const { return data[c * rows + r]; }
    std::span<const double> column(std::size_t c) const { return {data.data() + c * rows, rows}; }

    void add_column(std::string name, std::span<const double> values) {
        if (names.empty() && data.empty()) rows = values.size();
        if (values.size() != rows) throw ValidationError("dense column '" + name + "' has wrong length");
        names.push_back(std::move(name));
        data.insert(data.end(), values.begin(), values.end());
    }

    DenseMatrix select_rows(std::span<const std::size_t> idx) const {
        DenseMatrix out;
        out.names = names;
        out.rows = idx.size();
        out.data.resize(idx.size() * cols());
        for (std::size_t c = 0; c < cols(); ++c)
            for (std::size_t i = 0; i < idx.size(); ++i) out.data[c * idx.size() + i] = at(idx[i], c);
        return out;
    }
};

/// Numeric columns pass through; categorical columns expand to one 0/1
/// indicator per level, named "column=level".
inline DenseMatrix encode_dense(const FeatureMatrix& m) {
    DenseMatrix out;
    out.rows = m.rows;
    for (const auto& col : m.columns) {
        if (!col.categorical) {
            out.add_column(col.name, col.values);
            continue;
        }
        std::vector<double> ind(m.rows);
        for (std::size_t l = 0; l < col.levels.size(); ++l) {
            for (std::size_t r = 0; r < m.rows; ++r) ind[r] = col.codes[r] == static_cast<int>(l) ? 1.0 : 0.0;
            out.add_column(col.name + "=" + col.levels[l], ind);
        }
    }
    return out;
}

} // namespace sifotl

#endif // SIFOTL_FEATURES_HPP
