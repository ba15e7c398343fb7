#ifndef SIFOTL_NOISE_RULES_HPP
#define SIFOTL_NOISE_RULES_HPP

// Declarative noise heuristics producing the inferred noise labels that
// Model N trains on. Ground-truth columns are projected away before any rule
// runs, so no rule can observe them.

#include <sifotl/detail/csv.hpp>
#include <sifotl/dsl.hpp>
#include <sifotl/table.hpp>

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

namespace sifotl {

enum class NoiseMechanism { duplicate_row, outlier_multiple, missing_value, suspicious_rounding, zero_value, text_anomaly };

inline std::string_view to_string(NoiseMechanism m) {
    switch (m) {
    case NoiseMechanism::duplicate_row: return "duplicate-row";
    case NoiseMechanism::outlier_multiple: return "outlier-multiple";
    case NoiseMechanism::missing_value: return "missing-value";
    case NoiseMechanism::suspicious_rounding: return "suspicious-rounding";
    case NoiseMechanism::zero_value: return "zero-value";
    case NoiseMechanism::text_anomaly: return "text-anomaly";
    }
    return "?";
}

inline NoiseMechanism parse_noise_mechanism(std::string_view s) {
    for (auto m : {NoiseMechanism::duplicate_row, NoiseMechanism::outlier_multiple, NoiseMechanism::missing_value,
                   NoiseMechanism::suspicious_rounding, NoiseMechanism::zero_value, NoiseMechanism::text_anomaly})
        if (to_string(m) == s) return m;
    throw ValidationError("unknown noise mechanism: " + std::string(s));
}

/// Mechanism parameters:
///   duplicate-row        columns? (default: every non-key column)
///   outlier-multiple     column, threshold (default 3.0)
///   missing-value        columns
///   suspicious-rounding  column, granularity
///   zero-value           column
///   text-anomaly         column, whitelist
struct NoiseRule {
    std::string name;
    NoiseMechanism mechanism = NoiseMechanism::duplicate_row;
    nlohmann::json params = nlohmann::json::object();
    std::optional<std::string> scope;
};

inline void to_json(nlohmann::json& j, const NoiseRule& r) {
    j = nlohmann::json{{"name", r.name}, {"mechanism", to_string(r.mechanism)}, {"params", r.params}};
    if (r.scope) j["scope"] = *r.scope;
}

inline void from_json(const nlohmann::json& j, NoiseRule& r) {
    r.name = j.at("name").get<std::string>();
    r.mechanism = parse_noise_mechanism(j.at("mechanism").get<std::string>());
    r.params = j.value("params", nlohmann::json::object());
    if (j.contains("scope") && !j.at("scope").is_null()) r.scope = j.at("scope").get<std::string>();
}

struct NoiseLabelVector {
    std::vector<std::uint8_t> labels;
    std::vector<std::vector<std::string>> triggers;

    std::size_t size() const { return labels.size(); }
    std::size_t flagged() const {
        std::size_t n = 0;
        for (auto l : labels) n += l;
        return n;
    }
};

namespace detail {

inline std::vector<std::string> string_list(const nlohmann::json& params, const char* key) {
    if (!params.contains(key)) return {};
    return params.at(key).get<std::vector<std::string>>();
}

inline std::string required_column(const NoiseRule& rule) {
    if (!rule.params.contains("column")) throw ValidationError("noise rule '" + rule.name + "': missing 'column' parameter");
    return rule.params.at("column").get<std::string>();
}

inline bool is_multiple_of(double v, double granularity) {
    const double r = std::remainder(v, granularity);
    return std::abs(r) <= 1e-9 * std::max(1.0, std::abs(v));
}

inline double median_of(const Table& t, std::size_t c) {
    std::vector<double> v;
    for (std::size_t r = 0; r < t.rows(); ++r)
        if (!t.is_missing(c, r)) v.push_back(t.number(c, r));
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    const auto m = v.size() / 2;
    return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

} // namespace detail

/// Evaluate every rule over the test table. `baseline` supplies the paired
/// (same key) reference values; rows whose key is absent from the baseline
/// are unpaired.
inline NoiseLabelVector apply_rules(const Table& test_in, const std::vector<NoiseRule>& rules, const Table& baseline_in) {
    const Table test = test_in.without_roles({Role::ground_truth});
    const Table baseline = baseline_in.without_roles({Role::ground_truth});
    const auto baseline_keys = baseline.key_lookup();
    const auto key_col = test.key_index();

    std::vector<std::optional<std::size_t>> paired(test.rows());
    for (std::size_t r = 0; r < test.rows(); ++r) {
        if (test.is_missing(key_col, r)) continue;
        auto it = baseline_keys.find(test.key(r));
        if (it != baseline_keys.end()) paired[r] = it->second;
    }

    const auto scope_types = dsl::column_types(test.schema(), {Role::key, Role::excluded, Role::ground_truth});

    auto check_column = [&](const NoiseRule& rule, const std::string& name, bool numeric) {
        if (!test.has_column(name)) {
            if (test_in.has_column(name) && test_in.column_schema(name).role == Role::ground_truth)
                throw ValidationError("noise rule '" + rule.name + "' references ground-truth column '" + name + "'");
            throw ValidationError("noise rule '" + rule.name + "' references unknown column '" + name + "'");
        }
        const auto& cs = test.column_schema(name);
        if (cs.role == Role::excluded || cs.role == Role::key)
            throw ValidationError("noise rule '" + rule.name + "' references non-feature column '" + name + "'");
        if (numeric && cs.dtype != DType::numeric)
            throw ValidationError("noise rule '" + rule.name + "': column '" + name + "' must be numeric");
        return test.column_index(name);
    };

    NoiseLabelVector out;
    out.labels.assign(test.rows(), 0);
    out.triggers.assign(test.rows(), {});

    for (const auto& rule : rules) {
        std::vector<std::uint8_t> in_scope(test.rows(), 1);
        if (rule.scope) {
            const auto expr = dsl::Expression::compile_predicate(*rule.scope, scope_types);
            const auto bound = expr.bind(test);
            for (std::size_t r = 0; r < test.rows(); ++r) in_scope[r] = bound.truthy(r) ? 1 : 0;
        }
        std::vector<std::uint8_t> hit(test.rows(), 0);

        switch (rule.mechanism) {
        case NoiseMechanism::duplicate_row: {
            std::vector<std::size_t> cols;
            auto names = detail::string_list(rule.params, "columns");
            if (names.empty()) {
                for (std::size_t c = 0; c < test.cols(); ++c)
                    if (test.schema()[c].role != Role::key && test.schema()[c].role != Role::excluded) cols.push_back(c);
            } else {
                for (const auto& n : names) cols.push_back(check_column(rule, n, false));
            }
            std::unordered_map<std::string, std::size_t> counts;
            std::vector<std::string> tuples(test.rows());
            for (std::size_t r = 0; r < test.rows(); ++r) {
                for (auto c : cols) {
                    tuples[r] += test.is_missing(c, r) ? std::string("\x1e") : test.cell_text(c, r);
                    tuples[r] += '\x1f';
                }
                if (in_scope[r]) ++counts[tuples[r]];
            }
            for (std::size_t r = 0; r < test.rows(); ++r)
                hit[r] = counts[tuples[r]] > 1 || !paired[r];
            break;
        }
        case NoiseMechanism::outlier_multiple: {
            const auto c = check_column(rule, detail::required_column(rule), true);
            const double threshold = rule.params.value("threshold", 3.0);
            const auto bc = baseline.column_index(test.schema()[c].name);
            const double location = detail::median_of(baseline, bc);
            for (std::size_t r = 0; r < test.rows(); ++r) {
                if (test.is_missing(c, r)) continue;
                double ref = location;
                if (paired[r] && !baseline.is_missing(bc, *paired[r])) ref = baseline.number(bc, *paired[r]);
                if (ref == 0.0) continue;
                hit[r] = std::abs(test.number(c, r)) > threshold * std::abs(ref);
            }
            break;
        }
        case NoiseMechanism::missing_value: {
            auto names = detail::string_list(rule.params, "columns");
            if (names.empty() && rule.params.contains("column")) names.push_back(rule.params.at("column").get<std::string>());
            if (names.empty()) throw ValidationError("noise rule '" + rule.name + "': missing 'columns' parameter");
            for (const auto& n : names) {
                const auto c = check_column(rule, n, false);
                for (std::size_t r = 0; r < test.rows(); ++r)
                    if (test.is_missing(c, r)) hit[r] = 1;
            }
            break;
        }
        case NoiseMechanism::suspicious_rounding: {
            const auto c = check_column(rule, detail::required_column(rule), true);
            const double g = rule.params.value("granularity", 0.0);
            if (!(g > 0.0)) throw ValidationError("noise rule '" + rule.name + "': granularity must be positive");
            const auto bc = baseline.column_index(test.schema()[c].name);
            for (std::size_t r = 0; r < test.rows(); ++r) {
                if (!paired[r] || test.is_missing(c, r) || baseline.is_missing(bc, *paired[r])) continue;
                hit[r] = detail::is_multiple_of(test.number(c, r), g) && !detail::is_multiple_of(baseline.number(bc, *paired[r]), g);
            }
            break;
        }
        case NoiseMechanism::zero_value: {
            const auto c = check_column(rule, detail::required_column(rule), true);
            const auto bc = baseline.column_index(test.schema()[c].name);
            for (std::size_t r = 0; r < test.rows(); ++r) {
                if (!paired[r] || test.is_missing(c, r) || baseline.is_missing(bc, *paired[r])) continue;
                hit[r] = test.number(c, r) == 0.0 && baseline.number(bc, *paired[r]) != 0.0;
            }
            break;
        }
        case NoiseMechanism::text_anomaly: {
            const auto c = check_column(rule, detail::required_column(rule), false);
            if (!test.schema()[c].is_textual())
                throw ValidationError("noise rule '" + rule.name + "': text-anomaly needs a categorical/text column");
            const auto list = detail::string_list(rule.params, "whitelist");
            if (list.empty()) throw ValidationError("noise rule '" + rule.name + "': empty whitelist");
            const std::set<std::string> allowed(list.begin(), list.end());
            for (std::size_t r = 0; r < test.rows(); ++r)
                if (!test.is_missing(c, r) && !allowed.contains(test.label(c, r))) hit[r] = 1;
            break;
        }
        }

        for (std::size_t r = 0; r < test.rows(); ++r) {
            if (!hit[r] || !in_scope[r]) continue;
            out.labels[r] = 1;
            out.triggers[r].push_back(rule.name);
        }
    }
    return out;
}

/// key,label,rules (rule names joined by ';').
inline std::string noise_labels_csv(const Table& test, const NoiseLabelVector& labels) {
    std::string out = "key,label,rules\n";
    for (std::size_t r = 0; r < test.rows(); ++r) {
        std::string joined;
        for (std::size_t i = 0; i < labels.triggers[r].size(); ++i) {
            if (i) joined += ';';
            joined += labels.triggers[r][i];
        }
        detail::append_csv_record(out, {test.key(r), labels.labels[r] ? "1" : "0", joined});
    }
    return out;
}

} // namespace sifotl

#endif // SIFOTL_NOISE_RULES_HPP
