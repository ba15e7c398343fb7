#ifndef SIFOTL_SCREEN_HPP
#define SIFOTL_SCREEN_HPP

// Privacy-gated single-condition slice screen. The InsightSummary produced
// here is the only dataset-derived content that may reach an LLM prompt.

#include <sifotl/detail/hash.hpp>
#include <sifotl/stats.hpp>
#include <sifotl/table.hpp>

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace sifotl {

struct AnonymityPolicy {
    std::size_t min_slice_size = 2;
    std::size_t k_threshold = 2;
    std::vector<std::string> quasi_identifiers;

    void validate() const {
        if (min_slice_size < 2) throw ValidationError("anonymity policy: min_slice_size must be >= 2");
        if (k_threshold < 2) throw ValidationError("anonymity policy: k_threshold must be >= 2");
    }

    /// min = max(2, ceil(0.001·n)), k = max(2, min).
    static AnonymityPolicy adaptive(std::size_t n_rows, std::vector<std::string> quasi_identifiers = {}) {
        AnonymityPolicy p;
        p.min_slice_size = std::max<std::size_t>(2, static_cast<std::size_t>(std::ceil(0.001 * static_cast<double>(n_rows))));
        p.k_threshold = std::max<std::size_t>(2, p.min_slice_size);
        p.quasi_identifiers = std::move(quasi_identifiers);
        return p;
    }
};

/// Pass iff the slice has at least min_slice_size rows and, when
/// quasi-identifiers are configured, every quasi-identifier tuple inside the
/// slice occurs at least k_threshold times inside the slice.
inline bool anonymity_check(std::span<const std::uint8_t> slice_mask, const AnonymityPolicy& policy,
                            std::span<const std::string> quasi_id_tuples) {
    policy.validate();
    std::size_t size = 0;
    for (auto m : slice_mask) size += m ? 1 : 0;
    if (size < policy.min_slice_size) return false;
    if (policy.quasi_identifiers.empty()) return true;
    if (quasi_id_tuples.size() != slice_mask.size()) throw ValidationError("anonymity_check: tuple vector length mismatch");
    std::unordered_map<std::string_view, std::size_t> counts;
    for (std::size_t i = 0; i < slice_mask.size(); ++i)
        if (slice_mask[i]) ++counts[quasi_id_tuples[i]];
    return std::all_of(counts.begin(), counts.end(), [&](const auto& kv) { return kv.second >= policy.k_threshold; });
}

/// One condition on one column: category equality or a numeric half-open bin.
struct SliceSpec {
    enum class Kind { category, numeric_bin };

    std::string feature;
    Kind kind = Kind::category;
    std::string category;
    std::optional<double> lo; ///< inclusive; absent = unbounded
    std::optional<double> hi; ///< exclusive; absent = unbounded

    bool contains(double v) const {
        if (std::isnan(v)) return false;
        if (lo && v < *lo) return false;
        if (hi && v >= *hi) return false;
        return true;
    }

    std::string describe() const {
        if (kind == Kind::category) return feature + " = '" + category + "'";
        std::string out = feature + " in [";
        out += lo ? detail::format_double(*lo) : "-inf";
        out += ", ";
        out += hi ? detail::format_double(*hi) : "+inf";
        out += ")";
        return out;
    }

    friend bool operator==(const SliceSpec&, const SliceSpec&) = default;
};

inline void to_json(nlohmann::json& j, const SliceSpec& s) {
    j = nlohmann::json::object();
    j["feature"] = s.feature;
    if (s.kind == SliceSpec::Kind::category) {
        j["kind"] = "category";
        j["category"] = s.category;
    } else {
        j["kind"] = "numeric_bin";
        j["lo"] = s.lo ? nlohmann::json(*s.lo) : nlohmann::json(nullptr);
        j["hi"] = s.hi ? nlohmann::json(*s.hi) : nlohmann::json(nullptr);
    }
}

inline void from_json(const nlohmann::json& j, SliceSpec& s) {
    s.feature = j.at("feature").get<std::string>();
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "category") {
        s.kind = SliceSpec::Kind::category;
        s.category = j.at("category").get<std::string>();
    } else if (kind == "numeric_bin") {
        s.kind = SliceSpec::Kind::numeric_bin;
        s.lo = j.at("lo").is_null() ? std::nullopt : std::optional<double>(j.at("lo").get<double>());
        s.hi = j.at("hi").is_null() ? std::nullopt : std::optional<double>(j.at("hi").get<double>());
    } else {
        throw ValidationError("unknown slice kind: " + kind);
    }
}

struct SliceInsight {
    SliceSpec slice;
    double chi2_stat = 0.0;
    double p_value = 1.0;
    double q_value = 1.0;
    double cramers_v = 0.0;
    std::optional<double> point_biserial; ///< numeric features only
    double group_rate_in = 0.0;
    double group_rate_out = 0.0;
    std::size_t n_in = 0;
    bool degenerate = false;
    bool suppressed = false;
};

/// Suppressed insights never serialize their statistics.
inline void to_json(nlohmann::json& j, const SliceInsight& s) {
    if (s.suppressed) {
        j = nlohmann::json{{"suppressed", true}};
        return;
    }
    j = nlohmann::json{{"slice", s.slice},
                       {"chi2_stat", s.chi2_stat},
                       {"p_value", s.p_value},
                       {"q_value", s.q_value},
                       {"cramers_v", s.cramers_v},
                       {"point_biserial", s.point_biserial ? nlohmann::json(*s.point_biserial) : nlohmann::json(nullptr)},
                       {"group_rate_in", s.group_rate_in},
                       {"group_rate_out", s.group_rate_out},
                       {"n_in", s.n_in},
                       {"degenerate", s.degenerate}};
}

inline void from_json(const nlohmann::json& j, SliceInsight& s) {
    s = SliceInsight{};
    if (j.value("suppressed", false)) {
        s.suppressed = true;
        return;
    }
    s.slice = j.at("slice").get<SliceSpec>();
    s.chi2_stat = j.at("chi2_stat").get<double>();
    s.p_value = j.at("p_value").get<double>();
    s.q_value = j.at("q_value").get<double>();
    s.cramers_v = j.at("cramers_v").get<double>();
    if (!j.at("point_biserial").is_null()) s.point_biserial = j.at("point_biserial").get<double>();
    s.group_rate_in = j.at("group_rate_in").get<double>();
    s.group_rate_out = j.at("group_rate_out").get<double>();
    s.n_in = j.at("n_in").get<std::size_t>();
    s.degenerate = j.at("degenerate").get<bool>();
}

struct SchemaEntry {
    std::string name;
    DType dtype = DType::numeric;
};

struct InsightSummary {
    std::string fingerprint;
    std::string target_name;
    std::size_t n_rows = 0;
    std::vector<SliceInsight> insights; ///< non-suppressed, ordered
    std::size_t suppressed_count = 0;
    std::vector<SchemaEntry> schema_context;
};

inline nlohmann::json to_json_document(const InsightSummary& s) {
    nlohmann::json schema = nlohmann::json::array();
    for (const auto& c : s.schema_context) schema.push_back({{"name", c.name}, {"dtype", to_string(c.dtype)}});
    nlohmann::json insights = nlohmann::json::array();
    for (const auto& i : s.insights) insights.push_back(i);
    return nlohmann::json{{"fingerprint", s.fingerprint},
                          {"target", s.target_name},
                          {"n_rows", s.n_rows},
                          {"suppressed_count", s.suppressed_count},
                          {"schema_context", schema},
                          {"insights", insights}};
}

inline InsightSummary summary_from_json(const nlohmann::json& j) {
    InsightSummary s;
    s.fingerprint = j.at("fingerprint").get<std::string>();
    s.target_name = j.at("target").get<std::string>();
    s.n_rows = j.at("n_rows").get<std::size_t>();
    s.suppressed_count = j.at("suppressed_count").get<std::size_t>();
    for (const auto& c : j.at("schema_context"))
        s.schema_context.push_back({c.at("name").get<std::string>(), parse_dtype(c.at("dtype").get<std::string>())});
    for (const auto& i : j.at("insights")) s.insights.push_back(i.get<SliceInsight>());
    return s;
}

/// Columns offered to the LLM and to models: everything except key,
/// target-metric, excluded and ground-truth roles.
inline std::vector<SchemaEntry> schema_context(std::span<const ColumnSchema> schema) {
    std::vector<SchemaEntry> out;
    for (const auto& c : schema)
        if (c.is_modeling_input()) out.push_back({c.name, c.dtype});
    return out;
}

/// Row membership of a slice over the given rows of a table.
inline std::vector<std::uint8_t> slice_mask(const Table& table, std::span<const std::size_t> rows, const SliceSpec& slice) {
    const auto c = table.column_index(slice.feature);
    std::vector<std::uint8_t> mask(rows.size(), 0);
    const bool labels = table.schema()[c].dtype != DType::numeric;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto r = rows[i];
        if (table.is_missing(c, r)) continue;
        if (slice.kind == SliceSpec::Kind::category) {
            if (labels && table.cell_text(c, r) == slice.category) mask[i] = 1;
        } else if (!labels) {
            mask[i] = slice.contains(table.number(c, r)) ? 1 : 0;
        }
    }
    return mask;
}

/// Per-row quasi-identifier tuple strings (unit-separator joined).
inline std::vector<std::string> quasi_id_tuples(const Table& table, std::span<const std::size_t> rows,
                                                std::span<const std::string> quasi_identifiers) {
    std::vector<std::size_t> cols;
    for (const auto& q : quasi_identifiers) cols.push_back(table.column_index(q));
    std::vector<std::string> out(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (auto c : cols) {
            out[i] += table.is_missing(c, rows[i]) ? std::string("\x1e") : table.cell_text(c, rows[i]);
            out[i] += '\x1f';
        }
    }
    return out;
}

/// Enumerate every single-condition slice over the modeling-input columns of
/// the test table (matched rows only), gate each through the anonymity check,
/// test it against `target` and rank by ascending q then descending V.
inline InsightSummary build_insight_summary(const PairedDataset& pair, std::span<const std::uint8_t> target,
                                            const AnonymityPolicy& policy, std::size_t n_bins,
                                            std::string target_name = "intervention") {
    policy.validate();
    if (target.size() != pair.size()) throw ValidationError("build_insight_summary: target length does not match matched rows");
    const Table& table = pair.test;
    const std::span<const std::size_t> rows = pair.test_rows;
    const auto n = static_cast<double>(rows.size());

    std::vector<std::size_t> feature_cols;
    for (std::size_t c = 0; c < table.cols(); ++c)
        if (table.schema()[c].is_modeling_input()) feature_cols.push_back(c);
    if (feature_cols.empty()) throw ValidationError("build_insight_summary: no feature columns");

    const auto tuples = quasi_id_tuples(table, rows, policy.quasi_identifiers);

    InsightSummary summary;
    summary.target_name = std::move(target_name);
    summary.n_rows = rows.size();
    summary.schema_context = schema_context(table.schema());

    std::size_t positives = 0;
    for (auto t : target) positives += t ? 1 : 0;
    {
        std::string fp;
        for (const auto& c : summary.schema_context) fp += c.name + ":" + std::string(to_string(c.dtype)) + ";";
        fp += std::to_string(rows.size()) + "/" + std::to_string(positives) + "/" + summary.target_name;
        summary.fingerprint = detail::hash_hex(fp);
    }

    std::vector<SliceInsight> kept;
    for (const auto c : feature_cols) {
        const auto& cs = table.schema()[c];
        std::vector<SliceSpec> slices;
        std::optional<double> rpb;
        if (cs.dtype == DType::numeric) {
            std::vector<double> values(rows.size());
            for (std::size_t i = 0; i < rows.size(); ++i) values[i] = table.number(c, rows[i]);
            bool any = std::any_of(values.begin(), values.end(), [](double v) { return !std::isnan(v); });
            if (!any) continue;
            const auto bins = stats::bin_numeric(values, n_bins);
            for (std::size_t b = 0; b < bins.count(); ++b) {
                SliceSpec s{cs.name, SliceSpec::Kind::numeric_bin, {}, std::nullopt, std::nullopt};
                if (b > 0) s.lo = bins.cuts[b - 1];
                if (b < bins.cuts.size()) s.hi = bins.cuts[b];
                slices.push_back(std::move(s));
            }
            const auto pb = stats::point_biserial(target, values);
            rpb = pb.value;
        } else {
            std::map<std::string, std::size_t> levels;
            for (auto r : rows)
                if (!table.is_missing(c, r)) ++levels[table.cell_text(c, r)];
            for (const auto& [level, count] : levels)
                slices.push_back(SliceSpec{cs.name, SliceSpec::Kind::category, level, std::nullopt, std::nullopt});
        }

        for (auto& s : slices) {
            const auto mask = slice_mask(table, rows, s);
            SliceInsight ins;
            ins.slice = std::move(s);
            for (auto m : mask) ins.n_in += m;
            if (!anonymity_check(mask, policy, tuples)) {
                ++summary.suppressed_count;
                continue;
            }
            const auto chi = stats::chi_square_test(mask, target);
            ins.chi2_stat = chi.stat;
            ins.p_value = chi.p_value;
            ins.degenerate = chi.degenerate;
            ins.cramers_v = stats::cramers_v(chi.stat, n, 2, 2);
            ins.point_biserial = rpb;
            double in_pos = 0, out_pos = 0;
            for (std::size_t i = 0; i < mask.size(); ++i) {
                if (!target[i]) continue;
                (mask[i] ? in_pos : out_pos) += 1.0;
            }
            const double n_out = n - static_cast<double>(ins.n_in);
            ins.group_rate_in = ins.n_in ? in_pos / static_cast<double>(ins.n_in) : 0.0;
            ins.group_rate_out = n_out > 0 ? out_pos / n_out : 0.0;
            kept.push_back(std::move(ins));
        }
    }

    if (!kept.empty()) {
        std::vector<double> p(kept.size());
        for (std::size_t i = 0; i < kept.size(); ++i) p[i] = kept[i].p_value;
        const auto q = stats::bh_fdr(p);
        for (std::size_t i = 0; i < kept.size(); ++i) kept[i].q_value = q[i];
    }
    std::stable_sort(kept.begin(), kept.end(), [](const SliceInsight& a, const SliceInsight& b) {
        if (a.q_value != b.q_value) return a.q_value < b.q_value;
        return a.cramers_v > b.cramers_v;
    });
    summary.insights = std::move(kept);
    return summary;
}

} // namespace sifotl

#endif // SIFOTL_SCREEN_HPP
