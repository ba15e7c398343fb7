#ifndef SIFOTL_SYNTH_HPP
#define SIFOTL_SYNTH_HPP

// Feature synthesis: definition prompt from an insight summary, validation of
// the proposed definitions, expression prompt, compilation into the DSL and
// materialization as extra feature columns.

#include <sifotl/dsl.hpp>
#include <sifotl/features.hpp>
#include <sifotl/provider.hpp>
#include <sifotl/screen.hpp>

#include <nlohmann/json.hpp>

#include <algorithm>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace sifotl {

enum class SynthTask { intervention, noise };

inline std::string_view to_string(SynthTask t) { return t == SynthTask::intervention ? "intervention" : "noise"; }

inline SynthTask parse_synth_task(std::string_view s) {
    if (s == "intervention") return SynthTask::intervention;
    if (s == "noise") return SynthTask::noise;
    throw ValidationError("unknown synthesis task: " + std::string(s));
}

enum class FeatureStatus { proposed, validated, expression_ready, failed };

inline std::string_view to_string(FeatureStatus s) {
    switch (s) {
    case FeatureStatus::proposed: return "proposed";
    case FeatureStatus::validated: return "validated";
    case FeatureStatus::expression_ready: return "expression_ready";
    case FeatureStatus::failed: return "failed";
    }
    return "?";
}

inline FeatureStatus parse_feature_status(std::string_view s) {
    for (auto v : {FeatureStatus::proposed, FeatureStatus::validated, FeatureStatus::expression_ready, FeatureStatus::failed})
        if (to_string(v) == s) return v;
    throw ValidationError("unknown feature status: " + std::string(s));
}

struct FeatureDefinition {
    std::string name;
    std::vector<std::string> source_columns;
    std::string logic_description;
    std::optional<std::string> expression;
    FeatureStatus status = FeatureStatus::proposed;
};

inline void to_json(nlohmann::json& j, const FeatureDefinition& d) {
    j = nlohmann::json{{"name", d.name},
                       {"source_columns", d.source_columns},
                       {"logic_description", d.logic_description},
                       {"expression", d.expression ? nlohmann::json(*d.expression) : nlohmann::json(nullptr)},
                       {"status", to_string(d.status)}};
}

inline void from_json(const nlohmann::json& j, FeatureDefinition& d) {
    d.name = j.at("name").get<std::string>();
    d.source_columns = j.at("source_columns").get<std::vector<std::string>>();
    d.logic_description = j.value("logic_description", "");
    if (j.contains("expression") && !j.at("expression").is_null()) d.expression = j.at("expression").get<std::string>();
    d.status = parse_feature_status(j.value("status", "proposed"));
}

inline constexpr std::size_t max_features_per_run = 12;

namespace detail {

inline std::string task_framing(SynthTask task) {
    if (task == SynthTask::intervention)
        return "The target flags rows whose metric changed between the control and test snapshots. Propose features that help "
               "separate the rows affected by a systematic change (a policy, pricing or coverage intervention) from unaffected rows.";
    return "The target flags rows that heuristic data-quality rules marked as noisy (duplicates, outliers, missing values, "
           "rounding, zeroed values, invalid categories). Propose features that help recognize such data-quality problems.";
}

inline bool is_identifier(std::string_view s) {
    if (s.empty() || !(std::isalpha(static_cast<unsigned char>(s[0])) || s[0] == '_')) return false;
    return std::all_of(s.begin(), s.end(), [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; });
}

inline std::string grammar_text() {
    return "expr    := expr 'or' expr | expr 'and' expr | 'not' expr\n"
           "         | sum cmp sum | sum ['not'] 'in' '{' literal, ... '}' | sum\n"
           "cmp     := '==' | '!=' | '<' | '<=' | '>' | '>='\n"
           "sum     := sum '+' sum | sum '-' sum | sum '*' sum | '-' sum | atom\n"
           "atom    := number | 'string' | true | false | COLUMN | '(' expr ')'\n"
           "         | 'if' expr 'then' expr 'else' expr\n"
           "         | safe_div(a, b)     (a / b, 0 when b == 0)\n"
           "         | clamp(x, lo, hi) | log1p(x)\n"
           "Expressions are evaluated one row at a time. There is no '/' operator and no aggregate over rows.\n"
           "A missing input makes the result missing. Boolean results are used as 0/1.\n";
}

} // namespace detail

/// Schema names and dtypes plus serialized insights; no row values.
inline std::string build_definition_prompt(const InsightSummary& summary, const std::vector<SchemaEntry>& schema, SynthTask task) {
    if (summary.insights.empty()) throw ValidationError("build_definition_prompt: the insight summary is empty");
    nlohmann::json insights = nlohmann::json::array();
    for (const auto& i : summary.insights) insights.push_back(i);

    std::string p;
    p += "You help engineer tabular features for a data-shift analysis.\n";
    p += std::string(prompt_protocol::phase_definition) + "\n\n";
    p += "## Task\n";
    p += std::string(prompt_protocol::task_prefix) + std::string(to_string(task)) + "\n";
    p += detail::task_framing(task) + "\n\n";
    p += "## Columns\n";
    for (const auto& c : schema) p += "- " + c.name + " (" + std::string(to_string(c.dtype)) + ")\n";
    p += "\n## Statistical insights\n";
    p += "Each record describes one single-condition slice: its chi-square statistic, p and BH q values, Cramer's V, "
         "point-biserial correlation for numeric columns, and the target rate inside and outside the slice.\n";
    p += std::string(prompt_protocol::insights_begin) + "\n" + insights.dump() + "\n" + std::string(prompt_protocol::insights_end) + "\n\n";
    p += "## Response\n";
    p += "Reply with a JSON object only:\n";
    p += R"({"features": [{"name": "<identifier>", "source_columns": ["<column>", ...], "logic_description": "<how to compute it>"}]})";
    p += "\nUse only the columns listed above. Propose at most " + std::to_string(max_features_per_run) + " features.\n";
    return p;
}

/// Definitions with the expression grammar; one expression slot per feature.
inline std::string build_expression_prompt(const std::vector<FeatureDefinition>& defs, const std::vector<SchemaEntry>& schema) {
    if (defs.empty()) throw ValidationError("build_expression_prompt: no definitions");
    std::vector<std::string> cols;
    for (const auto& d : defs) {
        if (d.status != FeatureStatus::validated) throw ValidationError("build_expression_prompt: definition '" + d.name + "' is not validated");
        for (const auto& c : d.source_columns)
            if (std::find(cols.begin(), cols.end(), c) == cols.end()) cols.push_back(c);
    }
    nlohmann::json features = nlohmann::json::array();
    for (const auto& d : defs)
        features.push_back({{"name", d.name}, {"source_columns", d.source_columns}, {"logic_description", d.logic_description}});

    std::string p;
    p += "You translate feature definitions into a small expression language.\n";
    p += std::string(prompt_protocol::phase_expression) + "\n\n";
    p += "## Grammar\n" + detail::grammar_text() + "\n";
    p += "## Columns\n";
    for (const auto& c : cols) {
        auto it = std::find_if(schema.begin(), schema.end(), [&](const SchemaEntry& e) { return e.name == c; });
        p += "- " + c + " (" + (it == schema.end() ? std::string("unknown") : std::string(to_string(it->dtype))) + ")\n";
    }
    p += "\n## Features\n";
    p += std::string(prompt_protocol::features_begin) + "\n" + features.dump() + "\n" + std::string(prompt_protocol::features_end) + "\n\n";
    p += "## Response\n";
    p += "Reply with a JSON object only, one entry per feature in the same order:\n";
    p += R"({"expressions": [{"name": "<feature name>", "expression": "<expression>"}]})";
    p += "\n";
    return p;
}

/// Keeps definitions whose source columns all lie in `schema` and whose names
/// are fresh identifiers; caps the list at 12.
inline std::vector<FeatureDefinition> parse_validate_definitions(const ProviderResponse& resp, const std::vector<SchemaEntry>& schema) {
    if (!resp.parsed.is_object() || !resp.parsed.contains("features") || !resp.parsed.at("features").is_array())
        throw ProviderError("definition response has no 'features' array");
    std::set<std::string> allowed, names;
    for (const auto& c : schema) allowed.insert(c.name);
    std::vector<FeatureDefinition> out;
    for (const auto& f : resp.parsed.at("features")) {
        FeatureDefinition d;
        try {
            d.name = f.at("name").get<std::string>();
            d.source_columns = f.at("source_columns").get<std::vector<std::string>>();
            d.logic_description = f.value("logic_description", "");
        } catch (const nlohmann::json::exception&) {
            log_warning("dropping malformed feature definition");
            continue;
        }
        if (!detail::is_identifier(d.name) || allowed.contains(d.name)) {
            log_warning("dropping feature '" + d.name + "': name is not a fresh identifier");
            continue;
        }
        if (d.source_columns.empty()) {
            log_warning("dropping feature '" + d.name + "': no source columns");
            continue;
        }
        auto bad = std::find_if(d.source_columns.begin(), d.source_columns.end(), [&](const std::string& c) { return !allowed.contains(c); });
        if (bad != d.source_columns.end()) {
            log_warning("dropping feature '" + d.name + "': column '" + *bad + "' is unknown or not allowed");
            continue;
        }
        if (!names.insert(d.name).second) {
            log_warning("dropping duplicate feature name '" + d.name + "'");
            continue;
        }
        if (out.size() == max_features_per_run) {
            log_warning("feature cap reached; dropping '" + d.name + "'");
            continue;
        }
        d.status = FeatureStatus::validated;
        out.push_back(std::move(d));
    }
    if (out.empty()) throw ValidationError("no valid feature definitions in the provider response");
    return out;
}

/// Parse and type-check `text` against the definition's source columns only.
/// Sets the status; throws on failure.
inline dsl::Expression compile_expression(FeatureDefinition& def, const std::string& text, const std::vector<SchemaEntry>& schema) {
    def.expression = text;
    def.status = FeatureStatus::failed;
    if (std::find(def.source_columns.begin(), def.source_columns.end(), std::string()) != def.source_columns.end())
        throw ValidationError("feature '" + def.name + "' has an empty source column");
    dsl::ColumnTypes visible;
    for (const auto& c : def.source_columns) {
        auto it = std::find_if(schema.begin(), schema.end(), [&](const SchemaEntry& e) { return e.name == c; });
        if (it == schema.end()) throw ValidationError("feature '" + def.name + "': unknown source column '" + c + "'");
        visible.emplace(c, it->dtype);
    }
    auto expr = dsl::Expression::compile(text, visible);
    if (expr.type() == dsl::Type::string) throw dsl::TypeError("feature '" + def.name + "' evaluates to a string");
    def.status = FeatureStatus::expression_ready;
    return expr;
}

struct SynthFeature {
    FeatureDefinition definition;
    dsl::Expression expression;
};

/// Appends one numeric column per feature over `rows` of `table`, missing
/// coerced to 0, plus a "<name>__missing" indicator when any row was missing.
inline void evaluate_features(const Table& table, std::span<const std::size_t> rows, const std::vector<SynthFeature>& features,
                              FeatureMatrix& out) {
    for (const auto& f : features) {
        if (f.definition.status != FeatureStatus::expression_ready) throw ValidationError("feature '" + f.definition.name + "' is not expression_ready");
        const auto bound = f.expression.bind(table);
        std::vector<double> values(rows.size()), missing(rows.size());
        bool any_missing = false;
        for (std::size_t i = 0; i < rows.size(); ++i) {
            const auto v = bound.number(rows[i]);
            if (v && std::isfinite(*v)) {
                values[i] = *v;
            } else {
                missing[i] = 1.0;
                any_missing = true;
            }
        }
        out.add_numeric(f.definition.name, std::move(values));
        if (any_missing) out.add_numeric(f.definition.name + "__missing", std::move(missing));
    }
}

struct SynthesisResult {
    SynthTask task = SynthTask::intervention;
    std::vector<FeatureDefinition> definitions; ///< every validated definition with its final status
    std::vector<SynthFeature> features;         ///< expression_ready subset
};

/// Two provider round trips: definitions, then expressions.
inline SynthesisResult synthesize_features(const InsightSummary& summary, const std::vector<SchemaEntry>& schema, SynthTask task,
                                           Provider& provider, AuditLog* audit, const CallOptions& opt = {}) {
    SynthesisResult out;
    out.task = task;
    const auto def_resp = call_provider(provider, build_definition_prompt(summary, schema, task), audit, "features", opt);
    out.definitions = parse_validate_definitions(def_resp, schema);

    const auto expr_resp = call_provider(provider, build_expression_prompt(out.definitions, schema), audit, "expressions", opt);
    if (!expr_resp.parsed.at("expressions").is_array()) throw ProviderError("expression response has no 'expressions' array");
    std::map<std::string, std::string> by_name;
    for (const auto& e : expr_resp.parsed.at("expressions")) {
        if (!e.is_object() || !e.contains("name") || !e.contains("expression") || !e.at("name").is_string() || !e.at("expression").is_string())
            continue;
        by_name.emplace(e.at("name").get<std::string>(), e.at("expression").get<std::string>());
    }
    for (auto& d : out.definitions) {
        auto it = by_name.find(d.name);
        if (it == by_name.end()) {
            d.status = FeatureStatus::failed;
            log_warning("no expression returned for feature '" + d.name + "'");
            continue;
        }
        try {
            auto expr = compile_expression(d, it->second, schema);
            out.features.push_back({d, std::move(expr)});
        } catch (const ValidationError& e) {
            log_warning("feature '" + d.name + "' failed to compile: " + e.what());
        }
    }
    if (out.features.empty()) throw StageError("synthesize", "every proposed feature failed to compile");
    return out;
}

/// Persisted definitions document.
inline nlohmann::json to_json_document(const SynthesisResult& r) {
    return {{"task", to_string(r.task)}, {"definitions", r.definitions}};
}

/// Rebuilds the ready features from a persisted document.
inline SynthesisResult synthesis_from_json(const nlohmann::json& j, const std::vector<SchemaEntry>& schema) {
    SynthesisResult r;
    r.task = parse_synth_task(j.at("task").get<std::string>());
    r.definitions = j.at("definitions").get<std::vector<FeatureDefinition>>();
    for (auto& d : r.definitions) {
        if (d.status != FeatureStatus::expression_ready || !d.expression) continue;
        auto copy = d;
        auto expr = compile_expression(copy, *d.expression, schema);
        r.features.push_back({copy, std::move(expr)});
    }
    return r;
}

} // namespace sifotl

#endif // SIFOTL_SYNTH_HPP
