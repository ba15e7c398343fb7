#ifndef SIFOTL_BENCHGEN_HPP
#define SIFOTL_BENCHGEN_HPP

// Synthetic EHR-like benchmark: a seeded base table, planted interventions and
// injected observational noise, with per-row ground truth.

#include <sifotl/detail/csv.hpp>
#include <sifotl/detail/rng.hpp>
#include <sifotl/dsl.hpp>
#include <sifotl/noise_rules.hpp>
#include <sifotl/table.hpp>

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <string>
#include <unordered_map>
#include <vector>

namespace sifotl::bench {

inline const std::vector<std::string>& counties() {
    static const std::vector<std::string> v{"Barnstable", "Berkshire", "Bristol",   "Dukes",   "Essex",   "Franklin", "Hampden",
                                            "Hampshire",  "Middlesex", "Nantucket", "Norfolk", "Plymouth", "Suffolk",  "Worcester"};
    return v;
}

inline const std::vector<std::string>& reasons() {
    static const std::vector<std::string> v{"Acute bronchitis",
                                            "Viral sinusitis",
                                            "Hypertension",
                                            "Diabetes",
                                            "Chronic pain",
                                            "Otitis media",
                                            "Sprain of ankle",
                                            "Streptococcal sore throat",
                                            "Normal pregnancy",
                                            "Osteoarthritis of knee",
                                            "Hyperlipidemia",
                                            "Asthma",
                                            "Chronic obstructive bronchitis",
                                            "Coronary heart disease",
                                            "Concussion",
                                            "Laceration of hand",
                                            "Fracture of forearm",
                                            "Anemia",
                                            "Migraine",
                                            "Routine checkup"};
    return v;
}

struct Categorical {
    std::vector<std::string> levels;
    std::vector<double> weights;
};

/// Generator distributions; defaults give desk-scale planted segments of a
/// few percent for the shipped presets.
struct BaseTableConfig {
    int age_min = 18;
    int age_max = 90;
    Categorical gender{{"F", "M"}, {0.5, 0.5}};
    Categorical marital{{"M", "S", "D", "W"}, {0.5, 0.3, 0.15, 0.05}};
    Categorical county{counties(), {0.03, 0.02, 0.08, 0.01, 0.11, 0.01, 0.07, 0.02, 0.23, 0.01, 0.10, 0.08, 0.11, 0.12}};
    Categorical payer{{"Medicare", "Medicaid", "Blue Cross Blue Shield", "UnitedHealthcare", "Aetna", "NO_INSURANCE"},
                      {0.30, 0.15, 0.20, 0.15, 0.10, 0.10}};
    std::vector<double> payer_coverage_ratio{0.8, 0.9, 0.7, 0.7, 0.65, 0.0};
    Categorical encounter{{"ambulatory", "wellness", "outpatient", "emergency", "inpatient", "urgentcare", "home"},
                          {0.35, 0.20, 0.15, 0.10, 0.08, 0.07, 0.05}};
    std::vector<double> encounter_cost_median{120, 90, 200, 600, 2500, 180, 150};
    Categorical reason{reasons(), std::vector<double>(reasons().size(), 1.0)};
    double income_median = 110000.0;
    double income_sigma = 0.6;
    double cost_sigma = 0.4;
};

inline void to_json(nlohmann::json& j, const Categorical& c) { j = nlohmann::json{{"levels", c.levels}, {"weights", c.weights}}; }
inline void from_json(const nlohmann::json& j, Categorical& c) {
    c.levels = j.at("levels").get<std::vector<std::string>>();
    c.weights = j.at("weights").get<std::vector<double>>();
    if (c.levels.empty() || c.levels.size() != c.weights.size()) throw ValidationError("categorical distribution: levels and weights differ");
}

inline std::vector<ColumnSchema> base_schema(const std::string& target = "TOTAL_CLAIM_COST") {
    std::vector<ColumnSchema> s{
        {"PATIENT_ID", DType::categorical, Role::key},
        {"AGE", DType::numeric, Role::feature},
        {"GENDER", DType::categorical, Role::quasi_identifier},
        {"MARITAL", DType::categorical, Role::feature},
        {"COUNTY", DType::categorical, Role::feature},
        {"PAYER_NAME", DType::categorical, Role::feature},
        {"ENCOUNTERCLASS", DType::categorical, Role::feature},
        {"REASONDESCRIPTION", DType::categorical, Role::feature},
        {"TOT_INCOME", DType::numeric, Role::feature},
        {"TOTSLFY", DType::numeric, Role::feature},
        {"BASE_COST", DType::numeric, Role::feature},
        {"PAYER_COVERAGE", DType::numeric, Role::feature},
        {"TOTAL_CLAIM_COST", DType::numeric, Role::feature},
    };
    bool found = false;
    for (auto& c : s)
        if (c.name == target) {
            if (c.dtype != DType::numeric) throw ValidationError("benchmark target must be a numeric column");
            c.role = Role::target_metric;
            found = true;
        }
    if (!found) throw ValidationError("unknown benchmark target column '" + target + "'");
    return s;
}

inline double round_to(double v, double unit) { return std::round(v / unit) * unit; }

inline Table generate_base_table(std::size_t n_rows, std::uint64_t seed, const BaseTableConfig& cfg = {},
                                 const std::string& target = "TOTAL_CLAIM_COST") {
    if (n_rows < 100) throw ValidationError("generate_base_table: need at least 100 rows");
    if (cfg.payer_coverage_ratio.size() != cfg.payer.levels.size() || cfg.encounter_cost_median.size() != cfg.encounter.levels.size())
        throw ValidationError("generate_base_table: per-level parameter lists do not match their categoricals");
    detail::Rng rng(seed);
    Table t(base_schema(target));
    std::vector<Cell> row(t.cols());
    char key[32];
    for (std::size_t i = 0; i < n_rows; ++i) {
        std::snprintf(key, sizeof key, "P%06zu", i + 1);
        const auto age = cfg.age_min + static_cast<int>(rng.index(static_cast<std::size_t>(cfg.age_max - cfg.age_min + 1)));
        const auto g = rng.categorical(cfg.gender.weights);
        const auto m = rng.categorical(cfg.marital.weights);
        const auto c = rng.categorical(cfg.county.weights);
        const auto p = rng.categorical(cfg.payer.weights);
        const auto e = rng.categorical(cfg.encounter.weights);
        const auto r = rng.categorical(cfg.reason.weights);
        const double income = round_to(cfg.income_median * std::exp(rng.normal(0.0, cfg.income_sigma)), 1.0);
        const double slfy = round_to(income * rng.uniform(0.5, 1.5), 1.0);
        const double base = std::max(1.0, round_to(cfg.encounter_cost_median[e] * std::exp(rng.normal(0.0, cfg.cost_sigma)), 0.01));
        const double coverage = round_to(base * cfg.payer_coverage_ratio[p] * rng.uniform(0.9, 1.1), 0.01);
        const double total = round_to(base * rng.uniform(1.0, 1.8), 0.01);
        row = {std::string(key),
               static_cast<double>(age),
               cfg.gender.levels[g],
               cfg.marital.levels[m],
               cfg.county.levels[c],
               cfg.payer.levels[p],
               cfg.encounter.levels[e],
               cfg.reason.levels[r],
               income,
               slfy,
               base,
               coverage,
               total};
        t.append_row(row);
    }
    return t;
}

/// Per-row truth, aligned with a table's rows.
struct GroundTruth {
    std::vector<std::string> keys;
    std::vector<std::uint8_t> intervention;
    std::vector<std::uint8_t> noise;
    std::vector<std::vector<std::string>> mechanisms;

    std::size_t size() const { return keys.size(); }

    static GroundTruth blank(const Table& t) {
        GroundTruth g;
        for (std::size_t r = 0; r < t.rows(); ++r) g.keys.push_back(t.key(r));
        g.intervention.assign(t.rows(), 0);
        g.noise.assign(t.rows(), 0);
        g.mechanisms.assign(t.rows(), {});
        return g;
    }

    void append(std::string key, std::uint8_t interv, std::uint8_t noisy, std::vector<std::string> mech) {
        keys.push_back(std::move(key));
        intervention.push_back(interv);
        noise.push_back(noisy);
        mechanisms.push_back(std::move(mech));
    }

    std::string to_csv() const {
        std::string out = "key,intervention_flag,noise_flag,mechanisms\n";
        for (std::size_t i = 0; i < keys.size(); ++i) {
            std::string m;
            for (std::size_t k = 0; k < mechanisms[i].size(); ++k) m += (k ? ";" : "") + mechanisms[i][k];
            detail::append_csv_record(out, {keys[i], intervention[i] ? "1" : "0", noise[i] ? "1" : "0", m});
        }
        return out;
    }

    static GroundTruth from_csv(std::string_view text) {
        const auto recs = detail::parse_csv(text);
        if (recs.empty() || recs[0].size() < 3 || recs[0][0] != "key") throw ValidationError("ground-truth CSV: bad header");
        GroundTruth g;
        for (std::size_t i = 1; i < recs.size(); ++i) {
            const auto& r = recs[i];
            if (r.size() == 1 && r[0].empty()) continue;
            if (r.size() < 3) throw ValidationError("ground-truth CSV: short record " + std::to_string(i + 1));
            std::vector<std::string> mech;
            if (r.size() > 3 && !r[3].empty()) {
                std::string cur;
                for (char ch : r[3]) {
                    if (ch == ';') {
                        mech.push_back(cur);
                        cur.clear();
                    } else {
                        cur += ch;
                    }
                }
                mech.push_back(cur);
            }
            g.append(r[0], r[1] == "1", r[2] == "1", std::move(mech));
        }
        return g;
    }
};

enum class InterventionKind { multiply, scale, add_gaussian, zero_with_prob };

inline std::string_view to_string(InterventionKind k) {
    switch (k) {
    case InterventionKind::multiply: return "multiply";
    case InterventionKind::scale: return "scale";
    case InterventionKind::add_gaussian: return "add_gaussian";
    case InterventionKind::zero_with_prob: return "zero_with_prob";
    }
    return "?";
}

inline InterventionKind parse_intervention_kind(std::string_view s) {
    for (auto k : {InterventionKind::multiply, InterventionKind::scale, InterventionKind::add_gaussian, InterventionKind::zero_with_prob})
        if (to_string(k) == s) return k;
    throw ValidationError("unknown intervention mechanism: " + std::string(s));
}

struct InterventionSpec {
    std::string name;
    std::string predicate;
    InterventionKind kind = InterventionKind::multiply;
    std::string column;
    double factor = 1.0;  ///< multiply / scale
    double sigma = 0.0;   ///< add_gaussian
    double p_clean = 1.0; ///< zero_with_prob, row not noisy
    double p_noisy = 1.0; ///< zero_with_prob, row noisy
    std::uint64_t seed = 0;
};

inline void to_json(nlohmann::json& j, const InterventionSpec& s) {
    j = nlohmann::json{{"name", s.name}, {"predicate", s.predicate}, {"mechanism", to_string(s.kind)}, {"column", s.column}, {"seed", s.seed}};
    switch (s.kind) {
    case InterventionKind::multiply:
    case InterventionKind::scale: j["factor"] = s.factor; break;
    case InterventionKind::add_gaussian: j["sigma"] = s.sigma; break;
    case InterventionKind::zero_with_prob:
        j["p_clean"] = s.p_clean;
        j["p_noisy"] = s.p_noisy;
        break;
    }
}

inline void from_json(const nlohmann::json& j, InterventionSpec& s) {
    s.name = j.at("name").get<std::string>();
    s.predicate = j.at("predicate").get<std::string>();
    s.kind = parse_intervention_kind(j.at("mechanism").get<std::string>());
    s.column = j.at("column").get<std::string>();
    s.factor = j.value("factor", 1.0);
    s.sigma = j.value("sigma", 0.0);
    s.p_clean = j.value("p_clean", 1.0);
    s.p_noisy = j.value("p_noisy", 1.0);
    s.seed = j.value("seed", std::uint64_t{0});
}

namespace detail {

inline std::vector<std::uint8_t> predicate_rows(const Table& t, const std::string& predicate) {
    const auto types = dsl::column_types(t.schema(), {Role::key, Role::ground_truth});
    const auto expr = dsl::Expression::compile_predicate(predicate, types);
    const auto bound = expr.bind(t);
    std::vector<std::uint8_t> out(t.rows());
    for (std::size_t r = 0; r < t.rows(); ++r) out[r] = bound.truthy(r) ? 1 : 0;
    return out;
}

} // namespace detail

struct InterventionResult {
    Table test;
    GroundTruth truth;
};

/// Clone `control` and apply the mechanism to predicate-matching rows. The
/// predicate reads control values. `noisy` (aligned with control rows)
/// selects p_noisy for zero_with_prob.
inline InterventionResult apply_intervention(const Table& control, const InterventionSpec& spec,
                                             std::span<const std::uint8_t> noisy = {}) {
    if (!noisy.empty() && noisy.size() != control.rows()) throw ValidationError("apply_intervention: noise flags do not match the table");
    const auto match = detail::predicate_rows(control, spec.predicate);
    const auto c = control.column_index(spec.column);
    if (control.schema()[c].dtype != DType::numeric) throw ValidationError("intervention column '" + spec.column + "' must be numeric");

    InterventionResult out{control, GroundTruth::blank(control)};
    sifotl::detail::Rng rng(spec.seed);
    std::size_t matched = 0;
    for (std::size_t r = 0; r < control.rows(); ++r) {
        if (!match[r]) continue;
        ++matched;
        if (control.is_missing(c, r)) continue;
        const double v = control.number(c, r);
        bool flag = true;
        switch (spec.kind) {
        case InterventionKind::multiply:
        case InterventionKind::scale: out.test.set_number(c, r, v * spec.factor); break;
        case InterventionKind::add_gaussian: out.test.set_number(c, r, v + rng.normal(0.0, spec.sigma)); break;
        case InterventionKind::zero_with_prob: {
            const double p = (!noisy.empty() && noisy[r]) ? spec.p_noisy : spec.p_clean;
            flag = rng.bernoulli(p);
            if (flag) out.test.set_number(c, r, 0.0);
            break;
        }
        }
        // a zero value scaled or zeroed stays put; unchanged rows are not truth
        if (flag && out.test.number(c, r) != v) {
            out.truth.intervention[r] = 1;
            out.truth.mechanisms[r].push_back(spec.name);
        }
    }
    if (matched == 0) log_warning("intervention '" + spec.name + "' matched zero rows");
    return out;
}

struct NoiseSpec {
    std::string name;
    NoiseMechanism mechanism = NoiseMechanism::outlier_multiple;
    std::string column;       ///< unused for duplicate-row
    double rate_lo = 0.05;
    double rate_hi = 0.10;
    std::string predicate = "true";
    double factor_lo = 3.0;   ///< outlier-multiple
    double factor_hi = 5.0;
    double granularity = 10.0; ///< suspicious-rounding
    std::uint64_t seed = 0;
};

inline void to_json(nlohmann::json& j, const NoiseSpec& s) {
    j = nlohmann::json{{"name", s.name},
                       {"mechanism", to_string(s.mechanism)},
                       {"column", s.column},
                       {"rate_range", {s.rate_lo, s.rate_hi}},
                       {"predicate", s.predicate},
                       {"seed", s.seed}};
    if (s.mechanism == NoiseMechanism::outlier_multiple) j["factor_range"] = {s.factor_lo, s.factor_hi};
    if (s.mechanism == NoiseMechanism::suspicious_rounding) j["granularity"] = s.granularity;
}

inline void from_json(const nlohmann::json& j, NoiseSpec& s) {
    s.name = j.at("name").get<std::string>();
    s.mechanism = parse_noise_mechanism(j.at("mechanism").get<std::string>());
    s.column = j.value("column", "");
    const auto rate = j.at("rate_range").get<std::array<double, 2>>();
    s.rate_lo = rate[0];
    s.rate_hi = rate[1];
    s.predicate = j.value("predicate", "true");
    if (j.contains("factor_range")) {
        const auto f = j.at("factor_range").get<std::array<double, 2>>();
        s.factor_lo = f[0];
        s.factor_hi = f[1];
    }
    s.granularity = j.value("granularity", 10.0);
    s.seed = j.value("seed", std::uint64_t{0});
    if (!(s.rate_lo >= 0.0) || s.rate_hi < s.rate_lo || s.rate_hi > 1.0) throw ValidationError("noise spec '" + s.name + "': bad rate range");
}

namespace detail {

// Two adjacent characters swapped and the whole string upper-cased.
inline std::string corrupt_text(const std::string& s, std::size_t pos) {
    std::string out = s;
    if (out.size() >= 2) std::swap(out[pos % (out.size() - 1)], out[pos % (out.size() - 1) + 1]);
    for (auto& ch : out) ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
    if (out == s) out += "#";
    return out;
}

} // namespace detail

struct NoiseResult {
    Table noisy;
    GroundTruth truth;
    std::vector<std::size_t> targeted; ///< rows selected per spec, in spec order
};

/// Applies every spec in order. Eligibility is evaluated on the original
/// rows of the table as it stands before that spec; appended duplicates are
/// never re-targeted. `prior` carries intervention truth forward.
inline NoiseResult inject_noise(const Table& test, const std::vector<NoiseSpec>& specs, const GroundTruth* prior = nullptr) {
    NoiseResult out{test, prior ? *prior : GroundTruth::blank(test), {}};
    if (out.truth.size() != test.rows()) throw ValidationError("inject_noise: prior truth does not match the table");
    const std::size_t original_rows = test.rows();
    std::size_t dup_counter = 0;

    for (const auto& spec : specs) {
        const auto eligible_mask = detail::predicate_rows(out.noisy, spec.predicate);
        std::vector<std::size_t> eligible;
        for (std::size_t r = 0; r < original_rows; ++r)
            if (eligible_mask[r]) eligible.push_back(r);
        sifotl::detail::Rng rng(spec.seed);
        const double rate = rng.uniform(spec.rate_lo, spec.rate_hi);
        const auto e = static_cast<double>(eligible.size());
        auto count = static_cast<std::size_t>(std::llround(rate * e));
        count = std::clamp(count, static_cast<std::size_t>(std::ceil(spec.rate_lo * e - 1e-9)),
                           static_cast<std::size_t>(std::floor(spec.rate_hi * e + 1e-9)));
        count = std::min(count, eligible.size());
        rng.shuffle(eligible);
        eligible.resize(count);
        std::sort(eligible.begin(), eligible.end());
        out.targeted.push_back(count);

        const std::string mech(to_string(spec.mechanism));
        std::size_t col = 0;
        if (spec.mechanism != NoiseMechanism::duplicate_row) col = out.noisy.column_index(spec.column);
        const bool numeric = spec.mechanism != NoiseMechanism::duplicate_row && spec.mechanism != NoiseMechanism::text_anomaly &&
                             spec.mechanism != NoiseMechanism::missing_value;
        if (numeric && out.noisy.schema()[col].dtype != DType::numeric) throw ValidationError("noise spec '" + spec.name + "' needs a numeric column");
        if (spec.mechanism == NoiseMechanism::text_anomaly && !out.noisy.schema()[col].is_textual())
            throw ValidationError("noise spec '" + spec.name + "' needs a categorical/text column");

        auto mark = [&](std::size_t r) {
            out.truth.noise[r] = 1;
            out.truth.mechanisms[r].push_back(mech);
        };

        for (auto r : eligible) {
            switch (spec.mechanism) {
            case NoiseMechanism::duplicate_row: {
                auto cells = out.noisy.row_cells(r);
                char key[32];
                std::snprintf(key, sizeof key, "D%06zu", ++dup_counter);
                cells[out.noisy.key_index()] = std::string(key);
                out.noisy.append_row(cells);
                out.truth.append(key, out.truth.intervention[r], 1, {mech});
                break;
            }
            case NoiseMechanism::outlier_multiple: {
                if (out.noisy.is_missing(col, r)) break;
                const double v = out.noisy.number(col, r);
                const double nv = v * rng.uniform(spec.factor_lo, spec.factor_hi);
                if (nv == v) break;
                out.noisy.set_number(col, r, nv);
                mark(r);
                break;
            }
            case NoiseMechanism::missing_value:
                if (out.noisy.is_missing(col, r)) break;
                out.noisy.set_missing(col, r);
                mark(r);
                break;
            case NoiseMechanism::suspicious_rounding: {
                if (out.noisy.is_missing(col, r)) break;
                const double v = out.noisy.number(col, r);
                const double nv = round_to(v, spec.granularity);
                if (nv == v) break;
                out.noisy.set_number(col, r, nv);
                mark(r);
                break;
            }
            case NoiseMechanism::zero_value: {
                if (out.noisy.is_missing(col, r) || out.noisy.number(col, r) == 0.0) break;
                out.noisy.set_number(col, r, 0.0);
                mark(r);
                break;
            }
            case NoiseMechanism::text_anomaly: {
                if (out.noisy.is_missing(col, r)) break;
                out.noisy.set_label(col, r, detail::corrupt_text(out.noisy.label(col, r), rng.index(64)));
                mark(r);
                break;
            }
            }
        }
    }
    return out;
}

enum class NoiseLevel { n0, n1, n2 };

inline NoiseLevel parse_noise_level(std::string_view s) {
    if (s == "N0" || s == "n0") return NoiseLevel::n0;
    if (s == "N1" || s == "n1") return NoiseLevel::n1;
    if (s == "N2" || s == "n2") return NoiseLevel::n2;
    throw ValidationError("unknown noise level: " + std::string(s));
}

inline std::string_view to_string(NoiseLevel l) { return l == NoiseLevel::n0 ? "N0" : l == NoiseLevel::n1 ? "N1" : "N2"; }

/// A complete scenario: intervention, noise specs, the target column and the
/// inferred-noise rules a run should use.
struct Scenario {
    std::string name;
    std::string target;
    InterventionSpec intervention;
    std::vector<NoiseSpec> noise;
    std::vector<NoiseRule> rules;
    bool noise_before_intervention = false; ///< zero_with_prob reads row noise status
};

inline void to_json(nlohmann::json& j, const Scenario& s) {
    j = nlohmann::json{{"name", s.name},
                       {"target", s.target},
                       {"intervention", s.intervention},
                       {"noise", s.noise},
                       {"rules", s.rules},
                       {"noise_before_intervention", s.noise_before_intervention}};
}

inline void from_json(const nlohmann::json& j, Scenario& s) {
    s.name = j.at("name").get<std::string>();
    s.target = j.at("target").get<std::string>();
    s.intervention = j.at("intervention").get<InterventionSpec>();
    s.noise = j.value("noise", std::vector<NoiseSpec>{});
    s.rules = j.value("rules", std::vector<NoiseRule>{});
    s.noise_before_intervention = j.value("noise_before_intervention", false);
}

namespace detail {

inline NoiseRule rule(std::string name, NoiseMechanism m, nlohmann::json params) { return NoiseRule{std::move(name), m, std::move(params), std::nullopt}; }

inline nlohmann::json reason_whitelist() { return reasons(); }

} // namespace detail

/// Shipped presets: T1, T2, T3 and a MEPS-style zeroing scenario, each at
/// noise level N0 (none), N1 (5-10 % per mechanism) or N2 (10-15 %).
inline Scenario preset(std::string_view name, NoiseLevel level, std::uint64_t seed) {
    Scenario s;
    const double lo = level == NoiseLevel::n1 ? 0.05 : 0.10;
    const double hi = level == NoiseLevel::n1 ? 0.10 : 0.15;
    auto noise = [&](std::string nm, NoiseMechanism m, std::string col, std::string pred, std::uint64_t k) {
        NoiseSpec n;
        n.name = std::move(nm);
        n.mechanism = m;
        n.column = std::move(col);
        n.predicate = std::move(pred);
        n.rate_lo = lo;
        n.rate_hi = hi;
        n.seed = seed * 1000 + k;
        return n;
    };
    const std::string t1_noise_scope =
        "ENCOUNTERCLASS in {'emergency', 'urgentcare', 'inpatient', 'outpatient'} or "
        "REASONDESCRIPTION in {'Acute bronchitis', 'Viral sinusitis', 'Chronic pain', 'Concussion', 'Laceration of hand', 'Migraine'}";

    if (name == "T1") {
        s = {"T1", "TOTAL_CLAIM_COST",
             {"T1", "TOT_INCOME >= 150000 and AGE > 59 and TOTSLFY >= 100000 and PAYER_NAME == 'Medicare'", InterventionKind::multiply,
              "TOTAL_CLAIM_COST", 1.2, 0, 1, 1, seed * 1000 + 1},
             {},
             {detail::rule("dup", NoiseMechanism::duplicate_row, nlohmann::json::object()),
              detail::rule("claim_outlier", NoiseMechanism::outlier_multiple, {{"column", "TOTAL_CLAIM_COST"}, {"threshold", 3.0}})},
             false};
        if (level != NoiseLevel::n0) {
            s.noise.push_back(noise("duplicates", NoiseMechanism::duplicate_row, "", t1_noise_scope, 11));
            s.noise.push_back(noise("claim_outliers", NoiseMechanism::outlier_multiple, "TOTAL_CLAIM_COST", t1_noise_scope, 12));
        }
    } else if (name == "T2") {
        s = {"T2", "PAYER_COVERAGE",
             {"T2",
              "GENDER == 'M' and COUNTY in {'Barnstable', 'Berkshire', 'Franklin', 'Hampshire', 'Dukes', 'Nantucket'} and "
              "ENCOUNTERCLASS in {'ambulatory', 'wellness', 'home'}",
              InterventionKind::scale, "PAYER_COVERAGE", 0.7, 0, 1, 1, seed * 1000 + 1},
             {},
             {detail::rule("coverage_missing", NoiseMechanism::missing_value, {{"columns", {"PAYER_COVERAGE"}}}),
              detail::rule("coverage_rounding", NoiseMechanism::suspicious_rounding, {{"column", "PAYER_COVERAGE"}, {"granularity", 10.0}})},
             false};
        if (level != NoiseLevel::n0) {
            s.noise.push_back(noise("coverage_missing", NoiseMechanism::missing_value, "PAYER_COVERAGE",
                                    "PAYER_NAME in {'Medicaid', 'Aetna', 'UnitedHealthcare'} or MARITAL == 'W'", 11));
            auto r = noise("coverage_rounding", NoiseMechanism::suspicious_rounding, "PAYER_COVERAGE",
                           "PAYER_NAME in {'Blue Cross Blue Shield', 'Medicare'} and MARITAL in {'M', 'S'}", 12);
            r.granularity = 10.0;
            s.noise.push_back(r);
        }
    } else if (name == "T3") {
        s = {"T3", "BASE_COST",
             {"T3", "MARITAL == 'D' and GENDER == 'M' and AGE > 40", InterventionKind::add_gaussian, "BASE_COST", 1, 30, 1, 1, seed * 1000 + 1},
             {},
             {detail::rule("base_zero", NoiseMechanism::zero_value, {{"column", "BASE_COST"}}),
              detail::rule("reason_text", NoiseMechanism::text_anomaly, {{"column", "REASONDESCRIPTION"}, {"whitelist", detail::reason_whitelist()}})},
             false};
        if (level != NoiseLevel::n0) {
            s.noise.push_back(noise("base_zero", NoiseMechanism::zero_value, "BASE_COST", "ENCOUNTERCLASS in {'ambulatory', 'outpatient', 'urgentcare'}", 11));
            s.noise.push_back(noise("reason_text", NoiseMechanism::text_anomaly, "REASONDESCRIPTION",
                                    "ENCOUNTERCLASS in {'wellness', 'emergency'} or REASONDESCRIPTION in {'Hypertension', 'Asthma', 'Anemia'}", 12));
        }
    } else if (name == "MEPS") {
        s = {"MEPS", "TOTSLFY",
             {"MEPS", "AGE >= 55 and PAYER_NAME == 'Medicare' and REASONDESCRIPTION in {'Diabetes', 'Hypertension', 'Coronary heart disease'} and TOT_INCOME < 120000 and TOTSLFY > 0",
              InterventionKind::zero_with_prob, "TOTSLFY", 1, 0, 0.9, 0.3, seed * 1000 + 1},
             {},
             {detail::rule("base_zero", NoiseMechanism::zero_value, {{"column", "BASE_COST"}}), detail::rule("dup", NoiseMechanism::duplicate_row, nlohmann::json::object())},
             true};
        if (level != NoiseLevel::n0)
            s.noise.push_back(noise("base_zero", NoiseMechanism::zero_value, "BASE_COST", "ENCOUNTERCLASS in {'ambulatory', 'wellness', 'emergency'}", 11));
    } else {
        throw ValidationError("unknown preset '" + std::string(name) + "' (expected T1, T2, T3 or MEPS)");
    }
    s.name = std::string(name) + "-" + std::string(to_string(level));
    return s;
}

struct Benchmark {
    Table control;
    Table test;
    GroundTruth truth; ///< aligned with test rows
    Scenario scenario;
};

/// Base table, then intervention and noise in the scenario's order.
inline Benchmark build_benchmark(const Scenario& sc, std::size_t n_rows, std::uint64_t seed, const BaseTableConfig& cfg = {}) {
    Benchmark b;
    b.scenario = sc;
    b.control = generate_base_table(n_rows, seed, cfg, sc.target);
    if (sc.noise_before_intervention) {
        // Noise status has to exist before the intervention reads it; the
        // noisy clone is the starting point of the test table.
        auto noised = inject_noise(b.control, sc.noise);
        std::vector<std::uint8_t> flags(b.control.rows());
        for (std::size_t r = 0; r < b.control.rows(); ++r) flags[r] = noised.truth.noise[r];
        Table original_rows(b.control.schema());
        for (std::size_t r = 0; r < b.control.rows(); ++r) original_rows.append_row(noised.noisy.row_cells(r));
        auto iv = apply_intervention(original_rows, sc.intervention, flags);
        b.test = std::move(iv.test);
        for (std::size_t r = b.control.rows(); r < noised.noisy.rows(); ++r) b.test.append_row(noised.noisy.row_cells(r));
        b.truth = noised.truth;
        for (std::size_t r = 0; r < b.control.rows(); ++r) {
            b.truth.intervention[r] = iv.truth.intervention[r];
            if (iv.truth.intervention[r]) b.truth.mechanisms[r].push_back(sc.intervention.name);
        }
    } else {
        auto iv = apply_intervention(b.control, sc.intervention);
        auto noised = inject_noise(iv.test, sc.noise, &iv.truth);
        b.test = std::move(noised.noisy);
        b.truth = std::move(noised.truth);
    }
    return b;
}

} // namespace sifotl::bench

#endif // SIFOTL_BENCHGEN_HPP
