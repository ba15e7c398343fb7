#ifndef SIFOTL_PIPELINE_HPP
#define SIFOTL_PIPELINE_HPP

// End-to-end orchestration from one declarative config. Each stage reads the
// persisted artifacts of the previous one; every artifact carries the config
// hash and is rejected when it does not match the current config.

#include <sifotl/benchgen.hpp>
#include <sifotl/boosting.hpp>
#include <sifotl/eval.hpp>
#include <sifotl/features.hpp>
#include <sifotl/noise_rules.hpp>
#include <sifotl/pareto.hpp>
#include <sifotl/provider.hpp>
#include <sifotl/screen.hpp>
#include <sifotl/synth.hpp>
#include <sifotl/table.hpp>

#include <nlohmann/json.hpp>

#include <filesystem>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace sifotl {

struct ProviderSettings {
    std::string kind = "mock"; ///< mock | http
    std::string responses;     ///< canned-response file for the mock
    bool strict = false;       ///< mock: fail instead of using the offline responder
    int max_retries = 3;
    double initial_backoff_ms = 250.0;
};

struct RunConfig {
    std::string control_path;
    std::string test_path;
    std::string truth_path;
    double tolerance = 1e-9;
    std::vector<ColumnSchema> schema;
    std::optional<std::size_t> min_slice_size; ///< absent = adaptive
    std::optional<std::size_t> k_threshold;    ///< absent = adaptive
    std::optional<std::vector<std::string>> quasi_identifiers; ///< absent = quasi-identifier role columns
    std::size_t n_bins = 10;
    std::vector<NoiseRule> noise_rules;
    ProviderSettings provider;
    GbtConfig model_c;
    GbtConfig model_n;
    double holdout_fraction = 0.2;
    std::vector<double> alpha_grid = default_alpha_grid();
    int max_depth = 5;
    std::array<double, 2> class_weights{1.0, 1.0};
    bool mass_weighted_noise = false;
    bool tree_uses_synth_features = true;
    double tau = 0.8;
    double baseline_q = 0.05;
    std::size_t baseline_max_slices = 10;
    std::uint64_t seed = 7;
    std::string output_dir = "out";
    std::string base_dir = "."; ///< relative paths resolve against this; not part of the hash
    unsigned threads = 0;       ///< not part of the hash

    std::string resolve(const std::string& p) const {
        if (p.empty()) return p;
        std::filesystem::path path(p);
        return path.is_absolute() ? p : (std::filesystem::path(base_dir) / path).lexically_normal().string();
    }

    void validate() const {
        if (control_path.empty() || test_path.empty()) throw ValidationError("config: data.control and data.test are required");
        validate_schema(schema);
        if (n_bins < 2) throw ValidationError("config: screen.n_bins must be >= 2");
        if (alpha_grid.empty()) throw ValidationError("config: search.alpha_grid must not be empty");
        for (double a : alpha_grid)
            if (!(a > 0.0)) throw ValidationError("config: alpha values must be positive");
        if (max_depth < 1) throw ValidationError("config: search.max_depth must be positive");
        if (!(class_weights[0] > 0.0) || !(class_weights[1] > 0.0)) throw ValidationError("config: class weights must be positive");
        if (!(tau > 0.0) || tau > 1.0) throw ValidationError("config: segment.tau must be in (0, 1]");
        if (!(holdout_fraction > 0.0 && holdout_fraction < 1.0)) throw ValidationError("config: holdout_fraction must be in (0, 1)");
        if (provider.kind != "mock" && provider.kind != "http") throw ValidationError("config: provider.kind must be 'mock' or 'http'");
        if (provider.max_retries < 0) throw ValidationError("config: provider.max_retries must be nonnegative");
        model_c.validate();
        model_n.validate();
        if (min_slice_size || k_threshold) AnonymityPolicy{min_slice_size.value_or(2), k_threshold.value_or(2), {}}.validate();
    }

    /// Serialized form; `for_hash` drops fields that do not affect results.
    nlohmann::json to_json(bool for_hash = false) const {
        nlohmann::json anon = nlohmann::json::object();
        anon["min_slice_size"] = min_slice_size ? nlohmann::json(*min_slice_size) : nlohmann::json("adaptive");
        anon["k_threshold"] = k_threshold ? nlohmann::json(*k_threshold) : nlohmann::json("adaptive");
        if (quasi_identifiers) anon["quasi_identifiers"] = *quasi_identifiers;
        nlohmann::json j{
            {"data", {{"control", control_path}, {"test", test_path}, {"truth", truth_path}, {"tolerance", tolerance}}},
            {"schema", schema},
            {"anonymity", anon},
            {"screen", {{"n_bins", n_bins}}},
            {"noise_rules", noise_rules},
            {"provider",
             {{"kind", provider.kind},
              {"responses", provider.responses},
              {"strict", provider.strict},
              {"max_retries", provider.max_retries},
              {"initial_backoff_ms", provider.initial_backoff_ms}}},
            {"model_c", model_c},
            {"model_n", model_n},
            {"holdout_fraction", holdout_fraction},
            {"search",
             {{"alpha_grid", alpha_grid},
              {"max_depth", max_depth},
              {"class_weights", {{"0", class_weights[0]}, {"1", class_weights[1]}}},
              {"mass_weighted_noise", mass_weighted_noise},
              {"tree_uses_synth_features", tree_uses_synth_features}}},
            {"segment", {{"tau", tau}}},
            {"baseline", {{"q_threshold", baseline_q}, {"max_slices", baseline_max_slices}}},
            {"seed", seed},
        };
        if (!for_hash) {
            j["output_dir"] = output_dir;
            j["threads"] = threads;
        }
        return j;
    }

    std::string hash() const { return detail::hash_hex(to_json(true).dump()); }

    static RunConfig from_json(const nlohmann::json& j, std::string base_dir = ".") {
        static const std::set<std::string> known{"data",     "schema", "anonymity", "screen",  "noise_rules", "provider", "model_c", "model_n",
                                                 "holdout_fraction", "search", "segment", "baseline", "seed", "output_dir", "threads"};
        if (!j.is_object()) throw ValidationError("config: top level must be a JSON object");
        for (const auto& [k, v] : j.items())
            if (!known.contains(k)) throw ValidationError("config: unknown key '" + k + "'");
        RunConfig c;
        c.base_dir = std::move(base_dir);
        try {
            const auto& d = j.at("data");
            c.control_path = d.at("control").get<std::string>();
            c.test_path = d.at("test").get<std::string>();
            c.truth_path = d.value("truth", "");
            c.tolerance = d.value("tolerance", 1e-9);
            c.schema = j.at("schema").get<std::vector<ColumnSchema>>();
            if (j.contains("anonymity")) {
                const auto& a = j.at("anonymity");
                auto opt_size = [&](const char* key) -> std::optional<std::size_t> {
                    if (!a.contains(key) || (a.at(key).is_string() && a.at(key) == "adaptive")) return std::nullopt;
                    return a.at(key).get<std::size_t>();
                };
                c.min_slice_size = opt_size("min_slice_size");
                c.k_threshold = opt_size("k_threshold");
                if (a.contains("quasi_identifiers")) c.quasi_identifiers = a.at("quasi_identifiers").get<std::vector<std::string>>();
            }
            if (j.contains("screen")) c.n_bins = j.at("screen").value("n_bins", c.n_bins);
            c.noise_rules = j.value("noise_rules", std::vector<NoiseRule>{});
            if (j.contains("provider")) {
                const auto& p = j.at("provider");
                c.provider.kind = p.value("kind", c.provider.kind);
                c.provider.responses = p.value("responses", "");
                c.provider.strict = p.value("strict", false);
                c.provider.max_retries = p.value("max_retries", c.provider.max_retries);
                c.provider.initial_backoff_ms = p.value("initial_backoff_ms", c.provider.initial_backoff_ms);
            }
            c.seed = j.value("seed", c.seed);
            c.model_c.seed = c.model_n.seed = c.seed;
            if (j.contains("model_c")) {
                auto m = j.at("model_c");
                if (!m.contains("seed")) m["seed"] = c.seed;
                c.model_c = m.get<GbtConfig>();
            }
            if (j.contains("model_n")) {
                auto m = j.at("model_n");
                if (!m.contains("seed")) m["seed"] = c.seed;
                c.model_n = m.get<GbtConfig>();
            }
            c.holdout_fraction = j.value("holdout_fraction", c.holdout_fraction);
            if (j.contains("search")) {
                const auto& s = j.at("search");
                c.alpha_grid = s.value("alpha_grid", c.alpha_grid);
                c.max_depth = s.value("max_depth", c.max_depth);
                if (s.contains("class_weights")) {
                    const auto& w = s.at("class_weights");
                    c.class_weights = {w.at("0").get<double>(), w.at("1").get<double>()};
                }
                c.mass_weighted_noise = s.value("mass_weighted_noise", c.mass_weighted_noise);
                c.tree_uses_synth_features = s.value("tree_uses_synth_features", c.tree_uses_synth_features);
            }
            if (j.contains("segment")) c.tau = j.at("segment").value("tau", c.tau);
            if (j.contains("baseline")) {
                c.baseline_q = j.at("baseline").value("q_threshold", c.baseline_q);
                c.baseline_max_slices = j.at("baseline").value("max_slices", c.baseline_max_slices);
            }
            c.output_dir = j.value("output_dir", c.output_dir);
            c.threads = j.value("threads", 0u);
        } catch (const nlohmann::json::exception& e) {
            throw ValidationError(std::string("config: ") + e.what());
        }
        c.validate();
        return c;
    }

    static RunConfig load(const std::string& path) {
        const auto text = detail::read_file(path);
        auto j = nlohmann::json::parse(text, nullptr, false);
        if (j.is_discarded()) throw ValidationError("config " + path + " is not valid JSON");
        auto dir = std::filesystem::path(path).parent_path().string();
        return from_json(j, dir.empty() ? "." : dir);
    }
};

/// Writes a ready-to-run benchmark directory: control/test/truth CSVs, the
/// scenario and a run config. Returns the config path.
inline std::string write_benchmark(const bench::Benchmark& b, const std::string& dir, std::uint64_t seed) {
    std::filesystem::create_directories(dir);
    const auto p = [&](const char* f) { return (std::filesystem::path(dir) / f).string(); };
    detail::write_file(p("control.csv"), b.control.to_csv());
    detail::write_file(p("test.csv"), b.test.to_csv());
    detail::write_file(p("truth.csv"), b.truth.to_csv());
    detail::write_file(p("scenario.json"), nlohmann::json(b.scenario).dump(2) + "\n");
    RunConfig c;
    c.control_path = "control.csv";
    c.test_path = "test.csv";
    c.truth_path = "truth.csv";
    c.schema = b.control.schema();
    c.noise_rules = b.scenario.rules;
    c.seed = seed;
    c.model_c.seed = c.model_n.seed = seed;
    c.output_dir = "out";
    c.validate();
    detail::write_file(p("config.json"), c.to_json().dump(2) + "\n");
    return p("config.json");
}

struct StageTimings {
    std::vector<std::pair<std::string, double>> seconds;
};

/// Runs stages against one config. The provider is injected so callers can
/// opt into a live endpoint; by default the config's mock is used.
class Pipeline {
public:
    explicit Pipeline(RunConfig cfg, std::shared_ptr<Provider> provider = nullptr) : cfg_(std::move(cfg)), provider_(std::move(provider)) {
        cfg_.validate();
        hash_ = cfg_.hash();
    }

    const RunConfig& config() const { return cfg_; }
    const std::string& config_hash() const { return hash_; }

    std::string artifact(const std::string& name) const {
        return (std::filesystem::path(cfg_.resolve(cfg_.output_dir)) / name).string();
    }

    // ---- stages -------------------------------------------------------

    /// Pairing, inferred noise labels and the two insight summaries.
    void summarize() {
        const auto& pair = paired();
        ensure_output_dir();
        const auto noise = noise_labels();
        const auto policy = anonymity_policy();

        std::string sur = "key,y_tilde\n";
        for (std::size_t i = 0; i < pair.size(); ++i) detail::append_csv_record(sur, {pair.test.key(pair.test_rows[i]), pair.surrogate[i] ? "1" : "0"});
        detail::write_file(artifact("surrogate.csv"), sur);
        detail::write_file(artifact("noise_labels.csv"), noise_labels_csv(pair.test, noise));

        put("pairing.json", {{"matched", pair.size()},
                             {"positives", pair.positives()},
                             {"unmatched_control", pair.unmatched_control},
                             {"unmatched_test", pair.unmatched_test},
                             {"noise_flagged_matched", count(matched_noise(noise))},
                             {"anonymity", {{"min_slice_size", policy.min_slice_size}, {"k_threshold", policy.k_threshold},
                                            {"quasi_identifiers", policy.quasi_identifiers}}}});

        const auto y = pair.surrogate;
        const auto yn = matched_noise(noise);
        put("insights_intervention.json", to_json_document(build_insight_summary(pair, y, policy, cfg_.n_bins, "intervention")));
        put("insights_noise.json", to_json_document(build_insight_summary(pair, yn, policy, cfg_.n_bins, "noise")));
    }

    /// Two synthesis runs, one per task, from the persisted summaries.
    void synthesize() {
        const auto schema = schema_context(paired().test.schema());
        AuditLog audit(artifact("audit.jsonl"));
        auto& provider = active_provider();
        CallOptions opt;
        opt.max_retries = cfg_.provider.max_retries;
        opt.initial_backoff_ms = cfg_.provider.initial_backoff_ms;

        for (auto task : {SynthTask::intervention, SynthTask::noise}) {
            const auto summary = summary_from_json(get("insights_" + std::string(to_string(task)) + ".json", "synthesize"));
            const std::string out = "features_" + std::string(to_string(task)) + ".json";
            if (task == SynthTask::noise && !two_classes(matched_noise_from_artifact())) {
                log_warning("inferred noise labels have a single class; skipping noise feature synthesis");
                put(out, {{"task", "noise"}, {"definitions", nlohmann::json::array()}, {"skipped", "single-class noise labels"}});
                continue;
            }
            try {
                const auto result = synthesize_features(summary, schema, task, provider, &audit, opt);
                put(out, to_json_document(result));
            } catch (const ProviderError&) {
                throw;
            } catch (const ValidationError& e) {
                throw StageError("synthesize", std::string(to_string(task)) + ": " + e.what());
            }
        }
    }

    /// Model C on ỹ and Model N on inferred noise labels, each with its own
    /// synthesized features; writes per-row probabilities.
    void train() {
        const auto& pair = paired();
        const auto y = read_labels(artifact("surrogate.csv"), "y_tilde", "train");
        const auto yn = matched_noise_from_artifact();
        if (!two_classes(y)) throw StageError("train", "surrogate label has a single class; no shift to attribute");

        const auto xc = encode_dense(feature_matrix(SynthTask::intervention, "train"));
        const auto xn = encode_dense(feature_matrix(SynthTask::noise, "train"));

        nlohmann::json report;
        auto fit = [&](const DenseMatrix& x, const std::vector<std::uint8_t>& labels, const GbtConfig& gc, const std::string& name) {
            if (!two_classes(labels)) {
                const double mean = static_cast<double>(count(labels)) / static_cast<double>(labels.size());
                const double p = std::clamp(mean, 1e-6, 1.0 - 1e-6);
                log_warning(name + ": single-class labels; using a constant probability " + detail::format_double(p));
                GbtModel m;
                m.base_score = std::log(p / (1.0 - p));
                m.feature_names = x.names;
                report[name] = {{"constant", true}, {"probability", p}};
                return m;
            }
            auto [tr, ho] = stratified_split(labels, cfg_.holdout_fraction, gc.seed);
            std::vector<std::uint8_t> ytr, yho;
            for (auto i : tr) ytr.push_back(labels[i]);
            for (auto i : ho) yho.push_back(labels[i]);
            double holdout_acc = 0.0;
            if (two_classes(ytr)) {
                const auto m = train_gbt(x.select_rows(tr), ytr, gc);
                holdout_acc = accuracy(predict_proba(m, x.select_rows(ho)), yho);
            }
            auto model = train_gbt(x, labels, gc);
            const auto train_acc = accuracy(predict_proba(model, x), labels);
            const auto imp = gain_importance(model);
            nlohmann::json importance = nlohmann::json::object();
            for (std::size_t f = 0; f < imp.size(); ++f)
                if (imp[f] > 0.0) importance[model.feature_names[f]] = imp[f];
            report[name] = {{"constant", false},
                            {"holdout_accuracy", holdout_acc},
                            {"holdout_rows", ho.size()},
                            {"train_accuracy", train_acc},
                            {"train_loss_first", model.train_loss.front()},
                            {"train_loss_last", model.train_loss.back()},
                            {"gain_importance", importance}};
            return model;
        };

        const auto mc = fit(xc, y, cfg_.model_c, "model_c");
        const auto mn = fit(xn, yn, cfg_.model_n, "model_n");
        put("model_c.json", {{"model", to_json_document(mc)}});
        put("model_n.json", {{"model", to_json_document(mn)}});
        put("train_report.json", report);

        const auto pc = predict_proba(mc, xc);
        const auto pn = predict_proba(mn, xn);
        std::string csv = "key,p_c,p_n\n";
        for (std::size_t i = 0; i < pair.size(); ++i)
            detail::append_csv_record(csv, {pair.test.key(pair.test_rows[i]), detail::format_double(pc[i]), detail::format_double(pn[i])});
        detail::write_file(artifact("probabilities.csv"), csv);
        put("probabilities.json", {{"rows", pair.size()}, {"file", "probabilities.csv"}});
    }

    /// α search, knee selection and mass-greedy extraction.
    void segment() {
        const auto& pair = paired();
        get("model_c.json", "segment");
        get("model_n.json", "segment");
        get("probabilities.json", "segment");
        const auto probs = read_probabilities("segment");
        const auto y = read_labels(artifact("surrogate.csv"), "y_tilde", "segment");
        const auto x = tree_features("segment");

        SearchOptions so;
        so.tree = WeightedTreeOptions{cfg_.max_depth, cfg_.class_weights, 0.0};
        so.mass_weighted_noise = cfg_.mass_weighted_noise;
        so.threads = cfg_.threads;
        const auto search = weighted_tree_search(x, y, probs, cfg_.alpha_grid, so);
        const auto seg = mass_greedy(search.tree(), probs.p_c, cfg_.tau);

        put("pareto.json", to_json_document(search));
        put("segment.json", to_json_document(seg));
        std::string csv = "key,in_segment\n";
        for (std::size_t i = 0; i < pair.size(); ++i) detail::append_csv_record(csv, {pair.test.key(pair.test_rows[i]), seg.mask[i] ? "1" : "0"});
        detail::write_file(artifact("segment_mask.csv"), csv);
    }

    /// Scores the segment and the statistical-screen baseline against truth.
    nlohmann::json evaluate() {
        if (cfg_.truth_path.empty()) throw ValidationError("eval: config has no data.truth file");
        const auto& pair = paired();
        get("segment.json", "eval");
        const auto mask = read_labels(artifact("segment_mask.csv"), "in_segment", "eval");
        const auto truth = bench::GroundTruth::from_csv(detail::read_file(cfg_.resolve(cfg_.truth_path)));
        std::unordered_map<std::string, std::size_t> by_key;
        for (std::size_t i = 0; i < truth.size(); ++i) by_key.emplace(truth.keys[i], i);

        std::vector<std::uint8_t> t(pair.size()), noise(pair.size());
        std::vector<std::vector<std::string>> mech(pair.size());
        for (std::size_t i = 0; i < pair.size(); ++i) {
            auto it = by_key.find(pair.test.key(pair.test_rows[i]));
            if (it == by_key.end()) throw ValidationError("truth file has no row for key '" + pair.test.key(pair.test_rows[i]) + "'");
            t[i] = truth.intervention[it->second];
            noise[i] = truth.noise[it->second];
            for (const auto& m : truth.mechanisms[it->second])
                if (m != "" && truth.noise[it->second]) mech[i].push_back(m);
        }
        const auto summary = summary_from_json(get("insights_intervention.json", "eval"));
        const auto baseline = stats_screen_baseline(pair, summary, cfg_.baseline_q, cfg_.baseline_max_slices);
        const auto ours = score_segment(mask, t, noise, mech);
        const auto base = score_segment(baseline.mask, t, noise, mech);
        nlohmann::json slices = nlohmann::json::array();
        for (const auto& s : baseline.slices) slices.push_back(s.describe());
        const auto pareto = get("pareto.json", "eval");
        nlohmann::json rep{{"sifotl", to_json_document(ours)},
                           {"stats_screen", to_json_document(base)},
                           {"baseline_slices", slices},
                           {"alpha_star", pareto.at("alpha_star")}};
        put("report.json", rep);
        detail::write_file(artifact("report.txt"), report_table({{"SIFOTL", ours}, {"StatsScreen", base}}));
        rep["config_hash"] = hash_;
        return rep;
    }

    /// Every stage in order; evaluation only when a truth file is configured.
    void run() {
        summarize();
        synthesize();
        train();
        segment();
        if (!cfg_.truth_path.empty()) evaluate();
    }

    // ---- shared state -------------------------------------------------

    const PairedDataset& paired() {
        if (!pair_) {
            auto control = load_csv(cfg_.resolve(cfg_.control_path), cfg_.schema);
            auto test = load_csv(cfg_.resolve(cfg_.test_path), cfg_.schema);
            pair_ = pair_tables(std::move(control), std::move(test), cfg_.tolerance);
        }
        return *pair_;
    }

    AnonymityPolicy anonymity_policy() {
        std::vector<std::string> qis;
        if (cfg_.quasi_identifiers) qis = *cfg_.quasi_identifiers;
        else
            for (const auto& c : cfg_.schema)
                if (c.role == Role::quasi_identifier) qis.push_back(c.name);
        auto p = AnonymityPolicy::adaptive(paired().size(), qis);
        if (cfg_.min_slice_size) p.min_slice_size = *cfg_.min_slice_size;
        if (cfg_.k_threshold) p.k_threshold = *cfg_.k_threshold;
        p.validate();
        return p;
    }

    /// Base features plus the task's synthesized features, over matched test rows.
    FeatureMatrix feature_matrix(SynthTask task, const std::string& stage) {
        const auto& pair = paired();
        auto m = base_feature_matrix(pair.test, pair.test_rows);
        const auto doc = get("features_" + std::string(to_string(task)) + ".json", stage);
        const auto synth = synthesis_from_json(doc, schema_context(pair.test.schema()));
        evaluate_features(pair.test, pair.test_rows, synth.features, m);
        return m;
    }

    FeatureMatrix tree_features(const std::string& stage) {
        if (cfg_.tree_uses_synth_features) return feature_matrix(SynthTask::intervention, stage);
        return base_feature_matrix(paired().test, paired().test_rows);
    }

    ProbEstimates read_probabilities(const std::string& stage) {
        const auto path = artifact("probabilities.csv");
        if (!std::filesystem::exists(path)) throw StageError(stage, "missing upstream artifact probabilities.csv; run 'train' first");
        const auto recs = detail::parse_csv(detail::read_file(path));
        ProbEstimates p;
        const auto& pair = paired();
        if (recs.size() != pair.size() + 1) throw StageError(stage, "probabilities.csv does not match the paired rows");
        for (std::size_t i = 0; i < pair.size(); ++i) {
            const auto& r = recs[i + 1];
            if (r.size() != 3 || r[0] != pair.test.key(pair.test_rows[i])) throw StageError(stage, "probabilities.csv rows are out of order");
            auto c = detail::parse_double(r[1]);
            auto n = detail::parse_double(r[2]);
            if (!c || !n) throw StageError(stage, "probabilities.csv has a bad number");
            p.p_c.push_back(*c);
            p.p_n.push_back(*n);
        }
        return p;
    }

private:
    static std::size_t count(std::span<const std::uint8_t> v) {
        std::size_t n = 0;
        for (auto x : v) n += x ? 1 : 0;
        return n;
    }

    static bool two_classes(std::span<const std::uint8_t> v) {
        const auto n = count(v);
        return n > 0 && n < v.size();
    }

    void ensure_output_dir() const { std::filesystem::create_directories(cfg_.resolve(cfg_.output_dir)); }

    Provider& active_provider() {
        if (!provider_) {
            if (cfg_.provider.kind != "mock")
                throw ValidationError("config selects a live provider; pass one explicitly (the CLI needs --live)");
            provider_ = std::make_shared<MockProvider>(cfg_.provider.responses.empty()
                                                           ? MockProvider(nlohmann::json::object(), cfg_.provider.strict)
                                                           : MockProvider::from_file(cfg_.resolve(cfg_.provider.responses), cfg_.provider.strict));
        }
        return *provider_;
    }

    NoiseLabelVector noise_labels() {
        const auto& pair = paired();
        return apply_rules(pair.test, cfg_.noise_rules, pair.control);
    }

    std::vector<std::uint8_t> matched_noise(const NoiseLabelVector& v) {
        const auto& pair = paired();
        std::vector<std::uint8_t> out(pair.size());
        for (std::size_t i = 0; i < pair.size(); ++i) out[i] = v.labels[pair.test_rows[i]];
        return out;
    }

    std::vector<std::uint8_t> matched_noise_from_artifact() {
        const auto path = artifact("noise_labels.csv");
        if (!std::filesystem::exists(path)) throw StageError("train", "missing upstream artifact noise_labels.csv; run 'summarize' first");
        get("pairing.json", "train");
        const auto recs = detail::parse_csv(detail::read_file(path));
        std::unordered_map<std::string, std::uint8_t> by_key;
        for (std::size_t i = 1; i < recs.size(); ++i)
            if (recs[i].size() >= 2) by_key[recs[i][0]] = recs[i][1] == "1";
        const auto& pair = paired();
        std::vector<std::uint8_t> out(pair.size());
        for (std::size_t i = 0; i < pair.size(); ++i) {
            auto it = by_key.find(pair.test.key(pair.test_rows[i]));
            if (it == by_key.end()) throw StageError("train", "noise_labels.csv is missing key " + pair.test.key(pair.test_rows[i]));
            out[i] = it->second;
        }
        return out;
    }

    std::vector<std::uint8_t> read_labels(const std::string& path, const std::string& column, const std::string& stage) {
        if (!std::filesystem::exists(path))
            throw StageError(stage, "missing upstream artifact " + std::filesystem::path(path).filename().string());
        const auto recs = detail::parse_csv(detail::read_file(path));
        const auto& pair = paired();
        if (recs.empty() || recs[0].size() != 2 || recs[0][1] != column) throw StageError(stage, path + ": unexpected header");
        if (recs.size() != pair.size() + 1) throw StageError(stage, path + " does not match the paired rows");
        std::vector<std::uint8_t> out(pair.size());
        for (std::size_t i = 0; i < pair.size(); ++i) {
            if (recs[i + 1][0] != pair.test.key(pair.test_rows[i])) throw StageError(stage, path + ": rows are out of order");
            out[i] = recs[i + 1][1] == "1";
        }
        return out;
    }

    void put(const std::string& name, nlohmann::json doc) {
        ensure_output_dir();
        doc["config_hash"] = hash_;
        detail::write_file(artifact(name), doc.dump(2) + "\n");
    }

    nlohmann::json get(const std::string& name, const std::string& stage) {
        const auto path = artifact(name);
        if (!std::filesystem::exists(path)) throw StageError(stage, "missing upstream artifact " + name);
        auto j = nlohmann::json::parse(detail::read_file(path), nullptr, false);
        if (j.is_discarded() || !j.is_object()) throw StageError(stage, name + " is not a JSON object");
        if (j.value("config_hash", "") != hash_)
            throw StageError(stage, "stale artifact " + name + " (config hash " + j.value("config_hash", "none") + ", expected " + hash_ + ")");
        return j;
    }

    RunConfig cfg_;
    std::shared_ptr<Provider> provider_;
    std::string hash_;
    std::optional<PairedDataset> pair_;
};

} // namespace sifotl

#endif // SIFOTL_PIPELINE_HPP
