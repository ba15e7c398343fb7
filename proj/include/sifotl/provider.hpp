#ifndef SIFOTL_PROVIDER_HPP
#define SIFOTL_PROVIDER_HPP

// Completion providers for feature synthesis: a deterministic mock that
// replays canned responses (with an offline responder as fallback), a JSONL
// audit log, and the retry/format-repair call loop. The HTTP provider lives
// in provider_http.hpp so the core stays free of network code.

#include <sifotl/detail/csv.hpp>
#include <sifotl/detail/hash.hpp>
#include <sifotl/detail/log.hpp>
#include <sifotl/detail/numfmt.hpp>
#include <sifotl/errors.hpp>

#include <nlohmann/json.hpp>

#include <cctype>
#include <chrono>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

namespace sifotl {

/// Retryable transport failure (timeout, connection refused, 5xx).
class TransportError : public ProviderError {
public:
    using ProviderError::ProviderError;
};

// Markers shared by the prompt builders and the offline responder.
namespace prompt_protocol {
inline constexpr std::string_view phase_definition = "phase: definition";
inline constexpr std::string_view phase_expression = "phase: expression";
inline constexpr std::string_view task_prefix = "task: ";
inline constexpr std::string_view insights_begin = "BEGIN INSIGHTS";
inline constexpr std::string_view insights_end = "END INSIGHTS";
inline constexpr std::string_view features_begin = "BEGIN FEATURES";
inline constexpr std::string_view features_end = "END FEATURES";
inline constexpr std::string_view computed_as = "Computed as: ";
inline constexpr std::string_view repair_instruction =
    "Your previous reply was not valid JSON of the requested shape. Reply again with the JSON object only, no prose and no code fences.";

/// Text strictly between the two marker lines, or nullopt.
inline std::optional<std::string> block(std::string_view text, std::string_view begin, std::string_view end) {
    const auto b = text.find(begin);
    if (b == std::string_view::npos) return std::nullopt;
    const auto start = text.find('\n', b);
    const auto e = text.find(end, b);
    if (start == std::string_view::npos || e == std::string_view::npos || e < start) return std::nullopt;
    return std::string(text.substr(start + 1, e - start - 1));
}

inline std::string line_value(std::string_view text, std::string_view prefix) {
    const auto p = text.find(prefix);
    if (p == std::string_view::npos) return {};
    const auto eol = text.find('\n', p + prefix.size());
    return std::string(text.substr(p + prefix.size(), eol == std::string_view::npos ? std::string_view::npos : eol - p - prefix.size()));
}
} // namespace prompt_protocol

struct ProviderResponse {
    std::string raw;
    nlohmann::json parsed;
    std::string model;
    double temperature = 0.0;
    std::string prompt_hash;
    int attempts = 0;
};

class Provider {
public:
    virtual ~Provider() = default;
    /// Raw completion text for `prompt`. Throws TransportError on retryable failure.
    virtual std::string complete(const std::string& prompt) = 0;
    virtual std::string model_id() const = 0;
    virtual double temperature() const { return 0.0; }
};

/// Deterministic stand-in for a model: proposes indicator features for the
/// strongest enriched slices in the prompt's insight block and their pairwise
/// conjunctions, and answers expression prompts from the "Computed as" clause
/// of each definition. Sees only the prompt text.
class OfflineResponder {
public:
    std::size_t max_columns = 4;

    std::string respond(const std::string& prompt) const {
        if (prompt.find(prompt_protocol::phase_expression) != std::string::npos) return expressions(prompt);
        if (prompt.find(prompt_protocol::phase_definition) != std::string::npos) return definitions(prompt);
        throw ProviderError("offline responder: unrecognized prompt");
    }

private:
    struct Condition {
        std::string column;
        std::string expr;
        std::string slug;
    };

    static std::string slug(std::string_view s) {
        std::string out;
        for (char c : s) {
            if (std::isalnum(static_cast<unsigned char>(c))) out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
            else if (!out.empty() && out.back() != '_') out += '_';
        }
        while (!out.empty() && out.back() == '_') out.pop_back();
        return out.empty() ? "v" : out.substr(0, 24);
    }

    static std::string quote(std::string_view s) {
        std::string out = "'";
        for (char c : s) {
            if (c == '\'' || c == '\\') out += '\\';
            out += c;
        }
        return out + "'";
    }

    std::vector<Condition> conditions(const nlohmann::json& insights) const {
        // Best enriched slice per column; numeric columns merge every
        // significant enriched bin into one range.
        std::vector<std::string> order;
        std::map<std::string, nlohmann::json> first;
        std::map<std::string, std::pair<std::optional<double>, std::optional<double>>> range;
        std::map<std::string, bool> open_lo, open_hi;
        for (const auto& ins : insights) {
            if (ins.value("suppressed", false) || ins.value("degenerate", false)) continue;
            if (ins.at("q_value").get<double>() > 0.05) continue;
            if (ins.at("group_rate_in").get<double>() <= ins.at("group_rate_out").get<double>()) continue;
            const auto& s = ins.at("slice");
            const auto col = s.at("feature").get<std::string>();
            if (!first.contains(col)) {
                order.push_back(col);
                first[col] = s;
            }
            if (s.at("kind") == "numeric_bin" && first[col].at("kind") == "numeric_bin") {
                auto& [lo, hi] = range[col];
                if (s.contains("lo") && !s.at("lo").is_null()) {
                    const double v = s.at("lo").get<double>();
                    if (!open_lo[col] && (!lo || v < *lo)) lo = v;
                } else {
                    open_lo[col] = true;
                    lo.reset();
                }
                if (s.contains("hi") && !s.at("hi").is_null()) {
                    const double v = s.at("hi").get<double>();
                    if (!open_hi[col] && (!hi || v > *hi)) hi = v;
                } else {
                    open_hi[col] = true;
                    hi.reset();
                }
            }
        }
        std::vector<Condition> out;
        for (const auto& col : order) {
            if (out.size() >= max_columns) break;
            const auto& s = first[col];
            if (s.at("kind") == "category") {
                const auto level = s.at("category").get<std::string>();
                out.push_back({col, col + " == " + quote(level), slug(col) + "_is_" + slug(level)});
                continue;
            }
            const auto& [lo, hi] = range[col];
            std::string expr, name = slug(col);
            if (lo) {
                expr = col + " >= " + detail::format_double(*lo);
                name += "_ge_" + slug(detail::format_double(*lo));
            }
            if (hi) {
                expr += (expr.empty() ? "" : " and ") + col + " < " + detail::format_double(*hi);
                name += "_lt_" + slug(detail::format_double(*hi));
            }
            if (expr.empty()) continue;
            out.push_back({col, expr, name});
        }
        return out;
    }

    std::string definitions(const std::string& prompt) const {
        const auto block = prompt_protocol::block(prompt, prompt_protocol::insights_begin, prompt_protocol::insights_end);
        if (!block) throw ProviderError("offline responder: prompt has no insight block");
        const auto conds = conditions(nlohmann::json::parse(*block));
        nlohmann::json features = nlohmann::json::array();
        auto add = [&](const std::string& name, const std::vector<const Condition*>& parts, const std::string& what) {
            nlohmann::json cols = nlohmann::json::array();
            std::string expr;
            for (const auto* c : parts) {
                cols.push_back(c->column);
                expr += (expr.empty() ? "" : " and ") + (parts.size() > 1 ? "(" + c->expr + ")" : c->expr);
            }
            features.push_back({{"name", name},
                                {"source_columns", cols},
                                {"logic_description", what + " " + std::string(prompt_protocol::computed_as) + expr}});
        };
        for (const auto& c : conds) add(c.slug, {&c}, "Indicator for an over-represented slice.");
        for (std::size_t i = 0; i < conds.size(); ++i)
            for (std::size_t j = i + 1; j < conds.size(); ++j)
                add(conds[i].slug + "_x_" + conds[j].slug, {&conds[i], &conds[j]}, "Interaction of two over-represented slices.");
        if (conds.size() > 2) {
            std::vector<const Condition*> all;
            std::string name = "all";
            for (const auto& c : conds) {
                all.push_back(&c);
                name += "_" + slug(c.column);
            }
            add(name, all, "Conjunction of every over-represented slice.");
        }
        return nlohmann::json{{"features", features}}.dump();
    }

    std::string expressions(const std::string& prompt) const {
        const auto block = prompt_protocol::block(prompt, prompt_protocol::features_begin, prompt_protocol::features_end);
        if (!block) throw ProviderError("offline responder: prompt has no feature block");
        nlohmann::json out = nlohmann::json::array();
        for (const auto& f : nlohmann::json::parse(*block)) {
            const auto logic = f.at("logic_description").get<std::string>();
            const auto p = logic.find(prompt_protocol::computed_as);
            if (p == std::string::npos) continue;
            out.push_back({{"name", f.at("name")}, {"expression", logic.substr(p + prompt_protocol::computed_as.size())}});
        }
        return nlohmann::json{{"expressions", out}}.dump();
    }
};

/// Replays canned responses keyed by prompt hash, then by "<phase>:<task>";
/// otherwise falls back to the offline responder unless strict.
class MockProvider : public Provider {
public:
    MockProvider() = default;
    explicit MockProvider(nlohmann::json responses, bool strict = false) : responses_(std::move(responses)), strict_(strict) {}

    static MockProvider from_file(const std::string& path, bool strict = false) {
        auto j = nlohmann::json::parse(detail::read_file(path));
        return MockProvider(j.contains("responses") ? j.at("responses") : j, strict);
    }

    static std::string fallback_key(const std::string& prompt) {
        const bool def = prompt.find(prompt_protocol::phase_definition) != std::string::npos;
        const bool expr = prompt.find(prompt_protocol::phase_expression) != std::string::npos;
        if (!def && !expr) return {};
        auto task = prompt_protocol::line_value(prompt, std::string("\n") + std::string(prompt_protocol::task_prefix));
        return std::string(def ? "definition:" : "expression:") + task;
    }

    std::string complete(const std::string& prompt) override {
        const auto h = detail::hash_hex(prompt);
        if (responses_.contains(h)) return responses_.at(h).get<std::string>();
        if (const auto key = fallback_key(prompt); !key.empty() && responses_.contains(key)) return responses_.at(key).get<std::string>();
        if (strict_) throw ProviderError("mock provider: no canned response for prompt " + h);
        return responder_.respond(prompt);
    }

    std::string model_id() const override { return "mock"; }

private:
    nlohmann::json responses_ = nlohmann::json::object();
    bool strict_ = false;
    OfflineResponder responder_;
};

/// Append-only JSON-lines log of every request and response.
class AuditLog {
public:
    AuditLog() = default;
    explicit AuditLog(std::string path) : path_(std::move(path)) {}

    void append(const nlohmann::json& entry) {
        entries_.push_back(entry);
        if (path_.empty()) return;
        std::ofstream out(path_, std::ios::app | std::ios::binary);
        if (!out) throw ValidationError("cannot open audit log " + path_);
        out << entry.dump() << '\n';
    }

    const std::vector<nlohmann::json>& entries() const { return entries_; }

private:
    std::string path_;
    std::vector<nlohmann::json> entries_;
};

struct CallOptions {
    int max_retries = 3;
    double initial_backoff_ms = 250.0;
    double backoff_factor = 2.0;
    std::function<void(double)> sleep_ms = [](double ms) { std::this_thread::sleep_for(std::chrono::duration<double, std::milli>(ms)); };
};

/// Strips a surrounding markdown code fence, if any, and parses JSON.
inline std::optional<nlohmann::json> parse_json_reply(std::string_view raw) {
    auto s = std::string(raw);
    const auto fence = s.find("```");
    if (fence != std::string::npos) {
        const auto body = s.find('\n', fence);
        const auto close = s.rfind("```");
        if (body != std::string::npos && close > body) s = s.substr(body + 1, close - body - 1);
    }
    auto j = nlohmann::json::parse(s, nullptr, false);
    if (j.is_discarded() || !j.is_object()) return std::nullopt;
    return j;
}

/// One logical call: transport retries with exponential backoff, then at most
/// one format-repair retry when the reply is not a JSON object holding
/// `required_key`. Every attempt is audited.
inline ProviderResponse call_provider(Provider& provider, const std::string& prompt, AuditLog* audit, const std::string& required_key,
                                      const CallOptions& opt = {}) {
    ProviderResponse resp;
    resp.model = provider.model_id();
    resp.temperature = provider.temperature();
    resp.prompt_hash = detail::hash_hex(prompt);

    auto send = [&](const std::string& text) {
        double backoff = opt.initial_backoff_ms;
        for (int attempt = 0;; ++attempt) {
            ++resp.attempts;
            try {
                auto raw = provider.complete(text);
                if (audit)
                    audit->append({{"event", "response"}, {"prompt_hash", detail::hash_hex(text)}, {"model", resp.model},
                                   {"temperature", resp.temperature}, {"prompt", text}, {"response", raw}});
                return raw;
            } catch (const TransportError& e) {
                if (audit)
                    audit->append({{"event", "transport_error"}, {"prompt_hash", detail::hash_hex(text)}, {"model", resp.model},
                                   {"attempt", attempt + 1}, {"error", e.what()}, {"prompt", text}});
                if (attempt >= opt.max_retries)
                    throw TransportError("provider transport failed after " + std::to_string(attempt + 1) + " attempts: " + e.what());
                if (opt.sleep_ms) opt.sleep_ms(backoff);
                backoff *= opt.backoff_factor;
            }
        }
    };

    auto valid = [&](const std::optional<nlohmann::json>& j) { return j && j->contains(required_key); };

    resp.raw = send(prompt);
    auto parsed = parse_json_reply(resp.raw);
    if (!valid(parsed)) {
        log_warning("provider reply is not valid JSON with '" + required_key + "'; retrying with a format-repair instruction");
        if (audit) audit->append({{"event", "parse_failure"}, {"prompt_hash", resp.prompt_hash}, {"raw", resp.raw}});
        const auto repaired_prompt = prompt + "\n\n" + std::string(prompt_protocol::repair_instruction) + "\n";
        resp.raw = send(repaired_prompt);
        parsed = parse_json_reply(resp.raw);
        if (!valid(parsed)) {
            if (audit) audit->append({{"event", "parse_failure"}, {"prompt_hash", detail::hash_hex(repaired_prompt)}, {"raw", resp.raw}});
            throw ProviderError("provider reply could not be parsed as JSON with '" + required_key + "' after one repair attempt");
        }
    }
    resp.parsed = std::move(*parsed);
    return resp;
}

} // namespace sifotl

#endif // SIFOTL_PROVIDER_HPP
