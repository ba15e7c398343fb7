#ifndef SIFOTL_EVAL_HPP
#define SIFOTL_EVAL_HPP

// Segment scoring against ground truth and the statistical-screen baseline.

#include <sifotl/errors.hpp>
#include <sifotl/screen.hpp>

#include <nlohmann/json.hpp>

#include <cstdio>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace sifotl {

struct EvaluationReport {
    double precision = 0.0;
    std::optional<double> recall; ///< absent when the truth set is empty
    double f1 = 0.0;
    std::size_t segment_size = 0;
    std::size_t truth_size = 0;
    std::size_t overlap = 0;
    std::size_t noisy_in_segment = 0;
    std::size_t noisy_total = 0;
    std::map<std::string, std::size_t> contamination; ///< mask rows per noise mechanism

    /// Fraction of segment rows carrying a ground-truth noise flag.
    double noise_fraction() const { return segment_size ? static_cast<double>(noisy_in_segment) / static_cast<double>(segment_size) : 0.0; }
};

/// P/R/F1 over rows; contamination counts when noise flags are supplied.
inline EvaluationReport score_segment(std::span<const std::uint8_t> mask, std::span<const std::uint8_t> truth,
                                      std::span<const std::uint8_t> noise = {},
                                      std::span<const std::vector<std::string>> mechanisms = {}) {
    if (mask.size() != truth.size()) throw ValidationError("score_segment: mask and truth lengths differ");
    if (!noise.empty() && noise.size() != mask.size()) throw ValidationError("score_segment: noise flags length differs");
    if (!mechanisms.empty() && mechanisms.size() != mask.size()) throw ValidationError("score_segment: mechanism list length differs");
    EvaluationReport r;
    for (std::size_t i = 0; i < mask.size(); ++i) {
        r.segment_size += mask[i] ? 1 : 0;
        r.truth_size += truth[i] ? 1 : 0;
        r.overlap += (mask[i] && truth[i]) ? 1 : 0;
        if (!noise.empty() && noise[i]) {
            ++r.noisy_total;
            if (mask[i]) {
                ++r.noisy_in_segment;
                if (!mechanisms.empty())
                    for (const auto& m : mechanisms[i]) ++r.contamination[m];
            }
        }
    }
    r.precision = r.segment_size ? static_cast<double>(r.overlap) / static_cast<double>(r.segment_size) : 0.0;
    if (r.truth_size) r.recall = static_cast<double>(r.overlap) / static_cast<double>(r.truth_size);
    const double rec = r.recall.value_or(0.0);
    r.f1 = r.precision + rec > 0.0 ? 2.0 * r.precision * rec / (r.precision + rec) : 0.0;
    return r;
}

inline nlohmann::json to_json_document(const EvaluationReport& r) {
    return {{"precision", r.precision},
            {"recall", r.recall ? nlohmann::json(*r.recall) : nlohmann::json("undefined")},
            {"f1", r.f1},
            {"segment_size", r.segment_size},
            {"truth_size", r.truth_size},
            {"overlap", r.overlap},
            {"noisy_in_segment", r.noisy_in_segment},
            {"noisy_total", r.noisy_total},
            {"noise_fraction", r.noise_fraction()},
            {"contamination", r.contamination}};
}

struct BaselineSegment {
    std::vector<std::uint8_t> mask; ///< over matched rows
    std::vector<SliceSpec> slices;
};

/// Union of the non-suppressed slices with q <= q_threshold, at most
/// `max_slices` of them in (q ascending, V descending) order.
inline BaselineSegment stats_screen_baseline(const PairedDataset& pair, const InsightSummary& summary, double q_threshold = 0.05,
                                             std::size_t max_slices = 10) {
    if (!(q_threshold >= 0.0 && q_threshold <= 1.0)) throw ValidationError("stats_screen_baseline: q_threshold must be in [0,1]");
    std::vector<const SliceInsight*> ranked;
    for (const auto& i : summary.insights)
        if (!i.suppressed) ranked.push_back(&i);
    std::stable_sort(ranked.begin(), ranked.end(), [](const SliceInsight* a, const SliceInsight* b) {
        if (a->q_value != b->q_value) return a->q_value < b->q_value;
        return a->cramers_v > b->cramers_v;
    });
    BaselineSegment out;
    out.mask.assign(pair.size(), 0);
    for (const auto* i : ranked) {
        if (out.slices.size() >= max_slices || i->q_value > q_threshold) break;
        const auto m = slice_mask(pair.test, pair.test_rows, i->slice);
        for (std::size_t r = 0; r < m.size(); ++r) out.mask[r] |= m[r];
        out.slices.push_back(i->slice);
    }
    return out;
}

/// Fixed-width comparison table, one line per method.
inline std::string report_table(const std::vector<std::pair<std::string, EvaluationReport>>& rows) {
    std::string out;
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-14s %9s %9s %9s %9s %9s %9s\n", "method", "precision", "recall", "f1", "segment", "truth", "noisy");
    out += buf;
    for (const auto& [name, r] : rows) {
        char rec[16] = "n/a";
        if (r.recall) std::snprintf(rec, sizeof rec, "%.3f", *r.recall);
        std::snprintf(buf, sizeof buf, "%-14s %9.3f %9s %9.3f %9zu %9zu %9zu\n", name.c_str(), r.precision, rec, r.f1, r.segment_size,
                      r.truth_size, r.noisy_in_segment);
        out += buf;
    }
    return out;
}

} // namespace sifotl

#endif // SIFOTL_EVAL_HPP
