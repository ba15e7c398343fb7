#pragma once

// Independent reference implementations and fixtures shared by the suites.

#include <sifotl/sifotl.hpp>

#include <cmath>
#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <vector>

namespace oracle {

// Pearson χ² from explicit expected counts, summed cell by cell.
inline double chi_square(const std::vector<std::uint8_t>& in, const std::vector<std::uint8_t>& y) {
    double obs[2][2] = {{0, 0}, {0, 0}};
    for (std::size_t i = 0; i < in.size(); ++i) obs[in[i] ? 0 : 1][y[i] ? 0 : 1] += 1.0;
    const double n = static_cast<double>(in.size());
    double stat = 0.0;
    for (int r = 0; r < 2; ++r)
        for (int c = 0; c < 2; ++c) {
            const double e = (obs[r][0] + obs[r][1]) * (obs[0][c] + obs[1][c]) / n;
            if (e == 0.0) return std::nan("");
            stat += (obs[r][c] - e) * (obs[r][c] - e) / e;
        }
    return stat;
}

// For 1 dof the survival function has a closed form.
inline double chi_square_p1(double stat) { return std::erfc(std::sqrt(stat / 2.0)); }

// Point-biserial as a plain Pearson correlation with the 0/1 vector.
inline double point_biserial(const std::vector<std::uint8_t>& b, const std::vector<double>& x) {
    const double n = static_cast<double>(x.size());
    double mb = 0, mx = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mb += b[i];
        mx += x[i];
    }
    mb /= n;
    mx /= n;
    double sbx = 0, sbb = 0, sxx = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sbx += (b[i] - mb) * (x[i] - mx);
        sbb += (b[i] - mb) * (b[i] - mb);
        sxx += (x[i] - mx) * (x[i] - mx);
    }
    return sbx / std::sqrt(sbb * sxx);
}

// BH by definition: q_(i) = min over j >= i of p_(j)·m/j, capped at 1.
inline std::vector<double> bh(const std::vector<double>& p) {
    const std::size_t m = p.size();
    std::vector<double> q(m);
    for (std::size_t i = 0; i < m; ++i) {
        // rank of p[i] among sorted p (ties: any consistent rank gives the same q)
        double best = 1.0;
        for (std::size_t j = 0; j < m; ++j) {
            if (p[j] < p[i]) continue;
            std::size_t rank = 0;
            for (std::size_t k = 0; k < m; ++k) rank += (p[k] <= p[j]) ? 1 : 0;
            best = std::min(best, p[j] * static_cast<double>(m) / static_cast<double>(rank));
        }
        q[i] = best;
    }
    return q;
}

// Plain unweighted CART over replicated rows, enumerating candidates in the
// documented order. Produces the preorder node list for comparison.
struct Node {
    int feature = -1;
    bool categorical = false;
    double threshold = 0.0;
    bool missing_left = false;
    std::vector<std::string> left_levels;
    int leaf_class = -1;
};

struct Row {
    std::vector<double> num; // NaN = missing
    std::vector<int> cat;
    int y = 0;
};

struct Data {
    std::vector<bool> is_cat;
    std::vector<std::vector<std::string>> levels;
    std::vector<Row> rows;
};

inline double gini_mass(double n0, double n1) {
    const double n = n0 + n1;
    return n > 0 ? 2.0 * n0 * n1 / n : 0.0;
}

inline void grow(const Data& d, const std::vector<std::size_t>& idx, int depth, int max_depth, std::vector<Node>& out) {
    double n0 = 0, n1 = 0;
    for (auto i : idx) (d.rows[i].y ? n1 : n0) += 1;
    const std::size_t me = out.size();
    out.push_back({});
    auto leaf = [&] { out[me].leaf_class = n1 > n0 ? 1 : 0; };
    if (depth >= max_depth || n0 == 0 || n1 == 0) return leaf();
    const double parent = gini_mass(n0, n1);
    double best = 0.0;
    Node split;
    std::vector<int> best_left_codes;
    auto eval = [&](auto goes_left) {
        double l0 = 0, l1 = 0, r0 = 0, r1 = 0;
        for (auto i : idx) {
            if (goes_left(d.rows[i])) (d.rows[i].y ? l1 : l0) += 1;
            else (d.rows[i].y ? r1 : r0) += 1;
        }
        if (l0 + l1 == 0 || r0 + r1 == 0) return -1.0;
        return parent - gini_mass(l0, l1) - gini_mass(r0, r1);
    };
    for (std::size_t f = 0; f < d.is_cat.size(); ++f) {
        if (d.is_cat[f]) {
            std::map<int, std::pair<double, double>> per;
            for (auto i : idx) {
                auto& e = per[d.rows[i].cat[f]];
                (d.rows[i].y ? e.second : e.first) += 1;
            }
            if (per.size() < 2) continue;
            std::vector<int> order;
            for (auto& [c, _] : per) order.push_back(c);
            std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
                return per[a].second / (per[a].first + per[a].second) < per[b].second / (per[b].first + per[b].second);
            });
            for (std::size_t k = 0; k + 1 < order.size(); ++k) {
                std::vector<int> left(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k + 1));
                const double dec = eval([&](const Row& r) { return std::find(left.begin(), left.end(), r.cat[f]) != left.end(); });
                if (dec > best) {
                    best = dec;
                    split = Node{static_cast<int>(f), true, 0.0, false, {}, -1};
                    best_left_codes = left;
                }
            }
            continue;
        }
        std::vector<double> vals;
        bool any_missing = false;
        for (auto i : idx) {
            if (std::isnan(d.rows[i].num[f])) any_missing = true;
            else vals.push_back(d.rows[i].num[f]);
        }
        std::sort(vals.begin(), vals.end());
        vals.erase(std::unique(vals.begin(), vals.end()), vals.end());
        if (vals.size() < 2) continue;
        for (std::size_t k = 0; k + 1 < vals.size(); ++k) {
            const double thr = vals[k] + (vals[k + 1] - vals[k]) / 2.0;
            for (int side = 0; side < 2; ++side) {
                const bool ml = side == 0;
                if (ml && !any_missing) continue;
                const double dec = eval([&](const Row& r) { return std::isnan(r.num[f]) ? ml : r.num[f] <= thr; });
                if (dec > best) {
                    best = dec;
                    split = Node{static_cast<int>(f), false, thr, ml, {}, -1};
                }
            }
        }
    }
    if (split.feature < 0 || !(best > 1e-12 * (n0 + n1))) return leaf();
    if (split.categorical) {
        for (int c : best_left_codes) split.left_levels.push_back(d.levels[static_cast<std::size_t>(split.feature)][static_cast<std::size_t>(c)]);
        std::sort(split.left_levels.begin(), split.left_levels.end());
    }
    out[me] = split;
    std::vector<std::size_t> li, ri;
    for (auto i : idx) {
        const auto& r = d.rows[i];
        bool left;
        const auto f = static_cast<std::size_t>(split.feature);
        if (split.categorical) left = std::find(best_left_codes.begin(), best_left_codes.end(), r.cat[f]) != best_left_codes.end();
        else left = std::isnan(r.num[f]) ? split.missing_left : r.num[f] <= split.threshold;
        (left ? li : ri).push_back(i);
    }
    grow(d, li, depth + 1, max_depth, out);
    grow(d, ri, depth + 1, max_depth, out);
}

inline std::vector<Node> fit(const Data& d, int max_depth) {
    std::vector<std::size_t> idx(d.rows.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::vector<Node> out;
    grow(d, idx, 0, max_depth, out);
    return out;
}

} // namespace oracle

namespace fixture {

inline std::filesystem::path temp_dir(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("sifotl_test_" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

inline std::vector<sifotl::ColumnSchema> small_schema() {
    using sifotl::DType;
    using sifotl::Role;
    return {{"id", DType::categorical, Role::key},
            {"age", DType::numeric, Role::feature},
            {"region", DType::categorical, Role::feature},
            {"cost", DType::numeric, Role::target_metric}};
}

} // namespace fixture
