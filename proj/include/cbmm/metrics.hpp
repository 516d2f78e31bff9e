#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include "cbmm/errors.hpp"
#include "cbmm/types.hpp"

namespace cbmm {

// Fraction of points with both coordinates <= x.
inline double empirical_cdf_2d(std::span<const Point2> data, Point2 x) {
    if (data.empty()) throw InsufficientDataError("empirical_cdf_2d: empty data");
    std::size_t count = 0;
    for (const auto& p : data)
        if (p.x1 <= x.x1 && p.x2 <= x.x2) ++count;
    return static_cast<double>(count) / static_cast<double>(data.size());
}

namespace detail {

class Fenwick {
  public:
    explicit Fenwick(std::size_t n) : tree_(n + 1, 0.0) {}
    void add(std::size_t i, double w) {  // 1-based
        for (; i < tree_.size(); i += i & (~i + 1)) tree_[i] += w;
    }
    double prefix(std::size_t i) const {
        double s = 0.0;
        for (; i > 0; i -= i & (~i + 1)) s += tree_[i];
        return s;
    }

  private:
    std::vector<double> tree_;
};

inline std::vector<std::size_t> dense_ranks(std::span<const double> v) {
    const std::size_t n = v.size();
    std::vector<std::size_t> idx(n), rank(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::size_t r = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (i > 0 && v[idx[i]] != v[idx[i - 1]]) ++r;
        rank[idx[i]] = r + 1;  // 1-based, ties share a rank
    }
    return rank;
}

}  // namespace detail

// Empirical joint CDF evaluated at every sample point, in O(N log N).
// Weights act as point multiplicities (empty = unit weights).
inline std::vector<double> empirical_cdf_2d_at_samples(std::span<const Point2> data,
                                                       std::span<const double> weights = {}) {
    const std::size_t n = data.size();
    if (n == 0) throw InsufficientDataError("empirical_cdf_2d_at_samples: empty data");
    if (!weights.empty() && weights.size() != n)
        throw DomainError("empirical_cdf_2d_at_samples: weight/data size mismatch");
    std::vector<double> x2(n);
    for (std::size_t i = 0; i < n; ++i) x2[i] = data[i].x2;
    const auto rank2 = detail::dense_ranks(x2);

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return data[a].x1 < data[b].x1; });

    double total = 0.0;
    if (weights.empty())
        total = static_cast<double>(n);
    else
        for (double w : weights) total += w;

    detail::Fenwick fw(n);
    std::vector<double> cdf(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && data[order[j + 1]].x1 == data[order[i]].x1) ++j;
        for (std::size_t m = i; m <= j; ++m)
            fw.add(rank2[order[m]], weights.empty() ? 1.0 : weights[order[m]]);
        for (std::size_t m = i; m <= j; ++m) {
            const std::size_t idx = order[m];
            cdf[idx] = fw.prefix(rank2[idx]) / total;
        }
        i = j + 1;
    }
    return cdf;
}

// sup over sample points of |empirical CDF - model CDF|. The sup is taken at
// sample points only, matching the selection rule and convergence index.
inline double kolmogorov_distance_2d(std::span<const Point2> data,
                                     const std::function<double(Point2)>& model_cdf,
                                     std::span<const double> weights = {}) {
    const auto ecdf = empirical_cdf_2d_at_samples(data, weights);
    double d = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i)
        d = std::max(d, std::fabs(ecdf[i] - model_cdf(data[i])));
    return d;
}

// Univariate analogue; `sorted` must be ascending (weights in the same order).
inline double kolmogorov_distance_1d(std::span<const double> sorted,
                                     const std::function<double(double)>& model_cdf,
                                     std::span<const double> weights = {}) {
    const std::size_t n = sorted.size();
    if (n == 0) throw InsufficientDataError("kolmogorov_distance_1d: empty data");
    if (!weights.empty() && weights.size() != n)
        throw DomainError("kolmogorov_distance_1d: weight/data size mismatch");
    double total = 0.0;
    if (weights.empty())
        total = static_cast<double>(n);
    else
        for (double w : weights) total += w;
    double d = 0.0, cum = 0.0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && sorted[j + 1] == sorted[i]) ++j;
        for (std::size_t m = i; m <= j; ++m) cum += weights.empty() ? 1.0 : weights[m];
        d = std::max(d, std::fabs(cum / total - model_cdf(sorted[i])));
        i = j + 1;
    }
    return d;
}

namespace detail {

// Minimum-cost assignment on a square matrix (potentials method, O(n^3)).
inline std::vector<int> hungarian(const std::vector<std::vector<double>>& cost) {
    const int n = static_cast<int>(cost.size());
    constexpr double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
    std::vector<int> p(n + 1, 0), way(n + 1, 0);
    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::vector<double> minv(n + 1, inf);
        std::vector<char> used(n + 1, 0);
        do {
            used[j0] = 1;
            const int i0 = p[j0];
            int j1 = -1;
            double delta = inf;
            for (int j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const double cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const int j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    std::vector<int> row_to_col(n, -1);
    for (int j = 1; j <= n; ++j)
        if (p[j] != 0) row_to_col[p[j] - 1] = j - 1;
    return row_to_col;
}

}  // namespace detail

// Fraction of misassigned points under the best relabelling permutation.
// Exhaustive search for K <= 4, Hungarian assignment above that.
inline double error_ratio(std::span<const int> predicted, std::span<const int> truth) {
    if (predicted.size() != truth.size())
        throw DomainError("error_ratio: label vectors differ in length");
    const std::size_t n = predicted.size();
    if (n == 0) throw DomainError("error_ratio: empty labellings");

    int k = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (predicted[i] < 0 || truth[i] < 0) throw DomainError("error_ratio: negative label");
        k = std::max({k, predicted[i] + 1, truth[i] + 1});
    }

    std::vector<std::vector<double>> conf(k, std::vector<double>(k, 0.0));
    for (std::size_t i = 0; i < n; ++i) conf[predicted[i]][truth[i]] += 1.0;

    double best_match = 0.0;
    if (k <= 4) {
        std::vector<int> perm(k);
        std::iota(perm.begin(), perm.end(), 0);
        do {
            double m = 0.0;
            for (int i = 0; i < k; ++i) m += conf[i][perm[i]];
            best_match = std::max(best_match, m);
        } while (std::next_permutation(perm.begin(), perm.end()));
    } else {
        std::vector<std::vector<double>> cost(k, std::vector<double>(k));
        for (int i = 0; i < k; ++i)
            for (int j = 0; j < k; ++j) cost[i][j] = -conf[i][j];
        const auto assign = detail::hungarian(cost);
        for (int i = 0; i < k; ++i) best_match += conf[i][assign[i]];
    }
    return 1.0 - best_match / static_cast<double>(n);
}

inline double accuracy(std::span<const int> predicted, std::span<const int> truth) {
    return 1.0 - error_ratio(predicted, truth);
}

// Mean silhouette coefficient with Euclidean distances. Singleton clusters
// score 0, as does the all-coincident degenerate case (max(a,b) = 0).
inline double mean_silhouette(std::span<const Point2> data, std::span<const int> labels) {
    const std::size_t n = data.size();
    if (labels.size() != n) throw DomainError("mean_silhouette: labels/data size mismatch");

    int k = 0;
    for (int z : labels) {
        if (z < 0) throw DomainError("mean_silhouette: negative label");
        k = std::max(k, z + 1);
    }
    std::vector<std::size_t> sizes(k, 0);
    for (int z : labels) ++sizes[z];
    int non_empty = 0;
    for (std::size_t s : sizes)
        if (s > 0) ++non_empty;
    if (non_empty < 2) throw DomainError("mean_silhouette: needs at least 2 non-empty clusters");
    if (n < static_cast<std::size_t>(non_empty) + 1)
        throw DomainError("mean_silhouette: needs N >= K+1");

    double total = 0.0;
    std::vector<double> sum_d(k);
    for (std::size_t i = 0; i < n; ++i) {
        std::fill(sum_d.begin(), sum_d.end(), 0.0);
        for (std::size_t j = 0; j < n; ++j) {
            if (i == j) continue;
            const double d = std::hypot(data[i].x1 - data[j].x1, data[i].x2 - data[j].x2);
            sum_d[labels[j]] += d;
        }
        const int zi = labels[i];
        if (sizes[zi] <= 1) continue;  // singleton scores 0
        const double a = sum_d[zi] / static_cast<double>(sizes[zi] - 1);
        double b = std::numeric_limits<double>::infinity();
        for (int c = 0; c < k; ++c) {
            if (c == zi || sizes[c] == 0) continue;
            b = std::min(b, sum_d[c] / static_cast<double>(sizes[c]));
        }
        const double denom = std::max(a, b);
        total += denom > 0.0 ? (b - a) / denom : 0.0;
    }
    return total / static_cast<double>(n);
}

}  // namespace cbmm
