// Copyright 2026 The vscope Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


// Independent reference computations used as test oracles. Nothing here
// calls into the code paths it is used to check.

#ifndef VSCOPE_TESTS_ORACLES_HPP
#define VSCOPE_TESTS_ORACLES_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <utility>
#include <vector>

namespace oracle {

using Dense = std::vector<std::vector<double>>;

/// Every frame whose center (f + 0.5) / fps lies in [start, end).
inline std::vector<std::size_t> frames_by_enumeration(double start, double end, double fps, std::size_t frames) {
    std::vector<std::size_t> out;
    for (std::size_t f = 0; f < frames; ++f) {
        const double c = (static_cast<double>(f) + 0.5) / fps;
        if (c >= start && c < end) out.push_back(f);
    }
    return out;
}

/// Direct O(N^2) t-SNE gradient from a dense joint P.
inline Dense exact_tsne_gradient(const Dense& p, const Dense& y) {
    const std::size_t n = y.size();
    double z = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (i == j) continue;
            const double dx = y[i][0] - y[j][0], dy = y[i][1] - y[j][1];
            z += 1.0 / (1.0 + dx * dx + dy * dy);
        }
    }
    Dense g(n, std::vector<double>(2, 0.0));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (i == j) continue;
            const double dx = y[i][0] - y[j][0], dy = y[i][1] - y[j][1];
            const double w = 1.0 / (1.0 + dx * dx + dy * dy);
            const double q = w / z;
            g[i][0] += 4.0 * (p[i][j] - q) * w * dx;
            g[i][1] += 4.0 * (p[i][j] - q) * w * dy;
        }
    }
    return g;
}

inline double exact_kl(const Dense& p, const Dense& y) {
    const std::size_t n = y.size();
    double z = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (i == j) continue;
            const double dx = y[i][0] - y[j][0], dy = y[i][1] - y[j][1];
            z += 1.0 / (1.0 + dx * dx + dy * dy);
        }
    }
    double kl = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (i == j || p[i][j] <= 0.0) continue;
            const double dx = y[i][0] - y[j][0], dy = y[i][1] - y[j][1];
            const double q = 1.0 / (1.0 + dx * dx + dy * dy) / z;
            kl += p[i][j] * std::log(p[i][j] / q);
        }
    }
    return kl;
}

/// Cyclic Jacobi eigen-decomposition of a symmetric matrix. Returns
/// (eigenvalues, eigenvectors as columns), sorted by descending eigenvalue.
inline std::pair<std::vector<double>, Dense> jacobi_eigen(Dense a) {
    const std::size_t n = a.size();
    Dense v(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i) v[i][i] = 1.0;
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) off += a[i][j] * a[i][j];
        if (off < 1e-30) break;
        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                if (std::abs(a[p][q]) < 1e-300) continue;
                const double theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0), s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a[k][p], akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a[p][k], aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double vkp = v[k][p], vkq = v[k][q];
                    v[k][p] = c * vkp - s * vkq;
                    v[k][q] = s * vkp + c * vkq;
                }
            }
        }
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return a[x][x] > a[y][y]; });
    std::vector<double> values;
    Dense vectors(n, std::vector<double>(n));
    for (std::size_t c = 0; c < n; ++c) {
        values.push_back(a[order[c]][order[c]]);
        for (std::size_t r = 0; r < n; ++r) vectors[r][c] = v[r][order[c]];
    }
    return {values, vectors};
}

/// Trustworthiness from a full rank table built by sorting every row.
inline double trustworthiness_bruteforce(const std::function<double(std::size_t, std::size_t)>& high,
                                         const std::function<double(std::size_t, std::size_t)>& low, std::size_t n,
                                         std::size_t k) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<std::size_t> by_high, by_low;
        for (std::size_t j = 0; j < n; ++j) {
            if (j != i) {
                by_high.push_back(j);
                by_low.push_back(j);
            }
        }
        auto sorter = [&](const std::function<double(std::size_t, std::size_t)>& d) {
            return [&, i](std::size_t a, std::size_t b) {
                const double da = d(i, a), db = d(i, b);
                return da < db || (da == db && a < b);
            };
        };
        std::sort(by_high.begin(), by_high.end(), sorter(high));
        std::sort(by_low.begin(), by_low.end(), sorter(low));
        std::vector<std::size_t> rank(n, 0);
        for (std::size_t r = 0; r < by_high.size(); ++r) rank[by_high[r]] = r + 1;
        for (std::size_t m = 0; m < k; ++m) {
            const std::size_t j = by_low[m];
            if (rank[j] > k) total += static_cast<double>(rank[j] - k);
        }
    }
    const double nd = static_cast<double>(n), kd = static_cast<double>(k);
    return 1.0 - 2.0 / (nd * kd * (2.0 * nd - 3.0 * kd - 1.0)) * total;
}

/// Nearest-centroid classifier accuracy on (x, y) using centroids fitted on
/// the same data.
inline double nearest_centroid_accuracy(const Dense& x, const std::vector<int>& y, int classes) {
    const std::size_t dim = x.front().size();
    Dense centroid(static_cast<std::size_t>(classes), std::vector<double>(dim, 0.0));
    std::vector<double> count(static_cast<std::size_t>(classes), 0.0);
    for (std::size_t i = 0; i < x.size(); ++i) {
        const auto c = static_cast<std::size_t>(y[i]);
        for (std::size_t d = 0; d < dim; ++d) centroid[c][d] += x[i][d];
        count[c] += 1.0;
    }
    for (std::size_t c = 0; c < centroid.size(); ++c)
        for (auto& v : centroid[c]) v /= std::max(count[c], 1.0);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        std::size_t best = 0;
        double best_d = INFINITY;
        for (std::size_t c = 0; c < centroid.size(); ++c) {
            if (count[c] == 0) continue;
            double d = 0.0;
            for (std::size_t k = 0; k < dim; ++k) d += (x[i][k] - centroid[c][k]) * (x[i][k] - centroid[c][k]);
            if (d < best_d) {
                best_d = d;
                best = c;
            }
        }
        correct += static_cast<int>(best) == y[i];
    }
    return static_cast<double>(correct) / static_cast<double>(x.size());
}

}  // namespace oracle

#endif  // VSCOPE_TESTS_ORACLES_HPP
