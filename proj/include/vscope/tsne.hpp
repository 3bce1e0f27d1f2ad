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


// Barnes-Hut t-SNE with cosine or Euclidean input affinities, PCA
// initialization, early exaggeration, multi-restart selection by KL
// divergence, and trustworthiness scoring.

#ifndef VSCOPE_TSNE_HPP
#define VSCOPE_TSNE_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "vscope/common.hpp"
#include "vscope/error.hpp"
#include "vscope/quadtree.hpp"
#include "vscope/random.hpp"

namespace vscope {

enum class Metric { Cosine, Euclidean };
enum class InitMethod { Pca, Random };

inline std::string_view metric_name(Metric m) { return m == Metric::Cosine ? "cosine" : "euclidean"; }
inline std::string_view init_name(InitMethod m) { return m == InitMethod::Pca ? "pca" : "random"; }

inline Metric parse_metric(std::string_view s) {
    if (s == "cosine") return Metric::Cosine;
    if (s == "euclidean") return Metric::Euclidean;
    throw Error(ErrorCode::InvalidConfig, "unknown metric '" + std::string(s) + "'");
}

inline InitMethod parse_init(std::string_view s) {
    if (s == "pca") return InitMethod::Pca;
    if (s == "random") return InitMethod::Random;
    throw Error(ErrorCode::InvalidConfig, "unknown init '" + std::string(s) + "'");
}

struct TsneConfig {
    double perplexity = 30.0;
    double early_exaggeration = 15.0;
    int exaggeration_iters = 250;
    int n_iter = 5000;
    double learning_rate = 750.0;
    double theta = 0.5;
    Metric metric = Metric::Cosine;
    InitMethod init = InitMethod::Pca;
    double momentum_early = 0.5;
    double momentum_late = 0.8;
    int momentum_switch_iter = 250;
    int restarts = 3;
    std::uint64_t seed = 0;
    int trust_k = 12;
    /// Restarts scoring below this trustworthiness lose the KL selection
    /// unless no restart reaches it.
    double min_trust = 0.0;
    /// Iterations between KL trace samples.
    int kl_every = 100;
    std::size_t jobs = 1;

    /// Checks the static invariants, plus the size-dependent ones when n > 0.
    void validate(std::size_t n = 0) const {
        auto bad = [](const std::string& m) { return Error(ErrorCode::InvalidConfig, m); };
        if (!(perplexity >= 2.0)) throw bad("perplexity must be >= 2");
        if (n_iter < exaggeration_iters) throw bad("n_iter must be >= exaggeration_iters");
        if (exaggeration_iters < 0 || momentum_switch_iter < 0) throw bad("iteration counts must be >= 0");
        if (!(learning_rate > 0.0)) throw bad("learning_rate must be > 0");
        if (!(theta >= 0.0 && theta <= 1.0)) throw bad("theta must lie in [0, 1]");
        if (!(early_exaggeration > 0.0)) throw bad("early_exaggeration must be > 0");
        if (restarts < 1) throw bad("restarts must be >= 1");
        if (kl_every < 1) throw bad("kl_every must be >= 1");
        if (n > 0 && !(3.0 * perplexity < static_cast<double>(n))) {
            throw bad("need 3 * perplexity < N (perplexity " + format_real(perplexity) + ", N " + std::to_string(n) + ")");
        }
        if (n > 0 && (trust_k < 1 || 2 * static_cast<std::size_t>(trust_k) >= n)) {
            throw Error(ErrorCode::KTooLarge, "trustworthiness k = " + std::to_string(trust_k));
        }
    }
};

// ---------------------------------------------------------------------------
// Distances

inline double cosine_distance(std::span<const double> x, std::span<const double> y) {
    assert(x.size() == y.size());
    double xy = 0.0, xx = 0.0, yy = 0.0;
    for (std::size_t d = 0; d < x.size(); ++d) {
        xy += x[d] * y[d];
        xx += x[d] * x[d];
        yy += y[d] * y[d];
    }
    if (!(xx > 0.0) || !(yy > 0.0)) throw Error(ErrorCode::ZeroVector, "cosine distance of a zero vector");
    return std::clamp(1.0 - xy / (std::sqrt(xx) * std::sqrt(yy)), 0.0, 2.0);
}

inline double squared_euclidean(std::span<const double> x, std::span<const double> y) {
    double s = 0.0;
    for (std::size_t d = 0; d < x.size(); ++d) {
        const double t = x[d] - y[d];
        s += t * t;
    }
    return s;
}

/// Dissimilarity fed to the Gaussian input kernel exp(-beta * d): squared
/// Euclidean distance, or cosine distance (half the squared Euclidean
/// distance between the unit-normalized vectors).
class Dissimilarity {
public:
    Dissimilarity(const MatrixD& x, Metric metric) : x_(x), metric_(metric) {
        if (metric_ == Metric::Cosine) {
            unit_ = MatrixD(x.rows(), x.cols());
            for (std::size_t i = 0; i < x.rows(); ++i) {
                auto row = x.row(i);
                double nrm = 0.0;
                for (double v : row) nrm += v * v;
                nrm = std::sqrt(nrm);
                if (!(nrm > 0.0)) throw Error(ErrorCode::ZeroVector, "row " + std::to_string(i) + " has zero norm");
                auto out = unit_.row(i);
                for (std::size_t d = 0; d < row.size(); ++d) out[d] = row[d] / nrm;
            }
        }
    }

    double operator()(std::size_t i, std::size_t j) const {
        if (metric_ == Metric::Euclidean) return squared_euclidean(x_.row(i), x_.row(j));
        auto a = unit_.row(i), b = unit_.row(j);
        double dot = 0.0;
        for (std::size_t d = 0; d < a.size(); ++d) dot += a[d] * b[d];
        return std::clamp(1.0 - dot, 0.0, 2.0);
    }

    std::size_t size() const noexcept { return x_.rows(); }

private:
    const MatrixD& x_;
    Metric metric_;
    MatrixD unit_;
};

// ---------------------------------------------------------------------------
// Sparse affinity matrices

/// Compressed sparse rows. Column indices are ascending within a row.
struct SparseRows {
    std::size_t n = 0;
    std::vector<std::size_t> row_ptr{0};
    std::vector<std::size_t> col;
    std::vector<double> val;

    std::size_t nnz() const noexcept { return val.size(); }

    double sum() const { return std::accumulate(val.begin(), val.end(), 0.0); }

    double at(std::size_t i, std::size_t j) const {
        auto b = col.begin() + static_cast<std::ptrdiff_t>(row_ptr[i]);
        auto e = col.begin() + static_cast<std::ptrdiff_t>(row_ptr[i + 1]);
        auto it = std::lower_bound(b, e, j);
        return (it != e && *it == j) ? val[static_cast<std::size_t>(it - col.begin())] : 0.0;
    }

    MatrixD to_dense() const {
        MatrixD out(n, n);
        for (std::size_t i = 0; i < n; ++i) {
            for (auto k = row_ptr[i]; k < row_ptr[i + 1]; ++k) out(i, col[k]) = val[k];
        }
        return out;
    }

    static SparseRows from_dense(const MatrixD& m) {
        SparseRows s;
        s.n = m.rows();
        s.row_ptr.assign(1, 0);
        for (std::size_t i = 0; i < m.rows(); ++i) {
            for (std::size_t j = 0; j < m.cols(); ++j) {
                if (m(i, j) != 0.0) {
                    s.col.push_back(j);
                    s.val.push_back(m(i, j));
                }
            }
            s.row_ptr.push_back(s.col.size());
        }
        return s;
    }
};

struct Affinities {
    SparseRows conditional;     // row i holds p_{j|i} over i's neighbors
    std::vector<double> beta;   // kernel precision per row
    std::vector<std::size_t> failed_rows;  // BandwidthSearchFailed, kept at last iterate
};

namespace detail {

/// Bandwidth search for one row. `d` holds dissimilarities to the row's
/// neighbors; on return `p` holds the normalized kernel. Entropy is matched to
/// log2(perplexity) bits within `tol_bits`, using safeguarded Newton steps in
/// log(beta) with bisection fallback, at most `max_steps` updates.
inline bool search_bandwidth(std::span<const double> d, double perplexity, std::span<double> p, double& beta_out,
                             double tol_bits = 1e-5, int max_steps = 50) {
    const std::size_t k = d.size();
    const double d0 = *std::min_element(d.begin(), d.end());
    double mean_gap = 0.0;
    for (double v : d) mean_gap += v - d0;
    mean_gap /= static_cast<double>(k);
    const double target = std::log(perplexity);  // nats
    const double tol = tol_bits * std::log(2.0);
    if (!(mean_gap > 0.0)) {
        // Equal dissimilarities: uniform row regardless of beta.
        std::fill(p.begin(), p.end(), 1.0 / static_cast<double>(k));
        beta_out = 1.0;
        return std::abs(std::log(static_cast<double>(k)) - target) <= tol;
    }
    double log_beta = -std::log(mean_gap);
    double lo = -std::numeric_limits<double>::infinity(), hi = std::numeric_limits<double>::infinity();
    bool ok = false;
    for (int step = 0; step <= max_steps; ++step) {
        const double beta = std::exp(log_beta);
        double sum = 0.0, m1 = 0.0, m2 = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            const double g = d[j] - d0;
            p[j] = std::exp(-beta * g);
            sum += p[j];
            m1 += g * p[j];
            m2 += g * g * p[j];
        }
        m1 /= sum;
        m2 /= sum;
        const double entropy = std::log(sum) + beta * m1;
        const double diff = entropy - target;
        for (auto& v : p) v /= sum;
        beta_out = beta;
        if (std::abs(diff) <= tol) {
            ok = true;
            break;
        }
        if (step == max_steps) break;
        // Entropy falls as beta grows.
        if (diff > 0.0) {
            lo = log_beta;
        } else {
            hi = log_beta;
        }
        // dH/d(log beta) = -beta^2 Var(g)
        const double slope = -beta * beta * (m2 - m1 * m1);
        double next = slope < 0.0 ? log_beta - diff / slope : std::numeric_limits<double>::quiet_NaN();
        if (!(next > lo && next < hi)) {
            if (std::isinf(hi)) {
                next = log_beta + 1.0;
            } else if (std::isinf(lo)) {
                next = log_beta - 1.0;
            } else {
                next = 0.5 * (lo + hi);
            }
        }
        log_beta = next;
    }
    return ok;
}

}  // namespace detail

/// Row-conditional Gaussian affinities over each point's
/// min(N - 1, floor(3 * perplexity)) nearest neighbors (ties by index).
inline Affinities conditional_affinities(const MatrixD& x, double perplexity, Metric metric = Metric::Cosine,
                                         std::size_t jobs = 1) {
    const std::size_t n = x.rows();
    if (n < 2) throw Error(ErrorCode::InvalidConfig, "need at least 2 points");
    const std::size_t k = std::min<std::size_t>(n - 1, static_cast<std::size_t>(std::floor(3.0 * perplexity)));
    if (k < 1) throw Error(ErrorCode::InvalidConfig, "perplexity too small");
    const Dissimilarity dist(x, metric);

    std::vector<std::size_t> nbr(n * k);
    std::vector<double> prob(n * k);
    std::vector<double> beta(n);
    std::vector<char> ok(n);
    parallel_for(n, jobs, [&](std::size_t i) {
        std::vector<std::pair<double, std::size_t>> cand;
        cand.reserve(n - 1);
        for (std::size_t j = 0; j < n; ++j) {
            if (j != i) cand.emplace_back(dist(i, j), j);
        }
        std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(k), cand.end());
        std::sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(k),
                  [](const auto& a, const auto& b) { return a.second < b.second; });
        std::vector<double> d(k);
        for (std::size_t m = 0; m < k; ++m) {
            d[m] = cand[m].first;
            nbr[i * k + m] = cand[m].second;
        }
        ok[i] = detail::search_bandwidth(d, perplexity, std::span<double>(prob.data() + i * k, k), beta[i]);
    });

    Affinities out;
    out.beta = std::move(beta);
    out.conditional.n = n;
    out.conditional.col = std::move(nbr);
    out.conditional.val = std::move(prob);
    out.conditional.row_ptr.resize(n + 1);
    for (std::size_t i = 0; i <= n; ++i) out.conditional.row_ptr[i] = i * k;
    for (std::size_t i = 0; i < n; ++i) {
        if (!ok[i]) out.failed_rows.push_back(i);
    }
    return out;
}

inline constexpr double kAffinityFloor = 1e-12;

/// P_ij = (p_{j|i} + p_{i|j}) / (2N), floored at 1e-12 over the stored pattern.
inline SparseRows symmetrize(const SparseRows& cond) {
    const std::size_t n = cond.n;
    std::vector<std::vector<std::pair<std::size_t, double>>> rows(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (auto k = cond.row_ptr[i]; k < cond.row_ptr[i + 1]; ++k) {
            rows[i].emplace_back(cond.col[k], cond.val[k]);
            rows[cond.col[k]].emplace_back(i, cond.val[k]);
        }
    }
    const double scale = 1.0 / (2.0 * static_cast<double>(n));
    SparseRows out;
    out.n = n;
    out.row_ptr.assign(1, 0);
    for (std::size_t i = 0; i < n; ++i) {
        auto& r = rows[i];
        std::sort(r.begin(), r.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
        for (std::size_t m = 0; m < r.size();) {
            const std::size_t j = r[m].first;
            double v = 0.0;
            for (; m < r.size() && r[m].first == j; ++m) v += r[m].second;
            out.col.push_back(j);
            out.val.push_back(std::max(v * scale, kAffinityFloor));
        }
        out.row_ptr.push_back(out.col.size());
    }
    return out;
}

// ---------------------------------------------------------------------------
// Initialization

struct Projection {
    MatrixD coords;                 // N x 2, unscaled
    std::vector<double> eigenvalues;  // descending, top two
};

/// Projection of mean-centered data onto its top two principal axes. Each
/// axis is signed so its largest-magnitude loading is positive.
inline Projection principal_projection(const MatrixD& x) {
    const std::size_t n = x.rows(), dim = x.cols();
    Eigen::MatrixXd centered(n, dim);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t d = 0; d < dim; ++d) centered(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(d)) = x(i, d);
    }
    centered.rowwise() -= centered.colwise().mean();
    const Eigen::MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(std::max<std::size_t>(n - 1, 1));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
    const auto& values = solver.eigenvalues();    // ascending
    const auto& vectors = solver.eigenvectors();
    Projection out;
    out.coords = MatrixD(n, 2);
    for (int c = 0; c < 2; ++c) {
        const auto idx = static_cast<Eigen::Index>(dim) - 1 - c;
        if (idx < 0) {
            out.eigenvalues.push_back(0.0);
            continue;
        }
        Eigen::VectorXd axis = vectors.col(idx);
        Eigen::Index arg = 0;
        axis.cwiseAbs().maxCoeff(&arg);
        if (axis(arg) < 0.0) axis = -axis;
        const Eigen::VectorXd proj = centered * axis;
        for (std::size_t i = 0; i < n; ++i) out.coords(i, static_cast<std::size_t>(c)) = proj(static_cast<Eigen::Index>(i));
        out.eigenvalues.push_back(std::max(values(idx), 0.0));
    }
    return out;
}

struct Init {
    MatrixD coords;
    bool degenerate_fallback = false;
};

inline constexpr double kInitStd = 1e-4;

inline MatrixD gaussian_init(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    MatrixD y(n, 2);
    for (auto& v : y.data()) v = kInitStd * rng.normal();
    return y;
}

/// PCA projection with each column rescaled to standard deviation 1e-4. A
/// covariance whose top two eigenvalues are not both positive falls back to a
/// seeded Gaussian with the same spread.
inline Init pca_init(const MatrixD& x, std::uint64_t seed) {
    assert(x.rows() >= 2);
    auto proj = principal_projection(x);
    const double scale = std::max(proj.eigenvalues[0], 1e-300);
    if (!(proj.eigenvalues[0] > 1e-12) || !(proj.eigenvalues[1] > 1e-12 * scale)) {
        return {gaussian_init(x.rows(), seed), true};
    }
    for (std::size_t c = 0; c < 2; ++c) {
        double mean = 0.0, sq = 0.0;
        for (std::size_t i = 0; i < x.rows(); ++i) mean += proj.coords(i, c);
        mean /= static_cast<double>(x.rows());
        for (std::size_t i = 0; i < x.rows(); ++i) sq += (proj.coords(i, c) - mean) * (proj.coords(i, c) - mean);
        const double sd = std::sqrt(sq / static_cast<double>(x.rows()));
        if (!(sd > 0.0)) return {gaussian_init(x.rows(), seed), true};
        for (std::size_t i = 0; i < x.rows(); ++i) proj.coords(i, c) = (proj.coords(i, c) - mean) * (kInitStd / sd);
    }
    return {std::move(proj.coords), false};
}

// ---------------------------------------------------------------------------
// Objective and gradient

struct Gradient {
    MatrixD grad;   // N x 2
    double z = 0;   // sum over i != j of 1 / (1 + |y_i - y_j|^2), as approximated
};

/// dKL/dY = 4 sum_j (x * P_ij - q_ij) w_ij (y_i - y_j) with x the exaggeration.
/// Attraction runs over the stored entries of P; repulsion and its normalizer
/// come from one Barnes-Hut traversal per point. Per-point sums are reduced in
/// index order, so the result does not depend on `jobs`.
inline Gradient bh_gradient(const SparseRows& p, const MatrixD& y, double theta, double exaggeration = 1.0,
                            std::size_t jobs = 1) {
    const std::size_t n = y.rows();
    const QuadTree tree(y);
    std::vector<RepulsionSum> rep(n);
    Gradient out;
    out.grad = MatrixD(n, 2);
    const auto& order = tree.order();
    parallel_for(n, jobs, [&](std::size_t pos) {
        const std::size_t i = order[pos];
        rep[i] = tree.repulsion(i, theta);
        double ax = 0.0, ay = 0.0;
        for (auto k = p.row_ptr[i]; k < p.row_ptr[i + 1]; ++k) {
            const std::size_t j = p.col[k];
            const double dx = y(i, 0) - y(j, 0), dy = y(i, 1) - y(j, 1);
            const double w = 1.0 / (1.0 + dx * dx + dy * dy);
            ax += p.val[k] * w * dx;
            ay += p.val[k] * w * dy;
        }
        out.grad(i, 0) = ax;
        out.grad(i, 1) = ay;
    });
    double z = 0.0;
    for (const auto& r : rep) z += r.z;
    out.z = z;
    const double inv_z = 1.0 / z;
    for (std::size_t i = 0; i < n; ++i) {
        out.grad(i, 0) = 4.0 * (exaggeration * out.grad(i, 0) - rep[i].fx * inv_z);
        out.grad(i, 1) = 4.0 * (exaggeration * out.grad(i, 1) - rep[i].fy * inv_z);
    }
    return out;
}

/// sum_{i != j} P_ij log(P_ij / Q_ij) with Q the normalized Student-t kernel
/// of Y. Exact O(N^2) normalizer.
inline double kl_divergence(const SparseRows& p, const MatrixD& y) {
    const std::size_t n = y.rows();
    double z = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double zi = 0.0;
        for (std::size_t j = i + 1; j < n; ++j) {
            const double dx = y(i, 0) - y(j, 0), dy = y(i, 1) - y(j, 1);
            zi += 1.0 / (1.0 + dx * dx + dy * dy);
        }
        z += 2.0 * zi;
    }
    double kl = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (auto k = p.row_ptr[i]; k < p.row_ptr[i + 1]; ++k) {
            const std::size_t j = p.col[k];
            if (j == i || p.val[k] <= 0.0) continue;
            const double dx = y(i, 0) - y(j, 0), dy = y(i, 1) - y(j, 1);
            const double q = 1.0 / ((1.0 + dx * dx + dy * dy) * z);
            kl += p.val[k] * std::log(p.val[k] / q);
        }
    }
    return std::max(kl, 0.0);
}

// ---------------------------------------------------------------------------
// Trustworthiness

/// T(k) = 1 - 2 / (N k (2N - 3k - 1)) * sum_i sum_{j in U_i(k)} (r(i, j) - k),
/// where U_i(k) holds the low-dimensional k nearest neighbors of i that are
/// not among its high-dimensional k nearest, and r(i, j) is j's 1-based rank
/// among i's high-dimensional neighbors. Ties rank by index. Clipped to [0, 1].
inline double trustworthiness(const MatrixD& x_high, const MatrixD& y_low, int k = 12, Metric metric = Metric::Euclidean,
                              std::size_t jobs = 1) {
    const std::size_t n = x_high.rows();
    if (k < 1 || 2 * static_cast<std::size_t>(k) >= n) {
        throw Error(ErrorCode::KTooLarge, "k = " + std::to_string(k) + " with N = " + std::to_string(n));
    }
    const auto kk = static_cast<std::size_t>(k);
    const Dissimilarity high(x_high, metric);
    std::vector<double> penalty(n, 0.0);
    parallel_for(n, jobs, [&](std::size_t i) {
        std::vector<std::pair<double, std::size_t>> low;
        low.reserve(n - 1);
        std::vector<double> dh(n);
        for (std::size_t j = 0; j < n; ++j) {
            dh[j] = high(i, j);
            if (j == i) continue;
            low.emplace_back(squared_euclidean(y_low.row(i), y_low.row(j)), j);
        }
        std::partial_sort(low.begin(), low.begin() + static_cast<std::ptrdiff_t>(kk), low.end());
        double sum = 0.0;
        for (std::size_t m = 0; m < kk; ++m) {
            const std::size_t j = low[m].second;
            std::size_t rank = 1;
            for (std::size_t t = 0; t < n; ++t) {
                if (t == i || t == j) continue;
                if (dh[t] < dh[j] || (dh[t] == dh[j] && t < j)) ++rank;
            }
            if (rank > kk) sum += static_cast<double>(rank - kk);
        }
        penalty[i] = sum;
    });
    double total = 0.0;
    for (double v : penalty) total += v;
    const double nd = static_cast<double>(n), kd = static_cast<double>(k);
    const double t = 1.0 - 2.0 / (nd * kd * (2.0 * nd - 3.0 * kd - 1.0)) * total;
    return std::clamp(t, 0.0, 1.0);
}

// ---------------------------------------------------------------------------
// Optimization

struct KlSample {
    int iteration = 0;  // number of completed updates
    double kl = 0.0;
};

struct RestartOutcome {
    std::uint64_t seed = 0;
    bool failed = false;       // NonFiniteIterate
    std::string failure;
    double final_kl = std::numeric_limits<double>::infinity();
    double kl_after_exaggeration = std::numeric_limits<double>::infinity();
    double trustworthiness = 0.0;
    bool degenerate_init = false;
};

struct TsneResult {
    MatrixD coords;
    double final_kl = 0.0;
    double trustworthiness_k12 = 0.0;  // at TsneConfig::trust_k
    int restart_index = 0;
    std::vector<KlSample> kl_trace;  // of the selected restart
    double kl_after_exaggeration = 0.0;
    std::vector<RestartOutcome> restarts;
    std::vector<std::size_t> bandwidth_failures;
    bool below_min_trust = false;
};

struct OptimizeOutcome {
    MatrixD y;
    std::vector<KlSample> trace;
    double kl_after_exaggeration = std::numeric_limits<double>::infinity();
};

/// Gradient descent with momentum, per-coordinate gains and re-centering.
/// Gains grow by 0.2 when the gradient sign differs from the previous update
/// and shrink by 0.8 otherwise, floored at 0.01.
inline OptimizeOutcome optimize_embedding(const SparseRows& p, MatrixD y, const TsneConfig& cfg) {
    const std::size_t n = y.rows();
    auto sign = [](double v) { return (v > 0.0) - (v < 0.0); };
    MatrixD update(n, 2), gains(n, 2, 1.0);
    OptimizeOutcome out;
    for (int it = 0; it < cfg.n_iter; ++it) {
        const double exaggeration = it < cfg.exaggeration_iters ? cfg.early_exaggeration : 1.0;
        const double momentum = it < cfg.momentum_switch_iter ? cfg.momentum_early : cfg.momentum_late;
        const auto g = bh_gradient(p, y, cfg.theta, exaggeration, cfg.jobs);
        auto& gd = g.grad.data();
        auto& ud = update.data();
        auto& gn = gains.data();
        auto& yd = y.data();
        for (std::size_t e = 0; e < gd.size(); ++e) {
            const bool same_sign = sign(gd[e]) == sign(ud[e]);
            gn[e] = same_sign ? std::max(gn[e] * 0.8, 0.01) : gn[e] + 0.2;
            ud[e] = momentum * ud[e] - cfg.learning_rate * gn[e] * gd[e];
            yd[e] += ud[e];
        }
        double mx = 0.0, my = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            mx += y(i, 0);
            my += y(i, 1);
        }
        mx /= static_cast<double>(n);
        my /= static_cast<double>(n);
        bool finite = std::isfinite(mx) && std::isfinite(my);
        for (std::size_t i = 0; i < n; ++i) {
            y(i, 0) -= mx;
            y(i, 1) -= my;
        }
        if (!finite) throw Error(ErrorCode::NonFiniteIterate, "iteration " + std::to_string(it + 1));
        const int done = it + 1;
        const bool end_exaggeration = done == cfg.exaggeration_iters;
        if (done % cfg.kl_every == 0 || end_exaggeration || done == cfg.n_iter) {
            const double kl = kl_divergence(p, y);
            out.trace.push_back({done, kl});
            if (end_exaggeration) out.kl_after_exaggeration = kl;
        }
    }
    if (cfg.exaggeration_iters == 0) out.kl_after_exaggeration = kl_divergence(p, y);
    out.y = std::move(y);
    return out;
}

/// Runs `restarts` optimizations with seeds seed, seed + 1, ... over one shared
/// affinity matrix and keeps the restart with the lowest final KL among those
/// meeting `min_trust` (among all finished restarts if none does). With PCA
/// init, restart 0 starts from the PCA projection itself and later restarts
/// add seeded jitter at 1% of the initial spread.
inline TsneResult run_tsne(const MatrixD& x, const TsneConfig& cfg) {
    cfg.validate(x.rows());
    const auto aff = conditional_affinities(x, cfg.perplexity, cfg.metric, cfg.jobs);
    const auto p = symmetrize(aff.conditional);

    std::optional<Init> pca;
    if (cfg.init == InitMethod::Pca) pca = pca_init(x, cfg.seed);

    TsneResult result;
    result.bandwidth_failures = aff.failed_rows;
    std::vector<OptimizeOutcome> runs;
    for (int r = 0; r < cfg.restarts; ++r) {
        RestartOutcome info;
        info.seed = cfg.seed + static_cast<std::uint64_t>(r);
        MatrixD y0;
        if (pca) {
            y0 = pca->coords;
            info.degenerate_init = pca->degenerate_fallback;
            if (r > 0) {
                Rng rng(info.seed);
                for (auto& v : y0.data()) v += 0.01 * kInitStd * rng.normal();
            }
        } else {
            y0 = gaussian_init(x.rows(), info.seed);
        }
        try {
            auto run = optimize_embedding(p, std::move(y0), cfg);
            info.final_kl = run.trace.empty() ? kl_divergence(p, run.y) : run.trace.back().kl;
            info.kl_after_exaggeration = run.kl_after_exaggeration;
            info.trustworthiness = trustworthiness(x, run.y, cfg.trust_k, cfg.metric, cfg.jobs);
            runs.push_back(std::move(run));
        } catch (const Error& e) {
            if (e.code() != ErrorCode::NonFiniteIterate) throw;
            info.failed = true;
            info.failure = e.what();
            runs.push_back({});
        }
        result.restarts.push_back(std::move(info));
    }

    auto pick = [&](bool require_trust) {
        std::optional<std::size_t> best;
        for (std::size_t r = 0; r < result.restarts.size(); ++r) {
            const auto& info = result.restarts[r];
            if (info.failed || (require_trust && info.trustworthiness < cfg.min_trust)) continue;
            if (!best || info.final_kl < result.restarts[*best].final_kl) best = r;
        }
        return best;
    };
    auto best = pick(true);
    if (!best) {
        best = pick(false);
        result.below_min_trust = true;
    }
    if (!best) throw Error(ErrorCode::NonFiniteIterate, "every restart diverged");
    const auto& chosen = result.restarts[*best];
    result.restart_index = static_cast<int>(*best);
    result.final_kl = chosen.final_kl;
    result.trustworthiness_k12 = chosen.trustworthiness;
    result.kl_after_exaggeration = chosen.kl_after_exaggeration;
    result.kl_trace = std::move(runs[*best].trace);
    result.coords = std::move(runs[*best].y);
    return result;
}

}  // namespace vscope

#endif  // VSCOPE_TSNE_HPP
