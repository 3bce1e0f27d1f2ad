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


// Point quadtree for the Barnes-Hut repulsion sum of 2-D t-SNE.

#ifndef VSCOPE_QUADTREE_HPP
#define VSCOPE_QUADTREE_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "vscope/common.hpp"


namespace vscope {

/// Repulsive sums for one query point: sum_j w_ij^2 (y_i - y_j) and
/// sum_j w_ij, with w_ij = 1 / (1 + |y_i - y_j|^2), over j != i.
struct RepulsionSum {
    double fx = 0.0;
    double fy = 0.0;
    double z = 0.0;
};

class QuadTree {
public:
    /// Cells holding at most this many points are not split further.
    static constexpr std::size_t kLeafSize = 16;
    static constexpr int kMaxDepth = 48;

    explicit QuadTree(const MatrixD& y) {
        assert(y.cols() == 2);
        const std::size_t n = y.rows();
        order_.resize(n);
        for (std::size_t i = 0; i < n; ++i) order_[i] = static_cast<std::uint32_t>(i);
        if (n == 0) return;
        double min_x = std::numeric_limits<double>::infinity(), min_y = min_x;
        double max_x = -min_x, max_y = -min_x;
        for (std::size_t i = 0; i < n; ++i) {
            min_x = std::min(min_x, y(i, 0));
            max_x = std::max(max_x, y(i, 0));
            min_y = std::min(min_y, y(i, 1));
            max_y = std::max(max_y, y(i, 1));
        }
        const double half = std::max({max_x - min_x, max_y - min_y, 1e-12}) * 0.5 * (1.0 + 1e-9) + 1e-300;
        scratch_.resize(n);
        cells_.reserve(2 * n / kLeafSize + 16);
        cells_.emplace_back();
        build(y, 0, (min_x + max_x) * 0.5, (min_y + max_y) * 0.5, half, 0, n, 0);
        scratch_.clear();
        scratch_.shrink_to_fit();
        px_.resize(n);
        py_.resize(n);
        for (std::size_t k = 0; k < n; ++k) {
            px_[k] = y(order_[k], 0);
            py_[k] = y(order_[k], 1);
        }
    }

    std::size_t node_count() const noexcept { return cells_.size(); }

    /// Point indices in depth-first leaf order. Queries issued in this order
    /// walk similar paths back to back.
    const std::vector<std::uint32_t>& order() const noexcept { return order_; }

    /// Barnes-Hut traversal: a cell is summarized by its center of mass when
    /// (cell diagonal) / (distance to center of mass) < theta. theta = 0 visits
    /// every point and reproduces the exact sum.
    RepulsionSum repulsion(std::size_t i, double theta) const {
        RepulsionSum out;
        if (cells_.empty()) return out;
        const auto self = static_cast<std::uint32_t>(i);
        const double qx = lookup_x(i), qy = lookup_y(i);
        const double theta2 = theta * theta;
        std::uint32_t stack[4 * kMaxDepth + 8];
        int top = 0;
        stack[top++] = 0;
        while (top > 0) {
            const Cell& c = cells_[stack[--top]];
            const double dx = qx - c.com_x, dy = qy - c.com_y;
            const double d2 = dx * dx + dy * dy;
            if (theta > 0.0 && c.size2 < theta2 * d2) {
                const double w = 1.0 / (1.0 + d2);
                const double mw = static_cast<double>(c.end - c.begin) * w;
                out.z += mw;
                out.fx += mw * w * dx;
                out.fy += mw * w * dy;
                continue;
            }
            if (c.children == 0) {
                for (auto k = c.begin; k < c.end; ++k) {
                    if (order_[k] == self) continue;
                    const double ex = qx - px_[k], ey = qy - py_[k];
                    const double w = 1.0 / (1.0 + ex * ex + ey * ey);
                    out.z += w;
                    out.fx += w * w * ex;
                    out.fy += w * w * ey;
                }
                continue;
            }
            for (std::uint32_t k = c.children; k-- > 0;) stack[top++] = c.first_child + k;
        }
        return out;
    }

private:
    struct Cell {
        double com_x = 0.0, com_y = 0.0;
        double size2 = 0.0;  // squared diagonal
        std::uint32_t begin = 0, end = 0;  // range in order_
        std::uint32_t first_child = 0;
        std::uint32_t children = 0;  // non-empty children, stored consecutively
    };

    double lookup_x(std::size_t i) const { return px_[position(i)]; }
    double lookup_y(std::size_t i) const { return py_[position(i)]; }
    std::size_t position(std::size_t i) const { return position_[i]; }

    void build(const MatrixD& y, std::size_t cell, double cx, double cy, double half, std::size_t begin,
               std::size_t end, int depth) {
        double sx = 0.0, sy = 0.0;
        bool same = true;
        for (std::size_t k = begin; k < end; ++k) {
            sx += y(order_[k], 0);
            sy += y(order_[k], 1);
            same = same && y(order_[k], 0) == y(order_[begin], 0) && y(order_[k], 1) == y(order_[begin], 1);
        }
        const double count = static_cast<double>(end - begin);
        {
            Cell& c = cells_[cell];
            c.com_x = sx / count;
            c.com_y = sy / count;
            c.size2 = 8.0 * half * half;
            c.begin = static_cast<std::uint32_t>(begin);
            c.end = static_cast<std::uint32_t>(end);
        }
        if (end - begin <= kLeafSize || same || depth >= kMaxDepth) {
            if (cell == 0) finish_positions();
            return;
        }
        // Stable four-way partition by quadrant.
        std::array<std::size_t, 5> bound{};
        auto quadrant = [&](std::uint32_t p) { return (y(p, 0) >= cx ? 1 : 0) + (y(p, 1) >= cy ? 2 : 0); };
        for (std::size_t k = begin; k < end; ++k) ++bound[static_cast<std::size_t>(quadrant(order_[k])) + 1];
        for (std::size_t q = 0; q < 4; ++q) bound[q + 1] += bound[q];
        std::array<std::size_t, 4> fill{};
        for (std::size_t k = begin; k < end; ++k) {
            const auto q = static_cast<std::size_t>(quadrant(order_[k]));
            scratch_[begin + bound[q] + fill[q]++] = order_[k];
        }
        std::copy(scratch_.begin() + static_cast<std::ptrdiff_t>(begin),
                  scratch_.begin() + static_cast<std::ptrdiff_t>(end), order_.begin() + static_cast<std::ptrdiff_t>(begin));

        const auto first = static_cast<std::uint32_t>(cells_.size());
        std::uint32_t children = 0;
        for (std::size_t q = 0; q < 4; ++q) children += bound[q + 1] > bound[q];
        cells_.resize(cells_.size() + children);
        cells_[cell].first_child = first;
        cells_[cell].children = children;
        const double h = half * 0.5;
        std::uint32_t slot = first;
        for (std::size_t q = 0; q < 4; ++q) {
            if (bound[q + 1] == bound[q]) continue;
            build(y, slot++, cx + ((q & 1) ? h : -h), cy + ((q & 2) ? h : -h), h, begin + bound[q],
                  begin + bound[q + 1], depth + 1);
        }
        if (cell == 0) finish_positions();
    }

    void finish_positions() {
        position_.resize(order_.size());
        for (std::size_t k = 0; k < order_.size(); ++k) position_[order_[k]] = static_cast<std::uint32_t>(k);
    }

    std::vector<Cell> cells_;
    std::vector<std::uint32_t> order_;
    std::vector<std::uint32_t> position_;
    std::vector<std::uint32_t> scratch_;
    std::vector<double> px_, py_;
};

}  // namespace vscope

#endif  // VSCOPE_QUADTREE_HPP
