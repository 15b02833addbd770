#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <optional>
#include <utility>
#include <vector>

namespace evstar {

/// Static k-d tree with exact nearest-neighbour and radius queries.
/// Ties in distance resolve to the lower point index.
template <std::size_t D>
class KdTree {
public:
    using Point = std::array<double, D>;

    KdTree() = default;
    explicit KdTree(std::vector<Point> points) : points_(std::move(points)) {
        order_.resize(points_.size());
        std::iota(order_.begin(), order_.end(), std::size_t{0});
        if (!points_.empty()) build(0, points_.size());
    }

    std::size_t size() const { return points_.size(); }
    bool empty() const { return points_.empty(); }
    const Point& point(std::size_t i) const { return points_[i]; }

    /// Index and distance of the nearest point, or nullopt when empty.
    std::optional<std::pair<std::size_t, double>> nearest(const Point& q) const {
        return nearest_if(q, [](std::size_t) { return true; });
    }

    /// Nearest point among those accepted by `keep`.
    template <typename Pred>
    std::optional<std::pair<std::size_t, double>> nearest_if(const Point& q, Pred&& keep) const {
        Best best;
        if (!points_.empty()) search_nearest(0, points_.size(), q, keep, best);
        if (best.index == kNone) return std::nullopt;
        return std::make_pair(best.index, std::sqrt(best.d2));
    }

    /// Indices of all points within distance r (inclusive), ascending.
    std::vector<std::size_t> radius(const Point& q, double r) const {
        std::vector<std::size_t> out;
        if (!points_.empty() && r >= 0.0) search_radius(0, points_.size(), q, r * r, out);
        std::sort(out.begin(), out.end());
        return out;
    }

private:
    static constexpr std::size_t kLeaf = 8;
    static constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();

    struct Best {
        std::size_t index = kNone;
        double d2 = std::numeric_limits<double>::infinity();
    };

    std::vector<Point> points_;
    std::vector<std::size_t> order_;
    std::vector<unsigned char> axis_;  // split axis per median slot

    static double dist2(const Point& a, const Point& b) {
        double s = 0.0;
        for (std::size_t k = 0; k < D; ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
        return s;
    }

    void build(std::size_t lo, std::size_t hi) {
        if (axis_.empty()) axis_.assign(points_.size(), 0);
        if (hi - lo <= kLeaf) return;
        std::size_t axis = 0;
        double spread = -1.0;
        for (std::size_t k = 0; k < D; ++k) {
            double mn = std::numeric_limits<double>::infinity(), mx = -mn;
            for (std::size_t i = lo; i < hi; ++i) {
                mn = std::min(mn, points_[order_[i]][k]);
                mx = std::max(mx, points_[order_[i]][k]);
            }
            if (mx - mn > spread) {
                spread = mx - mn;
                axis = k;
            }
        }
        const std::size_t mid = lo + (hi - lo) / 2;
        std::nth_element(order_.begin() + static_cast<std::ptrdiff_t>(lo), order_.begin() + static_cast<std::ptrdiff_t>(mid),
                         order_.begin() + static_cast<std::ptrdiff_t>(hi), [&](std::size_t a, std::size_t b) {
                             if (points_[a][axis] != points_[b][axis]) return points_[a][axis] < points_[b][axis];
                             return a < b;
                         });
        axis_[mid] = static_cast<unsigned char>(axis);
        build(lo, mid);
        build(mid + 1, hi);
    }

    template <typename Pred>
    void consider(std::size_t idx, const Point& q, Pred& keep, Best& best) const {
        const double d = dist2(points_[idx], q);
        if ((d < best.d2 || (d == best.d2 && idx < best.index)) && keep(idx)) best = {idx, d};
    }

    template <typename Pred>
    void search_nearest(std::size_t lo, std::size_t hi, const Point& q, Pred& keep, Best& best) const {
        if (hi - lo <= kLeaf) {
            for (std::size_t i = lo; i < hi; ++i) consider(order_[i], q, keep, best);
            return;
        }
        const std::size_t mid = lo + (hi - lo) / 2;
        const std::size_t axis = axis_[mid];
        const std::size_t pivot = order_[mid];
        const double diff = q[axis] - points_[pivot][axis];
        consider(pivot, q, keep, best);
        if (diff < 0.0) {
            search_nearest(lo, mid, q, keep, best);
            if (diff * diff <= best.d2) search_nearest(mid + 1, hi, q, keep, best);
        } else {
            search_nearest(mid + 1, hi, q, keep, best);
            if (diff * diff <= best.d2) search_nearest(lo, mid, q, keep, best);
        }
    }

    void search_radius(std::size_t lo, std::size_t hi, const Point& q, double r2, std::vector<std::size_t>& out) const {
        if (hi - lo <= kLeaf) {
            for (std::size_t i = lo; i < hi; ++i)
                if (dist2(points_[order_[i]], q) <= r2) out.push_back(order_[i]);
            return;
        }
        const std::size_t mid = lo + (hi - lo) / 2;
        const std::size_t axis = axis_[mid];
        const std::size_t pivot = order_[mid];
        const double diff = q[axis] - points_[pivot][axis];
        if (dist2(points_[pivot], q) <= r2) out.push_back(pivot);
        if (diff <= 0.0 || diff * diff <= r2) search_radius(lo, mid, q, r2, out);
        if (diff >= 0.0 || diff * diff <= r2) search_radius(mid + 1, hi, q, r2, out);
    }
};

}  // namespace evstar
