// Minimal static 3D kd-tree for fixed-radius neighbor queries. Built once
// over a point set; queries return indices into the original array.

#pragma once

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <vector>

#include "instaloc/geometry.hpp"

namespace instaloc {

class KdTree3 {
  public:
    explicit KdTree3(const std::vector<Point3>& points) : points_(points) {
        indices_.resize(points.size());
        std::iota(indices_.begin(), indices_.end(), 0);
        if (!indices_.empty()) build(0, indices_.size(), 0);
    }

    /// Indices of all points within `radius` of `center`, ascending.
    std::vector<size_t> radius_search(const Point3& center, double radius) const {
        std::vector<size_t> found;
        if (!indices_.empty()) search(0, indices_.size(), 0, center, radius * radius, found);
        std::sort(found.begin(), found.end());
        return found;
    }

  private:
    static double coord(const Point3& p, int axis) {
        return axis == 0 ? p.x : (axis == 1 ? p.y : p.z);
    }

    // Median split over indices_[lo, hi); the median element stays in place
    // as the node, halves are built recursively in the same layout.
    void build(size_t lo, size_t hi, int axis) {
        if (hi - lo <= 1) return;
        const size_t mid = lo + (hi - lo) / 2;
        std::nth_element(indices_.begin() + static_cast<ptrdiff_t>(lo),
                         indices_.begin() + static_cast<ptrdiff_t>(mid),
                         indices_.begin() + static_cast<ptrdiff_t>(hi),
                         [&](size_t a, size_t b) {
                             const double ca = coord(points_[a], axis), cb = coord(points_[b], axis);
                             return ca < cb || (ca == cb && a < b);
                         });
        build(lo, mid, (axis + 1) % 3);
        build(mid + 1, hi, (axis + 1) % 3);
    }

    void search(size_t lo, size_t hi, int axis, const Point3& center, double r2,
                std::vector<size_t>& found) const {
        if (lo >= hi) return;
        const size_t mid = lo + (hi - lo) / 2;
        const Point3& p = points_[indices_[mid]];
        if ((p - center).squared_norm() <= r2) found.push_back(indices_[mid]);
        const double delta = coord(center, axis) - coord(p, axis);
        const int next = (axis + 1) % 3;
        if (delta <= 0.0 || delta * delta <= r2) search(lo, mid, next, center, r2, found);
        if (delta >= 0.0 || delta * delta <= r2) search(mid + 1, hi, next, center, r2, found);
    }

    const std::vector<Point3>& points_;
    std::vector<size_t> indices_;
};

}  // namespace instaloc
