#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "priorseg/grid.hpp"
#include "priorseg/phantom.hpp"

namespace testutil {

using namespace priorseg;

// Analytic signed distance to a disk, negative inside.
inline LevelSetField disk_sdf(int w, int h, double cx, double cy, double r) {
    LevelSetField f(w, h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) f.at(x, y) = std::hypot(x - cx, y - cy) - r;
    return f;
}

inline RegionMask disk_mask(int w, int h, double cx, double cy, double r) {
    return rasterize(ShapeSpec::disk(cx, cy, r), w, h);
}

inline RegionMask rect_mask(int w, int h, double x, double y, double rw, double rh) {
    return rasterize(ShapeSpec::rect(x, y, rw, rh), w, h);
}

// Random blob: union of a few disks, kept away from the border.
inline RegionMask random_blob(std::mt19937_64& rng, int w, int h) {
    auto uni = [&](double lo, double hi) { return lo + (hi - lo) * uniform01(rng); };
    RegionMask m(w, h);
    const int n_disks = 2 + static_cast<int>(rng() % 3);
    for (int k = 0; k < n_disks; ++k) {
        const double r = uni(5.0, 0.14 * std::min(w, h));
        const double cx = uni(r + 2.0, w - r - 3.0);
        const double cy = uni(r + 2.0, h - r - 3.0);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                if ((x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r) m.set(x, y, true);
    }
    return m;
}

// Neumaier-compensated sum, used when tests check near-cancelling totals.
inline double compensated_sum(const std::vector<double>& xs) {
    double s = 0.0, c = 0.0;
    for (double x : xs) {
        const double t = s + x;
        if (std::abs(s) >= std::abs(x))
            c += (s - t) + x;
        else
            c += (x - t) + s;
        s = t;
    }
    return s + c;
}

inline double rel_diff(double a, double b, double floor = 1e-300) {
    const double den = std::max({std::abs(a), std::abs(b), floor});
    return std::abs(a - b) / den;
}

}  // namespace testutil
