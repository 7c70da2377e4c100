#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "priorseg/errors.hpp"

namespace priorseg {

struct Pixel {
    int x = 0;
    int y = 0;
    friend bool operator==(const Pixel&, const Pixel&) = default;
};

// 2-D scalar intensity field, row-major, pixel centers at integer coordinates.
struct ImageGrid {
    int width = 0;
    int height = 0;
    std::vector<double> data;

    ImageGrid() = default;
    ImageGrid(int w, int h, double fill = 0.0) : width(w), height(h), data(static_cast<size_t>(w) * h, fill) {
        if (w < 1 || h < 1) throw GeometryError("ImageGrid: width and height must be >= 1");
    }

    size_t size() const { return data.size(); }
    size_t idx(int x, int y) const { return static_cast<size_t>(y) * width + x; }
    double& at(int x, int y) { return data[idx(x, y)]; }
    double at(int x, int y) const { return data[idx(x, y)]; }
    bool in_bounds(int x, int y) const { return x >= 0 && x < width && y >= 0 && y < height; }

    bool all_finite() const {
        for (double v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }
};

// Binary partition of the grid: true = inside the region of interest.
struct RegionMask {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> inside;

    RegionMask() = default;
    RegionMask(int w, int h, bool fill = false)
        : width(w), height(h), inside(static_cast<size_t>(w) * h, fill ? 1 : 0) {
        if (w < 1 || h < 1) throw GeometryError("RegionMask: width and height must be >= 1");
    }

    size_t size() const { return inside.size(); }
    size_t idx(int x, int y) const { return static_cast<size_t>(y) * width + x; }
    bool at(int x, int y) const { return inside[idx(x, y)] != 0; }
    void set(int x, int y, bool v) { inside[idx(x, y)] = v ? 1 : 0; }
    bool in_bounds(int x, int y) const { return x >= 0 && x < width && y >= 0 && y < height; }

    size_t area() const {
        size_t n = 0;
        for (auto v : inside) n += v;
        return n;
    }
    bool empty() const { return area() == 0; }
    bool full() const { return area() == size(); }

    RegionMask complement() const {
        RegionMask m(width, height);
        for (size_t i = 0; i < inside.size(); ++i) m.inside[i] = inside[i] ? 0 : 1;
        return m;
    }

    friend bool operator==(const RegionMask&, const RegionMask&) = default;
};

// Signed embedding of the contour. Convention used throughout: phi < 0 inside.
struct LevelSetField {
    int width = 0;
    int height = 0;
    std::vector<double> phi;

    LevelSetField() = default;
    LevelSetField(int w, int h, double fill = 0.0) : width(w), height(h), phi(static_cast<size_t>(w) * h, fill) {
        if (w < 1 || h < 1) throw GeometryError("LevelSetField: width and height must be >= 1");
    }

    size_t size() const { return phi.size(); }
    size_t idx(int x, int y) const { return static_cast<size_t>(y) * width + x; }
    double& at(int x, int y) { return phi[idx(x, y)]; }
    double at(int x, int y) const { return phi[idx(x, y)]; }
    bool in_bounds(int x, int y) const { return x >= 0 && x < width && y >= 0 && y < height; }

    // Border-replicating access; keeps every finite-difference stencil in bounds.
    double clamped(int x, int y) const {
        x = std::clamp(x, 0, width - 1);
        y = std::clamp(y, 0, height - 1);
        return phi[idx(x, y)];
    }
};

// Localized normal displacement used by the finite-difference oracles:
// phi is decreased by amplitude * bump, so positive amplitude moves the
// zero level outward under the inside-negative convention.
struct BoundaryPerturbation {
    Pixel center;
    double radius = 1.0;    // pixels, >= 1
    double amplitude = 0.0; // signed normal displacement, pixels
};

inline RegionMask mask_from_levelset(const LevelSetField& f) {
    RegionMask m(f.width, f.height);
    for (size_t i = 0; i < f.phi.size(); ++i) m.inside[i] = f.phi[i] < 0.0 ? 1 : 0;
    return m;
}

// Inside pixels with at least one outside 4-neighbor. Neighbors beyond the
// grid border do not count as outside, so a full mask has no boundary.
inline std::vector<Pixel> boundary_pixels(const RegionMask& m) {
    std::vector<Pixel> out;
    for (int y = 0; y < m.height; ++y) {
        for (int x = 0; x < m.width; ++x) {
            if (!m.at(x, y)) continue;
            const bool edge = (x > 0 && !m.at(x - 1, y)) || (x + 1 < m.width && !m.at(x + 1, y)) ||
                              (y > 0 && !m.at(x, y - 1)) || (y + 1 < m.height && !m.at(x, y + 1));
            if (edge) out.push_back({x, y});
        }
    }
    return out;
}

namespace detail {

inline void central_gradient(const LevelSetField& f, int x, int y, double& gx, double& gy) {
    gx = 0.5 * (f.clamped(x + 1, y) - f.clamped(x - 1, y));
    gy = 0.5 * (f.clamped(x, y + 1) - f.clamped(x, y - 1));
}

}  // namespace detail

inline double gradient_norm(const LevelSetField& f, int x, int y) {
    double gx, gy;
    detail::central_gradient(f, x, y, gx, gy);
    return std::sqrt(gx * gx + gy * gy);
}

// Mean curvature of the level line through (x,y):
//   kappa = (pxx py^2 - 2 px py pxy + pyy px^2) / |grad phi|^3
// Positive on the boundary of a convex inside region. Degenerate gradients
// (|grad| < 1e-8) return 0.
inline double curvature(const LevelSetField& f, int x, int y) {
    const double px = 0.5 * (f.clamped(x + 1, y) - f.clamped(x - 1, y));
    const double py = 0.5 * (f.clamped(x, y + 1) - f.clamped(x, y - 1));
    const double pxx = f.clamped(x + 1, y) - 2.0 * f.clamped(x, y) + f.clamped(x - 1, y);
    const double pyy = f.clamped(x, y + 1) - 2.0 * f.clamped(x, y) + f.clamped(x, y - 1);
    const double pxy = 0.25 * (f.clamped(x + 1, y + 1) - f.clamped(x - 1, y + 1) - f.clamped(x + 1, y - 1) +
                               f.clamped(x - 1, y - 1));
    const double g2 = px * px + py * py;
    if (std::sqrt(g2) < 1e-8) return 0.0;
    return (pxx * py * py - 2.0 * px * py * pxy + pyy * px * px) / (g2 * std::sqrt(g2));
}

inline LevelSetField apply_perturbation(const LevelSetField& f, const BoundaryPerturbation& v) {
    LevelSetField out = f;
    const double r2 = v.radius * v.radius;
    const int x0 = std::max(0, static_cast<int>(std::floor(v.center.x - v.radius)));
    const int x1 = std::min(f.width - 1, static_cast<int>(std::ceil(v.center.x + v.radius)));
    const int y0 = std::max(0, static_cast<int>(std::floor(v.center.y - v.radius)));
    const int y1 = std::min(f.height - 1, static_cast<int>(std::ceil(v.center.y + v.radius)));
    for (int y = y0; y <= y1; ++y) {
        for (int x = x0; x <= x1; ++x) {
            const double dx = x - v.center.x;
            const double dy = y - v.center.y;
            const double q = (dx * dx + dy * dy) / r2;
            if (q >= 1.0) continue;
            const double t = 1.0 - q;
            out.at(x, y) -= v.amplitude * t * t; // C1 bump, max 1 at center
        }
    }
    return out;
}

namespace detail {

constexpr double kFarDistance = 1e18;

// One Eikonal update |grad u| = 1 from the smaller axis neighbors.
inline double eikonal_update(double a, double b) {
    if (a > b) std::swap(a, b);
    if (b - a >= 1.0) return a + 1.0;
    return 0.5 * (a + b + std::sqrt(2.0 - (b - a) * (b - a)));
}

// Gauss-Seidel fast sweeping over the 4 diagonal orders; frozen cells keep
// their seed values.
inline void fast_sweep(std::vector<double>& u, const std::vector<std::uint8_t>& frozen, int w, int h) {
    auto solve = [&](int x, int y) {
        const size_t i = static_cast<size_t>(y) * w + x;
        if (frozen[i]) return;
        const double left = x > 0 ? u[i - 1] : kFarDistance;
        const double right = x + 1 < w ? u[i + 1] : kFarDistance;
        const double down = y > 0 ? u[i - w] : kFarDistance;
        const double up = y + 1 < h ? u[i + w] : kFarDistance;
        const double cand = eikonal_update(std::min(left, right), std::min(down, up));
        if (cand < u[i]) u[i] = cand;
    };
    for (int pass = 0; pass < 2; ++pass) {
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) solve(x, y);
        for (int y = 0; y < h; ++y)
            for (int x = w - 1; x >= 0; --x) solve(x, y);
        for (int y = h - 1; y >= 0; --y)
            for (int x = 0; x < w; ++x) solve(x, y);
        for (int y = h - 1; y >= 0; --y)
            for (int x = w - 1; x >= 0; --x) solve(x, y);
    }
}

}  // namespace detail

// Rebuild phi as a signed distance to the current zero level set.
// Interface-adjacent pixels are seeded with the sub-pixel crossing distance
// obtained by linear interpolation along grid edges, then fast sweeping
// fills the rest. Pixel signs are preserved exactly, so the mask is
// unchanged; the zero crossing stays within its original cell.
inline LevelSetField reinitialize(const LevelSetField& f) {
    const int w = f.width, h = f.height;
    bool has_neg = false, has_pos = false;
    for (double v : f.phi) {
        if (v < 0.0) has_neg = true;
        else has_pos = true;
    }
    if (!has_neg || !has_pos) throw GeometryError("reinitialize: contour vanished (uniform-sign field)");

    std::vector<double> u(f.size(), detail::kFarDistance);
    std::vector<std::uint8_t> frozen(f.size(), 0);

    auto seed_edge = [&](int x, int y, size_t i, double pi, double pj) {
        // crossing iff the sign bit flips (phi==0 counts as outside, like the mask)
        const bool ci = pi < 0.0, cj = pj < 0.0;
        if (ci == cj) return;
        // axis interpolation bounds the distance from above; |phi|/|grad phi|
        // corrects it for oblique normals
        double d = std::abs(pi) / (std::abs(pi) + std::abs(pj));
        const double gn = gradient_norm(f, x, y);
        if (gn > 1e-12) d = std::min(d, std::abs(pi) / gn);
        if (d < u[i]) u[i] = d;
        frozen[i] = 1;
    };
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const size_t i = f.idx(x, y);
            if (x + 1 < w) {
                seed_edge(x, y, i, f.phi[i], f.phi[i + 1]);
                seed_edge(x + 1, y, i + 1, f.phi[i + 1], f.phi[i]);
            }
            if (y + 1 < h) {
                seed_edge(x, y, i, f.phi[i], f.phi[i + w]);
                seed_edge(x, y + 1, i + w, f.phi[i + w], f.phi[i]);
            }
        }
    }
    detail::fast_sweep(u, frozen, w, h);

    LevelSetField out(w, h);
    for (size_t i = 0; i < u.size(); ++i) out.phi[i] = f.phi[i] < 0.0 ? -u[i] : u[i];
    return out;
}

// Signed distance to the mask's implied contour (midway between opposite
// 4-neighbors). mask_from_levelset inverts this exactly.
inline LevelSetField signed_distance(const RegionMask& m) {
    const int w = m.width, h = m.height;
    std::vector<double> u(m.size(), detail::kFarDistance);
    std::vector<std::uint8_t> frozen(m.size(), 0);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const bool c = m.at(x, y);
            const bool edge = (x > 0 && m.at(x - 1, y) != c) || (x + 1 < w && m.at(x + 1, y) != c) ||
                              (y > 0 && m.at(x, y - 1) != c) || (y + 1 < h && m.at(x, y + 1) != c);
            if (edge) {
                u[m.idx(x, y)] = 0.5;
                frozen[m.idx(x, y)] = 1;
            }
        }
    }
    detail::fast_sweep(u, frozen, w, h);

    LevelSetField out(w, h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const size_t i = m.idx(x, y);
            const double d = u[i] >= detail::kFarDistance ? static_cast<double>(w + h) : u[i];
            out.phi[i] = m.at(x, y) ? -d : d;
        }
    return out;
}

// Smoothed Heaviside/delta pair (cosine profile, support eps).
inline double smoothed_heaviside(double t, double eps) {
    if (t > eps) return 1.0;
    if (t < -eps) return 0.0;
    constexpr double pi = 3.14159265358979323846;
    return 0.5 * (1.0 + t / eps + std::sin(pi * t / eps) / pi);
}

inline double smoothed_delta(double t, double eps) {
    if (t > eps || t < -eps) return 0.0;
    constexpr double pi = 3.14159265358979323846;
    return 0.5 / eps * (1.0 + std::cos(pi * t / eps));
}

// Contour length via the level-set line integral  sum delta_eps(phi) |grad phi|.
inline double contour_length(const LevelSetField& f, double eps = 1.5) {
    double len = 0.0;
    for (int y = 0; y < f.height; ++y)
        for (int x = 0; x < f.width; ++x) {
            const double d = smoothed_delta(f.at(x, y), eps);
            if (d > 0.0) len += d * gradient_norm(f, x, y);
        }
    return len;
}

// Pixels with |phi| <= width, raster order.
inline std::vector<Pixel> narrow_band(const LevelSetField& f, double width) {
    std::vector<Pixel> band;
    for (int y = 0; y < f.height; ++y)
        for (int x = 0; x < f.width; ++x)
            if (std::abs(f.at(x, y)) <= width) band.push_back({x, y});
    return band;
}

}  // namespace priorseg
