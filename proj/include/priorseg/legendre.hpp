#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "priorseg/errors.hpp"
#include "priorseg/grid.hpp"

namespace priorseg {

// Largest supported moment order. Monomial-basis Legendre coefficients grow
// combinatorially; beyond ~30 double precision degrades.
constexpr int kMaxMomentOrder = 30;

// Triangular index for tables over {(p,q) : p+q <= N}, p-major.
inline int tri_size(int order) { return (order + 1) * (order + 2) / 2; }
inline int tri_index(int order, int p, int q) { return p * (order + 1) - p * (p - 1) / 2 + q; }

// Monomial coefficients of the Legendre polynomials P_p(x) = sum_k a[p][k] x^k,
// generated by the Bonnet recurrence
//   (p+1) P_{p+1} = (2p+1) x P_p - p P_{p-1}
// and cross-checked at construction against the closed-form expansion of the
// Rodrigues derivative (both are exact in rationals; agreement is required
// to 1e-12 relative).
struct LegendreBasis {
    int order = 0;
    std::vector<std::vector<double>> a; // a[p][k], k <= p

    explicit LegendreBasis(int n) : order(n) {
        if (n < 0 || n > kMaxMomentOrder)
            throw std::range_error("LegendreBasis: order must be in [0, " + std::to_string(kMaxMomentOrder) + "]");
        a.resize(n + 1);
        a[0] = {1.0};
        if (n >= 1) a[1] = {0.0, 1.0};
        for (int p = 1; p < n; ++p) {
            std::vector<double> next(p + 2, 0.0);
            for (int k = 0; k <= p; ++k) next[k + 1] += (2.0 * p + 1.0) * a[p][k] / (p + 1.0);
            for (int k = 0; k < p; ++k) next[k] -= static_cast<double>(p) * a[p - 1][k] / (p + 1.0);
            a[p + 1] = std::move(next);
        }
        for (int p = 0; p <= n; ++p) {
            const auto r = rodrigues_coefficients(p);
            for (int k = 0; k <= p; ++k) {
                const double scale = std::max({std::abs(a[p][k]), std::abs(r[k]), 1.0});
                if (std::abs(a[p][k] - r[k]) > 1e-12 * scale)
                    throw std::logic_error("LegendreBasis: recurrence/Rodrigues mismatch at p=" + std::to_string(p));
            }
        }
    }

    // Direct expansion of (1/(2^p p!)) d^p/dx^p (x^2-1)^p.
    static std::vector<double> rodrigues_coefficients(int p) {
        std::vector<double> c(p + 1, 0.0);
        for (int j = (p + 1) / 2; j <= p; ++j) {
            const int k = 2 * j - p;
            // binom(p,j) * (2j)!/(2j-p)! * (-1)^(p-j) / (2^p p!)
            double term = ((p - j) % 2 == 0) ? 1.0 : -1.0;
            term *= std::exp(std::lgamma(p + 1.0) - std::lgamma(j + 1.0) - std::lgamma(p - j + 1.0) +
                             std::lgamma(2.0 * j + 1.0) - std::lgamma(k + 1.0) - std::lgamma(p + 1.0) -
                             p * std::log(2.0));
            c[k] = term;
        }
        return c;
    }

    double eval(int p, double x) const {
        double v = 0.0;
        for (int k = p; k >= 0; --k) v = v * x + a[p][k];
        return v;
    }

    static double C(int p, int q) { return (2.0 * p + 1.0) * (2.0 * q + 1.0) / 4.0; }
};

// Centered, scale-normalized geometric moments of a region:
//   M̂_uv = sum_x w(x) (x - x̄)^u (y - ȳ)^v / |Ω|^((u+v+2)/2)
// over pixel centers with unit pixel area. Weights are the mask indicator,
// or a smoothed Heaviside of -phi when built from a level set. M̂_00 = 1 and
// M̂_10 = M̂_01 = 0 by construction.
struct MomentFrame {
    int order = 0;
    double area = 0.0;
    double cx = 0.0; // barycenter, absolute grid coordinates
    double cy = 0.0;
    std::vector<double> normalized; // triangular M̂_uv table

    double at(int u, int v) const { return normalized[tri_index(order, u, v)]; }
};

namespace detail {

// Accumulates the frame from any pixel -> weight range. Coordinates are
// taken relative to (ox, oy); for binary masks this is the bounding-box
// corner, which makes integer translations bit-exact.
template <typename WeightFn>
MomentFrame accumulate_frame(int order, int x0, int x1, int y0, int y1, double ox, double oy, WeightFn w) {
    MomentFrame fr;
    fr.order = order;
    double area = 0.0, sx = 0.0, sy = 0.0;
    for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) {
            const double ww = w(x, y);
            if (ww == 0.0) continue;
            area += ww;
            sx += ww * (x - ox);
            sy += ww * (y - oy);
        }
    if (!(area > 0.0)) throw GeometryError("geometric_moments: empty region");
    const double mx = sx / area, my = sy / area;

    std::vector<double> sums(tri_size(order), 0.0);
    std::vector<double> px(order + 1), py(order + 1);
    for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) {
            const double ww = w(x, y);
            if (ww == 0.0) continue;
            const double dx = (x - ox) - mx, dy = (y - oy) - my;
            px[0] = 1.0;
            py[0] = 1.0;
            for (int k = 1; k <= order; ++k) {
                px[k] = px[k - 1] * dx;
                py[k] = py[k - 1] * dy;
            }
            int idx = 0;
            for (int u = 0; u <= order; ++u)
                for (int v = 0; v <= order - u; ++v, ++idx) sums[idx] += ww * px[u] * py[v];
        }

    fr.area = area;
    fr.cx = mx + ox;
    fr.cy = my + oy;
    fr.normalized.resize(sums.size());
    int idx = 0;
    for (int u = 0; u <= order; ++u)
        for (int v = 0; v <= order - u; ++v, ++idx)
            fr.normalized[idx] = sums[idx] / std::pow(area, 0.5 * (u + v + 2));
    return fr;
}

}  // namespace detail

inline MomentFrame geometric_moments(const RegionMask& m, int order) {
    if (order < 0 || order > kMaxMomentOrder) throw std::range_error("geometric_moments: order out of range");
    if (m.empty()) throw GeometryError("geometric_moments: empty mask");
    int x0 = m.width, x1 = -1, y0 = m.height, y1 = -1;
    for (int y = 0; y < m.height; ++y)
        for (int x = 0; x < m.width; ++x)
            if (m.at(x, y)) {
                x0 = std::min(x0, x);
                x1 = std::max(x1, x);
                y0 = std::min(y0, y);
                y1 = std::max(y1, y);
            }
    return detail::accumulate_frame(order, x0, x1, y0, y1, x0, y0,
                                    [&](int x, int y) { return m.at(x, y) ? 1.0 : 0.0; });
}

// Soft-membership frame from a level set; weight = H_eps(-phi). This is the
// differentiable counterpart used by the evolution engine and the
// finite-difference oracles.
inline MomentFrame geometric_moments(const LevelSetField& f, int order, double eps = 1.5) {
    if (order < 0 || order > kMaxMomentOrder) throw std::range_error("geometric_moments: order out of range");
    return detail::accumulate_frame(order, 0, f.width - 1, 0, f.height - 1, 0.0, 0.0, [&](int x, int y) {
        return smoothed_heaviside(-f.at(x, y), eps);
    });
}

// Truncated invariant Legendre moment vector, lambda_pq for p+q <= order.
struct MomentVector {
    int order = 0;
    std::vector<double> values;

    double at(int p, int q) const { return values[tri_index(order, p, q)]; }
    friend bool operator==(const MomentVector&, const MomentVector&) = default;
};

inline MomentVector legendre_moments(const MomentFrame& fr, const LegendreBasis& basis) {
    if (basis.order < fr.order) throw std::range_error("legendre_moments: basis order too small");
    MomentVector lam;
    lam.order = fr.order;
    lam.values.assign(tri_size(fr.order), 0.0);
    int idx = 0;
    for (int p = 0; p <= fr.order; ++p)
        for (int q = 0; q <= fr.order - p; ++q, ++idx) {
            double s = 0.0;
            for (int u = 0; u <= p; ++u) {
                const double apu = basis.a[p][u];
                if (apu == 0.0) continue;
                for (int v = 0; v <= q; ++v) {
                    const double aqv = basis.a[q][v];
                    if (aqv == 0.0) continue;
                    s += apu * aqv * fr.at(u, v);
                }
            }
            lam.values[idx] = LegendreBasis::C(p, q) * s;
        }
    return lam;
}

inline MomentVector legendre_moments(const RegionMask& m, int order) {
    const LegendreBasis basis(order);
    return legendre_moments(geometric_moments(m, order), basis);
}

// Squared Euclidean distance between truncated moment vectors.
inline double shape_distance(const MomentVector& a, const MomentVector& b) {
    if (a.order != b.order) throw std::invalid_argument("shape_distance: moment order mismatch");
    double d = 0.0;
    for (size_t i = 0; i < a.values.size(); ++i) {
        const double t = a.values[i] - b.values[i];
        d += t * t;
    }
    return d;
}

// Analytic boundary speed of the moment-distance energy.
//
// Writing s = (u+v+2)/2 and dx = x - x̄, dy = y - ȳ, the domain derivative of
// M̂_uv under an outward normal displacement concentrates on the boundary
// with integrand
//   G_uv(x) = dx^u dy^v / |Ω|^s
//           - (u M̂_{u-1,v} dx + v M̂_{u,v-1} dy) / |Ω|^{3/2}
//           - (u+v+2) M̂_uv / (2 |Ω|),
// the three terms tracking the raw moment sum, the barycenter shift and the
// area normalization. The speed shipped here,
//   v(x) = - sum_{u+v<=N} A_uv G_uv(x),
//   A_uv = 2 sum_{p+q<=N} (lambda_pq - lambda_ref_pq) C_pq a_pu a_qv,
// is a descent speed along the outward normal: moving the boundary with it
// does not increase the moment distance at first order. The barycenter-shift
// term is derived from the transport theorem rather than transcribed; the
// finite-difference suite in tests/ is the arbiter of its correctness.
class ShapeSpeed {
public:
    ShapeSpeed(const MomentFrame& fr, const MomentVector& lam, const MomentVector& lam_ref,
               const LegendreBasis& basis)
        : order_(fr.order), cx_(fr.cx), cy_(fr.cy) {
        if (lam.order != lam_ref.order) throw std::invalid_argument("ShapeSpeed: moment order mismatch");
        if (lam.order != fr.order) throw std::invalid_argument("ShapeSpeed: frame/moment order mismatch");

        std::vector<double> A(tri_size(order_), 0.0);
        for (int p = 0; p <= order_; ++p)
            for (int q = 0; q <= order_ - p; ++q) {
                const double r = 2.0 * (lam.at(p, q) - lam_ref.at(p, q)) * LegendreBasis::C(p, q);
                if (r == 0.0) continue;
                for (int u = 0; u <= p; ++u) {
                    const double apu = basis.a[p][u];
                    if (apu == 0.0) continue;
                    for (int v = 0; v <= q; ++v) {
                        const double aqv = basis.a[q][v];
                        if (aqv == 0.0) continue;
                        A[tri_index(order_, u, v)] += r * apu * aqv;
                    }
                }
            }

        const double area = fr.area;
        const double a32 = std::pow(area, 1.5);
        B_.assign(tri_size(order_), 0.0);
        lin_x_ = lin_y_ = const_ = 0.0;
        int idx = 0;
        for (int u = 0; u <= order_; ++u)
            for (int v = 0; v <= order_ - u; ++v, ++idx) {
                const double Auv = A[idx];
                if (Auv == 0.0) continue;
                B_[idx] = Auv / std::pow(area, 0.5 * (u + v + 2));
                if (u >= 1) lin_x_ += Auv * u * fr.at(u - 1, v) / a32;
                if (v >= 1) lin_y_ += Auv * v * fr.at(u, v - 1) / a32;
                const_ += Auv * (u + v + 2) * fr.at(u, v) / (2.0 * area);
            }
    }

    // Descent speed along the outward normal at pixel-center coordinates.
    double operator()(double x, double y) const {
        const double dx = x - cx_, dy = y - cy_;
        double px[kMaxMomentOrder + 1], py[kMaxMomentOrder + 1];
        px[0] = py[0] = 1.0;
        for (int k = 1; k <= order_; ++k) {
            px[k] = px[k - 1] * dx;
            py[k] = py[k - 1] * dy;
        }
        double h = 0.0;
        int idx = 0;
        for (int u = 0; u <= order_; ++u)
            for (int v = 0; v <= order_ - u; ++v, ++idx)
                if (B_[idx] != 0.0) h += B_[idx] * px[u] * py[v];
        // speed = -(H term + L term) with L = -(lin_x dx + lin_y dy) - const
        return -(h - lin_x_ * dx - lin_y_ * dy - const_);
    }

private:
    int order_;
    double cx_, cy_;
    std::vector<double> B_;
    double lin_x_ = 0.0, lin_y_ = 0.0, const_ = 0.0;
};

// Indicator reconstruction from the invariant moments: evaluates
//   f(x', y') = sum lambda_pq P_p(x') P_q(y')
// in the unit-area centered frame x' = (x - x̄)/sqrt|Ω|. Thresholding f at
// 1/2 recovers an approximation of the region; used as a descriptor sanity
// check.
inline double reconstruct_indicator(const MomentVector& lam, const LegendreBasis& basis, const MomentFrame& fr,
                                    double x, double y) {
    const double xs = (x - fr.cx) / std::sqrt(fr.area);
    const double ys = (y - fr.cy) / std::sqrt(fr.area);
    double f = 0.0;
    for (int p = 0; p <= lam.order; ++p)
        for (int q = 0; q <= lam.order - p; ++q) f += lam.at(p, q) * basis.eval(p, xs) * basis.eval(q, ys);
    return f;
}

// --- moment vector file format -----------------------------------------
// Header line "order N", then one "p q value" triple per line in p-major
// order. Values use %.17g and round-trip bit-exactly.

inline void save_moments(const MomentVector& lam, std::ostream& os) {
    os << "order " << lam.order << "\n";
    char buf[64];
    for (int p = 0; p <= lam.order; ++p)
        for (int q = 0; q <= lam.order - p; ++q) {
            std::snprintf(buf, sizeof buf, "%.17g", lam.at(p, q));
            os << p << " " << q << " " << buf << "\n";
        }
}

inline void save_moments(const MomentVector& lam, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw IoError("save_moments: cannot open " + path);
    save_moments(lam, os);
}

inline MomentVector load_moments(std::istream& is) {
    std::string tag;
    int order = -1;
    if (!(is >> tag >> order) || tag != "order" || order < 0 || order > kMaxMomentOrder)
        throw IoError("load_moments: bad header (expected 'order N')");
    MomentVector lam;
    lam.order = order;
    lam.values.assign(tri_size(order), 0.0);
    std::vector<bool> seen(lam.values.size(), false);
    int p, q;
    double v;
    while (is >> p >> q >> v) {
        if (p < 0 || q < 0 || p + q > order) throw IoError("load_moments: index out of range");
        const int i = tri_index(order, p, q);
        lam.values[i] = v;
        seen[i] = true;
    }
    for (bool s : seen)
        if (!s) throw IoError("load_moments: incomplete moment table");
    return lam;
}

inline MomentVector load_moments_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("load_moments: cannot open " + path);
    return load_moments(is);
}

}  // namespace priorseg
