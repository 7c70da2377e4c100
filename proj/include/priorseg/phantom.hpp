#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "priorseg/errors.hpp"
#include "priorseg/evolution.hpp"
#include "priorseg/grid.hpp"
#include "priorseg/noise.hpp"

namespace priorseg {

// Geometric primitive rasterized at pixel centers. Doubles as the initial
// contour description.
struct ShapeSpec {
    enum class Kind { Disk, Rect, Ellipse, Polygon, Mask };
    Kind kind = Kind::Disk;
    double cx = 0, cy = 0, r = 0;     // disk
    double rx = 0, ry = 0;            // ellipse half-axes (center cx, cy)
    double x = 0, y = 0, w = 0, h = 0;// rect: [x, x+w) x [y, y+h)
    std::vector<std::pair<double, double>> vertices; // polygon
    RegionMask mask;                  // pre-rasterized region

    static ShapeSpec disk(double cx, double cy, double r) {
        ShapeSpec s;
        s.kind = Kind::Disk;
        s.cx = cx;
        s.cy = cy;
        s.r = r;
        return s;
    }
    static ShapeSpec rect(double x, double y, double w, double h) {
        ShapeSpec s;
        s.kind = Kind::Rect;
        s.x = x;
        s.y = y;
        s.w = w;
        s.h = h;
        return s;
    }
    static ShapeSpec ellipse(double cx, double cy, double rx, double ry) {
        ShapeSpec s;
        s.kind = Kind::Ellipse;
        s.cx = cx;
        s.cy = cy;
        s.rx = rx;
        s.ry = ry;
        return s;
    }
    static ShapeSpec polygon(std::vector<std::pair<double, double>> verts) {
        ShapeSpec s;
        s.kind = Kind::Polygon;
        s.vertices = std::move(verts);
        return s;
    }
    static ShapeSpec from_mask(RegionMask m) {
        ShapeSpec s;
        s.kind = Kind::Mask;
        s.mask = std::move(m);
        return s;
    }

    bool contains(double px, double py) const {
        switch (kind) {
            case Kind::Disk: return (px - cx) * (px - cx) + (py - cy) * (py - cy) <= r * r;
            case Kind::Rect: return px >= x && px < x + w && py >= y && py < y + h;
            case Kind::Ellipse: {
                const double a = (px - cx) / rx, b = (py - cy) / ry;
                return a * a + b * b <= 1.0;
            }
            case Kind::Polygon: {
                // even-odd ray casting
                bool in = false;
                const size_t n = vertices.size();
                for (size_t i = 0, j = n - 1; i < n; j = i++) {
                    const auto [xi, yi] = vertices[i];
                    const auto [xj, yj] = vertices[j];
                    if ((yi > py) != (yj > py) && px < (xj - xi) * (py - yi) / (yj - yi) + xi) in = !in;
                }
                return in;
            }
            case Kind::Mask: {
                const int ix = static_cast<int>(std::lround(px)), iy = static_cast<int>(std::lround(py));
                return mask.in_bounds(ix, iy) && mask.at(ix, iy);
            }
        }
        return false;
    }
};

inline RegionMask rasterize(const ShapeSpec& s, int width, int height) {
    if (s.kind == ShapeSpec::Kind::Mask) {
        if (s.mask.width != width || s.mask.height != height)
            throw GeometryError("rasterize: mask size does not match canvas");
        return s.mask;
    }
    RegionMask m(width, height);
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x)
            if (s.contains(x, y)) m.set(x, y, true);
    return m;
}

// Occlusions are erased from the object and painted as background.
struct PhantomSpec {
    int width = 128;
    int height = 128;
    ShapeSpec shape;
    double intensity_in = 160.0;
    double intensity_out = 80.0;
    std::vector<ShapeSpec> occlusions;
};

struct Phantom {
    ImageGrid clean;      // occlusions already painted as background
    RegionMask truth;     // the un-occluded shape
    RegionMask occluded;  // truth minus occlusions
};

inline Phantom render_phantom(const PhantomSpec& spec) {
    Phantom p;
    p.truth = rasterize(spec.shape, spec.width, spec.height);
    if (p.truth.empty()) throw GeometryError("render_phantom: shape rasterizes to an empty mask");
    for (int x = 0; x < spec.width; ++x)
        if (p.truth.at(x, 0) || p.truth.at(x, spec.height - 1))
            throw GeometryError("render_phantom: shape not strictly inside canvas");
    for (int y = 0; y < spec.height; ++y)
        if (p.truth.at(0, y) || p.truth.at(spec.width - 1, y))
            throw GeometryError("render_phantom: shape not strictly inside canvas");

    p.occluded = p.truth;
    for (const auto& occ : spec.occlusions)
        for (int y = 0; y < spec.height; ++y)
            for (int x = 0; x < spec.width; ++x)
                if (occ.contains(x, y)) p.occluded.set(x, y, false);

    p.clean = ImageGrid(spec.width, spec.height, spec.intensity_out);
    for (int y = 0; y < spec.height; ++y)
        for (int x = 0; x < spec.width; ++x)
            if (p.occluded.at(x, y)) p.clean.at(x, y) = spec.intensity_in;
    return p;
}

// Per-region sampling model. Without an explicit parameter the family is
// centered on the clean intensity: Gaussian keeps it as the mean, Rayleigh
// matches its mean (sigma^2 = 2 c^2 / pi), Poisson uses it as the rate,
// Exponential as the mean, Bernoulli as the success probability.
struct RegionNoiseSpec {
    NoiseFamily family{Family::GaussianMeanVar};
    std::optional<double> param; // gaussian: sigma; rayleigh: sigma^2; others override the clean-derived value
};

struct NoiseSpec {
    RegionNoiseSpec inside;
    RegionNoiseSpec outside;
    std::optional<double> snr; // gaussian shorthand: sigma = |mu_in - mu_out| / sqrt(SNR)
    std::uint64_t seed = 0;
};

namespace detail {

inline std::array<double, 2> sampling_params(const RegionNoiseSpec& rs, double clean, double gaussian_sigma) {
    constexpr double pi = 3.14159265358979323846;
    switch (rs.family.kind()) {
        case Family::GaussianMeanVar: {
            const double sigma = rs.param.value_or(gaussian_sigma);
            if (!(sigma >= 0.0)) throw ConfigError("add_noise: gaussian sigma must be >= 0");
            return {clean, sigma * sigma};
        }
        case Family::GaussianKnownVar: {
            if (rs.param) throw ConfigError("add_noise: gaussian-known-var samples with its fixed sigma");
            return {clean, 0.0};
        }
        case Family::Rayleigh: {
            const double s2 = rs.param ? *rs.param : clean * clean * 2.0 / pi;
            if (!(s2 > 0.0)) throw ConfigError("add_noise: rayleigh sigma^2 must be > 0");
            return {s2, 0.0};
        }
        case Family::Poisson: {
            const double lambda = rs.param.value_or(clean);
            if (!(lambda >= 0.0)) throw ConfigError("add_noise: poisson lambda must be >= 0");
            return {lambda, 0.0};
        }
        case Family::Exponential: {
            const double mean = rs.param ? 1.0 / *rs.param : clean;
            if (!(mean > 0.0)) throw ConfigError("add_noise: exponential mean must be > 0");
            return {1.0 / mean, 0.0};
        }
        case Family::Bernoulli: {
            const double prob = rs.param.value_or(clean);
            if (!(prob >= 0.0 && prob <= 1.0)) throw ConfigError("add_noise: bernoulli p must be in [0,1]");
            return {prob, 0.0};
        }
    }
    return {0.0, 0.0};
}

}  // namespace detail

// Replace every pixel by an independent draw from its region's family.
// Deterministic in the seed (fixed raster traversal, hand-rolled samplers).
inline ImageGrid add_noise(const ImageGrid& clean, const RegionMask& mask, const NoiseSpec& spec) {
    if (clean.width != mask.width || clean.height != mask.height)
        throw GeometryError("add_noise: image/mask size mismatch");

    double gaussian_sigma = 0.0;
    if (spec.snr) {
        if (!(*spec.snr > 0.0)) throw ConfigError("add_noise: SNR must be > 0");
        // SNR = (mu_in - mu_out)^2 / sigma^2, means taken from the clean image
        double sum_in = 0.0, sum_out = 0.0;
        std::size_t n_in = 0, n_out = 0;
        for (size_t i = 0; i < clean.size(); ++i) {
            if (mask.inside[i]) {
                sum_in += clean.data[i];
                ++n_in;
            } else {
                sum_out += clean.data[i];
                ++n_out;
            }
        }
        if (n_in == 0 || n_out == 0) throw ConfigError("add_noise: SNR needs both regions nonempty");
        gaussian_sigma = std::abs(sum_in / n_in - sum_out / n_out) / std::sqrt(*spec.snr);
    }

    std::mt19937_64 rng(spec.seed);
    ImageGrid out(clean.width, clean.height);
    for (size_t i = 0; i < clean.size(); ++i) {
        const RegionNoiseSpec& rs = mask.inside[i] ? spec.inside : spec.outside;
        const auto params = detail::sampling_params(rs, clean.data[i], gaussian_sigma);
        out.data[i] = sample(rs.family, params, rng);
    }
    return out;
}

struct HammingResult {
    std::size_t count = 0;
    double normalized = 0.0;
};

inline HammingResult hamming(const RegionMask& a, const RegionMask& b) {
    if (a.width != b.width || a.height != b.height) throw GeometryError("hamming: mask size mismatch");
    HammingResult r;
    for (size_t i = 0; i < a.size(); ++i)
        if ((a.inside[i] != 0) != (b.inside[i] != 0)) ++r.count;
    r.normalized = static_cast<double>(r.count) / static_cast<double>(a.size());
    return r;
}

inline double dice(const RegionMask& a, const RegionMask& b) {
    if (a.width != b.width || a.height != b.height) throw GeometryError("dice: mask size mismatch");
    std::size_t inter = 0, sa = 0, sb = 0;
    for (size_t i = 0; i < a.size(); ++i) {
        const bool ia = a.inside[i] != 0, ib = b.inside[i] != 0;
        inter += ia && ib;
        sa += ia;
        sb += ib;
    }
    if (sa + sb == 0) return 1.0;
    return 2.0 * static_cast<double>(inter) / static_cast<double>(sa + sb);
}

// Occluded-object experiment: the same noisy phantom segmented twice from
// the same initialization, with and without the shape prior, scored by
// Hamming distance against the un-occluded ground truth.
struct OcclusionExperimentConfig {
    PhantomSpec phantom;
    NoiseSpec noise;
    ShapeSpec init;
    EvolutionConfig evo;         // alpha field is ignored; see below
    NoiseFamily model_in{Family::GaussianMeanVar};
    NoiseFamily model_out{Family::GaussianMeanVar};
    int order = 8;
    double alpha = 0.0;          // absolute weight for the with-prior run...
    double alpha_auto = 0.0;     // ...or a factor on the auto-computed scale (takes precedence when > 0)
};

struct OcclusionExperimentResult {
    Phantom phantom;
    ImageGrid noisy;
    RegionMask init_mask;
    SegmentResult without_prior;
    SegmentResult with_prior;
    HammingResult hamming_without;
    HammingResult hamming_with;
    double dice_without = 0.0;
    double dice_with = 0.0;
    double alpha_used = 0.0;
};

inline OcclusionExperimentResult run_occlusion_experiment(const OcclusionExperimentConfig& cfg) {
    OcclusionExperimentResult r;
    r.phantom = render_phantom(cfg.phantom);
    r.noisy = add_noise(r.phantom.clean, r.phantom.occluded, cfg.noise);
    r.init_mask = rasterize(cfg.init, cfg.phantom.width, cfg.phantom.height);

    const LegendreBasis basis(cfg.order);
    const MomentVector lam_ref = legendre_moments(r.phantom.truth, cfg.order);

    EvolutionConfig evo = cfg.evo;
    evo.alpha = 0.0;
    r.without_prior = segment(r.noisy, r.init_mask, evo, cfg.model_in, cfg.model_out);

    if (cfg.alpha_auto > 0.0) {
        const LevelSetField phi0 = signed_distance(r.init_mask);
        r.alpha_used =
            cfg.alpha_auto * auto_alpha_scale(sanitize_for_families(r.noisy, cfg.model_in, cfg.model_out), phi0,
                                              cfg.model_in, cfg.model_out, lam_ref, basis, evo);
    } else {
        r.alpha_used = cfg.alpha;
    }
    evo.alpha = r.alpha_used;
    r.with_prior = segment(r.noisy, r.init_mask, evo, cfg.model_in, cfg.model_out, &lam_ref, &basis);

    r.hamming_without = hamming(r.without_prior.mask, r.phantom.truth);
    r.hamming_with = hamming(r.with_prior.mask, r.phantom.truth);
    r.dice_without = dice(r.without_prior.mask, r.phantom.truth);
    r.dice_with = dice(r.with_prior.mask, r.phantom.truth);
    return r;
}

}  // namespace priorseg
