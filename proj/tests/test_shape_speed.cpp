#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <vector>

#include "helpers.hpp"
#include "priorseg/evolution.hpp"
#include "priorseg/legendre.hpp"

using namespace priorseg;
using testutil::disk_mask;
using testutil::rect_mask;

namespace {

constexpr int kOrder = 8;
constexpr double kEps = 1.5; // soft membership width, matches the engine default

double soft_distance(const LevelSetField& phi, const MomentVector& lam_ref, const LegendreBasis& basis) {
    const MomentFrame fr = geometric_moments(phi, lam_ref.order, kEps);
    return shape_distance(legendre_moments(fr, basis), lam_ref);
}

// Same compactly supported weight as apply_perturbation.
double bump_weight(int x, int y, Pixel center, double radius) {
    const double q = ((x - center.x) * (x - center.x) + (y - center.y) * (y - center.y)) / (radius * radius);
    if (q >= 1.0) return 0.0;
    return (1.0 - q) * (1.0 - q);
}

// The shape speed integrated against a localized bump along the contour:
//   sum_x v(x) delta_eps(phi(x)) bump(x).
// This is the analytic first-order change of -d under the outward bump.
double integrated_speed(const LevelSetField& phi, const MomentVector& lam_ref, const LegendreBasis& basis,
                        Pixel center, double radius) {
    const MomentFrame fr = geometric_moments(phi, lam_ref.order, kEps);
    const ShapeSpeed speed(fr, legendre_moments(fr, basis), lam_ref, basis);
    double s = 0.0;
    for (int y = 0; y < phi.height; ++y)
        for (int x = 0; x < phi.width; ++x) {
            const double b = bump_weight(x, y, center, radius);
            if (b == 0.0) continue;
            const double d = smoothed_delta(phi.at(x, y), kEps);
            if (d == 0.0) continue;
            s += speed(x, y) * d * b;
        }
    return s;
}

struct SitePair {
    RegionMask region;
    RegionMask reference;
};

std::vector<SitePair> shape_pairs() {
    std::mt19937_64 rng(71);
    std::vector<SitePair> pairs;
    pairs.push_back({disk_mask(96, 96, 48.0, 48.0, 20.0), rect_mask(96, 96, 30, 30, 34, 34)});
    pairs.push_back({rasterize(ShapeSpec::ellipse(48.0, 44.0, 26.0, 14.0), 96, 96), disk_mask(96, 96, 48, 48, 19)});
    pairs.push_back({testutil::random_blob(rng, 96, 96), disk_mask(96, 96, 48.0, 48.0, 17.0)});
    return pairs;
}

}  // namespace

TEST_CASE("analytic shape speed matches central finite differences of the distance") {
    const LegendreBasis basis(kOrder);
    const double eps_fd = 0.25, radius = 6.0;
    int sites_checked = 0;

    for (const auto& pair : shape_pairs()) {
        const MomentVector lam_ref = legendre_moments(pair.reference, kOrder);
        const LevelSetField phi = signed_distance(pair.region);

        const auto boundary = boundary_pixels(pair.region);
        REQUIRE(boundary.size() >= 8);
        const size_t stride = std::max<size_t>(1, boundary.size() / 8);

        // guard against vanishing denominators at speed zero-crossings
        double scale = 0.0;
        std::vector<std::pair<Pixel, double>> sites;
        for (size_t i = 0; i < boundary.size(); i += stride) {
            const Pixel p = boundary[i];
            const double analytic = integrated_speed(phi, lam_ref, basis, p, radius);
            sites.push_back({p, analytic});
            scale = std::max(scale, std::abs(analytic));
        }

        for (const auto& [p, analytic] : sites) {
            const double dp = soft_distance(apply_perturbation(phi, {p, radius, eps_fd}), lam_ref, basis);
            const double dm = soft_distance(apply_perturbation(phi, {p, radius, -eps_fd}), lam_ref, basis);
            const double fd = -(dp - dm) / (2.0 * eps_fd);
            const double rel = std::abs(analytic - fd) / std::max({std::abs(analytic), std::abs(fd), 1e-4 * scale});
            INFO("site (" << p.x << "," << p.y << ") analytic=" << analytic << " fd=" << fd);
            CHECK(rel <= 1e-2);
            ++sites_checked;
        }
    }
    CHECK(sites_checked >= 20);
}

TEST_CASE("moment-identical region and reference give zero speed") {
    const RegionMask m = disk_mask(64, 64, 32.0, 32.0, 15.0);
    const LevelSetField phi = signed_distance(m);
    const LegendreBasis basis(kOrder);
    const MomentFrame fr = geometric_moments(phi, kOrder, kEps);
    const MomentVector lam = legendre_moments(fr, basis);
    const ShapeSpeed speed(fr, lam, lam, basis);
    for (const Pixel& p : boundary_pixels(m)) CHECK(std::abs(speed(p.x, p.y)) <= 1e-10);
}

TEST_CASE("shape-only descent drives a disk to a square reference") {
    const LegendreBasis basis(kOrder);
    const MomentVector lam_ref = legendre_moments(rect_mask(96, 96, 31, 31, 32, 32), kOrder);

    EvolutionConfig cfg;
    cfg.beta = 0.0;
    cfg.dt = 0.45;

    LevelSetField phi = signed_distance(disk_mask(96, 96, 48.0, 48.0, 20.0));

    // normalize the weight so the initial front moves at O(dt) pixels per step
    {
        const MomentFrame fr0 = geometric_moments(phi, kOrder, kEps);
        const ShapeSpeed v0(fr0, legendre_moments(fr0, basis), lam_ref, basis);
        double max0 = 0.0;
        for (const Pixel& p : boundary_pixels(mask_from_levelset(phi)))
            max0 = std::max(max0, std::abs(v0(p.x, p.y)));
        REQUIRE(max0 > 0.0);
        cfg.alpha = 1.0 / max0;
    }
    double d = soft_distance(phi, lam_ref, basis);
    const double d0 = d;
    int steps = 0;
    for (; steps < 400 && d >= 1e-3; ++steps) {
        shape_phase_step(phi, lam_ref, basis, cfg);
        const double d_new = soft_distance(phi, lam_ref, basis);
        CHECK(d_new <= d + 1e-12); // non-increasing while above the stopping level
        d = d_new;
        if ((steps + 1) % 5 == 0) {
            phi = reinitialize(phi);
            d = soft_distance(phi, lam_ref, basis);
        }
    }
    INFO("initial distance " << d0 << ", final " << d << " after " << steps << " steps");
    CHECK(d < 1e-3);
    CHECK(d < d0);
}
