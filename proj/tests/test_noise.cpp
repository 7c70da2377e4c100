#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <vector>

#include "helpers.hpp"
#include "priorseg/noise.hpp"

using namespace priorseg;
using Catch::Approx;

namespace {

// Classical-parameterization log densities, the independent oracle for the
// natural-form implementation.
double classical_logpdf(const NoiseFamily& fam, std::array<double, 2> c, double y) {
    constexpr double pi = 3.14159265358979323846;
    switch (fam.kind()) {
        case Family::GaussianMeanVar:
            return -0.5 * std::log(2.0 * pi * c[1]) - (y - c[0]) * (y - c[0]) / (2.0 * c[1]);
        case Family::GaussianKnownVar: {
            const double s2 = fam.known_sigma() * fam.known_sigma();
            return -0.5 * std::log(2.0 * pi * s2) - (y - c[0]) * (y - c[0]) / (2.0 * s2);
        }
        case Family::Rayleigh: return std::log(y / c[0]) - y * y / (2.0 * c[0]);
        case Family::Poisson: return -c[0] + y * std::log(c[0]) - std::lgamma(y + 1.0);
        case Family::Exponential: return std::log(c[0]) - c[0] * y;
        case Family::Bernoulli: return y * std::log(c[0]) + (1.0 - y) * std::log(1.0 - c[0]);
    }
    return 0.0;
}

struct FamilyCase {
    NoiseFamily fam;
    std::array<double, 2> classical;
};

std::vector<FamilyCase> representative_cases() {
    return {
        {NoiseFamily(Family::GaussianMeanVar), {0.7, 1.8}},
        {NoiseFamily(Family::GaussianKnownVar, 1.3), {-0.4, 0.0}},
        {NoiseFamily(Family::Rayleigh), {1.6, 0.0}},
        {NoiseFamily(Family::Poisson), {3.2, 0.0}},
        {NoiseFamily(Family::Exponential), {0.8, 0.0}},
        {NoiseFamily(Family::Bernoulli), {0.35, 0.0}},
    };
}

std::vector<double> draw_samples(const NoiseFamily& fam, std::array<double, 2> c, size_t n, std::mt19937_64& rng) {
    std::vector<double> ys(n);
    for (auto& y : ys) y = sample(fam, c, rng);
    return ys;
}

// Random classical parameters at test-friendly scales.
std::array<double, 2> random_classical(const NoiseFamily& fam, std::mt19937_64& rng) {
    auto uni = [&](double lo, double hi) { return lo + (hi - lo) * uniform01(rng); };
    switch (fam.kind()) {
        case Family::GaussianMeanVar: return {uni(-2.0, 2.0), uni(0.3, 3.0)};
        case Family::GaussianKnownVar: return {uni(-2.0, 2.0), 0.0};
        case Family::Rayleigh: return {uni(0.4, 3.0), 0.0};
        case Family::Poisson: return {uni(0.8, 12.0), 0.0};
        case Family::Exponential: return {uni(0.3, 3.0), 0.0};
        case Family::Bernoulli: return {uni(0.15, 0.85), 0.0};
    }
    return {0.0, 0.0};
}

}  // namespace

TEST_CASE("sufficient statistics per family") {
    CHECK(NoiseFamily(Family::GaussianMeanVar).sufficient_stat(3.0) == std::array<double, 2>{3.0, 9.0});
    CHECK(NoiseFamily(Family::Rayleigh).sufficient_stat(2.0)[0] == 4.0);
    CHECK(NoiseFamily(Family::Poisson).sufficient_stat(4.0)[0] == 4.0);
    CHECK_THROWS_AS(NoiseFamily(Family::Rayleigh).sufficient_stat(-1.0), SupportError);
    CHECK_THROWS_AS(NoiseFamily(Family::Poisson).sufficient_stat(2.5), SupportError);
    CHECK_THROWS_AS(NoiseFamily(Family::Bernoulli).sufficient_stat(0.5), SupportError);
}

TEST_CASE("log_pdf pinned values") {
    const NoiseFamily gmv(Family::GaussianMeanVar);
    CHECK(log_pdf(gmv, gmv.natural_from_classical({0.0, 1.0}), 0.0) == Approx(-0.9189385332046727).epsilon(1e-12));

    const NoiseFamily ex(Family::Exponential);
    CHECK(log_pdf(ex, ex.natural_from_classical({1.0, 0.0}), 0.0) == Approx(0.0).margin(1e-15));

    const NoiseFamily po(Family::Poisson);
    CHECK(log_pdf(po, po.natural_from_classical({1.0, 0.0}), 0.0) == Approx(-1.0).epsilon(1e-12));
}

TEST_CASE("log_pdf equals the classical-parameterization density") {
    std::mt19937_64 rng(11);
    for (const auto& fc : representative_cases()) {
        for (int i = 0; i < 40; ++i) {
            const auto c = random_classical(fc.fam, rng);
            const auto eta = fc.fam.natural_from_classical(c);
            double y = sample(fc.fam, c, rng);
            if (fc.fam.kind() == Family::Rayleigh && y == 0.0) y = 0.5;
            CHECK(log_pdf(fc.fam, eta, y) == Approx(classical_logpdf(fc.fam, c, y)).margin(1e-11));
        }
    }
}

TEST_CASE("log_pdf densities normalize to 1 over the support") {
    for (const auto& fc : representative_cases()) {
        const auto eta = fc.fam.natural_from_classical(fc.classical);
        double total = 0.0;
        switch (fc.fam.kind()) {
            case Family::Poisson: {
                for (int y = 0; y <= 200; ++y) total += std::exp(log_pdf(fc.fam, eta, y));
                break;
            }
            case Family::Bernoulli: {
                total = std::exp(log_pdf(fc.fam, eta, 0.0)) + std::exp(log_pdf(fc.fam, eta, 1.0));
                break;
            }
            default: {
                // Simpson quadrature on a truncated support
                double lo, hi;
                if (fc.fam.kind() == Family::GaussianMeanVar) {
                    lo = fc.classical[0] - 12.0 * std::sqrt(fc.classical[1]);
                    hi = fc.classical[0] + 12.0 * std::sqrt(fc.classical[1]);
                } else if (fc.fam.kind() == Family::GaussianKnownVar) {
                    lo = fc.classical[0] - 12.0 * fc.fam.known_sigma();
                    hi = fc.classical[0] + 12.0 * fc.fam.known_sigma();
                } else if (fc.fam.kind() == Family::Rayleigh) {
                    lo = 1e-12;
                    hi = 14.0 * std::sqrt(fc.classical[0]);
                } else { // exponential
                    lo = 0.0;
                    hi = 40.0 / fc.classical[0];
                }
                const int n = 40000; // even
                const double step = (hi - lo) / n;
                for (int i = 0; i <= n; ++i) {
                    const double y = lo + i * step;
                    const double f = std::exp(log_pdf(fc.fam, eta, y));
                    total += f * (i == 0 || i == n ? 1.0 : (i % 2 ? 4.0 : 2.0));
                }
                total *= step / 3.0;
            }
        }
        INFO(fc.fam.name());
        CHECK(total == Approx(1.0).margin(1e-6));
    }
}

TEST_CASE("ml_estimate pinned values") {
    const NoiseFamily gmv(Family::GaussianMeanVar);
    const std::vector<double> s1{0.0, 2.0};
    const auto c1 = gmv.classical_from_natural(ml_estimate(gmv, s1));
    CHECK(c1[0] == Approx(1.0).epsilon(1e-14));
    CHECK(c1[1] == Approx(1.0).epsilon(1e-14)); // population form

    const NoiseFamily ray(Family::Rayleigh);
    const std::vector<double> s2{1.0, 1.0};
    CHECK(ray.classical_from_natural(ml_estimate(ray, s2))[0] == Approx(0.5).epsilon(1e-14));

    const NoiseFamily po(Family::Poisson);
    const std::vector<double> s3{2.0, 4.0};
    CHECK(po.classical_from_natural(ml_estimate(po, s3))[0] == Approx(3.0).epsilon(1e-14));
}

TEST_CASE("ml_estimate degenerate inputs raise estimation errors") {
    const std::vector<double> flat{2.0, 2.0, 2.0};
    CHECK_THROWS_AS(ml_estimate(NoiseFamily(Family::GaussianMeanVar), flat), EstimationError);
    const std::vector<double> zeros{0.0, 0.0};
    CHECK_THROWS_AS(ml_estimate(NoiseFamily(Family::Rayleigh), zeros), EstimationError);
    CHECK_THROWS_AS(ml_estimate(NoiseFamily(Family::Poisson), zeros), EstimationError);
    const std::vector<double> ones{1.0, 1.0};
    CHECK_THROWS_AS(ml_estimate(NoiseFamily(Family::Bernoulli), ones), EstimationError);
    const std::vector<double> single{1.0};
    CHECK_THROWS_AS(ml_estimate(NoiseFamily(Family::GaussianMeanVar), single), EstimationError);
}

TEST_CASE("ML stationarity: grad A(eta_hat) equals the sample mean of T") {
    std::mt19937_64 rng(17);
    for (const auto& fc : representative_cases()) {
        for (int trial = 0; trial < 60; ++trial) {
            const auto c = random_classical(fc.fam, rng);
            const size_t n = 16 + rng() % 10000;
            const auto ys = draw_samples(fc.fam, c, n, rng);
            SufficientStats stats;
            NaturalParams eta;
            try {
                stats = accumulate_stats(fc.fam, ys);
                eta = fc.fam.ml_estimate(stats);
            } catch (const EstimationError&) {
                continue; // degenerate draw (e.g. all-equal bernoulli)
            }
            const auto grad = fc.fam.grad_log_partition(eta);
            INFO(fc.fam.name());
            CHECK(std::abs(grad[0] - stats.mean_T[0]) <= 1e-10);
            if (fc.fam.k() == 2) CHECK(std::abs(grad[1] - stats.mean_T[1]) <= 1e-10);
        }
    }
}

TEST_CASE("ML optimality: coordinate perturbations of eta_hat do not raise the likelihood") {
    std::mt19937_64 rng(29);
    const double delta = 1e-3;
    for (const auto& fc : representative_cases()) {
        for (int trial = 0; trial < 20; ++trial) {
            const auto c = random_classical(fc.fam, rng);
            const auto ys = draw_samples(fc.fam, c, 400, rng);
            NaturalParams eta;
            try {
                eta = ml_estimate(fc.fam, ys);
            } catch (const EstimationError&) {
                continue;
            }
            auto loglik = [&](const NaturalParams& p) {
                double s = 0.0;
                for (double y : ys) s += log_pdf(fc.fam, p, y);
                return s;
            };
            const double base = loglik(eta);
            for (int dim = 0; dim < fc.fam.k(); ++dim) {
                for (double sign : {-1.0, 1.0}) {
                    NaturalParams p = eta;
                    p.eta[dim] += sign * delta;
                    if (!fc.fam.eta_valid(p)) continue;
                    CHECK(loglik(p) <= base + 1e-9);
                }
            }
        }
    }
}

TEST_CASE("Corollary-style residual: sum of (T - mean_T) vanishes over any region") {
    std::mt19937_64 rng(31);
    for (const auto& fc : representative_cases()) {
        const auto c = random_classical(fc.fam, rng);
        const auto ys = draw_samples(fc.fam, c, 10000, rng);
        const auto stats = accumulate_stats(fc.fam, ys);
        for (int dim = 0; dim < fc.fam.k(); ++dim) {
            std::vector<double> residuals;
            residuals.reserve(ys.size());
            for (double y : ys) residuals.push_back(fc.fam.sufficient_stat(y)[dim] - stats.mean_T[dim]);
            INFO(fc.fam.name() << " dim " << dim);
            CHECK(std::abs(testutil::compensated_sum(residuals)) <= 1e-9);
        }
    }
}

TEST_CASE("noise_speed") {
    const NoiseFamily kv(Family::GaussianKnownVar, 1.0);
    SECTION("identical models give zero speed at every intensity") {
        const auto eta = kv.natural_from_classical({0.7, 0.0});
        for (double y : {-3.0, -0.5, 0.0, 0.7, 2.5}) CHECK(noise_speed(kv, eta, kv, eta, y) == 0.0);
    }
    SECTION("pinned value: sigma=1, mu_in=1, mu_out=0, y=1 gives 0.5") {
        const auto ei = kv.natural_from_classical({1.0, 0.0});
        const auto eo = kv.natural_from_classical({0.0, 0.0});
        CHECK(noise_speed(kv, ei, kv, eo, 1.0) == Approx(0.5).epsilon(1e-14));
        CHECK(noise_speed(kv, ei, kv, eo, 0.5) == Approx(0.0).margin(1e-15)); // equality intensity
    }
    SECTION("antisymmetry under swapping regions is exact") {
        std::mt19937_64 rng(41);
        for (const auto& fc : representative_cases()) {
            const auto c1 = random_classical(fc.fam, rng);
            const auto c2 = random_classical(fc.fam, rng);
            const auto e1 = fc.fam.natural_from_classical(c1);
            const auto e2 = fc.fam.natural_from_classical(c2);
            double y = sample(fc.fam, c1, rng);
            if (fc.fam.kind() == Family::Rayleigh && y == 0.0) y = 1.0;
            CHECK(noise_speed(fc.fam, e1, fc.fam, e2, y) == -noise_speed(fc.fam, e2, fc.fam, e1, y));
        }
    }
    SECTION("mixed families report which region rejected the value") {
        const NoiseFamily ray(Family::Rayleigh);
        const auto ei = ray.natural_from_classical({1.0, 0.0});
        const auto eo = kv.natural_from_classical({0.0, 0.0});
        CHECK_THROWS_WITH(noise_speed(ray, ei, kv, eo, -2.0), Catch::Matchers::ContainsSubstring("inside"));
        CHECK_THROWS_WITH(noise_speed(kv, eo, ray, ei, -2.0), Catch::Matchers::ContainsSubstring("outside"));
    }
}

TEST_CASE("noise_energy") {
    // 8x4 image, left half bright, right half dark
    ImageGrid img(8, 4);
    RegionMask mask(8, 4);
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 8; ++x) {
            const bool left = x < 4;
            img.at(x, y) = left ? 10.0 + 0.1 * y : 2.0 + 0.05 * x;
            mask.set(x, y, left);
        }
    const NoiseFamily kv(Family::GaussianKnownVar, 1.0);

    SECTION("matches the closed-form Gaussian NLL at the sample means") {
        double mean_in = 0.0, mean_out = 0.0;
        int n_in = 0, n_out = 0;
        for (int y = 0; y < 4; ++y)
            for (int x = 0; x < 8; ++x) {
                if (mask.at(x, y)) {
                    mean_in += img.at(x, y);
                    ++n_in;
                } else {
                    mean_out += img.at(x, y);
                    ++n_out;
                }
            }
        mean_in /= n_in;
        mean_out /= n_out;
        double expected = 0.0;
        constexpr double pi = 3.14159265358979323846;
        for (int y = 0; y < 4; ++y)
            for (int x = 0; x < 8; ++x) {
                const double mu = mask.at(x, y) ? mean_in : mean_out;
                expected += 0.5 * std::log(2.0 * pi) + 0.5 * (img.at(x, y) - mu) * (img.at(x, y) - mu);
            }
        CHECK(noise_energy(img, mask, kv, kv) == Approx(expected).epsilon(1e-12));
    }
    SECTION("swapping labels on a symmetric partition keeps the energy") {
        CHECK(noise_energy(img, mask, kv, kv) ==
              Approx(noise_energy(img, mask.complement(), kv, kv)).epsilon(1e-12));
    }
    SECTION("one wrong pixel strictly increases the energy") {
        RegionMask bad = mask;
        bad.set(6, 2, true); // dark pixel labeled bright
        CHECK(noise_energy(img, bad, kv, kv) > noise_energy(img, mask, kv, kv));
    }
    SECTION("empty region errors") {
        CHECK_THROWS_AS(noise_energy(img, RegionMask(8, 4, false), kv, kv), EstimationError);
    }
}

TEST_CASE("samplers reproduce the analytic mean of T") {
    std::mt19937_64 rng(53);
    const size_t n = 100000;
    for (const auto& fc : representative_cases()) {
        const auto eta = fc.fam.natural_from_classical(fc.classical);
        const auto grad = fc.fam.grad_log_partition(eta);

        std::array<double, 2> sum{0.0, 0.0}, sumsq{0.0, 0.0};
        for (size_t i = 0; i < n; ++i) {
            const double y = sample(fc.fam, fc.classical, rng);
            const auto t = fc.fam.sufficient_stat(y);
            for (int d = 0; d < fc.fam.k(); ++d) {
                sum[d] += t[d];
                sumsq[d] += t[d] * t[d];
            }
        }
        for (int d = 0; d < fc.fam.k(); ++d) {
            const double mean = sum[d] / n;
            const double var = sumsq[d] / n - mean * mean;
            const double se = std::sqrt(var / n);
            INFO(fc.fam.name() << " dim " << d);
            CHECK(std::abs(mean - grad[d]) <= 4.0 * se);
        }
    }
}
