#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "priorseg/errors.hpp"
#include "priorseg/grid.hpp"

namespace priorseg {

// Exponential-family members shipped by this library. Density in natural
// form: p(y; eta) = h(y) exp(<eta, T(y)> - A(eta)).
//
//   family             k   T(y)      h(y)        natural domain
//   gaussian-mean-var  2   (y, y^2)  1           eta2 < 0
//   gaussian-known-var 1   y         N(0,s^2)-c  any
//   rayleigh           1   y^2       y           eta < 0
//   poisson            1   y         1/y!        any
//   exponential        1   y         1           eta < 0
//   bernoulli          1   y         1           any
//
// Binomial/Gamma/Beta are deliberate extension points, not shipped.
enum class Family : std::uint8_t {
    GaussianMeanVar,
    GaussianKnownVar,
    Rayleigh,
    Poisson,
    Exponential,
    Bernoulli,
};

struct NaturalParams {
    Family family;
    int k = 1;
    std::array<double, 2> eta{0.0, 0.0};
};

struct SufficientStats {
    int k = 1;
    std::array<double, 2> mean_T{0.0, 0.0};
    std::size_t n = 0;
};

class NoiseFamily {
public:
    explicit NoiseFamily(Family kind, double known_sigma = 1.0) : kind_(kind), known_sigma_(known_sigma) {
        if (kind == Family::GaussianKnownVar && !(known_sigma > 0.0))
            throw ConfigError("gaussian-known-var requires sigma > 0");
    }

    static NoiseFamily parse(std::string_view name, double known_sigma = 1.0) {
        if (name == "gaussian-mean-var" || name == "gaussian") return NoiseFamily(Family::GaussianMeanVar);
        if (name == "gaussian-known-var") return NoiseFamily(Family::GaussianKnownVar, known_sigma);
        if (name == "rayleigh") return NoiseFamily(Family::Rayleigh);
        if (name == "poisson") return NoiseFamily(Family::Poisson);
        if (name == "exponential") return NoiseFamily(Family::Exponential);
        if (name == "bernoulli") return NoiseFamily(Family::Bernoulli);
        throw ConfigError("unknown noise family: " + std::string(name));
    }

    Family kind() const { return kind_; }
    double known_sigma() const { return known_sigma_; }

    const char* name() const {
        switch (kind_) {
            case Family::GaussianMeanVar: return "gaussian-mean-var";
            case Family::GaussianKnownVar: return "gaussian-known-var";
            case Family::Rayleigh: return "rayleigh";
            case Family::Poisson: return "poisson";
            case Family::Exponential: return "exponential";
            case Family::Bernoulli: return "bernoulli";
        }
        return "?";
    }

    int k() const { return kind_ == Family::GaussianMeanVar ? 2 : 1; }

    bool in_support(double y) const {
        if (!std::isfinite(y)) return false;
        switch (kind_) {
            case Family::GaussianMeanVar:
            case Family::GaussianKnownVar: return true;
            case Family::Rayleigh:
            case Family::Exponential: return y >= 0.0;
            case Family::Poisson: return y >= 0.0 && y == std::floor(y);
            case Family::Bernoulli: return y == 0.0 || y == 1.0;
        }
        return false;
    }

    void require_support(double y, const char* where) const {
        if (!in_support(y))
            throw SupportError(std::string(where) + ": value " + std::to_string(y) +
                               " outside support of family " + name());
    }

    std::array<double, 2> sufficient_stat(double y) const {
        require_support(y, "sufficient_stat");
        switch (kind_) {
            case Family::GaussianMeanVar: return {y, y * y};
            case Family::Rayleigh: return {y * y, 0.0};
            default: return {y, 0.0};
        }
    }

    double log_h(double y) const {
        switch (kind_) {
            case Family::GaussianMeanVar: return 0.0;
            case Family::GaussianKnownVar: {
                const double s2 = known_sigma_ * known_sigma_;
                return -y * y / (2.0 * s2) - 0.5 * std::log(2.0 * kPi * s2);
            }
            case Family::Rayleigh: return std::log(y); // -inf at y = 0: density vanishes there
            case Family::Poisson: return -std::lgamma(y + 1.0);
            case Family::Exponential:
            case Family::Bernoulli: return 0.0;
        }
        return 0.0;
    }

    bool eta_valid(const NaturalParams& p) const {
        if (p.family != kind_ || p.k != k()) return false;
        for (int i = 0; i < p.k; ++i)
            if (!std::isfinite(p.eta[i])) return false;
        switch (kind_) {
            case Family::GaussianMeanVar: return p.eta[1] < 0.0;
            case Family::Rayleigh:
            case Family::Exponential: return p.eta[0] < 0.0;
            default: return true;
        }
    }

    void require_eta(const NaturalParams& p, const char* where) const {
        if (!eta_valid(p))
            throw std::domain_error(std::string(where) + ": natural parameters outside domain of family " + name());
    }

    double log_partition(const NaturalParams& p) const {
        switch (kind_) {
            case Family::GaussianMeanVar:
                return -p.eta[0] * p.eta[0] / (4.0 * p.eta[1]) + 0.5 * std::log(-kPi / p.eta[1]);
            case Family::GaussianKnownVar: {
                const double s2 = known_sigma_ * known_sigma_;
                return 0.5 * p.eta[0] * p.eta[0] * s2;
            }
            case Family::Rayleigh: return -std::log(-2.0 * p.eta[0]);
            case Family::Poisson: return std::exp(p.eta[0]);
            case Family::Exponential: return -std::log(-p.eta[0]);
            case Family::Bernoulli: return p.eta[0] > 0.0 ? p.eta[0] + std::log1p(std::exp(-p.eta[0]))
                                                          : std::log1p(std::exp(p.eta[0]));
        }
        return 0.0;
    }

    // grad A(eta), the mean of T under eta. Evaluated analytically.
    std::array<double, 2> grad_log_partition(const NaturalParams& p) const {
        switch (kind_) {
            case Family::GaussianMeanVar: {
                const double mu = -p.eta[0] / (2.0 * p.eta[1]);
                return {mu, mu * mu - 0.5 / p.eta[1]};
            }
            case Family::GaussianKnownVar: return {p.eta[0] * known_sigma_ * known_sigma_, 0.0};
            case Family::Rayleigh:
            case Family::Exponential: return {-1.0 / p.eta[0], 0.0};
            case Family::Poisson: return {std::exp(p.eta[0]), 0.0};
            case Family::Bernoulli: return {1.0 / (1.0 + std::exp(-p.eta[0])), 0.0};
        }
        return {0.0, 0.0};
    }

    // Classical parameters for config files and logs:
    //   gaussian-mean-var -> (mu, sigma^2); gaussian-known-var -> (mu);
    //   rayleigh -> (sigma^2); poisson -> (lambda); exponential -> (rate);
    //   bernoulli -> (p).
    std::array<double, 2> classical_from_natural(const NaturalParams& p) const {
        switch (kind_) {
            case Family::GaussianMeanVar: {
                const double s2 = -0.5 / p.eta[1];
                return {p.eta[0] * s2, s2};
            }
            case Family::GaussianKnownVar: return {p.eta[0] * known_sigma_ * known_sigma_, 0.0};
            case Family::Rayleigh: return {-0.5 / p.eta[0], 0.0};
            case Family::Poisson: return {std::exp(p.eta[0]), 0.0};
            case Family::Exponential: return {-p.eta[0], 0.0};
            case Family::Bernoulli: return {1.0 / (1.0 + std::exp(-p.eta[0])), 0.0};
        }
        return {0.0, 0.0};
    }

    NaturalParams natural_from_classical(std::array<double, 2> c) const {
        NaturalParams p{kind_, k(), {0.0, 0.0}};
        switch (kind_) {
            case Family::GaussianMeanVar:
                if (!(c[1] > 0.0)) throw std::domain_error("gaussian-mean-var: sigma^2 must be > 0");
                p.eta = {c[0] / c[1], -0.5 / c[1]};
                break;
            case Family::GaussianKnownVar: p.eta[0] = c[0] / (known_sigma_ * known_sigma_); break;
            case Family::Rayleigh:
                if (!(c[0] > 0.0)) throw std::domain_error("rayleigh: sigma^2 must be > 0");
                p.eta[0] = -0.5 / c[0];
                break;
            case Family::Poisson:
                if (!(c[0] > 0.0)) throw std::domain_error("poisson: lambda must be > 0");
                p.eta[0] = std::log(c[0]);
                break;
            case Family::Exponential:
                if (!(c[0] > 0.0)) throw std::domain_error("exponential: rate must be > 0");
                p.eta[0] = -c[0];
                break;
            case Family::Bernoulli:
                if (!(c[0] > 0.0 && c[0] < 1.0)) throw std::domain_error("bernoulli: p must be in (0,1)");
                p.eta[0] = std::log(c[0] / (1.0 - c[0]));
                break;
        }
        return p;
    }

    // Closed-form ML estimate: solves grad A(eta) = mean_T exactly.
    NaturalParams ml_estimate(const SufficientStats& s) const {
        if (s.k != k()) throw EstimationError(std::string("ml_estimate: stat dimension mismatch for ") + name());
        if (s.n < static_cast<std::size_t>(k()))
            throw EstimationError(std::string("ml_estimate: need at least ") + std::to_string(k()) +
                                  " samples for family " + name());
        switch (kind_) {
            case Family::GaussianMeanVar: {
                const double var = s.mean_T[1] - s.mean_T[0] * s.mean_T[0];
                if (!(var > 0.0))
                    throw EstimationError("ml_estimate: gaussian-mean-var requires nonzero sample variance");
                return natural_from_classical({s.mean_T[0], var});
            }
            case Family::GaussianKnownVar: return natural_from_classical({s.mean_T[0], 0.0});
            case Family::Rayleigh:
                if (!(s.mean_T[0] > 0.0))
                    throw EstimationError("ml_estimate: rayleigh requires mean of y^2 > 0 (all-zero region)");
                return natural_from_classical({0.5 * s.mean_T[0], 0.0});
            case Family::Poisson:
                if (!(s.mean_T[0] > 0.0)) throw EstimationError("ml_estimate: poisson requires sample mean > 0");
                return natural_from_classical({s.mean_T[0], 0.0});
            case Family::Exponential:
                if (!(s.mean_T[0] > 0.0)) throw EstimationError("ml_estimate: exponential requires sample mean > 0");
                return natural_from_classical({1.0 / s.mean_T[0], 0.0});
            case Family::Bernoulli:
                if (!(s.mean_T[0] > 0.0 && s.mean_T[0] < 1.0))
                    throw EstimationError("ml_estimate: bernoulli requires a mixed sample (mean strictly in (0,1))");
                return natural_from_classical({s.mean_T[0], 0.0});
        }
        throw EstimationError("ml_estimate: unreachable");
    }

private:
    static constexpr double kPi = 3.14159265358979323846;
    Family kind_;
    double known_sigma_;
};

inline SufficientStats accumulate_stats(const NoiseFamily& fam, std::span<const double> samples) {
    SufficientStats s;
    s.k = fam.k();
    s.n = samples.size();
    std::array<double, 2> sum{0.0, 0.0};
    for (double y : samples) {
        const auto t = fam.sufficient_stat(y);
        sum[0] += t[0];
        sum[1] += t[1];
    }
    if (s.n > 0) {
        s.mean_T[0] = sum[0] / static_cast<double>(s.n);
        s.mean_T[1] = sum[1] / static_cast<double>(s.n);
    }
    return s;
}

inline NaturalParams ml_estimate(const NoiseFamily& fam, std::span<const double> samples) {
    return fam.ml_estimate(accumulate_stats(fam, samples));
}

inline double log_pdf(const NoiseFamily& fam, const NaturalParams& eta, double y) {
    fam.require_eta(eta, "log_pdf");
    fam.require_support(y, "log_pdf");
    const auto t = fam.sufficient_stat(y);
    double dot = eta.eta[0] * t[0];
    if (fam.k() == 2) dot += eta.eta[1] * t[1];
    return fam.log_h(y) + dot - fam.log_partition(eta);
}

// Boundary log-likelihood speed of the two-region noise criterion:
//   log p(y; eta_in) - log p(y; eta_out),
// an outward-normal descent speed (positive pulls the pixel into the
// inside region). When both regions share the same family, the carrier
// h(y) cancels algebraically, which keeps y = 0 finite for Rayleigh.
inline double noise_speed(const NoiseFamily& fam_in, const NaturalParams& eta_in, const NoiseFamily& fam_out,
                          const NaturalParams& eta_out, double y) {
    if (fam_in.kind() == fam_out.kind() && fam_in.known_sigma() == fam_out.known_sigma()) {
        fam_in.require_eta(eta_in, "noise_speed(inside)");
        fam_out.require_eta(eta_out, "noise_speed(outside)");
        if (!fam_in.in_support(y)) throw SupportError("noise_speed: value outside shared family support");
        const auto t = fam_in.sufficient_stat(y);
        double dot = (eta_in.eta[0] - eta_out.eta[0]) * t[0];
        if (fam_in.k() == 2) dot += (eta_in.eta[1] - eta_out.eta[1]) * t[1];
        // grouped so that swapping the regions negates the result exactly
        return dot + (fam_out.log_partition(eta_out) - fam_in.log_partition(eta_in));
    }
    double li, lo;
    try {
        li = log_pdf(fam_in, eta_in, y);
    } catch (const SupportError&) {
        throw SupportError(std::string("noise_speed: inside model (") + fam_in.name() + ") rejects value " +
                           std::to_string(y));
    }
    try {
        lo = log_pdf(fam_out, eta_out, y);
    } catch (const SupportError&) {
        throw SupportError(std::string("noise_speed: outside model (") + fam_out.name() + ") rejects value " +
                           std::to_string(y));
    }
    return li - lo;
}

struct RegionEstimates {
    NaturalParams inside;
    NaturalParams outside;
    std::size_t n_inside = 0;
    std::size_t n_outside = 0;
};

inline SufficientStats region_stats(const NoiseFamily& fam, const ImageGrid& img, const RegionMask& mask,
                                    bool inside) {
    SufficientStats s;
    s.k = fam.k();
    std::array<double, 2> sum{0.0, 0.0};
    std::size_t n = 0;
    for (size_t i = 0; i < img.data.size(); ++i) {
        if ((mask.inside[i] != 0) != inside) continue;
        const auto t = fam.sufficient_stat(img.data[i]);
        sum[0] += t[0];
        sum[1] += t[1];
        ++n;
    }
    s.n = n;
    if (n > 0) {
        s.mean_T[0] = sum[0] / static_cast<double>(n);
        s.mean_T[1] = sum[1] / static_cast<double>(n);
    }
    return s;
}

inline RegionEstimates estimate_regions(const ImageGrid& img, const RegionMask& mask, const NoiseFamily& fam_in,
                                        const NoiseFamily& fam_out) {
    const auto si = region_stats(fam_in, img, mask, true);
    const auto so = region_stats(fam_out, img, mask, false);
    if (si.n == 0) throw EstimationError("estimate_regions: inside region is empty");
    if (so.n == 0) throw EstimationError("estimate_regions: outside region is empty");
    RegionEstimates r;
    r.n_inside = si.n;
    r.n_outside = so.n;
    try {
        r.inside = fam_in.ml_estimate(si);
    } catch (const EstimationError& e) {
        throw EstimationError(std::string("inside region: ") + e.what());
    }
    try {
        r.outside = fam_out.ml_estimate(so);
    } catch (const EstimationError& e) {
        throw EstimationError(std::string("outside region: ") + e.what());
    }
    return r;
}

// Two-region negative log-likelihood with parameters re-estimated by ML
// from the given partition.
inline double noise_energy(const ImageGrid& img, const RegionMask& mask, const NoiseFamily& fam_in,
                           const NoiseFamily& fam_out) {
    if (img.width != mask.width || img.height != mask.height)
        throw GeometryError("noise_energy: image/mask size mismatch");
    const auto est = estimate_regions(img, mask, fam_in, fam_out);
    double e = 0.0;
    for (size_t i = 0; i < img.data.size(); ++i) {
        if (mask.inside[i])
            e -= log_pdf(fam_in, est.inside, img.data[i]);
        else
            e -= log_pdf(fam_out, est.outside, img.data[i]);
    }
    return e;
}

// --- sampling ---------------------------------------------------------
// Hand-rolled transforms on top of mt19937_64 so that byte streams are
// reproducible independent of the standard library's distributions.

inline double uniform01(std::mt19937_64& g) {
    return static_cast<double>(g() >> 11) * 0x1.0p-53; // [0,1)
}

inline double sample_normal(std::mt19937_64& g, double mu, double sigma) {
    constexpr double two_pi = 6.28318530717958647692;
    const double u1 = 1.0 - uniform01(g); // (0,1]
    const double u2 = uniform01(g);
    return mu + sigma * std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
}

// Draw one sample given classical parameters (see classical_from_natural).
// For families with a location taken from the clean image, the caller
// passes that value as the classical mean.
inline double sample(const NoiseFamily& fam, std::array<double, 2> classical, std::mt19937_64& g) {
    switch (fam.kind()) {
        case Family::GaussianMeanVar: return sample_normal(g, classical[0], std::sqrt(classical[1]));
        case Family::GaussianKnownVar: return sample_normal(g, classical[0], fam.known_sigma());
        case Family::Rayleigh: {
            const double u = 1.0 - uniform01(g);
            return std::sqrt(-2.0 * classical[0] * std::log(u));
        }
        case Family::Poisson: {
            // Knuth product method; fine for the lambdas used here.
            const double limit = std::exp(-classical[0]);
            double prod = uniform01(g);
            double n = 0.0;
            while (prod > limit) {
                prod *= uniform01(g);
                n += 1.0;
            }
            return n;
        }
        case Family::Exponential: {
            const double u = 1.0 - uniform01(g);
            return -std::log(u) / classical[0];
        }
        case Family::Bernoulli: return uniform01(g) < classical[0] ? 1.0 : 0.0;
    }
    return 0.0;
}

}  // namespace priorseg
