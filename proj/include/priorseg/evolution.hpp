#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "priorseg/errors.hpp"
#include "priorseg/grid.hpp"
#include "priorseg/legendre.hpp"
#include "priorseg/noise.hpp"

namespace priorseg {

struct EvolutionConfig {
    double alpha = 0.0;                 // shape-prior weight
    double beta = 0.0;                  // curve-length regularization weight
    double dt = 0.45;                   // CFL number: max front motion per step, pixels
    int n_noise_iters = 10;             // noise-phase steps per outer iteration
    double shape_speed_threshold = 1e-3;// shape phase stops when max |alpha * v_shape| drops below
    int max_shape_iters = 50;           // hard cap on shape-phase steps per outer iteration
    int max_outer_iters = 200;
    double convergence_tol = 1e-5;      // relative total-energy change
    int convergence_window = 3;         // consecutive outer iterations below tol
    int reinit_every = 5;               // PDE steps between reinitializations
    double band_width = 4.0;            // speeds evaluated where |phi| <= band_width
    double heaviside_eps = 1.5;         // smoothing width for soft membership / delta
    double curvature_clamp = 1.0;       // |kappa| cap inside the engine, 1/px
    int max_backtracks = 24;            // dt halvings before declaring a stall
    std::uint64_t seed = 0;             // carried for provenance; the engine itself is deterministic

    void validate() const {
        auto nonneg = [](double v) { return std::isfinite(v) && v >= 0.0; };
        if (!nonneg(alpha) || !nonneg(beta)) throw ConfigError("evolution: alpha and beta must be finite and >= 0");
        if (!(dt > 0.0)) throw ConfigError("evolution: dt must be > 0");
        if (!(shape_speed_threshold > 0.0)) throw ConfigError("evolution: shape_speed_threshold must be > 0");
        if (n_noise_iters < 0 || max_outer_iters < 0 || max_shape_iters < 1)
            throw ConfigError("evolution: iteration counts out of range");
        if (!(convergence_tol > 0.0) || convergence_window < 1)
            throw ConfigError("evolution: bad convergence rule");
        if (reinit_every < 1) throw ConfigError("evolution: reinit_every must be >= 1");
        if (!(band_width >= 1.0) || !(heaviside_eps > 0.0)) throw ConfigError("evolution: bad band parameters");
    }
};

struct EnergyBreakdown {
    double noise = 0.0;    // two-region negative log-likelihood
    double shape = 0.0;    // alpha * moment distance
    double reg = 0.0;      // beta * contour length
    double total = 0.0;
    double distance = 0.0; // raw moment distance
    double length = 0.0;   // raw contour length
};

struct TraceRow {
    int iter = 0;
    std::string phase;  // "init" | "noise" | "shape"
    EnergyBreakdown energy;
    std::size_t area = 0;
    double max_speed = 0.0;
    double ms = 0.0;    // wall time; written to CSV only when timings are enabled
};

struct EvolutionTrace {
    std::vector<TraceRow> rows;

    // One line per row. Timings default to 0 so that repeated runs of the
    // same configuration produce byte-identical files; pass with_timings to
    // export the measured values instead.
    void to_csv(std::ostream& os, bool with_timings = false) const {
        os << "iter,phase,e_total,e_noise,e_shape,e_reg,area,max_speed,ms\n";
        char buf[512];
        for (const auto& r : rows) {
            std::snprintf(buf, sizeof buf, "%d,%s,%.17g,%.17g,%.17g,%.17g,%zu,%.17g,%.3f\n", r.iter,
                          r.phase.c_str(), r.energy.total, r.energy.noise, r.energy.shape, r.energy.reg, r.area,
                          r.max_speed, with_timings ? r.ms : 0.0);
            os << buf;
        }
    }
};

// Combined criterion: noise NLL + alpha * moment distance + beta * length.
// The noise part re-fits ML parameters from the current partition; the
// moment distance uses the soft membership of phi so that it is the exact
// quantity the shape flow descends.
inline EnergyBreakdown total_energy(const ImageGrid& img, const LevelSetField& phi, const EvolutionConfig& cfg,
                                    const NoiseFamily& fam_in, const NoiseFamily& fam_out,
                                    const MomentVector* lam_ref, const LegendreBasis* basis) {
    EnergyBreakdown e;
    const RegionMask mask = mask_from_levelset(phi);
    e.noise = noise_energy(img, mask, fam_in, fam_out);
    e.length = contour_length(phi, cfg.heaviside_eps);
    e.reg = cfg.beta * e.length;
    if (lam_ref != nullptr) {
        if (basis == nullptr || basis->order < lam_ref->order)
            throw ConfigError("total_energy: basis missing or smaller than reference order");
        const MomentFrame fr = geometric_moments(phi, lam_ref->order, cfg.heaviside_eps);
        e.distance = shape_distance(legendre_moments(fr, *basis), *lam_ref);
        e.shape = cfg.alpha * e.distance;
    }
    e.total = e.noise + e.shape + e.reg;
    return e;
}

namespace detail {

// Godunov upwind gradient magnitude for advection with outward speed f.
inline double upwind_gradient(const LevelSetField& phi, int x, int y, double f) {
    const double c = phi.at(x, y);
    const double dxm = c - phi.clamped(x - 1, y);
    const double dxp = phi.clamped(x + 1, y) - c;
    const double dym = c - phi.clamped(x, y - 1);
    const double dyp = phi.clamped(x, y + 1) - c;
    double gx2, gy2;
    if (f > 0.0) {
        gx2 = std::max(dxm, 0.0) * std::max(dxm, 0.0) + std::min(dxp, 0.0) * std::min(dxp, 0.0);
        gy2 = std::max(dym, 0.0) * std::max(dym, 0.0) + std::min(dyp, 0.0) * std::min(dyp, 0.0);
    } else {
        gx2 = std::min(dxm, 0.0) * std::min(dxm, 0.0) + std::max(dxp, 0.0) * std::max(dxp, 0.0);
        gy2 = std::min(dym, 0.0) * std::min(dym, 0.0) + std::max(dyp, 0.0) * std::max(dyp, 0.0);
    }
    return std::sqrt(gx2 + gy2);
}

struct SpeedSample {
    Pixel px;
    double advect = 0.0;   // outward-normal descent speed (noise or shape)
    double curvature = 0.0;// clamped kappa, noise phase only
};

// phi <- phi - dt * advect * |grad phi|_upwind + dt * beta * kappa * |grad phi|_central
inline void apply_band_update(LevelSetField& phi, const std::vector<SpeedSample>& band, double dt, double beta) {
    std::vector<double> delta(band.size());
    for (size_t i = 0; i < band.size(); ++i) {
        const auto& s = band[i];
        double d = 0.0;
        if (s.advect != 0.0) d -= dt * s.advect * upwind_gradient(phi, s.px.x, s.px.y, s.advect);
        if (beta != 0.0 && s.curvature != 0.0)
            d += dt * beta * s.curvature * gradient_norm(phi, s.px.x, s.px.y);
        delta[i] = d;
    }
    for (size_t i = 0; i < band.size(); ++i) phi.at(band[i].px.x, band[i].px.y) += delta[i];
}

}  // namespace detail

// One explicit step of the noise-driven flow with curvature regularization.
// ML parameters are re-fitted from the current partition before the step.
// Returns the max combined speed magnitude seen on the band (0 means the
// field was left untouched).
inline double noise_phase_step(LevelSetField& phi, const ImageGrid& img, const NoiseFamily& fam_in,
                               const NoiseFamily& fam_out, const EvolutionConfig& cfg, double dt_scale = 1.0) {
    const RegionMask mask = mask_from_levelset(phi);
    if (mask.empty() || mask.full()) throw GeometryError("noise_phase_step: contour vanished");
    const RegionEstimates est = estimate_regions(img, mask, fam_in, fam_out);

    std::vector<detail::SpeedSample> band;
    double max_speed = 0.0;
    for (int y = 0; y < phi.height; ++y)
        for (int x = 0; x < phi.width; ++x) {
            if (std::abs(phi.at(x, y)) > cfg.band_width) continue;
            detail::SpeedSample s;
            s.px = {x, y};
            s.advect = noise_speed(fam_in, est.inside, fam_out, est.outside, img.at(x, y));
            if (cfg.beta != 0.0)
                s.curvature = std::clamp(curvature(phi, x, y), -cfg.curvature_clamp, cfg.curvature_clamp);
            max_speed = std::max(max_speed, std::abs(s.advect) + cfg.beta * std::abs(s.curvature));
            band.push_back(s);
        }
    if (max_speed == 0.0) return 0.0;
    const double dt = cfg.dt * dt_scale / std::max(max_speed, 1.0);
    detail::apply_band_update(phi, band, dt, cfg.beta);
    return max_speed;
}

// One explicit step of the shape-prior flow (speed alpha * v_shape, no
// curvature term). Returns the max |alpha * v_shape| over the band, the
// quantity compared against shape_speed_threshold.
inline double shape_phase_step(LevelSetField& phi, const MomentVector& lam_ref, const LegendreBasis& basis,
                               const EvolutionConfig& cfg, double dt_scale = 1.0) {
    if (cfg.alpha == 0.0) return 0.0;
    const MomentFrame fr = geometric_moments(phi, lam_ref.order, cfg.heaviside_eps);
    const MomentVector lam = legendre_moments(fr, basis);
    const ShapeSpeed speed(fr, lam, lam_ref, basis);

    std::vector<detail::SpeedSample> band;
    double max_speed = 0.0;
    for (int y = 0; y < phi.height; ++y)
        for (int x = 0; x < phi.width; ++x) {
            if (std::abs(phi.at(x, y)) > cfg.band_width) continue;
            detail::SpeedSample s;
            s.px = {x, y};
            s.advect = cfg.alpha * speed(x, y);
            max_speed = std::max(max_speed, std::abs(s.advect));
            band.push_back(s);
        }
    if (max_speed == 0.0) return 0.0;
    const double dt = cfg.dt * dt_scale / std::max(max_speed, 1.0);
    detail::apply_band_update(phi, band, dt, 0.0);
    return max_speed;
}

// Ratio of initial noise-speed to shape-speed magnitudes on the band;
// multiply by the desired balance factor to obtain alpha.
inline double auto_alpha_scale(const ImageGrid& img, const LevelSetField& phi0, const NoiseFamily& fam_in,
                               const NoiseFamily& fam_out, const MomentVector& lam_ref, const LegendreBasis& basis,
                               const EvolutionConfig& cfg) {
    const RegionMask mask = mask_from_levelset(phi0);
    if (mask.empty() || mask.full()) throw GeometryError("auto_alpha_scale: degenerate initial region");
    const RegionEstimates est = estimate_regions(img, mask, fam_in, fam_out);
    const MomentFrame fr = geometric_moments(phi0, lam_ref.order, cfg.heaviside_eps);
    const ShapeSpeed speed(fr, legendre_moments(fr, basis), lam_ref, basis);
    double max_noise = 0.0, max_shape = 0.0;
    for (int y = 0; y < phi0.height; ++y)
        for (int x = 0; x < phi0.width; ++x) {
            if (std::abs(phi0.at(x, y)) > cfg.band_width) continue;
            max_noise = std::max(max_noise,
                                 std::abs(noise_speed(fam_in, est.inside, fam_out, est.outside, img.at(x, y))));
            max_shape = std::max(max_shape, std::abs(speed(x, y)));
        }
    if (max_shape < 1e-12) return 1.0;
    return max_noise / max_shape;
}

enum class SegmentStatus { Converged, IterationCap, Stalled, Aborted };

struct SegmentResult {
    RegionMask mask;
    EvolutionTrace trace;
    SegmentStatus status = SegmentStatus::IterationCap;
    int outer_iters = 0;
    EnergyBreakdown energy;
    std::string abort_reason;

    bool converged() const { return status == SegmentStatus::Converged || status == SegmentStatus::Stalled; }
};

// Coerce intensities into the family supports where the spec'd coercion
// exists: Poisson data is rounded to the nearest nonnegative integer,
// Bernoulli data snapped to exact {0,1} when within 1e-9. Returns the
// number of modified pixels so callers can warn.
inline ImageGrid sanitize_for_families(const ImageGrid& img, const NoiseFamily& fam_in, const NoiseFamily& fam_out,
                                       std::size_t* changed = nullptr) {
    const bool poisson = fam_in.kind() == Family::Poisson || fam_out.kind() == Family::Poisson;
    const bool bernoulli = fam_in.kind() == Family::Bernoulli || fam_out.kind() == Family::Bernoulli;
    std::size_t n = 0;
    ImageGrid out = img;
    if (poisson || bernoulli) {
        for (double& v : out.data) {
            double w = v;
            if (poisson) w = std::max(0.0, std::round(w));
            if (bernoulli && w != 0.0 && w != 1.0) {
                if (std::abs(w) <= 1e-9) w = 0.0;
                else if (std::abs(w - 1.0) <= 1e-9) w = 1.0;
            }
            if (w != v) {
                v = w;
                ++n;
            }
        }
    }
    if (changed) *changed = n;
    return out;
}

// Alternating minimization: a noise phase of n_noise_iters explicit steps,
// then shape-prior steps until the max shape speed falls below threshold,
// repeated until the relative total-energy change stays below tolerance
// for a full window (or the iteration cap). Each outer iteration is
// accepted only if it does not increase the total energy beyond
// 1e-9 * |E|; otherwise phi is restored and the step size halved.
//
// Reinitialization happens only between accepted iterations, and the
// rebuilt field is adopted only when it does not increase the measured
// energy. Keeping the rebuild out of the guarded comparison matters: its
// small energy drift does not vanish as the step size does, so comparing
// across it would let the guard reject every step and stall the run at
// the initial contour.
inline SegmentResult segment(const ImageGrid& img_raw, const RegionMask& init, const EvolutionConfig& cfg,
                             const NoiseFamily& fam_in, const NoiseFamily& fam_out,
                             const MomentVector* lam_ref = nullptr, const LegendreBasis* basis = nullptr) {
    cfg.validate();
    if (img_raw.width != init.width || img_raw.height != init.height)
        throw GeometryError("segment: image/init size mismatch");
    if (init.empty() || init.full()) throw GeometryError("segment: initial mask must be nonempty and non-full");
    if (cfg.alpha > 0.0 && (lam_ref == nullptr || basis == nullptr))
        throw ConfigError("segment: alpha > 0 requires reference moments and basis");
    if (!img_raw.all_finite()) throw GeometryError("segment: image contains non-finite intensities");

    const ImageGrid img = sanitize_for_families(img_raw, fam_in, fam_out);
    const MomentVector* ref = cfg.alpha > 0.0 ? lam_ref : nullptr;

    SegmentResult res;
    LevelSetField phi = signed_distance(init);

    auto energy_of = [&](const LevelSetField& f) {
        return total_energy(img, f, cfg, fam_in, fam_out, ref, basis);
    };

    EnergyBreakdown e_prev;
    try {
        e_prev = energy_of(phi);
    } catch (const std::exception& ex) {
        res.mask = init;
        res.status = SegmentStatus::Aborted;
        res.abort_reason = std::string("initial energy: ") + ex.what();
        return res;
    }
    res.trace.rows.push_back({0, "init", e_prev, init.area(), 0.0, 0.0});

    double dt_scale = 1.0;
    int steps_since_reinit = 0;
    int below_tol = 0;

    for (int outer = 1; outer <= cfg.max_outer_iters; ++outer) {
        const LevelSetField phi_backup = phi;
        const int reinit_backup = steps_since_reinit;
        bool accepted = false;

        while (!accepted) {
            const auto t0 = std::chrono::steady_clock::now();
            std::vector<TraceRow> pending;
            bool vanished = false;
            try {
                double noise_max = 0.0;
                for (int i = 0; i < cfg.n_noise_iters; ++i) {
                    noise_max = std::max(noise_max, noise_phase_step(phi, img, fam_in, fam_out, cfg, dt_scale));
                    ++steps_since_reinit;
                }
                if (cfg.n_noise_iters > 0)
                    pending.push_back({outer, "noise", {}, 0, noise_max, 0.0});

                if (ref != nullptr) {
                    double shape_max = 0.0;
                    for (int i = 0; i < cfg.max_shape_iters; ++i) {
                        shape_max = shape_phase_step(phi, *ref, *basis, cfg, dt_scale);
                        ++steps_since_reinit;
                        if (shape_max < cfg.shape_speed_threshold) break;
                    }
                    pending.push_back({outer, "shape", {}, 0, shape_max, 0.0});
                }
            } catch (const GeometryError&) {
                vanished = true; // contour collapsed: treat like a rejected step
            } catch (const EstimationError&) {
                vanished = true; // a region became degenerate mid-phase
            }

            EnergyBreakdown e_new;
            bool ok = !vanished;
            if (ok) {
                try {
                    e_new = energy_of(phi);
                } catch (const std::exception&) {
                    ok = false;
                }
                if (ok && !std::isfinite(e_new.total)) ok = false;
                if (ok && e_new.total > e_prev.total + 1e-9 * std::abs(e_prev.total)) ok = false;
            }

            if (ok) {
                accepted = true;
                if (steps_since_reinit >= cfg.reinit_every) {
                    try {
                        LevelSetField rebuilt = reinitialize(phi);
                        const EnergyBreakdown e_rebuilt = energy_of(rebuilt);
                        if (std::isfinite(e_rebuilt.total) && e_rebuilt.total <= e_new.total) {
                            phi = std::move(rebuilt);
                            e_new = e_rebuilt;
                            steps_since_reinit = 0;
                        }
                    } catch (const std::exception&) {
                        // keep the un-rebuilt field
                    }
                }
                const double ms =
                    std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
                const std::size_t area = mask_from_levelset(phi).area();
                for (auto& row : pending) {
                    row.energy = e_new;
                    row.area = area;
                    row.ms = ms / static_cast<double>(pending.size());
                    res.trace.rows.push_back(row);
                }
                res.outer_iters = outer;

                const double rel = std::abs(e_new.total - e_prev.total) / std::max(std::abs(e_prev.total), 1e-300);
                below_tol = rel < cfg.convergence_tol ? below_tol + 1 : 0;
                e_prev = e_new;
                dt_scale = std::min(1.0, dt_scale * 2.0);
                if (below_tol >= cfg.convergence_window) {
                    res.status = SegmentStatus::Converged;
                    res.mask = mask_from_levelset(phi);
                    res.energy = e_prev;
                    return res;
                }
            } else {
                phi = phi_backup;
                steps_since_reinit = reinit_backup;
                dt_scale *= 0.5;
                if (dt_scale < std::ldexp(1.0, -cfg.max_backtracks)) {
                    // No descent possible at any step size: energy is stationary.
                    res.status = vanished ? SegmentStatus::Aborted : SegmentStatus::Stalled;
                    if (vanished)
                        res.abort_reason = "contour vanished or a region became degenerate at minimal step size";
                    res.mask = mask_from_levelset(phi);
                    res.energy = e_prev;
                    res.outer_iters = outer - 1;
                    return res;
                }
            }
        }
    }

    res.status = SegmentStatus::IterationCap;
    res.mask = mask_from_levelset(phi);
    res.energy = e_prev;
    res.outer_iters = cfg.max_outer_iters;
    return res;
}

}  // namespace priorseg
