#pragma once

#include <nlohmann/json.hpp>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <thread>
#include <vector>

#include "priorseg/config.hpp"
#include "priorseg/image_io.hpp"
#include "priorseg/priorseg.hpp"

namespace priorseg {

struct CliOptions {
    int verbosity = 0;   // -1 quiet, 0 normal, 1 verbose
    int trace_every = 0; // print every k-th outer iteration of the trace
    bool timings = false;// export measured wall times in trace.csv
    bool save_phi = false;
    int jobs = 1;
};

namespace cmddetail {

namespace fs = std::filesystem;
using nlohmann::json;

inline void apply_seed_env(RunConfig& cfg) {
    if (const char* env = std::getenv("PRIORSEG_SEED")) {
        char* end = nullptr;
        const unsigned long long v = std::strtoull(env, &end, 10);
        if (end == env || *end != '\0') throw ConfigError("PRIORSEG_SEED: not an unsigned integer: " + std::string(env));
        cfg.seed = v;
        cfg.evolution.seed = v;
    }
}

struct Scene {
    ImageGrid image;
    RegionMask init;
    std::optional<RegionMask> ground_truth;
    std::optional<Phantom> phantom; // kept for reference moments / overlays
};

inline Scene build_scene(const RunConfig& cfg) {
    Scene s;
    if (cfg.phantom) {
        std::optional<RegionMask> file_mask;
        if (cfg.phantom->shape.kind == PhantomShapeConfig::Kind::MaskFile)
            file_mask = read_mask(cfg.phantom->shape.mask_path);
        const PhantomSpec spec = make_phantom_spec(*cfg.phantom, file_mask ? &*file_mask : nullptr);
        Phantom ph = render_phantom(spec);
        s.image = add_noise(ph.clean, ph.occluded, make_noise_spec(*cfg.phantom, cfg.seed));
        s.ground_truth = ph.truth;
        s.phantom = std::move(ph);
    } else {
        s.image = read_image(cfg.image_path);
        if (!s.image.all_finite()) throw IoError("input image contains non-finite values: " + cfg.image_path);
        if (!cfg.ground_truth_path.empty()) s.ground_truth = read_mask(cfg.ground_truth_path);
    }

    switch (cfg.init.kind) {
        case InitConfig::Kind::Disk:
            s.init = rasterize(ShapeSpec::disk(cfg.init.cx, cfg.init.cy, cfg.init.r), s.image.width, s.image.height);
            break;
        case InitConfig::Kind::Rect:
            s.init = rasterize(ShapeSpec::rect(cfg.init.x, cfg.init.y, cfg.init.w, cfg.init.h), s.image.width,
                               s.image.height);
            break;
        case InitConfig::Kind::MaskFile: {
            s.init = read_mask(cfg.init.mask_path);
            if (s.init.width != s.image.width || s.init.height != s.image.height)
                throw ConfigError("init.mask: size does not match the input image");
            break;
        }
    }
    if (s.init.empty() || s.init.full()) throw ConfigError("init: initial mask must be nonempty and non-full");
    return s;
}

struct RunOutcome {
    SegmentResult result;
    double alpha_used = 0.0;
    std::optional<HammingResult> hamming_vs_truth;
    std::optional<double> dice_vs_truth;
    double wall_ms = 0.0;
};

inline RunOutcome run_from_config(const RunConfig& cfg, const Scene& scene) {
    const auto t0 = std::chrono::steady_clock::now();

    const NoiseFamily fam_in = cfg.noise_inside.make();
    const NoiseFamily fam_out = cfg.noise_outside.make();

    std::optional<LegendreBasis> basis;
    std::optional<MomentVector> lam_ref;
    EvolutionConfig evo = cfg.evolution;
    evo.alpha = cfg.shape.alpha;

    if (cfg.shape.alpha > 0.0 || cfg.shape.alpha_auto > 0.0) {
        basis.emplace(cfg.shape.order);
        switch (cfg.shape.reference.kind) {
            case ReferenceConfig::Kind::PhantomTruth:
                if (!scene.phantom) throw ConfigError("shape.reference: phantom-truth needs a phantom input");
                lam_ref = legendre_moments(geometric_moments(scene.phantom->truth, cfg.shape.order), *basis);
                break;
            case ReferenceConfig::Kind::MaskFile:
                lam_ref = legendre_moments(geometric_moments(read_mask(cfg.shape.reference.path), cfg.shape.order),
                                           *basis);
                break;
            case ReferenceConfig::Kind::MomentsFile: {
                lam_ref = load_moments_file(cfg.shape.reference.path);
                if (lam_ref->order != cfg.shape.order)
                    throw ConfigError("shape.reference.moments: file order does not match shape.order");
                break;
            }
            case ReferenceConfig::Kind::None: throw ConfigError("shape.reference: missing");
        }
        if (cfg.shape.alpha_auto > 0.0) {
            const ImageGrid sanitized = sanitize_for_families(scene.image, fam_in, fam_out);
            evo.alpha = cfg.shape.alpha_auto * auto_alpha_scale(sanitized, signed_distance(scene.init), fam_in,
                                                                fam_out, *lam_ref, *basis, evo);
        }
    }

    RunOutcome out;
    out.alpha_used = evo.alpha;
    out.result = segment(scene.image, scene.init, evo, fam_in, fam_out, lam_ref ? &*lam_ref : nullptr,
                         basis ? &*basis : nullptr);
    if (scene.ground_truth) {
        out.hamming_vs_truth = hamming(out.result.mask, *scene.ground_truth);
        out.dice_vs_truth = dice(out.result.mask, *scene.ground_truth);
    }
    out.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    return out;
}

inline int exit_code_of(const SegmentResult& r) {
    switch (r.status) {
        case SegmentStatus::Converged:
        case SegmentStatus::Stalled: return 0; // energy stationary
        case SegmentStatus::IterationCap: return 2;
        case SegmentStatus::Aborted: return 1;
    }
    return 1;
}

inline const char* status_name(SegmentStatus s) {
    switch (s) {
        case SegmentStatus::Converged: return "converged";
        case SegmentStatus::Stalled: return "stalled";
        case SegmentStatus::IterationCap: return "iteration-cap";
        case SegmentStatus::Aborted: return "aborted";
    }
    return "?";
}

inline json report_json(const RunConfig& cfg, const RunOutcome& out) {
    const SegmentResult& r = out.result;
    json j;
    j["schema"] = 1;
    j["status"] = status_name(r.status);
    j["exit_code"] = exit_code_of(r);
    j["converged"] = r.converged();
    j["outer_iterations"] = r.outer_iters;
    j["alpha_used"] = out.alpha_used;
    j["seed"] = cfg.seed;
    j["area"] = r.mask.area();
    j["energy"] = {{"total", r.energy.total},   {"noise", r.energy.noise},       {"shape", r.energy.shape},
                   {"reg", r.energy.reg},       {"distance", r.energy.distance}, {"length", r.energy.length}};
    if (out.hamming_vs_truth) {
        j["hamming"] = {{"count", out.hamming_vs_truth->count}, {"normalized", out.hamming_vs_truth->normalized}};
        j["dice"] = *out.dice_vs_truth;
    }
    if (!r.abort_reason.empty()) j["abort_reason"] = r.abort_reason;
    j["timings_ms"] = {{"total", out.wall_ms}};
    return j;
}

inline void write_run_outputs(const fs::path& dir, const Scene& scene, const RunConfig& cfg, const RunOutcome& out,
                              const CliOptions& opt) {
    fs::create_directories(dir);
    write_mask_png((dir / "final_mask.png").string(), out.result.mask);
    write_overlay_png((dir / "overlay.png").string(), scene.image, out.result.mask,
                      scene.ground_truth ? &*scene.ground_truth : nullptr);
    {
        std::ofstream os(dir / "trace.csv");
        out.result.trace.to_csv(os, opt.timings);
    }
    {
        std::ofstream os(dir / "report.json");
        os << report_json(cfg, out).dump(2) << "\n";
    }
    write_image_png((dir / "input.png").string(), scene.image);
    if (opt.save_phi) write_phi((dir / "final_phi.phi1").string(), signed_distance(out.result.mask));
}

inline void print_trace(const EvolutionTrace& trace, int every, std::ostream& os) {
    if (every <= 0) return;
    for (const auto& row : trace.rows)
        if (row.iter % every == 0)
            os << "iter " << row.iter << " [" << row.phase << "] E=" << row.energy.total
               << " area=" << row.area << " max_speed=" << row.max_speed << "\n";
}

}  // namespace cmddetail

// `priorseg segment <config>`: exit 0 on convergence, 2 at the iteration
// cap, 1 on any error. Artifacts: final_mask.png, overlay.png, trace.csv,
// report.json (+ input.png, final_phi.phi1 with --save-phi).
inline int cmd_segment(const std::string& config_path, const CliOptions& opt = {}) {
    using namespace cmddetail;
    try {
        RunConfig cfg = load_config(config_path);
        apply_seed_env(cfg);
        const Scene scene = build_scene(cfg);
        const RunOutcome out = run_from_config(cfg, scene);
        write_run_outputs(cfg.output_dir, scene, cfg, out, opt);
        if (opt.verbosity >= 0) {
            print_trace(out.result.trace, opt.trace_every, std::cout);
            std::cout << "status: " << status_name(out.result.status) << ", iterations: " << out.result.outer_iters
                      << ", energy: " << out.result.energy.total;
            if (out.hamming_vs_truth) std::cout << ", hamming: " << out.hamming_vs_truth->normalized;
            std::cout << "\n";
        }
        if (out.result.status == SegmentStatus::Aborted && opt.verbosity >= 0)
            std::cerr << "aborted: " << out.result.abort_reason << "\n";
        return exit_code_of(out.result);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

// `priorseg moments <mask> --order N [-o file]`: prints the invariant
// moment table (and optionally saves it).
inline int cmd_moments(const std::string& mask_path, int order, const std::string& out_path = "",
                       const CliOptions& opt = {}) {
    try {
        const RegionMask mask = read_mask(mask_path);
        if (mask.empty()) throw GeometryError("moments: mask is empty: " + mask_path);
        const MomentVector lam = legendre_moments(mask, order);
        if (!out_path.empty()) save_moments(lam, out_path);
        if (opt.verbosity >= 0) save_moments(lam, std::cout);
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

// --- bench -----------------------------------------------------------------

struct BenchCell {
    int index = 0;
    std::vector<std::pair<std::string, std::string>> overrides; // dotted key -> value literal
    int exit_code = 1;
    std::string status = "error";
    std::string error;
    double hamming_norm = std::nan("");
    double dice_score = std::nan("");
    double e_total = std::nan("");
    int outer_iters = 0;
    double alpha_used = 0.0;
    double wall_ms = 0.0;
};

namespace cmddetail {

inline void set_dotted(YAML::Node node, const std::string& dotted, const YAML::Node& value) {
    size_t start = 0;
    std::vector<std::string> parts;
    while (true) {
        const size_t dot = dotted.find('.', start);
        if (dot == std::string::npos) {
            parts.push_back(dotted.substr(start));
            break;
        }
        parts.push_back(dotted.substr(start, dot - start));
        start = dot + 1;
    }
    YAML::Node cur = node;
    for (size_t i = 0; i + 1 < parts.size(); ++i) cur.reset(cur[parts[i]]); // reset: rebind, not assign
    cur[parts.back()] = value;
}

inline std::string scalar_str(const YAML::Node& v) {
    return v.IsScalar() ? v.as<std::string>() : YAML::Dump(v);
}

}  // namespace cmddetail

// `priorseg bench <config> [--jobs J]`: runs the cartesian product of the
// matrix overrides applied to the base run config, one output directory per
// cell, and writes summary.csv. Exit 0 unless every cell fails.
inline int cmd_bench(const std::string& config_path, const CliOptions& opt = {}) {
    using namespace cmddetail;
    try {
        YAML::Node root;
        try {
            root = YAML::LoadFile(config_path);
        } catch (const YAML::BadFile&) {
            throw ConfigError("config: cannot open file: " + config_path);
        }
        const YAML::Node bench = root["bench"];
        if (!bench) throw ConfigError("config: bench: missing required key");
        const YAML::Node base = bench["base"];
        if (!base) throw ConfigError("config: bench.base: missing required key");
        const std::string out_dir = bench["output_dir"] ? bench["output_dir"].as<std::string>() : "bench_out";

        // ordered matrix keys -> list of values
        std::vector<std::pair<std::string, std::vector<YAML::Node>>> axes;
        if (const YAML::Node matrix = bench["matrix"]) {
            for (const auto& kv : matrix) {
                std::vector<YAML::Node> vals;
                if (!kv.second.IsSequence()) throw ConfigError("config: bench.matrix values must be lists");
                for (const auto& v : kv.second) vals.push_back(v);
                if (vals.empty()) throw ConfigError("config: bench.matrix: empty value list");
                axes.emplace_back(kv.first.as<std::string>(), vals);
            }
        }
        size_t n_cells = 1;
        for (const auto& [k, vals] : axes) n_cells *= vals.size();

        std::vector<BenchCell> cells(n_cells);
        auto run_cell = [&](size_t idx) {
            BenchCell& cell = cells[idx];
            cell.index = static_cast<int>(idx);
            try {
                YAML::Node node = YAML::Clone(base);
                size_t rem = idx;
                for (const auto& [key, vals] : axes) {
                    const YAML::Node& v = vals[rem % vals.size()];
                    rem /= vals.size();
                    set_dotted(node, key, v);
                    cell.overrides.emplace_back(key, scalar_str(v));
                }
                RunConfig cfg = parse_config(node);
                apply_seed_env(cfg);
                char dirname[32];
                std::snprintf(dirname, sizeof dirname, "cell_%03zu", idx);
                cfg.output_dir = (fs::path(out_dir) / dirname).string();

                const Scene scene = build_scene(cfg);
                const RunOutcome out = run_from_config(cfg, scene);
                write_run_outputs(cfg.output_dir, scene, cfg, out, opt);

                cell.exit_code = exit_code_of(out.result);
                cell.status = status_name(out.result.status);
                cell.e_total = out.result.energy.total;
                cell.outer_iters = out.result.outer_iters;
                cell.alpha_used = out.alpha_used;
                cell.wall_ms = out.wall_ms;
                if (out.hamming_vs_truth) {
                    cell.hamming_norm = out.hamming_vs_truth->normalized;
                    cell.dice_score = *out.dice_vs_truth;
                }
            } catch (const std::exception& e) {
                cell.exit_code = 1;
                cell.status = "error";
                cell.error = e.what();
            }
        };

        const int jobs = std::max(1, opt.jobs);
        if (jobs == 1) {
            for (size_t i = 0; i < n_cells; ++i) run_cell(i);
        } else {
            std::vector<std::thread> pool;
            std::mutex next_mutex;
            size_t next = 0;
            for (int t = 0; t < jobs; ++t)
                pool.emplace_back([&]() {
                    while (true) {
                        size_t i;
                        {
                            std::lock_guard lock(next_mutex);
                            if (next >= n_cells) return;
                            i = next++;
                        }
                        run_cell(i);
                    }
                });
            for (auto& th : pool) th.join();
        }

        fs::create_directories(out_dir);
        std::ofstream os(fs::path(out_dir) / "summary.csv");
        os << "cell";
        for (const auto& [k, vals] : axes) os << "," << k;
        os << ",exit,status,hamming,dice,e_total,outer_iters,alpha_used,error\n";
        char buf[64];
        for (const auto& cell : cells) {
            os << cell.index;
            for (const auto& [k, v] : cell.overrides) os << "," << v;
            os << "," << cell.exit_code << "," << cell.status;
            auto num = [&](double v) {
                if (std::isnan(v)) return std::string();
                std::snprintf(buf, sizeof buf, "%.17g", v);
                return std::string(buf);
            };
            std::string err = cell.error;
            for (char& ch : err)
                if (ch == ',' || ch == '\n') ch = ';';
            os << "," << num(cell.hamming_norm) << "," << num(cell.dice_score) << "," << num(cell.e_total) << ","
               << cell.outer_iters << "," << num(cell.alpha_used) << "," << err << "\n";
        }

        size_t failures = 0;
        for (const auto& cell : cells)
            if (cell.status == "error") ++failures;
        if (opt.verbosity >= 0)
            std::cout << "bench: " << n_cells << " cells, " << failures << " failed, summary under " << out_dir
                      << "\n";
        return failures == n_cells && n_cells > 0 ? 1 : 0;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace priorseg
