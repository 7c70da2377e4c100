#pragma once

#include <yaml-cpp/yaml.h>

#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include "priorseg/errors.hpp"
#include "priorseg/evolution.hpp"
#include "priorseg/phantom.hpp"

namespace priorseg {

// Run configuration, a faithful mirror of the YAML schema (JSON is parsed by
// the same reader since YAML flow style covers it). See README for the
// documented layout.

struct InitConfig {
    enum class Kind { Disk, Rect, MaskFile };
    Kind kind = Kind::Disk;
    double cx = 0, cy = 0, r = 0;
    double x = 0, y = 0, w = 0, h = 0;
    std::string mask_path;
    friend bool operator==(const InitConfig&, const InitConfig&) = default;
};

struct ModelConfig {
    std::string family = "gaussian-mean-var";
    double sigma = 1.0; // gaussian-known-var only
    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;

    NoiseFamily make() const { return NoiseFamily::parse(family, sigma); }
};

struct ReferenceConfig {
    enum class Kind { None, MaskFile, MomentsFile, PhantomTruth };
    Kind kind = Kind::None;
    std::string path;
    friend bool operator==(const ReferenceConfig&, const ReferenceConfig&) = default;
};

struct ShapePriorConfig {
    double alpha = 0.0;
    double alpha_auto = 0.0; // when > 0: alpha = alpha_auto * initial speed ratio
    int order = 8;
    ReferenceConfig reference;
    friend bool operator==(const ShapePriorConfig&, const ShapePriorConfig&) = default;
};

struct PhantomShapeConfig {
    // restricted ShapeSpec mirror with file-based masks resolved at build time
    enum class Kind { Disk, Rect, Ellipse, Polygon, MaskFile };
    Kind kind = Kind::Disk;
    double cx = 0, cy = 0, r = 0, rx = 0, ry = 0;
    double x = 0, y = 0, w = 0, h = 0;
    std::vector<std::pair<double, double>> vertices;
    std::string mask_path;
    friend bool operator==(const PhantomShapeConfig&, const PhantomShapeConfig&) = default;
};

struct PhantomNoiseConfig {
    std::string family_in = "gaussian";
    std::string family_out = "gaussian";
    std::optional<double> param_in;
    std::optional<double> param_out;
    std::optional<double> snr;
    std::optional<std::uint64_t> seed; // defaults to the run seed
    friend bool operator==(const PhantomNoiseConfig&, const PhantomNoiseConfig&) = default;
};

struct PhantomConfig {
    int width = 128, height = 128;
    std::string preset; // "" or "rayleigh-phantom"
    PhantomShapeConfig shape;
    double intensity_in = 160.0;
    double intensity_out = 80.0;
    std::vector<PhantomShapeConfig> occlusions;
    PhantomNoiseConfig noise;
    friend bool operator==(const PhantomConfig&, const PhantomConfig&) = default;
};

struct RunConfig {
    std::uint64_t seed = 0;
    std::string output_dir = "out";
    std::string image_path;              // exclusive with phantom
    std::optional<PhantomConfig> phantom;
    std::string ground_truth_path;       // optional, for image inputs
    InitConfig init;
    ModelConfig noise_inside;
    ModelConfig noise_outside;
    ShapePriorConfig shape;
    EvolutionConfig evolution;
    friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

namespace cfgdetail {

[[noreturn]] inline void bad(const std::string& key, const std::string& why) {
    throw ConfigError("config: " + key + ": " + why);
}

// `label` is the dotted path used in error messages; the actual lookup key
// is its last component.
template <typename T>
T required(const YAML::Node& n, const std::string& label) {
    const std::string key = label.substr(label.rfind('.') + 1);
    const YAML::Node v = n[key];
    if (!v) bad(label, "missing required key");
    try {
        return v.as<T>();
    } catch (const YAML::Exception&) {
        bad(label, "cannot parse value");
    }
}

template <typename T>
T get_or(const YAML::Node& n, const std::string& key, T def) {
    const YAML::Node v = n[key];
    if (!v) return def;
    try {
        return v.as<T>();
    } catch (const YAML::Exception&) {
        bad(key, "cannot parse value");
    }
}

inline PhantomShapeConfig parse_shape(const YAML::Node& n, const std::string& key) {
    PhantomShapeConfig s;
    if (!n || !n.IsMap()) bad(key, "expected a map like {disk: {cx, cy, r}}");
    if (const auto d = n["disk"]) {
        s.kind = PhantomShapeConfig::Kind::Disk;
        s.cx = required<double>(d, key + ".disk.cx");
        s.cy = required<double>(d, key + ".disk.cy");
        s.r = required<double>(d, key + ".disk.r");
    } else if (const auto rc = n["rect"]) {
        s.kind = PhantomShapeConfig::Kind::Rect;
        s.x = required<double>(rc, key + ".rect.x");
        s.y = required<double>(rc, key + ".rect.y");
        s.w = required<double>(rc, key + ".rect.w");
        s.h = required<double>(rc, key + ".rect.h");
    } else if (const auto e = n["ellipse"]) {
        s.kind = PhantomShapeConfig::Kind::Ellipse;
        s.cx = required<double>(e, key + ".ellipse.cx");
        s.cy = required<double>(e, key + ".ellipse.cy");
        s.rx = required<double>(e, key + ".ellipse.rx");
        s.ry = required<double>(e, key + ".ellipse.ry");
    } else if (const auto p = n["polygon"]) {
        s.kind = PhantomShapeConfig::Kind::Polygon;
        if (!p.IsSequence() || p.size() < 3) bad(key + ".polygon", "expected a list of [x, y] pairs");
        for (const auto& v : p) s.vertices.emplace_back(v[0].as<double>(), v[1].as<double>());
    } else if (const auto m = n["mask"]) {
        s.kind = PhantomShapeConfig::Kind::MaskFile;
        s.mask_path = m.as<std::string>();
    } else {
        bad(key, "unknown shape kind (disk|rect|ellipse|polygon|mask)");
    }
    return s;
}

inline YAML::Node emit_shape(const PhantomShapeConfig& s) {
    YAML::Node n;
    switch (s.kind) {
        case PhantomShapeConfig::Kind::Disk:
            n["disk"]["cx"] = s.cx;
            n["disk"]["cy"] = s.cy;
            n["disk"]["r"] = s.r;
            break;
        case PhantomShapeConfig::Kind::Rect:
            n["rect"]["x"] = s.x;
            n["rect"]["y"] = s.y;
            n["rect"]["w"] = s.w;
            n["rect"]["h"] = s.h;
            break;
        case PhantomShapeConfig::Kind::Ellipse:
            n["ellipse"]["cx"] = s.cx;
            n["ellipse"]["cy"] = s.cy;
            n["ellipse"]["rx"] = s.rx;
            n["ellipse"]["ry"] = s.ry;
            break;
        case PhantomShapeConfig::Kind::Polygon:
            for (const auto& [x, y] : s.vertices) {
                YAML::Node v;
                v.push_back(x);
                v.push_back(y);
                n["polygon"].push_back(v);
            }
            break;
        case PhantomShapeConfig::Kind::MaskFile: n["mask"] = s.mask_path; break;
    }
    return n;
}

}  // namespace cfgdetail

inline RunConfig parse_config(const YAML::Node& root) {
    using namespace cfgdetail;
    if (!root || !root.IsMap()) throw ConfigError("config: top level must be a map");
    RunConfig c;
    c.seed = get_or<std::uint64_t>(root, "seed", 0);
    c.output_dir = get_or<std::string>(root, "output_dir", "out");

    const YAML::Node input = root["input"];
    if (!input) bad("input", "missing required key");
    const bool has_image = static_cast<bool>(input["image"]);
    const bool has_phantom = static_cast<bool>(input["phantom"]);
    if (has_image == has_phantom) bad("input", "exactly one of input.image / input.phantom is required");
    if (has_image) {
        if (!input["image"].IsScalar()) bad("input.image", "expected a file path");
        c.image_path = input["image"].as<std::string>();
    } else {
        const YAML::Node ph = input["phantom"];
        PhantomConfig p;
        p.preset = get_or<std::string>(ph, "preset", "");
        if (!p.preset.empty() && p.preset != "rayleigh-phantom")
            bad("input.phantom.preset", "unknown preset (rayleigh-phantom)");
        if (const auto size = ph["size"]) {
            if (!size.IsSequence() || size.size() != 2) bad("input.phantom.size", "expected [width, height]");
            p.width = size[0].as<int>();
            p.height = size[1].as<int>();
        }
        if (p.preset == "rayleigh-phantom") {
            // bright speckle object on a darker speckle pool; overridable below
            p.shape.kind = PhantomShapeConfig::Kind::Disk;
            p.shape.cx = p.width / 2.0;
            p.shape.cy = p.height / 2.0;
            p.shape.r = 0.27 * std::min(p.width, p.height);
            p.intensity_in = 160.0;
            p.intensity_out = 80.0;
            p.noise.family_in = p.noise.family_out = "rayleigh";
        }
        if (ph["shape"]) p.shape = parse_shape(ph["shape"], "input.phantom.shape");
        else if (p.preset.empty()) bad("input.phantom.shape", "missing required key");
        p.intensity_in = get_or<double>(ph, "intensity_in", p.intensity_in);
        p.intensity_out = get_or<double>(ph, "intensity_out", p.intensity_out);
        if (const auto occ = ph["occlusions"]) {
            if (!occ.IsSequence()) bad("input.phantom.occlusions", "expected a list");
            for (size_t i = 0; i < occ.size(); ++i)
                p.occlusions.push_back(parse_shape(occ[i], "input.phantom.occlusions[" + std::to_string(i) + "]"));
        }
        if (const auto nn = ph["noise"]) {
            if (const auto in = nn["inside"]) {
                p.noise.family_in = get_or<std::string>(in, "family", p.noise.family_in);
                if (in["param"]) p.noise.param_in = in["param"].as<double>();
            }
            if (const auto out = nn["outside"]) {
                p.noise.family_out = get_or<std::string>(out, "family", p.noise.family_out);
                if (out["param"]) p.noise.param_out = out["param"].as<double>();
            }
            if (nn["snr"]) p.noise.snr = nn["snr"].as<double>();
            if (nn["seed"]) p.noise.seed = nn["seed"].as<std::uint64_t>();
        }
        c.phantom = std::move(p);
    }
    c.ground_truth_path = get_or<std::string>(root, "ground_truth", "");

    const YAML::Node init = root["init"];
    if (!init) bad("init", "missing required key");
    int init_kinds = 0;
    if (const auto d = init["disk"]) {
        ++init_kinds;
        c.init.kind = InitConfig::Kind::Disk;
        c.init.cx = required<double>(d, "init.disk.cx");
        c.init.cy = required<double>(d, "init.disk.cy");
        c.init.r = required<double>(d, "init.disk.r");
    }
    if (const auto rc = init["rect"]) {
        ++init_kinds;
        c.init.kind = InitConfig::Kind::Rect;
        c.init.x = required<double>(rc, "init.rect.x");
        c.init.y = required<double>(rc, "init.rect.y");
        c.init.w = required<double>(rc, "init.rect.w");
        c.init.h = required<double>(rc, "init.rect.h");
    }
    if (const auto m = init["mask"]) {
        ++init_kinds;
        c.init.kind = InitConfig::Kind::MaskFile;
        c.init.mask_path = m.as<std::string>();
    }
    if (init_kinds != 1) bad("init", "exactly one of disk / rect / mask is required");

    if (const auto noise = root["noise"]) {
        if (const auto in = noise["inside"]) {
            c.noise_inside.family = get_or<std::string>(in, "family", c.noise_inside.family);
            c.noise_inside.sigma = get_or<double>(in, "sigma", c.noise_inside.sigma);
        }
        if (const auto out = noise["outside"]) {
            c.noise_outside.family = get_or<std::string>(out, "family", c.noise_outside.family);
            c.noise_outside.sigma = get_or<double>(out, "sigma", c.noise_outside.sigma);
        }
    }
    // validate family names early so errors carry the config key
    try {
        c.noise_inside.make();
    } catch (const ConfigError& e) {
        bad("noise.inside.family", e.what());
    }
    try {
        c.noise_outside.make();
    } catch (const ConfigError& e) {
        bad("noise.outside.family", e.what());
    }

    if (const auto sh = root["shape"]) {
        c.shape.alpha = get_or<double>(sh, "alpha", 0.0);
        c.shape.alpha_auto = get_or<double>(sh, "alpha_auto", 0.0);
        c.shape.order = get_or<int>(sh, "order", 8);
        if (const auto ref = sh["reference"]) {
            if (ref.IsScalar() && ref.as<std::string>() == "phantom-truth") {
                c.shape.reference.kind = ReferenceConfig::Kind::PhantomTruth;
            } else if (ref.IsMap() && ref["mask"]) {
                c.shape.reference.kind = ReferenceConfig::Kind::MaskFile;
                c.shape.reference.path = ref["mask"].as<std::string>();
            } else if (ref.IsMap() && ref["moments"]) {
                c.shape.reference.kind = ReferenceConfig::Kind::MomentsFile;
                c.shape.reference.path = ref["moments"].as<std::string>();
            } else {
                bad("shape.reference", "expected phantom-truth, {mask: path} or {moments: path}");
            }
        }
        if ((c.shape.alpha > 0.0 || c.shape.alpha_auto > 0.0) &&
            c.shape.reference.kind == ReferenceConfig::Kind::None)
            bad("shape.reference", "required when the shape prior is enabled");
        if (c.shape.alpha > 0.0 && c.shape.alpha_auto > 0.0)
            bad("shape.alpha", "set either alpha or alpha_auto, not both");
    }

    if (const auto ev = root["evolution"]) {
        EvolutionConfig& e = c.evolution;
        e.beta = get_or<double>(ev, "beta", e.beta);
        e.dt = get_or<double>(ev, "dt", e.dt);
        e.n_noise_iters = get_or<int>(ev, "n_noise_iters", e.n_noise_iters);
        e.shape_speed_threshold = get_or<double>(ev, "shape_speed_threshold", e.shape_speed_threshold);
        e.max_shape_iters = get_or<int>(ev, "max_shape_iters", e.max_shape_iters);
        e.max_outer_iters = get_or<int>(ev, "max_outer_iters", e.max_outer_iters);
        e.convergence_tol = get_or<double>(ev, "convergence_tol", e.convergence_tol);
        e.convergence_window = get_or<int>(ev, "convergence_window", e.convergence_window);
        e.reinit_every = get_or<int>(ev, "reinit_every", e.reinit_every);
        e.band_width = get_or<double>(ev, "band_width", e.band_width);
        e.heaviside_eps = get_or<double>(ev, "heaviside_eps", e.heaviside_eps);
    }
    try {
        c.evolution.validate();
    } catch (const ConfigError& e) {
        throw ConfigError(std::string("config: evolution: ") + e.what());
    }
    c.evolution.seed = c.seed;
    return c;
}

inline RunConfig load_config(const std::string& path) {
    YAML::Node root;
    try {
        root = YAML::LoadFile(path);
    } catch (const YAML::BadFile&) {
        throw ConfigError("config: cannot open file: " + path);
    } catch (const YAML::Exception& e) {
        throw ConfigError("config: parse error in " + path + ": " + e.what());
    }
    return parse_config(root);
}

inline YAML::Node to_yaml(const RunConfig& c) {
    using namespace cfgdetail;
    YAML::Node n;
    n["seed"] = c.seed;
    n["output_dir"] = c.output_dir;
    if (c.phantom) {
        const PhantomConfig& p = *c.phantom;
        YAML::Node ph;
        if (!p.preset.empty()) ph["preset"] = p.preset;
        ph["size"].push_back(p.width);
        ph["size"].push_back(p.height);
        ph["shape"] = emit_shape(p.shape);
        ph["intensity_in"] = p.intensity_in;
        ph["intensity_out"] = p.intensity_out;
        for (const auto& o : p.occlusions) ph["occlusions"].push_back(emit_shape(o));
        YAML::Node nn;
        nn["inside"]["family"] = p.noise.family_in;
        if (p.noise.param_in) nn["inside"]["param"] = *p.noise.param_in;
        nn["outside"]["family"] = p.noise.family_out;
        if (p.noise.param_out) nn["outside"]["param"] = *p.noise.param_out;
        if (p.noise.snr) nn["snr"] = *p.noise.snr;
        if (p.noise.seed) nn["seed"] = *p.noise.seed;
        ph["noise"] = nn;
        n["input"]["phantom"] = ph;
    } else {
        n["input"]["image"] = c.image_path;
    }
    if (!c.ground_truth_path.empty()) n["ground_truth"] = c.ground_truth_path;

    switch (c.init.kind) {
        case InitConfig::Kind::Disk:
            n["init"]["disk"]["cx"] = c.init.cx;
            n["init"]["disk"]["cy"] = c.init.cy;
            n["init"]["disk"]["r"] = c.init.r;
            break;
        case InitConfig::Kind::Rect:
            n["init"]["rect"]["x"] = c.init.x;
            n["init"]["rect"]["y"] = c.init.y;
            n["init"]["rect"]["w"] = c.init.w;
            n["init"]["rect"]["h"] = c.init.h;
            break;
        case InitConfig::Kind::MaskFile: n["init"]["mask"] = c.init.mask_path; break;
    }

    n["noise"]["inside"]["family"] = c.noise_inside.family;
    n["noise"]["inside"]["sigma"] = c.noise_inside.sigma;
    n["noise"]["outside"]["family"] = c.noise_outside.family;
    n["noise"]["outside"]["sigma"] = c.noise_outside.sigma;

    if (c.shape.alpha > 0.0) n["shape"]["alpha"] = c.shape.alpha;
    if (c.shape.alpha_auto > 0.0) n["shape"]["alpha_auto"] = c.shape.alpha_auto;
    n["shape"]["order"] = c.shape.order;
    switch (c.shape.reference.kind) {
        case ReferenceConfig::Kind::None: break;
        case ReferenceConfig::Kind::PhantomTruth: n["shape"]["reference"] = "phantom-truth"; break;
        case ReferenceConfig::Kind::MaskFile: n["shape"]["reference"]["mask"] = c.shape.reference.path; break;
        case ReferenceConfig::Kind::MomentsFile: n["shape"]["reference"]["moments"] = c.shape.reference.path; break;
    }

    const EvolutionConfig& e = c.evolution;
    YAML::Node ev;
    ev["beta"] = e.beta;
    ev["dt"] = e.dt;
    ev["n_noise_iters"] = e.n_noise_iters;
    ev["shape_speed_threshold"] = e.shape_speed_threshold;
    ev["max_shape_iters"] = e.max_shape_iters;
    ev["max_outer_iters"] = e.max_outer_iters;
    ev["convergence_tol"] = e.convergence_tol;
    ev["convergence_window"] = e.convergence_window;
    ev["reinit_every"] = e.reinit_every;
    ev["band_width"] = e.band_width;
    ev["heaviside_eps"] = e.heaviside_eps;
    n["evolution"] = ev;
    return n;
}

inline std::string serialize_config(const RunConfig& c) {
    YAML::Emitter out;
    out.SetDoublePrecision(17);
    out.SetFloatPrecision(9);
    out << to_yaml(c);
    return std::string(out.c_str()) + "\n";
}

// --- bridges from config structs to the library types -------------------

inline ShapeSpec make_shape(const PhantomShapeConfig& s) {
    switch (s.kind) {
        case PhantomShapeConfig::Kind::Disk: return ShapeSpec::disk(s.cx, s.cy, s.r);
        case PhantomShapeConfig::Kind::Rect: return ShapeSpec::rect(s.x, s.y, s.w, s.h);
        case PhantomShapeConfig::Kind::Ellipse: return ShapeSpec::ellipse(s.cx, s.cy, s.rx, s.ry);
        case PhantomShapeConfig::Kind::Polygon: return ShapeSpec::polygon(s.vertices);
        case PhantomShapeConfig::Kind::MaskFile: break;
    }
    throw ConfigError("make_shape: mask-file shapes must be resolved by the caller");
}

inline PhantomSpec make_phantom_spec(const PhantomConfig& p, const RegionMask* file_mask = nullptr) {
    PhantomSpec spec;
    spec.width = p.width;
    spec.height = p.height;
    spec.intensity_in = p.intensity_in;
    spec.intensity_out = p.intensity_out;
    if (p.shape.kind == PhantomShapeConfig::Kind::MaskFile) {
        if (!file_mask) throw ConfigError("phantom: mask-file shape needs a loaded mask");
        spec.shape = ShapeSpec::from_mask(*file_mask);
    } else {
        spec.shape = make_shape(p.shape);
    }
    for (const auto& o : p.occlusions) {
        if (o.kind == PhantomShapeConfig::Kind::MaskFile)
            throw ConfigError("phantom: occlusions must be disk/rect/ellipse/polygon");
        spec.occlusions.push_back(make_shape(o));
    }
    return spec;
}

inline NoiseSpec make_noise_spec(const PhantomConfig& p, std::uint64_t run_seed) {
    NoiseSpec ns;
    ns.inside.family = NoiseFamily::parse(p.noise.family_in);
    ns.outside.family = NoiseFamily::parse(p.noise.family_out);
    ns.inside.param = p.noise.param_in;
    ns.outside.param = p.noise.param_out;
    ns.snr = p.noise.snr;
    ns.seed = p.noise.seed.value_or(run_seed);
    return ns;
}

}  // namespace priorseg
