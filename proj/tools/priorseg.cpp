// priorseg: region-based active-contour segmentation with exponential-family
// noise models and an invariant Legendre-moment shape prior.

#include <CLI11.hpp>

#include <string>

#include "priorseg/commands.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Level-set segmentation with noise and shape priors"};
    app.require_subcommand(1);

    priorseg::CliOptions opt;
    bool quiet = false, verbose = false;
    app.add_flag("-q,--quiet", quiet, "suppress normal output");
    app.add_flag("-v,--verbose", verbose, "verbose output");
    app.add_option("--trace-every", opt.trace_every, "print every k-th outer iteration");
    app.add_flag("--timings", opt.timings, "export measured wall times in trace.csv (breaks byte-reproducibility)");

    auto* seg = app.add_subcommand("segment", "run a segmentation from a config file");
    std::string seg_config;
    seg->add_option("config", seg_config, "YAML (or JSON) run configuration")->required();
    seg->add_flag("--save-phi", opt.save_phi, "also write final_phi.phi1");

    auto* mom = app.add_subcommand("moments", "compute invariant Legendre moments of a binary mask");
    std::string mask_path, moments_out;
    int order = 8;
    mom->add_option("mask", mask_path, "binary mask (PNG or PGM)")->required();
    mom->add_option("--order", order, "moment order N (p+q <= N)")->capture_default_str();
    mom->add_option("-o,--output", moments_out, "write the moment table to a file");

    auto* bench = app.add_subcommand("bench", "run a config matrix and summarize");
    std::string bench_config;
    bench->add_option("config", bench_config, "bench configuration (bench.base + bench.matrix)")->required();
    bench->add_option("-j,--jobs", opt.jobs, "parallel worker count")->capture_default_str();

    CLI11_PARSE(app, argc, argv);
    opt.verbosity = quiet ? -1 : (verbose ? 1 : 0);
    if (opt.verbosity >= 1 && opt.trace_every == 0) opt.trace_every = 10;

    if (seg->parsed()) return priorseg::cmd_segment(seg_config, opt);
    if (mom->parsed()) return priorseg::cmd_moments(mask_path, order, moments_out, opt);
    if (bench->parsed()) return priorseg::cmd_bench(bench_config, opt);
    return 1;
}
