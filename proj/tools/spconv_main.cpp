// Command-line driver: correctness verification against the dense
// oracle, timed sparsity sweeps, counter reports, plan dumps and the
// training-time projector.
//
// Exit codes: 0 ok, 1 verification failure, 2 usage error.

#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "spconv/bench.hpp"
#include "spconv/projector.hpp"

namespace {

struct shape_flags {
    std::string layer;
    std::vector<int> dims; // C,K,H,W,R,S,O,P
    int minibatch = 4;
    int scale = 2;
    bool full = false;

    void attach(CLI::App* cmd) {
        cmd->add_option("--layer", layer,
                        "layer name from the built-in registry");
        cmd->add_option("--dims", dims,
                        "custom dims C,K,H,W,R,S,O,P (overrides --layer)")
            ->delimiter(',')
            ->expected(8);
        cmd->add_option("--minibatch", minibatch, "minibatch size (N)");
        cmd->add_option("--scale", scale, "divide H,W by this factor");
        cmd->add_flag("--full", full,
                      "paper dims: N=16, scale=1 (overrides the desk-scale "
                      "defaults)");
    }

    spconv::conv_shape resolve() const {
        int n = minibatch, sc = scale;
        if (full) {
            n = 16;
            sc = 1;
        }
        if (!dims.empty()) {
            const auto& d = dims;
            return spconv::scaled_shape(
                spconv::conv_shape::make(16, d[0], d[1], d[2], d[3], d[4],
                                         d[5], d[6], d[7]),
                n, sc);
        }
        const spconv::layer_config* lc = spconv::find_layer(layer);
        if (!lc) throw CLI::ValidationError("--layer", "unknown layer: " + layer);
        return spconv::scaled_shape(lc->shape, n, sc);
    }
};

spconv::component parse_component(const std::string& s) {
    if (s == "fwd") return spconv::component::fwd;
    if (s == "bwi") return spconv::component::bwi;
    if (s == "bww") return spconv::component::bww;
    throw CLI::ValidationError("--component", "must be fwd, bwi or bww");
}

spconv::backend_pref parse_backend(const std::string& s) {
    if (s == "auto") return spconv::backend_pref::automatic;
    if (s == "scalar") return spconv::backend_pref::force_scalar;
    if (s == "native") return spconv::backend_pref::force_native;
    throw CLI::ValidationError("--backend", "must be auto, scalar or native");
}

void print_counter_table(const spconv::verify_result& vr) {
    const auto& c = vr.counters;
    const auto& e = vr.expected;
    std::cout << "counter             actual           expected\n"
              << "checked_vectors     " << c.checked_vectors << "  \t"
              << e.checked_vectors << "\n"
              << "executed_fmas       " << c.executed_vector_fmas << "  \t"
              << e.executed_vector_fmas << "\n"
              << "skipped_fmas        "
              << e.dense_total() - c.executed_vector_fmas << "  \t"
              << e.skipped_vector_fmas << "\n"
              << "output_loads        " << c.output_vector_loads << "\n"
              << "output_stores       " << c.output_vector_stores << "\n"
              << "nonzero_elements    -  \t" << e.nonzero_elements << "\n";
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"sparsity-aware direct convolution training kernels"};
    app.require_subcommand(1);

    // --- verify ---------------------------------------------------------
    auto* verify = app.add_subcommand(
        "verify", "run a sparse kernel against the 64-bit dense oracle");
    shape_flags vshape;
    vshape.attach(verify);
    std::string v_comp = "fwd", v_mode = "sparse", v_backend = "auto";
    std::string v_check = "auto", v_dump;
    double v_sparsity = 0.5;
    int v_vw = 16, v_workers = 1;
    spconv::u64 v_seed = 1;
    bool v_corrupt = false;
    verify->add_option("--component", v_comp, "fwd, bwi or bww");
    verify->add_option("--sparsity", v_sparsity, "zero fraction in [0,1]");
    verify->add_option("--vector-width", v_vw, "V: 4, 8 or 16");
    verify->add_option("--workers", v_workers, "worker threads");
    verify->add_option("--seed", v_seed, "input generator seed");
    verify->add_option("--mode", v_mode, "sparse or dense");
    verify->add_option("--backend", v_backend, "auto, scalar or native");
    verify->add_option("--check-on", v_check,
                       "bww zero-check side: input, output_grad or auto");
    verify->add_option("--dump", v_dump,
                       "dump operands and outputs with this path prefix");
    verify->add_flag("--corrupt-layout", v_corrupt,
                     "test hook: mislabel the filter layout")
        ->group(""); // hidden

    // --- counters -------------------------------------------------------
    auto* counters = app.add_subcommand(
        "counters", "compare instrumented counters with the count oracle");
    shape_flags cshape;
    cshape.attach(counters);
    std::string c_comp = "fwd", c_backend = "auto", c_check = "auto";
    double c_sparsity = 0.5;
    int c_vw = 16, c_workers = 1;
    spconv::u64 c_seed = 1;
    counters->add_option("--component", c_comp, "fwd, bwi or bww");
    counters->add_option("--sparsity", c_sparsity, "zero fraction in [0,1]");
    counters->add_option("--vector-width", c_vw, "V: 4, 8 or 16");
    counters->add_option("--workers", c_workers, "worker threads");
    counters->add_option("--seed", c_seed, "input generator seed");
    counters->add_option("--backend", c_backend, "auto, scalar or native");
    counters->add_option("--check-on", c_check,
                         "bww zero-check side: input, output_grad or auto");

    // --- sweep ----------------------------------------------------------
    auto* sweep = app.add_subcommand(
        "sweep", "timed sparsity sweep producing a CSV of records");
    std::vector<std::string> s_layers;
    std::vector<std::string> s_comps{"fwd"};
    std::vector<double> s_grid{0.0, 0.3, 0.5, 0.8, 0.9};
    std::string s_out, s_curves_out, s_backend = "auto";
    int s_minibatch = 4, s_scale = 2, s_vw = 16, s_workers = 1, s_repeats = 5;
    bool s_full = false, s_all = false;
    spconv::u64 s_seed = 1;
    sweep->add_option("--layers", s_layers, "layer names")->delimiter(',');
    sweep->add_flag("--all", s_all, "sweep every registry layer");
    sweep->add_option("--components", s_comps, "subset of fwd,bwi,bww")
        ->delimiter(',');
    sweep->add_option("--grid", s_grid, "sparsity grid")->delimiter(',');
    sweep->add_option("--minibatch", s_minibatch, "minibatch size (N)");
    sweep->add_option("--scale", s_scale, "divide H,W by this factor");
    sweep->add_flag("--full", s_full, "paper dims: N=16, scale=1");
    sweep->add_option("--vector-width", s_vw, "V: 4, 8 or 16");
    sweep->add_option("--workers", s_workers, "worker threads");
    sweep->add_option("--repeats", s_repeats,
                      "timed calls per point (median, 2 warmups)");
    sweep->add_option("--seed", s_seed, "input generator seed");
    sweep->add_option("--backend", s_backend, "auto, scalar or native");
    sweep->add_option("--out", s_out, "output CSV path (default stdout)");
    sweep->add_option("--curves", s_curves_out,
                      "also write a projector curves CSV here");

    // --- plan-dump ------------------------------------------------------
    auto* plan_dump =
        app.add_subcommand("plan-dump", "print the kernel plan key=value");
    shape_flags pshape;
    pshape.attach(plan_dump);
    std::string p_comp = "fwd", p_check = "input";
    int p_vw = 16, p_budget = 30;
    plan_dump->add_option("--component", p_comp, "fwd, bwi or bww");
    plan_dump->add_option("--vector-width", p_vw, "V: 4, 8 or 16");
    plan_dump->add_option("--budget", p_budget, "accumulator budget");
    plan_dump->add_option("--check-on", p_check,
                          "bww zero-check side: input or output_grad");

    // --- project --------------------------------------------------------
    auto* project_cmd = app.add_subcommand(
        "project", "project end-to-end conv training time from curves and a "
                   "sparsity profile");
    std::string pr_curves, pr_profile, pr_bn = "off", pr_out;
    double pr_first_ns = 0.0;
    int pr_epochs = 1, pr_iters = 1;
    project_cmd->add_option("--curves", pr_curves, "curves CSV from sweep")
        ->required();
    project_cmd->add_option("--profile", pr_profile, "sparsity profile CSV")
        ->required();
    project_cmd->add_option("--batchnorm", pr_bn, "on or off");
    project_cmd->add_option("--first-layer-ns", pr_first_ns,
                            "first-layer cost per iteration");
    project_cmd->add_option("--epochs", pr_epochs, "training epochs");
    project_cmd->add_option("--iters-per-epoch", pr_iters,
                            "iterations per epoch");
    project_cmd->add_option("--out", pr_out, "breakdown CSV path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2; // usage errors exit 2
    }

    try {
        if (*verify) {
            spconv::verify_request req;
            req.shape = vshape.resolve();
            req.layer_name = vshape.layer.empty() ? "custom" : vshape.layer;
            req.comp = parse_component(v_comp);
            req.sparsity = v_sparsity;
            req.V = v_vw;
            req.workers = v_workers;
            req.seed = v_seed;
            req.pref = parse_backend(v_backend);
            req.mode = v_mode == "dense" ? spconv::run_mode::dense
                                         : spconv::run_mode::sparse;
            if (v_check == "input") req.check = spconv::bww_check::input;
            else if (v_check == "output_grad")
                req.check = spconv::bww_check::output_grad;
            req.dump_prefix = v_dump;
            req.corrupt_filter = v_corrupt;
            const spconv::verify_result vr = spconv::run_verify(req);
            std::cout << (vr.pass ? "PASS" : "FAIL") << " layer="
                      << req.layer_name << " component=" << v_comp
                      << " sparsity=" << v_sparsity
                      << " backend=" << vr.backend
                      << " max_rel_err=" << vr.max_rel_err
                      << " counters=" << (vr.counters_match ? "ok" : "MISMATCH")
                      << "\n";
            return vr.pass ? 0 : 1;
        }
        if (*counters) {
            spconv::verify_request req;
            req.shape = cshape.resolve();
            req.layer_name = cshape.layer.empty() ? "custom" : cshape.layer;
            req.comp = parse_component(c_comp);
            req.sparsity = c_sparsity;
            req.V = c_vw;
            req.workers = c_workers;
            req.seed = c_seed;
            req.pref = parse_backend(c_backend);
            if (c_check == "input") req.check = spconv::bww_check::input;
            else if (c_check == "output_grad")
                req.check = spconv::bww_check::output_grad;
            const spconv::verify_result vr = spconv::run_verify(req);
            print_counter_table(vr);
            std::cout << (vr.counters_match ? "counters OK"
                                            : "counters MISMATCH")
                      << "\n";
            return vr.counters_match ? 0 : 1;
        }
        if (*sweep) {
            spconv::sweep_request req;
            if (s_all)
                for (const auto& l : spconv::layer_registry())
                    req.layers.push_back(l.name);
            else
                req.layers = s_layers;
            if (req.layers.empty())
                throw spconv::error("sweep: give --layers or --all");
            req.comps.clear();
            for (const auto& c : s_comps)
                req.comps.push_back(parse_component(c));
            req.grid = s_grid;
            req.minibatch = s_full ? 16 : s_minibatch;
            req.scale = s_full ? 1 : s_scale;
            req.V = s_vw;
            req.workers = s_workers;
            req.repeats = s_repeats;
            req.seed = s_seed;
            req.pref = parse_backend(s_backend);
            const auto records = spconv::run_sweep(req);
            if (s_out.empty()) {
                spconv::write_sweep_csv(records, std::cout);
            } else {
                std::ofstream out(s_out, std::ios::trunc);
                if (!out.good())
                    throw spconv::error("cannot write " + s_out);
                spconv::write_sweep_csv(records, out);
            }
            if (!s_curves_out.empty()) {
                std::ofstream out(s_curves_out, std::ios::trunc);
                if (!out.good())
                    throw spconv::error("cannot write " + s_curves_out);
                spconv::write_curves_csv(records, out);
            }
            return 0;
        }
        if (*plan_dump) {
            const spconv::conv_shape sh = pshape.resolve();
            const spconv::kernel_plan pl = spconv::plan(
                sh, parse_component(p_comp), p_vw, p_budget,
                p_check == "output_grad" ? spconv::bww_check::output_grad
                                         : spconv::bww_check::input);
            std::cout << spconv::plan_to_text(sh, pl);
            return 0;
        }
        if (*project_cmd) {
            const spconv::curve_set curves = spconv::load_curves(pr_curves);
            const spconv::sparsity_profile profile =
                spconv::load_profile(pr_profile);
            spconv::projection_config cfg;
            cfg.network = profile.network;
            cfg.bn = pr_bn == "on" ? spconv::batchnorm_mode::batchnorm
                                   : spconv::batchnorm_mode::none;
            cfg.first_layer_ns = pr_first_ns;
            cfg.epochs = pr_epochs;
            cfg.iters_per_epoch = pr_iters;
            const spconv::projection_report rep =
                spconv::project(curves, profile, cfg);
            std::cout << spconv::report_to_text(rep);
            if (!pr_out.empty()) {
                std::ofstream out(pr_out, std::ios::trunc);
                if (!out.good())
                    throw spconv::error("cannot write " + pr_out);
                spconv::write_breakdown_csv(rep, out);
            }
            return 0;
        }
    } catch (const CLI::ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const spconv::error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
