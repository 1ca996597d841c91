#pragma once

// Harness driving the kernels: the evaluated-layer registry, oracle
// verification runs, timed sparsity sweeps and counter reports. The CLI
// is a thin wrapper over these entry points.

#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "spconv/kernels.hpp"
#include "spconv/oracle.hpp"
#include "spconv/planner.hpp"
#include "spconv/sparsity.hpp"

namespace spconv {

struct layer_config {
    std::string name;
    conv_shape shape; // registry batch size is 16
    std::string source;
};

// All 27 evaluated VGG / ResNet v1.5 layer configurations.
const std::vector<layer_config>& layer_registry();
const layer_config* find_layer(const std::string& name);

// Desk-scale variant: minibatch override and H,W divided by `scale`
// (floored, min 1).
conv_shape scaled_shape(const conv_shape& base, int minibatch, int scale);

struct verify_request {
    conv_shape shape;
    std::string layer_name = "custom";
    component comp = component::fwd;
    double sparsity = 0.5;
    int V = 16;
    int workers = 1;
    run_mode mode = run_mode::sparse;
    std::optional<bww_check> check; // unset: pick the sparser tensor
    u64 seed = 1;
    backend_pref pref = backend_pref::automatic;
    double tolerance = 1e-4;
    std::string dump_prefix;     // when set, dump operands and results
    bool corrupt_filter = false; // test hook: mislabel the filter layout
};

struct verify_result {
    bool pass = false;
    double max_rel_err = 0.0;
    kernel_counters counters;
    fma_count_report expected;
    bool counters_match = false;
    std::string backend;
    bww_check check_used = bww_check::input;
};

// Runs the sparse kernel against the 64-bit dense oracle and the FMA
// count simulation on synthetic inputs.
verify_result run_verify(const verify_request& req);

struct bench_record {
    std::string layer;
    component comp = component::fwd;
    double sparsity = 0.0;
    run_mode mode = run_mode::sparse;
    int workers = 1;
    double median_ns = 0.0;
    u64 exec_fmas = 0;
    double speedup_vs_dense = 1.0;
};

struct sweep_request {
    std::vector<std::string> layers;
    std::vector<component> comps{component::fwd};
    std::vector<double> grid{0.0, 0.5, 0.9};
    int minibatch = 4;
    int scale = 2;
    int V = 16;
    int workers = 1;
    int repeats = 5; // timed calls after 2 warmups
    u64 seed = 1;
    backend_pref pref = backend_pref::automatic;
};

// One record per (layer, component, grid sparsity) plus one dense-mode
// baseline record per (layer, component) and a geo-mean summary record
// per (component, sparsity) under the layer name "geomean".
std::vector<bench_record> run_sweep(const sweep_request& req);

// CSV columns: layer,component,sparsity,mode,workers,median_ns,exec_fmas,
// speedup_vs_dense
void write_sweep_csv(const std::vector<bench_record>& records,
                     std::ostream& out);

// Projector input: layer,component,sparsity,median_ns,dense_ns (sparse
// rows only, dense time repeated per row).
void write_curves_csv(const std::vector<bench_record>& records,
                      std::ostream& out);

double geo_mean(const std::vector<double>& xs);

// Median wall time of `repeats` calls after `warmups` extra calls.
double time_median_ns(const std::function<void()>& fn, int repeats,
                      int warmups = 2);

} // namespace spconv
