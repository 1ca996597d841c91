#pragma once

// End-to-end training-time projection: combines per-layer time-vs-
// sparsity measurements with a training sparsity profile, applying the
// BatchNorm substitution rules and a constant first-layer overhead.

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "spconv/planner.hpp"
#include "spconv/sparsity.hpp"

namespace spconv {

struct time_curve {
    std::string layer;
    component comp = component::fwd;
    std::vector<std::pair<double, double>> points; // (sparsity, ns), ascending
    double dense_ns = 0.0;

    // Linear interpolation; out-of-range sparsities clamp to the nearest
    // endpoint and set *clamped.
    double at(double sparsity, bool* clamped = nullptr) const;
    void validate() const;
};

struct curve_set {
    std::vector<time_curve> curves;
    const time_curve* find(const std::string& layer, component comp) const;
};

// CSV: layer,component,sparsity,median_ns,dense_ns
curve_set load_curves(const std::string& path);

enum class batchnorm_mode { batchnorm, none };

struct projection_config {
    std::string network;
    batchnorm_mode bn = batchnorm_mode::none;
    double first_layer_ns = 0.0; // per-iteration constant
    int epochs = 1;
    int iters_per_epoch = 1;
};

// Effective sparsity one component runs at, or nullopt for "run the
// dense baseline". With BatchNorm the output gradient carries no
// sparsity: BWI falls back to dense and BWW checks the input. Without
// it, BWI uses the output-gradient sparsity and BWW the higher of the
// two.
std::optional<double> component_sparsity(const sparsity_profile& profile,
                                         const std::string& layer, int epoch,
                                         component comp, batchnorm_mode bn);

struct projection_report {
    double sparse_ns = 0.0; // conv layers, first layer excluded
    double dense_ns = 0.0;
    double first_layer_ns = 0.0; // total over the run
    double speedup_incl = 1.0;
    double speedup_excl = 1.0;
    double comp_sparse_ns[3] = {0, 0, 0}; // indexed by component
    double comp_dense_ns[3] = {0, 0, 0};
    std::vector<std::string> warnings;
};

// Totals over epochs x iterations. Throws listing every missing
// (layer, component) curve or profile entry.
projection_report project(const curve_set& curves,
                          const sparsity_profile& profile,
                          const projection_config& config);

std::string report_to_text(const projection_report& rep);
// component,sparse_ns,dense_ns,fraction_of_dense rows plus first_layer
void write_breakdown_csv(const projection_report& rep, std::ostream& out);

} // namespace spconv
