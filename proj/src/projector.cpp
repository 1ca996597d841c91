#include "spconv/projector.hpp"

#include <algorithm>
#include <fstream>
#include <ostream>
#include <sstream>

namespace spconv {

void time_curve::validate() const {
    SPCONV_REQUIRE(points.size() >= 2,
                   "time curve needs at least two points: " + layer);
    SPCONV_REQUIRE(dense_ns > 0.0, "time curve needs a dense time: " + layer);
    for (std::size_t i = 0; i < points.size(); ++i) {
        SPCONV_REQUIRE(points[i].second > 0.0,
                       "time curve has a non-positive time: " + layer);
        if (i > 0)
            SPCONV_REQUIRE(points[i - 1].first < points[i].first,
                           "time curve sparsities must strictly increase: "
                               + layer);
    }
}

double time_curve::at(double s, bool* clamped) const {
    if (clamped) *clamped = false;
    if (s <= points.front().first) {
        if (clamped && s < points.front().first) *clamped = true;
        return points.front().second;
    }
    if (s >= points.back().first) {
        if (clamped && s > points.back().first) *clamped = true;
        return points.back().second;
    }
    for (std::size_t i = 1; i < points.size(); ++i) {
        if (s <= points[i].first) {
            const auto [s0, t0] = points[i - 1];
            const auto [s1, t1] = points[i];
            return t0 + (t1 - t0) * (s - s0) / (s1 - s0);
        }
    }
    return points.back().second;
}

const time_curve* curve_set::find(const std::string& layer,
                                  component comp) const {
    for (const auto& c : curves)
        if (c.comp == comp && c.layer == layer) return &c;
    return nullptr;
}

curve_set load_curves(const std::string& path) {
    std::ifstream in(path);
    SPCONV_REQUIRE(in.good(), "cannot open curves: " + path);
    std::string line;
    SPCONV_REQUIRE(std::getline(in, line), "curves missing header: " + path);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    SPCONV_REQUIRE(line == "layer,component,sparsity,median_ns,dense_ns",
                   "bad curves header: " + path);
    curve_set set;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const std::string where = path + ":" + std::to_string(lineno);
        std::istringstream row(line);
        std::string layer, comp_s, s_s, ns_s, dense_s;
        const bool ok = bool(std::getline(row, layer, ','))
                        && bool(std::getline(row, comp_s, ','))
                        && bool(std::getline(row, s_s, ','))
                        && bool(std::getline(row, ns_s, ','))
                        && bool(std::getline(row, dense_s));
        SPCONV_REQUIRE(ok, "malformed curves row at " + where);
        component comp;
        if (comp_s == "fwd") comp = component::fwd;
        else if (comp_s == "bwi") comp = component::bwi;
        else if (comp_s == "bww") comp = component::bww;
        else throw error("unknown component at " + where);
        double s, ns, dense;
        try {
            s = std::stod(s_s);
            ns = std::stod(ns_s);
            dense = std::stod(dense_s);
        } catch (const std::exception&) {
            throw error("malformed curves number at " + where);
        }
        time_curve* cur = nullptr;
        for (auto& c : set.curves)
            if (c.comp == comp && c.layer == layer) cur = &c;
        if (!cur) {
            set.curves.push_back({layer, comp, {}, dense});
            cur = &set.curves.back();
        }
        SPCONV_REQUIRE(cur->dense_ns == dense,
                       "inconsistent dense time at " + where);
        cur->points.emplace_back(s, ns);
    }
    for (auto& c : set.curves) {
        std::sort(c.points.begin(), c.points.end());
        c.validate();
    }
    return set;
}

std::optional<double> component_sparsity(const sparsity_profile& profile,
                                         const std::string& layer, int epoch,
                                         component comp, batchnorm_mode bn) {
    auto need = [&](sparsity_source src) {
        const profile_entry* e = profile.find(layer, epoch, src);
        SPCONV_REQUIRE(e != nullptr,
                       "profile missing entry: " + layer + " epoch "
                           + std::to_string(epoch) + " "
                           + (src == sparsity_source::activation
                                  ? "activation"
                                  : "output_grad"));
        return e->sparsity;
    };
    switch (comp) {
    case component::fwd: return need(sparsity_source::activation);
    case component::bwi:
        if (bn == batchnorm_mode::batchnorm) return std::nullopt;
        return need(sparsity_source::output_grad);
    case component::bww:
        if (bn == batchnorm_mode::batchnorm)
            return need(sparsity_source::activation);
        return std::max(need(sparsity_source::activation),
                        need(sparsity_source::output_grad));
    }
    throw error("component_sparsity: bad component");
}

projection_report project(const curve_set& curves,
                          const sparsity_profile& profile,
                          const projection_config& config) {
    SPCONV_REQUIRE(config.epochs >= 1 && config.iters_per_epoch >= 1,
                   "projection needs at least one epoch and iteration");
    std::vector<std::string> layers;
    for (const auto& c : curves.curves)
        if (std::find(layers.begin(), layers.end(), c.layer) == layers.end())
            layers.push_back(c.layer);
    SPCONV_REQUIRE(!layers.empty(), "projection needs at least one curve");

    // Coverage first, so every gap is reported at once.
    std::string gaps;
    const component comps[3] = {component::fwd, component::bwi,
                                component::bww};
    for (const auto& l : layers)
        for (component comp : comps)
            if (!curves.find(l, comp))
                gaps += "  " + l + " " + component_name(comp) + "\n";
    SPCONV_REQUIRE(gaps.empty(), "curves missing (layer, component):\n" + gaps);

    projection_report rep;
    const double iters = double(config.iters_per_epoch);
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        for (const auto& l : layers) {
            for (component comp : comps) {
                const time_curve* curve = curves.find(l, comp);
                const std::optional<double> eff =
                    component_sparsity(profile, l, epoch, comp, config.bn);
                double t;
                if (!eff) {
                    t = curve->dense_ns;
                } else {
                    bool clamped = false;
                    t = curve->at(*eff, &clamped);
                    if (clamped)
                        rep.warnings.push_back(
                            "sparsity outside curve range, clamped: " + l
                            + " " + component_name(comp) + " epoch "
                            + std::to_string(epoch));
                }
                rep.sparse_ns += t * iters;
                rep.dense_ns += curve->dense_ns * iters;
                rep.comp_sparse_ns[int(comp)] += t * iters;
                rep.comp_dense_ns[int(comp)] += curve->dense_ns * iters;
            }
        }
    }
    rep.first_layer_ns = config.first_layer_ns * iters * config.epochs;
    rep.speedup_excl = rep.dense_ns / rep.sparse_ns;
    rep.speedup_incl = (rep.dense_ns + rep.first_layer_ns)
                       / (rep.sparse_ns + rep.first_layer_ns);
    return rep;
}

std::string report_to_text(const projection_report& rep) {
    std::ostringstream os;
    const double dense_all = rep.dense_ns + rep.first_layer_ns;
    os << "projection (times normalized to the dense total incl. first "
          "layer)\n";
    for (component comp :
         {component::fwd, component::bwi, component::bww}) {
        os << "  " << component_name(comp)
           << ": sparse=" << rep.comp_sparse_ns[int(comp)] / dense_all
           << " dense=" << rep.comp_dense_ns[int(comp)] / dense_all << "\n";
    }
    os << "  first_layer: " << rep.first_layer_ns / dense_all << "\n";
    os << "speedup incl. first layer: " << rep.speedup_incl << "\n";
    os << "speedup excl. first layer: " << rep.speedup_excl << "\n";
    for (const auto& w : rep.warnings) os << "warning: " << w << "\n";
    return os.str();
}

void write_breakdown_csv(const projection_report& rep, std::ostream& out) {
    out << "component,sparse_ns,dense_ns,fraction_of_dense\n";
    const double dense_all = rep.dense_ns + rep.first_layer_ns;
    for (component comp :
         {component::fwd, component::bwi, component::bww})
        out << component_name(comp) << "," << rep.comp_sparse_ns[int(comp)]
            << "," << rep.comp_dense_ns[int(comp)] << ","
            << rep.comp_sparse_ns[int(comp)] / dense_all << "\n";
    out << "first_layer," << rep.first_layer_ns << "," << rep.first_layer_ns
        << "," << rep.first_layer_ns / dense_all << "\n";
}

} // namespace spconv
