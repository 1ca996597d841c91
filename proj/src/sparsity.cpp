#include "spconv/sparsity.hpp"

#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

namespace spconv {

plain_tensor relu(const plain_tensor& t) {
    plain_tensor out = t;
    for (auto& v : out.data) v = v > 0.0f ? v : 0.0f;
    return out;
}

plain_tensor relu_grad_mask(const plain_tensor& pre_activation,
                            const plain_tensor& upstream) {
    SPCONV_REQUIRE(pre_activation.n == upstream.n
                       && pre_activation.c == upstream.c
                       && pre_activation.h == upstream.h
                       && pre_activation.w == upstream.w,
                   "relu_grad_mask: shape mismatch");
    plain_tensor out = upstream;
    for (std::size_t e = 0; e < out.size(); ++e)
        if (!(pre_activation.data[e] > 0.0f)) out.data[e] = 0.0f;
    return out;
}

namespace {

// mt19937_64 bits mapped to floats by hand so generated tensors are
// identical across standard libraries.
struct value_gen {
    std::mt19937_64 rng;
    explicit value_gen(u64 seed) : rng(seed) {}
    double unit() { return double(rng() >> 11) * 0x1p-53; }
};

} // namespace

plain_tensor gen_sparse(int n, int c, int h, int w, double sparsity,
                        u64 seed) {
    SPCONV_REQUIRE(sparsity >= 0.0 && sparsity <= 1.0,
                   "gen_sparse: sparsity must be in [0, 1]");
    plain_tensor t(n, c, h, w);
    value_gen g(seed);
    for (auto& v : t.data) {
        if (g.unit() < sparsity)
            v = 0.0f;
        else
            v = float(0.1 + 0.9 * g.unit());
    }
    return t;
}

plain_tensor gen_gaussian_relu(int n, int c, int h, int w, u64 seed) {
    plain_tensor t(n, c, h, w);
    value_gen g(seed);
    for (std::size_t e = 0; e < t.size(); ++e) {
        // Box-Muller on hand-mapped uniforms
        const double u1 = std::max(g.unit(), 1e-300);
        const double u2 = g.unit();
        const double z =
            std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
        t.data[e] = z > 0.0 ? float(z) : 0.0f;
    }
    return t;
}

double measure_sparsity(const plain_tensor& t) {
    if (t.data.empty()) return 0.0;
    std::size_t zeros = 0;
    for (float v : t.data)
        if (v == 0.0f) ++zeros;
    return double(zeros) / double(t.size());
}

const profile_entry* sparsity_profile::find(const std::string& layer,
                                            int epoch,
                                            sparsity_source source) const {
    for (const auto& e : entries)
        if (e.epoch == epoch && e.source == source && e.layer == layer)
            return &e;
    return nullptr;
}

int sparsity_profile::max_epoch() const {
    int m = -1;
    for (const auto& e : entries) m = std::max(m, e.epoch);
    return m;
}

sparsity_profile load_profile(const std::string& path) {
    std::ifstream in(path);
    SPCONV_REQUIRE(in.good(), "cannot open profile: " + path);
    std::string line;
    SPCONV_REQUIRE(std::getline(in, line),
                   "profile missing header line: " + path);
    // tolerate a trailing CR from foreign editors
    if (!line.empty() && line.back() == '\r') line.pop_back();
    SPCONV_REQUIRE(line == "network,layer,epoch,source,sparsity",
                   "bad profile header: " + path);

    sparsity_profile prof;
    std::set<std::tuple<std::string, int, int>> seen;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::istringstream row(line);
        std::string network, layer, epoch_s, source_s, sparsity_s;
        const bool ok = bool(std::getline(row, network, ','))
                        && bool(std::getline(row, layer, ','))
                        && bool(std::getline(row, epoch_s, ','))
                        && bool(std::getline(row, source_s, ','))
                        && bool(std::getline(row, sparsity_s));
        const std::string where =
            path + ":" + std::to_string(lineno);
        SPCONV_REQUIRE(ok, "malformed profile row at " + where);
        profile_entry e;
        e.layer = layer;
        try {
            e.epoch = std::stoi(epoch_s);
            e.sparsity = std::stod(sparsity_s);
        } catch (const std::exception&) {
            throw error("malformed profile number at " + where);
        }
        SPCONV_REQUIRE(e.epoch >= 0, "negative epoch at " + where);
        SPCONV_REQUIRE(e.sparsity >= 0.0 && e.sparsity <= 1.0,
                       "sparsity out of [0,1] at " + where);
        if (source_s == "activation")
            e.source = sparsity_source::activation;
        else if (source_s == "output_grad")
            e.source = sparsity_source::output_grad;
        else
            throw error("unknown sparsity source at " + where);
        if (prof.network.empty()) prof.network = network;
        SPCONV_REQUIRE(prof.network == network,
                       "profile mixes networks at " + where);
        const bool fresh =
            seen.emplace(e.layer, e.epoch, int(e.source)).second;
        SPCONV_REQUIRE(fresh, "duplicate profile key at " + where);
        prof.entries.push_back(std::move(e));
    }
    return prof;
}

void save_profile(const sparsity_profile& p, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    SPCONV_REQUIRE(out.good(), "cannot write profile: " + path);
    out << "network,layer,epoch,source,sparsity\n";
    for (const auto& e : p.entries)
        out << p.network << "," << e.layer << "," << e.epoch << ","
            << (e.source == sparsity_source::activation ? "activation"
                                                        : "output_grad")
            << "," << e.sparsity << "\n";
}

} // namespace spconv
