#include "spconv/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <map>
#include <ostream>

namespace spconv {

namespace {

layer_config layer(const std::string& name, const std::string& source, int C,
                   int K, int H, int W, int R, int S, int O, int P) {
    return {name, conv_shape::make(16, C, K, H, W, R, S, O, P), source};
}

} // namespace

const std::vector<layer_config>& layer_registry() {
    static const std::vector<layer_config> reg = {
        layer("vgg1_2", "vgg", 64, 64, 224, 224, 3, 3, 1, 1),
        layer("vgg2_1", "vgg", 64, 128, 112, 112, 3, 3, 1, 1),
        layer("vgg2_2", "vgg", 128, 128, 112, 112, 3, 3, 1, 1),
        layer("vgg3_1", "vgg", 128, 256, 56, 56, 3, 3, 1, 1),
        layer("vgg3_2", "vgg", 256, 256, 56, 56, 3, 3, 1, 1),
        layer("vgg4_1", "vgg", 256, 512, 28, 28, 3, 3, 1, 1),
        layer("vgg4_2", "vgg", 512, 512, 28, 28, 3, 3, 1, 1),
        layer("vgg5_1", "vgg", 512, 512, 14, 14, 3, 3, 1, 1),
        layer("resnet2_1a", "resnet", 64, 64, 56, 56, 1, 1, 1, 1),
        layer("resnet2_1b", "resnet", 256, 64, 56, 56, 1, 1, 1, 1),
        layer("resnet2_2", "resnet", 64, 64, 56, 56, 3, 3, 1, 1),
        layer("resnet2_3", "resnet", 64, 256, 56, 56, 1, 1, 1, 1),
        layer("resnet3_1a", "resnet", 256, 128, 56, 56, 1, 1, 1, 1),
        layer("resnet3_1b", "resnet", 512, 128, 28, 28, 1, 1, 1, 1),
        layer("resnet3_2", "resnet", 128, 128, 28, 28, 3, 3, 1, 1),
        layer("resnet3_2/r", "resnet", 128, 128, 56, 56, 3, 3, 2, 2),
        layer("resnet3_3", "resnet", 128, 512, 28, 28, 1, 1, 1, 1),
        layer("resnet4_1a", "resnet", 512, 256, 28, 28, 1, 1, 1, 1),
        layer("resnet4_1b", "resnet", 1024, 256, 14, 14, 1, 1, 1, 1),
        layer("resnet4_2", "resnet", 256, 256, 14, 14, 3, 3, 1, 1),
        layer("resnet4_2/r", "resnet", 256, 256, 28, 28, 3, 3, 2, 2),
        layer("resnet4_3", "resnet", 256, 1024, 14, 14, 1, 1, 1, 1),
        layer("resnet5_1a", "resnet", 1024, 512, 14, 14, 1, 1, 1, 1),
        layer("resnet5_1b", "resnet", 2048, 512, 7, 7, 1, 1, 1, 1),
        layer("resnet5_2", "resnet", 512, 512, 7, 7, 3, 3, 1, 1),
        layer("resnet5_2/r", "resnet", 512, 512, 14, 14, 3, 3, 2, 2),
        layer("resnet5_3", "resnet", 512, 2048, 7, 7, 1, 1, 1, 1),
    };
    return reg;
}

const layer_config* find_layer(const std::string& name) {
    for (const auto& l : layer_registry())
        if (l.name == name) return &l;
    return nullptr;
}

conv_shape scaled_shape(const conv_shape& base, int minibatch, int scale) {
    SPCONV_REQUIRE(minibatch >= 1 && scale >= 1,
                   "scaled_shape: bad minibatch or scale");
    conv_shape sh = base;
    sh.N = minibatch;
    sh.H = std::max(1, base.H / scale);
    sh.W = std::max(1, base.W / scale);
    // keep the filter inside the padded image at tiny scales
    sh.H = std::max(sh.H, sh.S - 2 * sh.padH);
    sh.W = std::max(sh.W, sh.R - 2 * sh.padW);
    sh.validate();
    return sh;
}

double time_median_ns(const std::function<void()>& fn, int repeats,
                      int warmups) {
    SPCONV_REQUIRE(repeats >= 1, "timing needs at least one repeat");
    for (int i = 0; i < warmups; ++i) fn();
    std::vector<double> samples(repeats);
    for (int i = 0; i < repeats; ++i) {
        const auto t0 = std::chrono::steady_clock::now();
        fn();
        const auto t1 = std::chrono::steady_clock::now();
        samples[i] =
            double(std::chrono::duration_cast<std::chrono::nanoseconds>(t1
                                                                        - t0)
                       .count());
    }
    std::sort(samples.begin(), samples.end());
    const int mid = repeats / 2;
    return repeats % 2 ? samples[mid]
                       : 0.5 * (samples[mid - 1] + samples[mid]);
}

namespace {

struct prepared_run {
    kernel_plan plan;
    blocked_tensor a, b;        // kernel operands
    plain_tensor reference_in[2]; // plain operands for the oracle
    bww_check check_used = bww_check::input;
};

// Builds synthetic operands for one component at the requested sparsity
// of the ReLU-bearing tensor. Filters and the non-checked BWW tensor are
// dense draws from the same generator.
prepared_run prepare(const conv_shape& sh, component comp, double sparsity,
                     int V, std::optional<bww_check> check, u64 seed) {
    prepared_run pr;
    const int hp = sh.out_h(), wp = sh.out_w();
    switch (comp) {
    case component::fwd: {
        pr.plan = plan(sh, component::fwd, V);
        plain_tensor D = gen_sparse(sh.N, sh.C, sh.H, sh.W, sparsity, seed);
        plain_tensor G = gen_sparse(sh.K, sh.C, sh.S, sh.R, 0.0, seed + 1);
        pr.a = pack_act_nchwc(D, V);
        pr.b = pack_filter(G, V);
        pr.reference_in[0] = std::move(D);
        pr.reference_in[1] = std::move(G);
        break;
    }
    case component::bwi: {
        pr.plan = plan(sh, component::bwi, V);
        plain_tensor dY = gen_sparse(sh.N, sh.K, hp, wp, sparsity, seed);
        plain_tensor G = gen_sparse(sh.K, sh.C, sh.S, sh.R, 0.0, seed + 1);
        pr.a = pack_act_nchwc(dY, V);
        pr.b = pack_filter(G, V, /*swap_kc=*/true);
        pr.reference_in[0] = std::move(dY);
        pr.reference_in[1] = std::move(G);
        break;
    }
    case component::bww: {
        plain_tensor D = gen_sparse(sh.N, sh.C, sh.H, sh.W, sparsity,
                                    seed);
        plain_tensor dY = gen_sparse(sh.N, sh.K, hp, wp, 0.0, seed + 2);
        bww_check use;
        if (check) {
            use = *check;
        } else {
            // default to the tensor with higher measured sparsity
            use = measure_sparsity(dY) > measure_sparsity(D)
                      ? bww_check::output_grad
                      : bww_check::input;
        }
        pr.check_used = use;
        pr.plan = plan(sh, component::bww, V, 30, use);
        if (use == bww_check::input) {
            pr.a = pack_act_chwnn(D, V);
            pr.b = pack_act_nchwc(dY, V);
        } else {
            pr.a = pack_act_nchwc(D, V);
            pr.b = pack_act_chwnn(dY, V);
        }
        pr.reference_in[0] = std::move(D);
        pr.reference_in[1] = std::move(dY);
        break;
    }
    }
    return pr;
}

} // namespace

verify_result run_verify(const verify_request& req) {
    req.shape.validate();
    prepared_run pr = prepare(req.shape, req.comp, req.sparsity, req.V,
                              req.check, req.seed);
    if (req.corrupt_filter && req.comp != component::bww)
        pr.b.layout = tensor_layout::act_nchwc; // deliberate mismatch

    if (!req.dump_prefix.empty()) {
        save_tensor(req.dump_prefix + "_a.tns", pr.a);
        save_tensor(req.dump_prefix + "_b.tns", pr.b);
    }

    conv_result run = run_parallel(pr.a, pr.b, req.shape, pr.plan, req.mode,
                                   req.workers, req.pref);

    plain_tensor ref;
    const plain_tensor& in0 = pr.reference_in[0];
    const plain_tensor& in1 = pr.reference_in[1];
    switch (req.comp) {
    case component::fwd: ref = dense_fwd(in0, in1, req.shape); break;
    case component::bwi: ref = dense_bwi(in0, in1, req.shape); break;
    case component::bww: ref = dense_bww(in0, in1, req.shape); break;
    }

    verify_result vr;
    vr.backend = run.backend;
    vr.check_used = pr.check_used;
    vr.counters = run.counters;
    const plain_tensor got = unpack(run.out);
    vr.max_rel_err = max_rel_error(got, ref);

    const plain_tensor& mask_src =
        req.comp == component::fwd ? in0
        : req.comp == component::bwi
            ? in0
            : (pr.check_used == bww_check::input ? in0 : in1);
    vr.expected = expected_fma_counts(req.shape, pr.plan, mask_src);
    vr.counters_match =
        req.mode == run_mode::sparse
            ? vr.counters.executed_vector_fmas
                      == vr.expected.executed_vector_fmas
                  && vr.counters.checked_vectors
                         == vr.expected.checked_vectors
            : vr.counters.executed_vector_fmas == vr.expected.dense_total();
    vr.pass = vr.max_rel_err <= req.tolerance && vr.counters_match;

    if (!req.dump_prefix.empty()) {
        save_tensor(req.dump_prefix + "_out.tns", run.out);
        save_tensor(req.dump_prefix + "_ref.tns", ref);
    }
    return vr;
}

std::vector<bench_record> run_sweep(const sweep_request& req) {
    std::vector<bench_record> records;
    std::map<std::pair<int, double>, std::vector<double>> speedups;

    for (const auto& lname : req.layers) {
        const layer_config* lc = find_layer(lname);
        SPCONV_REQUIRE(lc != nullptr, "unknown layer: " + lname);
        const conv_shape sh =
            scaled_shape(lc->shape, req.minibatch, req.scale);
        for (component comp : req.comps) {
            // dense-mode baseline, timed once per (layer, component)
            prepared_run dense_pr =
                prepare(sh, comp, 0.0, req.V, bww_check::input, req.seed);
            conv_result dense_res;
            const double dense_ns = time_median_ns(
                [&] {
                    dense_res =
                        run_parallel(dense_pr.a, dense_pr.b, sh,
                                     dense_pr.plan, run_mode::dense,
                                     req.workers, req.pref);
                },
                req.repeats);
            bench_record base;
            base.layer = lname;
            base.comp = comp;
            base.sparsity = 0.0;
            base.mode = run_mode::dense;
            base.workers = req.workers;
            base.median_ns = dense_ns;
            base.exec_fmas = dense_res.counters.executed_vector_fmas;
            base.speedup_vs_dense = 1.0;
            records.push_back(base);

            for (double s : req.grid) {
                prepared_run pr = prepare(sh, comp, s, req.V,
                                          bww_check::input, req.seed);
                conv_result res;
                const double ns = time_median_ns(
                    [&] {
                        res = run_parallel(pr.a, pr.b, sh, pr.plan,
                                           run_mode::sparse, req.workers,
                                           req.pref);
                    },
                    req.repeats);
                bench_record rec;
                rec.layer = lname;
                rec.comp = comp;
                rec.sparsity = s;
                rec.mode = run_mode::sparse;
                rec.workers = req.workers;
                rec.median_ns = ns;
                rec.exec_fmas = res.counters.executed_vector_fmas;
                rec.speedup_vs_dense = dense_ns / ns;
                records.push_back(rec);
                speedups[{int(comp), s}].push_back(rec.speedup_vs_dense);
            }
        }
    }

    for (const auto& [key, values] : speedups) {
        bench_record summary;
        summary.layer = "geomean";
        summary.comp = component(key.first);
        summary.sparsity = key.second;
        summary.mode = run_mode::sparse;
        summary.workers = req.workers;
        summary.median_ns = 0.0;
        summary.exec_fmas = 0;
        summary.speedup_vs_dense = geo_mean(values);
        records.push_back(summary);
    }
    return records;
}

double geo_mean(const std::vector<double>& xs) {
    SPCONV_REQUIRE(!xs.empty(), "geo_mean of nothing");
    double log_sum = 0.0;
    for (double x : xs) {
        SPCONV_REQUIRE(x > 0.0, "geo_mean needs positive values");
        log_sum += std::log(x);
    }
    return std::exp(log_sum / double(xs.size()));
}

void write_sweep_csv(const std::vector<bench_record>& records,
                     std::ostream& out) {
    out << "layer,component,sparsity,mode,workers,median_ns,exec_fmas,"
           "speedup_vs_dense\n";
    for (const auto& r : records)
        out << r.layer << "," << component_name(r.comp) << "," << r.sparsity
            << "," << (r.mode == run_mode::sparse ? "sparse" : "dense") << ","
            << r.workers << "," << r.median_ns << "," << r.exec_fmas << ","
            << r.speedup_vs_dense << "\n";
}

void write_curves_csv(const std::vector<bench_record>& records,
                      std::ostream& out) {
    // dense baseline per (layer, component)
    std::map<std::pair<std::string, int>, double> dense_ns;
    for (const auto& r : records)
        if (r.mode == run_mode::dense)
            dense_ns[{r.layer, int(r.comp)}] = r.median_ns;
    out << "layer,component,sparsity,median_ns,dense_ns\n";
    for (const auto& r : records) {
        if (r.mode != run_mode::sparse || r.layer == "geomean") continue;
        const auto it = dense_ns.find({r.layer, int(r.comp)});
        SPCONV_REQUIRE(it != dense_ns.end(),
                       "curves: missing dense baseline for " + r.layer);
        out << r.layer << "," << component_name(r.comp) << "," << r.sparsity
            << "," << r.median_ns << "," << it->second << "\n";
    }
}

} // namespace spconv
