#include "spconv/kernels.hpp"

#include <atomic>
#include <thread>

#include "kernel_impl.hpp"

namespace spconv {

namespace detail {
namespace {

struct registry {
    std::vector<kernel_entry> kernels;
    std::vector<vec_probe> probes;
};

const registry& get_registry() {
    static const registry reg = [] {
        registry r;
        register_scalar_backends(r.kernels, r.probes);
#if defined(__x86_64__) || defined(_M_X64)
        register_sse_backends(r.kernels, r.probes);
        register_avx2_backends(r.kernels, r.probes);
        register_avx512_backends(r.kernels, r.probes);
#endif
        return r;
    }();
    return reg;
}

const kernel_entry& find_entry(int V, backend_pref pref) {
    const kernel_entry* scalar = nullptr;
    const kernel_entry* native = nullptr;
    for (const auto& e : get_registry().kernels) {
        if (e.width != V) continue;
        (e.native ? native : scalar) = &e;
    }
    SPCONV_REQUIRE(scalar != nullptr, "no kernel backend for this V");
    switch (pref) {
    case backend_pref::force_scalar: return *scalar;
    case backend_pref::force_native:
        SPCONV_REQUIRE(native != nullptr,
                       "native SIMD backend unavailable for this V on this "
                       "host");
        return *native;
    case backend_pref::automatic: break;
    }
    return native ? *native : *scalar;
}

struct target_table {
    std::vector<int> off, u, col;
};

target_table build_targets(const conv_shape& sh, bool fwd_style) {
    const int cols = fwd_style ? sh.W : sh.out_w();
    target_table t;
    t.off.reserve(cols + 1);
    t.off.push_back(0);
    for (int x = 0; x < cols; ++x) {
        const auto pairs = fwd_style ? affected_outputs(sh, x)
                                     : bwi_affected_outputs(sh, x);
        for (const auto& [fu, oc] : pairs) {
            t.u.push_back(fu);
            t.col.push_back(oc);
        }
        t.off.push_back(int(t.u.size()));
    }
    return t;
}

// Fixed worker pool over an atomic task index. Tasks write disjoint
// output regions; counters are merged in task order, so results and
// counters are identical for any worker count.
kernel_counters run_tasks(const kernel_args& args, task_fn fn,
                          const task_decomposition& dec, int workers) {
    const std::size_t total = dec.total();
    std::vector<kernel_counters> per_task(total);
    auto run_one = [&](std::size_t id) {
        const auto c = dec.coords(id);
        fn(args, c[0], c[1], c[2], per_task[id]);
    };
    if (workers <= 1 || total <= 1) {
        for (std::size_t id = 0; id < total; ++id) run_one(id);
    } else {
        std::atomic<std::size_t> next{0};
        auto worker = [&] {
            for (std::size_t id = next.fetch_add(1); id < total;
                 id = next.fetch_add(1))
                run_one(id);
        };
        const int n = int(std::min<std::size_t>(workers, total));
        std::vector<std::thread> pool;
        pool.reserve(n);
        for (int wi = 0; wi < n; ++wi) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    kernel_counters merged;
    for (const auto& c : per_task) merged += c;
    return merged;
}

void check_common(const conv_shape& sh, const kernel_plan& plan,
                  component comp, int workers) {
    sh.validate();
    SPCONV_REQUIRE(plan.comp == comp, "plan was built for another component");
    SPCONV_REQUIRE(valid_vector_width(plan.V), "plan has an invalid V");
    SPCONV_REQUIRE(workers >= 1, "workers must be >= 1");
    const int tiled = plan.tiled_channels(sh);
    SPCONV_REQUIRE(plan.Q >= plan.V && plan.Q % plan.V == 0
                       && tiled % plan.Q == 0,
                   "plan tile Q does not divide the tiled channel dim");
    const int ring_need = (sh.R + (plan.pipelined ? 1 : 0)) * plan.Q / plan.V;
    SPCONV_REQUIRE(ring_need <= detail::max_ring_vectors,
                   "plan ring size exceeds the kernel accumulator bound");
}

void check_act(const blocked_tensor& t, tensor_layout want, int V, int n,
               int ch, int rows, int cols, const char* what) {
    SPCONV_REQUIRE(t.layout == want, std::string(what) + ": wrong layout");
    SPCONV_REQUIRE(t.V == V, std::string(what) + ": wrong vector width");
    SPCONV_REQUIRE(t.n == n && t.c == ch && t.h == rows && t.w == cols,
                   std::string(what) + ": dims do not match shape");
    const std::size_t expect =
        want == tensor_layout::act_chwnn
            ? std::size_t(t.n_blocks()) * ch * rows * cols * V
            : std::size_t(n) * ch * rows * cols;
    SPCONV_REQUIRE(t.data.size() == expect,
                   std::string(what) + ": data size mismatch");
}

void check_filter(const blocked_tensor& t, int V, int k, int c, int s, int r,
                  const char* what) {
    SPCONV_REQUIRE(t.layout == tensor_layout::filter_kcrs_blk,
                   std::string(what) + ": wrong layout");
    SPCONV_REQUIRE(t.V == V, std::string(what) + ": wrong vector width");
    SPCONV_REQUIRE(t.k == k && t.c == c && t.s == s && t.r == r,
                   std::string(what) + ": dims do not match shape");
    SPCONV_REQUIRE(t.data.size() == std::size_t(k) * c * s * r,
                   std::string(what) + ": data size mismatch");
}

} // namespace
} // namespace detail

bool native_backend_available(int V) {
    for (const auto& e : detail::get_registry().kernels)
        if (e.width == V && e.native) return true;
    return false;
}

std::vector<std::string> backend_names() {
    std::vector<std::string> names;
    for (const auto& e : detail::get_registry().kernels)
        names.push_back(e.name);
    return names;
}

std::vector<vec_probe> vector_probes(int V) {
    std::vector<vec_probe> out;
    for (const auto& p : detail::get_registry().probes)
        if (p.width == V) out.push_back(p);
    return out;
}

conv_result sparse_fwd(const blocked_tensor& src, const blocked_tensor& filt,
                       const conv_shape& sh, const kernel_plan& plan,
                       run_mode mode, int workers, backend_pref pref) {
    detail::check_common(sh, plan, component::fwd, workers);
    const int V = plan.V;
    SPCONV_REQUIRE(sh.C % V == 0 && sh.K % V == 0,
                   "fwd: C and K must be multiples of V");
    detail::check_act(src, tensor_layout::act_nchwc, V, sh.N, sh.C, sh.H,
                      sh.W, "fwd input");
    detail::check_filter(filt, V, sh.K, sh.C, sh.S, sh.R, "fwd filter");

    conv_result res;
    res.out.layout = tensor_layout::act_nchwc;
    res.out.V = V;
    res.out.n = sh.N; res.out.c = sh.K;
    res.out.h = sh.out_h(); res.out.w = sh.out_w();
    res.out.data.assign(std::size_t(sh.N) * sh.K * sh.out_h() * sh.out_w(),
                        0.0f);

    const auto& entry = detail::find_entry(V, pref);
    const detail::target_table tt = detail::build_targets(sh, true);
    detail::kernel_args args;
    args.shape = &sh; args.plan = &plan; args.mode = mode;
    args.src = src.data.data();
    args.other = filt.data.data();
    args.dst = res.out.data.data();
    args.t_off = tt.off.data(); args.t_u = tt.u.data();
    args.t_col = tt.col.data();

    res.counters =
        detail::run_tasks(args, entry.fwd, decompose(sh, plan), workers);
    res.backend = entry.name;
    return res;
}

conv_result sparse_bwi(const blocked_tensor& grad_out,
                       const blocked_tensor& filt_t, const conv_shape& sh,
                       const kernel_plan& plan, run_mode mode, int workers,
                       backend_pref pref) {
    detail::check_common(sh, plan, component::bwi, workers);
    const int V = plan.V;
    SPCONV_REQUIRE(sh.C % V == 0 && sh.K % V == 0,
                   "bwi: C and K must be multiples of V");
    detail::check_act(grad_out, tensor_layout::act_nchwc, V, sh.N, sh.K,
                      sh.out_h(), sh.out_w(), "bwi gradient");
    // transposed filters: out channels along C
    detail::check_filter(filt_t, V, sh.C, sh.K, sh.S, sh.R,
                         "bwi transposed filter");

    conv_result res;
    res.out.layout = tensor_layout::act_nchwc;
    res.out.V = V;
    res.out.n = sh.N; res.out.c = sh.C; res.out.h = sh.H; res.out.w = sh.W;
    res.out.data.assign(std::size_t(sh.N) * sh.C * sh.H * sh.W, 0.0f);

    const auto& entry = detail::find_entry(V, pref);
    const detail::target_table tt = detail::build_targets(sh, false);
    detail::kernel_args args;
    args.shape = &sh; args.plan = &plan; args.mode = mode;
    args.src = grad_out.data.data();
    args.other = filt_t.data.data();
    args.dst = res.out.data.data();
    args.t_off = tt.off.data(); args.t_u = tt.u.data();
    args.t_col = tt.col.data();

    res.counters =
        detail::run_tasks(args, entry.bwi, decompose(sh, plan), workers);
    res.backend = entry.name;
    return res;
}

conv_result sparse_bww(const blocked_tensor& input,
                       const blocked_tensor& grad_out, const conv_shape& sh,
                       const kernel_plan& plan, run_mode mode, int workers,
                       backend_pref pref) {
    detail::check_common(sh, plan, component::bww, workers);
    const int V = plan.V;
    SPCONV_REQUIRE(sh.C % V == 0 && sh.K % V == 0,
                   "bww: C and K must be multiples of V");
    const bool on_input = plan.check == bww_check::input;
    if (on_input) {
        detail::check_act(input, tensor_layout::act_chwnn, V, sh.N, sh.C,
                          sh.H, sh.W, "bww input");
        detail::check_act(grad_out, tensor_layout::act_nchwc, V, sh.N, sh.K,
                          sh.out_h(), sh.out_w(), "bww gradient");
    } else {
        detail::check_act(grad_out, tensor_layout::act_chwnn, V, sh.N, sh.K,
                          sh.out_h(), sh.out_w(), "bww gradient");
        detail::check_act(input, tensor_layout::act_nchwc, V, sh.N, sh.C,
                          sh.H, sh.W, "bww input");
    }

    // The kernel accumulates into a filter-gradient tensor whose vector
    // lanes run along the non-checked side's channels; for check on the
    // output gradient that is the (c, k)-swapped layout, fixed up below.
    blocked_tensor raw;
    raw.layout = tensor_layout::filter_kcrs_blk;
    raw.V = V;
    raw.k = on_input ? sh.K : sh.C;
    raw.c = on_input ? sh.C : sh.K;
    raw.s = sh.S; raw.r = sh.R;
    raw.data.assign(std::size_t(sh.K) * sh.C * sh.S * sh.R, 0.0f);

    const auto& entry = detail::find_entry(V, pref);
    const detail::target_table tt = detail::build_targets(sh, on_input);
    detail::kernel_args args;
    args.shape = &sh; args.plan = &plan; args.mode = mode;
    args.src = on_input ? input.data.data() : grad_out.data.data();
    args.other = on_input ? grad_out.data.data() : input.data.data();
    args.dst = raw.data.data();
    args.t_off = tt.off.data(); args.t_u = tt.u.data();
    args.t_col = tt.col.data();

    conv_result res;
    res.counters =
        detail::run_tasks(args, entry.bww, decompose(sh, plan), workers);
    res.backend = entry.name;

    if (on_input) {
        res.out = std::move(raw);
    } else {
        blocked_tensor dg;
        dg.layout = tensor_layout::filter_kcrs_blk;
        dg.V = V;
        dg.k = sh.K; dg.c = sh.C; dg.s = sh.S; dg.r = sh.R;
        dg.data.assign(raw.data.size(), 0.0f);
        for (int kk = 0; kk < sh.K; ++kk)
            for (int cc = 0; cc < sh.C; ++cc)
                for (int v = 0; v < sh.S; ++v)
                    for (int u = 0; u < sh.R; ++u)
                        dg.data[dg.filter_index(kk, cc, u, v)] =
                            raw.data[raw.filter_index(cc, kk, u, v)];
        res.out = std::move(dg);
    }
    return res;
}

conv_result run_parallel(const blocked_tensor& a, const blocked_tensor& b,
                         const conv_shape& sh, const kernel_plan& plan,
                         run_mode mode, int workers, backend_pref pref) {
    switch (plan.comp) {
    case component::fwd: return sparse_fwd(a, b, sh, plan, mode, workers, pref);
    case component::bwi: return sparse_bwi(a, b, sh, plan, mode, workers, pref);
    case component::bww: return sparse_bww(a, b, sh, plan, mode, workers, pref);
    }
    throw error("run_parallel: bad component");
}

} // namespace spconv
