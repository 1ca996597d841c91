#include "spconv/planner.hpp"

#include <sstream>

#include "spconv/vec.hpp"

namespace spconv {

const char* component_name(component c) {
    switch (c) {
    case component::fwd: return "fwd";
    case component::bwi: return "bwi";
    case component::bww: return "bww";
    }
    return "?";
}

int kernel_plan::tiled_channels(const conv_shape& shape) const {
    if (comp == component::bwi) return shape.C;
    if (comp == component::bww && check == bww_check::output_grad)
        return shape.C;
    return shape.K;
}

kernel_plan plan(const conv_shape& shape, component comp, int V,
                 int register_budget, bww_check check) {
    shape.validate();
    SPCONV_REQUIRE(valid_vector_width(V), "plan: V must be 4, 8 or 16");
    SPCONV_REQUIRE(register_budget >= 1, "plan: register budget must be >= 1");

    kernel_plan p;
    p.comp = comp;
    p.check = check;
    p.V = V;
    p.register_budget = register_budget;

    const int channels = p.tiled_channels(shape);
    SPCONV_REQUIRE(channels % V == 0,
                   "plan: tiled channel dimension must be a multiple of V");

    const int R = shape.R;
    const bool allow_pipe = comp != component::bww;

    int best_q = 0, best_ring = 0;
    bool best_pipe = false;
    for (int q = V; q <= channels; q += V) {
        if (channels % q != 0) continue;
        if (R == 1 && q > 128) continue; // a 256-wide tile measured slower
        for (int pipe = 0; pipe <= (allow_pipe ? 1 : 0); ++pipe) {
            const int ring = (R + pipe) * q / V;
            if (ring > register_budget) continue;
            const bool better =
                ring > best_ring
                || (ring == best_ring
                    && (q > best_q || (q == best_q && pipe < best_pipe)));
            if (better) {
                best_q = q;
                best_ring = ring;
                best_pipe = pipe != 0;
            }
        }
    }
    SPCONV_REQUIRE(best_q != 0,
                   "plan: no feasible channel tile fits the register budget");

    p.Q = best_q;
    p.T = R * p.Q / V;
    p.pipelined = best_pipe;
    p.ring_size = best_ring;
    p.M = comp == component::bww ? 1 : 16;
    p.unroll_hint = p.pipelined ? R + 1 : R;
    return p;
}

std::array<int, 3> task_decomposition::coords(std::size_t id) const {
    const int c2 = axes[2].count, c1 = axes[1].count;
    return {int(id / (std::size_t(c1) * c2)), int(id / c2 % c1),
            int(id % c2)};
}

task_decomposition decompose(const conv_shape& shape,
                             const kernel_plan& plan) {
    task_decomposition d;
    d.comp = plan.comp;
    const int m = std::min(plan.M, shape.N);
    const int image_tiles = (shape.N + m - 1) / m;
    switch (plan.comp) {
    case component::fwd:
        d.axes = {task_axis{"image_tiles", image_tiles},
                  task_axis{"output_rows", shape.out_h()},
                  task_axis{"k_tiles", shape.K / plan.Q}};
        break;
    case component::bwi:
        d.axes = {task_axis{"image_tiles", image_tiles},
                  task_axis{"input_rows", shape.H},
                  task_axis{"c_tiles", shape.C / plan.Q}};
        break;
    case component::bww:
        if (plan.check == bww_check::input) {
            d.axes = {task_axis{"filter_rows", shape.S},
                      task_axis{"channels", shape.C},
                      task_axis{"k_tiles", shape.K / plan.Q}};
        } else {
            d.axes = {task_axis{"filter_rows", shape.S},
                      task_axis{"out_channels", shape.K},
                      task_axis{"c_tiles", shape.C / plan.Q}};
        }
        break;
    }
    return d;
}

std::string plan_to_text(const conv_shape& shape, const kernel_plan& plan) {
    const task_decomposition d = decompose(shape, plan);
    std::ostringstream os;
    os << "component=" << component_name(plan.comp) << "\n";
    if (plan.comp == component::bww)
        os << "check_on="
           << (plan.check == bww_check::input ? "input" : "output_grad")
           << "\n";
    os << "V=" << plan.V << "\n"
       << "Q=" << plan.Q << "\n"
       << "T=" << plan.T << "\n"
       << "pipelined=" << (plan.pipelined ? 1 : 0) << "\n"
       << "ring_size=" << plan.ring_size << "\n"
       << "M=" << plan.M << "\n"
       << "register_budget=" << plan.register_budget << "\n"
       << "unroll_hint=" << plan.unroll_hint << "\n";
    os << "tasks=" << d.total();
    for (const auto& ax : d.axes) os << " " << ax.name << "=" << ax.count;
    os << "\n";
    return os.str();
}

} // namespace spconv
