#pragma once

// Derives the per-configuration execution plan: the output-channel tile
// Q, the skippable-FMA count T = R*Q/V, whether the row sweep pipelines
// the next output load into a spare accumulator slot, and the parallel
// task decomposition.

#include <array>
#include <cstddef>
#include <string>

#include "spconv/common.hpp"
#include "spconv/tensor.hpp"

namespace spconv {

enum class component { fwd, bwi, bww };
enum class bww_check { input, output_grad };

const char* component_name(component c);

struct kernel_plan {
    component comp = component::fwd;
    bww_check check = bww_check::input; // meaningful for bww only
    int V = 0;
    int Q = 0;          // channel tile (multiple of V, divides the tiled dim)
    int T = 0;          // vector FMAs skippable per detected zero: R*Q/V
    bool pipelined = false;
    int ring_size = 0;  // accumulator vectors live: (R + pipelined)*Q/V
    int M = 1;          // minibatch tile for filter reuse (1 for bww)
    int register_budget = 30;
    int unroll_hint = 0;       // advisory only; kernels may ignore it
    bool prefetch_hints = false; // optional, default off

    // The channel dimension Q tiles: K for fwd and bww(check=input),
    // C for bwi and bww(check=output_grad).
    int tiled_channels(const conv_shape& shape) const;
};

// Chooses the largest feasible (Q, pipelined) pair: maximize ring_size
// under the register budget, prefer larger Q on ties, then prefer not
// pipelining. For R=1 the tile is capped at 128. BWW accumulators stay
// resident for a whole row sweep, so bww plans never pipeline.
kernel_plan plan(const conv_shape& shape, component comp, int V,
                 int register_budget = 30,
                 bww_check check = bww_check::input);

struct task_axis {
    std::string name;
    int count = 1;
};

struct task_decomposition {
    component comp = component::fwd;
    std::array<task_axis, 3> axes; // outermost first
    std::size_t total() const {
        return std::size_t(axes[0].count) * axes[1].count * axes[2].count;
    }
    // task id -> per-axis coordinates, outermost first
    std::array<int, 3> coords(std::size_t id) const;
};

task_decomposition decompose(const conv_shape& shape,
                             const kernel_plan& plan);

// `plan-dump` text block: one key=value per line.
std::string plan_to_text(const conv_shape& shape, const kernel_plan& plan);

} // namespace spconv
