#pragma once

// Ground truth for the sparse kernels: naive dense convolution for all
// three training components with 64-bit accumulation, a finite-difference
// gradient checker, and a loop-structure simulation that predicts the
// exact vector-FMA counts an instrumented kernel must report.

#include <vector>

#include "spconv/planner.hpp"
#include "spconv/tensor.hpp"

namespace spconv {

// Y[i,k,x',y'] = sum_{c,u,v} D[i,c,x'O+u-padW, y'P+v-padH] * G[k,c,u,v];
// out-of-range D indices contribute zero.
plain_tensor dense_fwd(const plain_tensor& D, const plain_tensor& G,
                       const conv_shape& shape);
// dD[i,c,x,y] = sum over (k,u,v,x',y') with x = x'O+u-padW, y = y'P+v-padH
plain_tensor dense_bwi(const plain_tensor& dY, const plain_tensor& G,
                       const conv_shape& shape);
// dG[k,c,u,v] = sum_{i,x',y'} D[i,c,x'O+u-padW, y'P+v-padH] * dY[i,k,x',y']
plain_tensor dense_bww(const plain_tensor& D, const plain_tensor& dY,
                       const conv_shape& shape);

struct fma_count_report {
    u64 checked_vectors = 0;      // zero-check operations issued
    u64 nonzero_elements = 0;     // mask bits set across all checks
    u64 executed_vector_fmas = 0; // broadcast-FMA calls the kernel must make
    u64 skipped_vector_fmas = 0;  // avoided relative to dense mode

    u64 dense_total() const {
        return executed_vector_fmas + skipped_vector_fmas;
    }
};

// Predicts the counters by walking the sparse kernel's loop structure
// over the zeros of mask_source (D for fwd and bww/check=input, the
// output gradient for bwi and bww/check=output_grad). Never runs a
// kernel; boundary clipping falls out of the simulation.
fma_count_report expected_fma_counts(const conv_shape& shape,
                                     const kernel_plan& plan,
                                     const plain_tensor& mask_source);

enum class fd_loss {
    half_sq_norm, // L = 0.5*||Y||^2; gradient exactly linear in Y
    exp_sum       // L = sum exp(Y); genuinely nonlinear, for convergence
};

// Central-difference check of dense_bwi (component::bwi, perturbs D) or
// dense_bww (component::bww, perturbs G) on a tiny shape. Runs entirely
// in 64-bit floats. Returns the max relative error.
double finite_diff_check(component comp, const conv_shape& shape,
                         double epsilon, fd_loss loss = fd_loss::half_sq_norm,
                         u64 seed = 1);

// 64-bit inner product, used by the adjointness tests.
double dot(const plain_tensor& a, const plain_tensor& b);

// Max over elements of |a-b| / (|ref|+1e-6) with b as ref.
double max_rel_error(const plain_tensor& a, const plain_tensor& ref);

} // namespace spconv
