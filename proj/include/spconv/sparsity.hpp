#pragma once

// Sparsity generation and measurement: synthetic Bernoulli-zero tensors,
// ReLU and its derivative mask, and per-layer training sparsity profiles.

#include <string>
#include <vector>

#include "spconv/common.hpp"
#include "spconv/tensor.hpp"

namespace spconv {

plain_tensor relu(const plain_tensor& t);

// upstream where pre_activation > 0, else 0 (derivative at 0 is 0).
plain_tensor relu_grad_mask(const plain_tensor& pre_activation,
                            const plain_tensor& upstream);

// Each element is zero with probability s, otherwise uniform in
// [0.1, 1.0] so non-zeros stay away from underflow and accumulations
// stay well-conditioned. Deterministic per seed.
plain_tensor gen_sparse(int n, int c, int h, int w, double sparsity,
                        u64 seed);

// Standard-normal values passed through ReLU; the realistic generator
// (about half the elements become zero).
plain_tensor gen_gaussian_relu(int n, int c, int h, int w, u64 seed);

// Fraction of exact zeros.
double measure_sparsity(const plain_tensor& t);

enum class sparsity_source { activation, output_grad };

struct profile_entry {
    std::string layer;
    int epoch = 0;
    sparsity_source source = sparsity_source::activation;
    double sparsity = 0.0;
};

// Per-layer, per-epoch measured sparsity over a training run.
struct sparsity_profile {
    std::string network;
    std::vector<profile_entry> entries;

    const profile_entry* find(const std::string& layer, int epoch,
                              sparsity_source source) const;
    int max_epoch() const; // -1 when empty
};

// CSV format: header `network,layer,epoch,source,sparsity`, then one row
// per entry; source is `activation` or `output_grad`; UTF-8, LF endings.
// Throws with the offending line number on malformed rows, out-of-range
// sparsity or duplicate (layer, epoch, source) keys.
sparsity_profile load_profile(const std::string& path);
void save_profile(const sparsity_profile& p, const std::string& path);

} // namespace spconv
