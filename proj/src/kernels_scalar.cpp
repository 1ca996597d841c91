#include "kernel_impl.hpp"

namespace spconv {
namespace detail {

void register_scalar_backends(std::vector<kernel_entry>& kernels,
                              std::vector<vec_probe>& probes) {
    kernels.push_back(make_entry<scalar_backend<4>>("scalar4", false));
    kernels.push_back(make_entry<scalar_backend<8>>("scalar8", false));
    kernels.push_back(make_entry<scalar_backend<16>>("scalar16", false));
    probes.push_back(make_probe<scalar_backend<4>>("scalar4", false));
    probes.push_back(make_probe<scalar_backend<8>>("scalar8", false));
    probes.push_back(make_probe<scalar_backend<16>>("scalar16", false));
}

} // namespace detail
} // namespace spconv
