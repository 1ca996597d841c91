#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace spconv {

using u64 = std::uint64_t;

class error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace spconv

// Contract checks on public entry points. Hot loops use plain assert().
#define SPCONV_REQUIRE(cond, msg)                                             \
    do {                                                                      \
        if (!(cond)) throw ::spconv::error(std::string(msg));                 \
    } while (0)
