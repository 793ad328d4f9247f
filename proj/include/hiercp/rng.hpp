#ifndef HIERCP_RNG_HPP
#define HIERCP_RNG_HPP

#include <cstdint>
#include <random>

namespace hiercp {

using Rng = std::mt19937_64;

// SplitMix64 finalizer over (master, stream). Injective in the pre-mix value,
// so distinct streams under one master never collide.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
    std::uint64_t z = master + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

} // namespace hiercp

#endif
