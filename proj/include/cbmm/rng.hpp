#pragma once

#include <cstdint>
#include <random>

namespace cbmm {

using Rng = std::mt19937_64;

// Uniform draw strictly inside (0,1), built from the top 53 bits of the
// generator output so results do not depend on library distribution code.
inline double uniform01(Rng& rng) {
    return (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;
}

inline std::uint64_t splitmix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Child seed for stream `index` of a master seed. Used wherever repeated
// runs or suite cells need independent reproducible streams.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
    return splitmix64(master ^ splitmix64(index + 0x517cc1b727220a95ULL));
}

}  // namespace cbmm
