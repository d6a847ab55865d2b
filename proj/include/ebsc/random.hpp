#ifndef EBSC_RANDOM_HPP
#define EBSC_RANDOM_HPP

#include <cstdint>
#include <random>

namespace ebsc {

inline std::uint64_t splitmix64(std::uint64_t x) noexcept
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Independent stream for replication/draw `index` under a master seed.
// Depends only on (seed, index), so the result does not change with thread count.
inline std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t index) noexcept
{
    return splitmix64(splitmix64(seed) ^ splitmix64(index + 0x632be59bd9b4e019ULL));
}

using Engine = std::mt19937_64;

inline Engine make_engine(std::uint64_t seed, std::uint64_t index)
{
    return Engine(stream_seed(seed, index));
}

} // namespace ebsc

#endif
