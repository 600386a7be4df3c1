#pragma once

#include <array>
#include <cstdint>

namespace robmix {

// Stream roles keep every consumer of randomness on its own substream, so
// replications are order-independent and parallel-safe.
enum class StreamRole : std::uint32_t {
    DesignX = 1,
    RandomEffect = 2,
    Noise = 3,
    Response = 4,
    Contamination = 5,
    McDraws = 6,
    Probe = 7,
    Test = 15,
};

// Counter-based generator (Philox 4x32-10). The (seed, stream) pair selects
// an independent stream; draws within a stream advance a 64-bit block counter.
class CounterRng {
public:
    CounterRng(std::uint64_t seed, std::uint64_t stream);

    static std::uint64_t substream(std::uint32_t n, std::uint32_t replication, StreamRole role);

    std::uint32_t next_u32();
    std::uint64_t next_u64();

    double next_uniform();     // [0, 1)
    double next_uniform_pos(); // (0, 1]
    double next_gaussian();    // standard normal, Box-Muller
    bool next_bernoulli(double prob);

    // Uniform integer in [0, bound) by rejection (bound > 0).
    std::uint64_t next_below(std::uint64_t bound);

private:
    void refill();

    std::array<std::uint32_t, 2> key_;
    std::uint64_t stream_ = 0;
    std::uint64_t block_index_ = 0;
    std::array<std::uint32_t, 4> block_{};
    int pos_ = 4;
    double cached_gaussian_ = 0.0;
    bool has_cached_gaussian_ = false;
};

}  // namespace robmix
