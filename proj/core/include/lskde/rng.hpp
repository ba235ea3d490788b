#pragma once

#include <cstdint>
#include <array>

namespace lskde {

// Philox4x64-10 counter-based generator. Each (seed, stream) pair is an
// independent substream, so Monte Carlo replications can be assigned
// stream = replication index and drawn in parallel without coordination.
class Philox4x64 {
public:
    using result_type = std::uint64_t;

    Philox4x64(std::uint64_t seed, std::uint64_t stream = 0)
        : key_{seed, stream}, counter_{0, 0, 0, 0}, index_(4) {}

    // Raw block function: ten rounds applied to `counter` under `key`.
    static std::array<std::uint64_t, 4> block(const std::array<std::uint64_t, 2>& key,
                                              const std::array<std::uint64_t, 4>& counter);

    std::uint64_t next_u64() {
        if (index_ == 4) {
            buffer_ = block(key_, counter_);
            advance_counter();
            index_ = 0;
        }
        return buffer_[index_++];
    }

    // Uniform double in [0, 1) with 53 random bits.
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    static constexpr std::uint64_t min() { return 0; }
    static constexpr std::uint64_t max() { return ~static_cast<std::uint64_t>(0); }
    std::uint64_t operator()() { return next_u64(); }

private:
    void advance_counter() {
        for (int i = 0; i < 4; ++i) {
            if (++counter_[i] != 0) break;
        }
    }

    std::array<std::uint64_t, 2> key_;
    std::array<std::uint64_t, 4> counter_;
    std::array<std::uint64_t, 4> buffer_{};
    int index_;
};

} // namespace lskde
