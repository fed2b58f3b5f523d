#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <initializer_list>

namespace topohazard {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Deterministic stream id from a master seed and a path of sub-indices, so
/// replicate k of trial j always sees the same stream regardless of scheduling.
inline std::uint64_t derive_stream(std::uint64_t master,
                                   std::initializer_list<std::uint64_t> path) {
    std::uint64_t h = splitmix64(master);
    for (std::uint64_t id : path) h = splitmix64(h ^ splitmix64(id));
    return h;
}

/// Philox4x32-10 counter-based generator. A stream is (key, counter); blocks
/// are produced on demand, so distinct (seed, stream) pairs give independent
/// sequences and parallel and serial runs agree.
class RngStream {
public:
    RngStream(std::uint64_t seed, std::uint64_t stream) {
        key_[0] = static_cast<std::uint32_t>(seed);
        key_[1] = static_cast<std::uint32_t>(seed >> 32);
        ctr_[0] = static_cast<std::uint32_t>(stream);
        ctr_[1] = static_cast<std::uint32_t>(stream >> 32);
        ctr_[2] = 0;
        ctr_[3] = 0;
    }

    std::uint64_t next_u64() {
        if (idx_ >= 4) refill();
        std::uint64_t lo = block_[idx_++];
        std::uint64_t hi = block_[idx_++];
        return lo | (hi << 32);
    }

    /// Uniform on [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Standard normal via Box-Muller; second value cached.
    double normal() {
        if (have_cached_) {
            have_cached_ = false;
            return cached_;
        }
        double u1 = 1.0 - uniform();  // (0, 1]
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.283185307179586477 * u2;
        cached_ = r * std::sin(a);
        have_cached_ = true;
        return r * std::cos(a);
    }

    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) { return next_u64() % n; }

private:
    static std::uint32_t mulhi(std::uint32_t a, std::uint32_t b, std::uint32_t& lo) {
        std::uint64_t p = static_cast<std::uint64_t>(a) * b;
        lo = static_cast<std::uint32_t>(p);
        return static_cast<std::uint32_t>(p >> 32);
    }

    void refill() {
        std::uint32_t c0 = ctr_[0], c1 = ctr_[1], c2 = ctr_[2], c3 = ctr_[3];
        std::uint32_t k0 = key_[0], k1 = key_[1];
        for (int round = 0; round < 10; ++round) {
            std::uint32_t lo0, lo1;
            std::uint32_t hi0 = mulhi(0xD2511F53u, c0, lo0);
            std::uint32_t hi1 = mulhi(0xCD9E8D57u, c2, lo1);
            std::uint32_t n0 = hi1 ^ c1 ^ k0;
            std::uint32_t n1 = lo1;
            std::uint32_t n2 = hi0 ^ c3 ^ k1;
            std::uint32_t n3 = lo0;
            c0 = n0; c1 = n1; c2 = n2; c3 = n3;
            k0 += 0x9E3779B9u;
            k1 += 0xBB67AE85u;
        }
        block_[0] = c0; block_[1] = c1; block_[2] = c2; block_[3] = c3;
        if (++ctr_[2] == 0) ++ctr_[3];  // 64-bit block counter in words 2..3
        idx_ = 0;
    }

    std::array<std::uint32_t, 2> key_{};
    std::array<std::uint32_t, 4> ctr_{};
    std::array<std::uint32_t, 4> block_{};
    int idx_ = 4;
    bool have_cached_ = false;
    double cached_ = 0.0;
};

}  // namespace topohazard
