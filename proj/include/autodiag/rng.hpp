#pragma once

#include <cmath>
#include <cstdint>

namespace autodiag {

// splitmix64 generator. The whole project draws randomness through this
// class so that results are bit-identical across platforms and standard
// library versions; std::uniform_*_distribution makes no such guarantee.
class Rng {
public:
    explicit Rng(uint64_t seed) : state_(seed) {}

    uint64_t next_u64() {
        uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1), 53-bit resolution.
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // Uniform in [lo, hi).
    double uniform(double lo, double hi) {
        return lo + (hi - lo) * next_double();
    }

    // Unbiased uniform integer in [0, n). Rejection sampling, so no
    // modulo bias; n == 0 returns 0.
    uint64_t next_below(uint64_t n) {
        if (n < 2) return 0;
        const uint64_t threshold = (0 - n) % n;
        for (;;) {
            uint64_t r = next_u64();
            if (r >= threshold) return r % n;
        }
    }

    // Uniform integer in [lo, hi] inclusive.
    int64_t uniform_int(int64_t lo, int64_t hi) {
        return lo + static_cast<int64_t>(next_below(static_cast<uint64_t>(hi - lo + 1)));
    }

    // Standard normal via Marsaglia polar method (cached spare).
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u, v, s;
        do {
            u = 2.0 * next_double() - 1.0;
            v = 2.0 * next_double() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        const double m = std::sqrt(-2.0 * std::log(s) / s);
        spare_ = v * m;
        has_spare_ = true;
        return u * m;
    }

    // Fisher-Yates shuffle of container supporting size() and operator[].
    template <typename Seq>
    void shuffle(Seq& seq) {
        for (size_t i = seq.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(next_below(i));
            std::swap(seq[i - 1], seq[j]);
        }
    }

    // Derive an independent stream seed from a master seed and an index.
    // Used to make per-tree / per-vehicle work order-independent, so
    // serial and parallel execution produce identical results.
    static uint64_t derive(uint64_t master, uint64_t index) {
        uint64_t z = master + 0x9e3779b97f4a7c15ULL * (index + 1);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        z ^= z >> 31;
        z += 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

private:
    uint64_t state_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace autodiag
