#pragma once

#include <cmath>
#include <cstdint>

namespace fpulab {

// splitmix64 with a Box-Muller normal; keeps data files bit-identical across
// standard libraries, unlike std::normal_distribution.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    double uniform() { // (0,1)
        return (next_u64() >> 11) * 0x1.0p-53 + 0x1.0p-54;
    }

    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u = uniform(), v = uniform();
        double m = std::sqrt(-2.0 * std::log(u));
        spare_ = m * std::sin(6.283185307179586477 * v);
        have_spare_ = true;
        return m * std::cos(6.283185307179586477 * v);
    }

    Rng fork(std::uint64_t salt) { return Rng(next_u64() ^ (salt * 0x9e3779b97f4a7c15ull)); }

  private:
    std::uint64_t state_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

} // namespace fpulab
