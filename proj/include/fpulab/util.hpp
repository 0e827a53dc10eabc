#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace fpulab {

// Kahan-Neumaier compensated accumulator.
class CompensatedSum {
  public:
    void add(double x) {
        double t = sum_ + x;
        if (std::fabs(sum_) >= std::fabs(x))
            comp_ += (sum_ - t) + x;
        else
            comp_ += (x - t) + sum_;
        sum_ = t;
    }
    double value() const { return sum_ + comp_; }

  private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

// log(cosh(x)) without overflow.
inline double log_cosh(double x) {
    double a = std::fabs(x);
    return a + std::log1p(std::exp(-2.0 * a)) - 0.6931471805599453094;
}

inline double sinc(double x) {
    if (std::fabs(x) < 1e-4) {
        double x2 = x * x;
        return 1.0 - x2 / 6.0 + x2 * x2 / 120.0;
    }
    return std::sin(x) / x;
}

inline double sup_abs(const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::fabs(x));
    return m;
}

inline double l2_norm(const std::vector<double>& v) {
    CompensatedSum s;
    for (double x : v) s.add(x * x);
    return std::sqrt(s.value());
}

// FNV-1a over raw bytes; used for data-file checksums and run ids.
inline std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t h = 1469598103934665603ull) {
    const unsigned char* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 1099511628211ull;
    }
    return h;
}

} // namespace fpulab
