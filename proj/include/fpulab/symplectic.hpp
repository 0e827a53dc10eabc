#pragma once

#include <vector>

#include "fpulab/lattice.hpp"

namespace fpulab {

// omega_+(x,y) = sum_n [ y1_n sum_{k<=n} x2_k + y2_n sum_{k<=n-1} x1_k ]
// omega_-(x,y) = -sum_n [ y1_n sum_{k>=n+1} x2_k + y2_n sum_{k>=n} x1_k ]
// Both fields must live on the same window; sums are window-truncated.
inline double omega(int alpha, const LatticeField& x, const LatticeField& y) {
    if (x.offset != y.offset || x.size() != y.size())
        throw DomainError("omega: fields must share a window");
    const std::size_t n = x.size();
    CompensatedSum acc;
    if (alpha > 0) {
        double c1 = 0.0, c2 = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double c1_prev = c1;
            c1 += x.r[i];
            c2 += x.p[i];
            acc.add(y.r[i] * c2 + y.p[i] * c1_prev);
        }
    } else {
        double a1 = 0.0, a2 = 0.0;
        for (std::size_t i = n; i-- > 0;) {
            double a2_next = a2;
            a1 += x.r[i];
            a2 += x.p[i];
            acc.add(-(y.r[i] * a2_next + y.p[i] * a1));
        }
    }
    return acc.value();
}

inline double inner(const LatticeField& x, const LatticeField& y) {
    if (x.offset != y.offset || x.size() != y.size())
        throw DomainError("inner: fields must share a window");
    CompensatedSum acc;
    for (std::size_t i = 0; i < x.size(); ++i) acc.add(x.r[i] * y.r[i] + x.p[i] * y.p[i]);
    return acc.value();
}

inline LatticeField axpy(const LatticeField& x, double a, const LatticeField& y) {
    LatticeField out = x;
    for (std::size_t i = 0; i < x.size(); ++i) {
        out.r[i] += a * y.r[i];
        out.p[i] += a * y.p[i];
    }
    return out;
}

} // namespace fpulab
