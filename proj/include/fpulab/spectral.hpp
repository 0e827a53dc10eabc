#pragma once

#include <complex>
#include <cmath>
#include <functional>
#include <memory>
#include <mutex>
#include <vector>

#include <fftw3.h>

#include "fpulab/errors.hpp"
#include "fpulab/util.hpp"

namespace fpulab {

using cplx = std::complex<double>;

namespace detail {
inline std::mutex& fftw_plan_mutex() {
    static std::mutex m;
    return m;
}
} // namespace detail

// Complex FFT of fixed size backed by FFTW. Plan creation is serialized;
// each instance owns its buffers, so distinct instances may run concurrently.
class Fft {
  public:
    explicit Fft(int n) : n_(n) {
        std::lock_guard<std::mutex> lock(detail::fftw_plan_mutex());
        buf_ = fftw_alloc_complex(n_);
        fwd_ = fftw_plan_dft_1d(n_, buf_, buf_, FFTW_FORWARD, FFTW_ESTIMATE);
        bwd_ = fftw_plan_dft_1d(n_, buf_, buf_, FFTW_BACKWARD, FFTW_ESTIMATE);
    }
    ~Fft() {
        std::lock_guard<std::mutex> lock(detail::fftw_plan_mutex());
        fftw_destroy_plan(fwd_);
        fftw_destroy_plan(bwd_);
        fftw_free(buf_);
    }
    Fft(const Fft&) = delete;
    Fft& operator=(const Fft&) = delete;

    int size() const { return n_; }

    void forward(std::vector<cplx>& a) { run(a, fwd_, 1.0); }
    void inverse(std::vector<cplx>& a) { run(a, bwd_, 1.0 / n_); }

  private:
    void run(std::vector<cplx>& a, fftw_plan plan, double scale) {
        for (int i = 0; i < n_; ++i) {
            buf_[i][0] = a[i].real();
            buf_[i][1] = a[i].imag();
        }
        fftw_execute(plan);
        for (int i = 0; i < n_; ++i) a[i] = scale * cplx(buf_[i][0], buf_[i][1]);
    }

    int n_;
    fftw_complex* buf_;
    fftw_plan fwd_, bwd_;
};

// Fourier collocation grid on [-L/2, L/2) with M points, x_j = -L/2 + j L/M.
class SpectralGrid {
  public:
    SpectralGrid(double L, int M) : L_(L), M_(M), fft_(std::make_shared<Fft>(M)) {
        if (M < 256 || (M & (M - 1)) != 0)
            throw DomainError("SpectralGrid: M must be a power of two >= 256");
        if (L <= 0) throw DomainError("SpectralGrid: L must be positive");
    }

    double L() const { return L_; }
    int M() const { return M_; }
    double dx() const { return L_ / M_; }
    double node(int j) const { return -L_ / 2 + j * L_ / M_; }
    // signed frequency of spectral slot m
    double freq(int m) const {
        int mm = (m <= M_ / 2) ? m : m - M_;
        return 2.0 * M_PI * mm / L_;
    }

    std::vector<cplx> to_spectrum(const std::vector<double>& f) const {
        std::vector<cplx> a(M_);
        for (int j = 0; j < M_; ++j) a[j] = f[j];
        fft_->forward(a);
        return a;
    }
    std::vector<double> from_spectrum(std::vector<cplx> a) const {
        fft_->inverse(a);
        std::vector<double> f(M_);
        for (int j = 0; j < M_; ++j) f[j] = a[j].real();
        return f;
    }

    // pointwise multiply the spectrum by s(xi)
    template <class F>
    std::vector<double> apply_symbol(const std::vector<double>& f, F&& s) const {
        auto a = to_spectrum(f);
        for (int m = 0; m < M_; ++m) a[m] *= s(freq(m));
        return from_spectrum(std::move(a));
    }

    std::vector<double> derivative(const std::vector<double>& f, int order = 1) const {
        auto a = to_spectrum(f);
        for (int m = 0; m < M_; ++m) {
            cplx ik(0.0, freq(m));
            cplx w = std::pow(ik, order);
            if (order % 2 == 1 && m == M_ / 2) w = 0.0; // odd derivative kills Nyquist
            a[m] *= w;
        }
        return from_spectrum(std::move(a));
    }

    // Sobolev norm via Parseval: (sum_m (1+xi^2)^s |c_m|^2 L)^{1/2}
    double sobolev_norm(const std::vector<double>& f, double s) const {
        auto a = to_spectrum(f);
        CompensatedSum acc;
        for (int m = 0; m < M_; ++m) {
            double xi = freq(m);
            double c2 = std::norm(a[m]) / (static_cast<double>(M_) * M_);
            acc.add(std::pow(1.0 + xi * xi, s) * c2);
        }
        return std::sqrt(L_ * acc.value());
    }
    double l2_norm_continuum(const std::vector<double>& f) const { return sobolev_norm(f, 0.0); }

    // enforce evenness about x = 0 (slot pairing j <-> (M-j) mod M)
    void symmetrize_even(std::vector<double>& f) const {
        for (int j = 1; j < M_ - j; ++j) {
            double avg = 0.5 * (f[j] + f[M_ - j]);
            f[j] = avg;
            f[M_ - j] = avg;
        }
    }
    double max_asymmetry(const std::vector<double>& f) const {
        double m = 0.0;
        for (int j = 1; j < M_ - j; ++j) m = std::max(m, std::fabs(f[j] - f[M_ - j]));
        return m;
    }

    // trigonometric interpolation of a real sample set at one point;
    // nodes start at -L/2, hence the (-1)^m phase on each mode.
    double interpolate(const std::vector<cplx>& spectrum, double x) const {
        CompensatedSum re;
        re.add(spectrum[0].real());
        for (int m = 1; m < M_ / 2; ++m) {
            double xi = 2.0 * M_PI * m / L_;
            double sgn = (m % 2 == 0) ? 1.0 : -1.0;
            cplx e(std::cos(xi * x), std::sin(xi * x));
            re.add(2.0 * sgn * (spectrum[m] * e).real());
        }
        double sgn_ny = (M_ / 2 % 2 == 0) ? 1.0 : -1.0;
        re.add(sgn_ny * spectrum[M_ / 2].real() * std::cos(M_PI * M_ * x / L_));
        return re.value() / M_;
    }

  private:
    double L_;
    int M_;
    std::shared_ptr<Fft> fft_;
};

// Dense uniform sample of a spectral field over [-L/2, L/2), with cubic
// 4-point interpolation; returns 0 outside the covered range.
class FineTable {
  public:
    FineTable() = default;
    FineTable(const SpectralGrid& g, const std::vector<cplx>& spectrum, int oversample = 64) {
        L_ = g.L();
        n_ = g.M() * oversample;
        h_ = L_ / n_;
        // zero-pad the spectrum to n_ and inverse transform
        std::vector<cplx> a(n_, cplx(0.0, 0.0));
        int M = g.M();
        for (int m = 0; m <= M / 2; ++m) a[m] = spectrum[m];
        for (int m = M / 2 + 1; m < M; ++m) a[n_ - (M - m)] = spectrum[m];
        // split the Nyquist bin across +/- to keep the interpolant real
        a[M / 2] *= 0.5;
        a[n_ - M / 2] = std::conj(a[M / 2]);
        Fft fft(n_);
        fft.inverse(a);
        v_.resize(n_);
        double scale = static_cast<double>(n_) / M;
        for (int j = 0; j < n_; ++j) v_[j] = scale * a[j].real();
    }

    bool empty() const { return v_.empty(); }

    double operator()(double x) const {
        double t = (x + L_ / 2) / h_;
        long i = static_cast<long>(std::floor(t));
        if (i < 1 || i + 2 >= n_) return 0.0;
        double s = t - i;
        double fm1 = v_[i - 1], f0 = v_[i], f1 = v_[i + 1], f2 = v_[i + 2];
        // 4-point Lagrange
        double a = -s * (s - 1.0) * (s - 2.0) / 6.0;
        double b = (s + 1.0) * (s - 1.0) * (s - 2.0) / 2.0;
        double c = -(s + 1.0) * s * (s - 2.0) / 2.0;
        double d = (s + 1.0) * s * (s - 1.0) / 6.0;
        return a * fm1 + b * f0 + c * f1 + d * f2;
    }

  private:
    double L_ = 0.0, h_ = 1.0;
    long n_ = 0;
    std::vector<double> v_;
};

} // namespace fpulab
