#include "unrollsync/metrics.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace unrollsync {

double err_z2(std::span<const double> z, std::span<const double> zhat) {
    if (z.size() != zhat.size() || z.empty()) throw std::invalid_argument("err_z2: size mismatch");
    return 1.0 - std::abs(dot(z, zhat)) / static_cast<double>(z.size());
}

double err_u1(const ComplexVector& z, const ComplexVector& zhat) {
    if (z.size() != zhat.size() || z.size() == 0) throw std::invalid_argument("err_u1: size mismatch");
    // z^* zhat
    double re = 0.0, im = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
        re += z.re[i] * zhat.re[i] + z.im[i] * zhat.im[i];
        im += z.re[i] * zhat.im[i] - z.im[i] * zhat.re[i];
    }
    return 1.0 - std::hypot(re, im) / static_cast<double>(z.size());
}

namespace {

double cross_gram_sq(const Matrix& r, const Matrix& rhat) {
    if (r.rows() != rhat.rows() || r.cols() != 3 || rhat.cols() != 3 || r.rows() % 3 != 0 || r.rows() == 0)
        throw std::invalid_argument("err_so3: expected matching 3N x 3 stacks");
    double g[9] = {};
    for (std::size_t k = 0; k < r.rows(); ++k)
        for (int a = 0; a < 3; ++a)
            for (int b = 0; b < 3; ++b) g[3 * a + b] += r(k, a) * rhat(k, b);
    double s = 0.0;
    for (double v : g) s += v * v;
    return s;
}

}  // namespace

double err_so3(const Matrix& r, const Matrix& rhat) {
    const double n = static_cast<double>(r.rows() / 3);
    return 1.0 - cross_gram_sq(r, rhat) / (3.0 * n * n);
}

double err_so3_literal(const Matrix& r, const Matrix& rhat) {
    const double n = static_cast<double>(r.rows() / 3);
    return 1.0 - 3.0 / n * cross_gram_sq(r, rhat);
}

double rec_err_z2(std::span<const double> x, std::span<const double> xhat) {
    if (x.size() != xhat.size()) throw std::invalid_argument("rec_err_z2: size mismatch");
    double plus = 0.0, minus = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        plus += (x[i] - xhat[i]) * (x[i] - xhat[i]);
        minus += (x[i] + xhat[i]) * (x[i] + xhat[i]);
    }
    return std::min(plus, minus);
}

double rec_err_zl(const Spectrum& x, const Spectrum& xhat, std::size_t grid_factor) {
    if (x.size() != xhat.size() || x.size() == 0) throw std::invalid_argument("rec_err_zl: size mismatch");
    if (grid_factor == 0) throw std::invalid_argument("rec_err_zl: grid factor must be >= 1");
    const std::size_t len = x.size();
    const std::size_t points = len * grid_factor;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t j = 1; j <= points; ++j) {
        const double phi = 2.0 * std::numbers::pi * static_cast<double>(j) / static_cast<double>(points);
        double s = 0.0;
        for (std::size_t k = 0; k < len; ++k) {
            const double c = std::cos(signed_frequency(k, len) * phi);
            const double sn = std::sin(signed_frequency(k, len) * phi);
            const double rr = x.re[k] - (c * xhat.re[k] - sn * xhat.im[k]);
            const double ri = x.im[k] - (c * xhat.im[k] + sn * xhat.re[k]);
            s += rr * rr + ri * ri;
        }
        best = std::min(best, s);
    }
    return best;
}

MeanStd mean_std(std::span<const double> values) {
    MeanStd m;
    m.count = values.size();
    if (values.empty()) return m;
    double s = 0.0;
    for (double v : values) s += v;
    m.mean = s / static_cast<double>(values.size());
    if (values.size() > 1) {
        double q = 0.0;
        for (double v : values) q += (v - m.mean) * (v - m.mean);
        m.std = std::sqrt(q / static_cast<double>(values.size() - 1));
    }
    return m;
}

}  // namespace unrollsync
