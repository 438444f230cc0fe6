#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "unrollsync/numerics.hpp"

namespace unrollsync {

/// 1 - |z^T zhat| / N. Invariant to a global sign.
double err_z2(std::span<const double> z, std::span<const double> zhat);

/// 1 - |z^* zhat| / N. Invariant to a global phase.
double err_u1(const ComplexVector& z, const ComplexVector& zhat);

/// 1 - ||R^T Rhat||_F^2 / (3 N^2). Zero iff Rhat = R Q for a global rotation Q
/// (given rotation blocks); invariant to right multiplication by any orthogonal Q.
double err_so3(const Matrix& r, const Matrix& rhat);

/// The alignment error with the printed normalization 1 - (3/N) ||R^T Rhat||_F^2.
/// Not zero at perfect recovery; kept for comparison with err_so3.
double err_so3_literal(const Matrix& r, const Matrix& rhat);

/// min over s in {-1, 1} of ||x - s xhat||^2.
double rec_err_z2(std::span<const double> x, std::span<const double> xhat);

/// min over phi in {2 pi j/(L P), j = 1..L P} of sum_k |X[k] - e^{i k phi} Xhat[k]|^2,
/// with k taken as the signed frequency.
double rec_err_zl(const Spectrum& x, const Spectrum& xhat, std::size_t grid_factor = 10);

struct ErrorReport {
    std::string metric;
    double value = 0.0;
    std::size_t n = 0;
    std::size_t length = 0;
    double lambda = 0.0;
    std::uint64_t seed = 0;
};

struct MeanStd {
    double mean = 0.0;
    double std = 0.0;  // sample standard deviation
    std::size_t count = 0;
};

MeanStd mean_std(std::span<const double> values);

}  // namespace unrollsync
