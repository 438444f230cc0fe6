#include "unrollsync/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace unrollsync {

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
        throw std::invalid_argument("Matrix: data size does not match shape");
    }
}

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

Matrix Matrix::transpose() const {
    Matrix t(cols_, rows_);
    for (std::size_t i = 0; i < rows_; ++i)
        for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
    return t;
}

double Matrix::frobenius_norm() const { return norm2(data_); }

Matrix operator*(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) throw std::invalid_argument("matmul: inner dimensions differ");
    Matrix c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto crow = c.row(i);
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) continue;
            auto brow = b.row(k);
            for (std::size_t j = 0; j < b.cols(); ++j) crow[j] += aik * brow[j];
        }
    }
    return c;
}

Matrix operator+(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) throw std::invalid_argument("add: shape mismatch");
    Matrix c = a;
    for (std::size_t i = 0; i < c.size(); ++i) c.data()[i] += b.data()[i];
    return c;
}

Matrix operator-(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) throw std::invalid_argument("sub: shape mismatch");
    Matrix c = a;
    for (std::size_t i = 0; i < c.size(); ++i) c.data()[i] -= b.data()[i];
    return c;
}

Matrix operator*(double s, const Matrix& a) {
    Matrix c = a;
    for (double& v : c.data()) v *= s;
    return c;
}

std::vector<double> matvec(const Matrix& a, std::span<const double> x) {
    if (a.cols() != x.size()) throw std::invalid_argument("matvec: shape mismatch");
    std::vector<double> y(a.rows(), 0.0);
    for (std::size_t i = 0; i < a.rows(); ++i) y[i] = dot(a.row(i), x);
    return y;
}

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

ComplexVector::ComplexVector(std::vector<double> r, std::vector<double> i) : re(std::move(r)), im(std::move(i)) {
    if (re.size() != im.size()) throw std::invalid_argument("ComplexVector: real/imag size mismatch");
}

double ComplexVector::norm() const { return std::sqrt(dot(re, re) + dot(im, im)); }

ComplexMatrix::ComplexMatrix(Matrix r, Matrix i) : re(std::move(r)), im(std::move(i)) {
    if (re.rows() != im.rows() || re.cols() != im.cols())
        throw std::invalid_argument("ComplexMatrix: real/imag shape mismatch");
}

ComplexVector matvec(const ComplexMatrix& a, const ComplexVector& x) {
    if (a.cols() != x.size()) throw std::invalid_argument("matvec: shape mismatch");
    ComplexVector y(a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto ar = a.re.row(i);
        auto ai = a.im.row(i);
        double sr = 0.0, si = 0.0;
        for (std::size_t j = 0; j < x.size(); ++j) {
            sr += ar[j] * x.re[j] - ai[j] * x.im[j];
            si += ar[j] * x.im[j] + ai[j] * x.re[j];
        }
        y.re[i] = sr;
        y.im[i] = si;
    }
    return y;
}

// ---------------------------------------------------------------------------
// DFT
// ---------------------------------------------------------------------------

namespace {

ComplexVector dft_impl(std::span<const double> re, std::span<const double> im, double sign, double scale) {
    const std::size_t n = re.size();
    if (n == 0) throw std::invalid_argument("dft: empty signal");
    std::vector<double> c(n), s(n);
    for (std::size_t m = 0; m < n; ++m) {
        const double ang = 2.0 * std::numbers::pi * static_cast<double>(m) / static_cast<double>(n);
        c[m] = std::cos(ang);
        s[m] = sign * std::sin(ang);
    }
    ComplexVector out(n);
    for (std::size_t k = 0; k < n; ++k) {
        double sr = 0.0, si = 0.0;
        for (std::size_t t = 0; t < n; ++t) {
            const std::size_t m = (k * t) % n;
            sr += re[t] * c[m] - im[t] * s[m];
            si += re[t] * s[m] + im[t] * c[m];
        }
        out.re[k] = scale * sr;
        out.im[k] = scale * si;
    }
    return out;
}

}  // namespace

Spectrum dft(std::span<const double> signal) {
    const std::vector<double> zeros(signal.size(), 0.0);
    return dft_impl(signal, zeros, -1.0, 1.0);
}

Spectrum dft(const ComplexVector& signal) { return dft_impl(signal.re, signal.im, -1.0, 1.0); }

double signed_frequency(std::size_t k, std::size_t length) {
    return 2 * k <= length ? static_cast<double>(k) : static_cast<double>(k) - static_cast<double>(length);
}

ComplexVector idft(const Spectrum& spectrum) {
    return dft_impl(spectrum.re, spectrum.im, 1.0, 1.0 / static_cast<double>(spectrum.size()));
}

// ---------------------------------------------------------------------------
// 3x3
// ---------------------------------------------------------------------------

Mat3 mat3_identity() { return {1, 0, 0, 0, 1, 0, 0, 0, 1}; }

Mat3 mat3_mul(const Mat3& a, const Mat3& b) {
    Mat3 c{};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            c[3 * i + j] = a[3 * i] * b[j] + a[3 * i + 1] * b[3 + j] + a[3 * i + 2] * b[6 + j];
    return c;
}

Mat3 mat3_transpose(const Mat3& a) { return {a[0], a[3], a[6], a[1], a[4], a[7], a[2], a[5], a[8]}; }

double mat3_det(const Mat3& a) {
    return a[0] * (a[4] * a[8] - a[5] * a[7]) - a[1] * (a[3] * a[8] - a[5] * a[6]) +
           a[2] * (a[3] * a[7] - a[4] * a[6]);
}

double mat3_frobenius(const Mat3& a) {
    double s = 0.0;
    for (double v : a) s += v * v;
    return std::sqrt(s);
}

namespace {

using Vec3 = std::array<double, 3>;

double dot3(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }

Vec3 cross3(const Vec3& a, const Vec3& b) {
    return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}

Vec3 normalized(Vec3 v) {
    const double n = std::sqrt(dot3(v, v));
    for (double& x : v) x /= n;
    return v;
}

// Unit vector orthogonal to u (u unit).
Vec3 any_orthogonal(const Vec3& u) {
    const int k = std::abs(u[0]) <= std::abs(u[1]) ? (std::abs(u[0]) <= std::abs(u[2]) ? 0 : 2)
                                                    : (std::abs(u[1]) <= std::abs(u[2]) ? 1 : 2);
    Vec3 e{0, 0, 0};
    e[k] = 1.0;
    return normalized(cross3(u, e));
}

}  // namespace

Svd3 svd3(const Mat3& a) {
    // Columns of B = A V, rotated until mutually orthogonal.
    std::array<Vec3, 3> b{};
    std::array<Vec3, 3> v{};
    for (int j = 0; j < 3; ++j) {
        for (int i = 0; i < 3; ++i) b[j][i] = a[3 * i + j];
        v[j] = {0, 0, 0};
        v[j][j] = 1.0;
    }
    constexpr double kTol = 1e-16;
    for (int sweep = 0; sweep < 64; ++sweep) {
        bool rotated = false;
        for (int p = 0; p < 2; ++p) {
            for (int q = p + 1; q < 3; ++q) {
                const double alpha = dot3(b[p], b[p]);
                const double beta = dot3(b[q], b[q]);
                const double gamma = dot3(b[p], b[q]);
                if (std::abs(gamma) <= kTol * std::sqrt(alpha * beta) || gamma == 0.0) continue;
                rotated = true;
                const double zeta = (beta - alpha) / (2.0 * gamma);
                const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                for (int i = 0; i < 3; ++i) {
                    const double bp = b[p][i], bq = b[q][i];
                    b[p][i] = c * bp - s * bq;
                    b[q][i] = s * bp + c * bq;
                    const double vp = v[p][i], vq = v[q][i];
                    v[p][i] = c * vp - s * vq;
                    v[q][i] = s * vp + c * vq;
                }
            }
        }
        if (!rotated) break;
    }

    std::array<int, 3> order{0, 1, 2};
    std::array<double, 3> norms{};
    for (int j = 0; j < 3; ++j) norms[j] = std::sqrt(dot3(b[j], b[j]));
    std::sort(order.begin(), order.end(), [&](int x, int y) { return norms[x] > norms[y]; });

    Svd3 out{};
    std::array<Vec3, 3> u{};
    std::array<Vec3, 3> vs{};
    for (int j = 0; j < 3; ++j) vs[j] = v[order[j]];
    const Vec3& b0 = b[order[0]];
    const Vec3& b1 = b[order[1]];
    const Vec3& b2 = b[order[2]];
    const double s0 = norms[order[0]];

    if (s0 == 0.0) {
        out.u = mat3_identity();
        out.v = mat3_identity();
        out.sigma = {0, 0, 0};
        return out;
    }
    u[0] = {b0[0] / s0, b0[1] / s0, b0[2] / s0};
    out.sigma[0] = s0;

    Vec3 r1 = b1;
    const double proj = dot3(r1, u[0]);
    for (int i = 0; i < 3; ++i) r1[i] -= proj * u[0][i];
    const double s1 = std::sqrt(dot3(r1, r1));
    if (s1 > 1e-300 && s1 > 1e-15 * s0) {
        u[1] = normalized(r1);
        out.sigma[1] = dot3(b1, u[1]);
    } else {
        u[1] = any_orthogonal(u[0]);
        out.sigma[1] = std::abs(dot3(b1, u[1]));
        if (dot3(b1, u[1]) < 0) {
            for (double& x : u[1]) x = -x;
        }
    }
    u[2] = cross3(u[0], u[1]);
    double s2 = dot3(b2, u[2]);
    if (s2 < 0.0) {
        for (double& x : u[2]) x = -x;
        s2 = -s2;
    }
    out.sigma[2] = s2;

    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) {
            out.u[3 * i + j] = u[j][i];
            out.v[3 * i + j] = vs[j][i];
        }
    }
    return out;
}

Mat3 project_o3(const Mat3& a) {
    const Svd3 s = svd3(a);
    return mat3_mul(s.u, mat3_transpose(s.v));
}

Mat3 project_so3(const Mat3& a) {
    Svd3 s = svd3(a);
    Mat3 q = mat3_mul(s.u, mat3_transpose(s.v));
    if (mat3_det(q) < 0.0) {
        for (int i = 0; i < 3; ++i) s.u[3 * i + 2] = -s.u[3 * i + 2];
        q = mat3_mul(s.u, mat3_transpose(s.v));
    }
    return q;
}

Mat3 get_block(const Matrix& stack, std::size_t i) {
    Mat3 m{};
    for (std::size_t r = 0; r < 3; ++r)
        for (std::size_t c = 0; c < 3; ++c) m[3 * r + c] = stack(3 * i + r, c);
    return m;
}

void set_block(Matrix& stack, std::size_t i, const Mat3& block) {
    for (std::size_t r = 0; r < 3; ++r)
        for (std::size_t c = 0; c < 3; ++c) stack(3 * i + r, c) = block[3 * r + c];
}

// ---------------------------------------------------------------------------
// Eigenvectors
// ---------------------------------------------------------------------------

void orthonormalize_columns(Matrix& q) {
    const std::size_t n = q.rows();
    const std::size_t k = q.cols();
    auto project_out = [&](std::size_t j) {
        for (std::size_t p = 0; p < j; ++p) {
            double d = 0.0;
            for (std::size_t i = 0; i < n; ++i) d += q(i, p) * q(i, j);
            for (std::size_t i = 0; i < n; ++i) q(i, j) -= d * q(i, p);
        }
        double nn = 0.0;
        for (std::size_t i = 0; i < n; ++i) nn += q(i, j) * q(i, j);
        return std::sqrt(nn);
    };
    for (std::size_t j = 0; j < k; ++j) {
        double before = 0.0;
        for (std::size_t i = 0; i < n; ++i) before += q(i, j) * q(i, j);
        before = std::sqrt(before);
        project_out(j);
        double nn = project_out(j);
        if (!(nn > 1e-10 * before) || before == 0.0) {
            // Collapsed column: substitute the basis vector with the largest residual.
            std::vector<double> best;
            double best_norm = -1.0;
            for (std::size_t e = 0; e < n; ++e) {
                for (std::size_t i = 0; i < n; ++i) q(i, j) = (i == e) ? 1.0 : 0.0;
                project_out(j);
                const double r = project_out(j);
                if (r > best_norm) {
                    best_norm = r;
                    best.assign(n, 0.0);
                    for (std::size_t i = 0; i < n; ++i) best[i] = q(i, j);
                }
            }
            for (std::size_t i = 0; i < n; ++i) q(i, j) = best[i];
            nn = best_norm;
        }
        for (std::size_t i = 0; i < n; ++i) q(i, j) /= nn;
    }
}

void symmetric_eigen_jacobi(const Matrix& a_in, std::vector<double>& values, Matrix& vectors) {
    const std::size_t n = a_in.rows();
    Matrix a = a_in;
    vectors = Matrix::identity(n);
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) off += a(i, j) * a(i, j);
        if (off < 1e-300) break;
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                if (std::abs(apq) < 1e-300) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
                const double t = std::copysign(1.0, theta) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a(k, p), akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a(p, k), aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double vkp = vectors(k, p), vkq = vectors(k, q);
                    vectors(k, p) = c * vkp - s * vkq;
                    vectors(k, q) = s * vkp + c * vkq;
                }
            }
        }
    }
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t x, std::size_t y) { return a(x, x) < a(y, y); });
    values.resize(n);
    Matrix sorted(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        values[j] = a(idx[j], idx[j]);
        for (std::size_t i = 0; i < n; ++i) sorted(i, j) = vectors(i, idx[j]);
    }
    vectors = std::move(sorted);
}

Matrix leading_eigvecs(const Matrix& h, std::size_t k, std::size_t iters, EigenOrder order) {
    const std::size_t n = h.rows();
    if (h.cols() != n) throw std::invalid_argument("leading_eigvecs: matrix must be square");
    if (k == 0 || k > n) throw std::invalid_argument("leading_eigvecs: need 1 <= k <= n");
    const std::size_t p = std::min(n, k + std::max<std::size_t>(k, 4));

    double shift = 0.0;
    if (order == EigenOrder::Algebraic) {
        // Gershgorin lower bound; H + shift*I is positive semidefinite.
        double lower = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double radius = 0.0;
            for (std::size_t j = 0; j < n; ++j)
                if (j != i) radius += std::abs(h(i, j));
            lower = std::min(lower, h(i, i) - radius);
        }
        shift = -lower;
    }

    // Deterministic start block.
    Matrix q(n, p);
    std::uint64_t state = 0x2545F4914F6CDD1DULL;
    for (double& x : q.data()) {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        x = static_cast<double>(state >> 11) * 0x1.0p-53 - 0.5;
    }
    orthonormalize_columns(q);

    // Rayleigh-Ritz on span(q); hq = h * q.
    auto ritz = [&](const Matrix& hq, std::vector<double>& theta) {
        const Matrix t = q.transpose() * hq;
        Matrix tsym(p, p);
        for (std::size_t i = 0; i < p; ++i)
            for (std::size_t j = 0; j < p; ++j) tsym(i, j) = 0.5 * (t(i, j) + t(j, i));
        std::vector<double> vals;
        Matrix vecs;
        symmetric_eigen_jacobi(tsym, vals, vecs);
        std::vector<std::size_t> idx(p);
        std::iota(idx.begin(), idx.end(), 0);
        if (order == EigenOrder::Algebraic) {
            std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return vals[a] > vals[b]; });
        } else {
            std::stable_sort(idx.begin(), idx.end(),
                             [&](std::size_t a, std::size_t b) { return std::abs(vals[a]) > std::abs(vals[b]); });
        }
        Matrix y(p, k);
        theta.assign(k, 0.0);
        for (std::size_t j = 0; j < k; ++j) {
            theta[j] = vals[idx[j]];
            for (std::size_t i = 0; i < p; ++i) y(i, j) = vecs(i, idx[j]);
        }
        return y;
    };

    // Stops early once every wanted Ritz pair has residual ||H v - theta v|| below
    // 1e-12 ||H||_F (checked every 8 iterations); `iters` is the cap.
    const double tol = 1e-12 * h.frobenius_norm();
    std::vector<double> theta;
    for (std::size_t it = 0; it < iters; ++it) {
        Matrix hq = h * q;
        if (it % 8 == 7) {
            const Matrix y = ritz(hq, theta);
            const Matrix v = q * y, hv = hq * y;
            double worst = 0.0;
            for (std::size_t j = 0; j < k; ++j) {
                double r2 = 0.0;
                for (std::size_t i = 0; i < n; ++i) {
                    const double d = hv(i, j) - theta[j] * v(i, j);
                    r2 += d * d;
                }
                worst = std::max(worst, std::sqrt(r2));
            }
            if (worst <= tol) return v;
        }
        if (shift != 0.0) {
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < p; ++j) hq(i, j) += shift * q(i, j);
        }
        orthonormalize_columns(hq);
        q = std::move(hq);
    }
    return q * ritz(h * q, theta);
}

}  // namespace unrollsync
