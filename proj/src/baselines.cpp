#include "unrollsync/baselines.hpp"

#include <cmath>
#include <string>

namespace unrollsync {

InitState make_init(Group group, std::size_t n, Rng& rng) {
    InitState s;
    s.group = group;
    switch (group) {
        case Group::Z2:
            s.z0.resize(n);
            s.zm1.resize(n);
            for (auto& v : s.z0) v = 0.1 * rng.normal();
            for (auto& v : s.zm1) v = 0.1 * rng.normal();
            break;
        case Group::U1: {
            // CN(0, 2e-4): each part has variance 1e-4.
            s.c0 = ComplexVector(n);
            s.cm1 = ComplexVector(n);
            for (std::size_t i = 0; i < n; ++i) {
                s.c0.re[i] = 0.01 * rng.normal();
                s.c0.im[i] = 0.01 * rng.normal();
            }
            for (std::size_t i = 0; i < n; ++i) {
                s.cm1.re[i] = 0.01 * rng.normal();
                s.cm1.im[i] = 0.01 * rng.normal();
            }
            break;
        }
        case Group::SO3:
            s.r0 = Matrix(3 * n, 3);
            s.rm1 = Matrix(3 * n, 3);
            for (std::size_t i = 0; i < n; ++i) set_block(s.r0, i, random_rotation(rng));
            for (std::size_t i = 0; i < n; ++i) set_block(s.rm1, i, random_rotation(rng));
            break;
    }
    return s;
}

std::vector<double> sign_projection(std::span<const double> v) {
    std::vector<double> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] < 0.0 ? -1.0 : 1.0;
    return out;
}

ComplexVector phase_projection(const ComplexVector& v) {
    ComplexVector out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        const double m = std::hypot(v.re[i], v.im[i]);
        if (!(m >= 1e-300)) {
            throw SolverError(SolverError::Kind::DegeneratePhase,
                              "phase projection of a zero entry at index " + std::to_string(i));
        }
        out.re[i] = v.re[i] / m;
        out.im[i] = v.im[i] / m;
    }
    return out;
}

Matrix block_project_so3(const Matrix& stack) {
    Matrix out(stack.rows(), 3);
    for (std::size_t i = 0; i < stack.rows() / 3; ++i) set_block(out, i, project_so3(get_block(stack, i)));
    return out;
}

namespace {

void check_square(const Matrix& h, std::size_t n) {
    if (h.rows() != h.cols() || h.rows() != n) throw std::invalid_argument("measurement matrix shape mismatch");
}

void check_finite(std::span<const double> v, const char* who) {
    for (double x : v)
        if (!std::isfinite(x)) throw SolverError(SolverError::Kind::Divergence, std::string(who) + ": non-finite iterate");
}

}  // namespace

// ---------------------------------------------------------------------------
// Z/2
// ---------------------------------------------------------------------------

SignTrace pm_z2(const Matrix& h, std::size_t iterations, const InitState& init, bool keep_iterates) {
    check_square(h, init.z0.size());
    SignTrace trace;
    std::vector<double> z = init.z0;
    for (std::size_t t = 0; t < iterations; ++t) {
        std::vector<double> hz = matvec(h, z);
        const double nrm = norm2(hz);
        if (nrm == 0.0) throw SolverError(SolverError::Kind::DegenerateIterate, "pm: ||Hz|| = 0");
        for (double& v : hz) v /= nrm;
        z = std::move(hz);
        if (keep_iterates) trace.iterates.push_back(z);
    }
    trace.iterations = iterations;
    trace.estimate = sign_projection(z);
    return trace;
}

SignTrace ppm_z2(const Matrix& h, std::size_t iterations, const InitState& init, bool keep_iterates) {
    check_square(h, init.z0.size());
    SignTrace trace;
    std::vector<double> z = init.z0;
    for (std::size_t t = 0; t < iterations; ++t) {
        z = sign_projection(matvec(h, z));
        if (keep_iterates) trace.iterates.push_back(z);
    }
    trace.iterations = iterations;
    trace.estimate = sign_projection(z);
    return trace;
}

SignTrace amp_z2(const Matrix& h, double lambda, std::size_t iterations, const InitState& init, bool keep_iterates) {
    if (!(lambda > 0.0)) throw std::invalid_argument("amp_z2: lambda must be > 0");
    check_square(h, init.z0.size());
    const std::size_t n = init.z0.size();
    SignTrace trace;
    std::vector<double> z = init.z0;
    std::vector<double> zprev = init.zm1;
    for (std::size_t t = 0; t < iterations; ++t) {
        double second_moment = 0.0;
        for (double v : z) second_moment += v * v;
        second_moment /= static_cast<double>(n);
        const double onsager = lambda * lambda * (1.0 - second_moment);
        std::vector<double> c = matvec(h, z);
        for (std::size_t i = 0; i < n; ++i) c[i] = std::tanh(lambda * c[i] - onsager * zprev[i]);
        check_finite(c, "amp_z2");
        zprev = std::move(z);
        z = std::move(c);
        if (keep_iterates) trace.iterates.push_back(z);
    }
    trace.iterations = iterations;
    trace.estimate = sign_projection(z);
    return trace;
}

// ---------------------------------------------------------------------------
// U(1)
// ---------------------------------------------------------------------------

namespace {

void check_square(const ComplexMatrix& h, std::size_t n) {
    if (h.rows() != h.cols() || h.rows() != n) throw std::invalid_argument("measurement matrix shape mismatch");
}

}  // namespace

PhaseTrace pm_u1(const ComplexMatrix& h, std::size_t iterations, const InitState& init, bool keep_iterates) {
    check_square(h, init.c0.size());
    PhaseTrace trace;
    ComplexVector z = init.c0;
    for (std::size_t t = 0; t < iterations; ++t) {
        ComplexVector hz = matvec(h, z);
        const double nrm = hz.norm();
        if (nrm == 0.0) throw SolverError(SolverError::Kind::DegenerateIterate, "pm: ||Hz|| = 0");
        for (std::size_t i = 0; i < hz.size(); ++i) {
            hz.re[i] /= nrm;
            hz.im[i] /= nrm;
        }
        z = std::move(hz);
        if (keep_iterates) trace.iterates.push_back(z);
    }
    trace.iterations = iterations;
    trace.estimate = phase_projection(z);
    return trace;
}

PhaseTrace ppm_u1(const ComplexMatrix& h, std::size_t iterations, const InitState& init, bool keep_iterates) {
    check_square(h, init.c0.size());
    PhaseTrace trace;
    ComplexVector z = init.c0;
    for (std::size_t t = 0; t < iterations; ++t) {
        z = phase_projection(matvec(h, z));
        if (keep_iterates) trace.iterates.push_back(z);
    }
    trace.iterations = iterations;
    trace.estimate = phase_projection(z);
    return trace;
}

PhaseTrace amp_u1(const ComplexMatrix& h, double lambda, std::size_t iterations, const InitState& init,
                  bool keep_iterates) {
    if (!(lambda > 0.0)) throw std::invalid_argument("amp_u1: lambda must be > 0");
    check_square(h, init.c0.size());
    const std::size_t n = init.c0.size();
    PhaseTrace trace;
    ComplexVector z = init.c0;
    ComplexVector zprev = init.cm1;
    for (std::size_t t = 0; t < iterations; ++t) {
        double second_moment = 0.0;
        for (std::size_t i = 0; i < n; ++i) second_moment += z.re[i] * z.re[i] + z.im[i] * z.im[i];
        second_moment /= static_cast<double>(n);
        const double onsager = lambda * lambda * (1.0 - second_moment);
        ComplexVector c = matvec(h, z);
        ComplexVector next(n);
        for (std::size_t i = 0; i < n; ++i) {
            const double cr = lambda * c.re[i] - onsager * zprev.re[i];
            const double ci = lambda * c.im[i] - onsager * zprev.im[i];
            const double m = std::hypot(cr, ci);
            if (!std::isfinite(m)) throw SolverError(SolverError::Kind::Divergence, "amp_u1: non-finite iterate");
            if (m < 1e-300) continue;  // f(0) = 0
            const double f = bessel_ratio(m);
            next.re[i] = f * cr / m;
            next.im[i] = f * ci / m;
        }
        zprev = std::move(z);
        z = std::move(next);
        if (keep_iterates) trace.iterates.push_back(z);
    }
    trace.iterations = iterations;
    trace.estimate = phase_projection(z);
    return trace;
}

double bessel_ratio(double t) {
    if (t < 0.0 || std::isnan(t)) throw std::domain_error("bessel_ratio: t must be >= 0");
    if (t == 0.0) return 0.0;
    if (std::isinf(t)) return 1.0;
    const double x = 2.0 * t;
    if (x > 1000.0) {
        // Hankel asymptotic series of I0 and I1; the e^x/sqrt(2 pi x) prefactor cancels.
        double p0 = 1.0, p1 = 1.0, term0 = 1.0, term1 = 1.0;
        for (int k = 1; k <= 10; ++k) {
            const double odd = (2.0 * k - 1.0) * (2.0 * k - 1.0);
            term0 *= -(0.0 - odd) / (k * 8.0 * x);
            term1 *= -(4.0 - odd) / (k * 8.0 * x);
            p0 += term0;
            p1 += term1;
        }
        return p1 / p0;
    }
    // I1/I0 = 1/(2/x + 1/(4/x + 1/(6/x + ...))), modified Lentz.
    constexpr double kTiny = 1e-300;
    double f = 2.0 / x;
    double c = f;
    double d = 0.0;
    for (int j = 2; j < 200000; ++j) {
        const double b = 2.0 * j / x;
        d = b + d;
        if (std::abs(d) < kTiny) d = kTiny;
        c = b + 1.0 / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        const double delta = c * d;
        f *= delta;
        if (std::abs(delta - 1.0) <= 1e-16) break;
    }
    return 1.0 / f;
}

// ---------------------------------------------------------------------------
// SO(3)
// ---------------------------------------------------------------------------

Matrix spectral_so3(const Matrix& h, const SpectralOptions& opts) {
    if (h.rows() != h.cols() || h.rows() % 3 != 0 || h.rows() == 0)
        throw std::invalid_argument("spectral_so3: H must be 3N x 3N");
    const std::size_t n = h.rows() / 3;
    Matrix v = leading_eigvecs(h, 3, opts.iterations, opts.order);
    const double scale = std::sqrt(static_cast<double>(n));
    for (double& x : v.data()) x *= scale;
    // The eigenbasis is R Q with Q in O(3); make det(Q) = +1 by majority vote.
    double det_sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) det_sum += mat3_det(get_block(v, i));
    if (det_sum < 0.0)
        for (std::size_t r = 0; r < 3 * n; ++r) v(r, 2) = -v(r, 2);
    Matrix out(3 * n, 3);
    for (std::size_t i = 0; i < n; ++i) {
        const Mat3 b = get_block(v, i);
        set_block(out, i, opts.projection == BlockProjection::Rotation ? project_so3(b) : project_o3(b));
    }
    return out;
}

RotationTrace ppm_so3(const Matrix& h, std::size_t iterations, const InitState& init, bool keep_iterates) {
    if (init.r0.cols() != 3 || h.rows() != h.cols() || h.rows() != init.r0.rows())
        throw std::invalid_argument("ppm_so3: shape mismatch");
    const std::size_t n = init.r0.rows() / 3;
    RotationTrace trace;
    Matrix r = init.r0;
    for (std::size_t t = 0; t < iterations; ++t) {
        const Matrix hr = h * r;
        for (std::size_t i = 0; i < n; ++i) {
            const Mat3 b = get_block(hr, i);
            const Svd3 s = svd3(b);
            if (!std::isfinite(s.sigma[0])) throw SolverError(SolverError::Kind::Divergence, "ppm_so3: non-finite block");
            if (s.sigma[1] <= 1e-14 * s.sigma[0] || s.sigma[0] == 0.0)
                throw SolverError(SolverError::Kind::DegenerateBlock,
                                  "ppm_so3: rank-deficient block " + std::to_string(i));
            Mat3 u = s.u;
            Mat3 q = mat3_mul(u, mat3_transpose(s.v));
            if (mat3_det(q) < 0.0) {
                for (int k = 0; k < 3; ++k) u[3 * k + 2] = -u[3 * k + 2];
                q = mat3_mul(u, mat3_transpose(s.v));
            }
            set_block(r, i, q);
        }
        if (keep_iterates) trace.iterates.push_back(r);
    }
    trace.iterations = iterations;
    trace.estimate = r;
    return trace;
}

}  // namespace unrollsync
