#pragma once

#include <cstddef>
#include <vector>

#include "unrollsync/errors.hpp"
#include "unrollsync/numerics.hpp"
#include "unrollsync/rng.hpp"
#include "unrollsync/synthetic.hpp"

namespace unrollsync {

/// Starting iterates z^(0), z^(-1) (or R^(0), R^(-1)).
///  Z2:  i.i.d. N(0, 1e-2)
///  U1:  i.i.d. CN(0, 2e-4)
///  SO3: projected standard Gaussian 3x3 blocks
struct InitState {
    Group group = Group::Z2;
    std::vector<double> z0, zm1;
    ComplexVector c0, cm1;
    Matrix r0, rm1;
};

InitState make_init(Group group, std::size_t n, Rng& rng);

template <class Estimate>
struct SolverTrace {
    std::vector<Estimate> iterates;  // filled only when requested
    Estimate estimate;               // after the terminal projection
    std::size_t iterations = 0;
};

using SignTrace = SolverTrace<std::vector<double>>;
using PhaseTrace = SolverTrace<ComplexVector>;
using RotationTrace = SolverTrace<Matrix>;

/// sign(0) = +1.
std::vector<double> sign_projection(std::span<const double> v);
/// Entrywise z/|z|; throws DegeneratePhase below 1e-300.
ComplexVector phase_projection(const ComplexVector& v);
/// Blockwise project_so3 of a 3N x 3 stack.
Matrix block_project_so3(const Matrix& stack);

// Z/2
SignTrace pm_z2(const Matrix& h, std::size_t iterations, const InitState& init, bool keep_iterates = false);
SignTrace ppm_z2(const Matrix& h, std::size_t iterations, const InitState& init, bool keep_iterates = false);
SignTrace amp_z2(const Matrix& h, double lambda, std::size_t iterations, const InitState& init,
                 bool keep_iterates = false);

// U(1)
PhaseTrace pm_u1(const ComplexMatrix& h, std::size_t iterations, const InitState& init, bool keep_iterates = false);
PhaseTrace ppm_u1(const ComplexMatrix& h, std::size_t iterations, const InitState& init, bool keep_iterates = false);
PhaseTrace amp_u1(const ComplexMatrix& h, double lambda, std::size_t iterations, const InitState& init,
                  bool keep_iterates = false);

/// I1(2t) / I0(2t), the AMP denoiser for U(1).
double bessel_ratio(double t);

// SO(3)
enum class BlockProjection {
    Rotation,    ///< project_so3, det = +1
    Orthogonal,  ///< nearest orthogonal matrix, det may be -1
};

struct SpectralOptions {
    EigenOrder order = EigenOrder::Algebraic;
    BlockProjection projection = BlockProjection::Rotation;
    std::size_t iterations = 400;
};

/// Three leading eigenvectors scaled by sqrt(N), then blockwise projection.
Matrix spectral_so3(const Matrix& h, const SpectralOptions& opts = {});

RotationTrace ppm_so3(const Matrix& h, std::size_t iterations, const InitState& init, bool keep_iterates = false);

}  // namespace unrollsync
