#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "unrollsync/baselines.hpp"
#include "unrollsync/synthetic.hpp"
#include "unrollsync/unrolled.hpp"

namespace unrollsync {

/// Recovered signal plus the group-element estimates that produced it.
struct SignalEstimate {
    MraGroup group = MraGroup::Z2;
    std::vector<double> signal;  // Z2: x_hat
    Spectrum spectrum;           // shift: averaged aligned spectrum
    std::vector<double> signs;   // Z2 estimates
    ComplexVector phases;        // shift estimates on the unit circle

    /// Z2: the signal; shift: real part of the inverse DFT of the spectrum.
    std::vector<double> time_domain() const;
};

/// x_hat = (1/N) sum_i s_i y_i.
SignalEstimate reconstruct_z2(const Matrix& observations, std::span<const double> signs);

/// Rotates the spectrum of column n by e^{i k angle(z_n)}, k the signed
/// frequency, and averages.
/// Throws std::invalid_argument unless every |z_n| is 1 within 1e-8.
SignalEstimate reconstruct_shift(const Matrix& observations, const ComplexVector& phases);

enum class SolverKind { PM, PPM, AMP, Unrolled };

std::string_view to_string(SolverKind k);
SolverKind parse_solver(std::string_view s);

struct SolverParams {
    SolverKind kind = SolverKind::PPM;
    std::size_t iterations = 100;
    UnrolledModel* model = nullptr;  // required for SolverKind::Unrolled
    bool round_shifts = false;       // snap phases to e^{i 2 pi s / L} before reconstruction
    std::size_t grid_factor = 10;    // P of the shift reconstruction error
};

struct PipelineResult {
    SignalEstimate estimate;
    double alignment_error = 0.0;       // err_z2 or err_u1 against the true elements
    double reconstruction_error = 0.0;  // rec_err_z2 or rec_err_zl
};

/// Ratio estimation, synchronization with the selected solver from `init`,
/// then reconstruction and both error metrics.
PipelineResult run_pipeline(const MraBatch& batch, const SolverParams& params, const InitState& init);

/// Same as run_pipeline with the ratio matrix already computed.
PipelineResult run_pipeline(const MraBatch& batch, const MeasurementMatrix& h, const SolverParams& params,
                            const InitState& init);

/// Reconstruction and both error metrics for given sign estimates.
PipelineResult score_z2(const MraBatch& batch, std::span<const double> signs);

/// Same for phase estimates; `round_shifts` and `grid_factor` as in SolverParams.
PipelineResult score_shift(const MraBatch& batch, const ComplexVector& phases, bool round_shifts = false,
                           std::size_t grid_factor = 10);

/// Phases e^{i 2 pi s_n / L} of the true shifts.
ComplexVector shift_phases(std::span<const int> shifts, std::size_t length);

}  // namespace unrollsync
