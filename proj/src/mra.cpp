#include "unrollsync/mra.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "unrollsync/metrics.hpp"

namespace unrollsync {

std::vector<double> SignalEstimate::time_domain() const {
    if (group == MraGroup::Z2) return signal;
    return idft(spectrum).re;
}

SignalEstimate reconstruct_z2(const Matrix& y, std::span<const double> signs) {
    if (signs.size() != y.cols())
        throw std::invalid_argument("reconstruct_z2: " + std::to_string(signs.size()) + " signs for " +
                                    std::to_string(y.cols()) + " observations");
    SignalEstimate est;
    est.group = MraGroup::Z2;
    est.signs.assign(signs.begin(), signs.end());
    est.signal.assign(y.rows(), 0.0);
    const double inv_n = 1.0 / static_cast<double>(y.cols());
    for (std::size_t k = 0; k < y.rows(); ++k) {
        double acc = 0.0;
        for (std::size_t i = 0; i < y.cols(); ++i) acc += signs[i] * y(k, i);
        est.signal[k] = acc * inv_n;
    }
    return est;
}

SignalEstimate reconstruct_shift(const Matrix& y, const ComplexVector& phases) {
    const std::size_t len = y.rows(), n = y.cols();
    if (phases.size() != n)
        throw std::invalid_argument("reconstruct_shift: " + std::to_string(phases.size()) + " phases for " +
                                    std::to_string(n) + " observations");
    for (std::size_t i = 0; i < n; ++i)
        if (std::abs(std::abs(phases[i]) - 1.0) > 1e-8)
            throw std::invalid_argument("reconstruct_shift: phase " + std::to_string(i) + " is not on the unit circle");
    SignalEstimate est;
    est.group = MraGroup::Shift;
    est.phases = phases;
    est.spectrum = Spectrum(len);
    std::vector<std::complex<double>> acc(len);
    std::vector<double> col(len);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t k = 0; k < len; ++k) col[k] = y(k, i);
        const Spectrum s = dft(col);
        const double angle = std::arg(phases[i]);
        for (std::size_t k = 0; k < len; ++k) acc[k] += std::polar(1.0, signed_frequency(k, len) * angle) * s[k];
    }
    for (std::size_t k = 0; k < len; ++k) est.spectrum.set(k, acc[k] / static_cast<double>(n));
    return est;
}

std::string_view to_string(SolverKind k) {
    switch (k) {
        case SolverKind::PM: return "pm";
        case SolverKind::PPM: return "ppm";
        case SolverKind::AMP: return "amp";
        case SolverKind::Unrolled: return "unrolled";
    }
    return "?";
}

SolverKind parse_solver(std::string_view s) {
    if (s == "pm") return SolverKind::PM;
    if (s == "ppm") return SolverKind::PPM;
    if (s == "amp") return SolverKind::AMP;
    if (s == "unrolled") return SolverKind::Unrolled;
    throw std::invalid_argument("unknown solver '" + std::string(s) + "' (expected pm, ppm, amp, unrolled)");
}

ComplexVector shift_phases(std::span<const int> shifts, std::size_t length) {
    ComplexVector z(shifts.size());
    for (std::size_t i = 0; i < shifts.size(); ++i)
        z.set(i, std::polar(1.0, 2.0 * std::numbers::pi * shifts[i] / static_cast<double>(length)));
    return z;
}

namespace {

Predictions unrolled_estimate(const MraBatch& batch, const MeasurementMatrix& h, UnrolledModel& model,
                              const InitState& init) {
    Dataset data;
    data.task = batch.group == MraGroup::Z2 ? Task::MraZ2 : Task::MraShift;
    if (task_group(data.task) != model.group)
        throw std::invalid_argument("run_pipeline: unrolled model group " + std::string(to_string(model.group)) +
                                    " cannot solve " + std::string(to_string(batch.group)) + " MRA");
    data.n = batch.n;
    data.length = batch.length;
    data.lambda = batch.lambda;
    Sample s;
    s.h = h;
    s.init = init;
    if (batch.group == MraGroup::Z2)
        s.signs.assign(batch.elements.begin(), batch.elements.end());
    else
        s.phases = shift_phases(batch.elements, batch.length);
    s.signal = batch.signal;
    s.observations = batch.observations;
    s.elements = batch.elements;
    data.samples.push_back(std::move(s));
    return predict(model, data);
}

ComplexVector round_to_shifts(const ComplexVector& z, std::size_t length) {
    ComplexVector out(z.size());
    const double step = 2.0 * std::numbers::pi / static_cast<double>(length);
    for (std::size_t i = 0; i < z.size(); ++i) {
        const double k = std::round(std::arg(z[i]) / step);
        out.set(i, std::polar(1.0, k * step));
    }
    return out;
}

}  // namespace

PipelineResult score_z2(const MraBatch& batch, std::span<const double> signs) {
    PipelineResult res;
    res.estimate = reconstruct_z2(batch.observations, signs);
    const std::vector<double> truth(batch.elements.begin(), batch.elements.end());
    res.alignment_error = err_z2(truth, signs);
    res.reconstruction_error = rec_err_z2(batch.signal, res.estimate.signal);
    return res;
}

PipelineResult score_shift(const MraBatch& batch, const ComplexVector& phases, bool round_shifts,
                           std::size_t grid_factor) {
    const ComplexVector z = round_shifts ? round_to_shifts(phases, batch.length) : phases;
    PipelineResult res;
    res.estimate = reconstruct_shift(batch.observations, z);
    res.alignment_error = err_u1(shift_phases(batch.elements, batch.length), z);
    res.reconstruction_error = rec_err_zl(dft(batch.signal), res.estimate.spectrum, grid_factor);
    return res;
}

PipelineResult run_pipeline(const MraBatch& batch, const MeasurementMatrix& h, const SolverParams& params,
                            const InitState& init) {
    const Group g = batch.group == MraGroup::Z2 ? Group::Z2 : Group::U1;
    if (init.group != g) throw std::invalid_argument("run_pipeline: initialization group does not match the batch");
    if (params.kind == SolverKind::Unrolled && params.model == nullptr)
        throw std::invalid_argument("run_pipeline: the unrolled solver needs a model");

    if (g == Group::Z2) {
        std::vector<double> signs;
        switch (params.kind) {
            case SolverKind::PM: signs = pm_z2(h.re, params.iterations, init).estimate; break;
            case SolverKind::PPM: signs = ppm_z2(h.re, params.iterations, init).estimate; break;
            case SolverKind::AMP: signs = amp_z2(h.re, batch.lambda, params.iterations, init).estimate; break;
            case SolverKind::Unrolled: signs = unrolled_estimate(batch, h, *params.model, init).signs.at(0); break;
        }
        return score_z2(batch, signs);
    }
    ComplexVector z;
    const ComplexMatrix hc = h.as_complex();
    switch (params.kind) {
        case SolverKind::PM: z = pm_u1(hc, params.iterations, init).estimate; break;
        case SolverKind::PPM: z = ppm_u1(hc, params.iterations, init).estimate; break;
        case SolverKind::AMP: z = amp_u1(hc, batch.lambda, params.iterations, init).estimate; break;
        case SolverKind::Unrolled: z = unrolled_estimate(batch, h, *params.model, init).phases.at(0); break;
    }
    return score_shift(batch, z, params.round_shifts, params.grid_factor);
}

PipelineResult run_pipeline(const MraBatch& batch, const SolverParams& params, const InitState& init) {
    return run_pipeline(batch, ratios_from_mra(batch, batch.lambda), params, init);
}

}  // namespace unrollsync
