#pragma once

#include <cstdint>
#include <iosfwd>
#include <string_view>
#include <vector>

#include "unrollsync/numerics.hpp"
#include "unrollsync/rng.hpp"

namespace unrollsync {

enum class Group { Z2, U1, SO3 };

std::string_view to_string(Group g);
Group parse_group(std::string_view s);

/// Pairwise-ratio matrix. `im` is empty for the real (Z2, SO3) cases.
struct MeasurementMatrix {
    Matrix re;
    Matrix im;

    bool is_complex() const { return !im.empty(); }
    std::size_t dim() const { return re.rows(); }
    ComplexMatrix as_complex() const { return {re, im}; }

    bool operator==(const MeasurementMatrix&) const = default;
};

/// One synchronization problem: ground truth plus H.
struct SyncInstance {
    Group group = Group::Z2;
    std::size_t n = 0;
    double lambda = 0.0;
    std::vector<double> signs;  // Z2
    ComplexVector phases;       // U1
    Matrix rotations;           // SO3, 3N x 3 stack
    MeasurementMatrix h;

    bool operator==(const SyncInstance&) const = default;
};

enum class MraGroup { Z2, Shift };

std::string_view to_string(MraGroup g);

/// N noisy copies of one length-L signal. Column i of `observations` is y_i.
struct MraBatch {
    MraGroup group = MraGroup::Z2;
    std::size_t length = 0;
    std::size_t n = 0;
    double lambda = 0.0;
    std::vector<double> signal;
    std::vector<int> elements;  // signs (+-1) or shifts in [0, L)
    Matrix observations;        // L x N

    std::vector<double> column(std::size_t i) const;
    bool operator==(const MraBatch&) const = default;
};

// Generators. `noise_scale` multiplies the noise term; 0 gives the noise-free
// model (test hook). Draw order: ground truth first, then noise entries of the
// upper triangle (diagonal included) in row-major order.

SyncInstance gen_z2(std::size_t n, double lambda, Rng& rng, double noise_scale = 1.0);
SyncInstance gen_u1(std::size_t n, double lambda, Rng& rng, double noise_scale = 1.0);
SyncInstance gen_so3(std::size_t n, double lambda, Rng& rng, double noise_scale = 1.0);

SyncInstance z2_from_truth(std::vector<double> signs, double lambda, Rng& rng, double noise_scale = 1.0);
SyncInstance u1_from_truth(ComplexVector phases, double lambda, Rng& rng, double noise_scale = 1.0);
SyncInstance so3_from_truth(Matrix rotations, double lambda, Rng& rng, double noise_scale = 1.0);

SyncInstance generate(Group g, std::size_t n, double lambda, Rng& rng, double noise_scale = 1.0);

/// Haar-distributed rotation: project a standard Gaussian 3x3 matrix.
Mat3 random_rotation(Rng& rng);

MraBatch gen_mra_z2(std::size_t length, std::size_t n, double lambda, Rng& rng, double noise_scale = 1.0);
MraBatch gen_mra_shift(std::size_t length, std::size_t n, double lambda, Rng& rng, double noise_scale = 1.0);
MraBatch mra_from_truth(MraGroup g, std::vector<double> signal, std::vector<int> elements, double lambda, Rng& rng,
                        double noise_scale = 1.0);

/// R_s(x)[j] = x[(j - s) mod L].
std::vector<double> circular_shift(std::span<const double> x, long shift);

/// H_ij = (lambda/N) y_i^T y_j.
MeasurementMatrix ratios_from_mra_z2(const MraBatch& batch, double lambda);

/// Relative shift of y_i against y_j: argmax of the real circular
/// cross-correlation, smallest lag on ties.
int relative_shift(const Spectrum& yi, const Spectrum& yj);

/// H_ij = (lambda/N) exp(i 2 pi s_ij / L); Hermitian by construction.
MeasurementMatrix ratios_from_mra_shift(const MraBatch& batch, double lambda);

MeasurementMatrix ratios_from_mra(const MraBatch& batch, double lambda);

// Dataset container ("UNSD" magic, u32 version, little-endian doubles).
void write_sync_instances(std::ostream& out, const std::vector<SyncInstance>& items);
std::vector<SyncInstance> read_sync_instances(std::istream& in);
void write_mra_batches(std::ostream& out, const std::vector<MraBatch>& items);
std::vector<MraBatch> read_mra_batches(std::istream& in);

}  // namespace unrollsync
