#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "unrollsync/autodiff.hpp"
#include "unrollsync/baselines.hpp"
#include "unrollsync/synthetic.hpp"

namespace unrollsync {

// ---------------------------------------------------------------------------
// Tasks and datasets
// ---------------------------------------------------------------------------

enum class Task { SyncZ2, SyncU1, SyncSO3, MraZ2, MraShift };

std::string_view to_string(Task t);
Task parse_task(std::string_view s);
/// Group whose unrolled network solves the task (MRA-Z2 -> Z2, shift MRA -> U1).
Group task_group(Task t);
bool is_mra(Task t);

enum class LossKind { Alignment, Reconstruction };

std::string_view to_string(LossKind k);
LossKind parse_loss(std::string_view s);

/// One training or test example.
struct Sample {
    MeasurementMatrix h;
    InitState init;
    std::vector<double> signs;  // Z2 truth
    ComplexVector phases;       // U1 truth; e^{i 2 pi s / L} for shift MRA
    Matrix rotations;           // SO3 truth
    std::vector<double> signal; // MRA: x
    Matrix observations;        // MRA: L x N
    std::vector<int> elements;  // MRA: signs or shifts
};

struct Dataset {
    Task task = Task::SyncZ2;
    std::size_t n = 0;
    std::size_t length = 0;  // MRA signal length
    double lambda = 0.0;
    std::vector<Sample> samples;

    std::size_t size() const { return samples.size(); }
};

/// Sample i is drawn from Rng::stream(seed, i): instance first, then the
/// solver initialization.
Sample make_sample(Task task, std::size_t n, double lambda, std::size_t length, Rng& rng);
Dataset make_dataset(Task task, std::size_t n, double lambda, std::size_t count, std::uint64_t seed,
                     std::size_t length = 21);
/// Seed of the test set paired with a training seed (disjoint streams).
std::uint64_t test_seed(std::uint64_t train_seed);

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

class UnrolledModel {
public:
    Group group = Group::Z2;
    std::size_t depth = 0;
    double lambda = 0.0;
    bool weight_sharing = false;
    std::size_t hidden_f = 0;
    std::size_t hidden_phi = 0;
    std::size_t babylonian_iters = 4;

    ad::ParameterStore params;
    std::map<std::string, ad::BatchNormStats> batchnorm;

    /// Parameter-name prefix of layer t ("L3" or "shared").
    std::string prefix(std::size_t t) const;
};

/// Z2: theta0 + f, phi (1 -> 32 -> 1 with BatchNorm); U1: theta0 + f
/// (1 -> 256 -> 1, no BatchNorm); SO3: f (9 -> 32 -> 9) and phi (9 -> 9 -> 9),
/// both with BatchNorm, followed by the Babylonian projection.
UnrolledModel build_model(Group group, std::size_t depth, double lambda, bool weight_sharing, std::uint64_t seed);

/// Tensors for a minibatch of B samples. Iterates are [B,N] (Z2, U1 real and
/// imaginary parts) or [B,3N,3] (SO3); H is [B,N,N] or [B,3N,3N].
struct Batch {
    Task task = Task::SyncZ2;
    std::size_t size = 0;
    std::size_t n = 0;
    std::size_t length = 0;

    ad::Tensor h_re, h_im;
    ad::Tensor z0, zm1;                          // Z2
    ad::Tensor z0_re, z0_im, zm1_re, zm1_im;     // U1
    ad::Tensor r0, rm1;                          // SO3

    ad::Tensor true_z;                           // Z2 [B,N]
    ad::Tensor true_re, true_im;                 // U1 [B,N]
    ad::Tensor true_r;                           // SO3 [B,3N,3]
    ad::Tensor x;                                // MRA-Z2 [B,L]
    ad::Tensor y;                                // MRA-Z2 [B,L,N]
    ad::Tensor x_re, x_im;                       // shift MRA spectra [B,L]
    ad::Tensor y_re, y_im;                       // shift MRA spectra [B,N,L]
};

Batch make_batch(const Dataset& data, std::span<const std::size_t> indices);

/// Counts multiplications of an iterate by H.
struct HCounter {
    std::size_t products = 0;
};

ad::Tensor layer_z2(UnrolledModel& model, std::size_t t, const ad::Tensor& h, const ad::Tensor& z,
                    const ad::Tensor& z_prev, ad::Mode mode, HCounter* counter = nullptr);

std::pair<ad::Tensor, ad::Tensor> layer_u1(UnrolledModel& model, std::size_t t, const ad::Tensor& h_re,
                                           const ad::Tensor& h_im, const ad::Tensor& z_re, const ad::Tensor& z_im,
                                           const ad::Tensor& z_prev_re, const ad::Tensor& z_prev_im, ad::Mode mode,
                                           HCounter* counter = nullptr);

ad::Tensor layer_so3(UnrolledModel& model, std::size_t t, const ad::Tensor& h, const ad::Tensor& r,
                     const ad::Tensor& r_prev, ad::Mode mode, HCounter* counter = nullptr);

/// Differentiable approximate polar projection of 3x3 blocks given as rows of
/// a [K,9] tensor: Q0 = A/||A||_F, then Q <- 2Q + P N - 3P with N = Q^T Q,
/// P = Q N / 2. Throws SolverError(DegenerateBlock) on a zero block.
ad::Tensor babylonian_project(const ad::Tensor& blocks, std::size_t iters = 4);

struct ForwardResult {
    ad::Tensor z;           // Z2 [B,N] in (-1,1)
    ad::Tensor z_re, z_im;  // U1 [B,N]
    ad::Tensor r;           // SO3 [B,3N,3] after projection
    std::size_t h_products = 0;
};

ForwardResult forward(UnrolledModel& model, const Batch& batch, ad::Mode mode);

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

/// 1 - (1/(N M)) sum_m |z_m^T zhat_m|.
ad::Tensor loss_align_z2(const ad::Tensor& z, const ad::Tensor& zhat);
/// 1 - (1/(N M)) sum_m |z_m^* zhat_m|, real and imaginary parts split.
ad::Tensor loss_align_u1(const ad::Tensor& z_re, const ad::Tensor& z_im, const ad::Tensor& zhat_re,
                         const ad::Tensor& zhat_im);
/// 1 - (1/(3 N^2 M)) sum_m ||R_m^T Rhat_m||_F^2.
ad::Tensor loss_align_so3(const ad::Tensor& r, const ad::Tensor& rhat);
/// (1/(L M)) sum_m min_s ||x_m - (s/N) Y_m zhat_m||^2.
ad::Tensor loss_rec_z2(const ad::Tensor& x, const ad::Tensor& y, const ad::Tensor& zhat);
/// Fourier-domain reconstruction loss: each observation spectrum is rotated by
/// e^{i k angle(zhat_n)} (k the signed frequency), the rotated spectra are averaged, and the squared
/// distance to X is minimized over phases 2 pi j/(L P), j = 1..L P, with
/// normalization 1/(L^2 M).
ad::Tensor loss_rec_zl(const ad::Tensor& x_re, const ad::Tensor& x_im, const ad::Tensor& y_re,
                       const ad::Tensor& y_im, const ad::Tensor& zhat_re, const ad::Tensor& zhat_im,
                       std::size_t grid_factor = 10);

/// Loss for a task on a batch and the model output.
ad::Tensor task_loss(LossKind kind, const Batch& batch, const ForwardResult& out, std::size_t grid_factor = 10);

// ---------------------------------------------------------------------------
// Training and inference
// ---------------------------------------------------------------------------

struct TrainConfig {
    Task task = Task::SyncZ2;
    LossKind loss = LossKind::Alignment;
    std::size_t samples = 2000;  // M, validation split included
    std::size_t epochs = 60;
    double learning_rate = 1e-3;
    std::size_t batch_size = 128;
    std::uint64_t seed = 0;
    std::size_t n = 20;
    double lambda = 1.5;
    std::size_t length = 21;
    std::size_t grid_factor = 10;
    double validation_fraction = 0.1;
};

struct EpochRecord {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double validation_error = 0.0;  // mean alignment error; NaN without a validation split
    double seconds = 0.0;
};

struct TrainHistory {
    std::vector<EpochRecord> epochs;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Adam on minibatches of the first (1 - validation_fraction) samples; the
/// rest are only evaluated. Batch order is a seeded shuffle per epoch.
TrainHistory train(UnrolledModel& model, const Dataset& data, const TrainConfig& cfg,
                   const EpochCallback& on_epoch = {});

/// Generates the training set from cfg.seed and trains.
TrainHistory train(UnrolledModel& model, const TrainConfig& cfg, const EpochCallback& on_epoch = {});

/// Group-valued estimates after the terminal projection (sign, phase or
/// nearest rotation of each block).
struct Predictions {
    std::vector<std::vector<double>> signs;
    std::vector<ComplexVector> phases;
    std::vector<Matrix> rotations;
};

Predictions predict(UnrolledModel& model, const Dataset& data, std::size_t batch_size = 500);

/// Alignment error of every sample (err_z2, err_u1 or err_so3).
std::vector<double> alignment_errors(const Dataset& data, const Predictions& pred);

// ---------------------------------------------------------------------------
// Serialization ("UNSY" magic, u32 version, little-endian payload)
// ---------------------------------------------------------------------------

inline constexpr std::uint32_t kModelFormatVersion = 1;

void save_model(const UnrolledModel& model, std::ostream& out);
UnrolledModel load_model(std::istream& in);
void save_model(const UnrolledModel& model, const std::string& path);
UnrolledModel load_model(const std::string& path);

}  // namespace unrollsync
