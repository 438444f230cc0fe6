#include "unrollsync/synthetic.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "binary_io.hpp"

namespace unrollsync {

std::string_view to_string(Group g) {
    switch (g) {
        case Group::Z2: return "z2";
        case Group::U1: return "u1";
        case Group::SO3: return "so3";
    }
    return "?";
}

Group parse_group(std::string_view s) {
    if (s == "z2" || s == "Z2") return Group::Z2;
    if (s == "u1" || s == "U1") return Group::U1;
    if (s == "so3" || s == "SO3") return Group::SO3;
    throw std::invalid_argument("unknown group: " + std::string(s));
}

std::string_view to_string(MraGroup g) { return g == MraGroup::Z2 ? "mra-z2" : "mra-shift"; }

std::vector<double> MraBatch::column(std::size_t i) const {
    std::vector<double> c(length);
    for (std::size_t k = 0; k < length; ++k) c[k] = observations(k, i);
    return c;
}

namespace {

void check_sizes(std::size_t n, double lambda) {
    if (n == 0) throw std::invalid_argument("N must be >= 1");
    if (!(lambda > 0.0)) throw std::invalid_argument("lambda must be > 0");
}

// Symmetric real noise, upper triangle drawn row-major.
Matrix symmetric_noise(std::size_t dim, Rng& rng) {
    Matrix w(dim, dim);
    for (std::size_t i = 0; i < dim; ++i) {
        for (std::size_t j = i; j < dim; ++j) {
            const double v = rng.normal();
            w(i, j) = v;
            w(j, i) = v;
        }
    }
    return w;
}

}  // namespace

SyncInstance z2_from_truth(std::vector<double> signs, double lambda, Rng& rng, double noise_scale) {
    const std::size_t n = signs.size();
    check_sizes(n, lambda);
    const Matrix w = symmetric_noise(n, rng);
    SyncInstance inst;
    inst.group = Group::Z2;
    inst.n = n;
    inst.lambda = lambda;
    inst.h.re = Matrix(n, n);
    const double a = lambda / static_cast<double>(n);
    const double b = noise_scale / std::sqrt(static_cast<double>(n));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) inst.h.re(i, j) = a * signs[i] * signs[j] + b * w(i, j);
    inst.signs = std::move(signs);
    return inst;
}

SyncInstance gen_z2(std::size_t n, double lambda, Rng& rng, double noise_scale) {
    check_sizes(n, lambda);
    std::vector<double> z(n);
    for (auto& v : z) v = (rng.next_u64() >> 63) ? 1.0 : -1.0;
    return z2_from_truth(std::move(z), lambda, rng, noise_scale);
}

SyncInstance u1_from_truth(ComplexVector phases, double lambda, Rng& rng, double noise_scale) {
    const std::size_t n = phases.size();
    check_sizes(n, lambda);
    // Off-diagonal CN(0,1): real and imaginary parts N(0, 1/2). Diagonal real N(0,1).
    Matrix wr(n, n), wi(n, n);
    const double half = std::sqrt(0.5);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i; j < n; ++j) {
            if (i == j) {
                wr(i, i) = rng.normal();
                continue;
            }
            const double r = half * rng.normal();
            const double m = half * rng.normal();
            wr(i, j) = r;
            wr(j, i) = r;
            wi(i, j) = m;
            wi(j, i) = -m;
        }
    }
    SyncInstance inst;
    inst.group = Group::U1;
    inst.n = n;
    inst.lambda = lambda;
    inst.h.re = Matrix(n, n);
    inst.h.im = Matrix(n, n);
    const double a = lambda / static_cast<double>(n);
    const double b = noise_scale / std::sqrt(static_cast<double>(n));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            // z_i conj(z_j)
            const double zr = phases.re[i] * phases.re[j] + phases.im[i] * phases.im[j];
            const double zi = phases.im[i] * phases.re[j] - phases.re[i] * phases.im[j];
            inst.h.re(i, j) = a * zr + b * wr(i, j);
            inst.h.im(i, j) = a * zi + b * wi(i, j);
        }
    }
    // Exact Hermitian storage.
    for (std::size_t i = 0; i < n; ++i) {
        inst.h.im(i, i) = 0.0;
        for (std::size_t j = i + 1; j < n; ++j) {
            inst.h.re(j, i) = inst.h.re(i, j);
            inst.h.im(j, i) = -inst.h.im(i, j);
        }
    }
    inst.phases = std::move(phases);
    return inst;
}

SyncInstance gen_u1(std::size_t n, double lambda, Rng& rng, double noise_scale) {
    check_sizes(n, lambda);
    ComplexVector z(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double theta = 2.0 * std::numbers::pi * rng.uniform();
        z.re[i] = std::cos(theta);
        z.im[i] = std::sin(theta);
    }
    return u1_from_truth(std::move(z), lambda, rng, noise_scale);
}

Mat3 random_rotation(Rng& rng) {
    Mat3 g{};
    for (double& v : g) v = rng.normal();
    return project_so3(g);
}

SyncInstance so3_from_truth(Matrix rotations, double lambda, Rng& rng, double noise_scale) {
    if (rotations.cols() != 3 || rotations.rows() % 3 != 0) throw std::invalid_argument("rotations must be 3N x 3");
    const std::size_t n = rotations.rows() / 3;
    check_sizes(n, lambda);
    const std::size_t dim = 3 * n;
    const Matrix w = symmetric_noise(dim, rng);
    SyncInstance inst;
    inst.group = Group::SO3;
    inst.n = n;
    inst.lambda = lambda;
    const Matrix rrt = rotations * rotations.transpose();
    inst.h.re = Matrix(dim, dim);
    const double a = lambda / static_cast<double>(n);
    const double b = noise_scale / std::sqrt(static_cast<double>(dim));
    for (std::size_t i = 0; i < dim; ++i) {
        for (std::size_t j = i; j < dim; ++j) {
            const double v = a * rrt(i, j) + b * w(i, j);
            inst.h.re(i, j) = v;
            inst.h.re(j, i) = v;
        }
    }
    inst.rotations = std::move(rotations);
    return inst;
}

SyncInstance gen_so3(std::size_t n, double lambda, Rng& rng, double noise_scale) {
    check_sizes(n, lambda);
    Matrix r(3 * n, 3);
    for (std::size_t i = 0; i < n; ++i) set_block(r, i, random_rotation(rng));
    return so3_from_truth(std::move(r), lambda, rng, noise_scale);
}

SyncInstance generate(Group g, std::size_t n, double lambda, Rng& rng, double noise_scale) {
    switch (g) {
        case Group::Z2: return gen_z2(n, lambda, rng, noise_scale);
        case Group::U1: return gen_u1(n, lambda, rng, noise_scale);
        case Group::SO3: return gen_so3(n, lambda, rng, noise_scale);
    }
    throw std::invalid_argument("unknown group");
}

// ---------------------------------------------------------------------------
// MRA
// ---------------------------------------------------------------------------

std::vector<double> circular_shift(std::span<const double> x, long shift) {
    const long len = static_cast<long>(x.size());
    std::vector<double> y(x.size());
    for (long j = 0; j < len; ++j) {
        long src = (j - shift) % len;
        if (src < 0) src += len;
        y[static_cast<std::size_t>(j)] = x[static_cast<std::size_t>(src)];
    }
    return y;
}

MraBatch mra_from_truth(MraGroup g, std::vector<double> signal, std::vector<int> elements, double lambda, Rng& rng,
                        double noise_scale) {
    const std::size_t len = signal.size();
    const std::size_t n = elements.size();
    if (len == 0) throw std::invalid_argument("signal length must be >= 1");
    check_sizes(n, lambda);
    MraBatch b;
    b.group = g;
    b.length = len;
    b.n = n;
    b.lambda = lambda;
    b.observations = Matrix(len, n);
    const double sigma = noise_scale / lambda;
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> clean;
        if (g == MraGroup::Z2) {
            if (elements[i] != 1 && elements[i] != -1) throw std::invalid_argument("Z2 elements must be +-1");
            clean = signal;
            for (double& v : clean) v *= elements[i];
        } else {
            if (elements[i] < 0 || static_cast<std::size_t>(elements[i]) >= len)
                throw std::invalid_argument("shift out of range");
            clean = circular_shift(signal, elements[i]);
        }
        for (std::size_t k = 0; k < len; ++k) b.observations(k, i) = clean[k] + sigma * rng.normal();
    }
    b.signal = std::move(signal);
    b.elements = std::move(elements);
    return b;
}

MraBatch gen_mra_z2(std::size_t length, std::size_t n, double lambda, Rng& rng, double noise_scale) {
    if (length == 0) throw std::invalid_argument("signal length must be >= 1");
    check_sizes(n, lambda);
    std::vector<double> x(length);
    for (double& v : x) v = rng.normal();
    std::vector<int> s(n);
    for (int& v : s) v = (rng.next_u64() >> 63) ? 1 : -1;
    return mra_from_truth(MraGroup::Z2, std::move(x), std::move(s), lambda, rng, noise_scale);
}

MraBatch gen_mra_shift(std::size_t length, std::size_t n, double lambda, Rng& rng, double noise_scale) {
    if (length == 0) throw std::invalid_argument("signal length must be >= 1");
    check_sizes(n, lambda);
    std::vector<double> x(length);
    for (double& v : x) v = rng.normal();
    std::vector<int> s(n);
    for (int& v : s) v = static_cast<int>(rng.below(length));
    return mra_from_truth(MraGroup::Shift, std::move(x), std::move(s), lambda, rng, noise_scale);
}

MeasurementMatrix ratios_from_mra_z2(const MraBatch& batch, double lambda) {
    if (batch.group != MraGroup::Z2) throw std::invalid_argument("ratios_from_mra_z2: batch is not Z2");
    const std::size_t n = batch.n;
    const double a = lambda / static_cast<double>(n);
    MeasurementMatrix h;
    h.re = Matrix(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i; j < n; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < batch.length; ++k) s += batch.observations(k, i) * batch.observations(k, j);
            h.re(i, j) = a * s;
            h.re(j, i) = a * s;
        }
    }
    return h;
}

int relative_shift(const Spectrum& yi, const Spectrum& yj) {
    const std::size_t len = yi.size();
    Spectrum prod(len);
    for (std::size_t k = 0; k < len; ++k) prod.set(k, yi[k] * std::conj(yj[k]));
    const ComplexVector cc = idft(prod);
    std::size_t best = 0;
    for (std::size_t l = 1; l < len; ++l)
        if (cc.re[l] > cc.re[best]) best = l;
    return static_cast<int>(best);
}

MeasurementMatrix ratios_from_mra_shift(const MraBatch& batch, double lambda) {
    if (batch.group != MraGroup::Shift) throw std::invalid_argument("ratios_from_mra_shift: batch is not shift");
    const std::size_t n = batch.n;
    const double len = static_cast<double>(batch.length);
    const double a = lambda / static_cast<double>(n);
    std::vector<Spectrum> spectra;
    spectra.reserve(n);
    for (std::size_t i = 0; i < n; ++i) spectra.push_back(dft(batch.column(i)));
    MeasurementMatrix h;
    h.re = Matrix(n, n);
    h.im = Matrix(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        h.re(i, i) = a;
        for (std::size_t j = i + 1; j < n; ++j) {
            const int s = relative_shift(spectra[i], spectra[j]);
            const double ang = 2.0 * std::numbers::pi * s / len;
            const double c = a * std::cos(ang);
            const double sn = a * std::sin(ang);
            h.re(i, j) = c;
            h.im(i, j) = sn;
            h.re(j, i) = c;
            h.im(j, i) = -sn;
        }
    }
    return h;
}

MeasurementMatrix ratios_from_mra(const MraBatch& batch, double lambda) {
    return batch.group == MraGroup::Z2 ? ratios_from_mra_z2(batch, lambda) : ratios_from_mra_shift(batch, lambda);
}

// ---------------------------------------------------------------------------
// Dataset container
// ---------------------------------------------------------------------------

namespace {

constexpr char kDatasetMagic[4] = {'U', 'N', 'S', 'D'};
constexpr std::uint32_t kDatasetVersion = 1;
constexpr std::uint32_t kKindSync = 1;
constexpr std::uint32_t kKindMra = 2;

void write_matrix(detail::BinaryWriter& w, const Matrix& m) {
    w.u64(m.rows());
    w.u64(m.cols());
    w.f64s(m.data());
}

Matrix read_matrix(detail::BinaryReader& r) {
    const auto rows = r.u64();
    const auto cols = r.u64();
    auto data = r.f64s();
    if (rows * cols != data.size()) throw detail::FormatError("matrix shape does not match data");
    return Matrix(rows, cols, std::move(data));
}

void write_header(detail::BinaryWriter& w, std::uint32_t kind, std::uint64_t count) {
    w.bytes(kDatasetMagic, 4);
    w.u32(kDatasetVersion);
    w.u32(kind);
    w.u64(count);
}

std::uint64_t read_header(detail::BinaryReader& r, std::uint32_t kind) {
    char magic[4];
    r.bytes(magic, 4);
    if (std::memcmp(magic, kDatasetMagic, 4) != 0) throw detail::FormatError("not a dataset file (bad magic)");
    const auto version = r.u32();
    if (version != kDatasetVersion)
        throw detail::FormatError("unsupported dataset version " + std::to_string(version));
    if (r.u32() != kind) throw detail::FormatError("dataset kind mismatch");
    return r.u64();
}

}  // namespace

void write_sync_instances(std::ostream& out, const std::vector<SyncInstance>& items) {
    detail::BinaryWriter w(out);
    write_header(w, kKindSync, items.size());
    for (const auto& it : items) {
        w.u32(static_cast<std::uint32_t>(it.group));
        w.u64(it.n);
        w.f64(it.lambda);
        w.f64s(it.signs);
        w.f64s(it.phases.re);
        w.f64s(it.phases.im);
        write_matrix(w, it.rotations);
        write_matrix(w, it.h.re);
        write_matrix(w, it.h.im);
    }
}

std::vector<SyncInstance> read_sync_instances(std::istream& in) {
    detail::BinaryReader r(in);
    const auto count = read_header(r, kKindSync);
    std::vector<SyncInstance> items;
    for (std::uint64_t i = 0; i < count; ++i) {
        SyncInstance it;
        const auto g = r.u32();
        if (g > 2) throw detail::FormatError("bad group tag");
        it.group = static_cast<Group>(g);
        it.n = r.u64();
        it.lambda = r.f64();
        it.signs = r.f64s();
        auto re = r.f64s();
        auto im = r.f64s();
        it.phases = ComplexVector(std::move(re), std::move(im));
        it.rotations = read_matrix(r);
        it.h.re = read_matrix(r);
        it.h.im = read_matrix(r);
        items.push_back(std::move(it));
    }
    return items;
}

void write_mra_batches(std::ostream& out, const std::vector<MraBatch>& items) {
    detail::BinaryWriter w(out);
    write_header(w, kKindMra, items.size());
    for (const auto& b : items) {
        w.u32(static_cast<std::uint32_t>(b.group));
        w.u64(b.length);
        w.u64(b.n);
        w.f64(b.lambda);
        w.f64s(b.signal);
        w.u64(b.elements.size());
        for (int e : b.elements) w.i64(e);
        write_matrix(w, b.observations);
    }
}

std::vector<MraBatch> read_mra_batches(std::istream& in) {
    detail::BinaryReader r(in);
    const auto count = read_header(r, kKindMra);
    std::vector<MraBatch> items;
    for (std::uint64_t i = 0; i < count; ++i) {
        MraBatch b;
        const auto g = r.u32();
        if (g > 1) throw detail::FormatError("bad MRA group tag");
        b.group = static_cast<MraGroup>(g);
        b.length = r.u64();
        b.n = r.u64();
        b.lambda = r.f64();
        b.signal = r.f64s();
        const auto ne = r.u64();
        if (ne > (1u << 24)) throw detail::FormatError("element count out of range");
        b.elements.resize(ne);
        for (auto& e : b.elements) e = static_cast<int>(r.i64());
        b.observations = read_matrix(r);
        items.push_back(std::move(b));
    }
    return items;
}

}  // namespace unrollsync
