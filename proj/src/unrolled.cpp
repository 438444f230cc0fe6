#include "unrollsync/unrolled.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <numeric>
#include <stdexcept>

#include "binary_io.hpp"
#include "unrollsync/errors.hpp"
#include "unrollsync/metrics.hpp"

namespace unrollsync {

using ad::Mode;
using ad::Tensor;

// ---------------------------------------------------------------------------
// Tasks and datasets
// ---------------------------------------------------------------------------

std::string_view to_string(Task t) {
    switch (t) {
        case Task::SyncZ2: return "z2";
        case Task::SyncU1: return "u1";
        case Task::SyncSO3: return "so3";
        case Task::MraZ2: return "mra-z2";
        case Task::MraShift: return "mra-shift";
    }
    return "?";
}

Task parse_task(std::string_view s) {
    if (s == "z2") return Task::SyncZ2;
    if (s == "u1") return Task::SyncU1;
    if (s == "so3") return Task::SyncSO3;
    if (s == "mra-z2") return Task::MraZ2;
    if (s == "mra-shift") return Task::MraShift;
    throw std::invalid_argument("unknown task '" + std::string(s) + "' (expected z2, u1, so3, mra-z2, mra-shift)");
}

Group task_group(Task t) {
    switch (t) {
        case Task::SyncZ2:
        case Task::MraZ2: return Group::Z2;
        case Task::SyncU1:
        case Task::MraShift: return Group::U1;
        case Task::SyncSO3: return Group::SO3;
    }
    return Group::Z2;
}

bool is_mra(Task t) { return t == Task::MraZ2 || t == Task::MraShift; }

std::string_view to_string(LossKind k) { return k == LossKind::Alignment ? "alignment" : "reconstruction"; }

LossKind parse_loss(std::string_view s) {
    if (s == "alignment" || s == "align") return LossKind::Alignment;
    if (s == "reconstruction" || s == "rec") return LossKind::Reconstruction;
    throw std::invalid_argument("unknown loss '" + std::string(s) + "' (expected alignment or reconstruction)");
}

Sample make_sample(Task task, std::size_t n, double lambda, std::size_t length, Rng& rng) {
    Sample s;
    switch (task) {
        case Task::SyncZ2:
        case Task::SyncU1:
        case Task::SyncSO3: {
            SyncInstance inst = generate(task_group(task), n, lambda, rng);
            s.h = std::move(inst.h);
            s.signs = std::move(inst.signs);
            s.phases = std::move(inst.phases);
            s.rotations = std::move(inst.rotations);
            break;
        }
        case Task::MraZ2: {
            MraBatch b = gen_mra_z2(length, n, lambda, rng);
            s.h = ratios_from_mra_z2(b, lambda);
            s.signs.assign(b.elements.begin(), b.elements.end());
            s.signal = std::move(b.signal);
            s.observations = std::move(b.observations);
            s.elements = std::move(b.elements);
            break;
        }
        case Task::MraShift: {
            MraBatch b = gen_mra_shift(length, n, lambda, rng);
            s.h = ratios_from_mra_shift(b, lambda);
            s.phases = ComplexVector(n);
            for (std::size_t i = 0; i < n; ++i)
                s.phases.set(i, std::polar(1.0, 2.0 * std::numbers::pi * b.elements[i] / static_cast<double>(length)));
            s.signal = std::move(b.signal);
            s.observations = std::move(b.observations);
            s.elements = std::move(b.elements);
            break;
        }
    }
    s.init = make_init(task_group(task), n, rng);
    return s;
}

Dataset make_dataset(Task task, std::size_t n, double lambda, std::size_t count, std::uint64_t seed,
                     std::size_t length) {
    if (n == 0) throw std::invalid_argument("make_dataset: N must be >= 1");
    if (!(lambda > 0.0)) throw std::invalid_argument("make_dataset: lambda must be > 0");
    if (is_mra(task) && length == 0) throw std::invalid_argument("make_dataset: L must be >= 1");
    Dataset d;
    d.task = task;
    d.n = n;
    d.length = is_mra(task) ? length : 0;
    d.lambda = lambda;
    d.samples.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        Rng rng = Rng::stream(seed, i);
        d.samples.push_back(make_sample(task, n, lambda, length, rng));
    }
    return d;
}

std::uint64_t test_seed(std::uint64_t train_seed) { return splitmix64_mix(train_seed ^ 0x5445535453455453ULL); }

// ---------------------------------------------------------------------------
// Model construction
// ---------------------------------------------------------------------------

std::string UnrolledModel::prefix(std::size_t t) const {
    return weight_sharing ? std::string("shared") : "L" + std::to_string(t);
}

namespace {

void register_mlp(UnrolledModel& m, const std::string& name, std::size_t in, std::size_t hidden, std::size_t out,
                  bool bn, Rng& rng) {
    m.params.add(name + ".w1", {in, hidden}, ad::glorot_uniform(in, hidden, rng));
    m.params.add(name + ".b1", {1, hidden}, std::vector<double>(hidden, 0.0));
    if (bn) {
        m.params.add(name + ".bn1.gamma", {1, hidden}, std::vector<double>(hidden, 1.0));
        m.params.add(name + ".bn1.beta", {1, hidden}, std::vector<double>(hidden, 0.0));
        m.batchnorm.emplace(name + ".bn1", ad::BatchNormStats(hidden));
    }
    m.params.add(name + ".w2", {hidden, out}, ad::glorot_uniform(hidden, out, rng));
    m.params.add(name + ".b2", {1, out}, std::vector<double>(out, 0.0));
    if (bn) {
        m.params.add(name + ".bn2.gamma", {1, out}, std::vector<double>(out, 1.0));
        m.params.add(name + ".bn2.beta", {1, out}, std::vector<double>(out, 0.0));
        m.batchnorm.emplace(name + ".bn2", ad::BatchNormStats(out));
    }
}

Tensor mlp(UnrolledModel& m, const std::string& name, const Tensor& x, bool bn, Mode mode) {
    auto& p = m.params;
    Tensor h = ad::dense(x, p.get(name + ".w1"), p.get(name + ".b1"));
    if (bn) h = ad::batchnorm(h, p.get(name + ".bn1.gamma"), p.get(name + ".bn1.beta"), m.batchnorm.at(name + ".bn1"), mode);
    h = ad::relu(h);
    h = ad::dense(h, p.get(name + ".w2"), p.get(name + ".b2"));
    if (bn) h = ad::batchnorm(h, p.get(name + ".bn2.gamma"), p.get(name + ".bn2.beta"), m.batchnorm.at(name + ".bn2"), mode);
    return ad::tanh(h);
}

}  // namespace

UnrolledModel build_model(Group group, std::size_t depth, double lambda, bool weight_sharing, std::uint64_t seed) {
    if (depth == 0) throw std::invalid_argument("build_model: depth must be >= 1");
    if (!(lambda > 0.0)) throw std::invalid_argument("build_model: lambda must be > 0");
    UnrolledModel m;
    m.group = group;
    m.depth = depth;
    m.lambda = lambda;
    m.weight_sharing = weight_sharing;
    switch (group) {
        case Group::Z2: m.hidden_f = 32; m.hidden_phi = 32; break;
        case Group::U1: m.hidden_f = 256; m.hidden_phi = 0; break;
        case Group::SO3: m.hidden_f = 32; m.hidden_phi = 9; break;
    }
    Rng rng(splitmix64_mix(seed ^ 0x554E53594D4F444CULL));
    const std::size_t sets = weight_sharing ? 1 : depth;
    for (std::size_t t = 0; t < sets; ++t) {
        const std::string p = m.prefix(t);
        switch (group) {
            case Group::Z2:
                m.params.add(p + ".theta0", {1}, {1.0});
                register_mlp(m, p + ".f", 1, m.hidden_f, 1, true, rng);
                register_mlp(m, p + ".phi", 1, m.hidden_phi, 1, true, rng);
                break;
            case Group::U1:
                m.params.add(p + ".theta0", {1}, {1.0});
                register_mlp(m, p + ".f", 1, m.hidden_f, 1, false, rng);
                break;
            case Group::SO3:
                register_mlp(m, p + ".f", 9, m.hidden_f, 9, true, rng);
                register_mlp(m, p + ".phi", 9, m.hidden_phi, 9, true, rng);
                break;
        }
    }
    return m;
}

// ---------------------------------------------------------------------------
// Batches
// ---------------------------------------------------------------------------

namespace {

void append(std::vector<double>& dst, std::span<const double> src) { dst.insert(dst.end(), src.begin(), src.end()); }

}  // namespace

Batch make_batch(const Dataset& data, std::span<const std::size_t> indices) {
    if (indices.empty()) throw std::invalid_argument("make_batch: empty batch");
    Batch b;
    b.task = data.task;
    b.size = indices.size();
    b.n = data.n;
    b.length = data.length;
    const std::size_t bs = b.size, n = data.n, len = data.length;
    const Group g = task_group(data.task);
    std::vector<double> hre, him, a, c, d, e, t1, t2;
    for (std::size_t idx : indices) {
        const Sample& s = data.samples.at(idx);
        append(hre, s.h.re.data());
        if (g == Group::U1) append(him, s.h.im.data());
        switch (g) {
            case Group::Z2:
                append(a, s.init.z0);
                append(c, s.init.zm1);
                append(t1, s.signs);
                break;
            case Group::U1:
                append(a, s.init.c0.re);
                append(c, s.init.c0.im);
                append(d, s.init.cm1.re);
                append(e, s.init.cm1.im);
                append(t1, s.phases.re);
                append(t2, s.phases.im);
                break;
            case Group::SO3:
                append(a, s.init.r0.data());
                append(c, s.init.rm1.data());
                append(t1, s.rotations.data());
                break;
        }
    }
    switch (g) {
        case Group::Z2:
            b.h_re = Tensor::constant({bs, n, n}, std::move(hre));
            b.z0 = Tensor::constant({bs, n}, std::move(a));
            b.zm1 = Tensor::constant({bs, n}, std::move(c));
            b.true_z = Tensor::constant({bs, n}, std::move(t1));
            break;
        case Group::U1:
            b.h_re = Tensor::constant({bs, n, n}, std::move(hre));
            b.h_im = Tensor::constant({bs, n, n}, std::move(him));
            b.z0_re = Tensor::constant({bs, n}, std::move(a));
            b.z0_im = Tensor::constant({bs, n}, std::move(c));
            b.zm1_re = Tensor::constant({bs, n}, std::move(d));
            b.zm1_im = Tensor::constant({bs, n}, std::move(e));
            b.true_re = Tensor::constant({bs, n}, std::move(t1));
            b.true_im = Tensor::constant({bs, n}, std::move(t2));
            break;
        case Group::SO3:
            b.h_re = Tensor::constant({bs, 3 * n, 3 * n}, std::move(hre));
            b.r0 = Tensor::constant({bs, 3 * n, 3}, std::move(a));
            b.rm1 = Tensor::constant({bs, 3 * n, 3}, std::move(c));
            b.true_r = Tensor::constant({bs, 3 * n, 3}, std::move(t1));
            break;
    }
    if (data.task == Task::MraZ2) {
        std::vector<double> x, y;
        for (std::size_t idx : indices) {
            append(x, data.samples[idx].signal);
            append(y, data.samples[idx].observations.data());
        }
        b.x = Tensor::constant({bs, len}, std::move(x));
        b.y = Tensor::constant({bs, len, n}, std::move(y));
    } else if (data.task == Task::MraShift) {
        std::vector<double> xr, xi, yr, yi;
        for (std::size_t idx : indices) {
            const Sample& s = data.samples[idx];
            const Spectrum sx = dft(s.signal);
            append(xr, sx.re);
            append(xi, sx.im);
            for (std::size_t i = 0; i < n; ++i) {
                std::vector<double> col(len);
                for (std::size_t k = 0; k < len; ++k) col[k] = s.observations(k, i);
                const Spectrum sy = dft(col);
                append(yr, sy.re);
                append(yi, sy.im);
            }
        }
        b.x_re = Tensor::constant({bs, len}, std::move(xr));
        b.x_im = Tensor::constant({bs, len}, std::move(xi));
        b.y_re = Tensor::constant({bs, n, len}, std::move(yr));
        b.y_im = Tensor::constant({bs, n, len}, std::move(yi));
    }
    return b;
}

// ---------------------------------------------------------------------------
// Layers
// ---------------------------------------------------------------------------

namespace {

// H [B,N,N] times z [B,N] -> [B,N]
Tensor apply_h(const Tensor& h, const Tensor& z) {
    const std::size_t bs = z.dim(0), n = z.dim(1);
    return ad::reshape(ad::bmm(h, ad::reshape(z, {bs, n, 1})), {bs, n});
}

// Per-sample mean over the N entries of a [B,N] tensor -> [B,1].
Tensor row_mean(const Tensor& x) { return ad::scale(ad::sum_axis(x, 1), 1.0 / static_cast<double>(x.dim(1))); }

void check_iterate(const Tensor& h, const Tensor& z, const char* who) {
    if (z.rank() != 2 || h.rank() != 3 || h.dim(0) != z.dim(0) || h.dim(1) != z.dim(1) || h.dim(2) != z.dim(1))
        throw std::invalid_argument(std::string(who) + ": expected H [B,N,N] and iterates [B,N], got " +
                                    ad::shape_str(h.shape()) + " and " + ad::shape_str(z.shape()));
}

}  // namespace

Tensor layer_z2(UnrolledModel& model, std::size_t t, const Tensor& h, const Tensor& z, const Tensor& z_prev, Mode mode,
                HCounter* counter) {
    check_iterate(h, z, "layer_z2");
    if (z_prev.shape() != z.shape()) throw std::invalid_argument("layer_z2: z^(t-1) shape mismatch");
    const std::size_t bs = z.dim(0), n = z.dim(1);
    const double lam = model.lambda;
    const std::string p = model.prefix(t);

    Tensor hz = apply_h(h, z);
    if (counter) ++counter->products;
    Tensor phi = ad::reshape(mlp(model, p + ".phi", ad::reshape(z, {bs * n, 1}), true, mode), {bs, n});
    Tensor coef = ad::add_scalar(ad::scale(row_mean(ad::square(phi)), -lam * lam), lam * lam);
    Tensor c = ad::sub(ad::mul_scalar(ad::scale(hz, lam), model.params.get(p + ".theta0")), ad::mul_rows(z_prev, coef));
    return ad::reshape(mlp(model, p + ".f", ad::reshape(c, {bs * n, 1}), true, mode), {bs, n});
}

std::pair<Tensor, Tensor> layer_u1(UnrolledModel& model, std::size_t t, const Tensor& h_re, const Tensor& h_im,
                                   const Tensor& z_re, const Tensor& z_im, const Tensor& z_prev_re,
                                   const Tensor& z_prev_im, Mode mode, HCounter* counter) {
    check_iterate(h_re, z_re, "layer_u1");
    if (h_im.shape() != h_re.shape() || z_im.shape() != z_re.shape() || z_prev_re.shape() != z_re.shape() ||
        z_prev_im.shape() != z_re.shape())
        throw std::invalid_argument("layer_u1: real/imaginary shape mismatch");
    const std::size_t bs = z_re.dim(0), n = z_re.dim(1);
    const double lam = model.lambda;
    const std::string p = model.prefix(t);
    const Tensor& theta0 = model.params.get(p + ".theta0");

    // (H_r + i H_i)(z_r + i z_i)
    Tensor a = ad::sub(apply_h(h_re, z_re), apply_h(h_im, z_im));
    Tensor b = ad::add(apply_h(h_re, z_im), apply_h(h_im, z_re));
    if (counter) ++counter->products;
    Tensor coef = ad::add_scalar(ad::scale(row_mean(ad::add(ad::square(z_re), ad::square(z_im))), -lam * lam), lam * lam);
    Tensor cr = ad::sub(ad::mul_scalar(ad::scale(a, lam), theta0), ad::mul_rows(z_prev_re, coef));
    Tensor ci = ad::sub(ad::mul_scalar(ad::scale(b, lam), theta0), ad::mul_rows(z_prev_im, coef));
    Tensor mag = ad::sqrt(ad::add(ad::square(cr), ad::square(ci)));
    Tensor fm = ad::reshape(mlp(model, p + ".f", ad::reshape(mag, {bs * n, 1}), false, mode), {bs, n});
    constexpr double kEps = 1e-12;
    return {ad::mul(ad::div_clamped(cr, mag, kEps), fm), ad::mul(ad::div_clamped(ci, mag, kEps), fm)};
}

Tensor layer_so3(UnrolledModel& model, std::size_t t, const Tensor& h, const Tensor& r, const Tensor& r_prev, Mode mode,
                 HCounter* counter) {
    if (r.rank() != 3 || r.dim(2) != 3 || r.dim(1) % 3 != 0 || h.rank() != 3 || h.dim(0) != r.dim(0) ||
        h.dim(1) != r.dim(1) || h.dim(2) != r.dim(1) || r_prev.shape() != r.shape())
        throw std::invalid_argument("layer_so3: expected H [B,3N,3N] and iterates [B,3N,3], got " +
                                    ad::shape_str(h.shape()) + " and " + ad::shape_str(r.shape()));
    const std::size_t bs = r.dim(0), n = r.dim(1) / 3;
    const std::string p = model.prefix(t);
    Tensor hr = ad::reshape(ad::bmm(h, r), {bs * n, 9});
    if (counter) ++counter->products;
    Tensor fo = mlp(model, p + ".f", hr, true, mode);
    Tensor po = mlp(model, p + ".phi", ad::reshape(r_prev, {bs * n, 9}), true, mode);
    return ad::reshape(ad::add(fo, po), {bs, 3 * n, 3});
}

Tensor babylonian_project(const Tensor& blocks, std::size_t iters) {
    if (blocks.rank() != 2 || blocks.dim(1) != 9)
        throw std::invalid_argument("babylonian_project: expected [K,9] blocks, got " + ad::shape_str(blocks.shape()));
    const std::size_t k = blocks.dim(0);
    for (std::size_t i = 0; i < k; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < 9; ++j) s += blocks.value()[9 * i + j] * blocks.value()[9 * i + j];
        if (!(s > 0.0)) throw SolverError(SolverError::Kind::DegenerateBlock, "babylonian_project: zero block " + std::to_string(i));
    }
    Tensor norm = ad::sqrt(ad::sum_axis(ad::square(blocks), 1));
    Tensor q = ad::reshape(ad::div_rows(blocks, norm), {k, 3, 3});
    for (std::size_t it = 0; it < iters; ++it) {
        Tensor nn = ad::bmm(q, q, true, false);
        Tensor p = ad::scale(ad::bmm(q, nn), 0.5);
        q = ad::add(ad::sub(ad::scale(q, 2.0), ad::scale(p, 3.0)), ad::bmm(p, nn));
    }
    return ad::reshape(q, {k, 9});
}

ForwardResult forward(UnrolledModel& model, const Batch& batch, Mode mode) {
    if (task_group(batch.task) != model.group)
        throw std::invalid_argument("forward: model group " + std::string(to_string(model.group)) +
                                    " does not match task " + std::string(to_string(batch.task)));
    ForwardResult out;
    HCounter counter;
    switch (model.group) {
        case Group::Z2: {
            Tensor z = batch.z0, zp = batch.zm1;
            for (std::size_t t = 0; t < model.depth; ++t) {
                Tensor next = layer_z2(model, t, batch.h_re, z, zp, mode, &counter);
                zp = z;
                z = next;
            }
            out.z = z;
            break;
        }
        case Group::U1: {
            Tensor zr = batch.z0_re, zi = batch.z0_im, pr = batch.zm1_re, pi = batch.zm1_im;
            for (std::size_t t = 0; t < model.depth; ++t) {
                auto [nr, ni] = layer_u1(model, t, batch.h_re, batch.h_im, zr, zi, pr, pi, mode, &counter);
                pr = zr;
                pi = zi;
                zr = nr;
                zi = ni;
            }
            out.z_re = zr;
            out.z_im = zi;
            break;
        }
        case Group::SO3: {
            Tensor r = batch.r0, rp = batch.rm1;
            for (std::size_t t = 0; t < model.depth; ++t) {
                Tensor next = layer_so3(model, t, batch.h_re, r, rp, mode, &counter);
                rp = r;
                r = next;
            }
            const std::size_t bs = r.dim(0), n = r.dim(1) / 3;
            out.r = ad::reshape(babylonian_project(ad::reshape(r, {bs * n, 9}), model.babylonian_iters), {bs, 3 * n, 3});
            break;
        }
    }
    out.h_products = counter.products;
    return out;
}

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

namespace {

void same(const Tensor& a, const Tensor& b, const char* who) {
    if (a.shape() != b.shape())
        throw std::invalid_argument(std::string(who) + ": shape mismatch " + ad::shape_str(a.shape()) + " vs " +
                                    ad::shape_str(b.shape()));
}

}  // namespace

Tensor loss_align_z2(const Tensor& z, const Tensor& zhat) {
    same(z, zhat, "loss_align_z2");
    if (z.rank() != 2) throw std::invalid_argument("loss_align_z2: expected [M,N]");
    const double nm = static_cast<double>(z.size());
    Tensor overlap = ad::abs(ad::sum_axis(ad::mul(z, zhat), 1));
    return ad::add_scalar(ad::scale(ad::sum_all(overlap), -1.0 / nm), 1.0);
}

Tensor loss_align_u1(const Tensor& z_re, const Tensor& z_im, const Tensor& zhat_re, const Tensor& zhat_im) {
    same(z_re, zhat_re, "loss_align_u1");
    same(z_im, zhat_im, "loss_align_u1");
    same(z_re, z_im, "loss_align_u1");
    if (z_re.rank() != 2) throw std::invalid_argument("loss_align_u1: expected [M,N]");
    const double nm = static_cast<double>(z_re.size());
    Tensor re = ad::sum_axis(ad::add(ad::mul(z_re, zhat_re), ad::mul(z_im, zhat_im)), 1);
    Tensor im = ad::sum_axis(ad::sub(ad::mul(z_re, zhat_im), ad::mul(z_im, zhat_re)), 1);
    Tensor mag = ad::sqrt(ad::add(ad::square(re), ad::square(im)));
    return ad::add_scalar(ad::scale(ad::sum_all(mag), -1.0 / nm), 1.0);
}

Tensor loss_align_so3(const Tensor& r, const Tensor& rhat) {
    same(r, rhat, "loss_align_so3");
    if (r.rank() != 3 || r.dim(2) != 3 || r.dim(1) % 3 != 0)
        throw std::invalid_argument("loss_align_so3: expected [M,3N,3]");
    const double m = static_cast<double>(r.dim(0));
    const double n = static_cast<double>(r.dim(1) / 3);
    Tensor g = ad::bmm(r, rhat, true, false);
    return ad::add_scalar(ad::scale(ad::sum_all(ad::square(g)), -1.0 / (3.0 * n * n * m)), 1.0);
}

Tensor loss_rec_z2(const Tensor& x, const Tensor& y, const Tensor& zhat) {
    if (x.rank() != 2 || y.rank() != 3 || zhat.rank() != 2 || y.dim(0) != x.dim(0) || y.dim(1) != x.dim(1) ||
        zhat.dim(0) != x.dim(0) || zhat.dim(1) != y.dim(2))
        throw std::invalid_argument("loss_rec_z2: expected x [M,L], Y [M,L,N], zhat [M,N]");
    const std::size_t m = x.dim(0), len = x.dim(1), n = y.dim(2);
    Tensor xhat = ad::scale(ad::reshape(ad::bmm(y, ad::reshape(zhat, {m, n, 1})), {m, len}), 1.0 / static_cast<double>(n));
    std::vector<double> sign(m);
    for (std::size_t i = 0; i < m; ++i) {
        double plus = 0.0, minus = 0.0;
        for (std::size_t k = 0; k < len; ++k) {
            const double xv = x.value()[i * len + k], hv = xhat.value()[i * len + k];
            plus += (xv - hv) * (xv - hv);
            minus += (xv + hv) * (xv + hv);
        }
        sign[i] = plus <= minus ? 1.0 : -1.0;
    }
    Tensor diff = ad::sub(x, ad::mul_rows(xhat, Tensor::constant({m, 1}, std::move(sign))));
    return ad::scale(ad::sum_all(ad::square(diff)), 1.0 / static_cast<double>(len * m));
}

Tensor loss_rec_zl(const Tensor& x_re, const Tensor& x_im, const Tensor& y_re, const Tensor& y_im,
                   const Tensor& zhat_re, const Tensor& zhat_im, std::size_t grid_factor) {
    if (grid_factor == 0) throw std::invalid_argument("loss_rec_zl: grid factor must be >= 1");
    same(x_re, x_im, "loss_rec_zl");
    same(y_re, y_im, "loss_rec_zl");
    same(zhat_re, zhat_im, "loss_rec_zl");
    if (x_re.rank() != 2 || y_re.rank() != 3 || zhat_re.rank() != 2 || y_re.dim(0) != x_re.dim(0) ||
        y_re.dim(2) != x_re.dim(1) || zhat_re.dim(0) != x_re.dim(0) || zhat_re.dim(1) != y_re.dim(1))
        throw std::invalid_argument("loss_rec_zl: expected X [M,L], Y [M,N,L], zhat [M,N]");
    const std::size_t m = x_re.dim(0), len = x_re.dim(1), n = y_re.dim(1);

    std::vector<double> freq(len);
    for (std::size_t k = 0; k < len; ++k) freq[k] = signed_frequency(k, len);
    Tensor angle = ad::reshape(ad::atan2(zhat_im, zhat_re), {m * n, 1});
    Tensor theta = ad::matmul(angle, Tensor::constant({1, len}, freq));
    Tensor c = ad::cos(theta), s = ad::sin(theta);
    Tensor yr = ad::reshape(y_re, {m * n, len}), yi = ad::reshape(y_im, {m * n, len});
    Tensor ar = ad::sub(ad::mul(c, yr), ad::mul(s, yi));
    Tensor ai = ad::add(ad::mul(c, yi), ad::mul(s, yr));
    const Tensor ones = Tensor::constant({m, 1, n}, std::vector<double>(m * n, 1.0 / static_cast<double>(n)));
    Tensor xr = ad::reshape(ad::bmm(ones, ad::reshape(ar, {m, n, len})), {m, len});
    Tensor xi = ad::reshape(ad::bmm(ones, ad::reshape(ai, {m, n, len})), {m, len});

    // Grid search for the global phase (no gradient through the choice).
    const std::size_t points = len * grid_factor;
    std::vector<double> table_c(points * len), table_s(points * len);
    for (std::size_t j = 1; j <= points; ++j) {
        const double phi = 2.0 * std::numbers::pi * static_cast<double>(j) / static_cast<double>(points);
        for (std::size_t k = 0; k < len; ++k) {
            table_c[(j - 1) * len + k] = std::cos(freq[k] * phi);
            table_s[(j - 1) * len + k] = std::sin(freq[k] * phi);
        }
    }
    std::vector<double> cos_k(m * len), sin_k(m * len);
    for (std::size_t i = 0; i < m; ++i) {
        double best = std::numeric_limits<double>::infinity();
        std::size_t best_j = points;
        for (std::size_t j = 1; j <= points; ++j) {
            double d = 0.0;
            for (std::size_t k = 0; k < len; ++k) {
                const double ck = table_c[(j - 1) * len + k], sk = table_s[(j - 1) * len + k];
                const double hr = xr.value()[i * len + k], hi = xi.value()[i * len + k];
                const double rr = x_re.value()[i * len + k] - (ck * hr - sk * hi);
                const double ri = x_im.value()[i * len + k] - (ck * hi + sk * hr);
                d += rr * rr + ri * ri;
            }
            if (d < best) {
                best = d;
                best_j = j;
            }
        }
        std::copy_n(table_c.begin() + static_cast<std::ptrdiff_t>((best_j - 1) * len), len, cos_k.begin() + static_cast<std::ptrdiff_t>(i * len));
        std::copy_n(table_s.begin() + static_cast<std::ptrdiff_t>((best_j - 1) * len), len, sin_k.begin() + static_cast<std::ptrdiff_t>(i * len));
    }
    const Tensor ck = Tensor::constant({m, len}, std::move(cos_k));
    const Tensor sk = Tensor::constant({m, len}, std::move(sin_k));
    Tensor dr = ad::sub(x_re, ad::sub(ad::mul(ck, xr), ad::mul(sk, xi)));
    Tensor di = ad::sub(x_im, ad::add(ad::mul(ck, xi), ad::mul(sk, xr)));
    Tensor total = ad::add(ad::sum_all(ad::square(dr)), ad::sum_all(ad::square(di)));
    return ad::scale(total, 1.0 / static_cast<double>(len * len * m));
}

Tensor task_loss(LossKind kind, const Batch& batch, const ForwardResult& out, std::size_t grid_factor) {
    if (kind == LossKind::Alignment) {
        switch (task_group(batch.task)) {
            case Group::Z2: return loss_align_z2(batch.true_z, out.z);
            case Group::U1: return loss_align_u1(batch.true_re, batch.true_im, out.z_re, out.z_im);
            case Group::SO3: return loss_align_so3(batch.true_r, out.r);
        }
    }
    if (batch.task == Task::MraZ2) return loss_rec_z2(batch.x, batch.y, out.z);
    if (batch.task == Task::MraShift)
        return loss_rec_zl(batch.x_re, batch.x_im, batch.y_re, batch.y_im, out.z_re, out.z_im, grid_factor);
    throw std::invalid_argument("reconstruction loss requires an MRA task, got " + std::string(to_string(batch.task)));
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

namespace {

double mean_of(const std::vector<double>& v) {
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

Dataset subset(const Dataset& data, std::size_t begin, std::size_t end) {
    Dataset d;
    d.task = data.task;
    d.n = data.n;
    d.length = data.length;
    d.lambda = data.lambda;
    d.samples.assign(data.samples.begin() + static_cast<std::ptrdiff_t>(begin),
                     data.samples.begin() + static_cast<std::ptrdiff_t>(end));
    return d;
}

}  // namespace

TrainHistory train(UnrolledModel& model, const Dataset& data, const TrainConfig& cfg, const EpochCallback& on_epoch) {
    if (task_group(data.task) != model.group)
        throw std::invalid_argument("train: model group does not match the dataset task");
    if (cfg.batch_size == 0) throw std::invalid_argument("train: batch size must be >= 1");
    if (!(cfg.learning_rate > 0.0)) throw std::invalid_argument("train: learning rate must be > 0");
    if (cfg.validation_fraction < 0.0 || cfg.validation_fraction >= 1.0)
        throw std::invalid_argument("train: validation fraction must be in [0, 1)");

    const std::size_t total = data.size();
    const auto n_val = static_cast<std::size_t>(std::floor(cfg.validation_fraction * static_cast<double>(total)));
    const std::size_t n_train = total - n_val;
    if (n_train == 0 && cfg.epochs > 0) throw std::invalid_argument("train: no training samples");
    const Dataset validation = subset(data, n_train, total);

    ad::AdamConfig adam;
    adam.learning_rate = cfg.learning_rate;
    adam.batch_size = cfg.batch_size;

    TrainHistory history;
    std::vector<std::size_t> order(n_train);
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto start = std::chrono::steady_clock::now();
        std::iota(order.begin(), order.end(), 0);
        Rng shuffle = Rng::stream(splitmix64_mix(cfg.seed ^ 0x53485546464C45ULL), epoch);
        for (std::size_t i = n_train; i > 1; --i) std::swap(order[i - 1], order[shuffle.below(i)]);

        double loss_sum = 0.0;
        std::size_t batch_index = 0;
        for (std::size_t off = 0; off < n_train; off += cfg.batch_size, ++batch_index) {
            const std::size_t end = std::min(n_train, off + cfg.batch_size);
            const std::span<const std::size_t> idx(order.data() + off, end - off);
            Batch batch = make_batch(data, idx);
            model.params.zero_grad();
            ForwardResult out = forward(model, batch, Mode::Train);
            Tensor loss = task_loss(cfg.loss, batch, out, cfg.grid_factor);
            const double value = loss.item();
            if (!std::isfinite(value))
                throw SolverError(SolverError::Kind::Divergence, "non-finite loss at epoch " + std::to_string(epoch) +
                                                                     ", batch " + std::to_string(batch_index));
            ad::backward(loss);
            try {
                ad::adam_step(model.params, adam);
            } catch (const SolverError& e) {
                throw SolverError(e.kind(), "epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch_index) +
                                                ": " + e.what());
            }
            loss_sum += value * static_cast<double>(end - off);
        }

        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = loss_sum / static_cast<double>(n_train);
        rec.validation_error = validation.size() ? mean_of(alignment_errors(validation, predict(model, validation)))
                                                 : std::numeric_limits<double>::quiet_NaN();
        rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        history.epochs.push_back(rec);
        if (on_epoch) on_epoch(rec);
    }
    return history;
}

TrainHistory train(UnrolledModel& model, const TrainConfig& cfg, const EpochCallback& on_epoch) {
    const Dataset data = make_dataset(cfg.task, cfg.n, cfg.lambda, cfg.samples, cfg.seed, cfg.length);
    return train(model, data, cfg, on_epoch);
}

// ---------------------------------------------------------------------------
// Inference
// ---------------------------------------------------------------------------

Predictions predict(UnrolledModel& model, const Dataset& data, std::size_t batch_size) {
    if (batch_size == 0) throw std::invalid_argument("predict: batch size must be >= 1");
    ad::NoGradGuard no_grad;
    Predictions pred;
    const std::size_t n = data.n;
    std::vector<std::size_t> idx;
    for (std::size_t off = 0; off < data.size(); off += batch_size) {
        const std::size_t end = std::min(data.size(), off + batch_size);
        idx.resize(end - off);
        std::iota(idx.begin(), idx.end(), off);
        const Batch batch = make_batch(data, idx);
        const ForwardResult out = forward(model, batch, Mode::Eval);
        for (std::size_t b = 0; b < idx.size(); ++b) {
            switch (model.group) {
                case Group::Z2:
                    pred.signs.push_back(sign_projection(out.z.value().subspan(b * n, n)));
                    break;
                case Group::U1: {
                    ComplexVector z(n);
                    for (std::size_t i = 0; i < n; ++i) {
                        const double re = out.z_re.value()[b * n + i], im = out.z_im.value()[b * n + i];
                        const double mag = std::hypot(re, im);
                        // a zero entry maps to 1, matching sign(0) = +1
                        z.set(i, mag > 1e-300 ? std::complex<double>(re / mag, im / mag) : std::complex<double>(1.0, 0.0));
                    }
                    pred.phases.push_back(std::move(z));
                    break;
                }
                case Group::SO3: {
                    Matrix r(3 * n, 3);
                    std::copy_n(out.r.value().begin() + static_cast<std::ptrdiff_t>(b * 9 * n), 9 * n, r.data().begin());
                    pred.rotations.push_back(block_project_so3(r));
                    break;
                }
            }
        }
    }
    return pred;
}

std::vector<double> alignment_errors(const Dataset& data, const Predictions& pred) {
    std::vector<double> errs(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        const Sample& s = data.samples[i];
        switch (task_group(data.task)) {
            case Group::Z2: errs[i] = err_z2(s.signs, pred.signs.at(i)); break;
            case Group::U1: errs[i] = err_u1(s.phases, pred.phases.at(i)); break;
            case Group::SO3: errs[i] = err_so3(s.rotations, pred.rotations.at(i)); break;
        }
    }
    return errs;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

namespace {

constexpr char kModelMagic[4] = {'U', 'N', 'S', 'Y'};

}  // namespace

void save_model(const UnrolledModel& model, std::ostream& out) {
    detail::BinaryWriter w(out);
    w.bytes(kModelMagic, 4);
    w.u32(kModelFormatVersion);
    w.u8(static_cast<std::uint8_t>(model.group));
    w.u64(model.depth);
    w.f64(model.lambda);
    w.u8(model.weight_sharing ? 1 : 0);
    w.u64(model.hidden_f);
    w.u64(model.hidden_phi);
    w.u64(model.babylonian_iters);
    w.u64(model.params.step());
    const auto& names = model.params.names();
    w.u64(names.size());
    for (const auto& name : names) {
        const Tensor& t = model.params.get(name);
        w.str(name);
        w.u64(t.rank());
        for (auto d : t.shape()) w.u64(d);
        w.f64s(std::vector<double>(t.value().begin(), t.value().end()));
    }
    w.u64(model.batchnorm.size());
    for (const auto& [name, st] : model.batchnorm) {
        w.str(name);
        w.f64(st.momentum);
        w.f64(st.eps);
        w.f64s(st.running_mean);
        w.f64s(st.running_var);
    }
    if (!out) throw std::runtime_error("save_model: write failed");
}

UnrolledModel load_model(std::istream& in) {
    detail::BinaryReader r(in);
    char magic[4];
    r.bytes(magic, 4);
    if (!std::equal(magic, magic + 4, kModelMagic)) throw FormatError("not a model file (bad magic bytes)");
    const auto version = r.u32();
    if (version != kModelFormatVersion)
        throw FormatError("unsupported model format version " + std::to_string(version) + " (this build reads " +
                          std::to_string(kModelFormatVersion) + ")");
    const auto g = r.u8();
    if (g > 2) throw FormatError("bad group tag in model file");
    const auto group = static_cast<Group>(g);
    const auto depth = r.u64();
    const double lambda = r.f64();
    const bool sharing = r.u8() != 0;
    if (depth == 0 || depth > 100000 || !(lambda > 0.0)) throw FormatError("corrupt model header");

    UnrolledModel m = build_model(group, depth, lambda, sharing, 0);
    if (r.u64() != m.hidden_f || r.u64() != m.hidden_phi) throw FormatError("model hidden sizes do not match the architecture");
    m.babylonian_iters = r.u64();
    if (m.babylonian_iters > 1000) throw FormatError("corrupt model header");
    const auto step = r.u64();
    const auto count = r.u64();
    if (count != m.params.names().size()) throw FormatError("parameter count does not match the architecture");
    for (std::uint64_t i = 0; i < count; ++i) {
        const std::string name = r.str();
        if (!m.params.contains(name)) throw FormatError("unexpected parameter '" + name + "'");
        Tensor& t = m.params.get(name);
        const auto rank = r.u64();
        if (rank != t.rank()) throw FormatError("rank mismatch for '" + name + "'");
        for (std::size_t d = 0; d < rank; ++d)
            if (r.u64() != t.dim(d)) throw FormatError("shape mismatch for '" + name + "'");
        const auto values = r.f64s(t.size());
        if (values.size() != t.size()) throw FormatError("size mismatch for '" + name + "'");
        std::copy(values.begin(), values.end(), t.mutable_value().begin());
    }
    const auto bn_count = r.u64();
    if (bn_count != m.batchnorm.size()) throw FormatError("batchnorm count does not match the architecture");
    for (std::uint64_t i = 0; i < bn_count; ++i) {
        const std::string name = r.str();
        auto it = m.batchnorm.find(name);
        if (it == m.batchnorm.end()) throw FormatError("unexpected batchnorm '" + name + "'");
        auto& st = it->second;
        st.momentum = r.f64();
        st.eps = r.f64();
        auto mean = r.f64s(st.running_mean.size());
        auto var = r.f64s(st.running_var.size());
        if (mean.size() != st.running_mean.size() || var.size() != st.running_var.size())
            throw FormatError("batchnorm width mismatch for '" + name + "'");
        st.running_mean = std::move(mean);
        st.running_var = std::move(var);
    }
    m.params.set_step(step);
    return m;
}

void save_model(const UnrolledModel& model, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
    save_model(model, out);
}

UnrolledModel load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open '" + path + "'");
    return load_model(in);
}

}  // namespace unrollsync
