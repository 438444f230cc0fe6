// Acceptance suite: one PASS/FAIL line per criterion. Exit status is the number
// of failed criteria. `acceptance 6 7 8` runs a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <complex>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numbers>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "../unit/gradcheck.hpp"
#include "unrollsync/harness.hpp"
#include "unrollsync/metrics.hpp"
#include "unrollsync/mra.hpp"

#ifndef UNROLLSYNC_CLI
#error "UNROLLSYNC_CLI must name the command-line tool"
#endif

using namespace unrollsync;
using ad::Tensor;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------------------
// 1, 2, 3, 5: SO(3) at lambda 1.5 on one batch of 10^4 instances
// ---------------------------------------------------------------------------

struct So3Bench {
    ResultRow spectral, ppm, unrolled;
    double total_seconds = 0.0;
};

const So3Bench& so3_bench() {
    static const So3Bench bench = [] {
        auto cfg = figure_configs("table1", Scale::Desk, 1).front();
        RunOptions opts;
        opts.quiet = false;
        opts.log = &std::cerr;
        const auto t0 = std::chrono::steady_clock::now();
        const auto rows = run_experiment(cfg, opts);
        So3Bench b;
        b.total_seconds = seconds_since(t0);
        for (const auto& r : rows) {
            if (r.algorithm == "spectral") b.spectral = r;
            if (r.algorithm == "ppm") b.ppm = r;
            if (r.algorithm == "unrolled") b.unrolled = r;
        }
        return b;
    }();
    return bench;
}

Outcome criterion1() {
    const auto& r = so3_bench().spectral;
    const double secs = r.wall_ms.value_or(1e300) / 1000.0;
    const bool ok = !r.failed && r.n_test >= 2000 && std::abs(r.error_mean - 0.439) <= 0.03 && secs <= 120.0;
    return {ok, "spectral mean error " + fmt("%.6f", r.error_mean) + " (target 0.439 +- 0.03) on " +
                    std::to_string(r.n_test) + " instances, " + fmt("%.1f", secs) + " s (limit 120 s)"};
}

Outcome criterion2() {
    const auto& b = so3_bench();
    const double secs = b.ppm.wall_ms.value_or(1e300) / 1000.0;
    const bool ok = !b.ppm.failed && std::abs(b.ppm.error_mean - 0.638) <= 0.04 && secs <= 300.0 &&
                    b.spectral.error_mean < b.ppm.error_mean;
    return {ok, "PPM(100) mean error " + fmt("%.6f", b.ppm.error_mean) + " (target 0.638 +- 0.04), " +
                    fmt("%.1f", secs) + " s (limit 300 s), spectral < PPM: " +
                    (b.spectral.error_mean < b.ppm.error_mean ? "yes" : "no")};
}

Outcome criterion3() {
    const auto& b = so3_bench();
    const double e = b.unrolled.error_mean;
    const bool ok = !b.unrolled.failed && e <= 0.35 && e < b.spectral.error_mean && e < b.ppm.error_mean &&
                    b.total_seconds <= 1800.0;
    return {ok, "unrolled depth 9 mean error " + fmt("%.6f", e) + " (limit 0.35; spectral " +
                    fmt("%.6f", b.spectral.error_mean) + ", PPM " + fmt("%.6f", b.ppm.error_mean) + "), train+eval " +
                    fmt("%.1f", b.total_seconds) + " s (limit 1800 s)"};
}

Outcome criterion5() {
    const auto& b = so3_bench();
    const double ut = *b.unrolled.wall_ms, pt = *b.ppm.wall_ms;
    const double per_layer = *b.unrolled.iter_ms, per_iter = *b.ppm.iter_ms;
    const double ratio = per_layer / per_iter;
    const bool ok = ut < pt && ratio <= 2.0 && ratio >= 0.5;
    return {ok, "total unrolled(9) " + fmt("%.2f", ut / 1000) + " s vs PPM(100) " + fmt("%.2f", pt / 1000) +
                    " s; per layer " + fmt("%.2f", per_layer) + " ms vs per iteration " + fmt("%.2f", per_iter) +
                    " ms (ratio " + fmt("%.2f", ratio) + ", allowed 0.5 to 2)"};
}

// ---------------------------------------------------------------------------
// 4: Z/2 ordering over 20 training seeds
// ---------------------------------------------------------------------------

Outcome criterion4() {
    ExperimentConfig cfg = figure_configs("fig2", Scale::Desk, 0).front();
    cfg.name = "z2_ordering";
    cfg.lambdas = {1.2, 1.5};
    cfg.depths = {9};
    cfg.solvers = {"amp", "ppm", "unrolled"};
    cfg.seeds.clear();
    for (std::uint64_t s = 1; s <= 20; ++s) cfg.seeds.push_back(s);
    RunOptions opts;
    opts.quiet = false;
    opts.log = &std::cerr;
    const auto rows = run_experiment(cfg, opts);
    // rows: lambda, depth, solver, seed
    bool ok = true;
    std::string detail;
    for (std::size_t li = 0; li < 2; ++li) {
        int good = 0;
        for (std::size_t si = 0; si < 20; ++si) {
            const auto& amp = rows[li * 60 + si];
            const auto& ppm = rows[li * 60 + 20 + si];
            const auto& unr = rows[li * 60 + 40 + si];
            if (!unr.failed && unr.error_mean < amp.error_mean && amp.error_mean < ppm.error_mean) ++good;
        }
        ok = ok && good >= 19;
        detail += (li ? ", " : "") + std::string("lambda ") + fmt("%.1f", cfg.lambdas[li]) + ": " +
                  std::to_string(good) + "/20 seeds with unrolled < AMP < PPM";
    }
    return {ok, detail + " (need 19/20 each)"};
}

// ---------------------------------------------------------------------------
// 6: gradients
// ---------------------------------------------------------------------------

Tensor random_param(ad::Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    std::vector<double> v(ad::numel(shape));
    for (auto& x : v) x = lo + (hi - lo) * rng.uniform();
    return Tensor::parameter(std::move(shape), std::move(v));
}

Tensor project(const Tensor& out, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<double> w(out.size());
    for (auto& x : w) x = rng.normal();
    return ad::sum_all(ad::mul(out, Tensor::constant(out.shape(), std::move(w))));
}

Outcome criterion6() {
    using Fn = std::function<Tensor(const std::vector<Tensor>&)>;
    Rng rng(601);
    std::vector<std::pair<std::string, double>> results;
    auto run = [&](const std::string& name, std::vector<Tensor> in, const Fn& f, double h = 1e-6) {
        results.emplace_back(name, gradcheck::check_directions(std::move(in), f, 10, rng, h));
    };
    auto away_from_zero = [](Tensor t) {
        for (auto& v : t.mutable_value())
            if (std::abs(v) < 0.05) v = 0.5;
        return t;
    };

    auto a = random_param({3, 4}, rng), b = random_param({4, 2}, rng);
    run("matmul", {a, b}, [](const auto& in) { return project(ad::matmul(in[0], in[1]), 1); });
    for (int ta = 0; ta < 2; ++ta)
        for (int tb = 0; tb < 2; ++tb) {
            auto x = random_param(ta ? ad::Shape{2, 4, 3} : ad::Shape{2, 3, 4}, rng);
            auto y = random_param(tb ? ad::Shape{2, 5, 4} : ad::Shape{2, 4, 5}, rng);
            run("bmm", {x, y}, [=](const auto& in) { return project(ad::bmm(in[0], in[1], ta != 0, tb != 0), 2); });
        }
    auto p = random_param({3, 3}, rng), q = random_param({3, 3}, rng);
    run("add", {p, q}, [](const auto& in) { return project(ad::add(in[0], in[1]), 3); });
    run("sub", {p, q}, [](const auto& in) { return project(ad::sub(in[0], in[1]), 4); });
    run("mul", {p, q}, [](const auto& in) { return project(ad::mul(in[0], in[1]), 5); });
    auto s = random_param({1}, rng);
    run("scale", {p}, [](const auto& in) { return project(ad::scale(in[0], -1.7), 6); });
    run("add_scalar", {p}, [](const auto& in) { return project(ad::add_scalar(in[0], 0.3), 7); });
    run("mul_scalar", {p, s}, [](const auto& in) { return project(ad::mul_scalar(in[0], in[1]), 8); });
    auto rows = random_param({4, 3}, rng), col = random_param({4, 1}, rng, 0.5, 2.0);
    run("mul_rows", {rows, col}, [](const auto& in) { return project(ad::mul_rows(in[0], in[1]), 9); });
    run("div_rows", {rows, col}, [](const auto& in) { return project(ad::div_rows(in[0], in[1]), 10); });
    auto num = random_param({6}, rng);
    auto den = Tensor::parameter({6}, {0.1, 0.2, 0.3, 0.8, 1.1, 1.5});
    run("div_clamped", {num, den}, [](const auto& in) { return project(ad::div_clamped(in[0], in[1], 0.5), 11); });
    auto x = away_from_zero(random_param({10}, rng, -2.0, 2.0));
    auto pos = random_param({10}, rng, 0.2, 3.0);
    auto y = away_from_zero(random_param({10}, rng, -2.0, 2.0));
    run("tanh", {x}, [](const auto& in) { return project(ad::tanh(in[0]), 12); });
    run("relu", {x}, [](const auto& in) { return project(ad::relu(in[0]), 13); });
    run("square", {x}, [](const auto& in) { return project(ad::square(in[0]), 14); });
    run("sqrt", {pos}, [](const auto& in) { return project(ad::sqrt(in[0]), 15); });
    run("abs", {x}, [](const auto& in) { return project(ad::abs(in[0]), 16); });
    run("cos", {x}, [](const auto& in) { return project(ad::cos(in[0]), 17); });
    run("sin", {x}, [](const auto& in) { return project(ad::sin(in[0]), 18); });
    run("atan2", {y, x}, [](const auto& in) { return project(ad::atan2(in[0], in[1]), 19); });
    auto m = random_param({3, 4}, rng), m2 = random_param({2, 4}, rng), m3 = random_param({3, 2}, rng);
    run("mean_all", {m}, [](const auto& in) { return ad::scale(ad::mean_all(in[0]), 3.0); });
    run("sum_all", {m}, [](const auto& in) { return ad::scale(ad::sum_all(in[0]), 0.7); });
    run("sum_axis0", {m}, [](const auto& in) { return project(ad::sum_axis(in[0], 0), 20); });
    run("sum_axis1", {m}, [](const auto& in) { return project(ad::sum_axis(in[0], 1), 21); });
    run("reshape", {m}, [](const auto& in) { return project(ad::reshape(in[0], {2, 6}), 22); });
    run("transpose", {m}, [](const auto& in) { return project(ad::transpose(in[0]), 23); });
    run("concat0", {m, m2}, [](const auto& in) { return project(ad::concat({in[0], in[1]}, 0), 24); });
    run("concat1", {m, m3}, [](const auto& in) { return project(ad::concat({in[0], in[1]}, 1), 25); });
    auto xin = random_param({6, 3}, rng), w = random_param({3, 4}, rng), bias = random_param({1, 4}, rng);
    run("dense", {xin, w, bias}, [](const auto& in) { return project(ad::dense(in[0], in[1], in[2]), 26); });
    auto gamma = random_param({1, 3}, rng, 0.5, 1.5), beta = random_param({1, 3}, rng);
    ad::BatchNormStats train_stats(3), eval_stats(3);
    eval_stats.running_mean = {0.1, -0.2, 0.3};
    eval_stats.running_var = {0.5, 1.5, 2.0};
    run("batchnorm train", {xin, gamma, beta}, [&](const auto& in) {
        return project(ad::batchnorm(in[0], in[1], in[2], train_stats, ad::Mode::Train), 27);
    });
    run("batchnorm eval", {xin, gamma, beta}, [&](const auto& in) {
        return project(ad::batchnorm(in[0], in[1], in[2], eval_stats, ad::Mode::Eval), 28);
    });
    {
        std::vector<double> blocks;
        for (int k = 0; k < 4; ++k) {
            const Mat3 r = random_rotation(rng);
            for (std::size_t i = 0; i < 9; ++i) blocks.push_back(r[i] * (1.0 + 0.2 * (i % 3)) + 0.1 * rng.normal());
        }
        auto bl = Tensor::parameter({4, 9}, blocks);
        run("babylonian_project", {bl}, [](const auto& in) { return project(babylonian_project(in[0], 4), 29); });
    }

    auto model_check = [&](Task task, LossKind loss, std::size_t depth) {
        auto data = make_dataset(task, 5, is_mra(task) ? 1.0 : 1.5, 3, 611, 7);
        auto model = build_model(task_group(task), depth, data.lambda, false, 612);
        std::vector<std::size_t> idx{0, 1, 2};
        const Batch batch = make_batch(data, idx);
        std::vector<Tensor> params;
        for (const auto& name : model.params.names()) params.push_back(model.params.get(name));
        run("model " + std::string(to_string(task)) + " " + std::string(to_string(loss)), params,
            [&](const auto&) { return task_loss(loss, batch, forward(model, batch, ad::Mode::Train)); });
    };
    model_check(Task::SyncZ2, LossKind::Alignment, 3);
    model_check(Task::SyncU1, LossKind::Alignment, 3);
    model_check(Task::SyncSO3, LossKind::Alignment, 3);
    model_check(Task::MraZ2, LossKind::Reconstruction, 3);
    model_check(Task::MraShift, LossKind::Reconstruction, 3);

    double worst = 0.0;
    std::string worst_name;
    for (const auto& [name, err] : results)
        if (!(err <= worst)) {
            worst = err;
            worst_name = name;
        }
    const bool ok = worst < 1e-4;
    return {ok, std::to_string(results.size()) + " checks x 10 directions, worst relative error " +
                    fmt("%.2e", worst) + " (" + worst_name + "), limit 1e-4"};
}

// ---------------------------------------------------------------------------
// 7: symmetries
// ---------------------------------------------------------------------------

Tensor random_tensor(ad::Shape shape, Rng& rng) {
    std::vector<double> v(ad::numel(shape));
    for (auto& x : v) x = rng.normal();
    return Tensor::constant(std::move(shape), std::move(v));
}

Tensor right_rotate(const Tensor& r, const Mat3& q) {
    std::vector<double> out(r.size());
    const auto v = r.value();
    for (std::size_t row = 0; row < r.size() / 3; ++row)
        for (std::size_t j = 0; j < 3; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < 3; ++k) s += v[3 * row + k] * q[3 * k + j];
            out[3 * row + j] = s;
        }
    return Tensor::constant(r.shape(), std::move(out));
}

std::pair<Tensor, Tensor> rotate_phase(const Tensor& re, const Tensor& im, double phi) {
    std::vector<double> r(re.size()), i(re.size());
    const double c = std::cos(phi), s = std::sin(phi);
    for (std::size_t k = 0; k < re.size(); ++k) {
        r[k] = c * re.value()[k] - s * im.value()[k];
        i[k] = s * re.value()[k] + c * im.value()[k];
    }
    return {Tensor::constant(re.shape(), std::move(r)), Tensor::constant(re.shape(), std::move(i))};
}

Matrix rotation_stack(std::size_t n, Rng& rng) {
    Matrix r(3 * n, 3);
    for (std::size_t i = 0; i < n; ++i) set_block(r, i, random_rotation(rng));
    return r;
}

Outcome criterion7() {
    Rng rng(701);
    const std::size_t n = 10, len = 9;
    double worst = 0.0;
    auto track = [&](double a, double b) { worst = std::max(worst, std::abs(a - b)); };

    // losses
    auto z = random_tensor({3, n}, rng), zhat = random_tensor({3, n}, rng);
    const double l_z2 = loss_align_z2(z, zhat).item();
    auto zr = random_tensor({3, n}, rng), zi = random_tensor({3, n}, rng);
    auto hr = random_tensor({3, n}, rng), hi = random_tensor({3, n}, rng);
    const double l_u1 = loss_align_u1(zr, zi, hr, hi).item();
    Matrix r3 = rotation_stack(n, rng), rh3 = rotation_stack(n, rng);
    auto r = Tensor::constant({1, 3 * n, 3}, r3.data()), rhat = Tensor::constant({1, 3 * n, 3}, rh3.data());
    const double l_so3 = loss_align_so3(r, rhat).item();
    auto mz = make_dataset(Task::MraZ2, n, 0.5, 3, 702, len);
    std::vector<std::size_t> idx{0, 1, 2};
    auto mb = make_batch(mz, idx);
    auto zm = random_tensor({3, n}, rng);
    const double l_rec2 = loss_rec_z2(mb.x, mb.y, zm).item();
    auto ms = make_dataset(Task::MraShift, n, 0.7, 3, 703, len);
    auto sb = make_batch(ms, idx);
    auto ar = random_tensor({3, n}, rng), ai = random_tensor({3, n}, rng);
    const double l_zl = loss_rec_zl(sb.x_re, sb.x_im, sb.y_re, sb.y_im, ar, ai).item();

    // metrics
    std::vector<double> s(n), shat(n);
    for (std::size_t i = 0; i < n; ++i) {
        s[i] = rng.uniform() < 0.5 ? -1.0 : 1.0;
        shat[i] = rng.uniform() < 0.5 ? -1.0 : 1.0;
    }
    const double e_z2 = err_z2(s, shat);
    ComplexVector u(n), uhat(n);
    for (std::size_t i = 0; i < n; ++i) {
        u.set(i, std::polar(1.0, 2 * std::numbers::pi * rng.uniform()));
        uhat.set(i, std::polar(1.0, 2 * std::numbers::pi * rng.uniform()));
    }
    const double e_u1 = err_u1(u, uhat);
    const double e_so3 = err_so3(r3, rh3);
    std::vector<double> x(len), xhat(len);
    for (std::size_t k = 0; k < len; ++k) {
        x[k] = rng.normal();
        xhat[k] = rng.normal();
    }
    const double e_rec2 = rec_err_z2(x, xhat);
    const Spectrum xs = dft(x);
    const double e_zl = rec_err_zl(xs, dft(xhat));

    for (int t = 0; t < 100; ++t) {
        // Z/2: the nontrivial element
        track(loss_align_z2(z, ad::scale(zhat, -1.0)).item(), l_z2);
        track(loss_rec_z2(mb.x, mb.y, ad::scale(zm, -1.0)).item(), l_rec2);
        std::vector<double> neg(shat);
        for (auto& v : neg) v = -v;
        track(err_z2(s, neg), e_z2);
        std::vector<double> xneg(xhat);
        for (auto& v : xneg) v = -v;
        track(rec_err_z2(x, xneg), e_rec2);

        // U(1)
        const double phi = 2 * std::numbers::pi * rng.uniform();
        auto [rr, ri] = rotate_phase(hr, hi, phi);
        track(loss_align_u1(zr, zi, rr, ri).item(), l_u1);
        ComplexVector urot(n);
        for (std::size_t i = 0; i < n; ++i) urot.set(i, uhat[i] * std::polar(1.0, phi));
        track(err_u1(u, urot), e_u1);

        // Z/L: grid phases (P = 10) and circular shifts
        const double grid_phi = 2 * std::numbers::pi * static_cast<double>(1 + rng.below(len * 10)) / (len * 10.0);
        auto [gr, gi] = rotate_phase(ar, ai, grid_phi);
        track(loss_rec_zl(sb.x_re, sb.x_im, sb.y_re, sb.y_im, gr, gi).item(), l_zl);
        track(rec_err_zl(xs, dft(circular_shift(xhat, static_cast<long>(rng.below(len))))), e_zl);

        // SO(3)
        const Mat3 q = random_rotation(rng);
        track(loss_align_so3(r, right_rotate(rhat, q)).item(), l_so3);
        Matrix rq(3 * n, 3);
        for (std::size_t i = 0; i < n; ++i) set_block(rq, i, mat3_mul(get_block(rh3, i), q));
        track(err_so3(r3, rq), e_so3);
    }
    return {worst < 1e-10, "5 losses and 5 metrics x 100 group elements, worst deviation " + fmt("%.2e", worst) +
                               " (limit 1e-10)"};
}

// ---------------------------------------------------------------------------
// 8: oracles
// ---------------------------------------------------------------------------

double quad(const Matrix& h, std::span<const double> z) {
    double s = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i)
        for (std::size_t j = 0; j < z.size(); ++j) s += z[i] * h(i, j) * z[j];
    return s;
}

// I_nu(x) by its power series in long double.
long double bessel_series(int nu, long double x) {
    long double term = 1.0L, sum = 0.0L;
    const long double half = x / 2.0L;
    for (int k = 1; k <= nu; ++k) term *= half / k;
    for (int m = 0; m < 400; ++m) {
        sum += term;
        term *= half * half / ((m + 1.0L) * (m + 1.0L + nu));
        if (term < sum * 1e-30L) break;
    }
    return sum;
}

Outcome criterion8() {
    std::vector<std::string> parts;
    bool ok = true;

    // (a) MLE by enumeration, N = 8, lambda = 2
    int hits = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        Rng rng = Rng::stream(801, seed);
        const auto inst = gen_z2(8, 2.0, rng);
        double best_enum = -1e300;
        for (unsigned mask = 0; mask < 256; ++mask) {
            std::vector<double> v(8);
            for (int i = 0; i < 8; ++i) v[i] = (mask >> i) & 1 ? -1.0 : 1.0;
            best_enum = std::max(best_enum, quad(inst.h.re, v));
        }
        double best_ppm = -1e300;
        for (int restart = 0; restart < 20; ++restart) {
            const auto init = make_init(Group::Z2, 8, rng);
            best_ppm = std::max(best_ppm, quad(inst.h.re, ppm_z2(inst.h.re, 100, init).estimate));
        }
        if (best_ppm >= best_enum - 1e-12 * std::abs(best_enum)) ++hits;
    }
    ok = ok && hits >= 90;
    parts.push_back("(a) MLE attained " + std::to_string(hits) + "/100 (need 90)");

    // (b) Babylonian vs SVD projection on 10^4 blocks with singular values in [1, 3]
    {
        Rng rng(802);
        const std::size_t count = 10000;
        std::vector<double> blocks(9 * count);
        std::vector<Mat3> exact(count);
        for (std::size_t b = 0; b < count; ++b) {
            const Mat3 u = random_rotation(rng), v = random_rotation(rng);
            Mat3 d{};
            for (std::size_t i = 0; i < 3; ++i) d[4 * i] = 1.0 + 2.0 * rng.uniform();
            const Mat3 a = mat3_mul(mat3_mul(u, d), mat3_transpose(v));
            std::copy(a.begin(), a.end(), blocks.begin() + static_cast<long>(9 * b));
            exact[b] = project_so3(a);
        }
        const Tensor q = babylonian_project(Tensor::constant({count, 9}, blocks), 4);
        double worst = 0.0;
        for (std::size_t b = 0; b < count; ++b) {
            double d2 = 0.0;
            for (std::size_t i = 0; i < 9; ++i) {
                const double d = q.value()[9 * b + i] - exact[b][i];
                d2 += d * d;
            }
            worst = std::max(worst, std::sqrt(d2));
        }
        ok = ok && worst < 1e-3;
        parts.push_back("(b) Babylonian vs SVD worst " + fmt("%.2e", worst) + " (limit 1e-3)");
    }

    // (c) DFT vs naive summation
    {
        Rng rng(803);
        double worst = 0.0;
        for (std::size_t len = 1; len <= 64; ++len) {
            std::vector<double> x(len);
            for (auto& v : x) v = rng.normal();
            const Spectrum s = dft(x);
            for (std::size_t k = 0; k < len; ++k) {
                std::complex<long double> acc = 0.0L;
                for (std::size_t j = 0; j < len; ++j) {
                    const long double ang = -2.0L * std::numbers::pi_v<long double> * static_cast<long double>(j * k % len) /
                                            static_cast<long double>(len);
                    acc += std::complex<long double>(std::cos(ang), std::sin(ang)) * static_cast<long double>(x[j]);
                }
                worst = std::max(worst, static_cast<double>(std::abs(std::complex<long double>(s[k]) - acc)));
            }
        }
        ok = ok && worst < 1e-10;
        parts.push_back("(c) DFT worst " + fmt("%.2e", worst) + " (limit 1e-10)");
    }

    // (d) bessel_ratio vs series
    {
        double worst = 0.0;
        for (double t : {0.1, 0.5, 1.0, 2.0, 5.0, 10.0}) {
            const long double expect = bessel_series(1, 2.0L * t) / bessel_series(0, 2.0L * t);
            worst = std::max(worst, static_cast<double>(std::abs((bessel_ratio(t) - expect) / expect)));
        }
        ok = ok && worst < 1e-10;
        parts.push_back("(d) bessel_ratio worst relative " + fmt("%.2e", worst) + " (limit 1e-10)");
    }

    std::string detail;
    for (std::size_t i = 0; i < parts.size(); ++i) detail += (i ? "; " : "") + parts[i];
    return {ok, detail};
}

// ---------------------------------------------------------------------------
// 9: exact recovery
// ---------------------------------------------------------------------------

Outcome criterion9() {
    Rng rng(901);
    const std::size_t n = 20;
    double worst = 0.0;
    std::string worst_name;
    auto track = [&](const std::string& name, double e) {
        if (!(e <= worst)) {
            worst = e;
            worst_name = name;
        }
    };
    for (int t = 0; t < 20; ++t) {
        const auto z2 = gen_z2(n, 1.0, rng, 0.0);
        const auto i2 = make_init(Group::Z2, n, rng);
        track("pm z2", err_z2(z2.signs, pm_z2(z2.h.re, 1, i2).estimate));
        track("ppm z2", err_z2(z2.signs, ppm_z2(z2.h.re, 1, i2).estimate));
        const auto z2amp = gen_z2(n, 3.0, rng, 0.0);
        track("amp z2", err_z2(z2amp.signs, amp_z2(z2amp.h.re, 3.0, 20, i2).estimate));

        const auto u1 = gen_u1(n, 1.0, rng, 0.0);
        const auto iu = make_init(Group::U1, n, rng);
        const ComplexMatrix hu = u1.h.as_complex();
        track("pm u1", err_u1(u1.phases, pm_u1(hu, 1, iu).estimate));
        track("ppm u1", err_u1(u1.phases, ppm_u1(hu, 1, iu).estimate));
        const auto u1amp = gen_u1(n, 3.0, rng, 0.0);
        track("amp u1", err_u1(u1amp.phases, amp_u1(u1amp.h.as_complex(), 3.0, 20, iu).estimate));

        const auto so3 = gen_so3(n, 1.0, rng, 0.0);
        const auto is = make_init(Group::SO3, n, rng);
        track("spectral so3", err_so3(so3.rotations, spectral_so3(so3.h.re)));
        track("ppm so3", err_so3(so3.rotations, ppm_so3(so3.h.re, 1, is).estimate));

        for (auto kind : {SolverKind::PM, SolverKind::PPM, SolverKind::AMP}) {
            SolverParams p;
            p.kind = kind;
            p.iterations = kind == SolverKind::AMP ? 20 : 1;
            p.round_shifts = true;
            const double lambda = kind == SolverKind::AMP ? 3.0 : 1.0;
            const auto bz = gen_mra_z2(21, n, lambda, rng, 0.0);
            track("mra z2 " + std::string(to_string(kind)),
                  run_pipeline(bz, p, make_init(Group::Z2, n, rng)).reconstruction_error);
            const auto bs = gen_mra_shift(21, n, lambda, rng, 0.0);
            track("mra shift " + std::string(to_string(kind)),
                  run_pipeline(bs, p, make_init(Group::U1, n, rng)).reconstruction_error);
        }
    }
    return {worst < 1e-8, "PM/PPM 1 iteration, spectral, AMP 20 iterations (lambda 3), MRA pipelines: worst error " +
                              fmt("%.2e", worst) + " (" + worst_name + "), limit 1e-8"};
}

// ---------------------------------------------------------------------------
// 10: byte-identical reproduction
// ---------------------------------------------------------------------------

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Outcome criterion10() {
    const fs::path root = fs::temp_directory_path() / "unrollsync_acceptance_repro";
    fs::remove_all(root);
    std::vector<fs::path> dirs{root / "a", root / "b"};
    for (const auto& d : dirs) {
        fs::create_directories(d);
        const std::string cmd = "cd " + d.string() + " && " + UNROLLSYNC_CLI +
                                " reproduce fig2 --scale desk --seed 7 --threads 1 --quiet";
        if (std::system(cmd.c_str()) != 0) return {false, "reproduce exited with an error in " + d.string()};
    }
    std::size_t files = 0;
    for (const char* name : {"fig2_lambda1.2.csv", "fig2_lambda1.5.csv", "fig2_lambda2.csv"}) {
        const std::string a = slurp(dirs[0] / name), b = slurp(dirs[1] / name);
        if (a.empty()) return {false, std::string(name) + " missing"};
        if (a != b) return {false, std::string(name) + " differs between runs"};
        ++files;
    }
    return {true, std::to_string(files) + " CSVs byte-identical across two runs"};
}

}  // namespace

int main(int argc, char** argv) {
    std::set<int> wanted;
    for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));
    const std::vector<std::pair<int, std::function<Outcome()>>> criteria{
        {1, criterion1}, {2, criterion2}, {3, criterion3}, {4, criterion4}, {5, criterion5},
        {6, criterion6}, {7, criterion7}, {8, criterion8}, {9, criterion9}, {10, criterion10}};
    int failed = 0;
    for (const auto& [id, run] : criteria) {
        if (!wanted.empty() && !wanted.contains(id)) continue;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        if (!o.pass) ++failed;
        std::printf("criterion %d: %s | %s | %.1f s\n", id, o.pass ? "PASS" : "FAIL", o.detail.c_str(),
                    seconds_since(t0));
        std::fflush(stdout);
    }
    return failed;
}
