#include <cmath>
#include <numbers>
#include <sstream>

#include "doctest.h"
#include "unrollsync/synthetic.hpp"

using namespace unrollsync;

namespace {

bool exactly_symmetric(const Matrix& m) {
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = 0; j < m.cols(); ++j)
            if (m(i, j) != m(j, i)) return false;
    return true;
}

bool exactly_hermitian(const MeasurementMatrix& h) {
    for (std::size_t i = 0; i < h.re.rows(); ++i)
        for (std::size_t j = 0; j < h.re.cols(); ++j)
            if (h.re(i, j) != h.re(j, i) || h.im(i, j) != -h.im(j, i)) return false;
    return true;
}

}  // namespace

TEST_CASE("generators are deterministic under a fixed seed") {
    for (Group g : {Group::Z2, Group::U1, Group::SO3}) {
        Rng a = Rng::stream(99, 4), b = Rng::stream(99, 4);
        CHECK(generate(g, 12, 1.3, a) == generate(g, 12, 1.3, b));
    }
    Rng a = Rng::stream(5, 0), b = Rng::stream(5, 0);
    CHECK(gen_mra_z2(21, 10, 0.4, a) == gen_mra_z2(21, 10, 0.4, b));
    Rng c = Rng::stream(5, 1), d = Rng::stream(5, 1);
    CHECK(gen_mra_shift(21, 10, 0.7, c) == gen_mra_shift(21, 10, 0.7, d));
    Rng e = Rng::stream(5, 2);
    CHECK_FALSE(gen_mra_shift(21, 10, 0.7, e) == gen_mra_shift(21, 10, 0.7, c));
}

TEST_CASE("noise-free Z2 instance is the rank-one limit") {
    Rng rng(1);
    auto inst = z2_from_truth({1, -1}, 2.0, rng, 0.0);
    CHECK(inst.h.re(0, 0) == 1.0);
    CHECK(inst.h.re(0, 1) == -1.0);
    CHECK(inst.h.re(1, 0) == -1.0);
    CHECK(inst.h.re(1, 1) == 1.0);
}

TEST_CASE("Z2 ground truth and symmetry") {
    for (std::uint64_t s = 0; s < 20; ++s) {
        Rng rng = Rng::stream(3, s);
        auto inst = gen_z2(15, 1.5, rng);
        for (double z : inst.signs) CHECK((z == 1.0 || z == -1.0));
        CHECK(exactly_symmetric(inst.h.re));
        CHECK_FALSE(inst.h.is_complex());
    }
}

TEST_CASE("Z2 signal moment matches lambda / N") {
    const std::size_t n = 20;
    const double lambda = 1.5;
    double sum = 0.0, sq = 0.0;
    std::size_t count = 0;
    for (std::uint64_t s = 0; s < 10000; ++s) {
        Rng rng = Rng::stream(17, s);
        auto inst = gen_z2(n, lambda, rng);
        // one off-diagonal pair per seed keeps the draws independent
        const double v = inst.h.re(0, 1) * inst.signs[0] * inst.signs[1];
        sum += v;
        sq += v * v;
        ++count;
    }
    const double mean = sum / count;
    const double sd = std::sqrt(sq / count - mean * mean);
    CHECK(std::abs(mean - lambda / n) < 3.0 * sd / 100.0);
}

TEST_CASE("U1 instances are Hermitian with unit-modulus truth") {
    Rng rng(8);
    auto inst = gen_u1(12, 1.2, rng);
    for (std::size_t i = 0; i < 12; ++i) CHECK(std::abs(std::abs(inst.phases[i]) - 1.0) < 1e-12);
    CHECK(exactly_hermitian(inst.h));
    for (std::size_t i = 0; i < 12; ++i) CHECK(inst.h.im(i, i) == 0.0);

    Rng clean(9);
    auto nf = gen_u1(2, 1.6, clean, 0.0);
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t j = 0; j < 2; ++j) {
            const auto expect = 0.8 * nf.phases[i] * std::conj(nf.phases[j]);
            CHECK(std::abs(nf.h.re(i, j) - expect.real()) < 1e-14);
            CHECK(std::abs(nf.h.im(i, j) - expect.imag()) < 1e-14);
        }
    // rank one: determinant of the 2x2 Hermitian matrix vanishes
    const std::complex<double> det = nf.h.as_complex()(0, 0) * nf.h.as_complex()(1, 1) -
                                      nf.h.as_complex()(0, 1) * nf.h.as_complex()(1, 0);
    CHECK(std::abs(det) < 1e-14);
}

TEST_CASE("U1 off-diagonal noise has unit second moment") {
    const std::size_t n = 20;
    double sum = 0.0, sq = 0.0;
    std::size_t count = 0;
    for (std::uint64_t s = 0; s < 530; ++s) {
        Rng rng = Rng::stream(21, s);
        auto inst = gen_u1(n, 1.0, rng);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) {
                const auto signal = (1.0 / n) * inst.phases[i] * std::conj(inst.phases[j]);
                const auto w = std::sqrt(double(n)) * (inst.h.as_complex()(i, j) - signal);
                const double m = std::norm(w);
                sum += m;
                sq += m * m;
                ++count;
            }
    }
    CHECK(count >= 100000);
    const double mean = sum / count;
    const double sd = std::sqrt(sq / count - mean * mean);
    CHECK(std::abs(mean - 1.0) < 3.0 * sd / std::sqrt(double(count)));
}

TEST_CASE("SO3 instances") {
    for (std::uint64_t s = 0; s < 10; ++s) {
        Rng rng = Rng::stream(4, s);
        auto inst = gen_so3(10, 1.5, rng);
        CHECK(exactly_symmetric(inst.h.re));
        for (std::size_t i = 0; i < 10; ++i) {
            Mat3 r = get_block(inst.rotations, i);
            CHECK(std::abs(mat3_det(r) - 1.0) < 1e-10);
            Mat3 g = mat3_mul(mat3_transpose(r), r);
            Mat3 id = mat3_identity();
            for (int k = 0; k < 9; ++k) CHECK(std::abs(g[k] - id[k]) < 1e-10);
        }
    }
    Rng rng(6);
    const std::size_t n = 5;
    const double lambda = 2.0;
    auto nf = gen_so3(n, lambda, rng, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            Mat3 b;
            for (int a = 0; a < 3; ++a)
                for (int c = 0; c < 3; ++c) b[3 * a + c] = nf.h.re(3 * i + a, 3 * j + c) * n / lambda;
            Mat3 g = mat3_mul(mat3_transpose(b), b);
            Mat3 id = mat3_identity();
            for (int k = 0; k < 9; ++k) CHECK(std::abs(g[k] - id[k]) < 1e-10);
        }
}

TEST_CASE("MRA generators: noise-free columns and shift convention") {
    Rng rng(1);
    auto b = mra_from_truth(MraGroup::Z2, {0.5, -1.0, 2.0}, {1, -1}, 0.3, rng, 0.0);
    CHECK(b.column(0) == std::vector<double>{0.5, -1.0, 2.0});
    CHECK(b.column(1) == std::vector<double>{-0.5, 1.0, -2.0});

    auto s = mra_from_truth(MraGroup::Shift, {1, 2, 3, 4}, {1, 0}, 1.0, rng, 0.0);
    CHECK(s.column(0) == std::vector<double>{4, 1, 2, 3});
    CHECK(s.column(1) == std::vector<double>{1, 2, 3, 4});
    CHECK(s.observations.rows() == 4);
    CHECK(s.observations.cols() == 2);

    Rng r2(2);
    auto g = gen_mra_shift(21, 50, 0.7, r2);
    for (int e : g.elements) CHECK((e >= 0 && e < 21));
}

TEST_CASE("MRA Z2 noise variance is 1 / lambda^2") {
    const double lambda = 0.4;
    const std::size_t len = 21;
    Rng truth(3);
    std::vector<double> x(len);
    for (auto& v : x) v = truth.normal();
    double sum = 0.0, sq = 0.0;
    std::size_t count = 0;
    for (std::uint64_t s = 0; s < 10000; ++s) {
        Rng rng = Rng::stream(31, s);
        auto b = mra_from_truth(MraGroup::Z2, x, {1}, lambda, rng);
        double var = 0.0;
        for (std::size_t i = 0; i < len; ++i) var += (b.observations(i, 0) - x[i]) * (b.observations(i, 0) - x[i]);
        var /= len;
        sum += var;
        sq += var * var;
        ++count;
    }
    const double mean = sum / count;
    const double sd = std::sqrt(sq / count - mean * mean);
    CHECK(std::abs(mean - 1.0 / (lambda * lambda)) < 3.0 * sd / std::sqrt(double(count)));
}

TEST_CASE("Z2 ratio matrix") {
    std::vector<double> x(21, 0.0);
    x[0] = 0.6;
    x[1] = 0.8;
    Rng rng(1);
    auto b = mra_from_truth(MraGroup::Z2, x, {1, -1, -1, 1}, 0.5, rng, 0.0);
    auto h = ratios_from_mra_z2(b, 0.5);
    const std::vector<double> s{1, -1, -1, 1};
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) CHECK(std::abs(h.re(i, j) - 0.125 * s[i] * s[j]) < 1e-15);

    Rng noisy(2);
    auto g = gen_mra_z2(21, 20, 0.4, noisy);
    auto hn = ratios_from_mra_z2(g, 0.4);
    CHECK(exactly_symmetric(hn.re));
    for (std::size_t i = 0; i < 20; ++i) CHECK(hn.re(i, i) > 0.0);
}

TEST_CASE("Z2 ratio errors are correlated as predicted") {
    const double lambda = 0.4;
    const std::size_t len = 21, n = 20;
    Rng truth(77);
    std::vector<double> x(len);
    for (auto& v : x) v = truth.normal();
    std::vector<int> signs(n);
    for (std::size_t i = 0; i < n; ++i) signs[i] = (i % 3 == 0) ? -1 : 1;
    double xx = 0.0;
    for (double v : x) xx += v * v;

    // E[w_01 w_02] = s_1 s_2 E[(x^T eps_0)^2] / N^2 = s_1 s_2 ||x||^2 / N^2
    const double expect = signs[1] * signs[2] * xx / double(n * n);
    double sum = 0.0, sq = 0.0;
    const std::size_t draws = 40000;
    for (std::uint64_t s = 0; s < draws; ++s) {
        Rng rng = Rng::stream(101, s);
        auto b = mra_from_truth(MraGroup::Z2, x, signs, lambda, rng);
        auto h = ratios_from_mra_z2(b, lambda);
        auto w = [&](int i, int j) { return h.re(i, j) - lambda / n * signs[i] * signs[j] * xx; };
        const double p = w(0, 1) * w(0, 2);
        sum += p;
        sq += p * p;
    }
    const double mean = sum / draws;
    const double se = std::sqrt((sq / draws - mean * mean) / draws);
    CHECK(std::abs(mean - expect) < 4.0 * se);
    CHECK(std::abs(mean) > 4.0 * se);  // clearly nonzero
}

TEST_CASE("relative shift of noise-free copies") {
    Rng rng(12);
    std::vector<double> x(21);
    for (auto& v : x) v = rng.normal();
    auto yi = circular_shift(x, 3);
    auto yj = circular_shift(x, 1);
    CHECK(relative_shift(dft(yi), dft(yj)) == 2);
    CHECK(relative_shift(dft(yj), dft(yi)) == 19);
    CHECK(relative_shift(dft(yi), dft(yi)) == 0);
}

TEST_CASE("shift ratio matrix") {
    Rng rng(13);
    auto b = gen_mra_shift(21, 15, 0.7, rng);
    auto h = ratios_from_mra_shift(b, 0.7);
    CHECK(exactly_hermitian(h));
    const double mag = 0.7 / 15;
    for (std::size_t i = 0; i < 15; ++i) {
        CHECK(h.re(i, i) == doctest::Approx(mag));
        CHECK(h.im(i, i) == 0.0);
        for (std::size_t j = 0; j < 15; ++j) CHECK(std::abs(std::hypot(h.re(i, j), h.im(i, j)) - mag) < 1e-15);
    }

    // noise-free: H_ij = (lambda/N) exp(i 2 pi (s_i - s_j)/L)
    Rng r2(14);
    std::vector<double> x(21);
    for (auto& v : x) v = r2.normal();
    auto nf = mra_from_truth(MraGroup::Shift, x, {3, 1, 7}, 1.0, r2, 0.0);
    auto hn = ratios_from_mra_shift(nf, 1.0);
    const double ang = 2.0 * std::numbers::pi * 2.0 / 21.0;
    CHECK(std::abs(hn.re(0, 1) - std::cos(ang) / 3.0) < 1e-14);
    CHECK(std::abs(hn.im(0, 1) - std::sin(ang) / 3.0) < 1e-14);
}

TEST_CASE("dataset containers round trip and reject corrupt input") {
    std::vector<SyncInstance> items;
    for (Group g : {Group::Z2, Group::U1, Group::SO3}) {
        Rng rng(static_cast<std::uint64_t>(g) + 1);
        items.push_back(generate(g, 6, 1.1, rng));
    }
    std::stringstream ss;
    write_sync_instances(ss, items);
    auto back = read_sync_instances(ss);
    CHECK(back == items);

    std::vector<MraBatch> batches;
    Rng rng(2);
    batches.push_back(gen_mra_z2(21, 5, 0.4, rng));
    batches.push_back(gen_mra_shift(21, 5, 0.7, rng));
    std::stringstream ms;
    write_mra_batches(ms, batches);
    CHECK(read_mra_batches(ms) == batches);

    std::stringstream bad("NOPE1234");
    CHECK_THROWS(read_sync_instances(bad));
    std::string truncated = ss.str().substr(0, ss.str().size() / 2);
    std::stringstream tr(truncated);
    CHECK_THROWS(read_sync_instances(tr));
    std::stringstream wrong_kind(ms.str());
    CHECK_THROWS(read_sync_instances(wrong_kind));
}
