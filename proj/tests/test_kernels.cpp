#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "lskde/kernels.hpp"
#include "lskde/rng.hpp"
#include "support.hpp"

using namespace lskde;

namespace {
const BaseKernel1D& tri() {
    static const BaseKernel1D k = triangular_kernel();
    return k;
}
const BaseKernel1D& biw() {
    static const BaseKernel1D k = biweight_kernel();
    return k;
}
} // namespace

TEST_CASE("catalog base kernels are valid and named") {
    CHECK(tri().eval(0.0) == doctest::Approx(2.0));
    CHECK(biw().eval(0.0) == doctest::Approx(15.0 / 8.0));
    CHECK(tri().eval(0.51) == 0.0);
    CHECK(biw().eval(-0.6) == 0.0);
    CHECK(base_kernel_by_name("triangular").name == "triangular");
    CHECK_THROWS_AS(base_kernel_by_name("gaussian"), std::invalid_argument);
}

TEST_CASE("order-1 construction reproduces the base kernel") {
    const HigherOrderKernel1D u1 = build_higher_order(tri(), 1);
    for (double y : {-0.6, -0.31, 0.0, 0.12, 0.49, 0.77}) {
        CHECK(u1(y) == doctest::Approx(tri().eval(y)).epsilon(1e-15));
    }
    CHECK(u1.radius() == doctest::Approx(0.5));
    CHECK_THROWS_AS(build_higher_order(tri(), 0), std::invalid_argument);
}

TEST_CASE("order-2 construction is 2 u(y) - u(y/2) / 2") {
    const HigherOrderKernel1D u2 = build_higher_order(tri(), 2);
    for (double y : {-0.9, -0.5, -0.2, 0.0, 0.3, 0.6, 0.99}) {
        CHECK(u2(y) ==
              doctest::Approx(2.0 * tri().eval(y) - 0.5 * tri().eval(y / 2.0)).epsilon(1e-15));
    }
    CHECK(u2.radius() == doctest::Approx(1.0));
    // First moment vanishes; confirmed against the Simpson oracle.
    const double m1_oracle =
        testsupport::integrate_oracle([&](double y) { return u2(y) * y; }, -1.0, 1.0);
    CHECK(std::fabs(m1_oracle) < 1e-10);
    CHECK(std::fabs(u2.moment(1)) < 1e-8);
}

TEST_CASE("order-2 absolute mass exceeds one") {
    // The order-2 construction takes negative values, so its L1 norm is
    // strictly larger than its integral; for the triangular base it is 11/7.
    const HigherOrderKernel1D u2 = build_higher_order(tri(), 2);
    CHECK(u2.norm(1.0) == doctest::Approx(11.0 / 7.0).epsilon(1e-9));
    CHECK(u2.norm(1.0) > 1.0);
}

TEST_CASE("moments: unit mass always, vanishing up to order - 1") {
    for (const auto* base : {&tri(), &biw()}) {
        for (int l = 1; l <= 4; ++l) {
            const HigherOrderKernel1D ul = build_higher_order(*base, l);
            CHECK(ul.moment(0) == doctest::Approx(1.0).epsilon(1e-8));
            for (int j = 1; j < l; ++j) {
                CHECK(std::fabs(ul.moment(j)) < 1e-8);
            }
        }
    }
    // Order 2 does not annihilate the second moment.
    const HigherOrderKernel1D u2 = build_higher_order(tri(), 2);
    const double m2_oracle =
        testsupport::integrate_oracle([&](double y) { return u2(y) * y * y; }, -1.0, 1.0);
    CHECK(std::fabs(m2_oracle) > 1e-3);
    CHECK(u2.moment(2) == doctest::Approx(m2_oracle).epsilon(1e-8));
    // Order 3 does.
    const HigherOrderKernel1D u3 = build_higher_order(tri(), 3);
    CHECK(std::fabs(u3.moment(2)) < 1e-8);
}

TEST_CASE("scaled evaluation") {
    const ProductKernel K1(build_higher_order(tri(), 1), 1);
    const double t0 = 0.0;
    CHECK(scaled_eval(K1, Bandwidth({0.5}), std::span<const double>(&t0, 1)) ==
          doctest::Approx(4.0));
    const double t1 = 0.37;
    CHECK(scaled_eval(K1, Bandwidth({1.0}), std::span<const double>(&t1, 1)) ==
          doctest::Approx(K1(std::span<const double>(&t1, 1))));

    const ProductKernel K2(build_higher_order(tri(), 1), 2);
    const std::vector<double> origin{0.0, 0.0};
    CHECK(scaled_eval(K2, Bandwidth({0.5, 0.25}), origin) ==
          doctest::Approx(8.0 * K2.value_at_zero()));
    CHECK_THROWS_AS(Bandwidth({0.5, -1.0}), std::invalid_argument);
}

TEST_CASE("support bookkeeping is exact") {
    const ProductKernel K(build_higher_order(tri(), 2), 1);
    const ScaledKernel Kh(K, Bandwidth({0.3}));
    for (double x : {0.3000001, -0.3000001, 0.5, -5.0}) {
        CHECK(Kh.eval(std::span<const double>(&x, 1)) == 0.0);
    }
}

TEST_CASE("norm scaling law against numerical integration") {
    const ProductKernel K(build_higher_order(tri(), 2), 1);
    Philox4x64 rng(2024);
    for (int round = 0; round < 20; ++round) {
        const double h = 0.05 + 0.95 * rng.next_double();
        const double s = 1.0 + 3.0 * rng.next_double();
        const ScaledKernel Kh(K, Bandwidth({h}));
        const double numeric = std::pow(
            testsupport::integrate_oracle(
                [&](double x) {
                    return std::pow(std::fabs(Kh.eval(std::span<const double>(&x, 1))), s);
                },
                -K.radius() * h, K.radius() * h, 1e-13),
            1.0 / s);
        CHECK(Kh.norm(s) == doctest::Approx(numeric).epsilon(1e-6));
    }
}

TEST_CASE("scaled norms: closed form value and L1 invariance") {
    const ProductKernel K(build_higher_order(tri(), 1), 1);
    const ScaledKernel Kq(K, Bandwidth({0.25}));
    CHECK(Kq.norm(2.0) == doctest::Approx(std::sqrt(4.0 / 3.0) / std::sqrt(0.25)).epsilon(1e-10));
    CHECK(Kq.norm(2.0) == doctest::Approx(2.309401).epsilon(1e-6));
    for (double h : {0.1, 0.33, 0.8}) {
        CHECK(ScaledKernel(K, Bandwidth({h})).norm(1.0) ==
              doctest::Approx(K.norm(1.0)).epsilon(1e-12));
    }
}

TEST_CASE("lipschitz bound holds empirically") {
    for (int l : {1, 2, 3}) {
        const HigherOrderKernel1D ul = build_higher_order(tri(), l);
        const double bound = ul.lipschitz_bound();
        double worst = 0.0;
        const double step = 1e-4;
        for (double x = -ul.radius(); x < ul.radius(); x += step) {
            worst = std::max(worst, std::fabs(ul(x + step) - ul(x)) / step);
        }
        CHECK(worst <= bound + 1e-9);
    }
}

TEST_CASE("tensor factorization of product norms") {
    const HigherOrderKernel1D u2 = build_higher_order(tri(), 2);
    const ProductKernel K2(u2, 2);
    for (double s : {1.0, 1.7, 2.0, 3.0}) {
        // 2-d integral of |K|^s as an iterated 1-d oracle.
        const double axis = testsupport::integrate_oracle(
            [&](double y) { return std::pow(std::fabs(u2(y)), s); }, -1.0, 1.0, 1e-12);
        CHECK(std::pow(K2.norm(s), s) == doctest::Approx(axis * axis).epsilon(1e-8));
    }
    const std::vector<double> zero{0.0, 0.0};
    CHECK(K2(zero) == doctest::Approx(u2(0.0) * u2(0.0)));
}

TEST_CASE("pairwise convolution integrates to one and matches (K*K)(0)") {
    const ProductKernel K(build_higher_order(tri(), 1), 1);
    const ConvKernel conv = convolve_pair(K, Bandwidth({1.0}), Bandwidth({1.0}), 2048);
    CHECK(conv.integral() == doctest::Approx(1.0).epsilon(1e-6));
    // For symmetric K, (K*K)(0) = int K^2 = 4/3.
    const double at_zero_oracle = testsupport::integrate_oracle(
        [&](double x) {
            const double v = K(std::span<const double>(&x, 1));
            return v * v;
        },
        -0.5, 0.5);
    const double zero = 0.0;
    CHECK(at_zero_oracle == doctest::Approx(4.0 / 3.0).epsilon(1e-10));
    CHECK(conv.eval(std::span<const double>(&zero, 1)) ==
          doctest::Approx(4.0 / 3.0).epsilon(1e-5));
}

TEST_CASE("pairwise convolution is symmetric in (h, eta)") {
    const ProductKernel K(build_higher_order(tri(), 2), 2);
    const Bandwidth h({0.4, 0.15});
    const Bandwidth eta({0.1, 0.6});
    const ConvKernel a = convolve_pair(K, h, eta);
    const ConvKernel b = convolve_pair(K, eta, h);
    Philox4x64 rng(5);
    for (int i = 0; i < 200; ++i) {
        const std::vector<double> t{1.2 * (2.0 * rng.next_double() - 1.0),
                                    1.0 * (2.0 * rng.next_double() - 1.0)};
        CHECK(a.eval(t) == doctest::Approx(b.eval(t)).epsilon(1e-10));
    }
    CHECK(a.integral() == doctest::Approx(1.0).epsilon(1e-3));
}

TEST_CASE("young bound for convolved norms") {
    const ProductKernel K(build_higher_order(tri(), 1), 1);
    Philox4x64 rng(99);
    for (int round = 0; round < 10; ++round) {
        const double h = 0.05 + 0.9 * rng.next_double();
        const double e = 0.05 + 0.9 * rng.next_double();
        const double s = 1.0 + 2.5 * rng.next_double();
        const ConvKernel conv = convolve_pair(K, Bandwidth({h}), Bandwidth({e}), 256);
        const double lhs = kernel_norm(conv, s);
        const double rhs = K.norm(1.0) * std::min(kernel_norm(ScaledKernel(K, Bandwidth({h})), s),
                                                  kernel_norm(ScaledKernel(K, Bandwidth({e})), s));
        CHECK(lhs <= rhs * (1.0 + 1e-6));
    }
}

TEST_CASE("convolve_pair validates input") {
    const ProductKernel K(build_higher_order(tri(), 1), 1);
    CHECK_THROWS_AS(convolve_pair(K, Bandwidth({0.5, 0.5}), Bandwidth({0.5, 0.5})),
                    std::invalid_argument);
    CHECK_THROWS_AS(convolve_pair(K, Bandwidth({0.5}), Bandwidth({0.5}), 2),
                    std::invalid_argument);
}
