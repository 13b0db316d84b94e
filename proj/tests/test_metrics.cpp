#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "emdreg/metrics.hpp"
#include "emdreg/phantom.hpp"
#include "emdreg/rng.hpp"

using namespace emdreg;

namespace {

DisplacementField random_field(int w, int h, std::uint64_t seed, double amp) {
    DisplacementField f(w, h);
    auto rng = make_rng(seed);
    std::uniform_real_distribution<double> u(-amp, amp);
    for (size_t i = 0; i < f.dx.size(); ++i) {
        f.dx[i] = u(rng);
        f.dy[i] = u(rng);
    }
    return f;
}

} // namespace

TEST_CASE("t_rmse oracle values") {
    DisplacementField zero(10, 8);
    CHECK(t_rmse(zero, zero) == 0.0);

    DisplacementField est(10, 8);
    for (size_t i = 0; i < est.dx.size(); ++i) {
        est.dx[i] = 3.0;
        est.dy[i] = 4.0;
    }
    CHECK(t_rmse(zero, est) == 5.0);

    DisplacementField half(10, 8);
    for (size_t i = 0; i < half.dx.size(); ++i) half.dx[i] = (i % 2 == 0) ? 1.0 : 0.0;
    CHECK(t_rmse(zero, half) == Catch::Approx(std::sqrt(0.5)).epsilon(1e-15));

    DisplacementField wrong(9, 8);
    CHECK_THROWS_AS(t_rmse(zero, wrong), std::invalid_argument);
}

TEST_CASE("t_rmse is a metric on fields") {
    DisplacementField a = random_field(7, 6, 1, 3.0);
    DisplacementField b = random_field(7, 6, 2, 3.0);
    DisplacementField c = random_field(7, 6, 3, 3.0);
    CHECK(t_rmse(a, a) == 0.0);
    CHECK(t_rmse(a, b) == Catch::Approx(t_rmse(b, a)).epsilon(1e-15));
    CHECK(t_rmse(a, b) > 0.0);
    CHECK(t_rmse(a, c) <= t_rmse(a, b) + t_rmse(b, c) + 1e-12);
}

TEST_CASE("rmse values scale linearly with the difference") {
    DisplacementField zero(6, 5);
    DisplacementField d = random_field(6, 5, 4, 2.0);
    double base = t_rmse(zero, d);
    DisplacementField d3 = d;
    for (size_t i = 0; i < d.dx.size(); ++i) {
        d3.dx[i] *= 3.0;
        d3.dy[i] *= 3.0;
    }
    CHECK(t_rmse(zero, d3) == Catch::Approx(3.0 * base).epsilon(1e-12));

    ImageGrid ra(6, 5, 0.0), rb(6, 5, 0.1);
    double ib = i_rmse(ra, rb);
    ImageGrid rb3(6, 5, 0.3);
    CHECK(i_rmse(ra, rb3) == Catch::Approx(3.0 * ib).epsilon(1e-12));
}

TEST_CASE("i_rmse oracle values and symmetry") {
    ImageGrid a = make_phantom(20, 16, 5);
    CHECK(i_rmse(a, a) == 0.0);

    ImageGrid zero(20, 16, 0.0), tenth(20, 16, 0.1);
    CHECK(i_rmse(zero, tenth) == Catch::Approx(0.1).epsilon(1e-12));

    ImageGrid b = make_phantom(20, 16, 6);
    CHECK(i_rmse(a, b) == Catch::Approx(i_rmse(b, a)).epsilon(1e-15));
}

TEST_CASE("convergence is strict at 4 px") {
    CHECK(converged(3.9));
    CHECK_FALSE(converged(4.0));
    CHECK(converged(0.0));
    CHECK_FALSE(converged(4.0001));
}

TEST_CASE("score_trial combines the pieces consistently") {
    DisplacementField t = random_field(12, 10, 7, 2.0);
    DisplacementField e = random_field(12, 10, 8, 2.0);
    ImageGrid a = make_phantom(12, 10, 1), b = make_phantom(12, 10, 2);
    TrialScore s = score_trial(t, e, a, b);
    CHECK(s.t_rmse == t_rmse(t, e));
    CHECK(s.i_rmse == i_rmse(a, b));
    CHECK(s.converged == (s.t_rmse < 4.0));
}
