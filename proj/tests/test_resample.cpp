#include "doctest.h"

#include "pyramid/moments.hpp"
#include "pyramid/resample.hpp"

#include <cmath>

using namespace pyramid;

namespace {

const double kS = 1.0 / std::sqrt(2.0);

Tensor random_tensor(const Grid& g, std::uint64_t seed) {
    RngStream rng(seed);
    return gaussian_tensor(g, rng);
}

std::vector<double> d2_lo() {
    const double r3 = std::sqrt(3.0), d = 4.0 * std::sqrt(2.0);
    return {(1 + r3) / d, (3 + r3) / d, (3 - r3) / d, (1 - r3) / d};
}

}  // namespace

TEST_CASE("Haar omega per axis count") {
    CHECK(OrthoResampler::haar(AxisSet::parse("HW")).omega() == doctest::Approx(2.0).epsilon(1e-15));
    CHECK(OrthoResampler::haar(AxisSet::all()).omega() == doctest::Approx(2.0 * std::sqrt(2.0)).epsilon(1e-15));
    CHECK(OrthoResampler::haar(AxisSet::parse("w")).omega() == doctest::Approx(std::sqrt(2.0)));
    CHECK_THROWS(OrthoResampler::haar(AxisSet{}));
    CHECK_THROWS(AxisSet::parse("TX"));
}

TEST_CASE("Haar filters through the generic constructor behave identically") {
    const auto a = OrthoResampler::haar(AxisSet::all());
    const auto b = OrthoResampler::from_filters({kS, kS}, {kS, -kS}, AxisSet::all());
    const Tensor x = random_tensor(Grid{4, 4, 4, 2}, 1);
    CHECK(max_abs_diff(down(a, x), down(b, x)) == 0.0);
    CHECK(b.omega() == a.omega());
}

TEST_CASE("Daubechies-2 bank is accepted with omega = sqrt2^|axes|") {
    const auto lo = d2_lo();
    double rowsum = 0.0;
    for (double v : lo) rowsum += v;
    CHECK(rowsum == doctest::Approx(std::sqrt(2.0)).epsilon(1e-14));
    const auto r = OrthoResampler::daubechies2(AxisSet::parse("HW"));
    CHECK(r.omega() == doctest::Approx(rowsum * rowsum).epsilon(1e-14));
    CHECK(r.filter_length() == 4);
}

TEST_CASE("filter bank validation") {
    SUBCASE("non-orthogonal banks are rejected with the error size") {
        try {
            OrthoResampler::from_filters({kS, kS}, {kS, kS}, AxisSet::parse("W"));
            FAIL("expected rejection");
        } catch (const std::invalid_argument& e) {
            CHECK(std::string(e.what()).find("max |W^T W - I|") != std::string::npos);
        }
        auto lo = d2_lo();
        std::vector<double> hi = {lo[3], lo[2], lo[1], -lo[0]};  // sign flip on one tap
        CHECK_THROWS_AS(OrthoResampler::from_filters(lo, hi, AxisSet::parse("W")), std::invalid_argument);
    }
    SUBCASE("the lazy split (1,0)/(0,1) is orthogonal and accepted") {
        const auto r = OrthoResampler::from_filters({1.0, 0.0}, {0.0, 1.0}, AxisSet::parse("W"));
        CHECK(r.omega() == 1.0);
        // Its sign-broken variant (1,0)/(1,0) collides both bands.
        CHECK_THROWS(OrthoResampler::from_filters({1.0, 0.0}, {1.0, 0.0}, AxisSet::parse("W")));
    }
    SUBCASE("shape errors") {
        CHECK_THROWS(OrthoResampler::from_filters({kS, kS}, {kS, -kS, 0.0}, AxisSet::parse("W")));
        CHECK_THROWS(OrthoResampler::from_filters({1.0}, {1.0}, AxisSet::parse("W")));
        CHECK_THROWS(OrthoResampler::from_filters({-kS, -kS}, {kS, -kS}, AxisSet::parse("W")));
    }
}

TEST_CASE("down on constants and 1-D pairs") {
    for (const auto& r : {OrthoResampler::haar(AxisSet::all()), OrthoResampler::daubechies2(AxisSet::all())}) {
        const Tensor c(Grid{4, 8, 8, 2}, 3.75);
        const Tensor d = down(r, c);
        CHECK(d.grid() == Grid{2, 4, 4, 2});
        for (std::size_t i = 0; i < d.size(); ++i) CHECK(d[i] == doctest::Approx(3.75).epsilon(1e-12));
        const Tensor u = up(r, d);
        for (std::size_t i = 0; i < u.size(); ++i) CHECK(u[i] == doctest::Approx(3.75).epsilon(1e-12));
    }
    const auto h = OrthoResampler::haar(AxisSet::parse("W"));
    Tensor x(Grid{1, 1, 2, 1});
    x[0] = 1.0;
    x[1] = 3.0;
    const Tensor d = down(h, x);
    REQUIRE(d.size() == 1);
    CHECK(d[0] == doctest::Approx(2.0).epsilon(1e-15));
    const Tensor u = up(h, d);
    CHECK(u[0] == doctest::Approx(2.0).epsilon(1e-15));
    CHECK(u[1] == doctest::Approx(2.0).epsilon(1e-15));
}

TEST_CASE("Haar down is 2x2x2 average pooling, up is replication") {
    const auto r = OrthoResampler::haar(AxisSet::all());
    const Tensor x = random_tensor(Grid{4, 4, 6, 2}, 5);
    const Tensor d = down(r, x);
    const Tensor u = up(r, d);
    for (int t = 0; t < 2; ++t)
        for (int h = 0; h < 2; ++h)
            for (int w = 0; w < 3; ++w)
                for (int c = 0; c < 2; ++c) {
                    double avg = 0.0;
                    for (int a = 0; a < 2; ++a)
                        for (int b = 0; b < 2; ++b)
                            for (int e = 0; e < 2; ++e) avg += x.at(2 * t + a, 2 * h + b, 2 * w + e, c);
                    avg /= 8.0;
                    CHECK(d.at(t, h, w, c) == doctest::Approx(avg).epsilon(1e-13));
                    for (int a = 0; a < 2; ++a)
                        for (int b = 0; b < 2; ++b)
                            for (int e = 0; e < 2; ++e)
                                CHECK(u.at(2 * t + a, 2 * h + b, 2 * w + e, c) ==
                                      doctest::Approx(d.at(t, h, w, c)).epsilon(1e-13));
                }
}

TEST_CASE("shape preconditions name the axis") {
    const auto r = OrthoResampler::haar(AxisSet::all());
    try {
        (void)down(r, Tensor(Grid{2, 3, 2, 1}));
        FAIL("expected throw");
    } catch (const std::invalid_argument& e) {
        CHECK(std::string(e.what()).find("axis H") != std::string::npos);
    }
    const auto d2 = OrthoResampler::daubechies2(AxisSet::parse("W"));
    CHECK_THROWS_AS((void)down(d2, Tensor(Grid{1, 1, 2, 1})), std::invalid_argument);
    CHECK(r.max_levels(Grid{4, 8, 8, 1}) == 2);
}

TEST_CASE("projection, adjointness and orthogonality properties") {
    const struct {
        OrthoResampler r;
        Grid g;
    } cases[] = {
        {OrthoResampler::haar(AxisSet::all()), Grid{4, 4, 4, 1}},
        {OrthoResampler::haar(AxisSet::parse("HW")), Grid{2, 4, 8, 3}},
        {OrthoResampler::daubechies2(AxisSet::parse("W")), Grid{1, 1, 8, 1}},
        {OrthoResampler::daubechies2(AxisSet::all()), Grid{4, 4, 8, 1}},
    };
    std::uint64_t seed = 100;
    for (const auto& c : cases) {
        CAPTURE(c.g.str());
        const Tensor x = random_tensor(c.g, seed++);
        const Tensor y = random_tensor(c.r.coarse(c.g), seed++);
        const Tensor p1 = project(c.r, x);
        const Tensor p2 = project(c.r, p1);
        CHECK(max_abs_diff(p1, p2) < 1e-12);
        const double lhs = dot(down(c.r, x), y);
        const double rhs = dot(x, up(c.r, y)) / (c.r.omega() * c.r.omega());
        CHECK(std::abs(lhs - rhs) < 1e-12);
        const Matrix M = analysis_matrix(c.r, c.g);
        const auto n = M.rows();
        CHECK((M.transpose() * M - Matrix::Identity(n, n)).cwiseAbs().maxCoeff() < 1e-10);
        // analyze/synthesize round trip.
        CHECK(max_abs_diff(synthesize(c.r, analyze(c.r, x)), x) < 1e-12);
        // Matrix route agrees with filter route.
        const Matrix D = down_matrix(c.r, c.g);
        CHECK((D * x.values() - down(c.r, x).values()).cwiseAbs().maxCoeff() < 1e-12);
        // Low-band block of the analysis matrix is omega * down.
        const auto low = low_band_indices(c.r, c.g);
        for (std::size_t k = 0; k < low.size(); ++k)
            CHECK((M.row(static_cast<Eigen::Index>(low[k])) - c.r.omega() * D.row(static_cast<Eigen::Index>(k)))
                      .cwiseAbs()
                      .maxCoeff() < 1e-12);
        // White-noise contraction: (1/omega)^2 I exactly.
        const auto m = D.rows();
        CHECK((D * D.transpose() - Matrix::Identity(m, m) / (c.r.omega() * c.r.omega())).cwiseAbs().maxCoeff() <
              1e-12);
    }
}

TEST_CASE("down on white noise: variance 1/8, uncorrelated (Monte Carlo smoke test)") {
    const auto r = OrthoResampler::haar(AxisSet::all());
    RngStream rng(31);
    const Batch e = gaussian_batch(Grid{2, 2, 4, 1}, 40000, rng);
    const Moments m = empirical_moments(down(r, e));
    CHECK((m.cov - Matrix::Identity(2, 2) / 8.0).cwiseAbs().maxCoeff() < 0.005);
}

TEST_CASE("1-D length-2 Haar analysis matrix is the textbook one") {
    const auto r = OrthoResampler::haar(AxisSet::parse("W"));
    const Matrix M = analysis_matrix(r, Grid{1, 1, 2, 1});
    Matrix ref(2, 2);
    ref << kS, kS, kS, -kS;
    CHECK((M - ref).cwiseAbs().maxCoeff() < 1e-15);
    CHECK_THROWS(analysis_matrix(r, Grid{1, 1, 8192, 1}));
}

TEST_CASE("matrix and filter routes agree on random 4x4 inputs") {
    const auto r = OrthoResampler::daubechies2(AxisSet::parse("HW"));
    const Grid g{1, 4, 4, 1};
    for (std::uint64_t s = 0; s < 5; ++s) {
        const Tensor x = random_tensor(g, 500 + s);
        CHECK((down_matrix(r, g) * x.values() - down(r, x).values()).cwiseAbs().maxCoeff() < 1e-12);
        const Tensor y = random_tensor(r.coarse(g), 600 + s);
        CHECK((up_matrix(r, r.coarse(g)) * y.values() - up(r, y).values()).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("up_with_noise scale and level") {
    const auto haar1 = OrthoResampler::haar(AxisSet::parse("W"));
    const auto haar2 = OrthoResampler::haar(AxisSet::parse("HW"));
    const Tensor x = random_tensor(Grid{1, 2, 2, 1}, 9);
    RngStream rng(1);
    SUBCASE("sigma = 0 is deterministic up()") {
        const auto res = up_with_noise(haar2, x, 0.0, rng);
        CHECK(res.tau == 0.0);
        CHECK(max_abs_diff(res.value, up(haar2, x)) < 1e-15);
    }
    SUBCASE("sigma = 1 gives tau = 1") {
        CHECK(up_with_noise(haar1, Tensor(Grid{1, 1, 2, 1}), 1.0, rng).tau == doctest::Approx(1.0).epsilon(1e-15));
    }
    SUBCASE("omega = 2, sigma = 0.5: factor 4/3, tau 2/3") {
        CHECK(noisy_upsample_gain(2.0, 0.5) == doctest::Approx(4.0 / 3.0).epsilon(1e-15));
        const auto res = up_with_noise(haar2, x, 0.5, rng);
        CHECK(res.tau == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
        // The low band of the result is (r omega) * (1/omega-scaled coarse signal): down() recovers r * x.
        const double rr = 1.0 / (1.0 + (2.0 - 1.0) * 0.5);
        CHECK(max_abs_diff(down(haar2, res.value), rr * x) < 1e-12);
    }
    SUBCASE("domain") {
        CHECK_THROWS(up_with_noise(haar2, x, -0.1, rng));
        CHECK_THROWS(up_with_noise(haar2, x, 1.5, rng));
    }
    SUBCASE("deterministic under a fixed stream") {
        RngStream a(4, 2), b(4, 2);
        CHECK(max_abs_diff(up_with_noise(haar2, x, 0.3, a).value, up_with_noise(haar2, x, 0.3, b).value) == 0.0);
    }
}
