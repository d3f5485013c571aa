#include "doctest.h"

#include "pyramid/forward.hpp"
#include "pyramid/moments.hpp"

#include <cmath>

using namespace pyramid;

namespace {

Tensor pair_13() {
    Tensor x(Grid{1, 1, 2, 1});
    x[0] = 1.0;
    x[1] = 3.0;
    return x;
}

// Two-stage 1-D schedule whose stage 0 has global bounds (0.2, 0.8).
StageSchedule hand_schedule() { return StageSchedule(std::sqrt(2.0), {{0.2, 0.8}, {0.8, 1.0}}); }

}  // namespace

TEST_CASE("stage clean signals") {
    const auto r = OrthoResampler::haar(AxisSet::all());
    const StageSchedule s = default_schedule();
    SUBCASE("constant video stays constant") {
        const StageSignals sig = stage_clean_signals(Tensor(Grid{4, 8, 8, 1}, -1.25), s, r);
        REQUIRE(sig.levels.size() == 3);
        CHECK(sig.levels[2].grid() == Grid{1, 2, 2, 1});
        for (const auto& t : sig.levels)
            for (std::size_t i = 0; i < t.size(); ++i) CHECK(t[i] == doctest::Approx(-1.25).epsilon(1e-14));
    }
    SUBCASE("S = 1 is the identity") {
        const Tensor x(Grid{1, 2, 2, 1}, 4.0);
        const StageSignals sig = stage_clean_signals(x, conventional_schedule(), r);
        REQUIRE(sig.levels.size() == 1);
        CHECK(max_abs_diff(sig.levels[0], x) == 0.0);
    }
    SUBCASE("2x2x2 values 1..8 average to 4.5") {
        Tensor x(Grid{2, 2, 2, 1});
        for (std::size_t i = 0; i < 8; ++i) x[i] = static_cast<double>(i + 1);
        const StageSignals sig = stage_clean_signals(x, StageSchedule(s.omega(), {{0.0, 0.5}, {0.5, 1.0}}), r);
        CHECK(sig.levels[1][0] == doctest::Approx(4.5).epsilon(1e-14));
    }
    SUBCASE("divisibility violation") {
        CHECK_THROWS_AS(stage_clean_signals(Tensor(Grid{2, 8, 8, 1}), s, r), std::invalid_argument);
    }
}

TEST_CASE("boundary pair, interpolation and target: hand example") {
    const auto r = OrthoResampler::haar(AxisSet::parse("W"));
    const StageSchedule s = hand_schedule();
    const Tensor x0 = pair_13();
    const StageSignals sig = stage_clean_signals(x0, s, r);
    CHECK(sig.levels[1][0] == doctest::Approx(2.0).epsilon(1e-15));
    const BoundaryPair p = boundary_pair(sig, 0, Tensor(x0.grid()), s, r);
    CHECK(p.sigma_c == doctest::Approx(0.2));
    CHECK(p.sigma_n == doctest::Approx(0.8));
    CHECK(p.y_c[0] == doctest::Approx(0.8).epsilon(1e-14));
    CHECK(p.y_c[1] == doctest::Approx(2.4).epsilon(1e-14));
    CHECK(p.y_n[0] == doctest::Approx(0.4).epsilon(1e-14));
    CHECK(p.y_n[1] == doctest::Approx(0.4).epsilon(1e-14));
    const Tensor mid = interpolate(p, 0.5);
    CHECK(mid[0] == doctest::Approx(0.6).epsilon(1e-14));
    CHECK(mid[1] == doctest::Approx(1.4).epsilon(1e-14));
    CHECK(max_abs_diff(interpolate(p, 1.0), p.y_n) == 0.0);
    const Tensor v = velocity_target(p);
    CHECK(v[0] == doctest::Approx(-2.0 / 3.0).epsilon(1e-13));
    CHECK(v[1] == doctest::Approx(-10.0 / 3.0).epsilon(1e-13));
    CHECK_THROWS(interpolate(p, 0.0));
    CHECK_THROWS(interpolate(p, 1.5));
    CHECK_THROWS(boundary_pair(sig, 0, Tensor(Grid{1, 1, 1, 1}), s, r));
}

TEST_CASE("boundary degenerate cases") {
    const auto r = OrthoResampler::haar(AxisSet::parse("W"));
    RngStream rng(4);
    const Tensor x0 = pair_13();
    const Tensor eps = gaussian_tensor(x0.grid(), rng);
    const StageSchedule conv = conventional_schedule();
    const BoundaryPair p = boundary_pair(stage_clean_signals(x0, conv, r), 0, eps, conv, r);
    CHECK(max_abs_diff(p.y_c, x0) == 0.0);
    CHECK(max_abs_diff(p.y_n, eps) == 0.0);
    CHECK(max_abs_diff(velocity_target(p), eps - x0) < 1e-15);
}

TEST_CASE("noise budget: the eps-coefficient of the interpolant is sigma") {
    const auto r = OrthoResampler::haar(AxisSet::all());
    const StageSchedule s = default_schedule();
    const Grid g{4, 4, 4, 1};
    const Tensor zero(g);
    const Tensor ones(Grid{4, 4, 4, 1}, 1.0);
    const StageSignals sig = stage_clean_signals(zero, s, r);
    for (int i = 0; i < 3; ++i) {
        const Tensor e(sig.levels[static_cast<std::size_t>(i)].grid(), 1.0);
        const BoundaryPair p = boundary_pair(sig, i, e, s, r);
        for (double rho : {0.1, 0.5, 0.93, 1.0}) {
            const Tensor x = interpolate(p, rho);
            const double sigma = s.global_from_local(rho, i);
            for (std::size_t k = 0; k < x.size(); ++k) CHECK(x[k] == doctest::Approx(sigma).epsilon(1e-14));
        }
    }
    (void)ones;
    // Hand case: sigma_c = 0.2, sigma_n = 0.8, rho = 0.5 gives 0.5.
    const auto r1 = OrthoResampler::haar(AxisSet::parse("W"));
    const StageSchedule hs = hand_schedule();
    const Tensor z(Grid{1, 1, 2, 1});
    const BoundaryPair hp = boundary_pair(stage_clean_signals(z, hs, r1), 0, Tensor(z.grid(), 1.0), hs, r1);
    CHECK(interpolate(hp, 0.5)[0] == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("coarsest stage at sigma = 1 is pure noise") {
    const auto r = OrthoResampler::haar(AxisSet::all());
    const StageSchedule s = default_schedule();
    RngStream rng(8);
    const Tensor x0 = gaussian_tensor(Grid{4, 4, 4, 1}, rng);
    const StageSignals sig = stage_clean_signals(x0, s, r);
    const Tensor eps = gaussian_tensor(sig.levels[2].grid(), rng);
    const BoundaryPair p = boundary_pair(sig, 2, eps, s, r);
    CHECK(max_abs_diff(interpolate(p, 1.0), eps) == 0.0);
}

TEST_CASE("y_n uses the projection of the stage's own clean signal") {
    const auto r = OrthoResampler::daubechies2(AxisSet::parse("HW"));
    const StageSchedule s = StageSchedule(r.omega(), {{0.0, 0.5}, {0.5, 1.0}});
    RngStream rng(21);
    const Tensor x0 = gaussian_tensor(Grid{1, 8, 8, 1}, rng);
    const Tensor eps = gaussian_tensor(x0.grid(), rng);
    const StageSignals sig = stage_clean_signals(x0, s, r);
    const BoundaryPair a = boundary_pair(sig, 0, eps, s, r);
    const BoundaryPair b = boundary_pair_from(x0, 0, eps, s, r);
    CHECK(max_abs_diff(a.y_n, b.y_n) < 1e-13);
    const double sn = s.global(0).noisier;
    CHECK(max_abs_diff(a.y_n, (1.0 - sn) * project(r, x0) + sn * eps) < 1e-13);
}

TEST_CASE("coarsest stage with sigma_n < 1 uses one further halving") {
    const auto r = OrthoResampler::haar(AxisSet::parse("W"));
    const StageSchedule s(std::sqrt(2.0), {{0.0, 0.5}, {0.5, 0.9}});
    const Tensor x0 = pair_13();
    const StageSignals sig = stage_clean_signals(Tensor(Grid{1, 1, 4, 1}, 2.0), s, r);
    const BoundaryPair p = boundary_pair(sig, 1, Tensor(sig.levels[1].grid()), s, r);
    CHECK(p.y_n[0] == doctest::Approx((1.0 - p.sigma_n) * 2.0).epsilon(1e-14));
    // A one-pixel coarsest grid cannot be halved again.
    const StageSignals tiny = stage_clean_signals(x0, s, r);
    CHECK_THROWS(boundary_pair(tiny, 1, Tensor(tiny.levels[1].grid()), s, r));
}

TEST_CASE("velocity target is rho-independent and batch versions agree") {
    const auto r = OrthoResampler::haar(AxisSet::all());
    const StageSchedule s = default_schedule();
    RngStream rng(2);
    const Batch x0 = gaussian_batch(Grid{2, 2, 2, 1}, 3, rng);
    const Batch eps = gaussian_batch(x0.grid, 3, rng);
    const BoundaryBatch bb = boundary_batch(x0, eps, 1, default_schedule(), r);
    const Batch v = velocity_target(bb);
    for (Eigen::Index j = 0; j < 3; ++j) {
        const BoundaryPair p = boundary_pair_from(x0.sample(j), 1, eps.sample(j), s, r);
        CHECK(max_abs_diff(velocity_target(p), v.sample(j)) < 1e-13);
        CHECK(max_abs_diff(interpolate(p, 0.3), interpolate(bb, 0.3).sample(j)) < 1e-13);
    }
}

TEST_CASE("training samples") {
    const auto r = OrthoResampler::haar(AxisSet::all());
    const StageSchedule s = default_schedule();
    RngStream rng0(6);
    const Tensor x0 = gaussian_tensor(Grid{4, 4, 4, 1}, rng0);
    SUBCASE("reproducible") {
        RngStream a(1, 1), b(1, 1);
        const TrainingSample ta = draw_training_sample(x0, 1, a, s, r);
        const TrainingSample tb = draw_training_sample(x0, 1, b, s, r);
        CHECK(ta.rho == tb.rho);
        CHECK(max_abs_diff(ta.input, tb.input) == 0.0);
        CHECK(max_abs_diff(ta.target, tb.target) == 0.0);
    }
    SUBCASE("eta stays inside the stage interval") {
        RngStream rng(10);
        for (int i = 0; i < 3; ++i)
            for (int k = 0; k < 3000; ++k) {
                const TrainingSample t = draw_training_sample(x0, i, rng, s, r);
                CHECK(s.owning_stage(t.eta) == i);
            }
    }
    SUBCASE("mean target at the coarsest stage is -x_0^(S-1) / (sigma_n - sigma_c)") {
        // sigma_n = 1 there, so target = (eps - (1 - sigma_c) x0) / (1 - sigma_c); E = -x0.
        RngStream rng(99);
        const StageSignals sig = stage_clean_signals(x0, s, r);
        const Tensor& xc = sig.levels[2];
        const int n = 100000;
        Vector acc = Vector::Zero(static_cast<Eigen::Index>(xc.size()));
        for (int k = 0; k < n; ++k) acc += draw_training_sample(x0, 2, rng, s, r).target.values();
        acc /= n;
        const double sc = s.global(2).cleaner;
        const double se = 1.0 / (1.0 - sc) / std::sqrt(static_cast<double>(n));
        for (Eigen::Index j = 0; j < acc.size(); ++j)
            CHECK(std::abs(acc[j] + xc[static_cast<std::size_t>(j)]) < 5.0 * se);
    }
}
