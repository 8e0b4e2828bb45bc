#include "doctest.h"

#include <cmath>
#include <numbers>
#include <random>

#include "kwp/verify.hpp"

using namespace kwp;
using std::numbers::pi;

namespace {

Params reference(int k = 10) { return Params::with_k(k, 5.0, 1.0, RotatingForcing{6.0}); }

Params unforced_still() {
    Params p;
    p.a = 0.0;
    p.mu = 1.0;
    p.epsilon = 1.0;
    return p;
}

const RegionSpec kRefRegion{40.0, 0.01};

}  // namespace

TEST_CASE("region membership") {
    CHECK(kRefRegion.contains(kUpright));
    CHECK(!kRefRegion.contains(kHanging));
    CHECK(!kRefRegion.contains(State{0.0, pi / 2, 60.0, 0.0}));
    CHECK_THROWS_AS((RegionSpec{0.0, 0.1}.validate()), std::invalid_argument);
    CHECK_THROWS_AS((RegionSpec{1.0, -0.1}.validate()), std::invalid_argument);
}

TEST_CASE("boundary sampling") {
    const double c2 = kRefRegion.c * kRefRegion.c;
    SUBCASE("tangency set satisfies its constraints") {
        const auto xs = sample_boundary(kRefRegion, BoundaryComponent::TangencySet, 1000, 3);
        REQUIRE(xs.size() == 1000);
        CHECK(xs[0].p_theta == 0.0);
        CHECK(xs[0].p_phi == 0.0);
        for (const auto& x : xs) {
            CHECK(std::abs(height(x) - kRefRegion.delta) < 1e-12);
            CHECK(std::abs(height_rate(x)) < 1e-12 * std::max(1.0, max_abs(x)));
            CHECK(energy(x) <= c2);
        }
    }
    SUBCASE("energy shell") {
        for (const auto& x : sample_boundary(kRefRegion, BoundaryComponent::EnergyShell, 1000, 4)) {
            CHECK(energy(x) == doctest::Approx(c2).epsilon(1e-13));
            CHECK(height(x) >= kRefRegion.delta);
        }
    }
    SUBCASE("height faces") {
        for (const auto& x : sample_boundary(kRefRegion, BoundaryComponent::HeightFace, 500, 5)) {
            CHECK(std::abs(height(x) - kRefRegion.delta) < 1e-12);
            CHECK(energy(x) <= c2);
        }
        for (const auto& x : sample_boundary(kRefRegion, BoundaryComponent::HeightFaceOut, 500, 5))
            CHECK(height_rate(x) > 0.0);
        for (const auto& x : sample_boundary(kRefRegion, BoundaryComponent::HeightFaceIn, 500, 5))
            CHECK(height_rate(x) < 0.0);
    }
    SUBCASE("deterministic in the seed") {
        const auto a = sample_boundary(kRefRegion, BoundaryComponent::EnergyShell, 50, 9);
        const auto b = sample_boundary(kRefRegion, BoundaryComponent::EnergyShell, 50, 9);
        const auto c = sample_boundary(kRefRegion, BoundaryComponent::EnergyShell, 50, 10);
        for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
        CHECK(!(a[1] == c[1]));
    }
    SUBCASE("coverage of signs and quadrants") {
        const auto xs = sample_boundary(RegionSpec{40.0, 0.01}, BoundaryComponent::HeightFace, 10000, 6);
        int neg = 0, pos = 0, left = 0, right = 0, up = 0, down = 0;
        for (const auto& x : xs) {
            (x.theta < 0 ? neg : pos)++;
            (std::cos(x.phi) < 0 ? left : right)++;
            (x.p_theta < 0 ? down : up)++;
        }
        for (int count : {neg, pos, left, right, up, down}) CHECK(count > 4000);
    }
    SUBCASE("empty and invalid") {
        CHECK_THROWS_AS(sample_boundary(RegionSpec{1.0, 1.0}, BoundaryComponent::HeightFace, 10, 1), EmptySet);
        CHECK_THROWS_AS(sample_boundary(RegionSpec{1.0, 1.5}, BoundaryComponent::TangencySet, 10, 1), EmptySet);
        CHECK_THROWS_AS(sample_boundary(kRefRegion, BoundaryComponent::HeightFace, 0, 1), std::invalid_argument);
    }
}

TEST_CASE("lemma checks") {
    const Params p = reference();
    const double B = 38.0;
    const double c = kRefRegion.c;

    SUBCASE("all four lemmas at the reference parameters") {
        for (int id = 1; id <= 4; ++id) {
            const auto r = check_lemma(id, kRefRegion, p, 10000, 1);
            CHECK(r.pass);
            CHECK(r.lemma_id == id);
            CHECK(r.n_samples == 10000);
            CHECK(r.evaluations == 10000u * 32u);
            CHECK(r.pass == (r.worst_margin < 0.0));
            if (id == 2 || id == 4) {
                CHECK(r.worst_margin <= -100.0);
                CHECK(r.worst_margin <= -2 * c * c + 2 * c * B);
            }
        }
    }
    SUBCASE("reproducible bit for bit") {
        const auto a = check_lemma(1, kRefRegion, p, 500, 77);
        const auto b = check_lemma(1, kRefRegion, p, 500, 77);
        CHECK(a.worst_margin == b.worst_margin);
        CHECK(a.worst_point == b.worst_point);
        CHECK(a.worst_time == b.worst_time);
    }
    SUBCASE("per-sample shell bound") {
        for (const auto& x : sample_boundary(kRefRegion, BoundaryComponent::EnergyShell, 2000, 8))
            for (double t : {0.0, 0.1, 0.33, 2.0}) {
                CHECK(energy_rate(x, t, p, Branch::Modified) <= -2 * c * c + 2 * c * B);
                CHECK(energy_rate(x, t, p, Branch::Averaged) <= -2 * c * c + 2 * c * B);
            }
    }
    SUBCASE("unforced still pivot, zero momentum tangency sample") {
        const RegionSpec region{1.5, 0.1};
        const State x0 = sample_boundary(region, BoundaryComponent::TangencySet, 10, 2)[0];
        CHECK(std::abs(height_accel(x0, 0.0, unforced_still(), Branch::Averaged) - (-0.99)) < 1e-12);
        const auto r = check_lemma(3, region, unforced_still(), 1000, 2);
        CHECK(r.worst_margin >= -0.99 - 1e-12);
        for (double delta : {1e-2, 1e-3, 1e-4}) {
            const State y = sample_boundary(RegionSpec{1.0, delta}, BoundaryComponent::TangencySet, 1, 5)[0];
            CHECK(std::abs(height_accel(y, 0.0, unforced_still(), Branch::Averaged) + 1.0) <= delta * delta + 1e-15);
        }
    }
    SUBCASE("large delta fails the averaged tangency lemma") {
        const auto r = check_lemma(3, RegionSpec{40.0, 0.9}, p, 10000, 1);
        CHECK(!r.pass);
        CHECK(r.worst_margin > 0.0);
        CHECK(height_accel(r.worst_point, r.worst_time, p, Branch::Averaged) == r.worst_margin);
    }
    SUBCASE("invalid arguments") {
        CHECK_THROWS_AS(check_lemma(5, kRefRegion, p, 10, 1), std::invalid_argument);
        CHECK_THROWS_AS(check_lemma(1, kRefRegion, p, 10, 1, 0), std::invalid_argument);
        CHECK_THROWS_AS(check_lemma(3, RegionSpec{40.0, 1.0}, p, 10, 1), EmptySet);
    }
}

TEST_CASE("bound estimates") {
    const auto fig = estimate_bounds(reference(), 2000);
    CHECK(fig.B == doctest::Approx(38.0).epsilon(1e-14));
    CHECK(fig.c_min == doctest::Approx(38.0).epsilon(1e-14));
    const auto still = estimate_bounds(unforced_still(), 2000);
    CHECK(still.c_min == 1.0);
    CHECK(still.delta_max > 10 * fig.delta_max);
    CHECK(fig.delta_max > 0.0);
    CHECK(check_lemma(3, RegionSpec{1.2 * fig.c_min, fig.delta_max}, reference(), 2000, 1).pass);
    Params frictionless = reference();
    frictionless.mu = 0.0;
    CHECK_THROWS_AS(estimate_bounds(frictionless), DegenerateFriction);
}

TEST_CASE("egress classification") {
    const Params p = reference();
    SUBCASE("reference cases") {
        const State shell = sample_boundary(kRefRegion, BoundaryComponent::EnergyShell, 1, 1)[0];
        CHECK(egress_classify(shell, kRefRegion, p, Branch::Modified, 0.0) == BoundaryClass::InteriorBoundary);

        // g = delta with height_rate = -0.5: p_theta = 0, p_phi = -0.5 cos(theta) / cos(phi)
        const double theta = 0.2, phi = std::asin(kRefRegion.delta / std::cos(theta));
        const State out{theta, phi, 0.0, -0.5 * std::cos(theta) / std::cos(phi)};
        REQUIRE(height_rate(out) == doctest::Approx(-0.5));
        CHECK(egress_classify(out, kRefRegion, p, Branch::Modified, 0.0) == BoundaryClass::Egress);
        const State in{theta, phi, 0.0, -out.p_phi};
        CHECK(egress_classify(in, kRefRegion, p, Branch::Modified, 0.0) == BoundaryClass::Ingress);

        CHECK_THROWS_AS(egress_classify(kUpright, kRefRegion, p, Branch::Modified, 0.0), NotOnBoundary);
    }
    SUBCASE("tangency samples at certified parameters exit tangentially") {
        const auto xs = sample_boundary(kRefRegion, BoundaryComponent::TangencySet, 1000, 12);
        for (std::size_t i = 0; i < xs.size(); ++i) {
            const double t0 = 0.05 * static_cast<double>(i % 32);
            CHECK(egress_classify(xs[i], kRefRegion, p, Branch::Modified, t0) == BoundaryClass::TangentExit);
            CHECK(egress_classify(xs[i], kRefRegion, p, Branch::Averaged, t0) == BoundaryClass::TangentExit);
        }
    }
    SUBCASE("agrees with short integrations of the averaged system") {
        const RegionSpec region{40.0, 0.05};
        const double tau = 0.01;
        std::mt19937_64 rng(99);
        int checked = 0;
        for (const auto comp : {BoundaryComponent::HeightFace, BoundaryComponent::EnergyShell}) {
            for (const auto& x : sample_boundary(region, comp, 100, 21)) {
                const double s0 = std::uniform_real_distribution<double>(0.0, p.T)(rng);
                const auto cls = egress_classify(x, region, p, Branch::Averaged, s0);
                const State fwd = flow(AveragedSystem{}, s0, x, tau, p, StepControl{});
                if (cls == BoundaryClass::Egress || cls == BoundaryClass::Ingress) {
                    // first order must dominate over the probe
                    const double rate = height_rate(x), acc = height_accel(x, s0, p, Branch::Averaged);
                    if (std::abs(rate) <= tau * std::abs(acc)) continue;
                    CHECK((height(fwd) < region.delta) == (cls == BoundaryClass::Egress));
                    ++checked;
                } else if (cls == BoundaryClass::InteriorBoundary) {
                    CHECK(energy(fwd) < region.c * region.c);
                    ++checked;
                }
            }
        }
        CHECK(checked >= 100);
        // tangent exits leave in both time directions
        for (const auto& x : sample_boundary(region, BoundaryComponent::TangencySet, 100, 22)) {
            const double s0 = std::uniform_real_distribution<double>(0.0, p.T)(rng);
            REQUIRE(egress_classify(x, region, p, Branch::Averaged, s0) == BoundaryClass::TangentExit);
            const double h = 1e-3;
            CHECK(height(flow(AveragedSystem{}, s0, x, h, p, StepControl{})) < region.delta);
            CHECK(height(flow(AveragedSystem{}, s0, x, -h, p, StepControl{})) < region.delta);
        }
    }
}

TEST_CASE("first-order averaging") {
    SUBCASE("error halves with epsilon near the averaged orbit") {
        const Params p = reference();
        const State seed = attractor_seed(AveragedSystem{}, p, 100 * p.T, State{0.05, 1.45, 0.0, 0.0});
        const State x0 = find_orbit_newton(AveragedSystem{}, p, seed).x0;
        const auto r = avg_compare(p, x0, 2 * p.T, {1.0 / 10, 1.0 / 20, 1.0 / 40, 1.0 / 80});
        REQUIRE(r.sup_errors.size() == 4);
        CHECK(r.horizon == 2 * p.T);
        CHECK(r.observed_order >= 0.8);
        CHECK(r.observed_order <= 1.3);
        const double ratio = r.sup_errors[1] / r.sup_errors[2];
        CHECK(ratio >= 1.5);
        CHECK(ratio <= 2.6);
    }
    SUBCASE("asymptotic order from a generic start") {
        // eps = 1/10 is pre-asymptotic away from the orbit
        const Params p = reference();
        const auto r = avg_compare(p, State{0.05, 1.45, 0.0, 0.0}, 2 * p.T, {1.0 / 20, 1.0 / 40, 1.0 / 80, 1.0 / 160});
        CHECK(r.observed_order >= 0.8);
        CHECK(r.observed_order <= 1.3);
    }
    SUBCASE("other bounded forcing") {
        const Params p = Params::with_k(10, 5.0, 1.0, OscillatingAngleForcing{1.5, pi / 2});
        const auto r = avg_compare(p, State{0.1, 1.3, 0.0, 0.0}, 2 * p.T, {1.0 / 20, 1.0 / 40, 1.0 / 80});
        CHECK(r.observed_order >= 0.8);
    }
    SUBCASE("no vibration: identical fields") {
        Params p = reference();
        p.a = 0.0;
        const auto r = avg_compare(p, State{0.05, 1.45, 0.0, 0.0}, 2 * p.T, {1.0 / 10, 1.0 / 20});
        for (double e : r.sup_errors) CHECK(e < 10 * 1e-12);
    }
}

TEST_CASE("non-falling certificate") {
    SUBCASE("reference parameters") {
        const auto cert = theorem1_certificate(reference(), kRefRegion, 1e-3, {10});
        CHECK(cert.pass);
        CHECK(cert.orbit.min_height > kRefRegion.delta);
        CHECK(cert.profile.max_energy < 1600.0);
        REQUIRE(cert.lemmas.size() == 4);
        for (const auto& l : cert.lemmas) CHECK(l.pass);
        REQUIRE(cert.clauses.size() == 5);
        CHECK(cert.clauses[0].name == "residual");
    }
    SUBCASE("from the averaged orbit") {
        const auto cert = theorem1_certificate(reference(), kRefRegion, 1e-3, {0, 50, 20, 10});
        CHECK(cert.pass);
        CHECK(*cert.params.k() == 10);
    }
    SUBCASE("delta above the orbit's lowest point") {
        try {
            theorem1_certificate(reference(), RegionSpec{40.0, 0.7}, 1e-3, {10});
            FAIL("expected CertificateFailed");
        } catch (const CertificateFailed& e) {
            CHECK(e.clause() == "min_height");
            CHECK(!e.certificate().pass);
            CHECK(e.certificate().profile.min_height < 0.7);
        }
    }
    SUBCASE("unforced vibration stabilizes upright") {
        // At k = 10 upright is a Mathieu-unstable orbit; at k = 20 it is stable.
        Params p = reference(20);
        p.forcing = ZeroForcing{};
        CertificateOptions opts;
        opts.seed = kUpright;
        const auto cert = theorem1_certificate(p, kRefRegion, 1e-3, {0, 50, 20}, opts);
        CHECK(cert.pass);
        CHECK(cert.orbit.min_height == doctest::Approx(1.0));
        CHECK(cert.orbit.stable);
    }
    SUBCASE("contract") {
        CHECK_THROWS_AS(theorem1_certificate(reference(), kRefRegion, 1e-3, {}), std::invalid_argument);
        CHECK_THROWS_AS(theorem1_certificate(reference(), kRefRegion, 0.01, {10}), std::invalid_argument);
    }
}
