#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "pslab/errors.hpp"
#include "pslab/moebius.hpp"

#include <cmath>
#include <numbers>
#include <random>

using namespace pslab;

namespace {

Vec v2(double a, double b)
{
    Vec v(2);
    v << a, b;
    return v;
}

Vec v3(double a, double b, double c)
{
    Vec v(3);
    v << a, b, c;
    return v;
}

BallPoint random_ball(std::mt19937_64& rng, int dim, double rmax = 0.95)
{
    std::normal_distribution<double> n;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Vec v(dim);
    for (int i = 0; i < dim; ++i) v[i] = n(rng);
    v *= rmax * std::pow(u(rng), 1.0 / dim) / v.norm();
    return BallPoint(v);
}

BoundaryPoint random_boundary(std::mt19937_64& rng, int dim)
{
    std::normal_distribution<double> n;
    Vec v(dim);
    for (int i = 0; i < dim; ++i) v[i] = n(rng);
    return BoundaryPoint(v);
}

std::vector<MoebiusMap> reference_letters()
{
    MoebiusMap a = hyperbolic_translation(v2(1, 0), 0.9);
    MoebiusMap b = hyperbolic_translation(v2(0, 1), 0.9);
    return {a, b, inverse(a), inverse(b)};
}

// Random reduced word of the given length in the reference letters (0,1 and inverses 2,3).
MoebiusMap random_word(std::mt19937_64& rng, int length)
{
    auto letters = reference_letters();
    std::uniform_int_distribution<int> pick(0, 3);
    MoebiusMap g = MoebiusMap::identity(2);
    int prev = -1;
    for (int k = 0; k < length; ++k) {
        int l;
        do l = pick(rng);
        while (prev >= 0 && (l + 2) % 4 == prev);
        g = compose(g, letters[l]);
        prev = l;
    }
    return g;
}

double max_entry_diff(const LorentzMat& a, const LorentzMat& b)
{
    return (a - b).cwiseAbs().maxCoeff();
}

}  // namespace

TEST_CASE("translation by zero is the identity")
{
    MoebiusMap g = hyperbolic_translation(BallPoint::origin(2));
    CHECK(max_entry_diff(g.lorentz(), LorentzMat::Identity(3, 3)) == 0.0);
}

TEST_CASE("translation sends the origin to b")
{
    MoebiusMap g = hyperbolic_translation(BallPoint(v2(0.6, 0)));
    CHECK(g.image_of_origin()[0] == doctest::Approx(0.6).epsilon(1e-14));
    CHECK(std::abs(g.image_of_origin()[1]) < 1e-15);
}

TEST_CASE("tau_{-b} composed with tau_b is the identity")
{
    MoebiusMap g = hyperbolic_translation(BallPoint(v2(0.3, 0.4)));
    MoebiusMap h = hyperbolic_translation(BallPoint(v2(-0.3, -0.4)));
    CHECK(max_entry_diff(compose(h, g).lorentz(), LorentzMat::Identity(3, 3)) <= 1e-9);
}

TEST_CASE("translation outside the ball is rejected")
{
    CHECK_THROWS_AS(BallPoint(v2(1.0, 0.0)), DomainError);
    CHECK_THROWS_AS(hyperbolic_translation(v2(1, 0), 1.0), DomainError);
}

TEST_CASE("Lorentz action agrees with the closed-form translation")
{
    std::mt19937_64 rng(1);
    for (int dim : {2, 3}) {
        for (int k = 0; k < 200; ++k) {
            BallPoint b = random_ball(rng, dim, 0.99);
            BallPoint x = random_ball(rng, dim, 0.99);
            Vec want = translation_formula(b.coords(), x.coords());
            Vec got = hyperbolic_translation(b).apply(x).coords();
            CHECK((want - got).norm() < 1e-9);
        }
    }
}

TEST_CASE("apply: identity, fixed boundary points and roundtrip")
{
    BallPoint x(v2(0.2, 0.1));
    Vec y = MoebiusMap::identity(2).apply(x).coords();
    CHECK((y - x.coords()).norm() < 1e-15);

    MoebiusMap t = hyperbolic_translation(BallPoint(v2(0.6, 0)));
    BoundaryPoint m = t.apply(BoundaryPoint(v2(-1, 0)));
    CHECK(m[0] == doctest::Approx(-1.0));
    CHECK(std::abs(m[1]) < 1e-15);

    std::mt19937_64 rng(2);
    // The boundary action of g contracts by up to e^{-2 kappa}, so the inverse amplifies
    // the rounding of g(x) by e^{2 kappa}; that is the attainable roundtrip accuracy.
    for (int length : {2, 5}) {
        for (int k = 0; k < 100; ++k) {
            MoebiusMap g = random_word(rng, length);
            MoebiusMap gi = inverse(g);
            const double tol = std::max(1e-9, 1e-15 * std::exp(2 * g.displacement()));
            BallPoint p = random_ball(rng, 2, 0.9);
            CHECK((gi.apply(g.apply(p)).coords() - p.coords()).norm() < tol);
            BoundaryPoint xi = random_boundary(rng, 2);
            BoundaryPoint back = gi.apply(g.apply(xi));
            CHECK(chord(back, xi) < tol);
            CHECK(std::abs(g.apply(xi).coords().norm() - 1.0) <= 1e-12);
            if (length == 2) CHECK(tol == 1e-9);
        }
    }
}

TEST_CASE("compose and inverse")
{
    std::mt19937_64 rng(3);
    MoebiusMap g = random_word(rng, 4);
    CHECK(max_entry_diff(compose(MoebiusMap::identity(2), g).lorentz(), g.lorentz()) == 0.0);
    CHECK(max_entry_diff(compose(g, inverse(g)).lorentz(), LorentzMat::Identity(3, 3)) <= 1e-9);
    for (int k = 0; k < 100; ++k) {
        MoebiusMap g1 = random_word(rng, 3);
        MoebiusMap g2 = random_word(rng, 3);
        BallPoint x = random_ball(rng, 2, 0.9);
        Vec lhs = compose(g1, g2).apply(x).coords();
        Vec rhs = translation_formula(Vec::Zero(2), g1.apply(g2.apply(x)).coords());
        CHECK((lhs - rhs).norm() < 1e-9);
    }
}

TEST_CASE("hyperbolic distance")
{
    BallPoint o = BallPoint::origin(2);
    CHECK(hyperbolic_distance(o, o) == 0.0);
    CHECK(hyperbolic_distance(o, BallPoint(v2(0.5, 0))) == doctest::Approx(std::log(3.0)).epsilon(1e-14));

    std::mt19937_64 rng(4);
    for (int k = 0; k < 1000; ++k) {
        BallPoint x = random_ball(rng, 2), y = random_ball(rng, 2), z = random_ball(rng, 2);
        double dxy = hyperbolic_distance(x, y);
        CHECK(dxy == doctest::Approx(hyperbolic_distance(y, x)));
        CHECK(dxy <= hyperbolic_distance(x, z) + hyperbolic_distance(z, y) + 1e-12);
        CHECK(dxy == doctest::Approx(lorentz_distance(lift(x), lift(y))).epsilon(1e-9));
    }
}

TEST_CASE("displacement and r_gamma identity on words")
{
    std::mt19937_64 rng(5);
    BallPoint o = BallPoint::origin(2);
    for (int k = 0; k < 300; ++k) {
        MoebiusMap g = random_word(rng, 1 + k % 10);
        double r = g.origin_radius();
        CHECK(std::abs(std::exp(-g.displacement()) - (1.0 - r) / (1.0 + r)) <= 1e-9);
        CHECK(g.epsilon() == doctest::Approx(1.0 - r).epsilon(1e-6));
        if (g.displacement() < 12.0) CHECK(g.displacement() == doctest::Approx(hyperbolic_distance(o, g.image_of_origin())).epsilon(1e-8));
    }
}

TEST_CASE("stereographic roundtrip")
{
    std::mt19937_64 rng(6);
    for (int dim : {2, 3}) {
        for (int k = 0; k < 1000; ++k) {
            BallPoint x = random_ball(rng, dim, 0.999);
            LorentzVec X = lift(x);
            CHECK(minkowski(X, X) == doctest::Approx(-1.0).epsilon(1e-9));
            CHECK((project(X).coords() - x.coords()).norm() < 1e-10);
        }
    }
}

TEST_CASE("visual distance at the origin and at general points")
{
    BoundaryPoint e1(v2(1, 0)), m1(v2(-1, 0));
    CHECK(visual_distance_origin(e1, e1) == 0.0);
    CHECK(visual_distance_origin(e1, m1) == doctest::Approx(1.0));

    std::mt19937_64 rng(7);
    BallPoint o = BallPoint::origin(2);
    for (int k = 0; k < 100; ++k) {
        BoundaryPoint xi = random_boundary(rng, 2), eta = random_boundary(rng, 2);
        double angle = std::acos(std::clamp(xi.coords().dot(eta.coords()), -1.0, 1.0));
        CHECK(visual_distance_origin(xi, eta) == doctest::Approx(std::sin(angle / 2)).epsilon(1e-10));
        CHECK(std::abs(visual_distance(o, xi, eta).value - visual_distance_origin(xi, eta)) <= 1e-6);

        BallPoint x = random_ball(rng, 2, 0.8), y = random_ball(rng, 2, 0.8);
        double dx = visual_distance(x, xi, eta).value;
        double dy = visual_distance(y, xi, eta).value;
        CHECK(dx == doctest::Approx(visual_distance_exact(x, xi, eta)).epsilon(1e-6));
        double dxy = hyperbolic_distance(x, y);
        CHECK(dx / dy >= std::exp(-dxy) * (1 - 1e-9));
        CHECK(dx / dy <= std::exp(dxy) * (1 + 1e-9));
    }
}

TEST_CASE("boundary action distorts d_o by at most e^{2 kappa}")
{
    std::mt19937_64 rng(8);
    for (int k = 0; k < 200; ++k) {
        MoebiusMap g = random_word(rng, 1 + k % 6);
        BoundaryPoint xi = random_boundary(rng, 2), eta = random_boundary(rng, 2);
        double ratio = visual_distance_origin(g.apply(xi), g.apply(eta)) / visual_distance_origin(xi, eta);
        double kap = g.displacement();
        CHECK(ratio >= std::exp(-2 * kap) * (1 - 1e-9));
        CHECK(ratio <= std::exp(2 * kap) * (1 + 1e-9));
    }
}

TEST_CASE("contraction profile of a translation")
{
    const double beta = 0.9;
    double phi0 = 2 * beta / (1 + beta * beta);
    CHECK(phi0 == doctest::Approx(0.994475138).epsilon(1e-9));
    CHECK(phi0 >= 1 - 0.1 * 0.1);

    MoebiusMap g = hyperbolic_translation(v2(1, 0), beta);
    ContractionProfile p = contraction_profile(g, 0.5);
    CHECK(p.attractor[0] == doctest::Approx(1.0));
    CHECK(p.epsilon == doctest::Approx(0.1));
    CHECK(p.exceptional_cap_center[0] == doctest::Approx(-1.0));
    CHECK(p.max_sampled_deviation <= p.contraction_bound * (1 + 1e-12));
    CHECK(p.contraction_bound < 1.0);

    CHECK_THROWS_AS(contraction_profile(hyperbolic_translation(v2(1, 0), 0.3), 0.5), PreconditionError);
    CHECK_THROWS_AS(contraction_profile(g, 1.5), PreconditionError);
}

TEST_CASE("contraction profile on long words")
{
    std::mt19937_64 rng(9);
    double cmin = 1e300, cmax = 0;
    for (int k = 0; k < 20; ++k) {
        MoebiusMap g = random_word(rng, 6);
        ContractionProfile p = contraction_profile(g, 0.5);
        CHECK(p.samples_outside > 0);
        CHECK(p.max_sampled_deviation <= 0.5 * p.epsilon * (1 + 1e-9));
        cmin = std::min(cmin, p.cap_constant);
        cmax = std::max(cmax, p.cap_constant);
    }
    CHECK(cmax / cmin < 1.5);

    // eps ~ 1e-10: the cap radius must not cancel to zero
    for (int k = 0; k < 10; ++k) {
        MoebiusMap g = random_word(rng, 7 + k % 4);
        ContractionProfile p = contraction_profile(g, 0.5);
        CHECK(p.epsilon < 1e-6);
        CHECK(p.cap_constant == doctest::Approx(8.0).epsilon(1e-3));
        CHECK(p.max_sampled_deviation <= 0.5 * p.epsilon * (1 + 1e-9));
    }
}

TEST_CASE("contraction profile in three dimensions")
{
    MoebiusMap g = compose(hyperbolic_translation(v3(1, 1, 0), 0.95), hyperbolic_translation(v3(0, 0, 1), 0.9));
    ContractionProfile p = contraction_profile(g, 0.5);
    CHECK(p.samples_outside > 1000);
    CHECK(p.max_sampled_deviation <= p.contraction_bound * (1 + 1e-9));
}

TEST_CASE("first contraction constant is bounded below")
{
    std::mt19937_64 rng(10);
    for (int k = 0; k < 10; ++k) {
        MoebiusMap g = random_word(rng, 4);
        CHECK(first_contraction_constant(g, 1.0) > 0.1);
    }
}

TEST_CASE("operator norm")
{
    CHECK(operator_norm(MoebiusMap::identity(2)) == doctest::Approx(std::sqrt(3.0)));
    CHECK(operator_norm(MoebiusMap::identity(3)) == doctest::Approx(2.0));
    std::mt19937_64 rng(11);
    double worst = 0;
    for (int k = 0; k < 200; ++k) {
        MoebiusMap g = random_word(rng, 8);
        double ratio = operator_norm(g) / std::exp(g.displacement());
        CHECK(ratio <= 4.0);
        CHECK(ratio >= 0.25);
        worst = std::max(worst, operator_norm(g) * g.epsilon());
    }
    CHECK(worst < 4.0);
}

TEST_CASE("q-defect stays small along long products")
{
    std::mt19937_64 rng(12);
    for (int k = 0; k < 200; ++k) {
        MoebiusMap g = random_word(rng, 12);
        CHECK(g.q_defect() <= 1e-9);
    }
}

TEST_CASE("renormalization repairs a perturbed matrix")
{
    std::mt19937_64 rng(13);
    MoebiusMap g = random_word(rng, 1);
    LorentzMat L = g.lorentz();
    L(1, 2) += 1e-6;
    CHECK(q_defect(L) > 1e-9);
    MoebiusMap h(L);
    CHECK(h.q_defect() <= 1e-9);
    CHECK(max_entry_diff(h.lorentz(), g.lorentz()) < 1e-5);
}

TEST_CASE("invalid matrices are rejected")
{
    LorentzMat L = LorentzMat::Identity(3, 3);
    L(0, 0) = -1;
    L(1, 1) = -1;
    CHECK_THROWS_AS(MoebiusMap{L}, ValidationError);
    LorentzMat M = 2 * LorentzMat::Identity(3, 3);
    CHECK_THROWS_AS(MoebiusMap{M}, ValidationError);
}

TEST_CASE("geodesic helpers")
{
    BoundaryPoint e1(v2(1, 0)), m1(v2(-1, 0));
    GeodesicFrame f = geodesic_between(m1, e1);
    CHECK(project(f.point).norm() < 1e-15);
    CHECK(ball_direction(f.point, f.tangent)[0] == doctest::Approx(1.0));

    std::mt19937_64 rng(14);
    for (int k = 0; k < 100; ++k) {
        BallPoint x = random_ball(rng, 2, 0.9);
        BoundaryPoint xi = random_boundary(rng, 2);
        LorentzVec X = lift(x);
        LorentzVec V = ray_tangent(X, xi);
        CHECK(minkowski(V, V) == doctest::Approx(1.0));
        CHECK(std::abs(minkowski(V, X)) < 1e-9);
        double s = 0.7;
        CHECK(lorentz_distance(X, geodesic_point(X, V, s)) == doctest::Approx(s).epsilon(1e-9));
        // the ray converges to xi
        BallPoint far = project(geodesic_point(X, V, 30.0));
        CHECK((far.coords() - xi.coords()).norm() < 1e-9);
        // ball direction and its inverse
        Vec u = ball_direction(X, V);
        LorentzVec W = hyperboloid_tangent(X, u);
        CHECK((W - V).norm() < 1e-8 * V.norm());
    }
}
