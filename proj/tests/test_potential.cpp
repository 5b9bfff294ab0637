#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "pslab/errors.hpp"
#include "pslab/potential.hpp"

#include <cmath>
#include <numbers>
#include <random>

using namespace pslab;

namespace {

const SchottkySystem& reference()
{
    static SchottkySystem G = build_schottky(reference_spec());
    return G;
}

const Potential& bump()
{
    static Potential F = Potential::orbit_bump(reference(), -0.3, 0.5, 0.2);
    return F;
}

BallPoint ball(double a, double b)
{
    Vec v(2);
    v << a, b;
    return BallPoint(v);
}

BallPoint random_ball(std::mt19937_64& rng, double rmax)
{
    std::uniform_real_distribution<double> U(-1, 1);
    while (true) {
        Vec v(2);
        v << U(rng), U(rng);
        if (v.norm() < rmax) return BallPoint(v);
    }
}

// Plain trapezoid along cosh/sinh positions with a fine step; fine for short segments.
double naive_integral(const Potential& F, const LorentzVec& X, const LorentzVec& V, double len, double h = 5e-4)
{
    const int n = std::max(2, static_cast<int>(std::ceil(len / h)));
    const double step = len / n;
    double s = 0.0;
    for (int i = 0; i <= n; ++i) {
        const double t = i * step;
        const double w = (i == 0 || i == n) ? 0.5 : 1.0;
        s += w * F.evaluate(geodesic_point(X, V, t), geodesic_velocity(X, V, t));
    }
    return s * step;
}

// C_{F,xi}(x,y) truncated at horizon t with straightforward hyperboloid coordinates.
double naive_cocycle(const Potential& F, const BoundaryPoint& xi, const BallPoint& x, const BallPoint& y, double t)
{
    const LorentzVec X = lift(x), Y = lift(y);
    const LorentzVec V = ray_tangent(X, xi);
    const LorentzVec Z = geodesic_point(X, V, t);
    const double ly = lorentz_distance(Y, Z);
    return naive_integral(F, Y, segment_tangent(Y, Z), ly, 2e-3) - naive_integral(F, X, V, t, 2e-3);
}

}  // namespace

TEST_CASE("constant potentials integrate to length")
{
    const Potential one = Potential::constant(2, 1.0);
    const Potential zero = Potential::constant(2, 0.0);
    const BallPoint x = ball(0.1, -0.2), y = ball(-0.7, 0.5);
    CHECK(line_integral(one, x, y) == doctest::Approx(hyperbolic_distance(x, y)).epsilon(1e-12));
    CHECK(line_integral(zero, x, y) == 0.0);
    CHECK(line_integral(one, x, x) == 0.0);
}

TEST_CASE("orbit bump is invariant and matches a brute-force orbit sum")
{
    const auto& G = reference();
    const OrbitBump& B = *bump().bump();
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> U(0, 2 * std::numbers::pi);
    double worst_brute = 0.0, worst_inv = 0.0, worst_flip = 0.0;
    for (int i = 0; i < 100; ++i) {
        const BallPoint x = random_ball(rng, 0.97);
        const LorentzVec X = lift(x);
        const LorentzVec V = hyperboloid_tangent(X, Vec(Eigen::Vector2d(std::cos(U(rng)), std::sin(U(rng))).normalized()));
        const double f = B.evaluate(X, V);
        if (i < 10) worst_brute = std::max(worst_brute, std::abs(f - B.brute_force(X, V, 20.0)));
        for (const auto& l : G.letters) {
            const auto& L = l.map.lorentz();
            worst_inv = std::max(worst_inv, std::abs(f - B.evaluate(L * X, L * V)));
        }
        worst_flip = std::max(worst_flip, std::abs(bump().flip().evaluate(X, V) - bump().evaluate(X, -V)));
    }
    CHECK(worst_brute < 1e-10);
    CHECK(worst_inv < 1e-10);
    CHECK(worst_flip == 0.0);
}

TEST_CASE("bump potential has the stated value at o")
{
    // only o itself contributes at distance 0 once the nearest orbit points are 2.94 away
    const LorentzVec O = lift(BallPoint::origin(2));
    LorentzVec V = LorentzVec::Zero(3);
    V[1] = 1.0;
    double expected = -0.3 + 0.5 * (1.0 - std::exp(-16.0));
    const double k = std::log(19.0);
    // four neighbours at distance log 19, pairing <V, l o> = +-sinh(k) for the two along e1
    expected += 2 * 0.5 * (std::exp(-k * k) - std::exp(-16.0));
    expected += 0.2 * (std::sinh(k) - std::sinh(k)) * (std::exp(-k * k) - std::exp(-16.0));
    // farther orbit points, from the brute-force sum
    const OrbitBump& B = *bump().bump();
    CHECK(bump().evaluate(O, V) == doctest::Approx(-0.3 + B.brute_force(O, V, 24.0)).epsilon(1e-12));
    CHECK(bump().evaluate(O, V) == doctest::Approx(expected).epsilon(1e-3));
}

TEST_CASE("line integral of a bump potential agrees with a fine trapezoid")
{
    std::mt19937_64 rng(9);
    for (int i = 0; i < 10; ++i) {
        const BallPoint x = random_ball(rng, 0.8), y = random_ball(rng, 0.95);
        const LorentzVec X = lift(x), Y = lift(y);
        const double d = lorentz_distance(X, Y);
        const double ref = naive_integral(bump(), X, segment_tangent(X, Y), d);
        CHECK(line_integral(bump(), x, y) == doctest::Approx(ref).epsilon(1e-6));
    }
}

TEST_CASE("line integral is additive and orientation sensitive")
{
    const BallPoint x = ball(-0.5, 0.3), z = ball(0.8, 0.4);
    const LorentzVec X = lift(x), Z = lift(z);
    const double d = lorentz_distance(X, Z);
    const BallPoint m = project(geodesic_point(X, segment_tangent(X, Z), d / 2));
    const double whole = line_integral(bump(), x, z);
    const double parts = line_integral(bump(), x, m) + line_integral(bump(), m, z);
    CHECK(std::abs(whole - parts) <= 2 * 0.01 * 1.5);
    CHECK(std::abs(whole - parts) < 1e-9);
    // the drift term makes the two directions differ
    CHECK(std::abs(line_integral(bump(), x, z) - line_integral(bump(), z, x)) > 1e-3);
    // reversing the direction equals integrating the flipped potential
    CHECK(line_integral(bump(), z, x) == doctest::Approx(line_integral(bump().flip(), x, z)).epsilon(1e-10));
}

TEST_CASE("Busemann function")
{
    Vec e(2);
    e << 1, 0;
    const BoundaryPoint xi(e);
    CHECK(busemann(xi, BallPoint::origin(2)) == doctest::Approx(0.0));
    // moving toward xi by distance t lowers the Busemann function by t
    const double t = 1.7;
    CHECK(busemann(xi, ball(std::tanh(t / 2), 0)) == doctest::Approx(-t));
    const BallPoint x = ball(0.3, -0.6);
    CHECK(busemann(xi, x) == doctest::Approx(busemann(xi, lift(x))));
}

TEST_CASE("Gibbs cocycle of a constant potential is the Busemann difference")
{
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> U(0, 2 * std::numbers::pi);
    const Potential F = Potential::constant(2, -0.45);
    for (int i = 0; i < 50; ++i) {
        const BallPoint x = random_ball(rng, 0.9), y = random_ball(rng, 0.9);
        const BoundaryPoint xi = BoundaryPoint::from_angle(U(rng));
        const CocycleValue c = gibbs_cocycle(F, xi, x, y);
        const double closed = -0.45 * (busemann(xi, y) - busemann(xi, x));
        CHECK(c.value == doctest::Approx(closed).epsilon(1e-7));
        CHECK(c.convergence_defect < 1e-7);
        CHECK(gibbs_cocycle_rays(F, xi, lift(x), lift(y)).value == doctest::Approx(closed).epsilon(1e-12));
    }
}

TEST_CASE("Gibbs cocycle basics")
{
    const BoundaryPoint xi = BoundaryPoint::from_angle(0.4);
    const BallPoint x = ball(0.2, 0.1);
    const CocycleValue c = gibbs_cocycle(bump(), xi, x, x);
    CHECK(c.value == 0.0);
    CHECK_THROWS_AS(gibbs_cocycle(bump(), xi, x, BallPoint::origin(2), {{}, 1e-7, 8.0, 4.0}), PreconditionError);
}

TEST_CASE("Gibbs cocycle along a ray is minus the line integral")
{
    std::mt19937_64 rng(31);
    for (int i = 0; i < 8; ++i) {
        const BallPoint x = random_ball(rng, 0.85), y = random_ball(rng, 0.85);
        const LorentzVec X = lift(x), Y = lift(y);
        const LorentzVec l = X + segment_tangent(X, Y);
        const BoundaryPoint xi(Vec(l.tail(2) / l[0]));
        const CocycleValue c = gibbs_cocycle(bump(), xi, x, y);
        CHECK(c.value == doctest::Approx(-line_integral(bump(), x, y)).epsilon(1e-6));
        CHECK(gibbs_cocycle_rays(bump(), xi, X, Y).value == doctest::Approx(c.value).epsilon(1e-6));
    }
}

TEST_CASE("truncated Gibbs cocycle agrees with plain hyperboloid coordinates at a short horizon")
{
    // beyond t ~ 12 the plain coordinates lose their digits; at t = 8 they are reliable
    std::mt19937_64 rng(41);
    const auto& G = reference();
    const auto limit = sample_limit_set(G, 14, 2000);
    std::uniform_int_distribution<std::size_t> pick(0, limit.size() - 1);
    CocycleOptions o;
    o.max_horizon = 8.0;
    o.full_horizon = true;
    for (int i = 0; i < 6; ++i) {
        const BallPoint x = random_ball(rng, 0.6), y = random_ball(rng, 0.6);
        const BoundaryPoint xi = limit[pick(rng)];
        const double naive = naive_cocycle(bump(), xi, x, y, 8.0);
        const CocycleValue c = gibbs_cocycle(bump(), xi, x, y, o);
        CHECK(c.truncation_time == 8.0);
        CHECK(std::abs(c.value - naive) < 1e-6);
    }
}

TEST_CASE("Gibbs cocycle identity and equivariance")
{
    std::mt19937_64 rng(51);
    const auto& G = reference();
    const auto limit = sample_limit_set(G, 8, 5000);
    std::uniform_int_distribution<std::size_t> pick(0, limit.size() - 1);
    for (int i = 0; i < 10; ++i) {
        const BallPoint x = random_ball(rng, 0.9), y = random_ball(rng, 0.9), z = random_ball(rng, 0.9);
        const BoundaryPoint xi = limit[pick(rng)];
        const CocycleValue xy = gibbs_cocycle(bump(), xi, x, y);
        const CocycleValue yz = gibbs_cocycle(bump(), xi, y, z);
        const CocycleValue xz = gibbs_cocycle(bump(), xi, x, z);
        const double defect = xy.convergence_defect + yz.convergence_defect + xz.convergence_defect;
        CHECK(std::abs(xz.value - xy.value - yz.value) <= 3 * defect + 1e-8);
        for (const auto& l : G.letters) {
            const CocycleValue moved = gibbs_cocycle(bump(), l.map.apply(xi), l.map.apply(x), l.map.apply(y));
            CHECK(moved.value == doctest::Approx(xy.value).epsilon(1e-6));
        }
    }
}

TEST_CASE("gap map of a constant potential is a power of the visual distance")
{
    const double delta = 0.45;
    const Potential F = Potential::constant(2, 0.0).shifted(delta);
    std::mt19937_64 rng(61);
    std::uniform_real_distribution<double> U(0, 2 * std::numbers::pi);
    std::vector<std::pair<double, double>> pairs;
    for (int i = 0; i < 100; ++i) {
        const BoundaryPoint a = BoundaryPoint::from_angle(U(rng)), b = BoundaryPoint::from_angle(U(rng));
        const GapValue g = gap_map(F, BallPoint::origin(2), a, b);
        const double d = visual_distance_origin(a, b);
        CHECK(g.value == doctest::Approx(std::pow(d, delta)).epsilon(1e-6));
        pairs.push_back({d, g.value});
    }
    std::sort(pairs.begin(), pairs.end());
    for (std::size_t i = 1; i < pairs.size(); ++i) CHECK(pairs[i].second >= pairs[i - 1].second);
}

TEST_CASE("gap map symmetry, equivariance and errors")
{
    const Potential F = Potential::constant(2, 0.7);
    const BoundaryPoint xi = BoundaryPoint::from_angle(0.0), anti = BoundaryPoint::from_angle(std::numbers::pi);
    const GapValue g1 = gap_map(F, BallPoint::origin(2), xi, anti);
    const GapValue g2 = gap_map(F, BallPoint::origin(2), anti, xi);
    CHECK(g1.value == doctest::Approx(1.0));
    CHECK(g2.value == doctest::Approx(g1.value));
    CHECK_THROWS_AS(gap_map(F, BallPoint::origin(2), xi, xi), DomainError);

    const auto& G = reference();
    const auto limit = sample_limit_set(G, 5, 200);
    const BallPoint x = ball(0.1, 0.2);
    for (int i = 0; i < 3; ++i) {
        const BoundaryPoint eta = limit[i * 37], zeta = limit[i * 53 + 60];
        const GapValue base = gap_map(bump(), x, eta, zeta);
        const GapValue swapped = gap_map(bump(), x, zeta, eta);
        CHECK(base.value > 0.0);
        // quasi-symmetry: the ratio stays within exp(2 sup|F| * const); record it loosely
        CHECK(std::abs(std::log(base.value / swapped.value)) < 10.0);
        const auto& l = G.letters[i % 4].map;
        const GapValue moved = gap_map(bump(), l.apply(x), l.apply(eta), l.apply(zeta));
        CHECK(moved.value == doctest::Approx(base.value).epsilon(1e-6));
    }
}

TEST_CASE("cocycle tables reproduce direct cocycles and weights")
{
    const auto& G = reference();
    // the letter cocycle is rough along the limit set; 2048 nodes keep interpolation near 1e-3
    const CocycleTables T(G, bump(), 2048);
    const CocycleTables exact(G, bump(), 0);
    CHECK(T.interpolation_error(64) < 2e-3);
    const BallPoint o = BallPoint::origin(2);
    const auto limit = sample_limit_set(G, 6, 300);
    for (const std::string w : {"a", "aB", "bAb", "ABab"}) {
        const GroupElement g = make_element(G, w);
        for (int k = 0; k < 3; ++k) {
            const BoundaryPoint& xi = limit[k * 97];
            const double direct = gibbs_cocycle(bump(), xi, o, g.map.image_of_origin()).value;
            // the product formula is exact; only the tables interpolate
            CHECK(exact.log_f(w, xi) == doctest::Approx(direct).epsilon(1e-6));
            CHECK(std::abs(T.log_f(w, xi) - direct) < 2e-3 * w.size());
        }
        const double integral = line_integral(bump(), o, g.map.image_of_origin());
        CHECK(exact.log_weight(g) == doctest::Approx(integral).epsilon(1e-6));
        CHECK(std::abs(T.log_weight(g) - integral) < 2e-3 * w.size());
    }
}

TEST_CASE("constant tables use the closed form")
{
    const auto& G = reference();
    const Potential F = Potential::constant(2, -0.4);
    const CocycleTables T(G, F);
    Enumeration E = enumerate_words(G, 4);
    T.assign_weights(E);
    for (const auto& g : E.elements) CHECK(g.log_weight_F == doctest::Approx(-0.4 * g.kappa).epsilon(1e-9));
}

TEST_CASE("shadow estimate and Hoelder continuity in the boundary point")
{
    const auto& G = reference();
    const CocycleTables T(G, bump(), 512);
    // for xi in the attracting cap of the word, C(o, g o) stays within a bounded distance of -int_o^{g o} F
    double worst_short = 0.0, worst_long = 0.0, holder = 0.0;
    for (int len : {2, 6}) {
        for (const auto& w : words_of_length(G, len)) {
            const GroupElement g = make_element(G, w);
            const double integral = T.log_weight(g);
            for (double s : {0.0, 0.3, 0.6}) {
                const BoundaryPoint xi = G.apply_word(w, BoundaryPoint::from_angle(s + 0.6));
                const double gap = std::abs(T.log_f(w, xi) + integral);
                (len == 2 ? worst_short : worst_long) = std::max(len == 2 ? worst_short : worst_long, gap);
            }
            // two nearby points
            const BoundaryPoint a = BoundaryPoint::from_angle(0.37), b = BoundaryPoint::from_angle(0.37 + 1e-3 * std::exp(-g.kappa));
            const double d = visual_distance_origin(a, b);
            holder = std::max(holder, std::abs(T.log_f(w, a) - T.log_f(w, b)) / (std::exp(g.kappa) * d));
        }
    }
    CHECK(worst_long < 2.0 * worst_short + 1.0);
    CHECK(holder < 50.0);
}

TEST_CASE("potential config parsing")
{
    const auto& G = reference();
    const auto c = parse_potential_config(nlohmann::json::parse(R"({"family":"bump","base":0.1,"amplitude":0.4,"normalization":"auto"})"));
    CHECK(c.family == "bump");
    CHECK(c.amplitude == 0.4);
    const Potential F = make_potential(c, G);
    CHECK(!F.is_constant());
    const auto back = parse_potential_config(to_json(c));
    CHECK(back.value == 0.1);
    CHECK_THROWS_AS(parse_potential_config(nlohmann::json::parse(R"({"family":"wave"})")), ConfigError);
    CHECK_THROWS_AS(parse_potential_config(nlohmann::json::parse(R"({"family":"constant","normalization":"x"})")), ConfigError);
    const auto fixed = parse_potential_config(nlohmann::json::parse(R"({"family":"constant","value":1,"normalization":0.25})"));
    CHECK(make_potential(fixed, G).constant_part() == doctest::Approx(0.75));
}

TEST_CASE("sup and Lipschitz constant on hull samples")
{
    const auto& G = reference();
    const auto hull = sample_hull(sample_limit_set(G, 6, 400), 200, 7);
    const double sup = sup_on_hull(bump(), hull);
    CHECK(sup > -0.3);
    CHECK(sup < 0.5);
    CHECK(sup_on_hull(Potential::constant(2, 0.2), hull) == 0.2);
    const double lip = measured_lipschitz(bump(), hull);
    CHECK(lip > 0.0);
    CHECK(lip < 10.0);
}
